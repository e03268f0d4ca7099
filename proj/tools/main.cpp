#include <csignal>
#include <iostream>
#include <string>
#include <vector>

#include "taskalign/cli.hpp"
#include "taskalign/server.hpp"

int main(int argc, char** argv) {
  // SIGINT/SIGTERM are taken synchronously by the serve hook below.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  taskalign::CliHooks hooks;
  hooks.on_listening = [signals](taskalign::Server& server, int) {
    int sig = 0;
    sigwait(&signals, &sig);
    server.stop();
  };
  std::vector<std::string> args(argv + 1, argv + argc);
  return taskalign::run_cli(args, std::cout, std::cerr, hooks);
}
