#pragma once

// Operator commands: serve, playground, distill, eval, simplify.
// Exit codes: 0 success, 1 usage, 2 validation, 3 gateway or runtime failure.

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "taskalign/errors.hpp"

namespace taskalign {

class Server;

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitValidation = 2, kExitRuntime = 3 };

int exit_code_for(ErrorCode code);

struct CliHooks {
  /// Called once the server is bound; may stop it from another thread.
  std::function<void(Server&, int port)> on_listening;
};

/// args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const CliHooks& hooks = {});

}  // namespace taskalign
