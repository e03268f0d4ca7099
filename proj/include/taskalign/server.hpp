#pragma once

// HTTP front end for SessionManager. All routes live under /v1:
//
//   POST /v1/sessions                          create
//   GET  /v1/sessions                          list ids
//   GET  /v1/sessions/{id}                     session state
//   POST /v1/sessions/{id}/prompt              {"prompt"}
//   POST /v1/sessions/{id}/edits               {"edits": [...]}
//   POST /v1/sessions/{id}/modify              {"instruction"}
//   POST /v1/sessions/{id}/confirm
//   POST /v1/sessions/{id}/focus               {"intent_id"}
//   GET  /v1/sessions/{id}/supernodes/{node}   member ids
//   GET  /v1/sessions/{id}/events              server-sent event stream
//   GET  /v1/health
//
// Errors come back as {"error": {"code", "message"}} with the status from
// http_status().

#include <memory>
#include <string>

#include "taskalign/errors.hpp"
#include "taskalign/session.hpp"

namespace taskalign {

int http_status(ErrorCode code);

class Server {
 public:
  explicit Server(SessionManager& manager);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Returns the bound port; port 0 picks a free one. Throws IoError.
  int bind(const std::string& host, int port);
  /// Blocks until stop().
  void run();
  void stop();
  bool running() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace taskalign
