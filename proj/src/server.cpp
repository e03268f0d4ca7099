#include "taskalign/server.hpp"

#include <atomic>
#include <condition_variable>
#include <deque>

#include <httplib.h>

namespace taskalign {

namespace {

json error_body(ErrorCode code, const std::string& message) {
  return {{"error", {{"code", error_code_name(code)}, {"message", message}}}};
}

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    return json::parse(req.body);
  } catch (const json::exception& ex) {
    fail(ErrorCode::MalformedDocument, std::string("request body is not JSON: ") + ex.what());
  }
}

std::string body_string(const json& body, const char* key) {
  auto it = body.find(key);
  if (it == body.end() || !it->is_string())
    fail(ErrorCode::MalformedDocument, std::string("request needs a string '") + key + "'");
  return it->get<std::string>();
}

// One SSE connection's queue.
struct Subscriber {
  std::mutex mutex;
  std::condition_variable cv;
  std::deque<json> queue;
};

}  // namespace

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownSession:
      return 404;
    case ErrorCode::PreconditionFailed:
      return 409;
    case ErrorCode::MalformedDocument:
    case ErrorCode::DanglingReference:
    case ErrorCode::CycleInIntentTree:
    case ErrorCode::DuplicateId:
    case ErrorCode::UnknownIntentId:
    case ErrorCode::CycleWouldForm:
    case ErrorCode::ConflictingUpdates:
    case ErrorCode::InvalidFocus:
    case ErrorCode::NotASupernode:
    case ErrorCode::InvalidEdit:
      return 422;
    case ErrorCode::Timeout:
      return 504;
    case ErrorCode::AuthFailure:
    case ErrorCode::RateLimited:
    case ErrorCode::MalformedResponse:
    case ErrorCode::GatewayError:
    case ErrorCode::UnparseableProposal:
    case ErrorCode::InvalidTripleOutput:
    case ErrorCode::ExtractionFailed:
      return 502;
    default:
      return 500;
  }
}

struct Server::Impl {
  explicit Impl(SessionManager& m) : manager(m) {}

  SessionManager& manager;
  httplib::Server http;
  std::atomic<bool> stopping{false};
  std::mutex subs_mutex;
  std::vector<std::weak_ptr<Subscriber>> subs;

  template <class F>
  void guarded(httplib::Response& res, F&& f) {
    try {
      f();
    } catch (const Error& err) {
      reply(res, http_status(err.code()), error_body(err.code(), err.detail()));
    } catch (const std::exception& ex) {
      reply(res, 500, error_body(ErrorCode::IoError, ex.what()));
    }
  }

  void routes() {
    http.Get("/v1/health", [](const httplib::Request&, httplib::Response& res) { reply(res, 200, {{"ok", true}}); });

    http.Post("/v1/sessions", [this](const httplib::Request&, httplib::Response& res) {
      guarded(res, [&] {
        auto id = manager.create_session();
        reply(res, 201, {{"id", id}, {"state", to_json(manager.get(id))}});
      });
    });
    http.Get("/v1/sessions", [this](const httplib::Request&, httplib::Response& res) {
      guarded(res, [&] { reply(res, 200, {{"sessions", manager.list()}}); });
    });
    http.Get(R"(/v1/sessions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { reply(res, 200, to_json(manager.get(req.matches[1]))); });
    });
    http.Post(R"(/v1/sessions/([^/]+)/prompt)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        auto r = manager.submit_prompt(req.matches[1], body_string(parse_body(req), "prompt"));
        reply(res, 200,
              {{"triple", to_json(r.triple)},
               {"view", to_json(r.view)},
               {"graph_delta", to_json(r.delta)},
               {"focus", r.focus},
               {"tracker_fallback", r.tracker_fallback}});
      });
    });
    http.Post(R"(/v1/sessions/([^/]+)/edits)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        auto r = manager.apply_node_edits(req.matches[1], node_edits_from_json(parse_body(req)));
        reply(res, 200, {{"triple", to_json(r.triple)}, {"view", to_json(r.view)}, {"view_recomputed", r.view_recomputed}});
      });
    });
    http.Post(R"(/v1/sessions/([^/]+)/modify)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        auto r = manager.modify_graph_nl(req.matches[1], body_string(parse_body(req), "instruction"));
        reply(res, 200, {{"triple", to_json(r.triple)}, {"view", to_json(r.view)}, {"graph_delta", to_json(r.delta)}});
      });
    });
    http.Post(R"(/v1/sessions/([^/]+)/confirm)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        auto r = manager.confirm_graph(req.matches[1]);
        json conditioning = json::array();
        for (const auto& m : r.conditioning) conditioning.push_back(to_json(m));
        reply(res, 200, {{"code", r.code}, {"conditioning", std::move(conditioning)}});
      });
    });
    http.Post(R"(/v1/sessions/([^/]+)/focus)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        auto view = manager.focus_intent(req.matches[1], body_string(parse_body(req), "intent_id"));
        reply(res, 200, {{"view", to_json(view)}});
      });
    });
    http.Get(R"(/v1/sessions/([^/]+)/supernodes/([^/]+))",
             [this](const httplib::Request& req, httplib::Response& res) {
               guarded(res, [&] {
                 reply(res, 200, {{"member_ids", manager.expand_supernode(req.matches[1], req.matches[2])}});
               });
             });
    http.Get(R"(/v1/sessions/([^/]+)/events)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { stream_events(req.matches[1], res); });
    });
  }

  void stream_events(const std::string& id, httplib::Response& res) {
    Session current = manager.get(id);  // 404 before the stream opens
    auto sub = std::make_shared<Subscriber>();
    sub->queue.push_back(
        {{"session", id}, {"seq", current.seq}, {"type", "state"}, {"status", to_string(current.status)}});
    auto token = manager.subscribe([sub, id](const std::string& sid, const json& note) {
      if (sid != id) return;
      std::lock_guard lock(sub->mutex);
      sub->queue.push_back(note);
      sub->cv.notify_all();
    });
    {
      std::lock_guard lock(subs_mutex);
      subs.push_back(sub);
    }
    res.set_header("Cache-Control", "no-cache");
    res.set_chunked_content_provider(
        "text/event-stream",
        [this, sub](std::size_t, httplib::DataSink& sink) {
          std::unique_lock lock(sub->mutex);
          sub->cv.wait_for(lock, std::chrono::seconds(15), [&] { return !sub->queue.empty() || stopping.load(); });
          if (stopping) {
            sink.done();
            return false;
          }
          std::string out;
          if (sub->queue.empty()) out = ": keep-alive\n\n";
          while (!sub->queue.empty()) {
            const json& note = sub->queue.front();
            out += "id: " + std::to_string(note["seq"].get<std::uint64_t>()) + "\nevent: " +
                   note["type"].get<std::string>() + "\ndata: " + note.dump() + "\n\n";
            sub->queue.pop_front();
          }
          lock.unlock();
          return sink.write(out.data(), out.size());
        },
        [this, token](bool) { manager.unsubscribe(token); });
  }

  void wake_streams() {
    std::lock_guard lock(subs_mutex);
    for (auto& w : subs)
      if (auto s = w.lock()) {
        std::lock_guard l(s->mutex);
        s->cv.notify_all();
      }
  }
};

Server::Server(SessionManager& manager) : impl_(std::make_unique<Impl>(manager)) { impl_->routes(); }

Server::~Server() { stop(); }

int Server::bind(const std::string& host, int port) {
  int bound = port == 0 ? impl_->http.bind_to_any_port(host) : (impl_->http.bind_to_port(host, port) ? port : -1);
  if (bound < 0) fail(ErrorCode::IoError, "cannot bind " + host + ":" + std::to_string(port));
  return bound;
}

void Server::run() { impl_->http.listen_after_bind(); }

void Server::stop() {
  impl_->stopping = true;
  impl_->wake_streams();
  impl_->http.stop();
}

bool Server::running() const { return impl_->http.is_running(); }

}  // namespace taskalign
