#include "taskalign/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "taskalign/extractor.hpp"
#include "taskalign/gateway.hpp"
#include "taskalign/metrics.hpp"
#include "taskalign/mock_responder.hpp"
#include "taskalign/playground.hpp"
#include "taskalign/server.hpp"
#include "taskalign/session.hpp"
#include "taskalign/simplify.hpp"
#include "taskalign/templates.hpp"

namespace taskalign {

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot read " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(ErrorCode::IoError, "cannot write " + path);
  f << text;
}

std::vector<std::string> nonblank_lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") != std::string::npos) out.push_back(line);
  }
  return out;
}

struct GatewayOptions {
  bool mock = false;
  std::string config;
  std::string templates;
};

void add_gateway_options(CLI::App* cmd, GatewayOptions& g) {
  cmd->add_flag("--mock", g.mock, "Use the deterministic offline model backend");
  cmd->add_option("--config", g.config, "Endpoint config file (default $TASKALIGN_CONFIG)");
  cmd->add_option("--templates", g.templates, "Prompt template directory");
}

std::unique_ptr<Gateway> open_gateway(const GatewayOptions& g) {
  if (g.mock) return std::make_unique<Gateway>(make_mock_gateway(make_synthetic_backend()));
  std::string path = g.config;
  if (path.empty())
    if (const char* env = std::getenv("TASKALIGN_CONFIG")) path = env;
  if (path.empty()) throw UsageError("no endpoint config: pass --config, set TASKALIGN_CONFIG, or use --mock");
  GatewayConfig cfg = load_gateway_config(path);
  check_credentials(cfg);
  std::shared_ptr<AuditLog> audit;
  if (cfg.audit_log) audit = std::make_shared<AuditLog>(*cfg.audit_log);
  return std::make_unique<Gateway>(std::make_shared<HttpChatBackend>(), cfg.endpoints, RetryPolicy{}, audit);
}

TemplateStore open_templates(const GatewayOptions& g) {
  return g.templates.empty() ? TemplateStore::from_default_location() : TemplateStore(g.templates);
}

std::string pair_side(const json& line, const char* a, const char* b) {
  const json* v = line.contains(a) ? &line[a] : line.contains(b) ? &line[b] : nullptr;
  if (!v) fail(ErrorCode::MalformedDocument, std::string("pair line needs '") + a + "' or '" + b + "'");
  if (v->is_string()) return v->get<std::string>();
  if (v->is_object()) return to_document(validate_triple(*v));
  fail(ErrorCode::MalformedDocument, std::string("'") + a + "' must be text or a triple document");
}

int cmd_serve(const GatewayOptions& g, const std::string& listen, const std::string& store, std::ostream& out,
              const CliHooks& hooks) {
  auto colon = listen.rfind(':');
  if (colon == std::string::npos) throw UsageError("--listen expects host:port");
  std::string host = listen.substr(0, colon);
  int port = 0;
  try {
    port = std::stoi(listen.substr(colon + 1));
  } catch (const std::exception&) {
    throw UsageError("bad port in --listen");
  }
  auto gateway = open_gateway(g);
  auto templates = open_templates(g);
  std::optional<std::filesystem::path> store_dir;
  if (!store.empty()) store_dir = store;
  SessionManager manager(*gateway, templates, store_dir);
  Server server(manager);
  int bound = server.bind(host, port);
  out << "taskalign listening on http://" << host << ":" << bound << "/v1" << (g.mock ? " (mock models)" : "")
      << std::endl;
  std::thread hook;
  if (hooks.on_listening) hook = std::thread([&] { hooks.on_listening(server, bound); });
  server.run();
  if (hook.joinable()) hook.join();
  return kExitOk;
}

int cmd_playground(const GatewayOptions& g, const std::string& seeds_path, int sessions, const std::string& out_dir,
                   int workers, int max_rounds, std::ostream& out, std::ostream& err) {
  if (sessions <= 0) throw UsageError("--sessions must be at least 1");
  if (workers <= 0) throw UsageError("--workers must be at least 1");
  auto seeds = nonblank_lines(read_file(seeds_path));
  if (seeds.empty()) fail(ErrorCode::MalformedDocument, "seed file has no descriptions");
  auto gateway = open_gateway(g);
  auto templates = open_templates(g);
  std::filesystem::create_directories(std::filesystem::path(out_dir) / "transcripts");

  auto outcomes = run_many(static_cast<std::size_t>(sessions), static_cast<std::size_t>(workers), [&](std::size_t i) {
    char name[32];
    std::snprintf(name, sizeof name, "session_%04zu.json", i + 1);
    auto path = std::filesystem::path(out_dir) / "transcripts" / name;
    PlaygroundOptions opts;
    opts.max_rounds = max_rounds;
    opts.checkpoint = [path](const PlaygroundSession& s) { write_transcript(path, s); };
    return run_session(seeds[i % seeds.size()], *gateway, templates, opts);
  });

  std::ofstream dataset(std::filesystem::path(out_dir) / "dataset.jsonl", std::ios::trunc);
  std::size_t lines = 0, failed = 0;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    const auto& o = outcomes[i];
    if (!o.run) {
      ++failed;
      err << "session " << i + 1 << " failed: " << o.error << "\n";
      continue;
    }
    for (const auto& l : o.run->dataset_lines) dataset << l << '\n';
    lines += o.run->dataset_lines.size();
    out << "session " << i + 1 << ": " << to_string(o.run->session.status) << " after "
        << o.run->session.transcript.size() << " rounds\n";
  }
  out << lines << " dataset lines written to " << (std::filesystem::path(out_dir) / "dataset.jsonl").string() << "\n";
  return failed == 0 ? kExitOk : kExitRuntime;
}

int cmd_distill(const GatewayOptions& g, const std::string& prompts_path, const std::string& out_path,
                bool student, std::ostream& out) {
  auto prompts = nonblank_lines(read_file(prompts_path));
  if (prompts.empty()) fail(ErrorCode::MalformedDocument, "prompt file is empty");
  auto gateway = open_gateway(g);
  auto templates = open_templates(g);
  Extractor extractor(*gateway, templates);
  std::optional<Triple> prev;
  std::ofstream dataset(out_path, std::ios::trunc);
  if (!dataset) fail(ErrorCode::IoError, "cannot write " + out_path);
  std::int64_t valid = 0, overhead = 0;
  double ms = 0;
  for (const auto& p : prompts) {
    auto rec = student ? extractor.extract_student(p, prev) : extractor.extract_teacher(p, prev);
    if (!student) dataset << emit_distillation_pair(rec) << '\n';
    valid += rec.timings.valid_tokens;
    overhead += rec.timings.overhead_tokens;
    ms += rec.timings.total_ms();
    prev = rec.triple;
  }
  json summary{{"rounds", prompts.size()},
               {"path", student ? "STUDENT" : "TEACHER"},
               {"valid_tokens", valid},
               {"overhead_tokens", overhead},
               {"elapsed_ms", ms}};
  if (ms > 0) summary["valid_tokens_per_second"] = EfficiencyRecord(valid, ms / 1000.0).rate();
  out << summary.dump() << "\n";
  return kExitOk;
}

int cmd_eval(const std::string& pairs_path, const std::string& report_path, const std::string& model,
             const std::string& setting, std::ostream& out) {
  std::vector<TextPair> pairs;
  std::size_t lineno = 0;
  for (const auto& line : nonblank_lines(read_file(pairs_path))) {
    ++lineno;
    json doc;
    try {
      doc = json::parse(line);
    } catch (const json::exception& ex) {
      fail(ErrorCode::MalformedDocument, "pairs line " + std::to_string(lineno) + ": " + ex.what());
    }
    pairs.push_back({pair_side(doc, "candidate", "student"), pair_side(doc, "reference", "teacher")});
  }
  auto scores = score_corpus(pairs);
  std::string report = render_similarity_report({{model, setting, scores, pairs.size()}});
  if (!report_path.empty()) write_file(report_path, report);
  out << report;
  return kExitOk;
}

int cmd_simplify(const std::string& triple_path, const std::vector<std::string>& focus_ids, const std::string& out_path,
                 std::ostream& out) {
  Triple t = parse_triple(read_file(triple_path));
  FocusSet focus;
  for (const auto& f : focus_ids) {
    std::stringstream ss(f);
    for (std::string id; std::getline(ss, id, ',');)
      if (!id.empty()) focus.insert(id);
  }
  std::string text = to_json(simplify(t, focus)).dump(2) + "\n";
  if (out_path.empty() || out_path == "-")
    out << text;
  else
    write_file(out_path, text);
  return kExitOk;
}

}  // namespace

int exit_code_for(ErrorCode code) {
  if (is_gateway_error(code)) return kExitRuntime;
  switch (code) {
    case ErrorCode::IoError:
    case ErrorCode::ExtractionFailed:
    case ErrorCode::InvalidTripleOutput:
    case ErrorCode::UnparseableProposal:
      return kExitRuntime;
    default:
      return kExitValidation;
  }
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const CliHooks& hooks) {
  CLI::App app{"Intent-task alignment engine"};
  app.require_subcommand(1);

  GatewayOptions gw;

  auto* serve = app.add_subcommand("serve", "Run the session server");
  std::string listen = "127.0.0.1:8080", store;
  add_gateway_options(serve, gw);
  serve->add_option("--listen", listen, "host:port");
  serve->add_option("--store", store, "Session log directory (in-memory when omitted)");

  auto* playground = app.add_subcommand("playground", "Generate multi-round prompt histories");
  std::string seeds, out_dir = "playground_out";
  int sessions = 1, workers = 4, max_rounds = 20;
  add_gateway_options(playground, gw);
  playground->add_option("--seeds", seeds, "File with one task description per line")->required();
  playground->add_option("--sessions", sessions, "Number of sessions");
  playground->add_option("--out", out_dir, "Output directory");
  playground->add_option("--workers", workers, "Concurrent sessions");
  playground->add_option("--max-rounds", max_rounds, "Round budget per session");

  auto* distill = app.add_subcommand("distill", "Extract a prompt chain and emit distillation pairs");
  std::string prompts, dataset_out = "dataset.jsonl";
  bool student = false;
  add_gateway_options(distill, gw);
  distill->add_option("--prompts", prompts, "File with one prompt per round")->required();
  distill->add_option("--out", dataset_out, "Dataset file");
  distill->add_flag("--student", student, "Use the student path (timing only, no dataset lines)");

  auto* eval = app.add_subcommand("eval", "Score student triples against teacher triples");
  std::string pairs, report, model = "student", setting = "evaluated";
  eval->add_option("--pairs", pairs, "JSONL file of {candidate, reference}")->required();
  eval->add_option("--report", report, "Report file");
  eval->add_option("--model", model, "Model name for the report column");
  eval->add_option("--setting", setting, "Setting name for the report column");
  eval->add_flag("--mock", gw.mock, "Accepted for uniformity; eval calls no model");

  auto* simp = app.add_subcommand("simplify", "Simplify a stored triple for a focus set");
  std::string triple_path, view_out;
  std::vector<std::string> focus;
  simp->add_option("--triple", triple_path, "Triple document")->required();
  simp->add_option("--focus", focus, "Focus intent ids (comma separated or repeated)");
  simp->add_option("--out", view_out, "View file (stdout when omitted)");
  simp->add_flag("--mock", gw.mock, "Accepted for uniformity; simplify calls no model");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  }

  try {
    if (serve->parsed()) return cmd_serve(gw, listen, store, out, hooks);
    if (playground->parsed())
      return cmd_playground(gw, seeds, sessions, out_dir, workers, max_rounds, out, err);
    if (distill->parsed()) return cmd_distill(gw, prompts, dataset_out, student, out);
    if (eval->parsed()) return cmd_eval(pairs, report, model, setting, out);
    if (simp->parsed()) return cmd_simplify(triple_path, focus, view_out, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace taskalign
