// deid-audit: analyze, calibrate, synth and serve subcommands.
//
// Exit codes: 0 success, 1 error, 2 analysis succeeded but raised flags.
// Diagnostics go to stderr; stdout stays empty unless --print-report.

#include <CLI11.hpp>

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>

#include "deid/audit.hpp"
#include "deid/error.hpp"
#include "deid/review_service.hpp"
#include "deid/synthgen.hpp"

namespace fs = std::filesystem;

namespace {

void write_file(const fs::path& path, const std::string& contents) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << contents;
  out.close();
  if (!out) throw deid::AuditError(deid::ErrorCode::IoError, "cannot write " + path.string());
}

struct AnalyzeArgs {
  fs::path manifest;
  fs::path config;
  fs::path out;
  unsigned workers = 1;
  bool canonical = false;
  bool print_report = false;
};

int cmd_analyze(const AnalyzeArgs& args) {
  deid::AuditOptions options;
  fs::path config = args.config;
  if (config.empty()) {
    if (const char* env = std::getenv("DEID_AUDIT_CONFIG"); env && *env) config = env;
  }
  if (!config.empty()) options.config = deid::load_threshold_config(config);
  options.workers = args.workers;

  const auto report = deid::run_audit(args.manifest, options);
  const auto text = deid::report_to_string(report, args.canonical);
  write_file(args.out, text);
  if (args.print_report) std::cout << text;

  for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
  for (const auto& w : report.aggregates.warnings) std::cerr << "warning: " << w << '\n';
  const auto flags = report.aggregates.flags.size();
  std::cerr << "analyzed " << report.sessions.size() << " session(s), " << flags << " flag(s)\n";
  return flags == 0 ? 0 : 2;
}

int cmd_calibrate(const fs::path& report_path, const fs::path& verdicts_path, const fs::path& out) {
  const auto report = deid::load_report(report_path);
  if (!fs::exists(verdicts_path)) {
    throw deid::AuditError(deid::ErrorCode::IoError, "verdict log not found: " + verdicts_path.string());
  }
  deid::Warnings warnings;
  const auto verdicts = deid::read_verdict_log(verdicts_path, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
  const auto labeled = deid::label_frames(report, verdicts);
  const auto result = deid::calibrate_thresholds(labeled, report.config);
  deid::save_threshold_config(result.config, out);
  for (const auto& m : result.metrics) {
    std::cerr << m.metric << ": J=" << m.youden_j << (m.updated ? " (updated)" : "") << '\n';
  }
  return 0;
}

int cmd_synth(const fs::path& spec_path, const fs::path& out_dir) {
  const auto doc = nlohmann::json::parse(deid::read_text_file(spec_path));
  const auto specs = deid::synth_specs_from_json(doc);
  const auto sessions = deid::generate_dataset(specs, out_dir);
  std::cerr << "wrote " << sessions.size() << " session(s) to " << out_dir.string() << '\n';
  return 0;
}

deid::ReviewServer* g_server = nullptr;

extern "C" void on_signal(int) {
  if (g_server) g_server->stop();
}

struct ServeArgs {
  fs::path report;
  fs::path images_root;
  std::string bind = "127.0.0.1:8765";
  fs::path state_dir;
  fs::path ui_dir;
  std::string cors_origin = "*";
};

int cmd_serve(const ServeArgs& args) {
  const auto [host, port] = deid::parse_bind_address(args.bind);
  deid::ReviewOptions options;
  options.report_path = args.report;
  options.images_root = args.images_root.empty() ? args.report.parent_path() : args.images_root;
  options.state_dir = args.state_dir;
  deid::ReviewState state(options);
  for (const auto& w : state.replay_warnings()) std::cerr << "warning: " << w << '\n';

  deid::ServerOptions server_options;
  server_options.cors_origin = args.cors_origin;
  if (const char* token = std::getenv("DEID_AUDIT_TOKEN"); token && *token) server_options.bearer_token = token;
  if (!args.ui_dir.empty()) server_options.ui_dir = args.ui_dir;

  deid::ReviewServer server(state, server_options);
  const int bound = server.bind(host, port);
  std::cerr << "serving on " << host << ':' << bound << '\n';
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  server.run();
  g_server = nullptr;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Audit de-identified driver video frames for cue preservation and image quality"};
  app.set_version_flag("--version", std::string(deid::kToolVersion));
  app.require_subcommand(1);

  AnalyzeArgs analyze;
  auto* analyze_cmd = app.add_subcommand("analyze", "Compute metrics, aggregates and flags for a manifest");
  analyze_cmd->add_option("--manifest", analyze.manifest, "Session manifest JSON")->required();
  analyze_cmd->add_option("--config", analyze.config, "Threshold config JSON (falls back to DEID_AUDIT_CONFIG)");
  analyze_cmd->add_option("--out", analyze.out, "Report output path")->required();
  analyze_cmd->add_option("--workers", analyze.workers, "Worker threads")->check(CLI::Range(1u, 1024u));
  analyze_cmd->add_flag("--canonical", analyze.canonical, "Omit the generation timestamp");
  analyze_cmd->add_flag("--print-report", analyze.print_report, "Also write the report to stdout");

  fs::path cal_report, cal_verdicts, cal_out;
  auto* calibrate_cmd = app.add_subcommand("calibrate", "Fit thresholds to reviewer verdicts");
  calibrate_cmd->add_option("--report", cal_report, "Audit report JSON")->required();
  calibrate_cmd->add_option("--verdicts", cal_verdicts, "verdicts.jsonl log")->required();
  calibrate_cmd->add_option("--out", cal_out, "Output threshold config")->required();

  fs::path synth_spec, synth_out;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a deterministic synthetic dataset");
  synth_cmd->add_option("--spec", synth_spec, "Synth spec JSON")->required();
  synth_cmd->add_option("--out", synth_out, "Output directory")->required();

  ServeArgs serve;
  auto* serve_cmd = app.add_subcommand("serve", "Run the review HTTP service");
  serve_cmd->add_option("--report", serve.report, "Audit report JSON")->required();
  serve_cmd->add_option("--images-root", serve.images_root, "Root that image paths resolve against");
  serve_cmd->add_option("--bind", serve.bind, "HOST:PORT")->capture_default_str();
  serve_cmd->add_option("--state-dir", serve.state_dir, "Directory for verdicts.jsonl and calibrations");
  serve_cmd->add_option("--ui-dir", serve.ui_dir, "Static review UI to mount at /");
  serve_cmd->add_option("--cors-origin", serve.cors_origin, "Allowed CORS origin")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    // Help goes to stderr so stdout stays reserved for reports.
    return app.exit(e, std::cerr, std::cerr);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, std::cerr, std::cerr);
  } catch (const CLI::ParseError& e) {
    app.exit(e, std::cerr, std::cerr);
    return 1;
  }

  try {
    if (*analyze_cmd) return cmd_analyze(analyze);
    if (*calibrate_cmd) return cmd_calibrate(cal_report, cal_verdicts, cal_out);
    if (*synth_cmd) return cmd_synth(synth_spec, synth_out);
    if (*serve_cmd) return cmd_serve(serve);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
