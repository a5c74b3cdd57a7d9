#include <doctest.h>
#include <httplib.h>

#include <fstream>
#include <sstream>
#include <thread>

#include "deid/review_service.hpp"
#include "deid/synthgen.hpp"
#include "support/errors.hpp"
#include "support/temp_dir.hpp"

using namespace deid;
using deid::testing::error_code_of;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Two flagged frames: a series spike at 20 and a landmark gap at 5.
struct Fixture {
  testing::TempDir dir{"review"};
  fs::path report_path;

  explicit Fixture(bool with_flags = true) {
    SynthSpec spec;
    spec.session_id = "s1";
    spec.frame_count = 40;
    if (with_flags) {
      spec.spike_frames = {{20, 3.0}};
      spec.landmark_gaps = {5};
    }
    generate_session(spec, dir.path());
    report_path = dir / "report.json";
    std::ofstream(report_path) << report_to_string(run_audit(dir / "manifest.json", AuditOptions{}), true);
  }

  ReviewOptions options() const {
    ReviewOptions o;
    o.report_path = report_path;
    o.images_root = dir.path();
    return o;
  }
};

std::string verdict_body(const std::string& session, std::int64_t frame, const std::string& verdict) {
  return json{{"session_id", session}, {"frame_index", frame}, {"verdict", verdict}, {"reviewer", "r1"}}.dump();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

}  // namespace

TEST_CASE("queue lists flagged frames in order") {
  Fixture fx;
  ReviewState state(fx.options());
  const auto pending = state.queue("");
  CHECK(pending.status == 200);
  const auto& items = pending.body["items"];
  REQUIRE(items.size() == 3);  // one series flag, two missing_annotation flags on frame 5
  CHECK(items[0]["frame_index"] == 5);
  CHECK(items[2]["frame_index"] == 20);
  CHECK(items[2]["reason"] == "series_anomaly");
  CHECK(items[2]["status"] == "pending");
  CHECK(items[2]["context"]["metric"] == "ergas");
  CHECK(items[2]["context"]["points"].size() == 40);
  CHECK(state.queue("bogus").status == 400);
}

TEST_CASE("verdicts update the queue and the log") {
  Fixture fx;
  ReviewState state(fx.options());
  const auto r = state.record_verdict(verdict_body("s1", 20, "pass"));
  CHECK(r.status == 201);
  CHECK(r.body["verdict"] == "pass");
  CHECK(r.body["timestamp"].get<std::string>().back() == 'Z');

  CHECK(state.queue("pending").body["items"].size() == 2);
  const auto all = state.queue("all").body["items"];
  CHECK(all.size() == 3);
  CHECK(all[2]["status"] == "pass");

  CHECK(state.record_verdict(verdict_body("s1", 20, "maybe")).status == 400);
  CHECK(state.record_verdict("{not json").status == 400);
  CHECK(state.record_verdict(R"({"session_id":"s1","frame_index":20,"verdict":"pass"})").status == 400);
  CHECK(state.record_verdict(verdict_body("s1", 21, "fail")).status == 404);
  CHECK(state.record_verdict(verdict_body("zz", 20, "fail")).status == 404);

  // Latest wins.
  CHECK(state.record_verdict(verdict_body("s1", 20, "fail")).status == 201);
  CHECK(state.statuses().at({"s1", 20}) == VerdictValue::fail);
  Warnings w;
  CHECK(read_verdict_log(state.verdict_log_path(), &w).size() == 2);
  CHECK(w.empty());
}

TEST_CASE("replay restores statuses and tolerates a torn last line") {
  Fixture fx;
  {
    ReviewState state(fx.options());
    state.record_verdict(verdict_body("s1", 20, "fail"));
    state.record_verdict(verdict_body("s1", 5, "pass"));
    state.record_verdict(verdict_body("s1", 20, "pass"));
  }
  std::ofstream(fx.dir / "verdicts.jsonl", std::ios::app) << R"({"session_id":"s1","fra)";
  ReviewState replayed(fx.options());
  CHECK(replayed.statuses().at({"s1", 20}) == VerdictValue::pass);
  CHECK(replayed.statuses().at({"s1", 5}) == VerdictValue::pass);
  CHECK(replayed.replay_warnings().size() == 1);
}

TEST_CASE("frame detail") {
  Fixture fx;
  ReviewState state(fx.options());
  const auto d = state.frame_detail("s1", 5);
  CHECK(d.status == 200);
  CHECK(d.body["flags"].size() == 2);
  bool note = false;
  for (const auto& n : d.body["notes"]) note = note || n == "missing_annotation: original_landmarks";
  CHECK(note);
  CHECK(d.body["images"]["deid"] == "/api/images/s1/5/deid");
  CHECK(d.body["cue_errors"]["ear_err"].is_null());

  const auto plain = state.frame_detail("s1", 6);
  CHECK(plain.status == 200);
  CHECK(plain.body["flags"].empty());
  CHECK(state.frame_detail("nope", 5).status == 404);
  CHECK(state.frame_detail("s1", 400).status == 404);
}

TEST_CASE("image lookup and traversal guard") {
  Fixture fx;
  ReviewState state(fx.options());
  CHECK(state.image_path("s1", 3, "original").status == 200);
  CHECK(state.image_path("s1", 3, "x").status == 404);
  CHECK(state.image_path("s1", 99, "deid").status == 404);
  CHECK(state.image_path("../s1", 3, "deid").status == 403);
  CHECK(state.image_path("..", 3, "deid").status == 403);
  CHECK(state.image_path("a/b", 3, "deid").status == 403);
  fs::remove(fx.dir / "s1" / "deid_00003.png");
  CHECK(state.image_path("s1", 3, "deid").status == 404);
}

TEST_CASE("image paths that leave the images root are refused") {
  Fixture fx;
  auto doc = json::parse(slurp(fx.report_path));
  doc["sessions"][0]["frames"][2]["deid_image"] = "../../etc/passwd";
  std::ofstream(fx.report_path, std::ios::trunc) << doc.dump();
  ReviewState state(fx.options());
  CHECK(state.image_path("s1", 2, "deid").status == 403);
}

TEST_CASE("calibration through the service") {
  Fixture fx;
  ReviewState state(fx.options());
  CHECK(state.calibrate().status == 422);
  state.record_verdict(verdict_body("s1", 5, "pass"));
  CHECK(state.calibrate().status == 422);
  state.record_verdict(verdict_body("s1", 20, "fail"));
  const auto first = state.calibrate();
  REQUIRE(first.status == 200);
  CHECK(first.body["previous"] == to_json(default_threshold_config()));
  // The spike frame has the largest ergas, so its hi drops below it.
  CHECK(first.body["config"]["metrics"]["ergas"]["hi"].get<double>() < 16423.93);
  CHECK(fs::exists(fx.dir / "calibration" / "thresholds-0000.json"));
  CHECK(fs::exists(fx.dir / "calibration" / first.body["saved_to"].get<std::string>()));
  CHECK(load_threshold_config(fx.dir / "calibration" / "thresholds-0000.json") == default_threshold_config());

  const auto second = state.calibrate();
  CHECK(second.body["config"] == first.body["config"]);

  ReviewState restarted(fx.options());
  CHECK(to_json(restarted.current_config()) == first.body["config"]);
}

TEST_CASE("empty report gives an empty queue") {
  Fixture fx(false);
  ReviewState state(fx.options());
  CHECK(state.queue("all").body["items"].empty());
}

TEST_CASE("missing report") {
  ReviewOptions o;
  o.report_path = "/nonexistent/report.json";
  CHECK(error_code_of([&] { ReviewState s(o); }) == ErrorCode::MissingReport);
}

TEST_CASE("bind address parsing") {
  CHECK(parse_bind_address("127.0.0.1:8080") == std::pair<std::string, int>{"127.0.0.1", 8080});
  CHECK(parse_bind_address("localhost:0").second == 0);
  CHECK(error_code_of([] { parse_bind_address("localhost"); }) == ErrorCode::BindError);
  CHECK(error_code_of([] { parse_bind_address("localhost:http"); }) == ErrorCode::BindError);
  CHECK(error_code_of([] { parse_bind_address("localhost:70000"); }) == ErrorCode::BindError);
  CHECK(error_code_of([] { parse_bind_address(":80"); }) == ErrorCode::BindError);
}

TEST_CASE("http endpoints") {
  Fixture fx;
  ReviewState state(fx.options());
  ServerOptions so;
  so.cors_origin = "http://ui.local";
  ReviewServer server(state, so);
  const int port = server.bind("127.0.0.1", 0);
  std::thread runner([&] { server.run(); });
  httplib::Client client("127.0.0.1", port);

  auto res = client.Get("/api/queue");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(res->get_header_value("Access-Control-Allow-Origin") == "http://ui.local");
  CHECK(json::parse(res->body)["items"].size() == 3);

  res = client.Get("/api/queue?status=all");
  CHECK(res->status == 200);
  CHECK(client.Get("/api/queue?status=resolved")->status == 400);

  res = client.Get("/api/frames/s1/20");
  CHECK(res->status == 200);
  CHECK(json::parse(res->body)["flags"].size() == 1);
  CHECK(client.Get("/api/frames/s9/20")->status == 404);

  res = client.Get("/api/images/s1/20/original");
  CHECK(res->status == 200);
  CHECK(res->get_header_value("Content-Type") == "image/png");
  CHECK(res->body.substr(1, 3) == "PNG");
  CHECK(client.Get("/api/images/s1/20/x")->status == 404);
  CHECK(client.Get("/api/images/..%2F..%2Fetc/20/original")->status == 403);

  res = client.Post("/api/verdicts", verdict_body("s1", 20, "fail"), "application/json");
  CHECK(res->status == 201);
  CHECK(client.Post("/api/verdicts", verdict_body("s1", 20, "maybe"), "application/json")->status == 400);
  CHECK(client.Post("/api/verdicts", verdict_body("s1", 21, "pass"), "application/json")->status == 404);
  CHECK(client.Post("/api/calibrate", "", "application/json")->status == 422);
  client.Post("/api/verdicts", verdict_body("s1", 5, "pass"), "application/json");
  res = client.Post("/api/calibrate", "", "application/json");
  CHECK(res->status == 200);
  CHECK(json::parse(res->body).contains("previous"));

  res = client.Options("/api/verdicts");
  CHECK(res->status == 204);
  CHECK(res->get_header_value("Access-Control-Allow-Methods").find("POST") != std::string::npos);

  server.stop();
  runner.join();
}

TEST_CASE("bearer token and bind failures") {
  Fixture fx;
  ReviewState state(fx.options());
  ServerOptions so;
  so.bearer_token = "s3cret";
  ReviewServer server(state, so);
  const int port = server.bind("127.0.0.1", 0);
  std::thread runner([&] { server.run(); });

  httplib::Client anonymous("127.0.0.1", port);
  CHECK(anonymous.Get("/api/queue")->status == 401);
  httplib::Client authed("127.0.0.1", port);
  authed.set_bearer_token_auth("s3cret");
  CHECK(authed.Get("/api/queue")->status == 200);

  // The port is taken now.
  ReviewServer second(state, ServerOptions{});
  CHECK(error_code_of([&] { second.bind("127.0.0.1", port); }) == ErrorCode::BindError);

  server.stop();
  runner.join();
}
