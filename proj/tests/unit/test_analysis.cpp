#include <doctest.h>

#include <cmath>
#include <nlohmann/json.hpp>
#include <random>

#include "deid/analysis.hpp"
#include "support/errors.hpp"
#include "support/temp_dir.hpp"

using namespace deid;
using deid::testing::error_code_of;
using nlohmann::json;

namespace {

std::vector<SeriesPoint> series_of(const std::vector<double>& values) {
  std::vector<SeriesPoint> out;
  for (std::size_t i = 0; i < values.size(); ++i) out.push_back({static_cast<std::int64_t>(i), values[i]});
  return out;
}

CueErrors all_cue_errors(double v) {
  CueErrors e;
  e.ear_err = e.pc_err = e.lar_err = e.roll_err = e.pitch_err = e.yaw_err = v;
  e.mae_rpy = v;
  return e;
}

LabeledFrame labeled(bool fail, std::string metric, double value) {
  LabeledFrame f;
  f.fail = fail;
  f.values.emplace(std::move(metric), value);
  return f;
}

}  // namespace

TEST_CASE("metric catalog order and lookup") {
  const auto metrics = audit_metrics();
  REQUIRE(metrics.size() == 13);
  CHECK(metrics[0].name == "ear_err");
  CHECK(metrics[6].name == "mae_rpy");
  CHECK(metrics[12].name == "sam");
  CHECK(find_audit_metric("psnr")->orientation == Orientation::higher_is_similar);
  CHECK(find_audit_metric("roll_err")->cue_error);
  CHECK_FALSE(find_audit_metric("mae_rpy")->cue_error);
  CHECK(find_audit_metric("nope") == nullptr);
}

TEST_CASE("summaries") {
  const std::vector<double> two = {0.06, 0.47};
  const auto s = summarize(std::span<const double>(two));
  CHECK(s.maximum == 0.47);
  CHECK(s.minimum == 0.06);
  CHECK(s.mean == doctest::Approx(0.265).epsilon(1e-12));
  CHECK(s.std_dev == doctest::Approx(0.205).epsilon(1e-12));
  CHECK(s.count == 2);

  const std::vector<double> one = {5.0};
  const auto single = summarize(std::span<const double>(one));
  CHECK(single.mean == 5.0);
  CHECK(single.std_dev == 0.0);

  const std::vector<std::optional<double>> gappy = {1.0, std::nullopt, 3.0};
  CHECK(summarize(std::span<const std::optional<double>>(gappy)).count == 2);

  const std::vector<std::optional<double>> empty = {std::nullopt};
  CHECK(error_code_of([&] { summarize(std::span<const std::optional<double>>(empty)); }) == ErrorCode::EmptySeries);
  CHECK(error_code_of([] { summarize(std::span<const double>()); }) == ErrorCode::EmptySeries);
}

TEST_CASE("summary invariants on random data") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> dist(-1e3, 1e3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> v(1 + trial * 7);
    for (auto& x : v) x = dist(rng);
    const auto s = summarize(std::span<const double>(v));
    CHECK(s.minimum <= s.mean);
    CHECK(s.mean <= s.maximum);
    CHECK(s.std_dev >= 0.0);
  }
  // Mean stays inside [min, max] even when rounding would push it out.
  const std::vector<double> same(10, 0.1);
  const auto s = summarize(std::span<const double>(same));
  CHECK(s.mean == 0.1);
}

TEST_CASE("quantiles use linear interpolation") {
  const std::vector<double> v = {4, 1, 3, 2};
  const auto q = quantiles(v);
  CHECK(q.minimum == 1.0);
  CHECK(q.q1 == doctest::Approx(1.75));
  CHECK(q.median == doctest::Approx(2.5));
  CHECK(q.q3 == doctest::Approx(3.25));
  CHECK(q.maximum == 4.0);
  CHECK(q.mean == 2.5);
  CHECK(median_of({5, 1, 3}) == 3.0);
}

TEST_CASE("cumulative curve") {
  std::vector<double> errors(8, 0.01);
  errors.push_back(0.2);
  errors.push_back(0.2);
  const auto curve = cumulative_curve("ear_err", errors);
  CHECK(curve.fraction_below(0.06) == 0.8);
  CHECK(curve.breakpoints().size() == 2);
  CHECK(curve.breakpoints().back().second == 1.0);

  const std::vector<double> zeros(5, 0.0);
  CHECK(cumulative_curve("x", zeros).fraction_below(0.06) == 1.0);
  const std::vector<double> single = {0.1};
  CHECK(cumulative_curve("x", single).fraction_below(0.06) == 0.0);
  CHECK(error_code_of([] { cumulative_curve("x", std::span<const double>()); }) == ErrorCode::EmptySeries);

  std::mt19937_64 rng(3);
  std::exponential_distribution<double> dist(10.0);
  std::vector<double> random(300);
  for (auto& x : random) x = dist(rng);
  const auto big = cumulative_curve("x", random);
  double previous = 0.0;
  for (const auto& [value, fraction] : big.breakpoints()) {
    CHECK(fraction >= previous);
    previous = fraction;
  }
  CHECK(previous == 1.0);
}

TEST_CASE("gender pairs") {
  SessionErrors ff{Gender::F, Gender::F, {all_cue_errors(1.0), all_cue_errors(1.0)}};
  SessionErrors fm{Gender::F, Gender::M, {all_cue_errors(2.0)}};
  const std::vector<SessionErrors> sessions = {ff, fm};
  const auto stats = gender_pair_stats(sessions);
  REQUIRE(stats.size() == 2);
  CHECK(stats[0].pair == GenderPair::FF);
  CHECK(stats[0].mean_roll_err == 1.0);
  CHECK(stats[0].mean_mae_rpy == 1.0);
  CHECK(stats[0].count == 2);
  CHECK(stats[1].pair == GenderPair::FM);
  CHECK(stats[0].mean_mae_rpy < stats[1].mean_mae_rpy);
  CHECK(to_string(gender_pair(Gender::M, Gender::F)) == "MF");

  SessionErrors pose_free{Gender::M, Gender::M, {CueErrors{}}};
  const std::vector<SessionErrors> only = {pose_free};
  CHECK(gender_pair_stats(only).empty());
}

TEST_CASE("zero-error rule") {
  CHECK(flag_zero_error(all_cue_errors(0.0), 1e-6).has_value());
  CHECK(flag_zero_error(all_cue_errors(0.0), 1e-6)->reason == FlagReason::zero_error_suspect);
  CHECK(flag_zero_error(all_cue_errors(0.0), 1e-6)->metric.empty());

  auto one_nonzero = all_cue_errors(0.0);
  one_nonzero.yaw_err = 0.5;
  CHECK_FALSE(flag_zero_error(one_nonzero, 1e-6));

  CueErrors pose_only;
  pose_only.roll_err = pose_only.pitch_err = pose_only.yaw_err = 0.0;
  CHECK(flag_zero_error(pose_only, 1e-6));

  CueErrors two;
  two.ear_err = two.lar_err = 0.0;
  CHECK_FALSE(flag_zero_error(two, 1e-6));

  // mae_rpy is derived from the angle errors and does not count on its own.
  CueErrors with_mae;
  with_mae.ear_err = with_mae.lar_err = 0.0;
  with_mae.mae_rpy = 0.0;
  CHECK_FALSE(flag_zero_error(with_mae, 1e-6));
}

TEST_CASE("out-of-range flags") {
  const auto cfg = default_threshold_config();
  CueErrors e;
  e.ear_err = 0.2;
  e.pc_err = 0.05;
  auto flags = flag_out_of_range(e, nullptr, cfg, "s", 3);
  REQUIRE(flags.size() == 1);
  CHECK(flags[0].metric == "ear_err");
  CHECK(flags[0].value == 0.2);
  CHECK(flags[0].frame_index == 3);
  CHECK(flags[0].hi == 0.06);

  QualityMetrics q;
  q.mse = 10;
  q.rmse = std::sqrt(10.0);
  q.psnr_db = 20.0;
  q.uiqi = 0.9;
  q.ergas = 5.0;
  q.sam = 0.1;
  flags = flag_out_of_range(CueErrors{}, &q, cfg);
  REQUIRE(flags.size() == 1);
  CHECK(flags[0].metric == "psnr");
  CHECK(flags[0].lo == 28.16);

  // Infinite PSNR sits inside [28.16, inf].
  q.psnr_db = std::numeric_limits<double>::infinity();
  CHECK(flag_out_of_range(CueErrors{}, &q, cfg).empty());
}

TEST_CASE("flags are sound: stated condition holds on the stated value") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> dist(0.0, 0.2);
  const auto cfg = default_threshold_config();
  for (int i = 0; i < 200; ++i) {
    CueErrors e;
    e.ear_err = dist(rng);
    e.pc_err = dist(rng);
    e.lar_err = dist(rng);
    for (const auto& f : flag_out_of_range(e, nullptr, cfg)) {
      const Range r = cfg.ranges.at(f.metric);
      CHECK_FALSE(r.contains(f.value));
    }
  }
}

TEST_CASE("series anomalies") {
  const auto cfg = default_threshold_config();
  SUBCASE("single spike in a constant series") {
    std::vector<double> v(60, 100.0);
    v[37] = 16000.0;
    const auto flags = detect_series_anomalies(series_of(v), cfg, "s");
    REQUIRE(flags.size() == 1);
    CHECK(flags[0].frame_index == 37);
    CHECK(flags[0].metric == "ergas");
    CHECK(flags[0].reason == FlagReason::series_anomaly);
  }
  SUBCASE("constant series") {
    CHECK(detect_series_anomalies(series_of(std::vector<double>(40, 3.0)), cfg).empty());
  }
  SUBCASE("linear ramp") {
    std::vector<double> v(200);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = 5.0 + 0.25 * static_cast<double>(i);
    CHECK(detect_series_anomalies(series_of(v), cfg).empty());
    // Direct evaluation: the largest |z| along the ramp stays below the threshold.
    double worst = 0.0;
    for (const auto& s : robust_scores(series_of(v), cfg.anomaly, 1e-6)) worst = std::max(worst, std::abs(*s->z));
    CHECK(worst < cfg.anomaly.z_threshold);
  }
  SUBCASE("dips are flagged too") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> noise(50.0, 1.0);
    std::vector<double> v(100);
    for (auto& x : v) x = noise(rng);
    v[50] = 30.0;
    const auto flags = detect_series_anomalies(series_of(v), cfg);
    bool found = false;
    for (const auto& f : flags) found = found || (f.frame_index == 50 && *f.z < 0);
    CHECK(found);
  }
  SUBCASE("gaps are skipped and never scored") {
    auto s = series_of(std::vector<double>(40, 7.0));
    s[10].value.reset();
    s[20].value = 70.0;
    const auto scores = robust_scores(s, cfg.anomaly, 1e-6);
    CHECK_FALSE(scores[10].has_value());
    CHECK(scores[20]->anomalous);
    CHECK_FALSE(scores[21]->anomalous);
  }
  SUBCASE("too short") {
    CHECK(error_code_of([&] { detect_series_anomalies(series_of(std::vector<double>(30, 1.0)), cfg); }) ==
          ErrorCode::SeriesTooShort);
  }
  SUBCASE("flag evidence recomputes to a violation") {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<double> v(500);
    for (auto& x : v) x = noise(rng);
    for (const auto& f : detect_series_anomalies(series_of(v), cfg)) {
      const double z = 0.6745 * (f.value - *f.center) / *f.spread;
      CHECK(std::abs(z) >= *f.threshold);
      CHECK(z == doctest::Approx(*f.z));
    }
  }
}

TEST_CASE("youden j") {
  const std::vector<std::pair<double, bool>> samples = {{0.01, false}, {0.02, false}, {0.2, true}, {0.3, true}};
  CHECK(youden_j(samples, Range{0.0, 0.1}) == 1.0);
  CHECK(youden_j(samples, Range{0.0, 1.0}) == 0.0);
  CHECK(youden_j(samples, Range{0.0, 0.015}) == doctest::Approx(0.5));
}

TEST_CASE("calibration") {
  const auto prior = default_threshold_config();
  SUBCASE("separable ear_err verdicts") {
    std::vector<LabeledFrame> frames;
    for (double v : {0.01, 0.02, 0.03, 0.04, 0.05}) frames.push_back(labeled(false, "ear_err", v));
    for (double v : {0.1, 0.15, 0.2, 0.25, 0.3}) frames.push_back(labeled(true, "ear_err", v));
    const auto result = calibrate_thresholds(frames, prior);
    const double hi = result.config.ranges.at("ear_err").hi;
    CHECK(hi > 0.05);
    CHECK(hi <= 0.1);
    bool found = false;
    for (const auto& m : result.metrics) {
      if (m.metric == "ear_err") {
        found = true;
        CHECK(m.youden_j == 1.0);
        CHECK(m.updated);
      }
    }
    CHECK(found);
    // Untouched metrics keep the prior.
    CHECK(result.config.ranges.at("pc_err") == prior.ranges.at("pc_err"));
  }
  SUBCASE("higher-is-similar metric moves its lower bound") {
    std::vector<LabeledFrame> frames;
    for (double v : {0.9, 0.95, 0.97}) frames.push_back(labeled(false, "uiqi", v));
    for (double v : {0.5, 0.6}) frames.push_back(labeled(true, "uiqi", v));
    const auto result = calibrate_thresholds(frames, prior);
    const auto r = result.config.ranges.at("uiqi");
    CHECK(r.lo > 0.6);
    CHECK(r.lo <= 0.9);
    CHECK(r.hi == prior.ranges.at("uiqi").hi);
  }
  SUBCASE("no passes or no fails") {
    std::vector<LabeledFrame> passes = {labeled(false, "ear_err", 0.01)};
    CHECK(error_code_of([&] { calibrate_thresholds(passes, prior); }) == ErrorCode::InsufficientVerdicts);
    std::vector<LabeledFrame> fails = {labeled(true, "ear_err", 0.01)};
    CHECK(error_code_of([&] { calibrate_thresholds(fails, prior); }) == ErrorCode::InsufficientVerdicts);
    CHECK(error_code_of([&] { calibrate_thresholds({}, prior); }) == ErrorCode::InsufficientVerdicts);
  }
  SUBCASE("interleaved labels keep the prior") {
    std::vector<LabeledFrame> frames;
    for (double v : {0.01, 0.02}) {
      frames.push_back(labeled(false, "ear_err", v));
      frames.push_back(labeled(true, "ear_err", v));
    }
    const auto result = calibrate_thresholds(frames, prior);
    CHECK(result.config.ranges.at("ear_err") == prior.ranges.at("ear_err"));
  }
  SUBCASE("deterministic") {
    std::vector<LabeledFrame> frames;
    for (double v : {0.01, 0.02}) frames.push_back(labeled(false, "lar_err", v));
    for (double v : {0.2, 0.3}) frames.push_back(labeled(true, "lar_err", v));
    CHECK(calibrate_thresholds(frames, prior).config == calibrate_thresholds(frames, prior).config);
  }
}

TEST_CASE("threshold config json") {
  testing::TempDir dir;
  auto cfg = default_threshold_config();
  cfg.anomaly.window = 21;
  cfg.ranges["ear_err"].hi = 0.08;
  save_threshold_config(cfg, dir / "cfg.json");
  CHECK(load_threshold_config(dir / "cfg.json") == cfg);

  const auto doc = json::parse(R"({"metrics":{"ear_err":{"hi":0.1}},"anomaly":{"z_threshold":4}})");
  const auto merged = threshold_config_from_json(doc);
  CHECK(merged.ranges.at("ear_err").hi == 0.1);
  CHECK(merged.anomaly.z_threshold == 4.0);
  CHECK(merged.anomaly.window == 31);
  CHECK(merged.ranges.at("pc_err").hi == 0.075);

  CHECK(error_code_of([] { threshold_config_from_json(json::parse(R"({"metrics":{"bogus":{"hi":1}}})")); }) ==
        ErrorCode::MalformedConfig);
  CHECK(error_code_of([] { threshold_config_from_json(json::parse(R"({"anomaly":{"window":30}})")); }) ==
        ErrorCode::MalformedConfig);
  CHECK(error_code_of([] { threshold_config_from_json(json::parse(R"({"metrics":{"mse":{"lo":5,"hi":1}}})")); }) ==
        ErrorCode::MalformedConfig);
  CHECK(error_code_of([] { threshold_config_from_json(json::parse(R"({"zero_error":{"epsilon":-1}})")); }) ==
        ErrorCode::MalformedConfig);
  CHECK(error_code_of([] { threshold_config_from_json(json::parse(R"({"extra":1})")); }) ==
        ErrorCode::MalformedConfig);
  CHECK(error_code_of([&] { load_threshold_config(dir / "missing.json"); }).has_value());
}

TEST_CASE("flag json round trip") {
  Flag f;
  f.session_id = "s1";
  f.frame_index = 12;
  f.reason = FlagReason::series_anomaly;
  f.metric = "ergas";
  f.value = 9.5;
  f.detail = "peak";
  f.center = 1.5;
  f.spread = 0.1;
  f.z = 53.96;
  f.threshold = 3.5;
  CHECK(flag_from_json(to_json(f)) == f);

  Flag z;
  z.reason = FlagReason::zero_error_suspect;
  z.session_id = "s";
  const auto doc = to_json(z);
  CHECK(doc["metric"].is_null());
  CHECK(flag_from_json(doc) == z);

  for (auto r : {FlagReason::zero_error_suspect, FlagReason::out_of_range, FlagReason::series_anomaly,
                 FlagReason::missing_annotation}) {
    CHECK(parse_flag_reason(to_string(r)) == r);
  }
}
