#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <nlohmann/json.hpp>

#include "deid/audit.hpp"
#include "deid/error.hpp"
#include "deid/review_service.hpp"
#include "deid/synthgen.hpp"

namespace py = pybind11;

namespace {

using U8Array = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

deid::Image to_image(const U8Array& a) {
  const auto info = a.request();
  if (info.ndim != 2 && info.ndim != 3) throw py::value_error("image must be HxW or HxWxC");
  const int h = static_cast<int>(info.shape[0]);
  const int w = static_cast<int>(info.shape[1]);
  const int c = info.ndim == 3 ? static_cast<int>(info.shape[2]) : 1;
  deid::Image img(w, h, c);
  const auto* src = static_cast<const std::uint8_t*>(info.ptr);
  std::copy(src, src + img.sample_count(), img.pixels.begin());
  deid::validate(img);
  return img;
}

template <std::size_t N>
std::array<deid::Point2, N> to_points(const std::vector<std::pair<double, double>>& pts) {
  if (pts.size() != N) throw py::value_error("expected " + std::to_string(N) + " (x, y) points");
  std::array<deid::Point2, N> out{};
  for (std::size_t i = 0; i < N; ++i) out[i] = {pts[i].first, pts[i].second};
  return out;
}

std::vector<double> finite_only(const std::vector<std::optional<double>>& values) {
  std::vector<double> out;
  for (const auto& v : values) {
    if (v) out.push_back(*v);
  }
  return out;
}

py::dict summary_dict(const deid::StatSummary& s) {
  py::dict d;
  d["maximum"] = s.maximum;
  d["minimum"] = s.minimum;
  d["mean"] = s.mean;
  d["std_dev"] = s.std_dev;
  d["count"] = s.count;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Cue-preservation and image-quality audit for de-identified driver video";

  py::register_exception<deid::AuditError>(m, "AuditError", PyExc_RuntimeError);

  m.attr("__version__") = deid::kToolVersion;

  // Cue metrics on explicit point lists (P1..P6 for eyes, the eight outer
  // lip points L1..L8 for the mouth).
  m.def("eye_aspect_ratio", [](const std::vector<std::pair<double, double>>& pts) {
    return deid::eye_aspect_ratio({to_points<6>(pts)});
  }, py::arg("points"));
  m.def("pupil_circularity", [](const std::vector<std::pair<double, double>>& pts) {
    return deid::pupil_circularity({to_points<6>(pts)});
  }, py::arg("points"));
  m.def("lip_aspect_ratio", [](const std::vector<std::pair<double, double>>& pts) {
    return deid::lip_aspect_ratio({to_points<8>(pts)});
  }, py::arg("points"));

  m.def("mse", [](const U8Array& x, const U8Array& y) { return deid::mse(to_image(x), to_image(y)); });
  m.def("rmse", [](const U8Array& x, const U8Array& y) { return deid::rmse(to_image(x), to_image(y)); });
  m.def("psnr", [](const U8Array& x, const U8Array& y) { return deid::psnr(to_image(x), to_image(y)); });
  m.def("uiqi", [](const U8Array& x, const U8Array& y, int window) {
    return deid::uiqi(to_image(x), to_image(y), window);
  }, py::arg("x"), py::arg("y"), py::arg("window") = 8);
  m.def("sam", [](const U8Array& x, const U8Array& y, double eps) {
    return deid::sam(to_image(x), to_image(y), eps);
  }, py::arg("x"), py::arg("y"), py::arg("epsilon") = 1e-6);
  m.def("ergas", [](const U8Array& x, const U8Array& y, double ratio, double eps) {
    return deid::ergas(to_image(x), to_image(y), ratio, eps);
  }, py::arg("x"), py::arg("y"), py::arg("ratio") = 1.0, py::arg("epsilon") = 1e-6);
  m.def("frame_quality", [](const U8Array& x, const U8Array& y) {
    return py::module_::import("json").attr("loads")(deid::to_json(deid::frame_quality(to_image(x), to_image(y))).dump());
  }, "All six quality metrics as a dict; infinite PSNR becomes None");

  m.def("summarize", [](const std::vector<std::optional<double>>& values) {
    return summary_dict(deid::summarize(std::span<const std::optional<double>>(values)));
  }, py::arg("values"), "Max, min, mean, population std and count over present values");
  m.def("fraction_below", [](const std::vector<std::optional<double>>& values, double threshold) {
    const auto present = finite_only(values);
    return deid::cumulative_curve("", present).fraction_below(threshold);
  }, py::arg("values"), py::arg("threshold"));

  m.def("detect_anomalies", [](const std::vector<std::optional<double>>& values, int window, double z_threshold,
                               double epsilon) {
    std::vector<deid::SeriesPoint> series;
    for (std::size_t i = 0; i < values.size(); ++i) series.push_back({static_cast<std::int64_t>(i), values[i]});
    deid::AnomalyConfig cfg;
    cfg.window = window;
    cfg.z_threshold = z_threshold;
    std::vector<std::int64_t> flagged;
    const auto scores = deid::robust_scores(series, cfg, epsilon);
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (scores[i] && scores[i]->anomalous) flagged.push_back(static_cast<std::int64_t>(i));
    }
    return flagged;
  }, py::arg("values"), py::arg("window") = 31, py::arg("z_threshold") = 3.5, py::arg("epsilon") = 1e-6,
     "Indices whose rolling robust z-score reaches the threshold");

  m.def("default_config", [] { return deid::to_json(deid::default_threshold_config()).dump(); });

  m.def("run_audit", [](const std::filesystem::path& manifest, std::optional<std::filesystem::path> config,
                        unsigned workers, bool canonical) {
    deid::AuditOptions options;
    if (config) options.config = deid::load_threshold_config(*config);
    options.workers = workers;
    py::gil_scoped_release release;
    return deid::report_to_string(deid::run_audit(manifest, options), canonical);
  }, py::arg("manifest"), py::arg("config") = py::none(), py::arg("workers") = 1, py::arg("canonical") = true,
     "Runs the full audit and returns the report JSON text");

  m.def("calibrate", [](const std::filesystem::path& report, const std::filesystem::path& verdicts) {
    const auto rep = deid::load_report(report);
    const auto labeled = deid::label_frames(rep, deid::read_verdict_log(verdicts));
    return deid::to_json(deid::calibrate_thresholds(labeled, rep.config).config).dump();
  }, py::arg("report"), py::arg("verdicts"), "Threshold config JSON fitted to a verdict log");

  m.def("synth", [](const std::string& spec_json, const std::filesystem::path& out_dir) {
    const auto specs = deid::synth_specs_from_json(nlohmann::json::parse(spec_json));
    deid::generate_dataset(specs, out_dir);
    return out_dir / "manifest.json";
  }, py::arg("spec_json"), py::arg("out_dir"), "Writes a synthetic dataset and returns its manifest path");
}
