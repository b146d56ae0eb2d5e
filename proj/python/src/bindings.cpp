#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "infragpt/errors.hpp"
#include "infragpt/eval.hpp"
#include "infragpt/metrics.hpp"
#include "infragpt/pipeline.hpp"
#include "infragpt/schema.hpp"

namespace py = pybind11;
using namespace infragpt;

namespace {

// Structured values cross the boundary as JSON text; the Python wrapper
// decodes them.

Frame sized_frame(int width, int height) {
  Frame f;
  f.frame_id = "python";
  f.width_px = width;
  f.height_px = height;
  check_frame(f);
  return f;
}

DetectionSet detections_from(const std::string& text) {
  DetectionSet out;
  for (const auto& d : nlohmann::json::parse(text)) out.push_back(detection_from_json(d));
  return out;
}

std::vector<metrics::GroundTruth> truths_from(const std::string& text) {
  std::vector<metrics::GroundTruth> out;
  for (const auto& g : nlohmann::json::parse(text)) {
    out.push_back({bbox_from_json(g.at("bbox")), g.at("class").get<std::string>()});
  }
  return out;
}

BBox box_from(const std::array<double, 4>& b) { return {b[0], b[1], b[2], b[3]}; }

}  // namespace

PYBIND11_MODULE(_infragpt, m) {
  m.doc() = "Native core of the infragpt pipeline";

  static py::exception<Error> error(m, "Error", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      error((std::string(to_string(e.code())) + ": " + e.what()).c_str());
    }
  });

  m.def("iou", [](const std::array<double, 4>& a, const std::array<double, 4>& b) {
    return metrics::iou(box_from(a), box_from(b));
  });
  m.def("bbox_from_center", [](double cx, double cy, double w, double h) {
    const BBox b = bbox_from_center(cx, cy, w, h);
    return std::array<double, 4>{b.x_min, b.y_min, b.x_max, b.y_max};
  });
  m.def("rouge_l", [](const std::string& candidate, const std::string& reference) {
    const auto r = metrics::rouge_l(candidate, reference);
    return py::make_tuple(r.precision, r.recall, r.f1);
  });
  m.def("bleu", [](const std::string& candidate, const std::vector<std::string>& references) {
    return metrics::bleu(candidate, references);
  });
  m.def("meteor", &metrics::meteor);
  m.def("_average_precision",
        [](const std::string& preds, const std::string& gts, const std::string& cls, double thr) {
          return metrics::average_precision(detections_from(preds), truths_from(gts), cls, thr);
        });
  m.def("_validate_plan", [](const std::string& document, int width, int height, bool require_items) {
    return schema::to_json(schema::validate_plan(document, sized_frame(width, height), {require_items})).dump();
  });
  m.def("_canonicalize_plan", [](const std::string& document, int width, int height) {
    return schema::canonicalize_plan(schema::parse_plan(document, sized_frame(width, height)));
  });
  m.def("_structural_accuracy", [](const std::string& plan, const std::string& dets, double thr) {
    return schema::structural_accuracy(plan_from_json(nlohmann::json::parse(plan)), detections_from(dets), thr);
  });
  m.def("_run_batch",
        [](const std::string& config, const std::string& manifest, const std::string& out, bool force,
           bool deterministic) {
          pipeline::PipelineConfig c = pipeline::load_config(config);
          if (deterministic) c.deterministic = true;
          py::gil_scoped_release release;
          const auto rt = pipeline::make_runtime(std::move(c));
          return pipeline::to_json(pipeline::run_batch(manifest, rt, out, force)).dump();
        });
  m.def("_run_eval", [](const std::string& records, const std::string& gt, const std::string& refs,
                        const std::string& out_dir, std::size_t subset_size) {
    eval::EvalOptions options;
    options.subset_size = subset_size;
    py::gil_scoped_release release;
    return eval::run_eval(records, gt, refs, out_dir, options).summary.dump();
  });
}
