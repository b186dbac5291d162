#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>

#include "deepmark/error.hpp"
#include "deepmark/experiment.hpp"
#include "deepmark/postproc.hpp"
#include "deepmark/schema.hpp"
#include "deepmark/tensor.hpp"

namespace py = pybind11;
using namespace deepmark;

namespace {

const Schema& or_bundled(const Schema* s) { return s ? *s : bundled_schema(); }

PostprocParams parse_params(const std::string& json_text) {
    return json_text.empty() ? PostprocParams{} : postproc_params_from_json(json_text);
}

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

py::array_t<float> to_numpy(const Tensor& t) {
    py::array_t<float> out(t.dims());
    std::copy(t.data().begin(), t.data().end(), out.mutable_data());
    return out;
}

Tensor from_numpy(const FloatArray& a) {
    std::vector<std::size_t> dims(a.shape(), a.shape() + a.ndim());
    return Tensor(std::move(dims), std::vector<float>(a.data(), a.data() + a.size()));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "deepmark native core";
    static py::exception<Error> error(m, "DeepmarkError", PyExc_ValueError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::set_error(error, e.what());
        }
    });

    py::class_<Schema>(m, "Schema")
        .def_static("bundled", &bundled_schema, py::return_value_policy::copy)
        .def_static("from_json", [](const std::string& text) { return load_schema(text); })
        .def_static("from_file", &load_schema_file)
        .def("identity", [](const Schema& s) { return Schema::identity_from(s); })
        .def("to_json", &schema_to_json)
        .def_property_readonly("class_count", [](const Schema& s) { return s.classes().size(); })
        .def_property_readonly("group_count", &Schema::group_count)
        .def_property_readonly("total_keypoints", &Schema::total_keypoints)
        .def_property_readonly("head_channels", &Schema::head_channels)
        .def("keypoint_count", &Schema::keypoint_count, py::arg("class_id"))
        .def("project_to_group", &Schema::project_to_group, py::arg("class_id"), py::arg("keypoint"));

    m.def("read_tensor", [](const std::string& path) { return to_numpy(read_tensor_file(path)); },
          py::arg("path"));
    m.def("write_tensor", [](const std::string& path, const FloatArray& a) { write_tensor_file(path, from_numpy(a)); },
          py::arg("path"), py::arg("array"));

    m.def("rescore",
          [](double score_bbox, double score_kps, double alpha) {
              Detection d;
              d.score_bbox = score_bbox;
              d.score_kps = score_kps;
              return rescore(d, alpha).final_score;
          },
          py::arg("score_bbox"), py::arg("score_kps"), py::arg("alpha"));
    m.def("gaussian_kernel", [](double sigma) { return make_kernel(sigma).weights; }, py::arg("sigma"));
    m.def("smooth", [](const FloatArray& a, double sigma) { return to_numpy(smooth(from_numpy(a), sigma)); },
          py::arg("heatmap"), py::arg("sigma"));

    m.def("write_synth_dataset",
          [](const std::string& dir, std::uint64_t seed, int count, int width, int height, int stride,
             double noise, const Schema* schema) {
              write_synth_dataset(dir, or_bundled(schema), seed, count, {width, height}, stride, noise);
          },
          py::arg("dir"), py::arg("seed") = 0, py::arg("count") = 10, py::arg("width") = 256,
          py::arg("height") = 256, py::arg("stride") = 4, py::arg("noise") = 0.0, py::arg("schema") = nullptr);

    m.def("decode_dir",
          [](const std::string& dir, const std::string& params_json, int workers, const Schema* schema) {
              const Schema& s = or_bundled(schema);
              const auto bundles = load_bundles(dir, s);
              py::gil_scoped_release release;
              return predictions_to_json(predict_bundles(bundles, s, {}, parse_params(params_json), workers));
          },
          py::arg("dir"), py::arg("params_json") = "", py::arg("workers") = 1, py::arg("schema") = nullptr);

    m.def("evaluate",
          [](const std::string& predictions_json, const std::string& annotations_json, const Schema* schema) {
              const auto m = evaluate(predictions_from_json(predictions_json),
                                      annotations_from_json(annotations_json), or_bundled(schema));
              return std::make_pair(m.map_pt, m.map_box);
          },
          py::arg("predictions_json"), py::arg("annotations_json"), py::arg("schema") = nullptr);

    m.def("grid_search",
          [](const std::string& dir, const std::string& param, std::optional<std::string> param2,
             const std::string& metric, const std::string& params_json, int workers, const Schema* schema) {
              const Schema& s = or_bundled(schema);
              if (metric != "map_pt" && metric != "map_box") {
                  throw Error(ErrorCode::InvalidArgument, "metric must be map_pt or map_box");
              }
              const Metric which = metric == "map_pt" ? Metric::MapPt : Metric::MapBox;
              const auto bundles = load_bundles(dir, s);
              const auto gts = annotations_from_json(read_text_file(std::filesystem::path(dir) / kAnnotationsFile));
              const GridSpec spec{param, param2};
              py::gil_scoped_release release;
              return grid_rows_to_csv(
                  spec, which, grid_search(bundles, gts, s, spec, parse_params(params_json), {}, which, workers));
          },
          py::arg("dir"), py::arg("param"), py::arg("param2") = std::nullopt, py::arg("metric") = "map_pt",
          py::arg("params_json") = "", py::arg("workers") = 1, py::arg("schema") = nullptr);

    m.def("bench",
          [](std::size_t height, std::size_t width, int iterations, std::uint64_t seed, const Schema* schema) {
              const Schema& s = or_bundled(schema);
              py::gil_scoped_release release;
              return bench_to_json(run_bench(s, height, width, iterations, seed));
          },
          py::arg("height") = 64, py::arg("width") = 64, py::arg("iterations") = 100, py::arg("seed") = 0,
          py::arg("schema") = nullptr);
}
