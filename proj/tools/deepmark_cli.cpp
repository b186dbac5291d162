// deepmark: decode, evaluate, sweep and benchmark clothing-detector outputs.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "deepmark/error.hpp"
#include "deepmark/eval.hpp"
#include "deepmark/experiment.hpp"
#include "deepmark/fusion.hpp"
#include "deepmark/postproc.hpp"
#include "deepmark/schema.hpp"

namespace fs = std::filesystem;
using namespace deepmark;

namespace {

struct Common {
    std::string schema_path;
    std::string params_path;
    int workers = 1;
};

Schema load_schema_or_bundled(const std::string& path) {
    return path.empty() ? bundled_schema() : load_schema_file(path);
}

PostprocParams load_params(const std::string& path) {
    return path.empty() ? PostprocParams{} : postproc_params_from_json(read_text_file(path));
}

void emit(const std::string& out_path, const std::string& text) {
    if (out_path.empty() || out_path == "-") {
        std::cout << text;
    } else {
        write_text_file(out_path, text);
    }
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

Metric parse_metric(const std::string& s) {
    if (s == "map_pt") return Metric::MapPt;
    if (s == "map_box") return Metric::MapBox;
    throw Error(ErrorCode::InvalidArgument, "metric must be map_pt or map_box, got " + s);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Decode, evaluate and tune CenterNet-style clothing detector outputs"};
    app.require_subcommand(1);
    Common common;
    auto add_common = [&](CLI::App* cmd, bool params, bool workers) {
        cmd->add_option("--schema", common.schema_path, "schema JSON (default: bundled 62-group table)");
        if (params) cmd->add_option("--params", common.params_path, "post-processing params JSON");
        if (workers) cmd->add_option("--workers", common.workers, "worker threads")->check(CLI::PositiveNumber);
    };

    // decode
    std::string decode_dir, decode_out;
    auto* decode_cmd = app.add_subcommand("decode", "decode every bundle in a directory to predictions JSON");
    decode_cmd->add_option("dir", decode_dir, "bundle directory")->required();
    decode_cmd->add_option("--out", decode_out, "predictions file (default stdout)");
    add_common(decode_cmd, true, true);

    // eval
    std::string gt_path, pred_path, eval_out;
    bool visible_only = false;
    auto* eval_cmd = app.add_subcommand("eval", "mAP_pt and mAP_box of predictions against ground truth");
    eval_cmd->add_option("--gt", gt_path, "annotations JSON")->required();
    eval_cmd->add_option("--pred", pred_path, "predictions JSON")->required();
    eval_cmd->add_option("--out", eval_out, "optional JSON report with per-class AP");
    eval_cmd->add_flag("--visible-only", visible_only, "count only visible (v=2) keypoints in OKS");
    add_common(eval_cmd, false, false);

    // grid-search
    std::string gs_dir, gs_param, gs_param2, gs_metric = "map_pt", gs_out;
    auto* gs_cmd = app.add_subcommand("grid-search", "sweep post-processing parameters over [0, 1] step 0.05");
    gs_cmd->add_option("dir", gs_dir, "bundle directory with annotations.json")->required();
    gs_cmd->add_option("--param", gs_param, "alpha | sigma_center | sigma_kp | gamma")->required();
    gs_cmd->add_option("--param2", gs_param2, "second parameter for a 2-D sweep");
    gs_cmd->add_option("--metric", gs_metric, "map_pt | map_box");
    gs_cmd->add_option("--out", gs_out, "CSV file (default stdout)");
    add_common(gs_cmd, true, true);

    // synth
    std::string synth_dir;
    std::uint64_t seed = 0;
    int count = 10, width = 256, height = 256, stride = 4;
    double noise = 0.0;
    auto* synth_cmd = app.add_subcommand("synth", "render seeded synthetic bundles and annotations");
    synth_cmd->add_option("dir", synth_dir, "output directory")->required();
    synth_cmd->add_option("--seed", seed, "base seed");
    synth_cmd->add_option("--count", count, "number of images")->check(CLI::PositiveNumber);
    synth_cmd->add_option("--width", width, "image width in px");
    synth_cmd->add_option("--height", height, "image height in px");
    synth_cmd->add_option("--stride", stride, "output stride")->check(CLI::PositiveNumber);
    synth_cmd->add_option("--noise", noise, "Gaussian noise sigma added to every head");
    add_common(synth_cmd, false, false);

    // fuse
    std::string fuse_manifests, fuse_scales, fuse_flip, fuse_out;
    long long image_id = 0;
    auto* fuse_cmd = app.add_subcommand("fuse", "flip and multiscale fusion of several inference runs");
    fuse_cmd->add_option("--manifests", fuse_manifests, "comma-separated manifests, one per scale")->required();
    fuse_cmd->add_option("--scales", fuse_scales, "comma-separated multipliers, e.g. 0.85,0.95,1.1")->required();
    fuse_cmd->add_option("--flip", fuse_flip, "comma-separated manifests of the flipped input, one per scale");
    fuse_cmd->add_option("--image-id", image_id, "image_id written to the predictions");
    fuse_cmd->add_option("--out", fuse_out, "predictions file (default stdout)");
    add_common(fuse_cmd, true, false);

    // bench
    std::size_t bench_h = 64, bench_w = 64;
    int iterations = 100;
    std::string bench_out;
    auto* bench_cmd = app.add_subcommand("bench", "time grouped vs ungrouped decode");
    bench_cmd->add_option("--height", bench_h, "heatmap height");
    bench_cmd->add_option("--width", bench_w, "heatmap width");
    bench_cmd->add_option("--iterations", iterations, "timed iterations per layout (>= 10)");
    bench_cmd->add_option("--seed", seed, "scene seed");
    bench_cmd->add_option("--out", bench_out, "JSON report (default stdout)");
    add_common(bench_cmd, false, false);

    CLI11_PARSE(app, argc, argv);

    try {
        const Schema schema = load_schema_or_bundled(common.schema_path);
        const DecodeParams dparams;

        if (*decode_cmd) {
            const auto bundles = load_bundles(decode_dir, schema);
            const auto preds = predict_bundles(bundles, schema, dparams, load_params(common.params_path),
                                               common.workers);
            emit(decode_out, predictions_to_json(preds));
        } else if (*eval_cmd) {
            const auto gts = annotations_from_json(read_text_file(gt_path));
            const auto preds = predictions_from_json(read_text_file(pred_path));
            const auto mode = visible_only ? VisibilityMode::VisibleOnly : VisibilityMode::Labeled;
            const auto pt = mean_ap(preds, gts, Similarity::Oks, schema, coco_thresholds(), mode);
            const auto box = mean_ap(preds, gts, Similarity::Iou, schema);
            std::printf("map_pt=%.6f map_box=%.6f\n", pt.map, box.map);
            if (!eval_out.empty()) {
                std::ostringstream os;
                os.precision(17);
                os << "{\"map_pt\": " << pt.map << ", \"map_box\": " << box.map << ", \"per_class\": [";
                bool first = true;
                for (const auto& [cls, ap] : pt.per_class) {
                    const double box_ap = box.per_class.count(cls) ? box.per_class.at(cls) : 0.0;
                    os << (first ? "" : ", ") << "{\"category_id\": " << cls << ", \"ap_pt\": " << ap
                       << ", \"ap_box\": " << box_ap << "}";
                    first = false;
                }
                os << "]}\n";
                write_text_file(eval_out, os.str());
            }
        } else if (*gs_cmd) {
            const auto bundles = load_bundles(gs_dir, schema);
            const auto gts = annotations_from_json(read_text_file(fs::path(gs_dir) / kAnnotationsFile));
            GridSpec spec{gs_param, gs_param2.empty() ? std::nullopt : std::optional<std::string>(gs_param2)};
            const Metric metric = parse_metric(gs_metric);
            const auto rows = grid_search(bundles, gts, schema, spec, load_params(common.params_path),
                                          dparams, metric, common.workers);
            emit(gs_out, grid_rows_to_csv(spec, metric, rows));
        } else if (*synth_cmd) {
            write_synth_dataset(synth_dir, schema, seed, count, {width, height}, stride, noise);
        } else if (*fuse_cmd) {
            const auto manifests = split_list(fuse_manifests);
            const auto scales = split_list(fuse_scales);
            const auto flips = split_list(fuse_flip);
            if (manifests.size() != scales.size()) {
                throw Error(ErrorCode::InvalidArgument, "--manifests and --scales differ in length");
            }
            if (!flips.empty() && flips.size() != manifests.size()) {
                throw Error(ErrorCode::InvalidArgument, "--flip needs one manifest per scale");
            }
            const auto params = load_params(common.params_path);
            std::vector<ScaleRun> runs;
            for (std::size_t i = 0; i < manifests.size(); ++i) {
                RawOutputs raw = load_raw_outputs(manifests[i], schema);
                if (!flips.empty()) {
                    raw = flip_fuse(raw, load_raw_outputs(flips[i], schema), schema.flip_spec());
                }
                runs.push_back({std::stod(scales[i]), run_pipeline(raw, schema, dparams, params)});
            }
            std::vector<Prediction> preds;
            for (const auto& d : multiscale_fuse(runs, params.nms_iou)) preds.push_back(to_prediction(d, image_id));
            emit(fuse_out, predictions_to_json(preds));
        } else if (*bench_cmd) {
            const auto result = run_bench(schema, bench_h, bench_w, iterations, seed);
            emit(bench_out, bench_to_json(result));
        }
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: Internal: %s\n", e.what());
        return 3;
    }
    return 0;
}
