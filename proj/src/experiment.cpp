#include "deepmark/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "deepmark/error.hpp"
#include "deepmark/schema.hpp"

namespace deepmark {

namespace fs = std::filesystem;

std::vector<fs::path> find_manifests(const fs::path& dir) {
    if (fs::exists(dir / "manifest.json")) return {dir / "manifest.json"};
    if (!fs::is_directory(dir)) throw Error(ErrorCode::Io, dir.string() + " is not a directory");
    std::vector<fs::path> subdirs;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_directory() && fs::exists(entry.path() / "manifest.json")) {
            subdirs.push_back(entry.path());
        }
    }
    std::sort(subdirs.begin(), subdirs.end());
    std::vector<fs::path> out;
    for (const auto& d : subdirs) out.push_back(d / "manifest.json");
    return out;
}

std::vector<Bundle> load_bundles(const fs::path& dir, const Schema& schema) {
    std::vector<Bundle> out;
    const auto manifests = find_manifests(dir);
    for (std::size_t i = 0; i < manifests.size(); ++i) {
        Bundle b;
        b.name = manifests[i].parent_path().filename().string();
        try {
            b.raw = load_raw_outputs(manifests[i], schema);
            const auto manifest = nlohmann::json::parse(read_text_file(manifests[i]));
            b.image_id = manifest.value("image_id", static_cast<long long>(i));
        } catch (const Error& e) {
            throw Error(e.code(), "bundle " + b.name + ": " + e.message());
        }
        out.push_back(std::move(b));
    }
    return out;
}

namespace {

/// Calls fn(i) for i in [0, n) on `workers` threads.
template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn fn) {
    const auto threads = static_cast<std::size_t>(std::clamp(workers, 1, 256));
    if (threads == 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::atomic<bool> failed{false};
    {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < std::min(threads, n); ++t) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < n && !failed; i = next++) {
                    try {
                        fn(i);
                    } catch (...) {
                        if (!failed.exchange(true)) failure = std::current_exception();
                    }
                }
            });
        }
    }
    if (failure) std::rethrow_exception(failure);
}

}  // namespace

std::vector<Prediction> predict_bundles(const std::vector<Bundle>& bundles, const Schema& schema,
                                        const DecodeParams& dparams,
                                        const PostprocParams& pparams, int workers) {
    std::vector<std::vector<Prediction>> per_image(bundles.size());
    parallel_for(bundles.size(), workers, [&](std::size_t i) {
        for (const auto& d : run_pipeline(bundles[i].raw, schema, dparams, pparams)) {
            per_image[i].push_back(to_prediction(d, bundles[i].image_id));
        }
    });
    std::vector<Prediction> out;
    for (auto& v : per_image) out.insert(out.end(), v.begin(), v.end());
    return out;
}

std::vector<Scene> synth_scenes(const Schema& schema, std::uint64_t seed, int count,
                                ImageSize image_size, int cell) {
    std::vector<Scene> scenes;
    for (int i = 0; i < count; ++i) {
        const std::uint64_t s = seed + static_cast<std::uint64_t>(i);
        const int n = 1 + static_cast<int>(SplitMix64(s).next() % kMaxObjectsPerImage);
        scenes.push_back(generate_scene(s, image_size, n, schema, cell));
    }
    return scenes;
}

void write_synth_dataset(const fs::path& dir, const Schema& schema, std::uint64_t seed, int count,
                         ImageSize image_size, int stride, double noise_sigma) {
    fs::create_directories(dir);
    const auto scenes = synth_scenes(schema, seed, count, image_size, stride);
    std::vector<Annotation> gts;
    for (std::size_t i = 0; i < scenes.size(); ++i) {
        auto raw = render_outputs(scenes[i], schema, stride);
        if (noise_sigma > 0.0) raw = perturb(raw, noise_sigma, seed + i);
        char name[32];
        std::snprintf(name, sizeof name, "image_%04zu", i);
        save_raw_outputs(dir / name, raw, static_cast<long long>(i));
        for (auto& a : scene_to_annotations(scenes[i], static_cast<long long>(i))) gts.push_back(std::move(a));
    }
    write_text_file(dir / kAnnotationsFile, annotations_to_json(gts));
}

MetricValues evaluate(const std::vector<Prediction>& preds, const std::vector<Annotation>& gts,
                      const Schema& schema) {
    return {mean_ap(preds, gts, Similarity::Oks, schema).map,
            mean_ap(preds, gts, Similarity::Iou, schema).map};
}

std::vector<double> GridSpec::axis_values() {
    std::vector<double> v;
    for (int i = 0; i <= 20; ++i) v.push_back(i / 20.0);
    return v;
}

void set_sweep_parameter(PostprocParams& p, const std::string& name, double value) {
    if (name == "alpha") {
        p.alpha = value;
        p.enabled.set(Technique::Rescore);
    } else if (name == "sigma_center") {
        p.sigma_center = value;
        p.enabled.set(Technique::SmoothCenter);
    } else if (name == "sigma_kp") {
        p.sigma_kp = value;
        p.enabled.set(Technique::SmoothKp);
    } else if (name == "gamma") {
        p.gamma = value;
        p.enabled.set(Technique::Blend);
    } else {
        throw Error(ErrorCode::InvalidArgument,
                    "unknown sweep parameter \"" + name +
                        "\" (expected alpha, sigma_center, sigma_kp or gamma)");
    }
}

std::vector<GridRow> grid_search(const std::vector<Bundle>& bundles,
                                 const std::vector<Annotation>& gts, const Schema& schema,
                                 const GridSpec& spec, const PostprocParams& base,
                                 const DecodeParams& dparams, Metric metric, int workers) {
    if (spec.param2 && *spec.param2 == spec.param) {
        throw Error(ErrorCode::InvalidArgument, "the two sweep parameters must differ");
    }
    const auto axis = GridSpec::axis_values();
    std::vector<GridRow> rows;
    for (double v : axis) {
        const std::vector<std::optional<double>> inner =
            spec.param2 ? std::vector<std::optional<double>>(axis.begin(), axis.end())
                        : std::vector<std::optional<double>>{std::nullopt};
        for (const auto& v2 : inner) {
            PostprocParams p = base;
            set_sweep_parameter(p, spec.param, v);
            if (v2) set_sweep_parameter(p, *spec.param2, *v2);
            const auto preds = predict_bundles(bundles, schema, dparams, p, workers);
            const auto similarity = metric == Metric::MapPt ? Similarity::Oks : Similarity::Iou;
            rows.push_back({v, v2, mean_ap(preds, gts, similarity, schema).map, false});
        }
    }
    const auto best = std::max_element(rows.begin(), rows.end(), [](const GridRow& a, const GridRow& b) {
        return a.metric < b.metric;
    });
    best->argmax = true;
    return rows;
}

std::string grid_rows_to_csv(const GridSpec& spec, Metric metric, const std::vector<GridRow>& rows) {
    std::ostringstream os;
    os.precision(17);
    os << spec.param;
    if (spec.param2) os << ',' << *spec.param2;
    os << ',' << (metric == Metric::MapPt ? "map_pt" : "map_box") << ",argmax\n";
    for (const auto& r : rows) {
        os << r.value;
        if (r.value2) os << ',' << *r.value2;
        os << ',' << r.metric << ',' << (r.argmax ? 1 : 0) << '\n';
    }
    return os.str();
}

namespace {

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

bool same_keypoints(const std::vector<Detection>& a, const std::vector<Detection>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].class_id != b[i].class_id || a[i].final_kps.size() != b[i].final_kps.size()) return false;
        for (std::size_t k = 0; k < a[i].final_kps.size(); ++k) {
            if (std::abs(a[i].final_kps[k].x - b[i].final_kps[k].x) > 1e-5 ||
                std::abs(a[i].final_kps[k].y - b[i].final_kps[k].y) > 1e-5) {
                return false;
            }
        }
    }
    return true;
}

struct Layout {
    const Schema* schema;
    std::vector<RawOutputs> inputs;
    std::vector<double> totals;
    std::vector<StageTimes> stages;
};

BenchReport summarize(const Layout& layout, const std::string& label) {
    BenchReport r;
    r.label = label;
    r.group_count = layout.schema->group_count();
    r.median_total = median(layout.totals);
    // Stage breakdown of the iteration closest to the median total, so the
    // stages add up to that iteration's total.
    std::size_t pick = 0;
    for (std::size_t i = 1; i < layout.totals.size(); ++i) {
        if (std::abs(layout.totals[i] - r.median_total) < std::abs(layout.totals[pick] - r.median_total)) pick = i;
    }
    r.median_stage = layout.stages[pick];
    r.images_per_second = r.median_total > 0.0 ? 1.0 / r.median_total : 0.0;
    const auto& raw = layout.inputs.front();
    const std::size_t plane = raw.height() * raw.width();
    // Heads plus the smoothed center and keypoint heatmaps.
    r.working_set_bytes = (raw.total_channels() + kNumClasses + raw.group_count()) * plane * sizeof(float);
    return r;
}

}  // namespace

BenchResult run_bench(const Schema& schema, std::size_t height, std::size_t width, int iterations,
                      std::uint64_t seed) {
    if (iterations < 10) throw Error(ErrorCode::InvalidArgument, "bench needs at least 10 iterations");
    constexpr int kStride = 4;
    constexpr int kScenes = 8;
    const Schema identity = Schema::identity_from(schema);
    const ImageSize image{static_cast<int>(width) * kStride, static_cast<int>(height) * kStride};
    const auto scenes = synth_scenes(schema, seed, kScenes, image);

    Layout grouped{&schema, {}, {}, {}};
    Layout ungrouped{&identity, {}, {}, {}};
    for (const auto& s : scenes) {
        grouped.inputs.push_back(render_outputs(s, schema, kStride));
        ungrouped.inputs.push_back(render_outputs(s, identity, kStride));
    }

    PostprocParams params;
    params.enabled = TechniqueSet::all();
    const DecodeParams dparams;

    BenchResult result;
    result.outputs_consistent = true;
    for (std::size_t i = 0; i < scenes.size(); ++i) {
        const auto a = run_pipeline(grouped.inputs[i], schema, dparams, params);
        const auto b = run_pipeline(ungrouped.inputs[i], identity, dparams, params);
        result.outputs_consistent = result.outputs_consistent && same_keypoints(a, b);
    }

    using Clock = std::chrono::steady_clock;
    auto time_one = [&](Layout& layout, int it) {
        StageTimes st;
        const auto t0 = Clock::now();
        const auto dets = run_pipeline(layout.inputs[static_cast<std::size_t>(it) % layout.inputs.size()],
                                       *layout.schema, dparams, params, &st);
        layout.totals.push_back(std::chrono::duration<double>(Clock::now() - t0).count());
        layout.stages.push_back(st);
        return dets.size();
    };
    // Interleave the layouts so machine noise hits both alike.
    for (int it = 0; it < iterations; ++it) {
        time_one(grouped, it);
        time_one(ungrouped, it);
    }
    result.grouped = summarize(grouped, "grouped");
    result.ungrouped = summarize(ungrouped, "ungrouped");
    result.time_ratio = result.grouped.median_total / result.ungrouped.median_total;
    return result;
}

std::string bench_to_json(const BenchResult& result) {
    auto report = [](const BenchReport& r) {
        nlohmann::ordered_json j;
        j["label"] = r.label;
        j["group_count"] = r.group_count;
        j["images_per_second"] = r.images_per_second;
        j["median_total_s"] = r.median_total;
        j["stage_s"] = {{"smooth", r.median_stage.smooth},
                        {"peak_extraction", r.median_stage.peaks},
                        {"refinement", r.median_stage.refine},
                        {"nms", r.median_stage.nms},
                        {"blend_rescore", r.median_stage.other}};
        j["working_set_bytes"] = r.working_set_bytes;
        return j;
    };
    nlohmann::ordered_json doc;
    doc["grouped"] = report(result.grouped);
    doc["ungrouped"] = report(result.ungrouped);
    doc["time_ratio"] = result.time_ratio;
    doc["outputs_consistent"] = result.outputs_consistent;
    return doc.dump(2) + "\n";
}

}  // namespace deepmark
