#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "deepmark/eval.hpp"
#include "deepmark/postproc.hpp"
#include "deepmark/synth.hpp"
#include "deepmark/tensor.hpp"

namespace deepmark {

class Schema;

/// One image's outputs on disk: <dir>/<name>/manifest.json.
struct Bundle {
    std::string name;
    long long image_id = 0;
    RawOutputs raw;
};

/// Manifests under `dir`, one per subdirectory, sorted by directory name. If
/// `dir` itself holds manifest.json it is the only bundle.
std::vector<std::filesystem::path> find_manifests(const std::filesystem::path& dir);

/// image_id comes from the manifest when present, else the sorted position.
/// Errors are rethrown with the bundle name prepended.
std::vector<Bundle> load_bundles(const std::filesystem::path& dir, const Schema& schema);

inline constexpr const char* kAnnotationsFile = "annotations.json";

/// Runs the pipeline on every bundle. Output is ordered by bundle, then by
/// detection order, whatever the worker count.
std::vector<Prediction> predict_bundles(const std::vector<Bundle>& bundles, const Schema& schema,
                                        const DecodeParams& dparams,
                                        const PostprocParams& pparams, int workers = 1);

/// `count` scenes; scene i is generate_scene(seed + i, ...) with 1 + (first
/// draw of SplitMix64(seed + i) mod 5) objects.
std::vector<Scene> synth_scenes(const Schema& schema, std::uint64_t seed, int count,
                                ImageSize image_size, int cell = 4);

/// Writes synth_scenes() as bundles named image_0000, ... plus annotations.json.
/// image_id is the scene index.
void write_synth_dataset(const std::filesystem::path& dir, const Schema& schema,
                         std::uint64_t seed, int count, ImageSize image_size, int stride,
                         double noise_sigma = 0.0);

enum class Metric { MapPt, MapBox };

struct MetricValues {
    double map_pt = 0.0;
    double map_box = 0.0;
};

MetricValues evaluate(const std::vector<Prediction>& preds, const std::vector<Annotation>& gts,
                      const Schema& schema);

/// Sweeps one or two of alpha, sigma_center, sigma_kp, gamma over 0, 0.05, ..., 1.
struct GridSpec {
    std::string param;
    std::optional<std::string> param2;

    /// 21 values, i / 20 for i in 0..20.
    static std::vector<double> axis_values();
};

struct GridRow {
    double value = 0.0;
    std::optional<double> value2;
    double metric = 0.0;
    bool argmax = false;
};

/// Every grid point evaluated with the other parameters held at `base`; the
/// swept techniques are switched on. Exactly one row is flagged argmax (the
/// first row with the highest metric).
std::vector<GridRow> grid_search(const std::vector<Bundle>& bundles,
                                 const std::vector<Annotation>& gts, const Schema& schema,
                                 const GridSpec& spec, const PostprocParams& base,
                                 const DecodeParams& dparams, Metric metric, int workers = 1);

std::string grid_rows_to_csv(const GridSpec& spec, Metric metric,
                             const std::vector<GridRow>& rows);

/// Sets the named parameter and enables its technique. Throws InvalidArgument.
void set_sweep_parameter(PostprocParams& p, const std::string& name, double value);

struct BenchReport {
    std::string label;
    std::size_t group_count = 0;
    double images_per_second = 0.0;
    double median_total = 0.0;  // seconds per image
    StageTimes median_stage;    // stages of the iteration nearest the median, seconds
    std::size_t working_set_bytes = 0;
};

struct BenchResult {
    BenchReport grouped;
    BenchReport ungrouped;
    /// grouped median / ungrouped median.
    double time_ratio = 0.0;
    /// The two layouts decoded the same keypoints (within 1e-5).
    bool outputs_consistent = false;
};

/// Times the compute pipeline (all techniques on) on seeded scenes rendered in
/// the grouped layout of `schema` and in its identity layout. File I/O is
/// excluded. Throws InvalidArgument when iterations < 10.
BenchResult run_bench(const Schema& schema, std::size_t height, std::size_t width,
                      int iterations, std::uint64_t seed);

std::string bench_to_json(const BenchResult& result);

}  // namespace deepmark
