// Acceptance checks. One PASS/FAIL line per criterion; exit status is the
// number of failures.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "deepmark/decoder.hpp"
#include "deepmark/eval.hpp"
#include "deepmark/experiment.hpp"
#include "deepmark/fusion.hpp"
#include "deepmark/postproc.hpp"
#include "deepmark/schema.hpp"
#include "deepmark/synth.hpp"
#include "oracles.hpp"

using namespace deepmark;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool cond, const std::string& what) {
        if (!cond && pass) {
            pass = false;
            detail = what;
        }
    }
};

char buf[512];

template <typename... A>
std::string fmt(const char* f, A... a) {
    std::snprintf(buf, sizeof buf, f, a...);
    return buf;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (a.dims() != b.dims()) return INFINITY;
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        worst = std::max(worst, static_cast<double>(std::abs(a.data()[i] - b.data()[i])));
    }
    return worst;
}

double max_abs_diff(const RawOutputs& a, const RawOutputs& b) {
    return std::max({max_abs_diff(a.center_heatmap, b.center_heatmap),
                     max_abs_diff(a.center_offset, b.center_offset),
                     max_abs_diff(a.object_size, b.object_size),
                     max_abs_diff(a.kp_regression, b.kp_regression),
                     max_abs_diff(a.kp_heatmap, b.kp_heatmap),
                     max_abs_diff(a.kp_offset, b.kp_offset)});
}

Outcome round_trip() {
    Outcome o;
    const Schema& s = bundled_schema();
    const auto t0 = std::chrono::steady_clock::now();
    const auto scenes = synth_scenes(s, 0, 200, {256, 256});
    std::vector<Prediction> preds;
    std::vector<Annotation> gts;
    const PostprocParams baseline;
    for (std::size_t i = 0; i < scenes.size(); ++i) {
        const auto id = static_cast<long long>(i);
        for (const auto& d : run_pipeline(render_outputs(scenes[i], s), s, {}, baseline)) {
            preds.push_back(to_prediction(d, id));
        }
        const auto a = scene_to_annotations(scenes[i], id);
        gts.insert(gts.end(), a.begin(), a.end());
    }
    const auto m = evaluate(preds, gts, s);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    o.detail = fmt("mAP_box=%.4f mAP_pt=%.4f time=%.2fs", m.map_box, m.map_pt, secs);
    o.pass = m.map_box >= 0.99 && m.map_pt >= 0.95 && secs < 60.0;
    return o;
}

Outcome rescore_exact() {
    Outcome o;
    Detection d;
    d.score_bbox = 0.31;
    d.score_kps = 0.28;
    const double v = rescore(d, 0.8).final_score;
    o.require(std::abs(v - 0.304) <= 1e-9, fmt("alpha=0.8 gives %.12f", v));
    o.require(rescore(d, 1.0).final_score == 0.31, "alpha=1 is not score_bbox");
    o.require(rescore(d, 0.0).final_score == 0.28, "alpha=0 is not score_kps");
    if (o.pass) o.detail = fmt("0.8 -> %.12f", v);
    return o;
}

Outcome kernel_and_smooth() {
    Outcome o;
    double worst_w = 0.0, worst_sum = 0.0, worst_conv = 0.0;
    for (double sigma : {0.25, 0.45, 0.65, 0.90}) {
        const auto k = make_kernel(sigma);
        double sum = 0.0;
        for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
                const double w = k.weights[dy + 1][dx + 1];
                sum += w;
                worst_w = std::max(worst_w, std::abs(w - oracle::kernel_weight(sigma, dx, dy)));
            }
        }
        worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
    }
    std::mt19937_64 rng(31);
    const double sigmas[] = {0.25, 0.45, 0.65, 0.90};
    for (int i = 0; i < 30; ++i) {
        const double sigma = sigmas[i % 4];
        const Tensor t = oracle::random_tensor(rng, {1, 64, 64});
        const Tensor out = smooth(t, sigma);
        const auto ref = oracle::convolve(t, 0, sigma);
        for (std::size_t j = 0; j < ref.size(); ++j) {
            worst_conv = std::max(worst_conv, std::abs(static_cast<double>(out.data()[j]) - ref[j]));
        }
    }
    o.require(worst_w <= 1e-9, "kernel differs from the closed form");
    o.require(worst_sum <= 1e-6, "kernel does not sum to 1");
    o.require(worst_conv <= 1e-6, "smooth differs from the convolution oracle");
    o.detail = fmt("weight err=%.2e sum err=%.2e smooth err=%.2e", worst_w, worst_sum, worst_conv) +
               (o.pass ? "" : " (" + o.detail + ")");
    return o;
}

Outcome blend_bounds() {
    Outcome o;
    const Point r{3.25, -7.5}, c{11.0, 19.125};
    o.require(blend_keypoint(r, c, 1.0) == r, "gamma=1 is not refined");
    o.require(blend_keypoint(r, c, 0.0) == c, "gamma=0 is not coarse");
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-500, 500), g(0, 1);
    for (int i = 0; i < 10000; ++i) {
        const Point a{u(rng), u(rng)}, b{u(rng), u(rng)};
        const Point p = blend_keypoint(a, b, g(rng));
        o.require(p.x >= std::min(a.x, b.x) && p.x <= std::max(a.x, b.x) && p.y >= std::min(a.y, b.y) &&
                      p.y <= std::max(a.y, b.y),
                  "blend left the segment bounds");
    }
    if (o.pass) o.detail = "10000 random triples";
    return o;
}

Outcome mask() {
    Outcome o;
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> size(2, 60), frac(0.1, 0.9);
    double worst = 0.0;
    for (int i = 0; i < 200; ++i) {
        const double w = size(rng), h = size(rng);
        const double sigma = kp_mask_sigma(w, h);
        o.require(std::abs(sigma - std::min(w, h) / 9.0) <= 1e-12, "sigma is not min(w,h)/9");
        const Point coarse{frac(rng) * 40, frac(rng) * 40};
        o.require(kp_mask_weight(coarse, coarse, sigma) == 1.0, "mask is not 1 at the coarse cell");
        const double angle = frac(rng) * 6.283185307179586;
        const Point at{coarse.x + sigma * std::cos(angle), coarse.y + sigma * std::sin(angle)};
        worst = std::max(worst, std::abs(kp_mask_weight(at, coarse, sigma) - std::exp(-0.5)));

        const Tensor t = oracle::random_tensor(rng, {1, 40, 40});
        const Point cell{std::floor(coarse.x), std::floor(coarse.y)};
        const Tensor m = kp_mask_rescore(t, cell, w, h);
        const std::size_t at_coarse = static_cast<std::size_t>(cell.y) * 40 + static_cast<std::size_t>(cell.x);
        o.require(m.data()[at_coarse] == t.data()[at_coarse], "masked value changed at the coarse cell");
        for (std::size_t j = 0; j < t.size(); ++j) {
            o.require(m.data()[j] <= t.data()[j], "mask increased a value");
        }
    }
    o.require(worst <= 1e-9, "factor at sigma is not e^-1/2");
    o.detail = fmt("factor err at sigma=%.2e over 200 boxes", worst) + (o.pass ? "" : " (" + o.detail + ")");
    return o;
}

Outcome grouping() {
    Outcome o;
    const Schema& s = bundled_schema();
    o.require(s.classes().size() == 13, "class count");
    o.require(s.total_keypoints() == 294, "keypoint count");
    o.require(s.group_count() == 62, "group count");
    std::size_t pairs = 0;
    for (const auto& c : s.classes()) {
        std::vector<double> v(c.keypoint_count());
        std::vector<double> grouped(s.group_count(), -1.0);
        for (std::size_t k = 0; k < v.size(); ++k) {
            v[k] = 1000.0 * c.id + static_cast<double>(k);
            grouped[s.project_to_group(c.id, k)] = v[k];
            ++pairs;
        }
        o.require(s.expand_from_groups(c.id, grouped) == v, "round trip failed for class " + c.name);
    }
    o.require(pairs == 294, "pair count");

    const Schema wide = Schema::identity_from(s);
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const Scene scene = generate_scene(seed, {256, 256}, 1 + static_cast<int>(seed % 5), s);
        const auto a = decode(render_outputs(scene, s), s);
        const auto b = decode(render_outputs(scene, wide), wide);
        o.require(a.size() == b.size(), "layouts disagree on detection count");
        for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) {
            o.require(a[i].class_id == b[i].class_id && a[i].final_kps.size() == b[i].final_kps.size(),
                      "layouts disagree on a detection");
            for (std::size_t k = 0; k < std::min(a[i].final_kps.size(), b[i].final_kps.size()); ++k) {
                worst = std::max(worst, std::hypot(a[i].final_kps[k].x - b[i].final_kps[k].x,
                                                   a[i].final_kps[k].y - b[i].final_kps[k].y));
            }
        }
    }
    o.require(worst <= 1e-5, "G=62 and G=294 keypoints differ");
    o.detail = fmt("13/%zu/%zu, %zu pairs, layout diff=%.2e", s.total_keypoints(), s.group_count(), pairs, worst) +
               (o.pass ? "" : " (" + o.detail + ")");
    return o;
}

Outcome peaks_and_nms() {
    Outcome o;
    std::mt19937_64 rng(2025);
    std::uniform_int_distribution<std::size_t> extent(1, 24), chans(1, 6), k(1, 60);
    int peak_cases = 0, nms_cases = 0;
    for (int i = 0; i < 60; ++i) {
        const std::vector<std::size_t> dims{chans(rng), extent(rng), extent(rng)};
        const Tensor t = i % 2 ? oracle::random_tensor(rng, dims) : oracle::plateau_tensor(rng, dims);
        const auto expected = oracle::peaks(t);
        const std::size_t top_k = k(rng);
        const bool ok = extract_peaks(t, top_k) ==
                        std::vector<Peak>(expected.begin(), expected.begin() + std::min(top_k, expected.size()));
        o.require(ok, fmt("peaks differ on instance %d", i));
        ++peak_cases;
    }
    std::uniform_real_distribution<double> pos(0, 60), size(5, 30), score(0, 1), thr(0.1, 0.9);
    std::uniform_int_distribution<int> cls(1, 3), level(0, 4);
    for (int trial = 0; trial < 60; ++trial) {
        std::vector<Detection> dets;
        for (int i = 0; i < 25; ++i) {
            Detection d;
            d.class_id = cls(rng);
            d.box = {pos(rng), pos(rng), size(rng), size(rng)};
            d.score_bbox = d.final_score = trial % 2 ? level(rng) / 4.0 : score(rng);
            dets.push_back(d);
        }
        const double t = thr(rng);
        const auto kept = nms(dets, t);
        const auto expected = oracle::nms(dets, t);
        bool ok = kept.size() == expected.size();
        for (std::size_t i = 0; ok && i < kept.size(); ++i) {
            ok = kept[i].box == dets[expected[i]].box && kept[i].class_id == dets[expected[i]].class_id;
        }
        o.require(ok, fmt("nms differs on instance %d", trial));
        ++nms_cases;
    }
    o.detail = fmt("%d peak maps, %d nms sets", peak_cases, nms_cases) + (o.pass ? "" : " (" + o.detail + ")");
    return o;
}

Outcome flip() {
    Outcome o;
    const Schema& s = bundled_schema();
    std::mt19937_64 rng(44);
    double worst_inv = 0.0, worst_fuse = 0.0;
    for (int i = 0; i < 10; ++i) {
        const std::size_t h = 8 + 3 * static_cast<std::size_t>(i), w = 31 - 2 * static_cast<std::size_t>(i);
        RawOutputs x = RawOutputs::zeros(62, h, w, 4, {static_cast<int>(w) * 4, static_cast<int>(h) * 4});
        x.center_heatmap = oracle::random_tensor(rng, {13, h, w});
        x.center_offset = oracle::random_tensor(rng, {2, h, w}, -0.5f, 0.5f);
        x.object_size = oracle::random_tensor(rng, {2, h, w}, 1.0f, 20.0f);
        x.kp_regression = oracle::random_tensor(rng, {124, h, w}, -10.0f, 10.0f);
        x.kp_heatmap = oracle::random_tensor(rng, {62, h, w});
        x.kp_offset = oracle::random_tensor(rng, {2, h, w}, -0.5f, 0.5f);
        const RawOutputs m = mirror_raw(x, s.flip_spec());
        worst_inv = std::max(worst_inv, max_abs_diff(mirror_raw(m, s.flip_spec()), x));
        worst_fuse = std::max(worst_fuse, max_abs_diff(flip_fuse(x, m, s.flip_spec()), x));
    }
    o.pass = worst_inv <= 1e-6 && worst_fuse <= 1e-6;
    o.detail = fmt("involution err=%.2e fuse err=%.2e", worst_inv, worst_fuse);
    return o;
}

Outcome grid() {
    Outcome o;
    const Schema& s = bundled_schema();
    std::vector<Bundle> bundles;
    std::vector<Annotation> gts;
    const auto scenes = synth_scenes(s, 500, 12, {128, 128});
    for (std::size_t i = 0; i < scenes.size(); ++i) {
        const auto id = static_cast<long long>(i);
        bundles.push_back({"image_" + std::to_string(i), id, perturb(render_outputs(scenes[i], s), 0.05, 500 + i)});
        const auto a = scene_to_annotations(scenes[i], id);
        gts.insert(gts.end(), a.begin(), a.end());
    }
    auto check_rows = [&](const std::vector<GridRow>& rows, std::size_t n, const std::string& name) {
        o.require(rows.size() == n, name + ": row count");
        if (rows.size() != n) return;
        const auto flagged = std::count_if(rows.begin(), rows.end(), [](const GridRow& r) { return r.argmax; });
        o.require(flagged == 1, name + ": argmax flag count");
        const auto best = std::find_if(rows.begin(), rows.end(), [](const GridRow& r) { return r.argmax; });
        if (best == rows.end()) return;
        for (const auto& r : rows) {
            o.require(best->metric >= r.metric, name + ": flagged row is not the maximum");
            const bool endpoint = r.value == 0.0 || r.value == 1.0 || (r.value2 && (*r.value2 == 0.0 || *r.value2 == 1.0));
            if (endpoint) o.require(best->metric >= r.metric, name + ": endpoint beats argmax");
        }
    };
    for (const char* p : {"alpha", "sigma_center", "sigma_kp", "gamma"}) {
        for (Metric m : {Metric::MapPt, Metric::MapBox}) {
            check_rows(grid_search(bundles, gts, s, {p, std::nullopt}, {}, {}, m, 4), 21, p);
        }
    }
    const std::vector<Bundle> few(bundles.begin(), bundles.begin() + 3);
    check_rows(grid_search(few, gts, s, {"sigma_center", "sigma_kp"}, {}, {}, Metric::MapPt, 4), 441,
               "sigma_center x sigma_kp");
    o.detail = o.pass ? "4 params x 2 metrics at 21 rows, one 2-D sweep at 441 rows" : o.detail;
    return o;
}

Outcome bench() {
    Outcome o;
    const auto r = run_bench(bundled_schema(), 64, 64, 100, 0);
    o.pass = r.grouped.median_total < r.ungrouped.median_total;
    o.detail = fmt("G=62 %.3f ms, G=294 %.3f ms, ratio %.3f", r.grouped.median_total * 1e3,
                   r.ungrouped.median_total * 1e3, r.time_ratio);
    return o;
}

}  // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
        {"round trip accuracy and runtime", round_trip},
        {"rescore exactness", rescore_exact},
        {"smoothing kernel", kernel_and_smooth},
        {"keypoint blend", blend_bounds},
        {"keypoint distance mask", mask},
        {"keypoint grouping", grouping},
        {"peak extraction and nms oracles", peaks_and_nms},
        {"flip involution", flip},
        {"grid search", grid},
        {"grouped vs ungrouped benchmark", bench},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failures += !o.pass;
        std::printf("%s %2zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
        std::fflush(stdout);
    }
    return failures;
}
