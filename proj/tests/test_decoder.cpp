#include <doctest.h>

#include <cmath>
#include <random>

#include "deepmark/decoder.hpp"
#include "deepmark/error.hpp"
#include "deepmark/schema.hpp"
#include "deepmark/synth.hpp"
#include "oracles.hpp"

using namespace deepmark;

namespace {

/// Small schema: class 1 with three keypoints on groups 0..2, class 2 with two
/// keypoints sharing groups 0 and 2.
Schema tiny_schema() {
    return Schema({{1, "a", {"left_x", "right_x", "mid"}}, {2, "b", {"left_x", "right_x"}}},
                  {{{1, 0}, {2, 0}}, {{1, 1}, {2, 1}}, {{1, 2}}}, {{0, 1}}, {});
}

double dist(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

}  // namespace

TEST_CASE("single splat gives one peak at its apex") {
    Tensor t({1, 9, 11});
    for (std::size_t r = 0; r < 9; ++r) {
        for (std::size_t c = 0; c < 11; ++c) {
            const double d2 = std::pow(double(r) - 3, 2) + std::pow(double(c) - 7, 2);
            t.at(0, r, c) = static_cast<float>(0.9 * std::exp(-d2 / 4.0));
        }
    }
    const auto peaks = extract_peaks(t, 100);
    REQUIRE(peaks.size() == 1);
    CHECK(peaks[0] == Peak{0, 3, 7, 0.9f});
}

TEST_CASE("uniform map: every cell qualifies, row-major order, top_k truncation") {
    Tensor t({2, 3, 4});
    for (float& v : t.data()) v = 0.5f;
    const auto all = extract_peaks(t, 100);
    REQUIRE(all.size() == 24);
    for (std::size_t i = 0; i < all.size(); ++i) {
        CHECK(all[i].channel * 12 + all[i].row * 4 + all[i].col == i);
    }
    const auto five = extract_peaks(t, 5);
    CHECK(std::vector<Peak>(all.begin(), all.begin() + 5) == five);
    const auto per_channel = extract_peaks(t, 5, PeakMode::PerChannel);
    REQUIRE(per_channel.size() == 10);
    CHECK(per_channel[5] == Peak{1, 0, 0, 0.5f});
    CHECK(extract_peaks(t, 0).empty());
}

TEST_CASE("peaks match the brute-force scan on random maps") {
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<std::size_t> extent(1, 12), chans(1, 4), k(1, 40);
    for (int i = 0; i < 60; ++i) {
        const std::vector<std::size_t> dims{chans(rng), extent(rng), extent(rng)};
        const Tensor t = i % 2 ? oracle::random_tensor(rng, dims) : oracle::plateau_tensor(rng, dims);
        const auto expected = oracle::peaks(t);
        const std::size_t top_k = k(rng);

        CHECK(extract_peaks(t, 1000) == expected);
        const auto joint = extract_peaks(t, top_k);
        CHECK(joint == std::vector<Peak>(expected.begin(),
                                         expected.begin() + std::min(top_k, expected.size())));

        std::vector<Peak> per_channel;
        for (std::size_t c = 0; c < dims[0]; ++c) {
            std::size_t taken = 0;
            for (const auto& p : expected) {
                if (p.channel == c && taken < top_k) {
                    per_channel.push_back(p);
                    ++taken;
                }
            }
        }
        CHECK(extract_peaks(t, top_k, PeakMode::PerChannel) == per_channel);
    }
}

TEST_CASE("to_image_coords") {
    CHECK(to_image_coords({0, 0}, 4) == Point{0, 0});
    CHECK(to_image_coords({10.25, 3.5}, 4) == Point{41.0, 14.0});
    CHECK(to_image_coords({1.3, 2.7}, 1) == Point{1.3, 2.7});
}

TEST_CASE("decode of a hand-built output") {
    const Schema s = tiny_schema();
    RawOutputs raw = RawOutputs::zeros(3, 20, 20, 4, {80, 80});
    // Class 1 centered at cell (8, 10) with offset (0.25, -0.5), size 8x6 cells.
    raw.center_heatmap.at(0, 8, 10) = 0.7f;
    raw.center_offset.at(0, 8, 10) = 0.25f;
    raw.center_offset.at(1, 8, 10) = -0.5f;
    raw.object_size.at(0, 8, 10) = 8.0f;
    raw.object_size.at(1, 8, 10) = 6.0f;
    // Coarse keypoints relative to the center cell.
    raw.kp_regression.at(0, 8, 10) = -2.0f;  // group 0: (8, 8)
    raw.kp_regression.at(1, 8, 10) = 0.0f;
    raw.kp_regression.at(2, 8, 10) = 2.0f;   // group 1: (12, 9)
    raw.kp_regression.at(3, 8, 10) = 1.0f;
    raw.kp_regression.at(4, 8, 10) = 0.0f;   // group 2: (10, 6), no heatmap support
    raw.kp_regression.at(5, 8, 10) = -2.0f;
    // Group 0: two candidates inside the box, the nearer one wins regardless of score.
    raw.kp_heatmap.at(0, 7, 8) = 0.4f;
    raw.kp_offset.at(0, 7, 8) = 0.1f;
    raw.kp_offset.at(1, 7, 8) = 0.2f;
    raw.kp_heatmap.at(0, 10, 12) = 0.95f;
    // Group 1: a strong peak outside the box and a weak one below threshold inside.
    raw.kp_heatmap.at(1, 9, 17) = 0.99f;
    raw.kp_heatmap.at(1, 9, 13) = 0.05f;
    // Group 2: fallback scores the heatmap at the rounded coarse cell.
    raw.kp_heatmap.at(2, 6, 10) = 0.08f;

    const auto dets = decode(raw, s);
    REQUIRE(dets.size() == 1);
    const Detection& d = dets[0];
    CHECK(d.class_id == 1);
    CHECK(d.score_bbox == doctest::Approx(0.7).epsilon(1e-7));
    CHECK(d.final_score == d.score_bbox);
    // center (10.25, 7.5), box x in [6.25, 14.25], y in [4.5, 10.5]
    CHECK(d.box.x == doctest::Approx(6.25 * 4));
    CHECK(d.box.y == doctest::Approx(4.5 * 4));
    CHECK(d.box.w == doctest::Approx(32));
    CHECK(d.box.h == doctest::Approx(24));

    REQUIRE(d.final_kps.size() == 3);
    CHECK(d.kp_source[0] == KeypointSource::Refined);
    CHECK(d.refined_kps[0].x == doctest::Approx(8.1 * 4));
    CHECK(d.refined_kps[0].y == doctest::Approx(7.2 * 4));
    CHECK(d.kp_scores[0] == doctest::Approx(0.4));

    CHECK(d.kp_source[1] == KeypointSource::CoarseFallback);
    CHECK(d.refined_kps[1] == Point{12 * 4, 9 * 4});
    CHECK(d.kp_scores[1] == 0.0);

    CHECK(d.kp_source[2] == KeypointSource::CoarseFallback);
    CHECK(d.coarse_kps[2] == Point{40, 24});
    CHECK(d.kp_scores[2] == doctest::Approx(0.08));
    CHECK(d.score_kps == doctest::Approx((0.4 + 0.0 + 0.08) / 3));
    CHECK(d.final_kps == d.refined_kps);
}

TEST_CASE("all-zero heatmap decodes to nothing") {
    const auto raw = RawOutputs::zeros(62, 16, 16, 4, {64, 64});
    CHECK(decode(raw, bundled_schema()).empty());
}

TEST_CASE("synthetic single object round trip") {
    const Schema& s = bundled_schema();
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Scene scene = generate_scene(seed, {256, 256}, 1, s);
        const auto raw = render_outputs(scene, s);
        const auto dets = decode(raw, s);
        REQUIRE(dets.size() == 1);
        const auto& o = scene.objects[0];
        const auto& d = dets[0];
        CHECK(d.class_id == o.class_id);
        const Point gt_c{(o.box.x + o.box.w / 2) / 4, (o.box.y + o.box.h / 2) / 4};
        const Point c{(d.box.x + d.box.w / 2) / 4, (d.box.y + d.box.h / 2) / 4};
        CHECK(dist(gt_c, c) <= 0.5);
        for (auto src : d.kp_source) CHECK(src == KeypointSource::Refined);
        for (std::size_t k = 0; k < o.keypoints.size(); ++k) {
            CHECK(dist(d.final_kps[k], {o.keypoints[k].x, o.keypoints[k].y}) <= 1e-3);
        }
    }
}

TEST_CASE("deleted keypoint splat falls back to the coarse position") {
    const Schema& s = bundled_schema();
    const Scene scene = generate_scene(3, {256, 256}, 1, s);
    auto raw = render_outputs(scene, s);
    const auto& o = scene.objects[0];
    const std::size_t g = s.project_to_group(o.class_id, 2);
    for (float& v : raw.kp_heatmap.channel(g)) v = 0.0f;
    const auto d = decode(raw, s).at(0);
    CHECK(d.kp_source[2] == KeypointSource::CoarseFallback);
    CHECK(d.final_kps[2] == d.coarse_kps[2]);
    CHECK(d.kp_scores[2] == 0.0);
    // Rendered regression is exact, so the coarse point is the keypoint itself.
    CHECK(dist(d.coarse_kps[2], {o.keypoints[2].x, o.keypoints[2].y}) <= 1e-3);
    for (std::size_t k = 0; k < d.kp_source.size(); ++k) {
        if (k != 2) CHECK(d.kp_source[k] == KeypointSource::Refined);
    }
}

TEST_CASE("decode properties on noisy scenes") {
    const Schema& s = bundled_schema();
    for (std::uint64_t seed = 0; seed < 15; ++seed) {
        const Scene scene = generate_scene(seed, {256, 256}, 1 + static_cast<int>(seed % 5), s);
        const auto raw = perturb(render_outputs(scene, s), 0.08, seed);
        const auto a = decode(raw, s);
        const auto b = decode(raw, s);
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i].box == b[i].box);
            CHECK(a[i].final_kps == b[i].final_kps);
        }
        // Refined keypoints lie inside their box.
        for (const auto& d : a) {
            CHECK(d.box.w > 0);
            CHECK(d.box.h > 0);
            CHECK(d.final_kps.size() == s.keypoint_count(d.class_id));
            for (std::size_t k = 0; k < d.final_kps.size(); ++k) {
                if (d.kp_source[k] != KeypointSource::Refined) continue;
                const Point p = d.final_kps[k];
                CHECK(p.x >= d.box.x - 1e-9);
                CHECK(p.x <= d.box.x + d.box.w + 1e-9);
                CHECK(p.y >= d.box.y - 1e-9);
                CHECK(p.y <= d.box.y + d.box.h + 1e-9);
            }
            CHECK(d.score_bbox >= 0.0);
            CHECK(d.score_bbox <= 1.0);
            CHECK(d.score_kps >= 0.0);
            CHECK(d.score_kps <= 1.0);
        }
        // Raising the center threshold keeps a prefix-preserving subset.
        DecodeParams strict;
        strict.center_score_threshold = 0.5f;
        const auto fewer = decode(raw, s, strict);
        CHECK(fewer.size() <= a.size());
        std::size_t j = 0;
        for (const auto& d : fewer) {
            while (j < a.size() && !(a[j].box == d.box && a[j].class_id == d.class_id)) ++j;
            CHECK(j < a.size());
            ++j;
        }
    }
}

TEST_CASE("grouped and ungrouped layouts decode the same keypoints") {
    const Schema& grouped = bundled_schema();
    const Schema wide = Schema::identity_from(grouped);
    for (std::uint64_t seed = 100; seed < 130; ++seed) {
        const Scene scene = generate_scene(seed, {256, 256}, 1 + static_cast<int>(seed % 5), grouped);
        const auto a = decode(render_outputs(scene, grouped), grouped);
        const auto b = decode(render_outputs(scene, wide), wide);
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i].class_id == b[i].class_id);
            REQUIRE(a[i].final_kps.size() == b[i].final_kps.size());
            for (std::size_t k = 0; k < a[i].final_kps.size(); ++k) {
                CHECK(dist(a[i].final_kps[k], b[i].final_kps[k]) <= 1e-5);
            }
        }
    }
}

TEST_CASE("shape mismatch against the schema") {
    const auto raw = RawOutputs::zeros(61, 8, 8, 4, {32, 32});
    CHECK_THROWS_WITH_AS(decode(raw, bundled_schema()), doctest::Contains("ShapeMismatch"), Error);
}
