#include "deepmark/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <utility>

#include "deepmark/error.hpp"
#include "deepmark/schema.hpp"

namespace deepmark {

std::uint64_t SplitMix64::next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

double SplitMix64::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

std::uint64_t SplitMix64::below(std::uint64_t n) {
    if (n == 0) throw Error(ErrorCode::InvalidArgument, "below(0)");
    // Rejection keeps the draw unbiased.
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do {
        x = next();
    } while (x >= limit);
    return x % n;
}

double SplitMix64::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
}

namespace {

constexpr double kMinBoxSide = 16.0;
constexpr int kPlacementAttempts = 200;

bool separated(const Box& a, const Box& b) {
    constexpr double gap = 1.0;
    return a.x + a.w + gap <= b.x || b.x + b.w + gap <= a.x || a.y + a.h + gap <= b.y ||
           b.y + b.h + gap <= a.y;
}

std::size_t nearest_cell(double v, std::size_t n) {
    const double cell = std::floor(v + 0.5);
    return static_cast<std::size_t>(std::clamp(cell, 0.0, static_cast<double>(n - 1)));
}

void splat_max(Tensor& t, std::size_t channel, std::size_t row, std::size_t col, double sigma) {
    const std::size_t h = t.height();
    const std::size_t w = t.width();
    const double denom = 2.0 * sigma * sigma;
    auto plane = t.channel(channel);
    for (std::size_t r = 0; r < h; ++r) {
        const double dy = static_cast<double>(r) - static_cast<double>(row);
        for (std::size_t c = 0; c < w; ++c) {
            const double dx = static_cast<double>(c) - static_cast<double>(col);
            const auto v = static_cast<float>(std::exp(-(dx * dx + dy * dy) / denom));
            float& cell = plane[r * w + c];
            cell = std::max(cell, v);
        }
    }
}

}  // namespace

Scene generate_scene(std::uint64_t seed, ImageSize image_size, int n_objects,
                     const Schema& schema, int cell) {
    if (n_objects < 1 || n_objects > kMaxObjectsPerImage) {
        throw Error(ErrorCode::TooManyObjects,
                    "n_objects = " + std::to_string(n_objects) + ", allowed 1..5");
    }
    if (image_size.width < 2 * kMinBoxSide || image_size.height < 2 * kMinBoxSide) {
        throw Error(ErrorCode::InvalidArgument, "image must be at least 32×32 px");
    }
    if (cell < 1) throw Error(ErrorCode::InvalidArgument, "cell must be >= 1");
    SplitMix64 rng(seed);
    const auto& classes = schema.classes();
    const double max_side =
        std::max(kMinBoxSide, std::min(image_size.width, image_size.height) / 3.0);
    const auto cell_of = [&](double x, double y) {
        return std::pair{std::floor(x / cell + 0.5), std::floor(y / cell + 0.5)};
    };
    std::set<std::pair<double, double>> used_cells;

    Scene scene;
    scene.image_size = image_size;
    for (int i = 0; i < n_objects; ++i) {
        SceneObject obj;
        obj.class_id = classes[rng.below(classes.size())].id;
        const std::size_t n_kps = schema.keypoint_count(obj.class_id);
        // Twice as many cells in the sampling area as keypoints.
        const double min_side = std::min(
            max_side,
            std::max(kMinBoxSide, cell * std::ceil(std::sqrt(2.0 * static_cast<double>(n_kps))) / 0.9));
        for (int attempt = 0; attempt < kPlacementAttempts; ++attempt) {
            const double w = rng.uniform(min_side, max_side);
            const double h = rng.uniform(min_side, max_side);
            obj.box = {rng.uniform(0.0, image_size.width - w), rng.uniform(0.0, image_size.height - h),
                       w, h};
            const bool clear = std::all_of(scene.objects.begin(), scene.objects.end(),
                                           [&](const SceneObject& o) { return separated(o.box, obj.box); });
            if (clear) break;
        }
        for (std::size_t k = 0; k < n_kps; ++k) {
            SceneKeypoint kp;
            for (int attempt = 0; attempt < kPlacementAttempts; ++attempt) {
                kp.x = obj.box.x + obj.box.w * rng.uniform(0.05, 0.95);
                kp.y = obj.box.y + obj.box.h * rng.uniform(0.05, 0.95);
                if (!used_cells.contains(cell_of(kp.x, kp.y))) break;
            }
            used_cells.insert(cell_of(kp.x, kp.y));
            kp.visibility = rng.uniform() < 0.8 ? 2 : 1;
            obj.keypoints.push_back(kp);
        }
        scene.objects.push_back(std::move(obj));
    }
    return scene;
}

double render_sigma(const Box& box, int stride) {
    return std::max(1.0, std::min(box.w, box.h) / (6.0 * stride));
}

RawOutputs render_outputs(const Scene& scene, const Schema& schema, int stride) {
    if (stride < 1) throw Error(ErrorCode::InvalidArgument, "stride must be >= 1");
    const auto cells = [&](int px) {
        return static_cast<std::size_t>((px + stride - 1) / stride);
    };
    const std::size_t h = cells(scene.image_size.height);
    const std::size_t w = cells(scene.image_size.width);
    RawOutputs raw = RawOutputs::zeros(schema.group_count(), h, w, stride, scene.image_size);

    for (const auto& obj : scene.objects) {
        const auto& groups = schema.class_groups(obj.class_id);
        if (obj.keypoints.size() != groups.size()) {
            throw Error(ErrorCode::LengthMismatch,
                        "object of class " + std::to_string(obj.class_id) + " has " +
                            std::to_string(obj.keypoints.size()) + " keypoints, expected " +
                            std::to_string(groups.size()));
        }
        const double sigma = render_sigma(obj.box, stride);
        const double cx = (obj.box.x + obj.box.w / 2) / stride;
        const double cy = (obj.box.y + obj.box.h / 2) / stride;
        const std::size_t col = nearest_cell(cx, w);
        const std::size_t row = nearest_cell(cy, h);
        splat_max(raw.center_heatmap, static_cast<std::size_t>(obj.class_id - 1), row, col, sigma);
        raw.center_offset.at(0, row, col) = static_cast<float>(cx - static_cast<double>(col));
        raw.center_offset.at(1, row, col) = static_cast<float>(cy - static_cast<double>(row));
        raw.object_size.at(0, row, col) = static_cast<float>(obj.box.w / stride);
        raw.object_size.at(1, row, col) = static_cast<float>(obj.box.h / stride);

        for (std::size_t j = 0; j < groups.size(); ++j) {
            const std::size_t g = groups[j];
            const auto& kp = obj.keypoints[j];
            const double kx = kp.x / stride;
            const double ky = kp.y / stride;
            raw.kp_regression.at(2 * g, row, col) = static_cast<float>(kx - static_cast<double>(col));
            raw.kp_regression.at(2 * g + 1, row, col) = static_cast<float>(ky - static_cast<double>(row));
            if (kp.visibility == 0) continue;
            const std::size_t kc = nearest_cell(kx, w);
            const std::size_t kr = nearest_cell(ky, h);
            splat_max(raw.kp_heatmap, g, kr, kc, sigma);
            raw.kp_offset.at(0, kr, kc) = static_cast<float>(kx - static_cast<double>(kc));
            raw.kp_offset.at(1, kr, kc) = static_cast<float>(ky - static_cast<double>(kr));
        }
    }
    return raw;
}

RawOutputs perturb(const RawOutputs& raw, double sigma, std::uint64_t seed) {
    SplitMix64 rng(seed);
    RawOutputs out = raw;
    auto noisy = [&](Tensor& t, bool clamp_unit) {
        for (float& v : t.data()) {
            double x = v + sigma * rng.normal();
            if (clamp_unit) x = std::clamp(x, 0.0, 1.0);
            v = static_cast<float>(x);
        }
    };
    noisy(out.center_heatmap, true);
    noisy(out.center_offset, false);
    noisy(out.object_size, false);
    noisy(out.kp_regression, false);
    noisy(out.kp_heatmap, true);
    noisy(out.kp_offset, false);
    return out;
}

std::vector<Annotation> scene_to_annotations(const Scene& scene, long long image_id) {
    std::vector<Annotation> out;
    for (const auto& obj : scene.objects) {
        Annotation a;
        a.image_id = image_id;
        a.class_id = obj.class_id;
        a.box = obj.box;
        for (const auto& kp : obj.keypoints) a.keypoints.push_back({kp.x, kp.y, kp.visibility});
        out.push_back(std::move(a));
    }
    return out;
}

std::vector<Prediction> scene_to_predictions(const Scene& scene, long long image_id) {
    std::vector<Prediction> out;
    for (const auto& obj : scene.objects) {
        Prediction p;
        p.image_id = image_id;
        p.class_id = obj.class_id;
        p.box = obj.box;
        p.score = 1.0;
        for (const auto& kp : obj.keypoints) p.keypoints.push_back({kp.x, kp.y, 1.0});
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace deepmark
