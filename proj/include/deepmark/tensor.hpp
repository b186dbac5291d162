#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace deepmark {

class Schema;

/// Dense row-major f32 array. Maps use (C, H, W) order.
class Tensor {
public:
    Tensor() = default;
    /// Zero-filled tensor. Throws InvalidArgument on an empty or zero dim.
    explicit Tensor(std::vector<std::size_t> dims);
    Tensor(std::vector<std::size_t> dims, std::vector<float> data);

    const std::vector<std::size_t>& dims() const noexcept { return dims_; }
    std::size_t rank() const noexcept { return dims_.size(); }
    std::size_t size() const noexcept { return data_.size(); }

    std::span<float> data() noexcept { return data_; }
    std::span<const float> data() const noexcept { return data_; }

    // Accessors for rank-3 maps.
    std::size_t channels() const { return dims_.at(0); }
    std::size_t height() const { return dims_.at(1); }
    std::size_t width() const { return dims_.at(2); }

    float& at(std::size_t c, std::size_t r, std::size_t col) {
        return data_[(c * dims_[1] + r) * dims_[2] + col];
    }
    float at(std::size_t c, std::size_t r, std::size_t col) const {
        return data_[(c * dims_[1] + r) * dims_[2] + col];
    }

    /// One H×W plane of a rank-3 map.
    std::span<float> channel(std::size_t c);
    std::span<const float> channel(std::size_t c) const;

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    std::vector<std::size_t> dims_;
    std::vector<float> data_;
};

/// Parses the "DMTF" container. Rejects bad headers, short payloads and
/// non-finite values; errors name the byte offset.
Tensor read_tensor(std::span<const std::byte> bytes);
std::vector<std::byte> write_tensor(const Tensor& t);

Tensor read_tensor_file(const std::filesystem::path& path);
void write_tensor_file(const std::filesystem::path& path, const Tensor& t);

struct ImageSize {
    int width = 0;
    int height = 0;
    friend bool operator==(const ImageSize&, const ImageSize&) = default;
};

inline constexpr std::size_t kNumClasses = 13;

/// The six heads of one inference pass, at 1/stride of the input resolution.
///
///   center_heatmap [13, H, W]   post-sigmoid, channel = class_id - 1
///   center_offset  [2, H, W]    (dx, dy) signed sub-cell displacement
///   object_size    [2, H, W]    (w, h) in heatmap cells
///   kp_regression  [2G, H, W]   (dx, dy) from the center cell, channels 2g, 2g+1
///   kp_heatmap     [G, H, W]    post-sigmoid
///   kp_offset      [2, H, W]    (dx, dy) signed sub-cell displacement
struct RawOutputs {
    Tensor center_heatmap;
    Tensor center_offset;
    Tensor object_size;
    Tensor kp_regression;
    Tensor kp_heatmap;
    Tensor kp_offset;
    int stride = 4;
    ImageSize input_size;

    std::size_t height() const { return center_heatmap.height(); }
    std::size_t width() const { return center_heatmap.width(); }
    std::size_t group_count() const { return kp_heatmap.channels(); }
    std::size_t total_channels() const;

    /// Zero-initialized outputs with all heads shaped for `groups` channels.
    static RawOutputs zeros(std::size_t groups, std::size_t height, std::size_t width,
                            int stride, ImageSize input_size);
};

/// 13 + 2 + 2 + 2G + G + 2.
constexpr std::size_t head_channel_count(std::size_t groups) { return 3 * groups + 19; }

/// Checks shapes against `groups`, heatmap ranges and stride. Throws
/// ShapeMismatch naming the head and the expected dims.
void validate_raw_outputs(const RawOutputs& raw, std::size_t groups);

/// Reads a manifest JSON and the six tensor files it references (paths
/// relative to the manifest's directory).
RawOutputs load_raw_outputs(const std::filesystem::path& manifest_path, const Schema& schema);

/// Writes the six tensors plus manifest.json into `dir`. The manifest may carry
/// an optional image_id.
void save_raw_outputs(const std::filesystem::path& dir, const RawOutputs& raw,
                      long long image_id = -1);

}  // namespace deepmark
