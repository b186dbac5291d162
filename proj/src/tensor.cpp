#include "deepmark/tensor.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "deepmark/error.hpp"
#include "deepmark/eval.hpp"
#include "deepmark/schema.hpp"

namespace deepmark {

namespace {

constexpr std::uint32_t kVersion = 1;
constexpr std::uint8_t kDtypeF32 = 1;
constexpr std::size_t kFixedHeader = 12;

std::size_t checked_product(const std::vector<std::size_t>& dims) {
    if (dims.empty()) throw Error(ErrorCode::InvalidArgument, "tensor needs at least one dim");
    std::size_t n = 1;
    for (std::size_t d : dims) {
        if (d == 0) throw Error(ErrorCode::InvalidArgument, "tensor dims must be positive");
        if (n > std::numeric_limits<std::size_t>::max() / d) {
            throw Error(ErrorCode::InvalidArgument, "tensor element count overflows");
        }
        n *= d;
    }
    return n;
}

std::uint32_t load_u32(std::span<const std::byte> b, std::size_t off) {
    return static_cast<std::uint32_t>(b[off]) | (static_cast<std::uint32_t>(b[off + 1]) << 8) |
           (static_cast<std::uint32_t>(b[off + 2]) << 16) |
           (static_cast<std::uint32_t>(b[off + 3]) << 24);
}

void store_u32(std::vector<std::byte>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xFFu));
}

std::string dims_string(const std::vector<std::size_t>& dims) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < dims.size(); ++i) os << (i ? "," : "") << dims[i];
    os << ']';
    return os.str();
}

std::string at_offset(std::size_t off) { return " at byte offset " + std::to_string(off); }

}  // namespace

Tensor::Tensor(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
    data_.assign(checked_product(dims_), 0.0f);
}

Tensor::Tensor(std::vector<std::size_t> dims, std::vector<float> data)
    : dims_(std::move(dims)), data_(std::move(data)) {
    if (data_.size() != checked_product(dims_)) {
        throw Error(ErrorCode::ShapeMismatch, "data length " + std::to_string(data_.size()) +
                                                  " does not match dims " + dims_string(dims_));
    }
}

std::span<float> Tensor::channel(std::size_t c) {
    const std::size_t plane = dims_.at(1) * dims_.at(2);
    return std::span<float>(data_).subspan(c * plane, plane);
}

std::span<const float> Tensor::channel(std::size_t c) const {
    const std::size_t plane = dims_.at(1) * dims_.at(2);
    return std::span<const float>(data_).subspan(c * plane, plane);
}

Tensor read_tensor(std::span<const std::byte> bytes) {
    if (bytes.size() < kFixedHeader) {
        throw Error(ErrorCode::TruncatedData, "header needs 12 bytes, got " +
                                                  std::to_string(bytes.size()) +
                                                  at_offset(bytes.size()));
    }
    if (bytes[0] != std::byte{'D'} || bytes[1] != std::byte{'M'} || bytes[2] != std::byte{'T'} ||
        bytes[3] != std::byte{'F'}) {
        throw Error(ErrorCode::BadMagic, "expected \"DMTF\"" + at_offset(0));
    }
    if (const auto version = load_u32(bytes, 4); version != kVersion) {
        throw Error(ErrorCode::UnsupportedVersion,
                    "version " + std::to_string(version) + at_offset(4));
    }
    if (const auto dtype = static_cast<std::uint8_t>(bytes[8]); dtype != kDtypeF32) {
        throw Error(ErrorCode::UnsupportedDtype, "dtype " + std::to_string(dtype) + at_offset(8));
    }
    const std::size_t ndim = static_cast<std::uint8_t>(bytes[9]);
    if (ndim == 0) throw Error(ErrorCode::InvalidArgument, "ndim is 0" + at_offset(9));
    const std::size_t header = kFixedHeader + 4 * ndim;
    if (bytes.size() < header) {
        throw Error(ErrorCode::TruncatedData, "dims need " + std::to_string(header) +
                                                  " header bytes" + at_offset(bytes.size()));
    }
    std::vector<std::size_t> dims(ndim);
    for (std::size_t i = 0; i < ndim; ++i) {
        dims[i] = load_u32(bytes, kFixedHeader + 4 * i);
        if (dims[i] == 0) {
            throw Error(ErrorCode::InvalidArgument, "zero dim" + at_offset(kFixedHeader + 4 * i));
        }
    }
    const std::size_t count = checked_product(dims);
    if (count > (bytes.size() - header) / 4) {
        throw Error(ErrorCode::TruncatedData, "payload needs " + std::to_string(count * 4) +
                                                  " bytes, got " +
                                                  std::to_string(bytes.size() - header) +
                                                  at_offset(bytes.size()));
    }
    if (bytes.size() != header + count * 4) {
        throw Error(ErrorCode::InvalidArgument, "trailing bytes" + at_offset(header + count * 4));
    }
    std::vector<float> data(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t off = header + 4 * i;
        data[i] = std::bit_cast<float>(load_u32(bytes, off));
        if (!std::isfinite(data[i])) {
            throw Error(ErrorCode::NonFiniteValue, "element " + std::to_string(i) + at_offset(off));
        }
    }
    return Tensor(std::move(dims), std::move(data));
}

std::vector<std::byte> write_tensor(const Tensor& t) {
    std::vector<std::byte> out;
    out.reserve(kFixedHeader + 4 * t.rank() + 4 * t.size());
    for (char c : {'D', 'M', 'T', 'F'}) out.push_back(static_cast<std::byte>(c));
    store_u32(out, kVersion);
    out.push_back(std::byte{kDtypeF32});
    out.push_back(static_cast<std::byte>(t.rank()));
    out.push_back(std::byte{0});
    out.push_back(std::byte{0});
    for (std::size_t d : t.dims()) store_u32(out, static_cast<std::uint32_t>(d));
    for (float v : t.data()) store_u32(out, std::bit_cast<std::uint32_t>(v));
    return out;
}

Tensor read_tensor_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return read_tensor(std::as_bytes(std::span<const char>(raw)));
    } catch (const Error& e) {
        throw Error(e.code(), path.string() + ": " + e.message());
    }
}

void write_tensor_file(const std::filesystem::path& path, const Tensor& t) {
    const auto bytes = write_tensor(t);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::size_t RawOutputs::total_channels() const {
    return center_heatmap.channels() + center_offset.channels() + object_size.channels() +
           kp_regression.channels() + kp_heatmap.channels() + kp_offset.channels();
}

RawOutputs RawOutputs::zeros(std::size_t groups, std::size_t height, std::size_t width, int stride,
                             ImageSize input_size) {
    RawOutputs r;
    r.center_heatmap = Tensor({kNumClasses, height, width});
    r.center_offset = Tensor({2, height, width});
    r.object_size = Tensor({2, height, width});
    r.kp_regression = Tensor({2 * groups, height, width});
    r.kp_heatmap = Tensor({groups, height, width});
    r.kp_offset = Tensor({2, height, width});
    r.stride = stride;
    r.input_size = input_size;
    return r;
}

namespace {

struct HeadRef {
    const char* name;
    Tensor RawOutputs::*member;
};

constexpr HeadRef kHeads[] = {
    {"center_heatmap", &RawOutputs::center_heatmap}, {"center_offset", &RawOutputs::center_offset},
    {"object_size", &RawOutputs::object_size},       {"kp_regression", &RawOutputs::kp_regression},
    {"kp_heatmap", &RawOutputs::kp_heatmap},         {"kp_offset", &RawOutputs::kp_offset},
};

std::size_t expected_channels(std::string_view head, std::size_t groups) {
    if (head == "center_heatmap") return kNumClasses;
    if (head == "kp_regression") return 2 * groups;
    if (head == "kp_heatmap") return groups;
    return 2;
}

void check_unit_range(const Tensor& t, const char* head) {
    const auto data = t.data();
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (!(data[i] >= 0.0f && data[i] <= 1.0f)) {
            throw Error(ErrorCode::InvalidArgument,
                        std::string(head) + " value " + std::to_string(data[i]) + " at element " +
                            std::to_string(i) + " is outside [0, 1]");
        }
    }
}

}  // namespace

void validate_raw_outputs(const RawOutputs& raw, std::size_t groups) {
    if (raw.center_heatmap.rank() != 3) {
        throw Error(ErrorCode::ShapeMismatch, "center_heatmap must be rank 3 [13, H, W], got " +
                                                  dims_string(raw.center_heatmap.dims()));
    }
    const std::size_t h = raw.center_heatmap.height();
    const std::size_t w = raw.center_heatmap.width();
    for (const auto& head : kHeads) {
        const Tensor& t = raw.*head.member;
        const std::vector<std::size_t> want{expected_channels(head.name, groups), h, w};
        if (t.dims() != want) {
            throw Error(ErrorCode::ShapeMismatch, std::string(head.name) + " has dims " +
                                                      dims_string(t.dims()) + ", expected " +
                                                      dims_string(want));
        }
    }
    if (raw.stride < 1) throw Error(ErrorCode::InvalidArgument, "stride must be >= 1");
    check_unit_range(raw.center_heatmap, "center_heatmap");
    check_unit_range(raw.kp_heatmap, "kp_heatmap");
}

RawOutputs load_raw_outputs(const std::filesystem::path& manifest_path, const Schema& schema) {
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(read_text_file(manifest_path));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, manifest_path.string() + ": " + e.what());
    }
    const auto base = manifest_path.parent_path();
    RawOutputs raw;
    for (const auto& head : kHeads) {
        if (!manifest.contains(head.name) || !manifest[head.name].is_string()) {
            throw Error(ErrorCode::MissingHead, manifest_path.string() + ": no entry for " + head.name);
        }
        const auto file = base / manifest[head.name].get<std::string>();
        if (!std::filesystem::exists(file)) {
            throw Error(ErrorCode::MissingHead,
                        std::string(head.name) + " file " + file.string() + " does not exist");
        }
        raw.*head.member = read_tensor_file(file);
    }
    try {
        raw.stride = manifest.at("stride").get<int>();
        raw.input_size = {manifest.at("input_width").get<int>(),
                          manifest.at("input_height").get<int>()};
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, manifest_path.string() + ": " + e.what());
    }
    validate_raw_outputs(raw, schema.group_count());
    return raw;
}

void save_raw_outputs(const std::filesystem::path& dir, const RawOutputs& raw, long long image_id) {
    std::filesystem::create_directories(dir);
    nlohmann::ordered_json manifest;
    for (const auto& head : kHeads) {
        const std::string file = std::string(head.name) + ".dmt";
        write_tensor_file(dir / file, raw.*head.member);
        manifest[head.name] = file;
    }
    manifest["stride"] = raw.stride;
    manifest["input_width"] = raw.input_size.width;
    manifest["input_height"] = raw.input_size.height;
    if (image_id >= 0) manifest["image_id"] = image_id;
    write_text_file(dir / "manifest.json", manifest.dump(1) + "\n");
}

}  // namespace deepmark
