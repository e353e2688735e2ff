#include "mmreg/error.hpp"
#include "mmreg/features.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace mmreg {

namespace {

constexpr std::uint32_t kVersion = 1;
constexpr const char* kShapeMismatch = "shape/length mismatch";

class Reader {
public:
    explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = static_cast<std::uint32_t>(bytes_[pos_]) |
                          static_cast<std::uint32_t>(bytes_[pos_ + 1]) << 8 |
                          static_cast<std::uint32_t>(bytes_[pos_ + 2]) << 16 |
                          static_cast<std::uint32_t>(bytes_[pos_ + 3]) << 24;
        pos_ += 4;
        return v;
    }

    float f32() { return std::bit_cast<float>(u32()); }

    std::size_t remaining() const { return bytes_.size() - pos_; }

    void need(std::size_t n) const {
        if (remaining() < n) throw Error(kShapeMismatch);
    }

private:
    const std::vector<std::uint8_t>& bytes_;
    std::size_t pos_ = 4;
};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

}  // namespace

FeatureStack decode_feature_stack(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), "FMAP", 4) != 0) throw Error("bad magic");
    Reader in(bytes);
    if (in.u32() != kVersion) throw Error("version mismatch");
    FeatureStack stack;
    stack.source_w = in.u32();
    stack.source_h = in.u32();
    const std::uint32_t count = in.u32();
    if (count == 0) throw Error("feature stack has no maps");
    if (stack.source_w == 0 || stack.source_h == 0) throw Error("zero source size");

    struct Header {
        std::uint32_t scale_id, channels, grid_h, grid_w;
    };
    std::vector<Header> headers;
    std::uint64_t total = 0;
    for (std::uint32_t m = 0; m < count; ++m) {
        in.need(16);
        Header hdr{in.u32(), in.u32(), in.u32(), in.u32()};
        const std::uint64_t n = std::uint64_t{hdr.channels} * hdr.grid_h * hdr.grid_w;
        if (n == 0) throw Error(kShapeMismatch);
        total += n;
        headers.push_back(hdr);
    }
    if (total * 4 != in.remaining()) throw Error(kShapeMismatch);

    for (const auto& hdr : headers) {
        FeatureMapf map(hdr.scale_id, static_cast<int>(hdr.channels), static_cast<int>(hdr.grid_h),
                        static_cast<int>(hdr.grid_w));
        for (Eigen::Index c = 0; c < map.values.rows(); ++c) {
            for (Eigen::Index cell = 0; cell < map.values.cols(); ++cell) {
                const float v = in.f32();
                if (!std::isfinite(v)) throw Error("non-finite value in feature map");
                map.values(c, cell) = v;
            }
        }
        stack.maps.push_back(std::move(map));
    }
    return stack;
}

FeatureStack read_feature_stack(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read " + path.string());
    std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    return decode_feature_stack(bytes);
}

std::vector<std::uint8_t> encode_feature_stack(const FeatureStack& stack) {
    if (stack.maps.empty()) throw Error("feature stack has no maps");
    std::vector<std::uint8_t> out{'F', 'M', 'A', 'P'};
    put_u32(out, kVersion);
    put_u32(out, stack.source_w);
    put_u32(out, stack.source_h);
    put_u32(out, static_cast<std::uint32_t>(stack.maps.size()));
    for (const auto& m : stack.maps) {
        put_u32(out, m.scale_id);
        put_u32(out, static_cast<std::uint32_t>(m.channels()));
        put_u32(out, static_cast<std::uint32_t>(m.grid_h));
        put_u32(out, static_cast<std::uint32_t>(m.grid_w));
    }
    for (const auto& m : stack.maps) {
        if (m.values.cols() != m.cells()) throw Error(kShapeMismatch);
        for (Eigen::Index c = 0; c < m.values.rows(); ++c)
            for (Eigen::Index cell = 0; cell < m.values.cols(); ++cell)
                put_u32(out, std::bit_cast<std::uint32_t>(m.values(c, cell)));
    }
    return out;
}

void write_feature_stack(const FeatureStack& stack, const std::filesystem::path& path) {
    const auto bytes = encode_feature_stack(stack);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("cannot write " + path.string());
}

}  // namespace mmreg
