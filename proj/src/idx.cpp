#include <fstream>
#include <iterator>

#include "fedpoison/data.hpp"

namespace fedpoison {

namespace {

std::uint32_t be32(const Bytes& b, std::size_t off) {
    return (std::uint32_t(b[off]) << 24) | (std::uint32_t(b[off + 1]) << 16) | (std::uint32_t(b[off + 2]) << 8) |
           std::uint32_t(b[off + 3]);
}

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

}  // namespace

Dataset parse_idx(const Bytes& image_bytes, const Bytes& label_bytes, int num_classes) {
    if (image_bytes.size() < 16) throw MalformedHeader("image file shorter than its 16-byte header");
    if (be32(image_bytes, 0) != kImageMagic) throw MalformedHeader("bad image magic");
    if (label_bytes.size() < 8) throw MalformedHeader("label file shorter than its 8-byte header");
    if (be32(label_bytes, 0) != kLabelMagic) throw MalformedHeader("bad label magic");

    const std::size_t n = be32(image_bytes, 4);
    const std::size_t rows = be32(image_bytes, 8);
    const std::size_t cols = be32(image_bytes, 12);
    const std::size_t nl = be32(label_bytes, 4);
    if (rows == 0 || cols == 0) throw MalformedHeader("zero image dimension");

    const std::size_t img_payload = n * rows * cols;
    if (image_bytes.size() - 16 < img_payload) throw TruncatedPayload("image payload shorter than header claims");
    if (image_bytes.size() - 16 > img_payload) throw MalformedHeader("trailing bytes after image payload");
    if (label_bytes.size() - 8 < nl) throw TruncatedPayload("label payload shorter than header claims");
    if (label_bytes.size() - 8 > nl) throw MalformedHeader("trailing bytes after label payload");
    if (n != nl) throw CountMismatch("image count " + std::to_string(n) + " != label count " + std::to_string(nl));

    Dataset ds;
    ds.height = static_cast<int>(rows);
    ds.width = static_cast<int>(cols);
    ds.num_classes = num_classes;
    ds.pixels.resize(img_payload);
    for (std::size_t k = 0; k < img_payload; ++k) ds.pixels[k] = image_bytes[16 + k] / 255.0;
    ds.labels.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        int y = label_bytes[8 + k];
        if (y >= num_classes) throw MalformedHeader("label " + std::to_string(y) + " out of range");
        ds.labels[k] = y;
    }
    return ds;
}

Bytes read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

Dataset load_idx(const std::string& image_path, const std::string& label_path, int downsample_factor) {
    Dataset ds = parse_idx(read_file_bytes(image_path), read_file_bytes(label_path));
    if (downsample_factor > 1) ds = downsample(ds, downsample_factor);
    return ds;
}

}  // namespace fedpoison
