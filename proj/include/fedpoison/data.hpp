#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace fedpoison {

struct LabeledExample {
    std::vector<double> pixels;  // row-major, values in [0,1]
    int label = 0;
};

// Row-major pixel matrix, one example per row.
struct Dataset {
    int height = 0;
    int width = 0;
    int num_classes = 10;
    std::vector<double> pixels;
    std::vector<int> labels;

    std::size_t size() const { return labels.size(); }
    int dim() const { return height * width; }
    const double* row(std::size_t i) const { return pixels.data() + i * static_cast<std::size_t>(dim()); }
    double* row(std::size_t i) { return pixels.data() + i * static_cast<std::size_t>(dim()); }
    LabeledExample example(std::size_t i) const;
    void push_back(const LabeledExample& e);
    Dataset subset(const std::vector<std::size_t>& idx) const;
    Dataset empty_like() const;
};

// Average pooling by an integer factor (28x28 -> 14x14 for factor 2).
Dataset downsample(const Dataset& ds, int factor);

// ---- IDX ----

struct MalformedHeader : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct TruncatedPayload : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct CountMismatch : std::runtime_error {
    using std::runtime_error::runtime_error;
};

using Bytes = std::vector<unsigned char>;

Dataset parse_idx(const Bytes& image_bytes, const Bytes& label_bytes, int num_classes = 10);
Bytes read_file_bytes(const std::string& path);
Dataset load_idx(const std::string& image_path, const std::string& label_path, int downsample_factor = 1);

// ---- partitioning ----

enum class PartitionMode { IID, Dirichlet, LabelShard };

struct PartitionSpec {
    PartitionMode mode = PartitionMode::IID;
    double alpha = 0.5;
    int shards_per_client = 2;
    int n_clients = 20;
    std::uint64_t seed = 0;
};

struct EmptyShard : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Returns example indices per client; a disjoint exact cover of [0, labels.size()).
std::vector<std::vector<std::size_t>> partition(const std::vector<int>& labels, int num_classes,
                                                const PartitionSpec& spec);

// ---- poisoning ----

struct Rect {
    int row = 0;
    int col = 0;
    int height = 4;
    int width = 4;
};

struct IndexOutOfRange : std::out_of_range {
    using std::out_of_range::out_of_range;
};

struct TriggerSpec {
    Rect shape;
    double pixel_value = 1.0;
    int target_label = 7;
    int n_local = 4;
    double poison_rate = 0.5;

    // Horizontal strip `index` of the global rectangle.
    Rect local_rect(int index) const;
    void validate(int height, int width) const;
};

void apply_rect(double* pixels, int width, const Rect& r, double value);
LabeledExample inject_trigger(const LabeledExample& ex, const TriggerSpec& trig, int height, int width,
                              std::optional<int> local_index = std::nullopt);

// Number of examples a rate touches out of `count`.
std::size_t poison_count(double rate, std::size_t count);

// Poisons the first ceil(rate*|shard|) examples of a seeded shuffle. Order of
// the returned shard matches the input.
Dataset poison_shard(const Dataset& shard, const TriggerSpec& trig, std::optional<int> local_index,
                     std::uint64_t seed);

struct FlipMode {
    enum Kind { UniformFlip, ClassBias };
    Kind kind = UniformFlip;
    int source = -1;  // class bias: -1 means every non-target class
    int target = 7;
    double rate = 0.5;
};

Dataset flip_labels(const Dataset& shard, const FlipMode& mode, std::uint64_t seed);

}  // namespace fedpoison
