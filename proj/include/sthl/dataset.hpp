#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sthl/linalg.hpp"

namespace sthl {

// One training sample: the N channels at timestamp t plus the same channels
// one step earlier.
struct SamplePair {
    Matrix current;   // N x d
    Matrix previous;  // N x d
    int label = 0;
};

// T timestamps of N channels with d features each, one label per timestamp.
struct WindowedDataset {
    std::vector<Matrix> features;  // T entries, each N x d
    std::vector<int> labels;       // length T, values in [0, num_classes)
    int num_classes = 0;
    std::vector<std::string> channel_names;  // length N

    std::size_t timestamps() const { return features.size(); }
    std::size_t channels() const { return features.empty() ? 0 : features[0].rows(); }
    std::size_t feature_dim() const { return features.empty() ? 0 : features[0].cols(); }

    // Throws DataError naming the offending index on any invariant violation.
    void validate() const;
};

struct SyntheticSpec {
    int num_classes = 5;
    int timestamps = 200;  // T
    int channels = 10;     // N
    int feature_dim = 16;  // d
    double class_separation = 3.0;
    double noise_std = 0.5;
    double interaction_strength = 0.4;  // fraction mixed in from the partner channel at t-1
    std::uint64_t rng_seed = 7;

    void validate() const;
};

enum class DatasetFormat { dense_binary, csv_manifest };

// Labeled signal generator. Each timestamp draws a class label and every
// channel emits its pattern for that class; a fraction interaction_strength of
// each channel is replaced by the previous timestamp's pattern of a partner
// channel. The per-channel pattern banks are rotations of one shared bank, so
// the mixed-in history imitates another class unless a model reads the
// previous timestamp. Pure function of the spec.
WindowedDataset generate_synthetic(const SyntheticSpec& spec);

// Pair k holds (features[k+1], features[k], labels[k+1]); timestamp 0 only
// ever serves as history.
std::vector<SamplePair> make_pairs(const WindowedDataset& ds);

WindowedDataset load_dataset(const std::filesystem::path& path, DatasetFormat format);
void save_dataset(const WindowedDataset& ds, const std::filesystem::path& path,
                  DatasetFormat format);

DatasetFormat parse_dataset_format(const std::string& name);

}  // namespace sthl
