#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>

#include "sthl/dataset.hpp"
#include "sthl/model.hpp"
#include "sthl/train.hpp"

namespace sthl {

struct DataConfig {
    bool synthetic = false;
    std::string path;
    DatasetFormat format = DatasetFormat::dense_binary;
    SyntheticSpec spec;
};

// One declarative run: flat key/value file with [model], [train] and [data]
// sections. Unknown keys are rejected; CLI flags override file values.
struct RunConfig {
    ModelConfig model;  // channels / feature_dim / num_classes are bound to the data later
    TrainConfig train;
    DataConfig data;
    std::set<std::string> keys_set;  // section.key names present in the file

    bool has(const std::string& key) const { return keys_set.count(key) > 0; }
    void require(const std::string& key) const;
};

RunConfig load_run_config(const std::filesystem::path& path);

// Sorted section.key=value lines of the effective config; hashed for output
// provenance.
std::string canonical_config(const RunConfig& cfg);
std::uint64_t config_hash(const RunConfig& cfg);

std::uint64_t fnv1a64(std::string_view s);

}  // namespace sthl
