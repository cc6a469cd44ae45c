#include "sthl/run_config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "sthl/errors.hpp"

namespace sthl {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key " + key + ": '" + value + "' is not a number");
    }
}

long long parse_int(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const long long v = std::stoll(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key " + key + ": '" + value + "' is not an integer");
    }
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const unsigned long long v = std::stoull(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key " + key + ": '" + value +
                          "' is not an unsigned integer");
    }
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw ConfigError("config key " + key + ": '" + value + "' is not a boolean");
}

std::vector<int> parse_int_list(const std::string& key, const std::string& value) {
    std::vector<int> out;
    if (trim(value).empty()) return out;
    std::stringstream ss(value);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        out.push_back(static_cast<int>(parse_int(key, trim(cell))));
    }
    return out;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fmt_list(const std::vector<int>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(v[i]);
    }
    return out;
}

}  // namespace

void RunConfig::require(const std::string& key) const {
    if (!has(key)) throw ConfigError("config is missing required key " + key);
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file " + path.string());

    RunConfig cfg;
    std::string section;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        const auto hash_pos = line.find('#');
        if (hash_pos != std::string::npos) line.erase(hash_pos);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') {
                throw ConfigError(path.string() + ":" + std::to_string(lineno) +
                                  ": malformed section header");
            }
            section = trim(line.substr(1, line.size() - 2));
            if (section != "model" && section != "train" && section != "data") {
                throw ConfigError(path.string() + ":" + std::to_string(lineno) +
                                  ": unknown section [" + section + "]");
            }
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(path.string() + ":" + std::to_string(lineno) +
                              ": expected key = value");
        }
        if (section.empty()) {
            throw ConfigError(path.string() + ":" + std::to_string(lineno) +
                              ": key outside of any section");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const std::string full = section + "." + key;
        if (cfg.keys_set.count(full)) {
            throw ConfigError(path.string() + ":" + std::to_string(lineno) +
                              ": duplicate key " + full);
        }
        cfg.keys_set.insert(full);

        if (full == "model.heads") cfg.model.num_heads = int(parse_int(full, value));
        else if (full == "model.lambda") cfg.model.lambda = parse_double(full, value);
        else if (full == "model.gamma") cfg.model.gamma = parse_double(full, value);
        else if (full == "model.alpha") cfg.model.alpha = parse_double(full, value);
        else if (full == "model.update_hidden") cfg.model.update_hidden = parse_int_list(full, value);
        else if (full == "model.classifier_hidden") cfg.model.classifier_hidden = parse_int_list(full, value);
        else if (full == "model.seed") cfg.model.rng_seed = parse_u64(full, value);
        else if (full == "train.epochs") cfg.train.epochs = int(parse_int(full, value));
        else if (full == "train.batch_size") cfg.train.batch_size = int(parse_int(full, value));
        else if (full == "train.learning_rate") cfg.train.learning_rate = parse_double(full, value);
        else if (full == "train.optimizer") cfg.train.optimizer = parse_optimizer(value);
        else if (full == "train.beta1") cfg.train.beta1 = parse_double(full, value);
        else if (full == "train.beta2") cfg.train.beta2 = parse_double(full, value);
        else if (full == "train.adam_epsilon") cfg.train.adam_epsilon = parse_double(full, value);
        else if (full == "train.train_fraction") cfg.train.train_fraction = parse_double(full, value);
        else if (full == "train.val_fraction") cfg.train.val_fraction = parse_double(full, value);
        else if (full == "train.split_policy") cfg.train.split_policy = parse_split_policy(value);
        else if (full == "train.shuffle_seed") cfg.train.shuffle_seed = parse_u64(full, value);
        else if (full == "train.ablation") cfg.train.ablation = parse_ablation(value);
        else if (full == "train.threads") cfg.train.threads = int(parse_int(full, value));
        else if (full == "data.synthetic") cfg.data.synthetic = parse_bool(full, value);
        else if (full == "data.path") cfg.data.path = value;
        else if (full == "data.format") cfg.data.format = parse_dataset_format(value);
        else if (full == "data.classes") cfg.data.spec.num_classes = int(parse_int(full, value));
        else if (full == "data.timestamps") cfg.data.spec.timestamps = int(parse_int(full, value));
        else if (full == "data.channels") cfg.data.spec.channels = int(parse_int(full, value));
        else if (full == "data.features") cfg.data.spec.feature_dim = int(parse_int(full, value));
        else if (full == "data.class_separation") cfg.data.spec.class_separation = parse_double(full, value);
        else if (full == "data.noise_std") cfg.data.spec.noise_std = parse_double(full, value);
        else if (full == "data.interaction_strength") cfg.data.spec.interaction_strength = parse_double(full, value);
        else if (full == "data.seed") cfg.data.spec.rng_seed = parse_u64(full, value);
        else {
            throw ConfigError(path.string() + ":" + std::to_string(lineno) +
                              ": unknown key " + full);
        }
    }
    return cfg;
}

std::string canonical_config(const RunConfig& cfg) {
    std::map<std::string, std::string> kv;
    kv["model.heads"] = std::to_string(cfg.model.num_heads);
    kv["model.lambda"] = fmt(cfg.model.lambda);
    kv["model.gamma"] = fmt(cfg.model.gamma);
    kv["model.alpha"] = fmt(cfg.model.alpha);
    kv["model.update_hidden"] = fmt_list(cfg.model.update_hidden);
    kv["model.classifier_hidden"] = fmt_list(cfg.model.classifier_hidden);
    kv["model.seed"] = std::to_string(cfg.model.rng_seed);
    kv["train.epochs"] = std::to_string(cfg.train.epochs);
    kv["train.batch_size"] = std::to_string(cfg.train.batch_size);
    kv["train.learning_rate"] = fmt(cfg.train.learning_rate);
    kv["train.optimizer"] = optimizer_name(cfg.train.optimizer);
    kv["train.beta1"] = fmt(cfg.train.beta1);
    kv["train.beta2"] = fmt(cfg.train.beta2);
    kv["train.adam_epsilon"] = fmt(cfg.train.adam_epsilon);
    kv["train.train_fraction"] = fmt(cfg.train.train_fraction);
    kv["train.val_fraction"] = fmt(cfg.train.val_fraction);
    kv["train.split_policy"] = split_policy_name(cfg.train.split_policy);
    kv["train.shuffle_seed"] = std::to_string(cfg.train.shuffle_seed);
    kv["train.ablation"] = ablation_name(cfg.train.ablation);
    kv["train.threads"] = std::to_string(cfg.train.threads);
    kv["data.synthetic"] = cfg.data.synthetic ? "1" : "0";
    kv["data.path"] = cfg.data.path;
    kv["data.format"] = cfg.data.format == DatasetFormat::dense_binary ? "dense-binary"
                                                                       : "csv-manifest";
    kv["data.classes"] = std::to_string(cfg.data.spec.num_classes);
    kv["data.timestamps"] = std::to_string(cfg.data.spec.timestamps);
    kv["data.channels"] = std::to_string(cfg.data.spec.channels);
    kv["data.features"] = std::to_string(cfg.data.spec.feature_dim);
    kv["data.class_separation"] = fmt(cfg.data.spec.class_separation);
    kv["data.noise_std"] = fmt(cfg.data.spec.noise_std);
    kv["data.interaction_strength"] = fmt(cfg.data.spec.interaction_strength);
    kv["data.seed"] = std::to_string(cfg.data.spec.rng_seed);

    std::string out;
    for (const auto& [key, value] : kv) {
        out += key;
        out += "=";
        out += value;
        out += "\n";
    }
    return out;
}

std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::uint64_t config_hash(const RunConfig& cfg) {
    return fnv1a64(canonical_config(cfg));
}

}  // namespace sthl
