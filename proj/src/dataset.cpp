#include "sthl/dataset.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "sthl/errors.hpp"
#include "sthl/rng.hpp"

namespace sthl {

namespace {

constexpr char kMagic[5] = {'S', 'T', 'H', 'L', '1'};

void append_u32_le(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void append_f64_le(std::string& out, double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

std::uint32_t read_u32_le(const unsigned char* p) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(p[i]) << (8 * i);
    return v;
}

double read_f64_le(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(p[i]) << (8 * i);
    return std::bit_cast<double>(v);
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace

void SyntheticSpec::validate() const {
    if (num_classes < 1) throw ConfigError("synthetic spec: num_classes must be >= 1");
    if (timestamps < 2) throw ConfigError("synthetic spec: timestamps must be >= 2");
    if (channels < 2) throw ConfigError("synthetic spec: channels must be >= 2");
    if (feature_dim < 2) throw ConfigError("synthetic spec: feature_dim must be >= 2");
    if (class_separation < 0.0) throw ConfigError("synthetic spec: class_separation must be >= 0");
    if (noise_std < 0.0) throw ConfigError("synthetic spec: noise_std must be >= 0");
    if (interaction_strength < 0.0 || interaction_strength > 1.0) {
        throw ConfigError("synthetic spec: interaction_strength must lie in [0,1]");
    }
}

void WindowedDataset::validate() const {
    if (timestamps() < 2) {
        throw DataError("dataset needs at least 2 timestamps, got " +
                        std::to_string(timestamps()));
    }
    const std::size_t n = channels();
    const std::size_t d = feature_dim();
    if (n == 0 || d == 0) throw DataError("dataset has empty feature matrices");
    if (num_classes < 1) throw DataError("dataset num_classes must be >= 1");
    if (labels.size() != timestamps()) {
        throw DataError("dataset has " + std::to_string(labels.size()) + " labels for " +
                        std::to_string(timestamps()) + " timestamps");
    }
    if (channel_names.size() != n) {
        throw DataError("dataset has " + std::to_string(channel_names.size()) +
                        " channel names for " + std::to_string(n) + " channels");
    }
    for (std::size_t t = 0; t < timestamps(); ++t) {
        if (features[t].rows() != n || features[t].cols() != d) {
            throw DataError("feature matrix at timestamp " + std::to_string(t) +
                            " has inconsistent shape");
        }
        if (labels[t] < 0 || labels[t] >= num_classes) {
            throw DataError("label " + std::to_string(labels[t]) + " at timestamp " +
                            std::to_string(t) + " outside [0, " +
                            std::to_string(num_classes) + ")");
        }
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t k = 0; k < d; ++k) {
                if (!std::isfinite(features[t](i, k))) {
                    throw DataError("non-finite feature at (t=" + std::to_string(t) +
                                    ", channel=" + std::to_string(i) +
                                    ", k=" + std::to_string(k) + ")");
                }
            }
        }
    }
}

WindowedDataset generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    const int C = spec.num_classes;
    const int T = spec.timestamps;
    const int N = spec.channels;
    const int d = spec.feature_dim;
    Rng rng(spec.rng_seed);

    // Class patterns come from a shared bank of C base vectors; channel ch
    // reads the bank at a random per-channel offset. The partner-channel
    // history mixed into a channel therefore coincides with one of that
    // channel's own class patterns, so only models that actually read the
    // previous timestamp can tell the mixed-in component from a genuine class.
    std::vector<Vec> base(C, Vec(d));
    const double pattern_scale = spec.class_separation / std::sqrt(double(d));
    for (int c = 0; c < C; ++c) {
        for (int k = 0; k < d; ++k) base[c][k] = pattern_scale * rng.normal();
    }
    std::vector<int> offsets(N);
    for (int i = 0; i < N; ++i) offsets[i] = static_cast<int>(rng.below(C));
    // per-channel gain vectors keep the channels heterogeneous; unit mean
    // square so the signal-to-noise level does not drift with the gains
    std::vector<Vec> gains(N, Vec(d));
    for (int i = 0; i < N; ++i) {
        for (int k = 0; k < d; ++k) {
            gains[i][k] = (1.0 + 0.25 * rng.normal()) / std::sqrt(1.0 + 0.25 * 0.25);
        }
    }

    WindowedDataset ds;
    ds.num_classes = C;
    ds.labels.resize(T);
    for (int t = 0; t < T; ++t) ds.labels[t] = static_cast<int>(rng.below(C));

    const double mix = spec.interaction_strength;
    ds.features.assign(T, Matrix(N, d));
    for (int t = 0; t < T; ++t) {
        const int label = ds.labels[t];
        const int prev_label = ds.labels[t > 0 ? t - 1 : 0];
        for (int i = 0; i < N; ++i) {
            const int partner = (i + 1) % N;
            // the mixed-in history is the partner's class content re-expressed
            // in this channel's gain basis, so it is indistinguishable from one
            // of the channel's own class patterns without the previous
            // timestamp
            const Vec& own = base[(label + offsets[i]) % C];
            const Vec& hist = base[(prev_label + offsets[partner]) % C];
            for (int k = 0; k < d; ++k) {
                ds.features[t](i, k) =
                    gains[i][k] * ((1.0 - mix) * own[k] + mix * hist[k]) +
                    spec.noise_std * rng.normal();
            }
        }
    }

    ds.channel_names.resize(N);
    for (int i = 0; i < N; ++i) ds.channel_names[i] = "ch" + std::to_string(i);
    ds.validate();
    return ds;
}

std::vector<SamplePair> make_pairs(const WindowedDataset& ds) {
    ds.validate();
    std::vector<SamplePair> pairs;
    pairs.reserve(ds.timestamps() - 1);
    for (std::size_t t = 1; t < ds.timestamps(); ++t) {
        pairs.push_back({ds.features[t], ds.features[t - 1], ds.labels[t]});
    }
    return pairs;
}

void save_dataset(const WindowedDataset& ds, const std::filesystem::path& path,
                  DatasetFormat format) {
    ds.validate();
    std::string out;
    if (format == DatasetFormat::dense_binary) {
        out.append(kMagic, sizeof kMagic);
        append_u32_le(out, static_cast<std::uint32_t>(ds.timestamps()));
        append_u32_le(out, static_cast<std::uint32_t>(ds.channels()));
        append_u32_le(out, static_cast<std::uint32_t>(ds.feature_dim()));
        append_u32_le(out, static_cast<std::uint32_t>(ds.num_classes));
        for (const Matrix& m : ds.features) {
            for (double v : m.flat()) append_f64_le(out, v);
        }
        for (int label : ds.labels) append_u32_le(out, static_cast<std::uint32_t>(label));
    } else {
        std::ostringstream csv;
        csv << "t,channel,label";
        for (std::size_t k = 0; k < ds.feature_dim(); ++k) csv << ",f" << k;
        csv << "\n";
        for (std::size_t t = 0; t < ds.timestamps(); ++t) {
            for (std::size_t i = 0; i < ds.channels(); ++i) {
                csv << t << "," << ds.channel_names[i] << "," << ds.labels[t];
                for (double v : ds.features[t].row(i)) csv << "," << format_double(v);
                csv << "\n";
            }
        }
        out = csv.str();
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot open " + path.string() + " for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw DataError("write to " + path.string() + " failed");
}

namespace {

WindowedDataset load_dense_binary(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open dataset file " + path.string());
    std::string raw((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    const auto* p = reinterpret_cast<const unsigned char*>(raw.data());

    if (raw.size() < sizeof kMagic + 16 ||
        std::memcmp(raw.data(), kMagic, sizeof kMagic) != 0) {
        throw DataError(path.string() + " is not a dense-binary dataset (bad magic)");
    }
    const std::size_t T = read_u32_le(p + 5);
    const std::size_t N = read_u32_le(p + 9);
    const std::size_t d = read_u32_le(p + 13);
    const std::size_t C = read_u32_le(p + 17);
    const std::size_t expected = sizeof kMagic + 16 + T * N * d * 8 + T * 4;
    if (raw.size() != expected) {
        throw DataError("payload shape mismatch in " + path.string() + ": header (T=" +
                        std::to_string(T) + ", N=" + std::to_string(N) + ", d=" +
                        std::to_string(d) + ") needs " + std::to_string(expected) +
                        " bytes, file has " + std::to_string(raw.size()));
    }

    WindowedDataset ds;
    ds.num_classes = static_cast<int>(C);
    ds.features.assign(T, Matrix(N, d));
    std::size_t off = sizeof kMagic + 16;
    for (std::size_t t = 0; t < T; ++t) {
        for (double& v : ds.features[t].flat()) {
            v = read_f64_le(p + off);
            off += 8;
        }
    }
    ds.labels.resize(T);
    for (std::size_t t = 0; t < T; ++t) {
        ds.labels[t] = static_cast<int>(read_u32_le(p + off));
        off += 4;
    }
    ds.channel_names.resize(N);
    for (std::size_t i = 0; i < N; ++i) ds.channel_names[i] = "ch" + std::to_string(i);
    ds.validate();
    return ds;
}

WindowedDataset load_csv_manifest(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open dataset file " + path.string());
    std::string line;
    if (!std::getline(f, line)) throw DataError(path.string() + " is empty");

    const auto header = split_csv_line(line);
    if (header.size() < 4 || header[0] != "t" || header[1] != "channel" ||
        header[2] != "label") {
        throw DataError(path.string() + ": expected header t,channel,label,f0..");
    }
    const std::size_t d = header.size() - 3;
    for (std::size_t k = 0; k < d; ++k) {
        if (header[3 + k] != "f" + std::to_string(k)) {
            throw DataError(path.string() + ": feature column " + std::to_string(k) +
                            " is named '" + header[3 + k] + "', expected f" +
                            std::to_string(k));
        }
    }

    struct Row {
        std::size_t t;
        std::string channel;
        int label;
        Vec feats;
    };
    std::vector<Row> rows;
    std::size_t lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != header.size()) {
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": has " +
                            std::to_string(cells.size()) + " cells, expected " +
                            std::to_string(header.size()));
        }
        Row row;
        try {
            row.t = std::stoul(cells[0]);
            row.channel = cells[1];
            row.label = std::stoi(cells[2]);
            row.feats.resize(d);
            for (std::size_t k = 0; k < d; ++k) row.feats[k] = std::stod(cells[3 + k]);
        } catch (const std::exception&) {
            throw DataError(path.string() + ":" + std::to_string(lineno) +
                            ": unparsable cell");
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw DataError(path.string() + " has no data rows");

    // Channel order is fixed by timestamp 0; every timestamp must repeat it.
    std::vector<std::string> names;
    for (const Row& row : rows) {
        if (row.t != 0) break;
        names.push_back(row.channel);
    }
    const std::size_t N = names.size();
    if (N == 0) throw DataError(path.string() + ": no rows for timestamp 0");
    if (rows.size() % N != 0) {
        throw DataError(path.string() + ": row count " + std::to_string(rows.size()) +
                        " is not a multiple of " + std::to_string(N) + " channels");
    }
    const std::size_t T = rows.size() / N;

    WindowedDataset ds;
    ds.features.assign(T, Matrix(N, d));
    ds.labels.assign(T, 0);
    ds.channel_names = names;
    int max_label = 0;
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t i = 0; i < N; ++i) {
            const Row& row = rows[t * N + i];
            if (row.t != t) {
                throw DataError(path.string() + ": expected timestamp " + std::to_string(t) +
                                " at row " + std::to_string(t * N + i + 2) + ", found " +
                                std::to_string(row.t));
            }
            if (row.channel != names[i]) {
                throw DataError(path.string() + ": timestamp " + std::to_string(t) +
                                " lists channel '" + row.channel + "' where '" + names[i] +
                                "' was expected");
            }
            if (i > 0 && row.label != ds.labels[t]) {
                throw DataError(path.string() + ": inconsistent label at timestamp " +
                                std::to_string(t));
            }
            ds.labels[t] = row.label;
            std::copy(row.feats.begin(), row.feats.end(), ds.features[t].row(i).begin());
        }
        max_label = std::max(max_label, ds.labels[t]);
    }
    ds.num_classes = max_label + 1;  // the manifest carries no class count
    ds.validate();
    return ds;
}

}  // namespace

WindowedDataset load_dataset(const std::filesystem::path& path, DatasetFormat format) {
    if (!std::filesystem::exists(path)) {
        throw DataError("dataset file does not exist: " + path.string());
    }
    return format == DatasetFormat::dense_binary ? load_dense_binary(path)
                                                 : load_csv_manifest(path);
}

DatasetFormat parse_dataset_format(const std::string& name) {
    if (name == "dense-binary") return DatasetFormat::dense_binary;
    if (name == "csv-manifest") return DatasetFormat::csv_manifest;
    throw ConfigError("unknown dataset format '" + name +
                      "' (expected dense-binary or csv-manifest)");
}

}  // namespace sthl
