#include "sthl/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "sthl/errors.hpp"
#include "sthl/rng.hpp"
#include "trace.hpp"

namespace sthl {

std::string ablation_name(Ablation a) {
    switch (a) {
        case Ablation::none: return "none";
        case Ablation::no_hyperedge: return "no_hyperedge";
        case Ablation::no_attention: return "no_attention";
    }
    return "none";
}

Ablation parse_ablation(const std::string& name) {
    if (name == "none") return Ablation::none;
    if (name == "no_hyperedge") return Ablation::no_hyperedge;
    if (name == "no_attention") return Ablation::no_attention;
    throw ConfigError("unknown ablation '" + name +
                      "' (expected none, no_hyperedge or no_attention)");
}

void ModelConfig::validate() const {
    if (channels < 2) throw ConfigError("model config: channels must be >= 2");
    if (feature_dim < 1) throw ConfigError("model config: feature_dim must be >= 1");
    if (num_classes < 1) throw ConfigError("model config: num_classes must be >= 1");
    if (num_heads < 1) throw ConfigError("model config: num_heads must be >= 1");
    if (feature_dim % num_heads != 0) {
        throw ConfigError("model config: num_heads (" + std::to_string(num_heads) +
                          ") must divide feature_dim (" + std::to_string(feature_dim) + ")");
    }
    if (alpha < 0.0 || alpha > 1.0) throw ConfigError("model config: alpha must lie in [0,1]");
    if (lambda < 0.0) throw ConfigError("model config: lambda must be >= 0");
    if (gamma < 0.0) throw ConfigError("model config: gamma must be >= 0");
    for (int h : update_hidden) {
        if (h < 1) throw ConfigError("model config: update_hidden sizes must be >= 1");
    }
    for (int h : classifier_hidden) {
        if (h < 1) throw ConfigError("model config: classifier_hidden sizes must be >= 1");
    }
}

SthlModel::SthlModel(const SthlModel& other)
    : config(other.config),
      construction(other.construction),
      attention(other.attention),
      classifier(other.classifier),
      gc_weight(other.gc_weight),
      gc_bias(other.gc_bias),
      mix_current(other.mix_current),
      mix_previous(other.mix_previous) {
    register_params();
}

SthlModel& SthlModel::operator=(const SthlModel& other) {
    if (this == &other) return *this;
    config = other.config;
    construction = other.construction;
    attention = other.attention;
    classifier = other.classifier;
    gc_weight = other.gc_weight;
    gc_bias = other.gc_bias;
    mix_current = other.mix_current;
    mix_previous = other.mix_previous;
    register_params();
    return *this;
}

SthlModel::SthlModel(SthlModel&& other) noexcept
    : config(std::move(other.config)),
      construction(std::move(other.construction)),
      attention(std::move(other.attention)),
      classifier(std::move(other.classifier)),
      gc_weight(std::move(other.gc_weight)),
      gc_bias(std::move(other.gc_bias)),
      mix_current(std::move(other.mix_current)),
      mix_previous(std::move(other.mix_previous)) {
    register_params();
    other.store.clear();  // its slots point at moved-out matrices
}

SthlModel& SthlModel::operator=(SthlModel&& other) noexcept {
    if (this == &other) return *this;
    config = std::move(other.config);
    construction = std::move(other.construction);
    attention = std::move(other.attention);
    classifier = std::move(other.classifier);
    gc_weight = std::move(other.gc_weight);
    gc_bias = std::move(other.gc_bias);
    mix_current = std::move(other.mix_current);
    mix_previous = std::move(other.mix_previous);
    register_params();
    other.store.clear();
    return *this;
}

void SthlModel::register_params() {
    store.clear();
    if (config.ablation == Ablation::no_hyperedge) {
        store.add("gc.weight", &gc_weight);
        store.add("gc.bias", &gc_bias);
        store.add("mix.current", &mix_current);
        store.add("mix.previous", &mix_previous);
    } else {
        store.add("construction.theta_spa", &construction.theta_spa);
        store.add("construction.theta_tem", &construction.theta_tem);
        store.add("construction.p_spa", &construction.p_spa);
        store.add("construction.p_tem", &construction.p_tem);
        if (config.ablation == Ablation::none) {
            for (int h = 0; h < attention.num_heads; ++h) {
                const std::string suffix = ".h" + std::to_string(h);
                store.add("attention.q_lin" + suffix, &attention.q_lin[h]);
                store.add("attention.k_lin_spa" + suffix, &attention.k_lin_spa[h]);
                store.add("attention.k_lin_tem" + suffix, &attention.k_lin_tem[h]);
                store.add("attention.theta_att_spa" + suffix, &attention.theta_att_spa[h]);
                store.add("attention.theta_att_tem" + suffix, &attention.theta_att_tem[h]);
            }
        }
        for (std::size_t l = 0; l < attention.update_mlp.layers.size(); ++l) {
            store.add("update_mlp.w" + std::to_string(l), &attention.update_mlp.layers[l].weight);
            store.add("update_mlp.b" + std::to_string(l), &attention.update_mlp.layers[l].bias);
        }
    }
    for (std::size_t l = 0; l < classifier.layers.size(); ++l) {
        store.add("classifier.w" + std::to_string(l), &classifier.layers[l].weight);
        store.add("classifier.b" + std::to_string(l), &classifier.layers[l].bias);
    }
}

namespace {

Matrix glorot(std::size_t rows, std::size_t cols, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    Matrix m(rows, cols);
    for (double& v : m.flat()) v = rng.uniform(-limit, limit);
    return m;
}

MlpParams make_mlp(std::size_t in, const std::vector<int>& hidden, std::size_t out,
                   Rng& rng) {
    MlpParams mlp;
    std::size_t prev = in;
    for (int h : hidden) {
        mlp.layers.push_back({glorot(prev, h, rng), Matrix(1, h)});
        prev = h;
    }
    mlp.layers.push_back({glorot(prev, out, rng), Matrix(1, out)});
    return mlp;
}

}  // namespace

SthlModel init_model(const ModelConfig& config) {
    config.validate();
    const std::size_t n = config.channels;
    const std::size_t d = config.feature_dim;
    const std::size_t dk = d / config.num_heads;
    Rng rng(config.rng_seed);

    SthlModel model;
    model.config = config;
    const std::vector<int> update_hidden =
        config.update_hidden.empty() ? std::vector<int>{int(d)} : config.update_hidden;
    const std::vector<int> classifier_hidden =
        config.classifier_hidden.empty() ? std::vector<int>{int(d)} : config.classifier_hidden;

    if (config.ablation == Ablation::no_hyperedge) {
        model.gc_weight = glorot(d, d, rng);
        model.gc_bias = Matrix(1, d);
        model.mix_current = Matrix(1, 1, 0.5);
        model.mix_previous = Matrix(1, 1, 0.5);
    } else {
        model.construction.theta_spa = glorot(d, d, rng);
        model.construction.theta_tem = glorot(d, d, rng);
        // start every candidate selected with coefficients summing to 1
        model.construction.p_spa = Matrix(n, n - 1, 1.0 / double(n - 1));
        model.construction.p_tem = Matrix(n, n, 1.0 / double(n));
        if (config.ablation == Ablation::none) {
            model.attention.num_heads = config.num_heads;
            for (int h = 0; h < config.num_heads; ++h) {
                model.attention.q_lin.push_back(glorot(d, dk, rng));
                model.attention.k_lin_spa.push_back(glorot(d, dk, rng));
                model.attention.k_lin_tem.push_back(glorot(d, dk, rng));
                model.attention.theta_att_spa.push_back(glorot(dk, dk, rng));
                model.attention.theta_att_tem.push_back(glorot(dk, dk, rng));
            }
        }
        model.attention.update_mlp = make_mlp(d, update_hidden, d, rng);
    }
    model.classifier = make_mlp(d, classifier_hidden, config.num_classes, rng);
    model.register_params();
    return model;
}

double cross_entropy(std::span<const double> logits, int label) {
    if (label < 0 || std::size_t(label) >= logits.size()) {
        throw DimensionError("cross_entropy: label " + std::to_string(label) +
                             " outside [0, " + std::to_string(logits.size()) + ")");
    }
    return log_sum_exp(logits) - logits[label];
}

double total_loss(std::span<const double> logits, int label, double recon_loss,
                  double alpha) {
    return alpha * recon_loss + (1.0 - alpha) * cross_entropy(logits, label);
}

Matrix pearson_adjacency(const Matrix& feats) {
    const std::size_t n = feats.rows();
    const std::size_t d = feats.cols();
    Vec mean(n), var(n);
    for (std::size_t i = 0; i < n; ++i) {
        double m = 0.0;
        for (double v : feats.row(i)) m += v;
        m /= double(d);
        double s = 0.0;
        for (double v : feats.row(i)) s += (v - m) * (v - m);
        mean[i] = m;
        var[i] = s / double(d);
    }
    Matrix adj(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            // zero-variance channels leave the correlation undefined; use 0
            const bool degenerate_i = var[i] <= (mean[i] * mean[i] + 1.0) * 1e-26;
            const bool degenerate_j = var[j] <= (mean[j] * mean[j] + 1.0) * 1e-26;
            if (degenerate_i || degenerate_j) {
                adj(i, j) = 0.0;
                continue;
            }
            double cov = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                cov += (feats(i, k) - mean[i]) * (feats(j, k) - mean[j]);
            }
            cov /= double(d);
            adj(i, j) = cov / std::sqrt(var[i] * var[j]);
        }
    }
    return adj;
}

namespace detail {

Vec mlp_forward_trace(const MlpParams& mlp, std::span<const double> x, MlpTrace& trace) {
    trace.outs.clear();
    trace.outs.emplace_back(x.begin(), x.end());
    for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
        const MlpLayer& layer = mlp.layers[l];
        Vec pre = vecmat(trace.outs.back(), layer.weight);
        axpy(1.0, layer.bias.row(0), pre);
        trace.outs.push_back(l + 1 < mlp.layers.size() ? tanh_vec(pre) : std::move(pre));
    }
    return trace.outs.back();
}

namespace {

void forward_hyperedge_paths(const SthlModel& model, const SamplePair& pair,
                             ForwardTrace& trace) {
    const int n = static_cast<int>(pair.current.rows());
    const std::size_t d = pair.current.cols();
    const ConstructionParams& cons = model.construction;

    trace.snapshot = build_snapshot(pair, cons);
    const Matrix& node_feats = trace.snapshot.node_feats;
    trace.masters.assign(n, {});
    trace.z = Matrix(n, d);
    trace.recon_loss = 0.0;

    Matrix cand_feats(n - 1, d);
    for (int i = 0; i < n; ++i) {
        MasterTrace& mt = trace.masters[i];
        mt.cand_spa = spatial_candidates(i, n);

        // reconstruction residuals over the full candidate sets
        for (int k = 0; k < n - 1; ++k) {
            std::copy(pair.current.row(mt.cand_spa[k]).begin(),
                      pair.current.row(mt.cand_spa[k]).end(), cand_feats.row(k).begin());
        }
        mt.r_spa = vecmat(pair.current.row(i), cons.theta_spa);
        for (int k = 0; k < n - 1; ++k) {
            axpy(-cons.p_spa(i, k), cand_feats.row(k), mt.r_spa);
        }
        mt.c_spa = l2_norm(mt.r_spa);
        mt.r_tem = vecmat(pair.current.row(i), cons.theta_tem);
        for (int k = 0; k < n; ++k) {
            axpy(-cons.p_tem(i, k), pair.previous.row(k), mt.r_tem);
        }
        mt.c_tem = l2_norm(mt.r_tem);

        trace.recon_loss += model.config.lambda * (mt.c_spa + mt.c_tem);
        trace.recon_loss += l1_norm(cons.p_spa.row(i)) + l1_norm(cons.p_tem.row(i));
        trace.recon_loss +=
            model.config.gamma * (l2_norm(cons.p_spa.row(i)) + l2_norm(cons.p_tem.row(i)));

        // selected candidate slots and hyperedge embeddings
        for (int k = 0; k < n - 1; ++k) {
            if (cons.p_spa(i, k) > 0.0) mt.sel_spa.push_back(k);
        }
        for (int k = 0; k < n; ++k) {
            if (cons.p_tem(i, k) > 0.0) mt.sel_tem.push_back(k);
        }
        mt.denom_spa = 1.0;
        for (std::size_t k : mt.sel_spa) mt.denom_spa += cons.p_spa(i, k);
        mt.denom_tem = 1.0;
        for (std::size_t k : mt.sel_tem) mt.denom_tem += cons.p_tem(i, k);
        mt.e_spa = hyperedge_embedding(trace.snapshot, node_feats, i);
        mt.e_tem = hyperedge_embedding(trace.snapshot, node_feats, n + i);

        // node update
        const auto master_feat = pair.current.row(i);
        if (model.config.ablation == Ablation::none) {
            const AttentionParams& att = model.attention;
            mt.update_in.clear();
            mt.update_in.reserve(d);
            mt.q.resize(att.num_heads);
            mt.k_spa.resize(att.num_heads);
            mt.k_tem.resize(att.num_heads);
            mt.w_spa.resize(att.num_heads);
            mt.w_tem.resize(att.num_heads);
            for (int h = 0; h < att.num_heads; ++h) {
                mt.q[h] = vecmat(master_feat, att.q_lin[h]);
                mt.k_spa[h] = vecmat(mt.e_spa, att.k_lin_spa[h]);
                mt.k_tem[h] = vecmat(mt.e_tem, att.k_lin_tem[h]);
                const double a_spa =
                    attention_score(master_feat, mt.e_spa, h, EdgeKind::spatial, att);
                const double a_tem =
                    attention_score(master_feat, mt.e_tem, h, EdgeKind::temporal, att);
                const auto [w_spa, w_tem] = edge_weights(a_spa, a_tem);
                mt.w_spa[h] = w_spa;
                mt.w_tem[h] = w_tem;
                for (std::size_t k = 0; k < mt.k_spa[h].size(); ++k) {
                    mt.update_in.push_back(w_spa * mt.k_spa[h][k] + w_tem * mt.k_tem[h][k]);
                }
            }
        } else {
            // no_attention: unweighted mean of the two hyperedge embeddings
            mt.update_in.resize(d);
            for (std::size_t k = 0; k < d; ++k) {
                mt.update_in[k] = 0.5 * (mt.e_spa[k] + mt.e_tem[k]);
            }
        }
        const Vec z_i =
            mlp_forward_trace(model.attention.update_mlp, mt.update_in, mt.update_trace);
        std::copy(z_i.begin(), z_i.end(), trace.z.row(i).begin());
    }
}

void forward_no_hyperedge(const SthlModel& model, const SamplePair& pair,
                          ForwardTrace& trace) {
    const std::size_t n = pair.current.rows();
    const std::size_t d = pair.current.cols();
    trace.recon_loss = 0.0;

    trace.adj_cur = pearson_adjacency(pair.current);
    trace.adj_prev = pearson_adjacency(pair.previous);
    trace.gc_in_cur = matmul(trace.adj_cur, pair.current);
    trace.gc_in_prev = matmul(trace.adj_prev, pair.previous);

    auto convolve = [&](const Matrix& gc_in) {
        Matrix s = matmul(gc_in, model.gc_weight);
        for (std::size_t i = 0; i < n; ++i) {
            axpy(1.0, model.gc_bias.row(0), s.row(i));
            const Vec act = tanh_vec(s.row(i));
            std::copy(act.begin(), act.end(), s.row(i).begin());
        }
        return s;
    };
    trace.s_cur = convolve(trace.gc_in_cur);
    trace.s_prev = convolve(trace.gc_in_prev);

    const double w_cur = model.mix_current(0, 0);
    const double w_prev = model.mix_previous(0, 0);
    trace.z = Matrix(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < d; ++k) {
            trace.z(i, k) = w_cur * trace.s_cur(i, k) + w_prev * trace.s_prev(i, k);
        }
    }
}

}  // namespace

ForwardResult run_forward(const SthlModel& model, const SamplePair& pair,
                          ForwardTrace& trace) {
    if (pair.current.rows() != std::size_t(model.config.channels) ||
        pair.current.cols() != std::size_t(model.config.feature_dim)) {
        throw DimensionError(
            "forward: sample shape (" + std::to_string(pair.current.rows()) + " x " +
            std::to_string(pair.current.cols()) + ") does not match model (N=" +
            std::to_string(model.config.channels) + ", d=" +
            std::to_string(model.config.feature_dim) + ")");
    }
    if (model.config.ablation == Ablation::no_hyperedge) {
        forward_no_hyperedge(model, pair, trace);
    } else {
        forward_hyperedge_paths(model, pair, trace);
    }
    trace.g = sorted_column_mean(trace.z);
    trace.logits = mlp_forward_trace(model.classifier, trace.g, trace.cls_trace);

    ForwardResult result;
    result.logits = trace.logits;
    result.recon_loss = trace.recon_loss;
    if (model.config.ablation != Ablation::no_hyperedge) {
        result.snapshot = trace.snapshot;
    }
    return result;
}

}  // namespace detail

ForwardResult forward(const SthlModel& model, const SamplePair& pair) {
    detail::ForwardTrace trace;
    return detail::run_forward(model, pair, trace);
}

namespace {

void append_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}
void append_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}
void append_f64(std::string& out, double v) {
    append_u64(out, std::bit_cast<std::uint64_t>(v));
}

struct Reader {
    const unsigned char* p;
    std::size_t len;
    std::size_t off = 0;
    std::string path;

    void need(std::size_t n) const {
        if (off + n > len) throw DataError("truncated checkpoint: " + path);
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(p[off + i]) << (8 * i);
        off += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(p[off + i]) << (8 * i);
        off += 8;
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(p + off), n);
        off += n;
        return s;
    }
};

constexpr char kCkptMagic[8] = {'S', 'T', 'H', 'L', 'C', 'K', 'P', 'T'};

}  // namespace

void save_checkpoint(const SthlModel& model, const std::filesystem::path& path,
                     std::uint64_t config_hash) {
    const ModelConfig& c = model.config;
    std::string out;
    out.append(kCkptMagic, sizeof kCkptMagic);
    append_u32(out, 1);  // version
    append_u64(out, config_hash);
    append_u32(out, std::uint32_t(c.channels));
    append_u32(out, std::uint32_t(c.feature_dim));
    append_u32(out, std::uint32_t(c.num_classes));
    append_u32(out, std::uint32_t(c.num_heads));
    append_f64(out, c.lambda);
    append_f64(out, c.gamma);
    append_f64(out, c.alpha);
    append_u64(out, c.rng_seed);
    out.push_back(char(static_cast<int>(c.ablation)));
    append_u32(out, std::uint32_t(c.update_hidden.size()));
    for (int h : c.update_hidden) append_u32(out, std::uint32_t(h));
    append_u32(out, std::uint32_t(c.classifier_hidden.size()));
    for (int h : c.classifier_hidden) append_u32(out, std::uint32_t(h));

    append_u32(out, std::uint32_t(model.store.size()));
    for (const auto& slot : model.store) {
        append_u32(out, std::uint32_t(slot.name.size()));
        out.append(slot.name);
        append_u32(out, std::uint32_t(slot.value->rows()));
        append_u32(out, std::uint32_t(slot.value->cols()));
        for (double v : slot.value->flat()) append_f64(out, v);
    }

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot open " + path.string() + " for writing");
    f.write(out.data(), std::streamsize(out.size()));
    if (!f) throw DataError("write to " + path.string() + " failed");
}

SthlModel load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open checkpoint " + path.string());
    std::string raw((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    Reader r{reinterpret_cast<const unsigned char*>(raw.data()), raw.size(), 0,
             path.string()};

    if (raw.size() < sizeof kCkptMagic ||
        std::memcmp(raw.data(), kCkptMagic, sizeof kCkptMagic) != 0) {
        throw DataError(path.string() + " is not a model checkpoint (bad magic)");
    }
    r.off = sizeof kCkptMagic;
    const std::uint32_t version = r.u32();
    if (version != 1) {
        throw DataError("unsupported checkpoint version " + std::to_string(version));
    }
    r.u64();  // config hash, informational

    ModelConfig c;
    c.channels = int(r.u32());
    c.feature_dim = int(r.u32());
    c.num_classes = int(r.u32());
    c.num_heads = int(r.u32());
    c.lambda = r.f64();
    c.gamma = r.f64();
    c.alpha = r.f64();
    c.rng_seed = r.u64();
    r.need(1);
    c.ablation = static_cast<Ablation>(r.p[r.off++]);
    const std::uint32_t nu = r.u32();
    for (std::uint32_t i = 0; i < nu; ++i) c.update_hidden.push_back(int(r.u32()));
    const std::uint32_t nc = r.u32();
    for (std::uint32_t i = 0; i < nc; ++i) c.classifier_hidden.push_back(int(r.u32()));

    SthlModel model = init_model(c);
    const std::uint32_t slots = r.u32();
    if (slots != model.store.size()) {
        throw DataError("checkpoint lists " + std::to_string(slots) + " slots, config needs " +
                        std::to_string(model.store.size()));
    }
    for (std::size_t s = 0; s < slots; ++s) {
        const std::uint32_t name_len = r.u32();
        const std::string name = r.str(name_len);
        const std::uint32_t rows = r.u32();
        const std::uint32_t cols = r.u32();
        auto& slot = model.store[s];
        if (name != slot.name || rows != slot.value->rows() || cols != slot.value->cols()) {
            throw DataError("checkpoint slot " + std::to_string(s) + " ('" + name +
                            "', " + std::to_string(rows) + "x" + std::to_string(cols) +
                            ") does not match expected '" + slot.name + "' (" +
                            std::to_string(slot.value->rows()) + "x" +
                            std::to_string(slot.value->cols()) + ")");
        }
        for (double& v : slot.value->flat()) v = r.f64();
    }
    if (r.off != raw.size()) throw DataError("trailing bytes in checkpoint " + path.string());
    return model;
}

void dump_attention_csv(const SthlModel& model, const SamplePair& pair,
                        const std::filesystem::path& path) {
    if (model.config.ablation != Ablation::none) {
        throw ConfigError("attention dump requires the default (non-ablated) model");
    }
    detail::ForwardTrace trace;
    detail::run_forward(model, pair, trace);
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw DataError("cannot open " + path.string() + " for writing");
    f << "master,head,w_spa,w_tem\n";
    char buf[64];
    for (std::size_t i = 0; i < trace.masters.size(); ++i) {
        const auto& mt = trace.masters[i];
        for (int h = 0; h < model.attention.num_heads; ++h) {
            std::snprintf(buf, sizeof buf, "%zu,%d,%.17g,%.17g", i, h, mt.w_spa[h],
                          mt.w_tem[h]);
            f << buf << "\n";
        }
    }
}

}  // namespace sthl
