#include "sthl/train.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <thread>

#include "sthl/errors.hpp"
#include "sthl/rng.hpp"

namespace sthl {

std::string optimizer_name(OptimizerKind k) {
    return k == OptimizerKind::sgd ? "sgd" : "adaptive-moments";
}

OptimizerKind parse_optimizer(const std::string& name) {
    if (name == "sgd") return OptimizerKind::sgd;
    if (name == "adaptive-moments") return OptimizerKind::adaptive_moments;
    throw ConfigError("unknown optimizer '" + name + "' (expected sgd or adaptive-moments)");
}

std::string split_policy_name(SplitPolicy p) {
    return p == SplitPolicy::chronological ? "chronological" : "shuffled";
}

SplitPolicy parse_split_policy(const std::string& name) {
    if (name == "chronological") return SplitPolicy::chronological;
    if (name == "shuffled") return SplitPolicy::shuffled;
    throw ConfigError("unknown split policy '" + name +
                      "' (expected chronological or shuffled)");
}

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("train config: epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
    if (learning_rate <= 0.0) throw ConfigError("train config: learning_rate must be > 0");
    if (train_fraction <= 0.0 || train_fraction >= 1.0 || val_fraction <= 0.0 ||
        val_fraction >= 1.0 || train_fraction + val_fraction > 1.0) {
        throw ConfigError(
            "train config: fractions must lie in (0,1) and sum to at most 1");
    }
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
        throw ConfigError("train config: moment decays must lie in [0,1)");
    }
    if (adam_epsilon <= 0.0) throw ConfigError("train config: adam_epsilon must be > 0");
    if (threads < 1) throw ConfigError("train config: threads must be >= 1");
}

Optimizer::Optimizer(const TrainConfig& cfg, const ParamStore& store) : cfg_(cfg) {
    if (cfg_.optimizer == OptimizerKind::adaptive_moments) {
        for (const auto& slot : store) {
            m_.emplace_back(slot.value->rows(), slot.value->cols());
            v_.emplace_back(slot.value->rows(), slot.value->cols());
        }
    }
}

void Optimizer::step(ParamStore& store) {
    const double lr = cfg_.learning_rate;
    if (cfg_.optimizer == OptimizerKind::sgd) {
        for (auto& slot : store) {
            axpy(-lr, slot.grad.flat(), slot.value->flat());
        }
        return;
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, double(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, double(t_));
    for (std::size_t s = 0; s < store.size(); ++s) {
        auto value = store[s].value->flat();
        auto grad = store[s].grad.flat();
        auto m = m_[s].flat();
        auto v = v_[s].flat();
        for (std::size_t i = 0; i < value.size(); ++i) {
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * grad[i];
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            value[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg_.adam_epsilon);
        }
    }
}

MetricsReport evaluate(const SthlModel& model, std::span<const SamplePair> pairs,
                       int threads) {
    if (pairs.empty()) throw DimensionError("evaluate: no pairs");
    const int classes = model.config.num_classes;
    const double alpha = model.config.alpha;

    std::vector<int> predicted(pairs.size());
    Vec losses(pairs.size());
    auto eval_one = [&](std::size_t s) {
        const ForwardResult r = forward(model, pairs[s]);
        predicted[s] = static_cast<int>(argmax(r.logits));
        losses[s] = total_loss(r.logits, pairs[s].label, r.recon_loss, alpha);
    };
    if (threads <= 1 || pairs.size() < 2) {
        for (std::size_t s = 0; s < pairs.size(); ++s) eval_one(s);
    } else {
        std::atomic<std::size_t> next{0};
        auto worker = [&]() {
            for (std::size_t s = next.fetch_add(1); s < pairs.size();
                 s = next.fetch_add(1)) {
                eval_one(s);
            }
        };
        std::vector<std::thread> pool;
        const std::size_t workers = std::min<std::size_t>(threads, pairs.size());
        for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(worker);
        for (std::thread& t : pool) t.join();
    }

    MetricsReport report;
    report.confusion.assign(classes, std::vector<int>(classes, 0));
    int correct = 0;
    double loss_sum = 0.0;
    for (std::size_t s = 0; s < pairs.size(); ++s) {
        report.confusion[pairs[s].label][predicted[s]] += 1;
        correct += predicted[s] == pairs[s].label;
        loss_sum += losses[s];
    }
    report.accuracy = double(correct) / double(pairs.size());
    report.mean_loss = loss_sum / double(pairs.size());

    report.per_class.resize(classes);
    double weighted = 0.0;
    for (int c = 0; c < classes; ++c) {
        int support = 0, predicted_as = 0;
        for (int j = 0; j < classes; ++j) {
            support += report.confusion[c][j];
            predicted_as += report.confusion[j][c];
        }
        const int tp = report.confusion[c][c];
        ClassMetrics& cm = report.per_class[c];
        cm.support = support;
        cm.precision = predicted_as > 0 ? double(tp) / predicted_as : 0.0;
        cm.recall = support > 0 ? double(tp) / support : 0.0;
        cm.f1 = (cm.precision + cm.recall) > 0.0
                    ? 2.0 * cm.precision * cm.recall / (cm.precision + cm.recall)
                    : 0.0;
        weighted += double(support) * cm.f1;
    }
    report.weighted_f1 = weighted / double(pairs.size());
    return report;
}

SplitIndices split_pairs(std::size_t pair_count, const TrainConfig& cfg) {
    std::vector<std::size_t> order(pair_count);
    for (std::size_t i = 0; i < pair_count; ++i) order[i] = i;
    if (cfg.split_policy == SplitPolicy::shuffled) {
        Rng rng(cfg.shuffle_seed);
        rng.shuffle(order);
    }
    const auto n_train = std::size_t(std::floor(cfg.train_fraction * double(pair_count)));
    const auto n_val = std::size_t(std::floor(cfg.val_fraction * double(pair_count)));
    SplitIndices split;
    split.train.assign(order.begin(), order.begin() + n_train);
    split.validation.assign(order.begin() + n_train, order.begin() + n_train + n_val);
    return split;
}

TrainResult train(SthlModel& model, const WindowedDataset& ds, const TrainConfig& cfg) {
    cfg.validate();
    const std::vector<SamplePair> pairs = make_pairs(ds);
    if (static_cast<int>(pairs.size()) < cfg.batch_size) {
        throw ConfigError("dataset provides " + std::to_string(pairs.size()) +
                          " pairs, fewer than batch_size " + std::to_string(cfg.batch_size));
    }
    const SplitIndices split = split_pairs(pairs.size(), cfg);
    if (split.train.empty() || split.validation.empty()) {
        throw ConfigError("empty train or validation split (" +
                          std::to_string(split.train.size()) + "/" +
                          std::to_string(split.validation.size()) + " pairs)");
    }
    std::vector<SamplePair> train_pairs, val_pairs;
    for (std::size_t idx : split.train) train_pairs.push_back(pairs[idx]);
    for (std::size_t idx : split.validation) val_pairs.push_back(pairs[idx]);

    const double alpha = model.config.alpha;
    Optimizer optimizer(cfg, model.store);
    Rng shuffle_rng(cfg.shuffle_seed);

    TrainResult result;
    double best_f1 = -1.0;
    Vec best_params;
    MetricsReport best_train_report, best_val_report;

    std::vector<std::size_t> order(train_pairs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::vector<SamplePair> batch;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t stop =
                std::min(order.size(), start + std::size_t(cfg.batch_size));
            batch.clear();
            for (std::size_t b = start; b < stop; ++b) batch.push_back(train_pairs[order[b]]);
            batch_backward(model, batch, alpha, cfg.threads);
            optimizer.step(model.store);
        }

        const MetricsReport train_report = evaluate(model, train_pairs, cfg.threads);
        const MetricsReport val_report = evaluate(model, val_pairs, cfg.threads);
        if (!std::isfinite(train_report.mean_loss) || !std::isfinite(val_report.mean_loss)) {
            throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch));
        }
        result.history.push_back({epoch, train_report.mean_loss, train_report.accuracy,
                                  train_report.weighted_f1, val_report.mean_loss,
                                  val_report.accuracy, val_report.weighted_f1});
        if (val_report.weighted_f1 > best_f1) {
            best_f1 = val_report.weighted_f1;
            best_params = model.store.flatten_values();
            best_train_report = train_report;
            best_val_report = val_report;
            result.best_epoch = epoch;
        }
    }

    model.store.load_values(best_params);
    result.train = best_train_report;
    result.validation = best_val_report;
    return result;
}

SthlModel ablate_no_hyperedge(const SthlModel& model) {
    ModelConfig cfg = model.config;
    cfg.ablation = Ablation::no_hyperedge;
    return init_model(cfg);
}

SthlModel ablate_no_attention(const SthlModel& model) {
    ModelConfig cfg = model.config;
    cfg.ablation = Ablation::no_attention;
    return init_model(cfg);
}

void write_metrics_csv(const std::filesystem::path& path,
                       const std::vector<EpochRecord>& history,
                       std::uint64_t config_hash) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw DataError("cannot open " + path.string() + " for writing");
    char buf[256];
    std::snprintf(buf, sizeof buf, "# config_hash=%016llx\n",
                  static_cast<unsigned long long>(config_hash));
    f << buf << "epoch,split,loss,accuracy,weighted_f1\n";
    for (const EpochRecord& r : history) {
        std::snprintf(buf, sizeof buf, "%d,train,%.17g,%.17g,%.17g\n", r.epoch,
                      r.train_loss, r.train_acc, r.train_f1);
        f << buf;
        std::snprintf(buf, sizeof buf, "%d,val,%.17g,%.17g,%.17g\n", r.epoch, r.val_loss,
                      r.val_acc, r.val_f1);
        f << buf;
    }
}

std::vector<AblationRun> run_ablation_study(const WindowedDataset& ds,
                                            const ModelConfig& model_cfg,
                                            const TrainConfig& train_cfg, int num_seeds) {
    if (num_seeds < 1) throw ConfigError("ablation study needs num_seeds >= 1");
    std::vector<AblationRun> runs;
    for (Ablation variant :
         {Ablation::none, Ablation::no_attention, Ablation::no_hyperedge}) {
        AblationRun run;
        run.variant = variant;
        for (int s = 0; s < num_seeds; ++s) {
            ModelConfig mc = model_cfg;
            mc.ablation = variant;
            mc.rng_seed = model_cfg.rng_seed + std::uint64_t(s);
            TrainConfig tc = train_cfg;
            tc.ablation = variant;
            tc.shuffle_seed = train_cfg.shuffle_seed + std::uint64_t(s);
            SthlModel model = init_model(mc);
            const TrainResult result = train(model, ds, tc);
            run.val_f1.push_back(result.validation.weighted_f1);
        }
        double sum = 0.0;
        for (double f : run.val_f1) sum += f;
        run.mean_val_f1 = sum / double(run.val_f1.size());
        runs.push_back(std::move(run));
    }
    return runs;
}

}  // namespace sthl
