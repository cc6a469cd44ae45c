#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sthl/autograd.hpp"
#include "sthl/dataset.hpp"
#include "sthl/model.hpp"

namespace sthl {

enum class OptimizerKind { sgd, adaptive_moments };
std::string optimizer_name(OptimizerKind k);
OptimizerKind parse_optimizer(const std::string& name);

enum class SplitPolicy { chronological, shuffled };
std::string split_policy_name(SplitPolicy p);
SplitPolicy parse_split_policy(const std::string& name);

struct TrainConfig {
    int epochs = 300;
    int batch_size = 16;
    double learning_rate = 1e-3;
    OptimizerKind optimizer = OptimizerKind::adaptive_moments;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;
    double train_fraction = 0.7;
    double val_fraction = 0.3;
    SplitPolicy split_policy = SplitPolicy::chronological;
    std::uint64_t shuffle_seed = 1;
    Ablation ablation = Ablation::none;
    int threads = 1;

    void validate() const;
};

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    int support = 0;
};

struct MetricsReport {
    double accuracy = 0.0;
    double weighted_f1 = 0.0;
    double mean_loss = 0.0;
    std::vector<ClassMetrics> per_class;
    std::vector<std::vector<int>> confusion;  // [true class][predicted class]
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0, train_acc = 0.0, train_f1 = 0.0;
    double val_loss = 0.0, val_acc = 0.0, val_f1 = 0.0;
};

struct TrainResult {
    MetricsReport train;       // at the returned (best validation F1) parameters
    MetricsReport validation;
    std::vector<EpochRecord> history;
    int best_epoch = 0;
};

// Adam-style or plain SGD steps over the parameter store slots.
class Optimizer {
public:
    Optimizer(const TrainConfig& cfg, const ParamStore& store);
    void step(ParamStore& store);

private:
    TrainConfig cfg_;
    std::vector<Matrix> m_, v_;
    long t_ = 0;
};

// Greedy argmax over logits; confusion-matrix derived metrics plus the mean
// total loss at the model's alpha.
MetricsReport evaluate(const SthlModel& model, std::span<const SamplePair> pairs,
                       int threads = 1);

struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;
};
SplitIndices split_pairs(std::size_t pair_count, const TrainConfig& cfg);

// Shuffled mini-batch descent on the mean total loss; evaluates both splits
// every epoch and leaves the model at its best-validation-F1 parameters.
TrainResult train(SthlModel& model, const WindowedDataset& ds, const TrainConfig& cfg);

// Table-2 style variants: same config and seed, hyperedge construction
// replaced by a Pearson-adjacency graph convolution / attention replaced by an
// unweighted mean over the two hyperedge embeddings.
SthlModel ablate_no_hyperedge(const SthlModel& model);
SthlModel ablate_no_attention(const SthlModel& model);

void write_metrics_csv(const std::filesystem::path& path,
                       const std::vector<EpochRecord>& history, std::uint64_t config_hash);

struct AblationRun {
    Ablation variant = Ablation::none;
    std::vector<double> val_f1;  // one entry per seed
    double mean_val_f1 = 0.0;
};

// Trains {none, no_attention, no_hyperedge} over num_seeds consecutive seeds
// (model seed and shuffle seed both offset) on the same dataset.
std::vector<AblationRun> run_ablation_study(const WindowedDataset& ds,
                                            const ModelConfig& model_cfg,
                                            const TrainConfig& train_cfg, int num_seeds);

}  // namespace sthl
