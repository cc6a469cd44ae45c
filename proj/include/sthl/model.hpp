#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sthl/construction.hpp"
#include "sthl/dataset.hpp"
#include "sthl/layer.hpp"
#include "sthl/param_store.hpp"

namespace sthl {

enum class Ablation { none, no_hyperedge, no_attention };

std::string ablation_name(Ablation a);
Ablation parse_ablation(const std::string& name);

struct ModelConfig {
    int channels = 0;     // N
    int feature_dim = 0;  // d
    int num_classes = 0;  // C
    int num_heads = 2;    // K, must divide d
    double lambda = 0.01;
    double gamma = 0.2;
    double alpha = 0.1;
    std::vector<int> update_hidden;      // defaults to {d} when empty
    std::vector<int> classifier_hidden;  // defaults to {d} when empty
    std::uint64_t rng_seed = 1;
    Ablation ablation = Ablation::none;

    void validate() const;
};

// The full trainable model. Parameters live in the member structs; `store`
// holds named (value, gradient) slots pointing at them, in a fixed
// registration order that checkpoints and the optimizer rely on.
class SthlModel {
public:
    ModelConfig config;
    ConstructionParams construction;
    AttentionParams attention;
    MlpParams classifier;  // d -> C logits

    // no_hyperedge variant: Pearson-adjacency graph convolution plus a learned
    // two-scalar mix of current and previous embeddings.
    Matrix gc_weight;     // d x d
    Matrix gc_bias;       // 1 x d
    Matrix mix_current;   // 1 x 1
    Matrix mix_previous;  // 1 x 1

    ParamStore store;

    SthlModel() = default;
    SthlModel(const SthlModel& other);
    SthlModel& operator=(const SthlModel& other);
    SthlModel(SthlModel&& other) noexcept;
    SthlModel& operator=(SthlModel&& other) noexcept;

    // Rebinds store slots to this object's parameter matrices.
    void register_params();
};

struct ForwardResult {
    Vec logits;
    double recon_loss = 0.0;
    // Absent for the no_hyperedge variant, which builds no hypergraph.
    std::optional<HypergraphSnapshot> snapshot;
};

// Deterministic for a fixed seed: weight matrices are Glorot-uniform in
// +-sqrt(6/(fan_in+fan_out)), p_spa rows start at 1/(N-1) and p_tem rows at
// 1/N so every candidate is initially selected, biases start at zero.
SthlModel init_model(const ModelConfig& config);

ForwardResult forward(const SthlModel& model, const SamplePair& pair);

double cross_entropy(std::span<const double> logits, int label);

// Pairwise Pearson correlation between channel feature rows, the adjacency of
// the no_hyperedge variant. Zero-variance channels produce 0 entries.
Matrix pearson_adjacency(const Matrix& feats);

// alpha * recon_loss + (1 - alpha) * CE(softmax(logits), label)
double total_loss(std::span<const double> logits, int label, double recon_loss,
                  double alpha);

void save_checkpoint(const SthlModel& model, const std::filesystem::path& path,
                     std::uint64_t config_hash = 0);
SthlModel load_checkpoint(const std::filesystem::path& path);

// Per-master per-head attention weights, one row per (master, head): useful
// when debugging what the layer attends to.
void dump_attention_csv(const SthlModel& model, const SamplePair& pair,
                        const std::filesystem::path& path);

}  // namespace sthl
