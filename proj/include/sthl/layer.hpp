#pragma once

#include <utility>
#include <vector>

#include "sthl/construction.hpp"
#include "sthl/linalg.hpp"

namespace sthl {

struct MlpLayer {
    Matrix weight;  // in x out
    Matrix bias;    // 1 x out
};

// Feed-forward stack with tanh on every layer except the last, which stays
// linear. An empty stack is the identity (handy in tests).
struct MlpParams {
    std::vector<MlpLayer> layers;

    std::size_t in_dim() const { return layers.empty() ? 0 : layers.front().weight.rows(); }
    std::size_t out_dim() const { return layers.empty() ? 0 : layers.back().weight.cols(); }
};

Vec mlp_forward(const MlpParams& mlp, std::span<const double> x);

// Per-head attention state. K divides d; every projection maps d -> d/K and
// the bilinear forms live in (d/K)^2.
struct AttentionParams {
    int num_heads = 1;                  // K
    std::vector<Matrix> q_lin;          // K of d x d/K
    std::vector<Matrix> k_lin_spa;      // K of d x d/K
    std::vector<Matrix> k_lin_tem;      // K of d x d/K
    std::vector<Matrix> theta_att_spa;  // K of d/K x d/K
    std::vector<Matrix> theta_att_tem;  // K of d/K x d/K
    MlpParams update_mlp;               // d -> d
};

// Updated embeddings of the N current-timestamp nodes.
struct NodeEmbeddings {
    Matrix z;  // N x d
};

// sum_v H(v,e) X(v) / sum_v H(v,e). The denominator is at least 1 (the master).
Vec hyperedge_embedding(const HypergraphSnapshot& snapshot, const Matrix& node_feats,
                        int edge);

// Q^h . Theta_att . (K^h)^T / sqrt(d), with d the full feature dimension.
double attention_score(std::span<const double> master_feat,
                       std::span<const double> edge_emb, int head, EdgeKind kind,
                       const AttentionParams& params);

// Two-way softmax over the master's spatial and temporal edge scores.
std::pair<double, double> edge_weights(double score_spa, double score_tem);

// Per head: weighted sum of the spatial and temporal keys; heads concatenated,
// then passed through the update MLP.
Vec update_node(int master, const HypergraphSnapshot& snapshot, const Matrix& node_feats,
                const AttentionParams& params);

// Mean over the current-timestamp node embeddings (order-independent sum).
Vec readout(const NodeEmbeddings& z);

}  // namespace sthl
