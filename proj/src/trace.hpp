#pragma once

// Internal forward-pass caches shared by model.cpp (forward) and autograd.cpp
// (hand-written reverse mode). Not part of the installed API.

#include <vector>

#include "sthl/layer.hpp"
#include "sthl/model.hpp"

namespace sthl::detail {

// outs[0] is the input, outs[l+1] the output of layer l (post-activation for
// all but the last layer, which is linear).
struct MlpTrace {
    std::vector<Vec> outs;
};

Vec mlp_forward_trace(const MlpParams& mlp, std::span<const double> x, MlpTrace& trace);

struct MasterTrace {
    // construction
    std::vector<int> cand_spa;                 // spatial candidate channels, ascending
    std::vector<std::size_t> sel_spa, sel_tem; // candidate slots with p > 0
    double denom_spa = 1.0, denom_tem = 1.0;   // 1 + sum of selected coefficients
    Vec e_spa, e_tem;                          // hyperedge embeddings
    Vec r_spa, r_tem;                          // reconstruction residuals
    double c_spa = 0.0, c_tem = 0.0;           // residual norms
    // attention
    std::vector<Vec> q, k_spa, k_tem;          // per head
    std::vector<double> w_spa, w_tem;          // per head softmax weights
    Vec update_in;
    MlpTrace update_trace;
};

struct ForwardTrace {
    std::vector<MasterTrace> masters;
    HypergraphSnapshot snapshot;
    Matrix z;  // N x d updated node embeddings
    Vec g;     // readout
    MlpTrace cls_trace;
    Vec logits;
    double recon_loss = 0.0;

    // no_hyperedge variant
    Matrix adj_cur, adj_prev;      // Pearson adjacencies
    Matrix gc_in_cur, gc_in_prev;  // A . X fed into the shared projection
    Matrix s_cur, s_prev;          // tanh(A X W + b)
};

ForwardResult run_forward(const SthlModel& model, const SamplePair& pair,
                          ForwardTrace& trace);

}  // namespace sthl::detail
