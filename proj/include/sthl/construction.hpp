#pragma once

#include <utility>
#include <vector>

#include "sthl/dataset.hpp"
#include "sthl/linalg.hpp"

namespace sthl {

// Trainable state of the dynamic hyperedge generator. Row i of p_spa holds the
// reconstruction coefficients of master channel i over its N-1 same-timestamp
// candidates in ascending channel order; row i of p_tem covers all N
// previous-timestamp channels, the master's own channel included.
struct ConstructionParams {
    Matrix theta_spa;  // d x d projection for spatial reconstruction
    Matrix theta_tem;  // d x d projection for temporal reconstruction
    Matrix p_spa;      // N x (N-1)
    Matrix p_tem;      // N x N
};

enum class EdgeKind { spatial, temporal };

struct Hyperedge {
    EdgeKind kind = EdgeKind::spatial;
    int master = 0;                              // node id
    std::vector<std::pair<int, double>> slaves;  // (node id, coefficient > 0)
};

// Node ids 0..N-1 are the current-timestamp channels, N..2N-1 the previous
// ones. Edge j in [0, N) is the spatial hyperedge of master j; edge N+j is its
// temporal hyperedge. incidence(v, e) is 1 for the master, the positive
// reconstruction coefficient for a selected slave, 0 otherwise.
struct HypergraphSnapshot {
    int num_channels = 0;           // N
    std::vector<Hyperedge> edges;   // 2N
    Matrix incidence;               // 2N x 2N, rows = nodes, cols = edges
    Matrix node_feats;              // 2N x d, rows 0..N-1 = X^t, N..2N-1 = X^{t-1}
};

// The N-1 same-timestamp channels excluding the master, ascending.
std::vector<int> spatial_candidates(int master_channel, int num_channels);

// || master_feat . theta - p . candidate_feats ||_2
double reconstruction_error(std::span<const double> master_feat,
                            const Matrix& candidate_feats, const Matrix& theta,
                            std::span<const double> p);

// Keeps the candidates whose coefficient is strictly positive, order
// preserved. An empty result is legal: the hyperedge degenerates to its master.
std::vector<std::pair<int, double>> select_slaves(const std::vector<int>& candidates,
                                                  std::span<const double> p_row);

HypergraphSnapshot build_snapshot(const SamplePair& pair, const ConstructionParams& params);

// Sum over masters of lambda * (c_spa + c_tem) + l1(p rows) + gamma * l2(p rows).
double reconstruction_loss(const SamplePair& pair, const ConstructionParams& params,
                           double lambda, double gamma);

void dump_incidence_csv(const HypergraphSnapshot& snapshot, const std::filesystem::path& path);

}  // namespace sthl
