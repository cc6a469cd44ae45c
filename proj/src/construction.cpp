#include "sthl/construction.hpp"

#include <fstream>
#include <string>

#include "sthl/errors.hpp"

namespace sthl {

std::vector<int> spatial_candidates(int master_channel, int num_channels) {
    if (master_channel < 0 || master_channel >= num_channels) {
        throw DimensionError("spatial_candidates: master channel " +
                             std::to_string(master_channel) + " outside [0, " +
                             std::to_string(num_channels) + ")");
    }
    std::vector<int> out;
    out.reserve(num_channels - 1);
    for (int j = 0; j < num_channels; ++j) {
        if (j != master_channel) out.push_back(j);
    }
    return out;
}

double reconstruction_error(std::span<const double> master_feat,
                            const Matrix& candidate_feats, const Matrix& theta,
                            std::span<const double> p) {
    if (theta.rows() != master_feat.size() || theta.cols() != master_feat.size()) {
        throw DimensionError("reconstruction_error: theta must be d x d");
    }
    if (candidate_feats.rows() != p.size() ||
        (candidate_feats.rows() > 0 && candidate_feats.cols() != master_feat.size())) {
        throw DimensionError("reconstruction_error: candidate/p shapes disagree");
    }
    Vec residual = vecmat(master_feat, theta);
    for (std::size_t k = 0; k < p.size(); ++k) {
        axpy(-p[k], candidate_feats.row(k), residual);
    }
    return l2_norm(residual);
}

std::vector<std::pair<int, double>> select_slaves(const std::vector<int>& candidates,
                                                  std::span<const double> p_row) {
    if (candidates.size() != p_row.size()) {
        throw DimensionError("select_slaves: candidate and coefficient counts disagree");
    }
    std::vector<std::pair<int, double>> out;
    for (std::size_t k = 0; k < candidates.size(); ++k) {
        if (p_row[k] > 0.0) out.emplace_back(candidates[k], p_row[k]);
    }
    return out;
}

HypergraphSnapshot build_snapshot(const SamplePair& pair, const ConstructionParams& params) {
    const int n = static_cast<int>(pair.current.rows());
    const std::size_t d = pair.current.cols();
    if (pair.previous.rows() != pair.current.rows() || pair.previous.cols() != d) {
        throw DimensionError("build_snapshot: pair matrices disagree in shape");
    }
    if (params.p_spa.rows() != std::size_t(n) || params.p_spa.cols() != std::size_t(n - 1) ||
        params.p_tem.rows() != std::size_t(n) || params.p_tem.cols() != std::size_t(n)) {
        throw DimensionError("build_snapshot: coefficient banks do not match N");
    }

    HypergraphSnapshot snap;
    snap.num_channels = n;
    snap.incidence = Matrix(2 * n, 2 * n);
    snap.node_feats = Matrix(2 * n, d);
    for (int i = 0; i < n; ++i) {
        std::copy(pair.current.row(i).begin(), pair.current.row(i).end(),
                  snap.node_feats.row(i).begin());
        std::copy(pair.previous.row(i).begin(), pair.previous.row(i).end(),
                  snap.node_feats.row(n + i).begin());
    }

    snap.edges.resize(2 * n);
    std::vector<int> tem_candidates(n);
    for (int j = 0; j < n; ++j) tem_candidates[j] = n + j;  // node ids of V^{t-1}

    for (int i = 0; i < n; ++i) {
        Hyperedge& spa = snap.edges[i];
        spa.kind = EdgeKind::spatial;
        spa.master = i;
        spa.slaves = select_slaves(spatial_candidates(i, n), params.p_spa.row(i));
        snap.incidence(i, i) = 1.0;
        for (const auto& [node, coeff] : spa.slaves) snap.incidence(node, i) = coeff;

        Hyperedge& tem = snap.edges[n + i];
        tem.kind = EdgeKind::temporal;
        tem.master = i;
        tem.slaves = select_slaves(tem_candidates, params.p_tem.row(i));
        snap.incidence(i, n + i) = 1.0;
        for (const auto& [node, coeff] : tem.slaves) snap.incidence(node, n + i) = coeff;
    }
    return snap;
}

double reconstruction_loss(const SamplePair& pair, const ConstructionParams& params,
                           double lambda, double gamma) {
    if (lambda < 0.0 || gamma < 0.0) {
        throw ConfigError("reconstruction_loss: lambda and gamma must be >= 0");
    }
    const int n = static_cast<int>(pair.current.rows());
    const std::size_t d = pair.current.cols();

    double loss = 0.0;
    Matrix cand_spa(n - 1, d);
    for (int i = 0; i < n; ++i) {
        const auto candidates = spatial_candidates(i, n);
        for (int k = 0; k < n - 1; ++k) {
            std::copy(pair.current.row(candidates[k]).begin(),
                      pair.current.row(candidates[k]).end(), cand_spa.row(k).begin());
        }
        const double c_spa = reconstruction_error(pair.current.row(i), cand_spa,
                                                  params.theta_spa, params.p_spa.row(i));
        const double c_tem = reconstruction_error(pair.current.row(i), pair.previous,
                                                  params.theta_tem, params.p_tem.row(i));
        loss += lambda * (c_spa + c_tem);
        loss += l1_norm(params.p_spa.row(i)) + l1_norm(params.p_tem.row(i));
        loss += gamma * (l2_norm(params.p_spa.row(i)) + l2_norm(params.p_tem.row(i)));
    }
    return loss;
}

void dump_incidence_csv(const HypergraphSnapshot& snapshot,
                        const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw DataError("cannot open " + path.string() + " for writing");
    const int n = snapshot.num_channels;
    f << "node";
    for (int e = 0; e < 2 * n; ++e) {
        f << (e < n ? ",spa_e" + std::to_string(e) : ",tem_e" + std::to_string(e - n));
    }
    f << "\n";
    char buf[32];
    for (int v = 0; v < 2 * n; ++v) {
        f << (v < n ? "t_ch" + std::to_string(v) : "prev_ch" + std::to_string(v - n));
        for (int e = 0; e < 2 * n; ++e) {
            std::snprintf(buf, sizeof buf, "%.17g", snapshot.incidence(v, e));
            f << ',' << buf;
        }
        f << "\n";
    }
}

}  // namespace sthl
