#include "sthl/layer.hpp"

#include <cassert>
#include <cmath>

#include "sthl/errors.hpp"

namespace sthl {

Vec mlp_forward(const MlpParams& mlp, std::span<const double> x) {
    Vec h(x.begin(), x.end());
    for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
        const MlpLayer& layer = mlp.layers[l];
        Vec pre = vecmat(h, layer.weight);
        axpy(1.0, layer.bias.row(0), pre);
        h = (l + 1 < mlp.layers.size()) ? tanh_vec(pre) : std::move(pre);
    }
    return h;
}

Vec hyperedge_embedding(const HypergraphSnapshot& snapshot, const Matrix& node_feats,
                        int edge) {
    const std::size_t nodes = snapshot.incidence.rows();
    if (node_feats.rows() != nodes) {
        throw DimensionError("hyperedge_embedding: node feature rows != node count");
    }
    Vec acc(node_feats.cols(), 0.0);
    double denom = 0.0;
    for (std::size_t v = 0; v < nodes; ++v) {
        const double h = snapshot.incidence(v, edge);
        if (h == 0.0) continue;
        axpy(h, node_feats.row(v), acc);
        denom += h;
    }
    assert(denom > 0.0 && "hyperedge column must contain its master");
    for (double& v : acc) v /= denom;
    return acc;
}

double attention_score(std::span<const double> master_feat,
                       std::span<const double> edge_emb, int head, EdgeKind kind,
                       const AttentionParams& params) {
    if (head < 0 || head >= params.num_heads) {
        throw DimensionError("attention_score: head index out of range");
    }
    const Matrix& k_lin = kind == EdgeKind::spatial ? params.k_lin_spa[head]
                                                    : params.k_lin_tem[head];
    const Matrix& theta = kind == EdgeKind::spatial ? params.theta_att_spa[head]
                                                    : params.theta_att_tem[head];
    const Vec q = vecmat(master_feat, params.q_lin[head]);
    const Vec k = vecmat(edge_emb, k_lin);
    // scale by sqrt of the full feature dimension, not the per-head width
    const double scale = std::sqrt(static_cast<double>(master_feat.size()));
    return dot(vecmat(q, theta), k) / scale;
}

std::pair<double, double> edge_weights(double score_spa, double score_tem) {
    const double scores[2] = {score_spa, score_tem};
    const Vec w = softmax(std::span<const double>(scores, 2));
    return {w[0], w[1]};
}

Vec update_node(int master, const HypergraphSnapshot& snapshot, const Matrix& node_feats,
                const AttentionParams& params) {
    const int n = snapshot.num_channels;
    if (master < 0 || master >= n) {
        throw DimensionError("update_node: master must be a current-timestamp node");
    }
    const auto master_feat = node_feats.row(master);
    const Vec e_spa = hyperedge_embedding(snapshot, node_feats, master);
    const Vec e_tem = hyperedge_embedding(snapshot, node_feats, n + master);

    Vec update_in;
    update_in.reserve(master_feat.size());
    for (int h = 0; h < params.num_heads; ++h) {
        const Vec k_spa = vecmat(e_spa, params.k_lin_spa[h]);
        const Vec k_tem = vecmat(e_tem, params.k_lin_tem[h]);
        const double a_spa = attention_score(master_feat, e_spa, h, EdgeKind::spatial, params);
        const double a_tem = attention_score(master_feat, e_tem, h, EdgeKind::temporal, params);
        const auto [w_spa, w_tem] = edge_weights(a_spa, a_tem);
        for (std::size_t k = 0; k < k_spa.size(); ++k) {
            update_in.push_back(w_spa * k_spa[k] + w_tem * k_tem[k]);
        }
    }
    return mlp_forward(params.update_mlp, update_in);
}

Vec readout(const NodeEmbeddings& z) {
    if (z.z.rows() == 0) throw DimensionError("readout: no node embeddings");
    return sorted_column_mean(z.z);
}

}  // namespace sthl
