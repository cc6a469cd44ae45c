#include <doctest.h>

#include <cmath>

#include "sthl/construction.hpp"
#include "sthl/layer.hpp"
#include "sthl/rng.hpp"

using namespace sthl;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
    Matrix m(rows, cols);
    for (double& v : m.flat()) v = rng.normal();
    return m;
}

MlpParams identity_mlp(std::size_t d) {
    return {{MlpLayer{Matrix::identity(d), Matrix(1, d)}}};
}

// snapshot over 2 channels: current = [(2,0),(0,3)], previous = 0
HypergraphSnapshot two_channel_snapshot(double spa_coeff) {
    SamplePair pair;
    pair.current = Matrix(2, 2);
    pair.current(0, 0) = 2.0;
    pair.current(1, 1) = 3.0;
    pair.previous = Matrix(2, 2);
    ConstructionParams params;
    params.theta_spa = Matrix::identity(2);
    params.theta_tem = Matrix::identity(2);
    params.p_spa = Matrix(2, 1, spa_coeff);
    params.p_tem = Matrix(2, 2, -1.0);  // temporal edges degenerate to masters
    return build_snapshot(pair, params);
}

AttentionParams select_first_coords_params(std::size_t d, int heads) {
    const std::size_t dk = d / heads;
    AttentionParams att;
    att.num_heads = heads;
    for (int h = 0; h < heads; ++h) {
        Matrix selector(d, dk);
        for (std::size_t j = 0; j < dk; ++j) selector(j, j) = 1.0;
        att.q_lin.push_back(selector);
        att.k_lin_spa.push_back(selector);
        att.k_lin_tem.push_back(selector);
        att.theta_att_spa.push_back(Matrix::identity(dk));
        att.theta_att_tem.push_back(Matrix::identity(dk));
    }
    att.update_mlp = identity_mlp(d);
    return att;
}

}  // namespace

TEST_CASE("hyperedge embedding with no slaves is the master feature") {
    const auto snap = two_channel_snapshot(-1.0);
    const Vec e = hyperedge_embedding(snap, snap.node_feats, 0);
    CHECK(e == Vec{2.0, 0.0});
}

TEST_CASE("hyperedge embedding averages master and slave") {
    const auto snap = two_channel_snapshot(1.0);
    const Vec e = hyperedge_embedding(snap, snap.node_feats, 0);
    CHECK(e[0] == doctest::Approx(1.0));
    CHECK(e[1] == doctest::Approx(1.5));
}

TEST_CASE("hyperedge embedding weights the slave by its coefficient") {
    const auto snap = two_channel_snapshot(0.5);
    const Vec e = hyperedge_embedding(snap, snap.node_feats, 0);
    CHECK(e[0] == doctest::Approx(4.0 / 3.0).epsilon(1e-15));
    CHECK(e[1] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("hyperedge embedding stays in the coordinate hull of its members") {
    Rng rng(40);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 4, d = 3;
        SamplePair pair;
        pair.current = random_matrix(n, d, rng);
        pair.previous = random_matrix(n, d, rng);
        ConstructionParams params;
        params.theta_spa = Matrix::identity(d);
        params.theta_tem = Matrix::identity(d);
        params.p_spa = random_matrix(n, n - 1, rng);
        params.p_tem = random_matrix(n, n, rng);
        const auto snap = build_snapshot(pair, params);
        for (int e = 0; e < 2 * n; ++e) {
            const Vec emb = hyperedge_embedding(snap, snap.node_feats, e);
            std::vector<int> members = {snap.edges[e].master};
            for (const auto& [node, coeff] : snap.edges[e].slaves) members.push_back(node);
            for (int k = 0; k < d; ++k) {
                double lo = 1e300, hi = -1e300;
                for (int v : members) {
                    lo = std::min(lo, snap.node_feats(v, k));
                    hi = std::max(hi, snap.node_feats(v, k));
                }
                CHECK(emb[k] >= lo - 1e-12);
                CHECK(emb[k] <= hi + 1e-12);
            }
        }
    }
}

TEST_CASE("attention score is annihilated by a zero bilinear form") {
    Rng rng(8);
    auto att = select_first_coords_params(4, 2);
    att.theta_att_spa[0].fill(0.0);
    const Vec master = {rng.normal(), rng.normal(), rng.normal(), rng.normal()};
    const Vec edge = {rng.normal(), rng.normal(), rng.normal(), rng.normal()};
    CHECK(attention_score(master, edge, 0, EdgeKind::spatial, att) == 0.0);
}

TEST_CASE("attention score on coordinate selectors gives 1/sqrt(d)") {
    const auto att = select_first_coords_params(4, 2);
    const Vec master = {1.0, 0.0, 0.0, 0.0};
    CHECK(attention_score(master, master, 0, EdgeKind::spatial, att) ==
          doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("attention score is linear in the edge embedding") {
    Rng rng(12);
    AttentionParams att = select_first_coords_params(4, 2);
    for (auto* bank : {&att.q_lin, &att.k_lin_spa, &att.k_lin_tem}) {
        for (Matrix& m : *bank) m = random_matrix(4, 2, rng);
    }
    for (auto* bank : {&att.theta_att_spa, &att.theta_att_tem}) {
        for (Matrix& m : *bank) m = random_matrix(2, 2, rng);
    }
    const Vec master = {rng.normal(), rng.normal(), rng.normal(), rng.normal()};
    Vec edge = {rng.normal(), rng.normal(), rng.normal(), rng.normal()};
    const double base = attention_score(master, edge, 1, EdgeKind::temporal, att);
    for (double& v : edge) v *= 2.0;
    const double doubled = attention_score(master, edge, 1, EdgeKind::temporal, att);
    CHECK(doubled == doctest::Approx(2.0 * base).epsilon(1e-12));
}

TEST_CASE("edge weights are a two-way softmax") {
    {
        const auto [w_spa, w_tem] = edge_weights(1.3, 1.3);
        CHECK(w_spa == doctest::Approx(0.5).epsilon(1e-15));
        CHECK(w_tem == doctest::Approx(0.5).epsilon(1e-15));
    }
    {
        const auto [w_spa, w_tem] = edge_weights(std::log(3.0), 0.0);
        CHECK(w_spa == doctest::Approx(0.75).epsilon(1e-12));
        CHECK(w_tem == doctest::Approx(0.25).epsilon(1e-12));
    }
    {
        const auto [w_spa, w_tem] = edge_weights(1000.0, 0.0);
        CHECK(std::isfinite(w_spa));
        CHECK(w_spa > 0.999999);
        CHECK(w_tem < 1e-6);
    }
}

TEST_CASE("edge weights sum to one for wild score pairs") {
    Rng rng(77);
    for (int trial = 0; trial < 200; ++trial) {
        // spreads up to 700 keep exp(min - max) above the underflow threshold
        const double a = rng.uniform(-350.0, 350.0);
        const double b = rng.uniform(-350.0, 350.0);
        const auto [w_spa, w_tem] = edge_weights(a, b);
        CHECK(std::abs(w_spa + w_tem - 1.0) <= 1e-12);
        CHECK(w_spa > 0.0);
        CHECK(w_tem > 0.0);
    }
}

TEST_CASE("update_node with zero attention collapses to the mean of keys") {
    const int d = 4;
    AttentionParams att = select_first_coords_params(d, 1);
    att.theta_att_spa[0].fill(0.0);
    att.theta_att_tem[0].fill(0.0);
    Rng rng(19);
    att.k_lin_spa[0] = random_matrix(d, d, rng);
    att.k_lin_tem[0] = random_matrix(d, d, rng);

    SamplePair pair;
    pair.current = random_matrix(2, d, rng);
    pair.previous = random_matrix(2, d, rng);
    ConstructionParams cons;
    cons.theta_spa = Matrix::identity(d);
    cons.theta_tem = Matrix::identity(d);
    cons.p_spa = Matrix(2, 1, 0.3);
    cons.p_tem = Matrix(2, 2, 0.4);
    const auto snap = build_snapshot(pair, cons);

    const Vec z = update_node(0, snap, snap.node_feats, att);
    const Vec k_spa = vecmat(hyperedge_embedding(snap, snap.node_feats, 0), att.k_lin_spa[0]);
    const Vec k_tem = vecmat(hyperedge_embedding(snap, snap.node_feats, 2), att.k_lin_tem[0]);
    for (int k = 0; k < d; ++k) {
        CHECK(z[k] == doctest::Approx(0.5 * (k_spa[k] + k_tem[k])).epsilon(1e-12));
    }
}

TEST_CASE("identical keys make update_node independent of the weights") {
    const int d = 4;
    Rng rng(29);
    AttentionParams att = select_first_coords_params(d, 2);
    for (Matrix& m : att.q_lin) m = random_matrix(d, 2, rng);
    for (Matrix& m : att.theta_att_spa) m = random_matrix(2, 2, rng);
    for (Matrix& m : att.theta_att_tem) m = random_matrix(2, 2, rng);
    const Matrix shared = random_matrix(d, 2, rng);
    att.k_lin_spa = {shared, shared};
    att.k_lin_tem = {shared, shared};

    SamplePair pair;
    const Matrix feats = random_matrix(2, d, rng);
    pair.current = feats;
    pair.previous = feats;  // same features in both timestamps
    ConstructionParams cons;
    cons.theta_spa = Matrix::identity(d);
    cons.theta_tem = Matrix::identity(d);
    cons.p_spa = Matrix(2, 1, -1.0);  // spatial edge: master alone
    cons.p_tem = Matrix(2, 2, -1.0);  // temporal edge: master alone
    const auto snap = build_snapshot(pair, cons);

    // both edges embed to the master feature, so both keys agree and the
    // convex combination is weight-independent
    const Vec z = update_node(0, snap, snap.node_feats, att);
    const Vec key = vecmat(pair.current.row(0), shared);
    Vec expected_in;
    expected_in.insert(expected_in.end(), key.begin(), key.end());
    expected_in.insert(expected_in.end(), key.begin(), key.end());
    const Vec expected = mlp_forward(att.update_mlp, expected_in);
    for (int k = 0; k < d; ++k) CHECK(z[k] == doctest::Approx(expected[k]).epsilon(1e-12));
}

TEST_CASE("heads with identical parameters produce concatenated copies") {
    const int d = 8;
    Rng rng(59);
    AttentionParams att;
    att.num_heads = 2;
    const Matrix q = random_matrix(d, 4, rng);
    const Matrix ks = random_matrix(d, 4, rng);
    const Matrix kt = random_matrix(d, 4, rng);
    const Matrix ts = random_matrix(4, 4, rng);
    const Matrix tt = random_matrix(4, 4, rng);
    att.q_lin = {q, q};
    att.k_lin_spa = {ks, ks};
    att.k_lin_tem = {kt, kt};
    att.theta_att_spa = {ts, ts};
    att.theta_att_tem = {tt, tt};
    att.update_mlp = identity_mlp(d);

    SamplePair pair;
    pair.current = random_matrix(3, d, rng);
    pair.previous = random_matrix(3, d, rng);
    ConstructionParams cons;
    cons.theta_spa = Matrix::identity(d);
    cons.theta_tem = Matrix::identity(d);
    cons.p_spa = Matrix(3, 2, 0.5);
    cons.p_tem = Matrix(3, 3, 1.0 / 3.0);
    const auto snap = build_snapshot(pair, cons);

    const Vec z = update_node(1, snap, snap.node_feats, att);
    for (int k = 0; k < 4; ++k) CHECK(z[k] == z[k + 4]);  // bitwise copies
}

TEST_CASE("readout is the mean of current-timestamp embeddings") {
    NodeEmbeddings z;
    z.z = Matrix(3, 2, 0.0);
    for (int i = 0; i < 3; ++i) {
        z.z(i, 0) = 4.0;
        z.z(i, 1) = -1.0;
    }
    CHECK(readout(z) == Vec{4.0, -1.0});

    NodeEmbeddings two;
    two.z = Matrix(2, 2);
    two.z(0, 0) = 1.0;
    two.z(1, 1) = 1.0;
    CHECK(readout(two) == Vec{0.5, 0.5});
}

TEST_CASE("readout is exactly invariant to node order") {
    Rng rng(61);
    NodeEmbeddings z;
    z.z = random_matrix(6, 5, rng);
    const Vec base = readout(z);
    NodeEmbeddings reversed;
    reversed.z = Matrix(6, 5);
    for (int i = 0; i < 6; ++i) {
        for (int k = 0; k < 5; ++k) reversed.z(5 - i, k) = z.z(i, k);
    }
    CHECK(readout(reversed) == base);
}

TEST_CASE("an empty MLP stack is the identity") {
    const MlpParams empty;
    const Vec x = {1.0, -2.0, 3.0};
    CHECK(mlp_forward(empty, x) == x);
}
