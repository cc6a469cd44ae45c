#include <doctest.h>

#include <cmath>

#include "sthl/errors.hpp"
#include "sthl/rng.hpp"
#include "sthl/train.hpp"

using namespace sthl;

namespace {

ModelConfig tiny_config(Ablation ablation = Ablation::none) {
    ModelConfig cfg;
    cfg.channels = 3;
    cfg.feature_dim = 4;
    cfg.num_classes = 2;
    cfg.num_heads = 2;
    cfg.rng_seed = 5;
    cfg.ablation = ablation;
    return cfg;
}

SyntheticSpec small_spec() {
    SyntheticSpec spec;
    spec.num_classes = 2;
    spec.timestamps = 40;
    spec.channels = 3;
    spec.feature_dim = 4;
    spec.class_separation = 2.0;
    spec.noise_std = 0.3;
    spec.interaction_strength = 0.3;
    spec.rng_seed = 9;
    return spec;
}

TrainConfig quick_train() {
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.batch_size = 4;
    cfg.train_fraction = 0.6;
    cfg.val_fraction = 0.4;
    return cfg;
}

SamplePair random_pair(int n, int d, int label, Rng& rng) {
    SamplePair pair;
    pair.current = Matrix(n, d);
    pair.previous = Matrix(n, d);
    for (double& v : pair.current.flat()) v = rng.normal();
    for (double& v : pair.previous.flat()) v = rng.normal();
    pair.label = label;
    return pair;
}

}  // namespace

TEST_CASE("evaluate scores a perfect and a constant classifier correctly") {
    // constant predictor on a balanced 2-class set: acc 0.5, per-class F1s are
    // 2/3 and 0, weighted F1 = 1/3
    SthlModel model = init_model(tiny_config());
    // force the classifier to always pick class 0: zero weights, bias favoring 0
    for (auto& layer : model.classifier.layers) {
        layer.weight.fill(0.0);
        layer.bias.fill(0.0);
    }
    model.classifier.layers.back().bias(0, 0) = 5.0;

    Rng rng(3);
    std::vector<SamplePair> pairs;
    for (int s = 0; s < 10; ++s) pairs.push_back(random_pair(3, 4, s % 2, rng));
    const MetricsReport report = evaluate(model, pairs);
    CHECK(report.accuracy == doctest::Approx(0.5));
    CHECK(report.weighted_f1 == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(report.per_class[0].f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(report.per_class[1].f1 == 0.0);

    // all predictions correct on a one-class set
    std::vector<SamplePair> only_zero;
    for (int s = 0; s < 6; ++s) only_zero.push_back(random_pair(3, 4, 0, rng));
    const MetricsReport perfect = evaluate(model, only_zero);
    CHECK(perfect.accuracy == 1.0);
    CHECK(perfect.weighted_f1 == doctest::Approx(1.0));
}

TEST_CASE("evaluate metric identities hold and order does not matter") {
    SthlModel model = init_model(tiny_config());
    Rng rng(4);
    std::vector<SamplePair> pairs;
    for (int s = 0; s < 12; ++s) pairs.push_back(random_pair(3, 4, int(rng.below(2)), rng));
    const MetricsReport report = evaluate(model, pairs);

    // confusion row sums equal per-class support
    for (int c = 0; c < 2; ++c) {
        int row = 0;
        for (int j = 0; j < 2; ++j) row += report.confusion[c][j];
        CHECK(row == report.per_class[c].support);
    }
    // weighted F1 identity
    double expected = 0.0;
    int total = 0;
    for (const auto& cm : report.per_class) {
        expected += cm.support * cm.f1;
        total += cm.support;
    }
    CHECK(report.weighted_f1 == doctest::Approx(expected / total).epsilon(1e-12));

    std::vector<SamplePair> reversed(pairs.rbegin(), pairs.rend());
    const MetricsReport again = evaluate(model, reversed);
    CHECK(again.accuracy == report.accuracy);
    CHECK(again.weighted_f1 == report.weighted_f1);
    CHECK(again.confusion == report.confusion);
    CHECK(again.mean_loss == doctest::Approx(report.mean_loss).epsilon(1e-12));
}

TEST_CASE("threaded evaluation matches single-threaded") {
    SthlModel model = init_model(tiny_config());
    Rng rng(5);
    std::vector<SamplePair> pairs;
    for (int s = 0; s < 9; ++s) pairs.push_back(random_pair(3, 4, int(rng.below(2)), rng));
    const MetricsReport a = evaluate(model, pairs, 1);
    const MetricsReport b = evaluate(model, pairs, 4);
    CHECK(a.confusion == b.confusion);
    CHECK(a.mean_loss == b.mean_loss);  // same reduction order, bitwise
}

TEST_CASE("a zero learning rate step leaves parameters unchanged") {
    SthlModel model = init_model(tiny_config());
    Rng rng(6);
    const auto pair = random_pair(3, 4, 1, rng);
    TrainConfig cfg;
    cfg.learning_rate = 0.0;  // null optimizer step
    Optimizer opt(cfg, model.store);
    const Vec before = model.store.flatten_values();
    model.store.zero_grads();
    backward(model, pair, model.config.alpha, 1.0);
    opt.step(model.store);
    opt.step(model.store);
    CHECK(model.store.flatten_values() == before);
}

TEST_CASE("one small adaptive step rarely increases the batch loss") {
    // smoothness sanity: lr = 1e-4 over 100 seeded trials
    int improved = 0;
    for (int seed = 0; seed < 100; ++seed) {
        ModelConfig mc = tiny_config();
        mc.rng_seed = 1000 + seed;
        SthlModel model = init_model(mc);
        Rng rng(200 + seed);
        std::vector<SamplePair> batch;
        for (int s = 0; s < 4; ++s) batch.push_back(random_pair(3, 4, int(rng.below(2)), rng));

        TrainConfig cfg;
        cfg.learning_rate = 1e-4;
        Optimizer opt(cfg, model.store);
        const double before = batch_loss(model, batch, model.config.alpha);
        batch_backward(model, batch, model.config.alpha, 1);
        opt.step(model.store);
        const double after = batch_loss(model, batch, model.config.alpha);
        improved += after <= before;
    }
    CHECK(improved >= 95);
}

TEST_CASE("a single pair is driven to near-zero loss and correct label") {
    ModelConfig mc = tiny_config();
    SthlModel model = init_model(mc);
    Rng rng(7);
    const auto pair = random_pair(3, 4, 1, rng);
    const std::vector<SamplePair> batch = {pair};

    TrainConfig cfg;
    cfg.learning_rate = 5e-3;
    Optimizer opt(cfg, model.store);
    const double initial = batch_loss(model, batch, model.config.alpha);
    for (int step = 0; step < 400; ++step) {
        batch_backward(model, batch, model.config.alpha, 1);
        opt.step(model.store);
    }
    const double final_loss = batch_loss(model, batch, model.config.alpha);
    CHECK(final_loss < 0.2 * initial);
    const auto result = forward(model, pair);
    CHECK(argmax(result.logits) == 1);
}

TEST_CASE("split_pairs is chronological by default and respects fractions") {
    TrainConfig cfg;
    cfg.train_fraction = 0.7;
    cfg.val_fraction = 0.3;
    const SplitIndices split = split_pairs(10, cfg);
    REQUIRE(split.train.size() == 7);
    REQUIRE(split.validation.size() == 3);
    for (std::size_t i = 0; i < 7; ++i) CHECK(split.train[i] == i);
    CHECK(split.validation[0] == 7);

    cfg.split_policy = SplitPolicy::shuffled;
    cfg.shuffle_seed = 3;
    const SplitIndices shuffled = split_pairs(10, cfg);
    CHECK(shuffled.train.size() == 7);
    bool moved = false;
    for (std::size_t i = 0; i < 7; ++i) moved = moved || shuffled.train[i] != i;
    CHECK(moved);
}

TEST_CASE("training is deterministic given the seed triple") {
    const WindowedDataset ds = generate_synthetic(small_spec());
    TrainConfig cfg = quick_train();

    ModelConfig mc = tiny_config();
    SthlModel a = init_model(mc);
    const TrainResult ra = train(a, ds, cfg);
    SthlModel b = init_model(mc);
    const TrainResult rb = train(b, ds, cfg);

    REQUIRE(ra.history.size() == rb.history.size());
    for (std::size_t e = 0; e < ra.history.size(); ++e) {
        CHECK(ra.history[e].train_loss == rb.history[e].train_loss);  // bitwise
        CHECK(ra.history[e].val_f1 == rb.history[e].val_f1);
    }
    CHECK(a.store.flatten_values() == b.store.flatten_values());
}

TEST_CASE("training improves the loss on the small synthetic set") {
    const WindowedDataset ds = generate_synthetic(small_spec());
    TrainConfig cfg = quick_train();
    cfg.epochs = 60;
    SthlModel model = init_model(tiny_config());
    const TrainResult result = train(model, ds, cfg);
    CHECK(result.history.back().train_loss < result.history.front().train_loss);
    CHECK(result.validation.accuracy > 0.5);
}

TEST_CASE("train rejects a batch size larger than the pair count") {
    const WindowedDataset ds = generate_synthetic(small_spec());
    TrainConfig cfg = quick_train();
    cfg.batch_size = 1000;
    SthlModel model = init_model(tiny_config());
    CHECK_THROWS_AS(train(model, ds, cfg), ConfigError);
}

TEST_CASE("poisoned parameters abort training with a divergence error") {
    const WindowedDataset ds = generate_synthetic(small_spec());
    SthlModel model = init_model(tiny_config());
    model.construction.theta_spa(0, 0) = std::numeric_limits<double>::quiet_NaN();
    TrainConfig cfg = quick_train();
    CHECK_THROWS_AS(train(model, ds, cfg), DivergenceError);
}

TEST_CASE("pearson adjacency handles the stated degenerate cases") {
    Matrix feats(3, 4);
    // channel 0 constant, channels 1 and 2 identical non-constant rows
    for (int k = 0; k < 4; ++k) {
        feats(0, k) = 2.5;
        feats(1, k) = k * 1.0;
        feats(2, k) = k * 1.0;
    }
    const Matrix adj = pearson_adjacency(feats);
    CHECK(adj(0, 0) == 0.0);  // undefined correlation maps to 0
    CHECK(adj(0, 1) == 0.0);
    CHECK(adj(1, 2) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(adj(1, 1) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("pearson adjacency matches an independent statistics formula") {
    Rng rng(8);
    Matrix feats(4, 6);
    for (double& v : feats.flat()) v = rng.normal();
    const Matrix adj = pearson_adjacency(feats);
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) {
            // direct formula: r = (d sum xy - sum x sum y) / sqrt((d sum x2 -
            // (sum x)^2)(d sum y2 - (sum y)^2))
            double sx = 0, sy = 0, sxy = 0, sxx = 0, syy = 0;
            for (int k = 0; k < 6; ++k) {
                sx += feats(i, k);
                sy += feats(j, k);
                sxy += feats(i, k) * feats(j, k);
                sxx += feats(i, k) * feats(i, k);
                syy += feats(j, k) * feats(j, k);
            }
            const double num = 6.0 * sxy - sx * sy;
            const double den = std::sqrt((6.0 * sxx - sx * sx) * (6.0 * syy - sy * sy));
            CHECK(adj(i, j) == doctest::Approx(num / den).epsilon(1e-10));
        }
    }
    // symmetry comes with the formula
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) CHECK(adj(i, j) == doctest::Approx(adj(j, i)));
    }
}

TEST_CASE("ablation constructors keep config but change the architecture") {
    const SthlModel base = init_model(tiny_config());
    const SthlModel no_hyp = ablate_no_hyperedge(base);
    const SthlModel no_att = ablate_no_attention(base);
    CHECK(no_hyp.config.ablation == Ablation::no_hyperedge);
    CHECK(no_att.config.ablation == Ablation::no_attention);
    CHECK(no_hyp.config.rng_seed == base.config.rng_seed);
    CHECK(no_att.store.size() < base.store.size());
    CHECK(no_hyp.store.find("gc.weight") != nullptr);

    // the no_attention update path: identical edge embeddings pass through
    Rng rng(9);
    const auto pair = random_pair(3, 4, 0, rng);
    const auto result = forward(no_att, pair);
    CHECK(result.logits.size() == 2);
    CHECK(result.snapshot.has_value());
    const auto no_hyp_result = forward(no_hyp, pair);
    CHECK_FALSE(no_hyp_result.snapshot.has_value());
    CHECK(no_hyp_result.recon_loss == 0.0);
}

TEST_CASE("run_ablation_study trains every variant per seed") {
    SyntheticSpec spec = small_spec();
    spec.timestamps = 30;
    const WindowedDataset ds = generate_synthetic(spec);
    TrainConfig cfg = quick_train();
    cfg.epochs = 3;
    const auto runs = run_ablation_study(ds, tiny_config(), cfg, 2);
    REQUIRE(runs.size() == 3);
    CHECK(runs[0].variant == Ablation::none);
    CHECK(runs[1].variant == Ablation::no_attention);
    CHECK(runs[2].variant == Ablation::no_hyperedge);
    for (const auto& run : runs) {
        CHECK(run.val_f1.size() == 2);
        CHECK(run.mean_val_f1 >= 0.0);
        CHECK(run.mean_val_f1 <= 1.0);
    }
}
