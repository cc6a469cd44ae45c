#include "sthl/autograd.hpp"

#include <atomic>
#include <cassert>
#include <cmath>
#include <sstream>
#include <thread>

#include "sthl/errors.hpp"
#include "trace.hpp"

namespace sthl {

namespace {

Matrix& grad_of(SthlModel& model, const std::string& name) {
    ParamStore::Slot* slot = model.store.find(name);
    if (slot == nullptr) throw std::logic_error("gradient slot missing: " + name);
    return slot->grad;
}

// y = M . x
Vec matvec(const Matrix& m, std::span<const double> x) {
    Vec y(m.rows());
    for (std::size_t j = 0; j < m.rows(); ++j) y[j] = dot(m.row(j), x);
    return y;
}

// m += a * u v^T
void outer_acc(double a, std::span<const double> u, std::span<const double> v, Matrix& m) {
    for (std::size_t j = 0; j < u.size(); ++j) {
        if (u[j] != 0.0) axpy(a * u[j], v, m.row(j));
    }
}

// Reverse pass through an MLP given its forward trace. dout is consumed;
// weight/bias gradients accumulate into the slots named prefix.w{l}/.b{l};
// dx (optional) receives the gradient at the input.
void mlp_backward(const MlpParams& mlp, const detail::MlpTrace& trace, Vec dout,
                  SthlModel& model, const std::string& prefix, std::span<double> dx) {
    for (int l = static_cast<int>(mlp.layers.size()) - 1; l >= 0; --l) {
        const MlpLayer& layer = mlp.layers[l];
        const Vec& in = trace.outs[l];
        const Vec& out = trace.outs[l + 1];

        Vec dpre;
        if (l + 1 < static_cast<int>(mlp.layers.size())) {
            dpre.assign(out.size(), 0.0);
            tanh_backward(out, dout, dpre);
        } else {
            dpre = std::move(dout);
        }

        Matrix& dw = grad_of(model, prefix + ".w" + std::to_string(l));
        Matrix& db = grad_of(model, prefix + ".b" + std::to_string(l));
        axpy(1.0, dpre, db.row(0));
        if (l > 0) {
            Vec din(in.size(), 0.0);
            vecmat_backward(in, layer.weight, dpre, din, &dw);
            dout = std::move(din);
        } else {
            vecmat_backward(in, layer.weight, dpre, dx, &dw);
        }
    }
}

void backward_hyperedge_paths(SthlModel& model, const SamplePair& pair,
                              const detail::ForwardTrace& trace, std::span<const double> dg,
                              double recon_scale) {
    const ModelConfig& cfg = model.config;
    const int n = cfg.channels;
    const std::size_t d = cfg.feature_dim;
    const AttentionParams& att = model.attention;
    const ConstructionParams& cons = model.construction;

    Matrix& d_theta_spa = grad_of(model, "construction.theta_spa");
    Matrix& d_theta_tem = grad_of(model, "construction.theta_tem");
    Matrix& d_p_spa = grad_of(model, "construction.p_spa");
    Matrix& d_p_tem = grad_of(model, "construction.p_tem");

    Vec dz(d);
    Vec du(d);
    Vec dE_spa(d), dE_tem(d);
    for (int i = 0; i < n; ++i) {
        const detail::MasterTrace& mt = trace.masters[i];
        const auto master_feat = pair.current.row(i);

        // readout mean: every current-timestamp node receives dg / N
        for (std::size_t k = 0; k < d; ++k) dz[k] = dg[k] / double(n);

        std::fill(du.begin(), du.end(), 0.0);
        mlp_backward(att.update_mlp, mt.update_trace, dz, model, "update_mlp", du);

        std::fill(dE_spa.begin(), dE_spa.end(), 0.0);
        std::fill(dE_tem.begin(), dE_tem.end(), 0.0);
        if (cfg.ablation == Ablation::none) {
            const std::size_t dk = d / att.num_heads;
            const double inv_sqrt_d = 1.0 / std::sqrt(double(d));
            for (int h = 0; h < att.num_heads; ++h) {
                const std::span<const double> dm(du.data() + h * dk, dk);
                const Vec& k_spa = mt.k_spa[h];
                const Vec& k_tem = mt.k_tem[h];
                const double w_spa = mt.w_spa[h];
                const double w_tem = mt.w_tem[h];

                // m = w_spa k_spa + w_tem k_tem
                const double dw_spa = dot(dm, k_spa);
                const double dw_tem = dot(dm, k_tem);
                Vec dk_spa(dk, 0.0), dk_tem(dk, 0.0);
                axpy(w_spa, dm, dk_spa);
                axpy(w_tem, dm, dk_tem);

                // two-way softmax
                const double inner = dw_spa * w_spa + dw_tem * w_tem;
                const double da_spa = w_spa * (dw_spa - inner);
                const double da_tem = w_tem * (dw_tem - inner);

                // att = q . Theta . k^T / sqrt(d)
                Vec dq(dk, 0.0);
                axpy(da_spa * inv_sqrt_d, matvec(att.theta_att_spa[h], k_spa), dq);
                axpy(da_tem * inv_sqrt_d, matvec(att.theta_att_tem[h], k_tem), dq);
                outer_acc(da_spa * inv_sqrt_d, mt.q[h], k_spa,
                          grad_of(model, "attention.theta_att_spa.h" + std::to_string(h)));
                outer_acc(da_tem * inv_sqrt_d, mt.q[h], k_tem,
                          grad_of(model, "attention.theta_att_tem.h" + std::to_string(h)));
                axpy(da_spa * inv_sqrt_d, vecmat(mt.q[h], att.theta_att_spa[h]), dk_spa);
                axpy(da_tem * inv_sqrt_d, vecmat(mt.q[h], att.theta_att_tem[h]), dk_tem);

                // projections
                vecmat_backward(master_feat, att.q_lin[h], dq, {},
                                &grad_of(model, "attention.q_lin.h" + std::to_string(h)));
                vecmat_backward(mt.e_spa, att.k_lin_spa[h], dk_spa, dE_spa,
                                &grad_of(model, "attention.k_lin_spa.h" + std::to_string(h)));
                vecmat_backward(mt.e_tem, att.k_lin_tem[h], dk_tem, dE_tem,
                                &grad_of(model, "attention.k_lin_tem.h" + std::to_string(h)));
            }
        } else {
            // no_attention: update input is the plain mean of the embeddings
            axpy(0.5, du, dE_spa);
            axpy(0.5, du, dE_tem);
        }

        // hyperedge embedding: E = (x_master + sum p_j x_j) / (1 + sum p_j);
        // only selected coefficients carry gradient through this path
        const double e_dot_spa = dot(dE_spa, mt.e_spa);
        for (std::size_t k : mt.sel_spa) {
            const auto slave_feat = pair.current.row(mt.cand_spa[k]);
            d_p_spa(i, k) += (dot(dE_spa, slave_feat) - e_dot_spa) / mt.denom_spa;
        }
        const double e_dot_tem = dot(dE_tem, mt.e_tem);
        for (std::size_t k : mt.sel_tem) {
            const auto slave_feat = pair.previous.row(k);
            d_p_tem(i, k) += (dot(dE_tem, slave_feat) - e_dot_tem) / mt.denom_tem;
        }

        // reconstruction loss: lambda (c_spa + c_tem) + l1 + gamma l2 per row
        if (recon_scale != 0.0) {
            if (cfg.lambda != 0.0 && mt.c_spa > 0.0) {
                const double f = recon_scale * cfg.lambda / mt.c_spa;
                outer_acc(f, master_feat, mt.r_spa, d_theta_spa);
                for (int k = 0; k < n - 1; ++k) {
                    d_p_spa(i, k) -= f * dot(pair.current.row(mt.cand_spa[k]), mt.r_spa);
                }
            }
            if (cfg.lambda != 0.0 && mt.c_tem > 0.0) {
                const double f = recon_scale * cfg.lambda / mt.c_tem;
                outer_acc(f, master_feat, mt.r_tem, d_theta_tem);
                for (int k = 0; k < n; ++k) {
                    d_p_tem(i, k) -= f * dot(pair.previous.row(k), mt.r_tem);
                }
            }
            l1_norm_backward(cons.p_spa.row(i), recon_scale, d_p_spa.row(i));
            l1_norm_backward(cons.p_tem.row(i), recon_scale, d_p_tem.row(i));
            l2_norm_backward(cons.p_spa.row(i), l2_norm(cons.p_spa.row(i)),
                             recon_scale * cfg.gamma, d_p_spa.row(i));
            l2_norm_backward(cons.p_tem.row(i), l2_norm(cons.p_tem.row(i)),
                             recon_scale * cfg.gamma, d_p_tem.row(i));
        }
    }
}

void backward_no_hyperedge(SthlModel& model, const SamplePair& pair,
                           const detail::ForwardTrace& trace, std::span<const double> dg) {
    const std::size_t n = pair.current.rows();
    const std::size_t d = pair.current.cols();
    const double w_cur = model.mix_current(0, 0);
    const double w_prev = model.mix_previous(0, 0);

    Matrix& d_gc_w = grad_of(model, "gc.weight");
    Matrix& d_gc_b = grad_of(model, "gc.bias");

    // z = w_cur s_cur + w_prev s_prev, dz_i = dg / N
    double d_w_cur = 0.0, d_w_prev = 0.0;
    Matrix dpre_cur(n, d), dpre_prev(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < d; ++k) {
            const double dz = dg[k] / double(n);
            d_w_cur += dz * trace.s_cur(i, k);
            d_w_prev += dz * trace.s_prev(i, k);
            const double s1 = trace.s_cur(i, k);
            const double s2 = trace.s_prev(i, k);
            dpre_cur(i, k) = w_cur * dz * (1.0 - s1 * s1);
            dpre_prev(i, k) = w_prev * dz * (1.0 - s2 * s2);
        }
    }
    grad_of(model, "mix.current")(0, 0) += d_w_cur;
    grad_of(model, "mix.previous")(0, 0) += d_w_prev;

    // s = tanh(gc_in . W + b): dW += gc_in^T dpre, db += column sums
    matmul_backward(trace.gc_in_cur, model.gc_weight, dpre_cur, nullptr, &d_gc_w);
    matmul_backward(trace.gc_in_prev, model.gc_weight, dpre_prev, nullptr, &d_gc_w);
    for (std::size_t i = 0; i < n; ++i) {
        axpy(1.0, dpre_cur.row(i), d_gc_b.row(0));
        axpy(1.0, dpre_prev.row(i), d_gc_b.row(0));
    }
}

}  // namespace

void backward(SthlModel& model, const SamplePair& pair, double alpha, double scale) {
    detail::ForwardTrace trace;
    detail::run_forward(model, pair, trace);

    const int label = pair.label;
    if (label < 0 || std::size_t(label) >= trace.logits.size()) {
        throw DimensionError("backward: label out of range");
    }

    // d(total_loss)/d(logits) = (1 - alpha) (softmax - onehot)
    const Vec probs = softmax(trace.logits);
    Vec dlogits(probs.size());
    for (std::size_t c = 0; c < probs.size(); ++c) {
        dlogits[c] = scale * (1.0 - alpha) * (probs[c] - (int(c) == label ? 1.0 : 0.0));
    }

    Vec dg(trace.g.size(), 0.0);
    mlp_backward(model.classifier, trace.cls_trace, std::move(dlogits), model, "classifier",
                 dg);

    if (model.config.ablation == Ablation::no_hyperedge) {
        backward_no_hyperedge(model, pair, trace, dg);
    } else {
        backward_hyperedge_paths(model, pair, trace, dg, scale * alpha);
    }
}

double batch_loss(const SthlModel& model, std::span<const SamplePair> pairs, double alpha) {
    double sum = 0.0;
    for (const SamplePair& pair : pairs) {
        const ForwardResult r = forward(model, pair);
        sum += total_loss(r.logits, pair.label, r.recon_loss, alpha);
    }
    return sum / double(pairs.size());
}

void batch_backward(SthlModel& model, std::span<const SamplePair> pairs, double alpha,
                    int threads) {
    if (pairs.empty()) throw DimensionError("batch_backward: empty batch");
    const double scale = 1.0 / double(pairs.size());
    const std::size_t count = pairs.size();

    // Per-sample gradients are always reduced in sample order, so the result
    // is bitwise identical for any thread count.
    std::vector<Vec> per_sample(count);
    if (threads <= 1 || count < 2) {
        for (std::size_t s = 0; s < count; ++s) {
            model.store.zero_grads();
            backward(model, pairs[s], alpha, scale);
            per_sample[s] = model.store.flatten_grads();
        }
    } else {
        std::atomic<std::size_t> next{0};
        auto worker = [&]() {
            SthlModel local(model);
            for (std::size_t s = next.fetch_add(1); s < count; s = next.fetch_add(1)) {
                local.store.zero_grads();
                backward(local, pairs[s], alpha, scale);
                per_sample[s] = local.store.flatten_grads();
            }
        };
        std::vector<std::thread> pool;
        const std::size_t workers = std::min<std::size_t>(threads, count);
        pool.reserve(workers);
        for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(worker);
        for (std::thread& t : pool) t.join();
    }

    model.store.zero_grads();
    for (std::size_t s = 0; s < count; ++s) {
        std::size_t off = 0;
        for (auto& slot : model.store) {
            auto g = slot.grad.flat();
            axpy(1.0, std::span<const double>(per_sample[s]).subspan(off, g.size()), g);
            off += g.size();
        }
    }
}

const SlotCheck* GradCheckReport::worst() const {
    const SlotCheck* w = nullptr;
    for (const SlotCheck& s : slots) {
        if (w == nullptr || s.max_rel_err > w->max_rel_err) w = &s;
    }
    return w;
}

std::string GradCheckReport::to_text() const {
    std::ostringstream out;
    char line[160];
    std::snprintf(line, sizeof line, "%-28s %12s %12s %8s %8s %6s\n", "slot", "max_rel",
                  "max_abs", "checked", "skipped", "pass");
    out << line;
    for (const SlotCheck& s : slots) {
        std::snprintf(line, sizeof line, "%-28s %12.3e %12.3e %8zu %8zu %6s\n",
                      s.name.c_str(), s.max_rel_err, s.max_abs_err, s.checked,
                      s.boundary_skipped, s.pass ? "ok" : "FAIL");
        out << line;
    }
    std::snprintf(line, sizeof line, "overall: %s (epsilon=%g, tolerance=%g)\n",
                  pass ? "PASS" : "FAIL", epsilon, tolerance);
    out << line;
    return out.str();
}

std::string GradCheckReport::to_csv() const {
    std::ostringstream out;
    out << "slot,max_rel_err,max_abs_err,checked,boundary_skipped,pass\n";
    char line[160];
    for (const SlotCheck& s : slots) {
        std::snprintf(line, sizeof line, "%s,%.17g,%.17g,%zu,%zu,%d\n", s.name.c_str(),
                      s.max_rel_err, s.max_abs_err, s.checked, s.boundary_skipped,
                      s.pass ? 1 : 0);
        out << line;
    }
    return out.str();
}

GradCheckReport gradcheck_custom(ParamStore& store,
                                 const std::function<double()>& loss_fn,
                                 const std::function<void()>& grad_fn, double epsilon,
                                 double tolerance) {
    if (epsilon <= 0.0) throw ConfigError("gradcheck: epsilon must be > 0");
    grad_fn();

    GradCheckReport report;
    report.epsilon = epsilon;
    report.tolerance = tolerance;

    constexpr std::size_t kExhaustiveLimit = 64;
    for (auto& slot : store) {
        SlotCheck check;
        check.name = slot.name;
        const std::size_t size = slot.value->size();
        const bool kink_prone = slot.name.rfind("construction.p_", 0) == 0;

        std::vector<std::size_t> coords;
        if (size <= kExhaustiveLimit) {
            coords.resize(size);
            for (std::size_t i = 0; i < size; ++i) coords[i] = i;
        } else {
            coords.reserve(kExhaustiveLimit);
            for (std::size_t t = 0; t < kExhaustiveLimit; ++t) {
                coords.push_back(t * size / kExhaustiveLimit);
            }
        }

        bool finite = true;
        for (std::size_t idx : coords) {
            double& v = slot.value->flat()[idx];
            if (kink_prone && v == 0.0) {
                ++check.boundary_skipped;  // l1 / selection kink sits exactly here
                continue;
            }
            const double old = v;
            v = old + epsilon;
            const double lp = loss_fn();
            v = old - epsilon;
            const double lm = loss_fn();
            v = old;
            const double numeric = (lp - lm) / (2.0 * epsilon);
            const double analytic = slot.grad.flat()[idx];
            if (!std::isfinite(numeric) || !std::isfinite(analytic)) {
                finite = false;
                continue;
            }
            const double abs_err = std::abs(numeric - analytic);
            check.max_abs_err = std::max(check.max_abs_err, abs_err);
            // absolute regime when both values are essentially zero
            if (std::abs(numeric) >= 1e-8 || std::abs(analytic) >= 1e-8) {
                const double rel = abs_err / std::max(std::abs(numeric), std::abs(analytic));
                check.max_rel_err = std::max(check.max_rel_err, rel);
            }
            ++check.checked;
        }
        check.pass = finite && check.max_rel_err <= tolerance;
        report.pass = report.pass && check.pass;
        report.slots.push_back(std::move(check));
    }
    return report;
}

GradCheckReport gradcheck(const SthlModel& model, const SamplePair& pair, double alpha,
                          double epsilon, double tolerance) {
    SthlModel probe(model);
    // move coefficients off the l1/selection kinks so central differences stay
    // on one smooth piece
    for (const char* name : {"construction.p_spa", "construction.p_tem"}) {
        if (ParamStore::Slot* slot = probe.store.find(name)) {
            for (double& v : slot->value->flat()) {
                if (v != 0.0 && std::abs(v) < 10.0 * epsilon) {
                    v = v > 0.0 ? 10.0 * epsilon : -10.0 * epsilon;
                }
            }
        }
    }
    auto loss_fn = [&]() {
        const ForwardResult r = forward(probe, pair);
        return total_loss(r.logits, pair.label, r.recon_loss, alpha);
    };
    auto grad_fn = [&]() {
        probe.store.zero_grads();
        backward(probe, pair, alpha, 1.0);
    };
    return gradcheck_custom(probe.store, loss_fn, grad_fn, epsilon, tolerance);
}

}  // namespace sthl
