#pragma once

#include <functional>
#include <string>
#include <vector>

#include "sthl/model.hpp"

namespace sthl {

// Accumulates d(total_loss)/d(theta) * scale into every gradient buffer of
// model.store. Call store.zero_grads() first for plain gradients; pass
// scale = 1/B and loop to build a batch mean.
void backward(SthlModel& model, const SamplePair& pair, double alpha, double scale = 1.0);

double batch_loss(const SthlModel& model, std::span<const SamplePair> pairs, double alpha);

// Mean gradient over the batch. Per-sample gradients are reduced in sample
// order, so results are bitwise identical for any thread count.
void batch_backward(SthlModel& model, std::span<const SamplePair> pairs, double alpha,
                    int threads = 1);

struct SlotCheck {
    std::string name;
    double max_rel_err = 0.0;
    double max_abs_err = 0.0;
    std::size_t checked = 0;
    std::size_t boundary_skipped = 0;  // coordinates at exact kinks (p == 0)
    bool pass = true;
};

struct GradCheckReport {
    std::vector<SlotCheck> slots;
    bool pass = true;
    double epsilon = 0.0;
    double tolerance = 0.0;

    const SlotCheck* worst() const;
    std::string to_text() const;
    std::string to_csv() const;
};

// Central finite differences per coordinate against the analytic backward.
// Works on a clone: any |p| < 10*epsilon is first nudged away from the
// selection/l1 kink, and coordinates at exactly 0 are skipped and counted.
// Slots with at most 64 entries are checked exhaustively, larger ones on a
// deterministic evenly spaced sample of 64 coordinates.
GradCheckReport gradcheck(const SthlModel& model, const SamplePair& pair, double alpha,
                          double epsilon = 1e-5, double tolerance = 1e-4);

// Gradcheck over an arbitrary (loss, analytic-gradient) pair sharing a
// parameter store. The model-level gradcheck is built on this; tests use it
// for oracle self-checks and corrupted-gradient negative controls.
GradCheckReport gradcheck_custom(ParamStore& store,
                                 const std::function<double()>& loss_fn,
                                 const std::function<void()>& grad_fn, double epsilon,
                                 double tolerance);

}  // namespace sthl
