#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "splitflow/datasets.hpp"
#include "splitflow/linalg.hpp"
#include "splitflow/schedule.hpp"

namespace splitflow {

// Closed-form Eulerian velocity of the interpolant with a N(0, I_2) prior and a
// finite-support target. Conditioned on X_1 = y_i, X_t ~ N(beta y_i, sigma^2 I), so
//   v(t,x)     = A (x - beta m) + beta' m
//   grad v     = A I + (beta' - A beta) (beta / sigma^2) Cov_w(Y)
// with posterior weights w_i ~ pi_i exp(-|x - beta y_i|^2 / (2 sigma^2)).

/// Time-only quantities shared by every spatial evaluation at one t.
struct ScheduleScalars {
    double t = 0.0;
    double sigma2 = 0.0;  // alpha^2 + gamma^2
    double a_coef = 0.0;  // (alpha alpha' + gamma gamma') / sigma^2
    double beta = 0.0;
    double dbeta = 0.0;
};

/// Requires t in [kInteriorEps, 1 - kInteriorEps]; throws SingularTimeError when
/// sigma^2 <= 0.
ScheduleScalars schedule_scalars(const Schedule& s, double t);

struct PosteriorWeights {
    std::vector<double> w;
    double lse_shift = 0.0;  // max_i log-score subtracted before exponentiating
};

/// Softmax over log pi_i - |x - beta y_i|^2 / (2 sigma^2), evaluated with a max shift.
PosteriorWeights posterior_weights(const DiscreteTarget& target, const ScheduleScalars& sc,
                                   const Vec2& x);

struct PosteriorMoments {
    Vec2 mean;
    Mat2 cov;
};

/// Mean and covariance of the atoms under `weights`; the covariance is symmetrized.
PosteriorMoments posterior_moments(const DiscreteTarget& target, std::span<const double> weights);

struct FieldEvaluation {
    Vec2 velocity;
    Mat2 jacobian;
    double divergence = 0.0;
    Vec2 posterior_mean;
    Mat2 posterior_cov;
    double lse_shift = 0.0;
};

FieldEvaluation evaluate_field(const DiscreteTarget& target, const Schedule& s, double t,
                               const Vec2& x);

/// Hot path: single fused pass over the atoms, no allocation.
FieldEvaluation evaluate_field(const DiscreteTarget& target, const ScheduleScalars& sc,
                               const Vec2& x);

struct MonteCarloVelocity {
    Vec2 mean;
    Vec2 std_error;  // per component, sample std / sqrt(hits)
    std::size_t hits = 0;
};

/// Conditional average of the pathwise velocity alpha' X_0 + beta' X_1 + gamma' Z over
/// simulated samples with |X_t - x| <= bin_radius. Independent of the closed form.
/// Throws InsufficientSamplesError when fewer than two samples land in the bin.
MonteCarloVelocity monte_carlo_velocity(const DiscreteTarget& target, const Schedule& s, double t,
                                        const Vec2& x, double bin_radius, std::size_t n_samples,
                                        std::uint64_t seed);

/// Velocity and Jacobian at one space-time point; the interface the trajectory
/// integrator consumes.
struct FieldSample {
    Vec2 velocity;
    Mat2 jacobian;
};
using FieldEvaluator = std::function<FieldSample(double t, const Vec2& x)>;

/// Closed-form evaluator. ScheduleScalars for the listed times are computed up front
/// and reused on exact matches (the learned schedule is costly to evaluate).
FieldEvaluator closed_form_field(DiscreteTarget target, Schedule schedule,
                                 std::span<const double> precompute_times = {});

}  // namespace splitflow
