#include "splitflow/velocity_field.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <random>
#include <string>

#include "splitflow/errors.hpp"

namespace splitflow {

namespace {

// Atoms beyond this norm switch the covariance to the centered second pass.
constexpr double kLargeAtomNorm = 10.0;
constexpr double kTimeSlack = 1e-12;

void require_interior(double t) {
    if (!(t >= kInteriorEps - kTimeSlack && t <= 1.0 - kInteriorEps + kTimeSlack)) {
        throw DomainError("field time " + std::to_string(t) + " outside [" +
                          std::to_string(kInteriorEps) + ", " +
                          std::to_string(1.0 - kInteriorEps) + "]");
    }
}

void require_finite(const Vec2& x) {
    if (!is_finite(x)) throw DomainError("non-finite evaluation point");
}

struct Moments {
    Vec2 mean;
    Mat2 cov;
    double lse_shift = 0.0;
};

// Online-softmax accumulation of the posterior mean and covariance in one sweep.
Moments fused_moments(std::span<const Vec2> atoms, std::span<const double> log_priors,
                      const ScheduleScalars& sc, const Vec2& x) {
    const double inv_two_sigma2 = 0.5 / sc.sigma2;
    double shift = -std::numeric_limits<double>::infinity();
    double z = 0.0;
    Vec2 sy;
    Mat2 syy;
    double max_norm2 = 0.0;
    for (std::size_t i = 0; i < atoms.size(); ++i) {
        const Vec2& y = atoms[i];
        const double s = log_priors[i] - norm2(x - sc.beta * y) * inv_two_sigma2;
        max_norm2 = std::max(max_norm2, norm2(y));
        if (s > shift) {
            const double rescale = std::exp(shift - s);
            z *= rescale;
            sy *= rescale;
            syy *= rescale;
            shift = s;
        }
        const double e = std::exp(s - shift);
        z += e;
        sy += e * y;
        syy += e * Mat2::outer(y, y);
    }
    Moments out;
    out.lse_shift = shift;
    const double inv_z = 1.0 / z;
    out.mean = inv_z * sy;
    if (max_norm2 > kLargeAtomNorm * kLargeAtomNorm) {
        Mat2 centered;
        for (std::size_t i = 0; i < atoms.size(); ++i) {
            const double e = std::exp(log_priors[i] -
                                      norm2(x - sc.beta * atoms[i]) * inv_two_sigma2 - shift);
            const Vec2 d = atoms[i] - out.mean;
            centered += e * Mat2::outer(d, d);
        }
        out.cov = inv_z * centered;
    } else {
        out.cov = inv_z * syy - Mat2::outer(out.mean, out.mean);
    }
    out.cov = symmetric_part(out.cov);
    return out;
}

FieldEvaluation assemble(const ScheduleScalars& sc, const Vec2& x, const Moments& mom) {
    FieldEvaluation f;
    f.posterior_mean = mom.mean;
    f.posterior_cov = mom.cov;
    f.lse_shift = mom.lse_shift;
    f.velocity = sc.a_coef * (x - sc.beta * mom.mean) + sc.dbeta * mom.mean;
    const double gain = (sc.dbeta - sc.a_coef * sc.beta) * (sc.beta / sc.sigma2);
    f.jacobian = sc.a_coef * Mat2::identity() + gain * mom.cov;
    f.divergence = trace(f.jacobian);
    return f;
}

std::vector<double> log_priors_of(const DiscreteTarget& target) {
    std::vector<double> lp(target.priors.size());
    std::transform(target.priors.begin(), target.priors.end(), lp.begin(),
                   [](double p) { return std::log(p); });
    return lp;
}

}  // namespace

ScheduleScalars schedule_scalars(const Schedule& s, double t) {
    require_interior(t);
    const CoefficientTriple c = s(t);
    const CoefficientDerivatives d = schedule_derivative(s, t);
    ScheduleScalars sc;
    sc.t = t;
    sc.sigma2 = c.alpha * c.alpha + c.gamma * c.gamma;
    if (!(sc.sigma2 > 0.0)) throw SingularTimeError(t, sc.sigma2);
    sc.a_coef = (c.alpha * d.dalpha + c.gamma * d.dgamma) / sc.sigma2;
    sc.beta = c.beta;
    sc.dbeta = d.dbeta;
    return sc;
}

PosteriorWeights posterior_weights(const DiscreteTarget& target, const ScheduleScalars& sc,
                                   const Vec2& x) {
    require_finite(x);
    if (!(sc.sigma2 > 0.0)) throw SingularTimeError(sc.t, sc.sigma2);
    if (target.atoms.empty()) throw DomainError("target has no atoms");
    PosteriorWeights out;
    out.w.resize(target.size());
    const double inv_two_sigma2 = 0.5 / sc.sigma2;
    double shift = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < target.size(); ++i) {
        out.w[i] = std::log(target.priors[i]) -
                   norm2(x - sc.beta * target.atoms[i]) * inv_two_sigma2;
        shift = std::max(shift, out.w[i]);
    }
    if (!std::isfinite(shift)) throw DomainError("non-finite posterior log-score");
    double z = 0.0;
    for (double& w : out.w) {
        w = std::exp(w - shift);
        z += w;
    }
    for (double& w : out.w) w /= z;
    out.lse_shift = shift;
    return out;
}

PosteriorMoments posterior_moments(const DiscreteTarget& target, std::span<const double> weights) {
    if (weights.size() != target.size()) throw DomainError("weight vector length mismatch");
    PosteriorMoments out;
    double max_norm2 = 0.0;
    Mat2 syy;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        const Vec2& y = target.atoms[i];
        out.mean += weights[i] * y;
        syy += weights[i] * Mat2::outer(y, y);
        max_norm2 = std::max(max_norm2, norm2(y));
    }
    if (max_norm2 > kLargeAtomNorm * kLargeAtomNorm) {
        Mat2 centered;
        for (std::size_t i = 0; i < weights.size(); ++i) {
            const Vec2 d = target.atoms[i] - out.mean;
            centered += weights[i] * Mat2::outer(d, d);
        }
        out.cov = centered;
    } else {
        out.cov = syy - Mat2::outer(out.mean, out.mean);
    }
    out.cov = symmetric_part(out.cov);
    return out;
}

FieldEvaluation evaluate_field(const DiscreteTarget& target, const Schedule& s, double t,
                               const Vec2& x) {
    return evaluate_field(target, schedule_scalars(s, t), x);
}

FieldEvaluation evaluate_field(const DiscreteTarget& target, const ScheduleScalars& sc,
                               const Vec2& x) {
    require_finite(x);
    if (target.atoms.empty()) throw DomainError("target has no atoms");
    if (!(sc.sigma2 > 0.0)) throw SingularTimeError(sc.t, sc.sigma2);
    const std::vector<double> lp = log_priors_of(target);
    return assemble(sc, x, fused_moments(target.atoms, lp, sc, x));
}

MonteCarloVelocity monte_carlo_velocity(const DiscreteTarget& target, const Schedule& s, double t,
                                        const Vec2& x, double bin_radius, std::size_t n_samples,
                                        std::uint64_t seed) {
    if (n_samples < 1) throw DomainError("n_samples must be at least 1");
    if (!(bin_radius > 0.0)) throw DomainError("bin_radius must be positive");
    require_interior(t);
    require_finite(x);
    target.validate();
    const CoefficientTriple c = s(t);
    const CoefficientDerivatives d = schedule_derivative(s, t);

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::discrete_distribution<std::size_t> pick(target.priors.begin(), target.priors.end());
    const double r2 = bin_radius * bin_radius;

    std::size_t hits = 0;
    Vec2 sum, sum_sq;
    for (std::size_t k = 0; k < n_samples; ++k) {
        const Vec2 x0{normal(rng), normal(rng)};
        const Vec2& x1 = target.atoms[pick(rng)];
        const Vec2 z{normal(rng), normal(rng)};
        const Vec2 xt = c.alpha * x0 + c.beta * x1 + c.gamma * z;
        if (norm2(xt - x) > r2) continue;
        const Vec2 v = d.dalpha * x0 + d.dbeta * x1 + d.dgamma * z;
        ++hits;
        sum += v;
        sum_sq += Vec2{v.x * v.x, v.y * v.y};
    }
    if (hits < 2) throw InsufficientSamplesError(hits);
    const double n = static_cast<double>(hits);
    MonteCarloVelocity out;
    out.hits = hits;
    out.mean = (1.0 / n) * sum;
    const auto se = [n](double s1, double s2) {
        const double var = std::max(0.0, (s2 - s1 * s1 / n) / (n - 1.0));
        return std::sqrt(var / n);
    };
    out.std_error = {se(sum.x, sum_sq.x), se(sum.y, sum_sq.y)};
    return out;
}

FieldEvaluator closed_form_field(DiscreteTarget target, Schedule schedule,
                                 std::span<const double> precompute_times) {
    target.validate();
    struct State {
        DiscreteTarget target;
        std::vector<double> log_priors;
        Schedule schedule;
        std::vector<ScheduleScalars> cache;  // sorted by t
    };
    auto state = std::make_shared<State>(State{std::move(target), {}, std::move(schedule), {}});
    state->log_priors = log_priors_of(state->target);
    std::vector<double> times(precompute_times.begin(), precompute_times.end());
    std::sort(times.begin(), times.end());
    times.erase(std::unique(times.begin(), times.end()), times.end());
    state->cache.reserve(times.size());
    for (double t : times) state->cache.push_back(schedule_scalars(state->schedule, t));

    return [state](double t, const Vec2& x) -> FieldSample {
        require_finite(x);
        const auto& cache = state->cache;
        auto it = std::lower_bound(cache.begin(), cache.end(), t,
                                   [](const ScheduleScalars& a, double v) { return a.t < v; });
        const ScheduleScalars sc = (it != cache.end() && it->t == t)
                                       ? *it
                                       : schedule_scalars(state->schedule, t);
        const Moments mom = fused_moments(state->target.atoms, state->log_priors, sc, x);
        const FieldEvaluation f = assemble(sc, x, mom);
        return {f.velocity, f.jacobian};
    };
}

}  // namespace splitflow
