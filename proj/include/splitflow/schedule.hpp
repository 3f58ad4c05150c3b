#pragma once

#include <memory>
#include <span>
#include <string>

#include <nlohmann/json.hpp>

namespace splitflow {

struct PathNetParams;

/// Interior clamp for every field evaluation: t in [kInteriorEps, 1 - kInteriorEps].
inline constexpr double kInteriorEps = 1e-3;
/// Default central-difference step for learned schedules.
inline constexpr double kDefaultDerivativeStep = 1e-3;

struct CoefficientTriple {
    double alpha = 0.0;
    double beta = 0.0;
    double gamma = 0.0;
};

struct CoefficientDerivatives {
    double dalpha = 0.0;
    double dbeta = 0.0;
    double dgamma = 0.0;
    bool exact = false;  // true when produced by closed-form differentiation
};

enum class ScheduleKind { AnalyticDefault, AnalyticCustom, Learned };

/// Closed-form coefficient families. All bridges share alpha = 1 - t, beta = t.
enum class AnalyticFamily {
    SqrtBridge,  // gamma = scale * sqrt(t (1 - t))
    PolyBridge,  // gamma = scale * t (1 - t)
    Constant,    // alpha, beta, gamma fixed (violates the boundary constraints; test fixture)
};

struct AnalyticParams {
    AnalyticFamily family = AnalyticFamily::SqrtBridge;
    double gamma_scale = 1.0;
    CoefficientTriple constant{};
};

/// Time-dependent interpolation coefficients (alpha, beta, gamma) of
///   X_t = alpha(t) X_0 + beta(t) X_1 + gamma(t) Z.
/// Immutable after construction; copies share the learned network.
class Schedule {
public:
    /// alpha = 1 - t, beta = t, gamma = sqrt(t (1 - t)).
    static Schedule analytic_default();
    static Schedule sqrt_bridge(double gamma_scale);
    static Schedule poly_bridge(double gamma_scale);
    static Schedule constant(double alpha, double beta, double gamma);
    static Schedule learned(std::shared_ptr<const PathNetParams> net,
                            double derivative_step = kDefaultDerivativeStep);

    ScheduleKind kind() const noexcept { return kind_; }
    double derivative_step() const noexcept { return derivative_step_; }
    const AnalyticParams& analytic() const noexcept { return analytic_; }
    const std::shared_ptr<const PathNetParams>& network() const noexcept { return net_; }

    CoefficientTriple operator()(double t) const;

private:
    Schedule() = default;

    ScheduleKind kind_ = ScheduleKind::AnalyticDefault;
    AnalyticParams analytic_{};
    std::shared_ptr<const PathNetParams> net_;
    double derivative_step_ = kDefaultDerivativeStep;
};

/// (alpha, beta, gamma) at t. Throws DomainError outside [0, 1].
CoefficientTriple eval_schedule(const Schedule& s, double t);

/// Central-difference derivatives (f(t+h) - f(t-h)) / 2h.
/// Requires 0 < t < 1 and 0 < h <= min(t, 1 - t).
CoefficientDerivatives eval_schedule_derivative(const Schedule& s, double t, double h);

/// Closed-form derivatives; only for analytic kinds, 0 < t < 1.
CoefficientDerivatives exact_derivative(const Schedule& s, double t);

/// Preferred derivative: exact for analytic schedules, central differences with the
/// schedule's own step (shrunk to fit inside [0, 1]) for learned ones.
CoefficientDerivatives schedule_derivative(const Schedule& s, double t);

/// (alpha(0)-1)^2 + beta(0)^2 + alpha(1)^2 + (beta(1)-1)^2 + gamma(0)^2 + gamma(1)^2.
double boundary_residual(const Schedule& s);

/// Checks the acceptance conditions for downstream use: boundary residual below
/// `tolerance`, gamma > 0 and all coefficients finite on a uniform interior grid.
/// Throws DomainError describing the first violation.
void validate_schedule(const Schedule& s, double tolerance = 1e-4, int grid_points = 1000);

nlohmann::json schedule_to_json(const Schedule& s);
Schedule schedule_from_json(const nlohmann::json& j);

std::string to_string(ScheduleKind kind);

}  // namespace splitflow
