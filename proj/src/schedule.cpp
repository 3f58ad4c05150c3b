#include "splitflow/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "splitflow/errors.hpp"
#include "splitflow/pathnet.hpp"

namespace splitflow {

namespace {

void require_unit_interval(double t) {
    if (!(t >= 0.0 && t <= 1.0)) {
        throw DomainError("schedule time outside [0,1]: " + std::to_string(t));
    }
}

CoefficientTriple eval_analytic(const AnalyticParams& p, double t) {
    switch (p.family) {
        case AnalyticFamily::SqrtBridge:
            return {1.0 - t, t, p.gamma_scale * std::sqrt(t * (1.0 - t))};
        case AnalyticFamily::PolyBridge:
            return {1.0 - t, t, p.gamma_scale * t * (1.0 - t)};
        case AnalyticFamily::Constant:
            return p.constant;
    }
    return {};
}

std::string family_name(AnalyticFamily f) {
    switch (f) {
        case AnalyticFamily::SqrtBridge: return "sqrt_bridge";
        case AnalyticFamily::PolyBridge: return "poly_bridge";
        case AnalyticFamily::Constant: return "constant";
    }
    return "unknown";
}

}  // namespace

Schedule Schedule::analytic_default() {
    Schedule s;
    s.kind_ = ScheduleKind::AnalyticDefault;
    s.analytic_ = {AnalyticFamily::SqrtBridge, 1.0, {}};
    return s;
}

Schedule Schedule::sqrt_bridge(double gamma_scale) {
    Schedule s;
    s.kind_ = ScheduleKind::AnalyticCustom;
    s.analytic_ = {AnalyticFamily::SqrtBridge, gamma_scale, {}};
    return s;
}

Schedule Schedule::poly_bridge(double gamma_scale) {
    Schedule s;
    s.kind_ = ScheduleKind::AnalyticCustom;
    s.analytic_ = {AnalyticFamily::PolyBridge, gamma_scale, {}};
    return s;
}

Schedule Schedule::constant(double alpha, double beta, double gamma) {
    Schedule s;
    s.kind_ = ScheduleKind::AnalyticCustom;
    s.analytic_ = {AnalyticFamily::Constant, 0.0, {alpha, beta, gamma}};
    return s;
}

Schedule Schedule::learned(std::shared_ptr<const PathNetParams> net, double derivative_step) {
    if (!net) throw DomainError("learned schedule requires network parameters");
    if (!(derivative_step > 0.0 && derivative_step < 0.5)) {
        throw DomainError("derivative step must lie in (0, 0.5)");
    }
    Schedule s;
    s.kind_ = ScheduleKind::Learned;
    s.net_ = std::move(net);
    s.derivative_step_ = derivative_step;
    return s;
}

CoefficientTriple Schedule::operator()(double t) const {
    if (kind_ == ScheduleKind::Learned) return forward(*net_, t);
    return eval_analytic(analytic_, t);
}

CoefficientTriple eval_schedule(const Schedule& s, double t) {
    require_unit_interval(t);
    return s(t);
}

CoefficientDerivatives eval_schedule_derivative(const Schedule& s, double t, double h) {
    if (!(t > 0.0 && t < 1.0)) {
        throw DomainError("derivative time must lie in (0,1): " + std::to_string(t));
    }
    if (!(h > 0.0 && h <= std::min(t, 1.0 - t))) {
        throw DomainError("central-difference step " + std::to_string(h) +
                          " leaves [0,1] at t=" + std::to_string(t));
    }
    const CoefficientTriple hi = s(t + h);
    const CoefficientTriple lo = s(t - h);
    const double inv = 1.0 / (2.0 * h);
    return {(hi.alpha - lo.alpha) * inv, (hi.beta - lo.beta) * inv, (hi.gamma - lo.gamma) * inv,
            false};
}

CoefficientDerivatives exact_derivative(const Schedule& s, double t) {
    if (s.kind() == ScheduleKind::Learned) {
        throw DomainError("learned schedules have no closed-form derivative");
    }
    if (!(t > 0.0 && t < 1.0)) {
        throw DomainError("derivative time must lie in (0,1): " + std::to_string(t));
    }
    const AnalyticParams& p = s.analytic();
    switch (p.family) {
        case AnalyticFamily::SqrtBridge: {
            const double g = std::sqrt(t * (1.0 - t));
            return {-1.0, 1.0, p.gamma_scale * (1.0 - 2.0 * t) / (2.0 * g), true};
        }
        case AnalyticFamily::PolyBridge:
            return {-1.0, 1.0, p.gamma_scale * (1.0 - 2.0 * t), true};
        case AnalyticFamily::Constant:
            return {0.0, 0.0, 0.0, true};
    }
    return {};
}

CoefficientDerivatives schedule_derivative(const Schedule& s, double t) {
    if (s.kind() != ScheduleKind::Learned) return exact_derivative(s, t);
    const double h = std::min({s.derivative_step(), t, 1.0 - t});
    return eval_schedule_derivative(s, t, h);
}

double boundary_residual(const Schedule& s) {
    const CoefficientTriple c0 = eval_schedule(s, 0.0);
    const CoefficientTriple c1 = eval_schedule(s, 1.0);
    const auto sq = [](double v) { return v * v; };
    return sq(c0.alpha - 1.0) + sq(c0.beta) + sq(c1.alpha) + sq(c1.beta - 1.0) + sq(c0.gamma) +
           sq(c1.gamma);
}

void validate_schedule(const Schedule& s, double tolerance, int grid_points) {
    const double residual = boundary_residual(s);
    if (!(residual < tolerance)) {
        throw DomainError("schedule boundary residual " + std::to_string(residual) +
                          " exceeds " + std::to_string(tolerance));
    }
    for (int i = 1; i < grid_points; ++i) {
        const double t = static_cast<double>(i) / grid_points;
        const CoefficientTriple c = s(t);
        if (!std::isfinite(c.alpha) || !std::isfinite(c.beta) || !std::isfinite(c.gamma)) {
            throw DomainError("non-finite schedule coefficient at t=" + std::to_string(t));
        }
        if (!(c.gamma > 0.0)) {
            throw DomainError("gamma(t) <= 0 at interior t=" + std::to_string(t));
        }
    }
}

std::string to_string(ScheduleKind kind) {
    switch (kind) {
        case ScheduleKind::AnalyticDefault: return "analytic-default";
        case ScheduleKind::AnalyticCustom: return "analytic-custom";
        case ScheduleKind::Learned: return "learned";
    }
    return "unknown";
}

nlohmann::json schedule_to_json(const Schedule& s) {
    nlohmann::json j;
    j["kind"] = to_string(s.kind());
    j["derivative_step"] = s.derivative_step();
    switch (s.kind()) {
        case ScheduleKind::AnalyticDefault:
            j["params"] = nlohmann::json::object();
            break;
        case ScheduleKind::AnalyticCustom: {
            const AnalyticParams& p = s.analytic();
            nlohmann::json params{{"family", family_name(p.family)}};
            if (p.family == AnalyticFamily::Constant) {
                params["values"] = {p.constant.alpha, p.constant.beta, p.constant.gamma};
            } else {
                params["gamma_scale"] = p.gamma_scale;
            }
            j["params"] = params;
            break;
        }
        case ScheduleKind::Learned:
            j["params"] = params_to_json(*s.network());
            break;
    }
    return j;
}

Schedule schedule_from_json(const nlohmann::json& j) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "analytic-default") return Schedule::analytic_default();
    if (kind == "analytic-custom") {
        const auto& p = j.at("params");
        const std::string family = p.at("family").get<std::string>();
        if (family == "sqrt_bridge") return Schedule::sqrt_bridge(p.at("gamma_scale").get<double>());
        if (family == "poly_bridge") return Schedule::poly_bridge(p.at("gamma_scale").get<double>());
        if (family == "constant") {
            const auto v = p.at("values").get<std::vector<double>>();
            if (v.size() != 3) throw DomainError("constant schedule needs three values");
            return Schedule::constant(v[0], v[1], v[2]);
        }
        throw DomainError("unknown analytic family: " + family);
    }
    if (kind == "learned") {
        auto net = std::make_shared<const PathNetParams>(params_from_json(j.at("params")));
        return Schedule::learned(std::move(net),
                                 j.value("derivative_step", kDefaultDerivativeStep));
    }
    throw DomainError("unknown schedule kind: " + kind);
}

}  // namespace splitflow
