#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <memory>

#include "splitflow/errors.hpp"
#include "splitflow/pathnet.hpp"
#include "splitflow/schedule.hpp"

using namespace splitflow;

TEST_CASE("default schedule endpoints and midpoint") {
    const Schedule s = Schedule::analytic_default();
    auto c0 = eval_schedule(s, 0.0);
    CHECK(c0.alpha == 1.0);
    CHECK(c0.beta == 0.0);
    CHECK(c0.gamma == 0.0);
    auto c1 = eval_schedule(s, 1.0);
    CHECK(c1.alpha == 0.0);
    CHECK(c1.beta == 1.0);
    CHECK(c1.gamma == 0.0);
    auto cm = eval_schedule(s, 0.5);
    CHECK(cm.alpha == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(cm.beta == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(cm.gamma == doctest::Approx(std::sqrt(0.25)).epsilon(1e-15));
}

TEST_CASE("eval_schedule rejects times outside [0,1]") {
    const Schedule s = Schedule::analytic_default();
    CHECK_THROWS_AS(eval_schedule(s, -1e-9), DomainError);
    CHECK_THROWS_AS(eval_schedule(s, 1.0 + 1e-9), DomainError);
    CHECK_THROWS_AS(eval_schedule(s, std::nan("")), DomainError);
}

TEST_CASE("exact derivative of the default at t=0.5") {
    const auto d = exact_derivative(Schedule::analytic_default(), 0.5);
    CHECK(d.exact);
    CHECK(d.dalpha == -1.0);
    CHECK(d.dbeta == 1.0);
    CHECK(d.dgamma == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("central differences agree with exact derivatives at t=0.3") {
    for (const Schedule& s : {Schedule::analytic_default(), Schedule::sqrt_bridge(0.7),
                              Schedule::poly_bridge(1.3)}) {
        const auto ex = exact_derivative(s, 0.3);
        const auto fd = eval_schedule_derivative(s, 0.3, 1e-4);
        CHECK(std::abs(fd.dalpha - ex.dalpha) < 1e-6);
        CHECK(std::abs(fd.dbeta - ex.dbeta) < 1e-6);
        CHECK(std::abs(fd.dgamma - ex.dgamma) < 1e-6);
        // independent oracle for gamma' of the sqrt bridge family
        if (s.analytic().family == AnalyticFamily::SqrtBridge) {
            const double t = 0.3;
            const double g = s.analytic().gamma_scale * (1 - 2 * t) / (2 * std::sqrt(t * (1 - t)));
            CHECK(ex.dgamma == doctest::Approx(g).epsilon(1e-14));
        }
    }
}

TEST_CASE("central-difference stencil bound") {
    const Schedule s = Schedule::analytic_default();
    CHECK_THROWS_AS(eval_schedule_derivative(s, 0.3, 0.31), DomainError);
    CHECK_THROWS_AS(eval_schedule_derivative(s, 0.3, 0.0), DomainError);
    CHECK_THROWS_AS(eval_schedule_derivative(s, 0.0, 1e-3), DomainError);
    CHECK_NOTHROW(eval_schedule_derivative(s, 0.3, 0.3));
}

TEST_CASE("central-difference error converges at second order") {
    // gamma of the sqrt bridge is smooth away from the endpoints
    const Schedule s = Schedule::analytic_default();
    for (double t : {0.2, 0.4, 0.7}) {
        const double ex = exact_derivative(s, t).dgamma;
        const double e1 = std::abs(eval_schedule_derivative(s, t, 1e-2).dgamma - ex);
        const double e2 = std::abs(eval_schedule_derivative(s, t, 5e-3).dgamma - ex);
        const double ratio = e1 / e2;
        CHECK(ratio >= 3.5);
        CHECK(ratio <= 4.5);
    }
}

TEST_CASE("learned schedule with constant outputs has zero derivative") {
    // widths {1,3}: zero weights make the head constant; soft mode passes a, b through
    auto p = std::make_shared<PathNetParams>(init_pathnet(3, {1, 3}, 0.1, BoundaryMode::Soft));
    for (double& v : p->values) v = 0.0;
    const Schedule s = Schedule::learned(p);
    for (double t : {0.1, 0.5, 0.9}) {
        const auto d = schedule_derivative(s, t);
        CHECK(d.dalpha == 0.0);
        CHECK(d.dbeta == 0.0);
    }
}

TEST_CASE("boundary residual values") {
    CHECK(boundary_residual(Schedule::analytic_default()) == 0.0);
    CHECK(boundary_residual(Schedule::constant(0, 0, 0)) == doctest::Approx(2.0));
    CHECK(boundary_residual(Schedule::constant(1, 1, 1)) == doctest::Approx(4.0));
}

TEST_CASE("validate_schedule accepts bridges and rejects constants") {
    CHECK_NOTHROW(validate_schedule(Schedule::analytic_default()));
    CHECK_NOTHROW(validate_schedule(Schedule::poly_bridge(0.5)));
    CHECK_THROWS_AS(validate_schedule(Schedule::constant(1, 1, 1)), DomainError);
    CHECK_THROWS_AS(validate_schedule(Schedule::poly_bridge(0.0)), DomainError);
}

TEST_CASE("eval_schedule is bit-deterministic") {
    const Schedule s = Schedule::learned(std::make_shared<PathNetParams>(init_pathnet(5)));
    for (double t : {0.0, 0.123, 0.5, 0.999, 1.0}) {
        const auto a = eval_schedule(s, t);
        const auto b = eval_schedule(s, t);
        CHECK(a.alpha == b.alpha);
        CHECK(a.beta == b.beta);
        CHECK(a.gamma == b.gamma);
    }
}

TEST_CASE("learned schedule satisfies the boundary constraints") {
    const Schedule s = Schedule::learned(std::make_shared<PathNetParams>(init_pathnet(11)));
    CHECK(boundary_residual(s) < 1e-20);
    CHECK_NOTHROW(validate_schedule(s));
}

TEST_CASE("schedule JSON round trip") {
    for (const Schedule& s : {Schedule::analytic_default(), Schedule::poly_bridge(0.4),
                              Schedule::constant(0.2, 0.3, 0.4),
                              Schedule::learned(std::make_shared<PathNetParams>(init_pathnet(2)),
                                                5e-4)}) {
        const Schedule r = schedule_from_json(schedule_to_json(s));
        CHECK(r.kind() == s.kind());
        CHECK(r.derivative_step() == s.derivative_step());
        for (double t : {0.0, 0.31, 0.77, 1.0}) {
            const auto a = eval_schedule(s, t);
            const auto b = eval_schedule(r, t);
            CHECK(a.alpha == b.alpha);
            CHECK(a.beta == b.beta);
            CHECK(a.gamma == b.gamma);
        }
    }
    CHECK_THROWS_AS(schedule_from_json(nlohmann::json{{"kind", "mystery"}}), DomainError);
}
