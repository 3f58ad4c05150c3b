#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "splitflow/errors.hpp"
#include "splitflow/velocity_field.hpp"

using namespace splitflow;

namespace {

DiscreteTarget two_atoms() { return DiscreteTarget::uniform({{1, 0}, {-1, 0}}); }

DiscreteTarget random_target(std::mt19937_64& rng, int n) {
    std::uniform_real_distribution<double> u(-2, 2);
    std::vector<Vec2> atoms;
    std::vector<double> priors;
    double s = 0;
    for (int i = 0; i < n; ++i) {
        atoms.push_back({u(rng), u(rng)});
        priors.push_back(0.2 + std::abs(u(rng)));
        s += priors.back();
    }
    for (double& p : priors) p /= s;
    return {atoms, priors};
}

// Plain velocity oracle: weights without a shift, direct sums.
Vec2 naive_velocity(const DiscreteTarget& tg, double t, Vec2 x) {
    const double a = 1 - t, g = std::sqrt(t * (1 - t));
    const double da = -1, dg = (1 - 2 * t) / (2 * g);
    const double s2 = a * a + g * g;
    const double A = (a * da + g * dg) / s2;
    double z = 0;
    Vec2 m;
    for (std::size_t i = 0; i < tg.size(); ++i) {
        const double w = tg.priors[i] * std::exp(-norm2(x - t * tg.atoms[i]) / (2 * s2));
        z += w;
        m += w * tg.atoms[i];
    }
    m = (1 / z) * m;
    return A * (x - t * m) + m;
}

}  // namespace

TEST_CASE("schedule scalars at t=0.5 and near 0") {
    const Schedule s = Schedule::analytic_default();
    const auto sc = schedule_scalars(s, 0.5);
    CHECK(sc.sigma2 == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(sc.a_coef == doctest::Approx(-1.0).epsilon(1e-14));
    CHECK(sc.beta == 0.5);
    CHECK(sc.dbeta == 1.0);
    const auto lo = schedule_scalars(s, kInteriorEps);
    CHECK(lo.sigma2 == doctest::Approx(1 - kInteriorEps).epsilon(1e-14));
    CHECK(lo.a_coef == doctest::Approx(-1.0 / (2 * (1 - kInteriorEps))).epsilon(1e-14));
    CHECK_THROWS_AS(schedule_scalars(s, 0.0), DomainError);
    CHECK_THROWS_AS(schedule_scalars(s, 1.0), DomainError);
}

TEST_CASE("A vanishes when alpha=1 with zero derivative and gamma=0") {
    // constant schedule: alpha' = gamma' = 0 gives A = 0
    const auto sc = schedule_scalars(Schedule::constant(1, 0.3, 0), 0.4);
    CHECK(sc.a_coef == 0.0);
    CHECK_THROWS_AS(schedule_scalars(Schedule::constant(0, 0.3, 0), 0.4), SingularTimeError);
}

TEST_CASE("posterior weights examples") {
    const Schedule s = Schedule::analytic_default();
    const auto sc = schedule_scalars(s, 0.5);
    const auto one = posterior_weights(DiscreteTarget::uniform({{3, 4}}), sc, {0.1, -2});
    REQUIRE(one.w.size() == 1);
    CHECK(one.w[0] == 1.0);

    for (double t : {0.01, 0.5, 0.97}) {
        const auto w = posterior_weights(two_atoms(), schedule_scalars(s, t), {0, 1.7});
        CHECK(w.w[0] == doctest::Approx(0.5).epsilon(1e-15));
        CHECK(w.w[1] == doctest::Approx(0.5).epsilon(1e-15));
    }

    const auto w = posterior_weights(two_atoms(), sc, {0.25, 0});
    CHECK(w.w[0] == doctest::Approx(1 / (1 + std::exp(-0.5))).epsilon(1e-14));
}

TEST_CASE("posterior weights stay on the simplex for huge exponents") {
    const Schedule s = Schedule::analytic_default();
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-200, 200);
    for (int trial = 0; trial < 200; ++trial) {
        auto tg = random_target(rng, 1 + trial % 16);
        for (Vec2& a : tg.atoms) a = 50.0 * a;
        const auto sc = schedule_scalars(s, 1 - kInteriorEps);
        const auto w = posterior_weights(tg, sc, {u(rng), u(rng)});
        double sum = 0;
        for (double v : w.w) {
            CHECK(v >= 0.0);
            sum += v;
        }
        CHECK(std::abs(sum - 1.0) < 1e-12);
    }
    CHECK_THROWS_AS(posterior_weights(two_atoms(), schedule_scalars(s, 0.5), {std::nan(""), 0}),
                    DomainError);
}

TEST_CASE("posterior moments") {
    const auto one = posterior_moments(DiscreteTarget::uniform({{2, -1}}), std::vector<double>{1.0});
    CHECK(one.mean.x == 2);
    CHECK(one.mean.y == -1);
    CHECK(frobenius(one.cov) == 0.0);

    const auto two = posterior_moments(two_atoms(), std::vector<double>{0.5, 0.5});
    CHECK(two.mean.x == 0.0);
    CHECK(two.cov.a11 == doctest::Approx(1.0));
    CHECK(two.cov.a12 == 0.0);
    CHECK(two.cov.a22 == 0.0);

    const auto tg = DiscreteTarget::uniform({{1, 2}, {3, -1}, {0, 5}});
    const auto hot = posterior_moments(tg, std::vector<double>{0, 1, 0});
    CHECK(hot.mean.x == 3);
    CHECK(hot.mean.y == -1);
    CHECK(frobenius(hot.cov) < 1e-12);
}

TEST_CASE("covariance is symmetric PSD and stable for far atoms") {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 100; ++trial) {
        auto tg = random_target(rng, 2 + trial % 10);
        const Vec2 shift{1e6, -3e5};
        for (Vec2& a : tg.atoms) a = a + shift;
        const auto far = posterior_moments(tg, tg.priors);
        for (Vec2& a : tg.atoms) a = a - shift;
        const auto near = posterior_moments(tg, tg.priors);
        CHECK(far.cov.a12 == far.cov.a21);
        CHECK(trace(far.cov) >= 0.0);
        CHECK(det(near.cov) >= -1e-12);
        CHECK(max_abs_diff(far.cov, near.cov) < 1e-6);
    }
}

TEST_CASE("single atom field") {
    const Vec2 y{0.7, -1.2};
    const auto tg = DiscreteTarget::uniform({y});
    const Schedule s = Schedule::analytic_default();
    const auto sc = schedule_scalars(s, 0.37);
    const Vec2 x{0.3, 0.9};
    const auto f = evaluate_field(tg, s, 0.37, x);
    CHECK(f.jacobian.a11 == sc.a_coef);
    CHECK(f.jacobian.a22 == sc.a_coef);
    CHECK(f.jacobian.a12 == 0.0);
    CHECK(f.jacobian.a21 == 0.0);
    const Vec2 v = sc.a_coef * (x - sc.beta * y) + sc.dbeta * y;
    CHECK(f.velocity.x == doctest::Approx(v.x).epsilon(1e-14));
    CHECK(f.velocity.y == doctest::Approx(v.y).epsilon(1e-14));
}

TEST_CASE("two-atom jacobian at the origin") {
    const auto f = evaluate_field(two_atoms(), Schedule::analytic_default(), 0.5, {0, 0});
    CHECK(f.jacobian.a11 == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(f.jacobian.a22 == doctest::Approx(-1.0).epsilon(1e-14));
    CHECK(std::abs(f.jacobian.a12) < 1e-15);
    CHECK(f.divergence == doctest::Approx(-0.5).epsilon(1e-14));
}

TEST_CASE("velocity matches an independent direct-sum oracle") {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(-2, 2), ut(0.05, 0.9);
    const Schedule s = Schedule::analytic_default();
    for (int trial = 0; trial < 200; ++trial) {
        const auto tg = random_target(rng, 1 + trial % 16);
        const double t = ut(rng);
        const Vec2 x{u(rng), u(rng)};
        const Vec2 v = evaluate_field(tg, s, t, x).velocity;
        const Vec2 ref = naive_velocity(tg, t, x);
        CHECK(std::abs(v.x - ref.x) < 1e-10);
        CHECK(std::abs(v.y - ref.y) < 1e-10);
    }
}

TEST_CASE("jacobian matches finite differences and converges at second order") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-2, 2), ut(0.05, 0.9);
    const Schedule s = Schedule::analytic_default();
    auto fd = [&](const DiscreteTarget& tg, double t, Vec2 x, double h) {
        const Vec2 dx = (1 / (2 * h)) * (evaluate_field(tg, s, t, x + Vec2{h, 0}).velocity -
                                         evaluate_field(tg, s, t, x - Vec2{h, 0}).velocity);
        const Vec2 dy = (1 / (2 * h)) * (evaluate_field(tg, s, t, x + Vec2{0, h}).velocity -
                                         evaluate_field(tg, s, t, x - Vec2{0, h}).velocity);
        return Mat2{dx.x, dy.x, dx.y, dy.y};
    };
    int richardson_ok = 0, richardson_total = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const auto tg = random_target(rng, 1 + trial % 16);
        const double t = ut(rng);
        const Vec2 x{u(rng), u(rng)};
        const auto f = evaluate_field(tg, s, t, x);
        CHECK(f.jacobian.a12 == doctest::Approx(f.jacobian.a21).epsilon(1e-12));
        CHECK(max_abs_diff(f.jacobian, fd(tg, t, x, 1e-5)) < 1e-4);
        const double e1 = max_abs_diff(f.jacobian, fd(tg, t, x, 2e-2));
        const double e2 = max_abs_diff(f.jacobian, fd(tg, t, x, 1e-2));
        if (e1 > 1e-7) {
            ++richardson_total;
            const double r = e1 / e2;
            richardson_ok += (r > 3.0 && r < 5.0);
        }
    }
    CHECK(richardson_ok >= richardson_total * 9 / 10);
}

TEST_CASE("weight-gradient identity") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(-2, 2), ut(0.05, 0.9);
    const Schedule s = Schedule::analytic_default();
    const double h = 1e-6;
    for (int trial = 0; trial < 100; ++trial) {
        const auto tg = random_target(rng, 2 + trial % 8);
        const auto sc = schedule_scalars(s, ut(rng));
        const Vec2 x{u(rng), u(rng)};
        const auto w = posterior_weights(tg, sc, x);
        const Vec2 m = posterior_moments(tg, w.w).mean;
        const auto wxp = posterior_weights(tg, sc, x + Vec2{h, 0}).w;
        const auto wxm = posterior_weights(tg, sc, x - Vec2{h, 0}).w;
        const auto wyp = posterior_weights(tg, sc, x + Vec2{0, h}).w;
        const auto wym = posterior_weights(tg, sc, x - Vec2{0, h}).w;
        for (std::size_t i = 0; i < tg.size(); ++i) {
            const Vec2 analytic = (sc.beta / sc.sigma2 * w.w[i]) * (tg.atoms[i] - m);
            CHECK(std::abs((wxp[i] - wxm[i]) / (2 * h) - analytic.x) < 1e-5);
            CHECK(std::abs((wyp[i] - wym[i]) / (2 * h) - analytic.y) < 1e-5);
        }
    }
}

TEST_CASE("closed_form_field matches evaluate_field with and without precompute") {
    const auto tg = DiscreteTarget::uniform({{1, 0}, {-1, 0}, {0.3, 1.1}});
    const Schedule s = Schedule::analytic_default();
    std::vector<double> times{0.2, 0.5};
    const auto cached = closed_form_field(tg, s, times);
    const auto plain = closed_form_field(tg, s);
    for (double t : {0.2, 0.5, 0.61}) {
        const auto a = cached(t, {0.4, -0.3});
        const auto b = plain(t, {0.4, -0.3});
        const auto c = evaluate_field(tg, s, t, {0.4, -0.3});
        CHECK(a.velocity.x == b.velocity.x);
        CHECK(a.jacobian.a11 == b.jacobian.a11);
        CHECK(a.velocity.y == doctest::Approx(c.velocity.y).epsilon(1e-13));
        CHECK(a.jacobian.a22 == doctest::Approx(c.jacobian.a22).epsilon(1e-13));
    }
}

TEST_CASE("monte carlo oracle") {
    const Schedule s = Schedule::analytic_default();
    SUBCASE("single atom") {
        const auto tg = DiscreteTarget::uniform({{0.5, -0.5}});
        const Vec2 x{0.2, 0.1};
        const auto mc = monte_carlo_velocity(tg, s, 0.4, x, 0.1, 400000, 3);
        const Vec2 v = evaluate_field(tg, s, 0.4, x).velocity;
        CHECK(std::abs(mc.mean.x - v.x) < 3 * mc.std_error.x + 1e-3);
        CHECK(std::abs(mc.mean.y - v.y) < 3 * mc.std_error.y + 1e-3);
    }
    SUBCASE("two atoms at the origin") {
        const auto mc = monte_carlo_velocity(two_atoms(), s, 0.5, {0, 0}, 0.05, 1000000, 1);
        const Vec2 v = evaluate_field(two_atoms(), s, 0.5, {0, 0}).velocity;
        CHECK(mc.hits > 100);
        CHECK(std::abs(mc.mean.x - v.x) < 3 * mc.std_error.x);
    }
    SUBCASE("empty bin") {
        CHECK_THROWS_AS(monte_carlo_velocity(two_atoms(), s, 0.5, {0, 0}, 1e-6, 10, 1),
                        InsufficientSamplesError);
    }
}
