#include "splitflow/jacobi.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <string>
#include <thread>

#include "splitflow/csv.hpp"
#include "splitflow/errors.hpp"

namespace splitflow {

std::vector<double> TimeGrid::nodes() const {
    std::vector<double> out(size());
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = time(k);
    return out;
}

std::vector<double> TimeGrid::stage_times() const {
    std::vector<double> out;
    out.reserve(2 * n_steps + 1);
    const double h = dt();
    for (std::size_t k = 0; k < n_steps; ++k) {
        out.push_back(time(k));
        out.push_back(time(k) + 0.5 * h);
    }
    out.push_back(time(n_steps));
    return out;
}

std::size_t TimeGrid::nearest(double t) const {
    if (t <= t_start) return 0;
    if (t >= t_end) return n_steps;
    const double k = std::round((t - t_start) / dt());
    return std::min(static_cast<std::size_t>(k), n_steps);
}

void TimeGrid::validate() const {
    if (n_steps < 2) throw DomainError("time grid needs at least 2 steps");
    if (!(t_start >= kInteriorEps && t_start < t_end && t_end <= 1.0 - kInteriorEps)) {
        throw DomainError("time grid must satisfy eps <= t_start < t_end <= 1 - eps");
    }
}

namespace {

struct NodeDiagnostics {
    StrainEigs eigs;
    double divergence;
    double speed;
};

NodeDiagnostics diagnose(const FieldSample& f) {
    const StrainSpectrum sp = strain_and_spectrum(f.jacobian);
    return {{sp.lambda_max, sp.lambda_min}, trace(f.jacobian), norm(f.velocity)};
}

void push_node(TrajectoryRecord& rec, double t, const Vec2& x, const Mat2& J,
               const FieldSample& f) {
    const NodeDiagnostics d = diagnose(f);
    rec.times.push_back(t);
    rec.positions.push_back(x);
    rec.variational.push_back(J);
    rec.velocity_gradients.push_back(f.jacobian);
    rec.strain_eigs.push_back(d.eigs);
    rec.divergence.push_back(d.divergence);
    rec.velocity_norms.push_back(d.speed);
}

void check_state(double t, const Vec2& x, const Mat2& J) {
    if (!is_finite(x) || !is_finite(J)) throw BlowUpError(t, "non-finite state");
    if (!(det(J) > 0.0)) throw BlowUpError(t, "det J <= 0, step size too large");
}

}  // namespace

TrajectoryRecord integrate_trajectory(const Vec2& x0, const FieldEvaluator& field,
                                      const TimeGrid& grid) {
    grid.validate();
    if (!is_finite(x0)) throw DomainError("non-finite start point");
    TrajectoryRecord rec;
    rec.times.reserve(grid.size());
    rec.positions.reserve(grid.size());
    rec.variational.reserve(grid.size());
    rec.velocity_gradients.reserve(grid.size());
    rec.strain_eigs.reserve(grid.size());
    rec.divergence.reserve(grid.size());
    rec.velocity_norms.reserve(grid.size());
    rec.divergence_integral.reserve(grid.size());

    const double h = grid.dt();
    Vec2 x = x0;
    Mat2 J = Mat2::identity();
    double div_integral = 0.0;
    for (std::size_t k = 0; k < grid.n_steps; ++k) {
        const double t = grid.time(k);
        const double t_mid = t + 0.5 * h;
        const double t_next = grid.time(k + 1);

        const FieldSample f1 = field(t, x);
        push_node(rec, t, x, J, f1);
        rec.divergence_integral.push_back(div_integral);
        const Vec2 kx1 = f1.velocity;
        const Mat2 kj1 = f1.jacobian * J;

        const Vec2 x2 = x + (0.5 * h) * kx1;
        const Mat2 j2 = J + (0.5 * h) * kj1;
        const FieldSample f2 = field(t_mid, x2);
        const Vec2 kx2 = f2.velocity;
        const Mat2 kj2 = f2.jacobian * j2;

        const Vec2 x3 = x + (0.5 * h) * kx2;
        const Mat2 j3 = J + (0.5 * h) * kj2;
        const FieldSample f3 = field(t_mid, x3);
        const Vec2 kx3 = f3.velocity;
        const Mat2 kj3 = f3.jacobian * j3;

        const Vec2 x4 = x + h * kx3;
        const Mat2 j4 = J + h * kj3;
        const FieldSample f4 = field(t_next, x4);
        const Vec2 kx4 = f4.velocity;
        const Mat2 kj4 = f4.jacobian * j4;

        x += (h / 6.0) * (kx1 + 2.0 * kx2 + 2.0 * kx3 + kx4);
        J += (h / 6.0) * (kj1 + 2.0 * kj2 + 2.0 * kj3 + kj4);
        div_integral += (h / 6.0) * (trace(f1.jacobian) + 2.0 * trace(f2.jacobian) +
                                     2.0 * trace(f3.jacobian) + trace(f4.jacobian));
        check_state(t_next, x, J);
    }
    const double t_last = grid.time(grid.n_steps);
    push_node(rec, t_last, x, J, field(t_last, x));
    rec.divergence_integral.push_back(div_integral);
    return rec;
}

std::vector<TrajectoryRecord> integrate_cloud(std::span<const Vec2> starts,
                                              const FieldEvaluator& field, const TimeGrid& grid,
                                              unsigned threads) {
    grid.validate();
    std::vector<TrajectoryRecord> out(starts.size());
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(1, starts.size())));

    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::size_t failed_index = starts.size();
    std::mutex failure_mutex;
    const auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= starts.size()) return;
            try {
                out[i] = integrate_trajectory(starts[i], field, grid);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                // Report the lowest failing index so the error is scheduling-independent.
                if (i < failed_index) {
                    failed_index = i;
                    failure = std::current_exception();
                }
            }
        }
    };
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(threads);
        for (unsigned w = 0; w < threads; ++w) pool.emplace_back(worker);
    }
    if (failure) std::rethrow_exception(failure);
    return out;
}

StrainSpectrum strain_and_spectrum(const Mat2& jac) {
    StrainSpectrum out;
    out.strain = symmetric_part(jac);
    const Mat2& S = out.strain;
    const double mean = 0.5 * (S.a11 + S.a22);
    const double half_diff = 0.5 * (S.a11 - S.a22);
    const double radius = std::hypot(half_diff, S.a12);
    out.lambda_max = mean + radius;
    out.lambda_min = mean - radius;

    // Eigenvector for lambda_max: (S - lambda_min I) has its columns in that direction.
    Vec2 e;
    if (radius == 0.0) {
        e = {1.0, 0.0};
    } else if (half_diff >= 0.0) {
        e = {half_diff + radius, S.a12};
    } else {
        e = {S.a12, radius - half_diff};
    }
    const double len = norm(e);
    e *= 1.0 / len;
    if (e.x < 0.0 || (e.x == 0.0 && e.y < 0.0)) e = -e;
    out.principal_dir = e;
    return out;
}

double quadratic_growth_rate(const Mat2& strain, const Vec2& direction) {
    if (std::fabs(norm(direction) - 1.0) > 1e-10) {
        throw DomainError("growth-rate direction must be a unit vector");
    }
    return dot(direction, strain * direction);
}

CurvatureSample curvature_operator(const FieldEvaluator& field, const TrajectoryRecord& record,
                                   std::size_t idx) {
    if (record.size() < 3 || idx < 1 || idx + 1 >= record.size()) {
        throw DomainError("curvature operator needs an interior grid index");
    }
    const double t_prev = record.times[idx - 1];
    const double t = record.times[idx];
    const double t_next = record.times[idx + 1];
    const double h = 0.5 * (t_next - t_prev);

    const Mat2 g_prev = field(t_prev, record.positions[idx - 1]).jacobian;
    const Mat2 g = field(t, record.positions[idx]).jacobian;
    const Mat2 g_next = field(t_next, record.positions[idx + 1]).jacobian;
    const Mat2 dgdt = (1.0 / (2.0 * h)) * (g_next - g_prev);

    CurvatureSample out;
    out.time = t;
    out.m_matrix = -1.0 * (dgdt + g * g);
    const Mat2 j_dd = (1.0 / (h * h)) *
                      (record.variational[idx + 1] - 2.0 * record.variational[idx] +
                       record.variational[idx - 1]);
    out.residual_norm = frobenius(j_dd + out.m_matrix * record.variational[idx]);
    return out;
}

void write_trajectories_csv(const std::filesystem::path& path,
                            std::span<const TrajectoryRecord> records,
                            const std::string& comment) {
    CsvWriter w(path,
                {"particle_id", "t", "x", "y", "j11", "j12", "j21", "j22", "lambda_max",
                 "lambda_min", "delta", "det_j"},
                comment, 10);
    for (std::size_t p = 0; p < records.size(); ++p) {
        const TrajectoryRecord& r = records[p];
        for (std::size_t k = 0; k < r.size(); ++k) {
            const Mat2& J = r.variational[k];
            w.row({static_cast<double>(p), r.times[k], r.positions[k].x, r.positions[k].y, J.a11,
                   J.a12, J.a21, J.a22, r.strain_eigs[k].lambda_max, r.strain_eigs[k].lambda_min,
                   r.divergence[k], det(J)});
        }
    }
    w.close();
}

}  // namespace splitflow
