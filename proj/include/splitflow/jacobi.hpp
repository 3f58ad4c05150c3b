#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "splitflow/linalg.hpp"
#include "splitflow/velocity_field.hpp"

namespace splitflow {

/// Uniform grid t_k = t_start + k dt, k = 0..n_steps.
struct TimeGrid {
    double t_start = 0.001;
    double t_end = 0.98;
    std::size_t n_steps = 100;

    double dt() const noexcept { return (t_end - t_start) / static_cast<double>(n_steps); }
    double time(std::size_t k) const noexcept {
        return k == n_steps ? t_end : t_start + static_cast<double>(k) * dt();
    }
    std::size_t size() const noexcept { return n_steps + 1; }
    std::vector<double> nodes() const;
    /// Every time at which the RK4 integrator evaluates the field.
    std::vector<double> stage_times() const;
    /// Index of the node nearest to t (clamped to the grid).
    std::size_t nearest(double t) const;

    /// Requires kInteriorEps <= t_start < t_end <= 1 - kInteriorEps and n_steps >= 2.
    void validate() const;
};

struct StrainEigs {
    double lambda_max = 0.0;
    double lambda_min = 0.0;
};

/// Reference path with its variational matrix and per-node diagnostics.
struct TrajectoryRecord {
    std::vector<double> times;
    std::vector<Vec2> positions;
    std::vector<Mat2> variational;         // J_t, J_0 = I
    std::vector<Mat2> velocity_gradients;  // grad v(t, x_t)
    std::vector<StrainEigs> strain_eigs;
    std::vector<double> divergence;
    std::vector<double> velocity_norms;
    // Running integral of trace(grad v) from the first node, accumulated with the RK4
    // weights over the stage evaluations.
    std::vector<double> divergence_integral;

    std::size_t size() const noexcept { return times.size(); }
};

/// Classical RK4 on (x, J) jointly, with J' = grad v(t, x) J. Throws BlowUpError on a
/// non-finite state or when det J stops being positive (step size too large).
TrajectoryRecord integrate_trajectory(const Vec2& x0, const FieldEvaluator& field,
                                      const TimeGrid& grid);

/// Integrates every start point independently on `threads` workers (0 = hardware).
/// Output order matches input order regardless of scheduling.
std::vector<TrajectoryRecord> integrate_cloud(std::span<const Vec2> starts,
                                              const FieldEvaluator& field, const TimeGrid& grid,
                                              unsigned threads = 0);

struct StrainSpectrum {
    Mat2 strain;
    double lambda_max = 0.0;
    double lambda_min = 0.0;
    Vec2 principal_dir;  // unit, first component >= 0 (second >= 0 on ties)
};

/// S = (J + J^T)/2 and its closed-form eigen-decomposition.
StrainSpectrum strain_and_spectrum(const Mat2& jac);

/// e^T S e, the instantaneous rate of 1/2 |dx|^2 along unit direction e.
double quadratic_growth_rate(const Mat2& strain, const Vec2& direction);

struct CurvatureSample {
    double time = 0.0;
    Mat2 m_matrix;
    double residual_norm = 0.0;  // |J'' + M J|_F
};

/// M = -(d/dt grad v(t, x_t) + (grad v)^2) with the total derivative taken by central
/// differences along the trajectory; J'' from second differences of the record.
/// Requires 1 <= idx <= n_steps - 1.
CurvatureSample curvature_operator(const FieldEvaluator& field, const TrajectoryRecord& record,
                                   std::size_t idx);

/// Rows: particle_id, t, x, y, j11, j12, j21, j22, lambda_max, lambda_min, delta, det_j.
void write_trajectories_csv(const std::filesystem::path& path,
                            std::span<const TrajectoryRecord> records,
                            const std::string& comment = {});

}  // namespace splitflow
