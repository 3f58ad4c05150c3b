#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "splitflow/jacobi.hpp"
#include "splitflow/linalg.hpp"

namespace splitflow {

/// Dense time x particle matrix, row-major (row = grid node).
struct TimeParticleMatrix {
    std::size_t n_times = 0;
    std::size_t n_particles = 0;
    std::vector<double> values;

    double operator()(std::size_t k, std::size_t p) const { return values[k * n_particles + p]; }
    double& operator()(std::size_t k, std::size_t p) { return values[k * n_particles + p]; }
    std::span<const double> row(std::size_t k) const {
        return {values.data() + k * n_particles, n_particles};
    }
};

/// lambda_max of the strain at every (node, particle). Records must share one grid.
TimeParticleMatrix lambda_matrix(std::span<const TrajectoryRecord> records);

/// trace(grad v) at every (node, particle).
TimeParticleMatrix delta_field(std::span<const TrajectoryRecord> records);

/// Indices of the k largest values, ties to the smaller index; ordered by rank.
std::vector<std::size_t> top_k_select(std::span<const double> values, std::size_t k);

struct IndicatorSeries {
    std::vector<double> times;
    std::vector<double> topk_mean_lambda;
    std::vector<double> cumulative_integral;  // trapezoid of topk_mean_lambda from t_start
    std::vector<double> slope;  // smoothed rate of the cumulative integral
    std::vector<std::vector<std::size_t>> topk_indices;
    std::size_t k = 0;
    std::size_t smoothing_window = 1;
};

/// Per node: mean of the Top-K lambda_max (reselected each node). The slope is the
/// central difference of the cumulative integral (one-sided at the ends) passed through
/// a centered moving average of `smoothing_window` nodes (truncated at the ends).
IndicatorSeries build_indicator(const TimeParticleMatrix& lambdas, const TimeGrid& grid,
                                std::size_t k, std::size_t smoothing_window);

struct SplitReport {
    bool split_detected = false;
    std::string finding;  // "split" or the no-split reason
    std::size_t t_index = 0;
    double t_star = 0.0;
    double peak_slope = 0.0;
    double peak_lambda = 0.0;
    std::size_t k = 0;
    std::vector<std::size_t> hotspot_ids;
    std::vector<Vec2> hotspot_positions;
};

/// t* = earliest interior node maximizing the slope series; hotspots are the Top-K
/// particles there. A no-split finding is returned when the slope is constant within
/// 1e-12 or when its global maximum sits on a grid endpoint (no interior peak).
SplitReport detect_t_star(const IndicatorSeries& series,
                          std::span<const TrajectoryRecord> records);

Vec2 hotspot_centroid(const SplitReport& report);

/// Columns: t, topk_mean_lambda, cumulative_integral, slope.
void write_indicator_csv(const std::filesystem::path& path, const IndicatorSeries& series,
                         const std::string& comment = {});

}  // namespace splitflow
