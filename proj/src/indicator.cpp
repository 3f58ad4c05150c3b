#include "splitflow/indicator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "splitflow/csv.hpp"
#include "splitflow/errors.hpp"

namespace splitflow {

namespace {

template <typename Get>
TimeParticleMatrix gather(std::span<const TrajectoryRecord> records, Get get) {
    if (records.empty()) throw DomainError("no trajectory records");
    const std::vector<double>& times = records.front().times;
    for (const TrajectoryRecord& r : records) {
        if (r.times != times) throw DomainError("trajectory records do not share a time grid");
    }
    TimeParticleMatrix m;
    m.n_times = times.size();
    m.n_particles = records.size();
    m.values.resize(m.n_times * m.n_particles);
    for (std::size_t p = 0; p < records.size(); ++p) {
        for (std::size_t k = 0; k < m.n_times; ++k) m(k, p) = get(records[p], k);
    }
    return m;
}

// Centered moving average; the window is truncated near the ends.
std::vector<double> moving_average(const std::vector<double>& v, std::size_t window) {
    const std::size_t half = window / 2;
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        const std::size_t lo = i >= half ? i - half : 0;
        const std::size_t hi = std::min(v.size() - 1, i + half);
        double s = 0.0;
        for (std::size_t j = lo; j <= hi; ++j) s += v[j];
        out[i] = s / static_cast<double>(hi - lo + 1);
    }
    return out;
}

}  // namespace

TimeParticleMatrix lambda_matrix(std::span<const TrajectoryRecord> records) {
    return gather(records, [](const TrajectoryRecord& r, std::size_t k) {
        return r.strain_eigs[k].lambda_max;
    });
}

TimeParticleMatrix delta_field(std::span<const TrajectoryRecord> records) {
    return gather(records, [](const TrajectoryRecord& r, std::size_t k) { return r.divergence[k]; });
}

std::vector<std::size_t> top_k_select(std::span<const double> values, std::size_t k) {
    if (k < 1) throw DomainError("k must be at least 1");
    if (k > values.size()) {
        throw DomainError("k=" + std::to_string(k) + " exceeds particle count " +
                          std::to_string(values.size()));
    }
    std::vector<std::size_t> idx(values.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                      [&](std::size_t a, std::size_t b) {
                          if (values[a] != values[b]) return values[a] > values[b];
                          return a < b;
                      });
    idx.resize(k);
    return idx;
}

IndicatorSeries build_indicator(const TimeParticleMatrix& lambdas, const TimeGrid& grid,
                                std::size_t k, std::size_t smoothing_window) {
    if (lambdas.n_times != grid.size()) throw DomainError("lambda matrix does not match the grid");
    if (lambdas.n_times < 2 || !(grid.dt() > 0.0)) throw DomainError("degenerate time grid");
    if (smoothing_window < 1 || smoothing_window % 2 == 0 || smoothing_window > grid.size()) {
        throw DomainError("smoothing window must be odd and between 1 and the grid length");
    }
    IndicatorSeries s;
    s.times = grid.nodes();
    s.k = k;
    s.smoothing_window = smoothing_window;
    const std::size_t n = s.times.size();
    s.topk_mean_lambda.resize(n);
    s.topk_indices.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = lambdas.row(i);
        s.topk_indices[i] = top_k_select(row, k);
        double sum = 0.0;
        for (std::size_t p : s.topk_indices[i]) sum += row[p];
        s.topk_mean_lambda[i] = sum / static_cast<double>(k);
    }

    s.cumulative_integral.assign(n, 0.0);
    for (std::size_t i = 1; i < n; ++i) {
        const double h = s.times[i] - s.times[i - 1];
        s.cumulative_integral[i] =
            s.cumulative_integral[i - 1] + 0.5 * h * (s.topk_mean_lambda[i - 1] + s.topk_mean_lambda[i]);
    }

    std::vector<double> rate(n);
    const auto& C = s.cumulative_integral;
    rate[0] = (C[1] - C[0]) / (s.times[1] - s.times[0]);
    rate[n - 1] = (C[n - 1] - C[n - 2]) / (s.times[n - 1] - s.times[n - 2]);
    for (std::size_t i = 1; i + 1 < n; ++i) {
        rate[i] = (C[i + 1] - C[i - 1]) / (s.times[i + 1] - s.times[i - 1]);
    }
    s.slope = moving_average(rate, smoothing_window);
    return s;
}

SplitReport detect_t_star(const IndicatorSeries& series,
                          std::span<const TrajectoryRecord> records) {
    const std::size_t n = series.slope.size();
    if (n < 3) throw DomainError("indicator series too short for an interior peak");
    SplitReport rep;
    rep.k = series.k;

    const auto [lo, hi] = std::minmax_element(series.slope.begin(), series.slope.end());
    if (*hi - *lo <= 1e-12) {
        rep.finding = "no split: indicator is constant";
        return rep;
    }
    std::size_t best = 1;
    for (std::size_t i = 2; i + 1 < n; ++i) {
        if (series.slope[i] > series.slope[best]) best = i;
    }
    if (!(series.slope[best] > series.slope.front() && series.slope[best] > series.slope.back())) {
        rep.finding = "no split: indicator peaks at a grid endpoint";
        return rep;
    }

    rep.split_detected = true;
    rep.finding = "split";
    rep.t_index = best;
    rep.t_star = series.times[best];
    rep.peak_slope = series.slope[best];
    rep.peak_lambda = series.topk_mean_lambda[best];
    rep.hotspot_ids = series.topk_indices[best];
    for (std::size_t p : rep.hotspot_ids) {
        if (p >= records.size() || records[p].size() != n) {
            throw DomainError("records do not match the indicator series");
        }
        rep.hotspot_positions.push_back(records[p].positions[best]);
    }
    return rep;
}

Vec2 hotspot_centroid(const SplitReport& report) {
    Vec2 c;
    if (report.hotspot_positions.empty()) return c;
    for (const Vec2& p : report.hotspot_positions) c += p;
    return (1.0 / static_cast<double>(report.hotspot_positions.size())) * c;
}

void write_indicator_csv(const std::filesystem::path& path, const IndicatorSeries& series,
                         const std::string& comment) {
    CsvWriter w(path, {"t", "topk_mean_lambda", "cumulative_integral", "slope"}, comment);
    for (std::size_t i = 0; i < series.times.size(); ++i) {
        w.row({series.times[i], series.topk_mean_lambda[i], series.cumulative_integral[i],
               series.slope[i]});
    }
    w.close();
}

}  // namespace splitflow
