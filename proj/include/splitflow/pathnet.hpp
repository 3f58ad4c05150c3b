#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "splitflow/linalg.hpp"
#include "splitflow/schedule.hpp"

namespace splitflow {

// Small fully-connected network t -> (alpha, beta, gamma) with steep-sigmoid hidden
// activations, trained by AdamW on boundary + kinetic-energy losses.

/// Hard: boundary values are forced by the output reparameterization.
/// Soft: alpha, beta are raw network outputs and only the boundary loss pulls them
/// toward the endpoint constraints. gamma is reparameterized in both modes.
enum class BoundaryMode { Hard, Soft };

inline constexpr double kGammaFloor = 1e-3;

struct LayerShape {
    std::size_t in = 0;
    std::size_t out = 0;
    std::size_t weight_offset = 0;  // out x in, row-major
    std::size_t bias_offset = 0;
};

struct PathNetParams {
    std::vector<std::size_t> widths;
    std::vector<LayerShape> layers;
    std::vector<double> values;
    double tau = 0.1;
    BoundaryMode mode = BoundaryMode::Hard;

    std::size_t size() const noexcept { return values.size(); }
};

/// Raw network output before reparameterization.
struct HeadOutput {
    double a = 0.0;
    double b = 0.0;
    double c = 0.0;
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases. Widths must start
/// at 1 and end at 3.
PathNetParams init_pathnet(std::uint64_t seed, std::vector<std::size_t> widths = {1, 64, 64, 3},
                           double tau = 0.1, BoundaryMode mode = BoundaryMode::Hard);

HeadOutput network_head(const PathNetParams& p, double t);

/// Reparameterized coefficients. In hard mode
///   alpha = (1-t)(1 + t a), beta = t(1 + (1-t) b), gamma = t(1-t)(softplus(c) + floor).
CoefficientTriple forward(const PathNetParams& p, double t);

/// Accumulates d(loss)/d(params) into `grad` given the upstream derivative of the loss
/// with respect to (alpha, beta, gamma) at time t.
void backward(const PathNetParams& p, double t, const CoefficientTriple& upstream,
              std::span<double> grad);

nlohmann::json params_to_json(const PathNetParams& p);
PathNetParams params_from_json(const nlohmann::json& j);

struct TrainConfig {
    double lambda_bound = 10.0;
    double lambda_energy = 1.0;
    double learning_rate = 1e-3;
    double weight_decay = 1e-4;
    std::size_t batch_size = 256;
    std::size_t n_steps = 2000;
    double delta_t = 1e-3;
    std::size_t n_time_samples = 256;
    std::uint64_t seed = 0;
    std::vector<std::size_t> widths{1, 64, 64, 3};
    double tau = 0.1;
    BoundaryMode mode = BoundaryMode::Hard;
    /// Stop once the mean loss over the last `early_stop_window` steps improves on the
    /// previous window by less than `early_stop_rel` (relative). Off by default.
    bool early_stop = false;
    double early_stop_rel = 1e-6;
    std::size_t early_stop_window = 200;

    void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

/// One energy sample: endpoint pair, noise and time.
struct BatchRow {
    Vec2 x0;
    Vec2 x1;
    Vec2 z;
    double t = 0.5;
};
using Batch = std::vector<BatchRow>;

using PointSampler = std::function<Vec2(std::mt19937_64&)>;

/// Draws batch_size endpoint triples and n_time_samples times t ~ U[delta_t, 1-delta_t];
/// row j pairs time j with triple j mod batch_size.
Batch sample_batch(const TrainConfig& c, const PointSampler& prior, const PointSampler& target,
                   std::mt19937_64& rng);

/// v = alpha' x0 + beta' x1 + gamma' z with central-difference coefficient derivatives;
/// t is clipped to [delta_t, 1 - delta_t].
std::vector<Vec2> pathwise_velocity_batch(const PathNetParams& p, std::span<const Vec2> x0,
                                          std::span<const Vec2> x1, std::span<const Vec2> z,
                                          std::span<const double> t, double delta_t);

struct LossValues {
    double total = 0.0;
    double bound = 0.0;
    double energy = 0.0;
};

LossValues losses(const PathNetParams& p, const Batch& batch, const TrainConfig& c);

/// Same as losses() and writes the full parameter gradient of the total loss.
LossValues losses_and_gradient(const PathNetParams& p, const Batch& batch, const TrainConfig& c,
                               std::vector<double>& grad);

/// The energy estimator applied to an arbitrary schedule (central differences with
/// step delta_t), for baseline comparisons on a shared batch.
double schedule_energy(const Schedule& s, const Batch& batch, double delta_t);

struct AdamWState {
    std::vector<double> m;
    std::vector<double> v;
    std::size_t step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// theta <- theta (1 - lr wd), then the Adam update with bias correction.
void adamw_step(PathNetParams& p, std::span<const double> grad, AdamWState& state, double lr,
                double weight_decay);

struct TrainRecord {
    std::size_t step = 0;
    double total = 0.0;
    double bound = 0.0;
    double energy = 0.0;
    double grad_norm = 0.0;
};
using TrainTrace = std::vector<TrainRecord>;

struct TrainResult {
    PathNetParams params;
    AdamWState optimizer;
    TrainTrace trace;
    Schedule schedule;
};

/// Throws DivergenceError on a non-finite loss.
TrainResult train(const TrainConfig& c, const PointSampler& prior, const PointSampler& target);

nlohmann::json checkpoint_to_json(const TrainResult& r, const TrainConfig& c);

struct Checkpoint {
    PathNetParams params;
    AdamWState optimizer;
    double derivative_step = kDefaultDerivativeStep;
};
Checkpoint checkpoint_from_json(const nlohmann::json& j);

}  // namespace splitflow
