#include "splitflow/pathnet.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "splitflow/errors.hpp"

namespace splitflow {

namespace {

constexpr std::uint64_t kBatchStreamSalt = 0x9E3779B97F4A7C15ULL;

double softplus(double c) { return std::log1p(std::exp(-std::fabs(c))) + std::max(c, 0.0); }
double logistic(double c) { return 1.0 / (1.0 + std::exp(-c)); }

// Activations of every layer for one input, reused by the backward pass.
struct Tape {
    std::vector<std::vector<double>> act;  // act[0] = {t}; act[l+1] = output of layer l
};

void run_forward(const PathNetParams& p, double t, Tape& tape) {
    const std::size_t n_layers = p.layers.size();
    tape.act.resize(n_layers + 1);
    tape.act[0].assign(1, t);
    const double inv_tau = 1.0 / p.tau;
    for (std::size_t l = 0; l < n_layers; ++l) {
        const LayerShape& L = p.layers[l];
        const std::vector<double>& in = tape.act[l];
        std::vector<double>& out = tape.act[l + 1];
        out.resize(L.out);
        const double* W = p.values.data() + L.weight_offset;
        const double* b = p.values.data() + L.bias_offset;
        const bool hidden = l + 1 < n_layers;
        for (std::size_t r = 0; r < L.out; ++r) {
            double z = b[r];
            const double* row = W + r * L.in;
            for (std::size_t k = 0; k < L.in; ++k) z += row[k] * in[k];
            out[r] = hidden ? 1.0 / (1.0 + std::exp(-z * inv_tau)) : z;
        }
    }
}

// grad_out holds d(loss)/d(head outputs); consumed in place.
void run_backward(const PathNetParams& p, const Tape& tape, std::vector<double> grad_out,
                  std::span<double> grad) {
    const double inv_tau = 1.0 / p.tau;
    std::vector<double> grad_in;
    for (std::size_t l = p.layers.size(); l-- > 0;) {
        const LayerShape& L = p.layers[l];
        const std::vector<double>& in = tape.act[l];
        const double* W = p.values.data() + L.weight_offset;
        double* gW = grad.data() + L.weight_offset;
        double* gb = grad.data() + L.bias_offset;
        grad_in.assign(L.in, 0.0);
        for (std::size_t r = 0; r < L.out; ++r) {
            const double g = grad_out[r];
            if (g == 0.0) continue;
            gb[r] += g;
            const double* row = W + r * L.in;
            double* grow = gW + r * L.in;
            for (std::size_t k = 0; k < L.in; ++k) {
                grow[k] += g * in[k];
                grad_in[k] += g * row[k];
            }
        }
        if (l == 0) break;
        // Input of this layer is the steep-sigmoid output of the previous one.
        for (std::size_t k = 0; k < L.in; ++k) {
            const double s = in[k];
            grad_in[k] *= s * (1.0 - s) * inv_tau;
        }
        grad_out.swap(grad_in);
    }
}

CoefficientTriple reparameterize(const PathNetParams& p, const HeadOutput& h, double t) {
    const double bridge = t * (1.0 - t);
    const double gamma = bridge * (softplus(h.c) + kGammaFloor);
    if (p.mode == BoundaryMode::Soft) return {h.a, h.b, gamma};
    return {(1.0 - t) * (1.0 + t * h.a), t * (1.0 + (1.0 - t) * h.b), gamma};
}

// d(loss)/d(head) from d(loss)/d(alpha, beta, gamma).
std::vector<double> head_gradient(const PathNetParams& p, const HeadOutput& h, double t,
                                  const CoefficientTriple& up) {
    const double bridge = t * (1.0 - t);
    std::vector<double> g(3);
    if (p.mode == BoundaryMode::Soft) {
        g[0] = up.alpha;
        g[1] = up.beta;
    } else {
        g[0] = up.alpha * bridge;
        g[1] = up.beta * bridge;
    }
    g[2] = up.gamma * bridge * logistic(h.c);
    return g;
}

HeadOutput head_of(const Tape& tape) {
    const std::vector<double>& o = tape.act.back();
    return {o[0], o[1], o[2]};
}

std::vector<LayerShape> layout(const std::vector<std::size_t>& widths) {
    std::vector<LayerShape> layers;
    std::size_t offset = 0;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        LayerShape L;
        L.in = widths[l];
        L.out = widths[l + 1];
        L.weight_offset = offset;
        offset += L.in * L.out;
        L.bias_offset = offset;
        offset += L.out;
        layers.push_back(L);
    }
    return layers;
}

void check_widths(const std::vector<std::size_t>& widths) {
    if (widths.size() < 2 || widths.front() != 1 || widths.back() != 3) {
        throw DomainError("pathnet widths must start at 1 and end at 3");
    }
    for (std::size_t w : widths) {
        if (w == 0) throw DomainError("pathnet layer width must be positive");
    }
}

std::string mode_name(BoundaryMode m) { return m == BoundaryMode::Hard ? "hard" : "soft"; }

BoundaryMode mode_from_name(const std::string& s) {
    if (s == "hard") return BoundaryMode::Hard;
    if (s == "soft") return BoundaryMode::Soft;
    throw DomainError("unknown boundary mode: " + s);
}

double clip_time(double t, double delta_t) { return std::clamp(t, delta_t, 1.0 - delta_t); }

CoefficientTriple bound_upstream_at(double t, const CoefficientTriple& c, double weight) {
    // Gradient of the six-term boundary residual, split by endpoint.
    if (t == 0.0) return {2.0 * weight * (c.alpha - 1.0), 2.0 * weight * c.beta, 2.0 * weight * c.gamma};
    return {2.0 * weight * c.alpha, 2.0 * weight * (c.beta - 1.0), 2.0 * weight * c.gamma};
}

double bound_of(const CoefficientTriple& c0, const CoefficientTriple& c1) {
    const auto sq = [](double v) { return v * v; };
    return sq(c0.alpha - 1.0) + sq(c0.beta) + sq(c1.alpha) + sq(c1.beta - 1.0) + sq(c0.gamma) +
           sq(c1.gamma);
}

Vec2 stencil_velocity(const CoefficientTriple& hi, const CoefficientTriple& lo, double h,
                      const BatchRow& r) {
    const double inv = 1.0 / (2.0 * h);
    const double da = (hi.alpha - lo.alpha) * inv;
    const double db = (hi.beta - lo.beta) * inv;
    const double dg = (hi.gamma - lo.gamma) * inv;
    return da * r.x0 + db * r.x1 + dg * r.z;
}

}  // namespace

PathNetParams init_pathnet(std::uint64_t seed, std::vector<std::size_t> widths, double tau,
                           BoundaryMode mode) {
    check_widths(widths);
    if (!(tau > 0.0)) throw DomainError("activation temperature must be positive");
    PathNetParams p;
    p.widths = std::move(widths);
    p.layers = layout(p.widths);
    p.tau = tau;
    p.mode = mode;
    const LayerShape& last = p.layers.back();
    p.values.assign(last.bias_offset + last.out, 0.0);

    std::mt19937_64 rng(seed);
    for (const LayerShape& L : p.layers) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(L.in));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (std::size_t i = 0; i < L.in * L.out; ++i) p.values[L.weight_offset + i] = dist(rng);
    }
    return p;
}

HeadOutput network_head(const PathNetParams& p, double t) {
    Tape tape;
    run_forward(p, t, tape);
    return head_of(tape);
}

CoefficientTriple forward(const PathNetParams& p, double t) {
    return reparameterize(p, network_head(p, t), t);
}

void backward(const PathNetParams& p, double t, const CoefficientTriple& upstream,
              std::span<double> grad) {
    if (grad.size() != p.size()) throw DomainError("gradient buffer size mismatch");
    Tape tape;
    run_forward(p, t, tape);
    run_backward(p, tape, head_gradient(p, head_of(tape), t, upstream), grad);
}

nlohmann::json params_to_json(const PathNetParams& p) {
    nlohmann::json layers = nlohmann::json::array();
    for (const LayerShape& L : p.layers) {
        layers.push_back({{"in", L.in},
                          {"out", L.out},
                          {"weight_offset", L.weight_offset},
                          {"bias_offset", L.bias_offset}});
    }
    return {{"widths", p.widths},
            {"tau", p.tau},
            {"mode", mode_name(p.mode)},
            {"layers", layers},
            {"values", p.values}};
}

PathNetParams params_from_json(const nlohmann::json& j) {
    PathNetParams p;
    p.widths = j.at("widths").get<std::vector<std::size_t>>();
    check_widths(p.widths);
    p.layers = layout(p.widths);
    p.tau = j.at("tau").get<double>();
    if (!(p.tau > 0.0)) throw DomainError("activation temperature must be positive");
    p.mode = mode_from_name(j.value("mode", std::string("hard")));
    p.values = j.at("values").get<std::vector<double>>();
    const LayerShape& last = p.layers.back();
    if (p.values.size() != last.bias_offset + last.out) {
        throw DomainError("parameter array does not match layer shapes");
    }
    for (double v : p.values) {
        if (!std::isfinite(v)) throw DomainError("non-finite network parameter");
    }
    return p;
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw DomainError("learning_rate must be positive");
    if (!(delta_t > 0.0 && delta_t < 0.5)) throw DomainError("delta_t must lie in (0, 0.5)");
    if (batch_size < 1) throw DomainError("batch_size must be at least 1");
    if (n_time_samples < 1) throw DomainError("n_time_samples must be at least 1");
    if (lambda_bound < 0.0 || lambda_energy < 0.0) throw DomainError("loss weights must be >= 0");
    if (weight_decay < 0.0) throw DomainError("weight_decay must be >= 0");
    if (!(tau > 0.0)) throw DomainError("tau must be positive");
    check_widths(widths);
}

nlohmann::json to_json(const TrainConfig& c) {
    return {{"lambda_bound", c.lambda_bound},
            {"lambda_energy", c.lambda_energy},
            {"learning_rate", c.learning_rate},
            {"weight_decay", c.weight_decay},
            {"batch_size", c.batch_size},
            {"n_steps", c.n_steps},
            {"delta_t", c.delta_t},
            {"n_time_samples", c.n_time_samples},
            {"seed", c.seed},
            {"widths", c.widths},
            {"tau", c.tau},
            {"mode", mode_name(c.mode)},
            {"early_stop", c.early_stop},
            {"early_stop_rel", c.early_stop_rel},
            {"early_stop_window", c.early_stop_window}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
    c.lambda_bound = j.value("lambda_bound", c.lambda_bound);
    c.lambda_energy = j.value("lambda_energy", c.lambda_energy);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.n_steps = j.value("n_steps", c.n_steps);
    c.delta_t = j.value("delta_t", c.delta_t);
    c.n_time_samples = j.value("n_time_samples", c.n_time_samples);
    c.seed = j.value("seed", c.seed);
    c.widths = j.value("widths", c.widths);
    c.tau = j.value("tau", c.tau);
    if (j.contains("mode")) c.mode = mode_from_name(j.at("mode").get<std::string>());
    c.early_stop = j.value("early_stop", c.early_stop);
    c.early_stop_rel = j.value("early_stop_rel", c.early_stop_rel);
    c.early_stop_window = j.value("early_stop_window", c.early_stop_window);
    return c;
}

Batch sample_batch(const TrainConfig& c, const PointSampler& prior, const PointSampler& target,
                   std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> time(c.delta_t, 1.0 - c.delta_t);
    std::vector<BatchRow> triples(c.batch_size);
    for (BatchRow& r : triples) {
        r.x0 = prior(rng);
        r.x1 = target(rng);
        r.z.x = normal(rng);
        r.z.y = normal(rng);
    }
    Batch batch(c.n_time_samples);
    for (std::size_t j = 0; j < batch.size(); ++j) {
        batch[j] = triples[j % triples.size()];
        batch[j].t = time(rng);
    }
    return batch;
}

std::vector<Vec2> pathwise_velocity_batch(const PathNetParams& p, std::span<const Vec2> x0,
                                          std::span<const Vec2> x1, std::span<const Vec2> z,
                                          std::span<const double> t, double delta_t) {
    const std::size_t n = x0.size();
    if (x1.size() != n || z.size() != n || t.size() != n) {
        throw DomainError("pathwise velocity batch length mismatch");
    }
    if (!(delta_t > 0.0 && delta_t < 0.5)) throw DomainError("delta_t must lie in (0, 0.5)");
    std::vector<Vec2> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double ti = clip_time(t[i], delta_t);
        const BatchRow row{x0[i], x1[i], z[i], ti};
        out[i] = stencil_velocity(forward(p, ti + delta_t), forward(p, ti - delta_t), delta_t, row);
    }
    return out;
}

LossValues losses(const PathNetParams& p, const Batch& batch, const TrainConfig& c) {
    if (batch.empty()) throw DomainError("empty batch");
    const double h = c.delta_t;
    double energy = 0.0;
    for (const BatchRow& r : batch) {
        const double t = clip_time(r.t, h);
        energy += norm2(stencil_velocity(forward(p, t + h), forward(p, t - h), h, r));
    }
    energy /= static_cast<double>(batch.size());
    const double bound = bound_of(forward(p, 0.0), forward(p, 1.0));
    return {c.lambda_bound * bound + c.lambda_energy * energy, bound, energy};
}

LossValues losses_and_gradient(const PathNetParams& p, const Batch& batch, const TrainConfig& c,
                               std::vector<double>& grad) {
    if (batch.empty()) throw DomainError("empty batch");
    grad.assign(p.size(), 0.0);
    const double h = c.delta_t;
    const double n = static_cast<double>(batch.size());
    Tape hi_tape, lo_tape;
    double energy = 0.0;
    for (const BatchRow& r : batch) {
        const double t = clip_time(r.t, h);
        run_forward(p, t + h, hi_tape);
        run_forward(p, t - h, lo_tape);
        const HeadOutput hi_head = head_of(hi_tape);
        const HeadOutput lo_head = head_of(lo_tape);
        const CoefficientTriple hi = reparameterize(p, hi_head, t + h);
        const CoefficientTriple lo = reparameterize(p, lo_head, t - h);
        const Vec2 v = stencil_velocity(hi, lo, h, r);
        energy += norm2(v);

        // d/dv of lambda_energy * mean ||v||^2, then through the stencil.
        const Vec2 dv = (2.0 * c.lambda_energy / n) * v;
        const double scale = 1.0 / (2.0 * h);
        const CoefficientTriple up{dot(dv, r.x0) * scale, dot(dv, r.x1) * scale,
                                   dot(dv, r.z) * scale};
        if (up.alpha == 0.0 && up.beta == 0.0 && up.gamma == 0.0) continue;
        run_backward(p, hi_tape, head_gradient(p, hi_head, t + h, up), grad);
        const CoefficientTriple down{-up.alpha, -up.beta, -up.gamma};
        run_backward(p, lo_tape, head_gradient(p, lo_head, t - h, down), grad);
    }
    energy /= n;

    Tape t0, t1;
    run_forward(p, 0.0, t0);
    run_forward(p, 1.0, t1);
    const CoefficientTriple c0 = reparameterize(p, head_of(t0), 0.0);
    const CoefficientTriple c1 = reparameterize(p, head_of(t1), 1.0);
    const double bound = bound_of(c0, c1);
    if (c.lambda_bound > 0.0 && bound > 0.0) {
        run_backward(p, t0, head_gradient(p, head_of(t0), 0.0, bound_upstream_at(0.0, c0, c.lambda_bound)),
                     grad);
        run_backward(p, t1, head_gradient(p, head_of(t1), 1.0, bound_upstream_at(1.0, c1, c.lambda_bound)),
                     grad);
    }
    return {c.lambda_bound * bound + c.lambda_energy * energy, bound, energy};
}

double schedule_energy(const Schedule& s, const Batch& batch, double delta_t) {
    if (batch.empty()) throw DomainError("empty batch");
    double energy = 0.0;
    for (const BatchRow& r : batch) {
        const double t = clip_time(r.t, delta_t);
        energy += norm2(stencil_velocity(s(t + delta_t), s(t - delta_t), delta_t, r));
    }
    return energy / static_cast<double>(batch.size());
}

void adamw_step(PathNetParams& p, std::span<const double> grad, AdamWState& st, double lr,
                double weight_decay) {
    if (grad.size() != p.size()) throw DomainError("gradient size mismatch");
    if (st.m.size() != p.size()) {
        st.m.assign(p.size(), 0.0);
        st.v.assign(p.size(), 0.0);
    }
    ++st.step;
    const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
    const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
    const double decay = 1.0 - lr * weight_decay;
    for (std::size_t i = 0; i < p.size(); ++i) {
        p.values[i] *= decay;
        st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * grad[i];
        st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * grad[i] * grad[i];
        const double mhat = st.m[i] / bc1;
        const double vhat = st.v[i] / bc2;
        p.values[i] -= lr * mhat / (std::sqrt(vhat) + st.eps);
    }
}

TrainResult train(const TrainConfig& c, const PointSampler& prior, const PointSampler& target) {
    c.validate();
    PathNetParams params = init_pathnet(c.seed, c.widths, c.tau, c.mode);
    AdamWState opt;
    TrainTrace trace;
    trace.reserve(c.n_steps);
    std::mt19937_64 rng(c.seed ^ kBatchStreamSalt);
    std::vector<double> grad;
    double window_sum = 0.0;
    double previous_window = std::numeric_limits<double>::quiet_NaN();

    for (std::size_t step = 0; step < c.n_steps; ++step) {
        const Batch batch = sample_batch(c, prior, target, rng);
        const LossValues loss = losses_and_gradient(params, batch, c, grad);
        if (!std::isfinite(loss.total)) throw DivergenceError(step);
        const double gnorm = std::sqrt(std::inner_product(grad.begin(), grad.end(), grad.begin(), 0.0));
        trace.push_back({step, loss.total, loss.bound, loss.energy, gnorm});
        adamw_step(params, grad, opt, c.learning_rate, c.weight_decay);

        if (c.early_stop && c.early_stop_window > 0) {
            window_sum += loss.total;
            if ((step + 1) % c.early_stop_window == 0) {
                const double mean = window_sum / static_cast<double>(c.early_stop_window);
                window_sum = 0.0;
                if (std::isfinite(previous_window) &&
                    (previous_window - mean) < c.early_stop_rel * std::fabs(previous_window)) {
                    break;
                }
                previous_window = mean;
            }
        }
    }

    auto shared = std::make_shared<const PathNetParams>(params);
    Schedule schedule = Schedule::learned(shared, c.delta_t);
    return {std::move(params), std::move(opt), std::move(trace), std::move(schedule)};
}

nlohmann::json checkpoint_to_json(const TrainResult& r, const TrainConfig& c) {
    return {{"format", "splitflow-pathnet-checkpoint/1"},
            {"params", params_to_json(r.params)},
            {"derivative_step", c.delta_t},
            {"step", r.optimizer.step},
            {"optimizer",
             {{"m", r.optimizer.m},
              {"v", r.optimizer.v},
              {"step", r.optimizer.step},
              {"beta1", r.optimizer.beta1},
              {"beta2", r.optimizer.beta2},
              {"eps", r.optimizer.eps},
              {"learning_rate", c.learning_rate},
              {"weight_decay", c.weight_decay}}},
            {"train_config", to_json(c)}};
}

Checkpoint checkpoint_from_json(const nlohmann::json& j) {
    Checkpoint ck;
    ck.params = params_from_json(j.at("params"));
    ck.derivative_step = j.value("derivative_step", kDefaultDerivativeStep);
    if (j.contains("optimizer")) {
        const auto& o = j.at("optimizer");
        ck.optimizer.m = o.at("m").get<std::vector<double>>();
        ck.optimizer.v = o.at("v").get<std::vector<double>>();
        ck.optimizer.step = o.at("step").get<std::size_t>();
        ck.optimizer.beta1 = o.value("beta1", 0.9);
        ck.optimizer.beta2 = o.value("beta2", 0.999);
        ck.optimizer.eps = o.value("eps", 1e-8);
    }
    return ck;
}

}  // namespace splitflow
