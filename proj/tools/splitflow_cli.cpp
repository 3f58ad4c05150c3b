// splitflow: generate datasets, train schedules, and detect path splitting in
// stochastic-interpolant flows.
//
// Exit codes: 0 success, 2 usage / invalid input, 3 numerical divergence, 4 I/O.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "splitflow/errors.hpp"
#include "splitflow/pipeline.hpp"

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitIo = 4;

struct Overrides {
    std::optional<std::string> config;
    std::optional<std::string> out;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    std::optional<std::string> dataset;
    std::optional<std::size_t> n_particles;
    std::optional<std::size_t> n_target;
    std::optional<std::size_t> max_atoms;
    std::optional<double> noise;
    std::optional<std::string> schedule;
    std::optional<std::string> checkpoint;
    std::optional<double> t_start;
    std::optional<double> t_end;
    std::optional<std::size_t> n_steps;
    std::optional<std::size_t> k;
    std::optional<std::size_t> smoothing_window;
    std::vector<double> snapshot_times;
    std::optional<std::size_t> train_steps;
    std::optional<double> lambda_energy;
    std::optional<double> lambda_bound;
    std::optional<double> learning_rate;
    std::optional<double> weight_decay;
    std::optional<std::size_t> batch_size;
    std::optional<std::string> boundary_mode;
};

void add_flags(CLI::App& app, Overrides& o) {
    app.add_option("--config", o.config, "JSON run configuration (flags override it)");
    app.add_option("--out", o.out, "Output directory");
    app.add_option("--seed", o.seed, "Seed for data, training and particles");
    app.add_option("--threads", o.threads, "Worker threads (0 = all cores)");
    app.add_option("--dataset", o.dataset,
                   "two_moons | checkerboard | s_curve | gaussian_mixture | two_atoms | single_atom");
    app.add_option("--n-particles", o.n_particles, "Prior particles to integrate");
    app.add_option("--n-target", o.n_target, "Target cloud size");
    app.add_option("--max-atoms", o.max_atoms, "Atoms kept in the discrete target");
    app.add_option("--noise", o.noise, "Noise level for two_moons / s_curve");
    app.add_option("--schedule", o.schedule, "default | learned");
    app.add_option("--checkpoint", o.checkpoint, "Checkpoint path for a learned schedule");
    app.add_option("--t-start", o.t_start, "First grid time");
    app.add_option("--t-end", o.t_end, "Last grid time");
    app.add_option("--n-steps", o.n_steps, "Grid steps");
    app.add_option("--k", o.k, "Top-K size");
    app.add_option("--smoothing-window", o.smoothing_window, "Odd smoothing window (nodes)");
    app.add_option("--snapshot-times", o.snapshot_times, "Display times for snapshot files");
    app.add_option("--train-steps", o.train_steps, "AdamW steps");
    app.add_option("--lambda-energy", o.lambda_energy, "Energy loss weight");
    app.add_option("--lambda-bound", o.lambda_bound, "Boundary loss weight");
    app.add_option("--lr", o.learning_rate, "Learning rate");
    app.add_option("--weight-decay", o.weight_decay, "Decoupled weight decay");
    app.add_option("--batch-size", o.batch_size, "Training batch size");
    app.add_option("--boundary-mode", o.boundary_mode, "hard | soft");
}

splitflow::RunConfig resolve(const Overrides& o) {
    using namespace splitflow;
    RunConfig c;
    if (o.config) {
        std::ifstream in(*o.config);
        if (!in) throw IoError("cannot open config " + *o.config);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(in);
        } catch (const nlohmann::json::parse_error& e) {
            throw DomainError(std::string("malformed config: ") + e.what());
        }
        c = run_config_from_json(j, c);
    }
    if (o.out) c.out_dir = *o.out;
    if (o.seed) c.seeds = {*o.seed, *o.seed, *o.seed};
    if (o.threads) c.threads = *o.threads;
    if (o.dataset) c.dataset = dataset_from_string(*o.dataset);
    if (o.n_particles) c.n_particles = *o.n_particles;
    if (o.n_target) c.n_target = *o.n_target;
    if (o.max_atoms) c.max_atoms = *o.max_atoms;
    if (o.noise) {
        c.params.moons_noise = *o.noise;
        c.params.s_curve_noise = *o.noise;
    }
    if (o.schedule) c.schedule = *o.schedule;
    if (o.checkpoint) c.checkpoint = *o.checkpoint;
    if (o.t_start) c.grid.t_start = *o.t_start;
    if (o.t_end) c.grid.t_end = *o.t_end;
    if (o.n_steps) c.grid.n_steps = *o.n_steps;
    if (o.k) c.k = *o.k;
    if (o.smoothing_window) c.smoothing_window = *o.smoothing_window;
    if (!o.snapshot_times.empty()) c.snapshot_times = o.snapshot_times;
    if (o.train_steps) c.train.n_steps = *o.train_steps;
    if (o.lambda_energy) c.train.lambda_energy = *o.lambda_energy;
    if (o.lambda_bound) c.train.lambda_bound = *o.lambda_bound;
    if (o.learning_rate) c.train.learning_rate = *o.learning_rate;
    if (o.weight_decay) c.train.weight_decay = *o.weight_decay;
    if (o.batch_size) {
        c.train.batch_size = *o.batch_size;
        c.train.n_time_samples = *o.batch_size;
    }
    if (o.boundary_mode) {
        c.train = train_config_from_json({{"mode", *o.boundary_mode}}, c.train);
    }
    c.validate();
    return c;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Detect path splitting in stochastic-interpolant flows"};
    app.require_subcommand(1);
    Overrides o;

    auto* generate = app.add_subcommand("generate", "Write prior.csv, target.csv, atoms.csv");
    auto* train = app.add_subcommand("train", "Train a learned schedule");
    auto* analyze = app.add_subcommand("analyze", "Integrate particles and detect t*");
    auto* report = app.add_subcommand("report", "Summarize report.json as markdown");
    for (CLI::App* sub : {generate, train, analyze, report}) add_flags(*sub, o);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitUsage;
    }

    try {
        const splitflow::RunConfig config = resolve(o);
        if (generate->parsed()) {
            std::cout << splitflow::cmd_generate(config) << "\n";
        } else if (train->parsed()) {
            const auto out = splitflow::cmd_train(config);
            const auto& trace = out.result.trace;
            std::cout << "trained " << trace.size() << " steps";
            if (!trace.empty()) {
                std::cout << ", energy " << trace.front().energy << " -> " << trace.back().energy;
            }
            std::cout << " -> " << out.checkpoint.string() << "\n";
        } else if (analyze->parsed()) {
            const auto res = splitflow::cmd_analyze(config);
            if (res.report.split_detected) {
                std::cout << "t* = " << res.report.t_star << " (peak slope " << res.report.peak_slope
                          << ")\n";
            } else {
                std::cout << res.report.finding << "\n";
            }
        } else if (report->parsed()) {
            splitflow::cmd_report(config);
            std::cout << "wrote " << (config.out_dir / "summary.md").string() << "\n";
        }
    } catch (const splitflow::DivergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const splitflow::BlowUpError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const splitflow::SingularTimeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const splitflow::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const splitflow::DomainError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
