#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "splitflow/datasets.hpp"
#include "splitflow/indicator.hpp"
#include "splitflow/jacobi.hpp"
#include "splitflow/pathnet.hpp"
#include "splitflow/schedule.hpp"

namespace splitflow {

// Orchestration behind the command-line tool: generate -> (train) -> analyze -> report.

enum class DatasetKind {
    TwoMoons,
    Checkerboard,
    SCurve,
    GaussianMixture,
    TwoAtoms,    // atoms at (+-offset, 0), equal priors
    SingleAtom,  // one atom at (offset, 0)
};

std::string to_string(DatasetKind kind);
/// Throws DomainError on an unknown name.
DatasetKind dataset_from_string(const std::string& name);

struct DatasetParams {
    double moons_noise = 0.05;
    double moons_scale = 2.0;
    int checker_cells = 4;
    double checker_extent = 2.0;
    double s_curve_noise = 0.05;
    int mixture_k = 8;
    double mixture_radius = 2.0;
    double mixture_std = 0.1;
    double atom_offset = 1.0;
};

struct RunSeeds {
    std::uint64_t data = 0;   // target cloud and atom subsampling
    std::uint64_t train = 0;  // schedule training
    std::uint64_t run = 0;    // prior particles
};

struct RunConfig {
    DatasetKind dataset = DatasetKind::TwoMoons;
    DatasetParams params;
    std::size_t n_particles = 3000;
    std::size_t n_target = 3000;
    std::size_t max_atoms = 512;
    std::string schedule = "default";  // "default" or "learned"
    std::filesystem::path checkpoint;  // learned schedule; defaults to <out>/checkpoint.json
    TimeGrid grid;
    std::size_t k = 30;
    std::size_t smoothing_window = 5;
    std::vector<double> snapshot_times{0.0, 0.25, 0.5, 0.75, 1.0};
    RunSeeds seeds;
    TrainConfig train;
    std::filesystem::path out_dir = "out";
    unsigned threads = 0;

    /// Throws DomainError when a value violates a module precondition.
    void validate() const;
    std::filesystem::path checkpoint_path() const;
};

nlohmann::json to_json(const RunConfig& c);
/// Fields absent from `j` keep their value from `base`.
RunConfig run_config_from_json(const nlohmann::json& j, RunConfig base = {});

/// Config without run-location fields (output dir, thread count).
nlohmann::json canonical_json(const RunConfig& c);

/// 16 hex digits of FNV-1a over the canonical JSON of every result-affecting field.
std::string config_hash(const RunConfig& c);

struct DatasetBundle {
    ParticleCloud prior;
    ParticleCloud target_cloud;
    DiscreteTarget target;
};

/// Deterministic generation from the config's seeds.
DatasetBundle build_datasets(const RunConfig& c);

/// Writes prior.csv, target.csv and atoms.csv; returns a one-line summary.
std::string cmd_generate(const RunConfig& c);

struct TrainOutcome {
    TrainResult result;
    std::filesystem::path checkpoint;
    std::filesystem::path trace;
};
/// Writes the checkpoint and <out>/train_trace.csv.
TrainOutcome cmd_train(const RunConfig& c);

struct AnalysisResult {
    std::vector<TrajectoryRecord> records;
    IndicatorSeries series;
    SplitReport report;
    nlohmann::json report_json;
};
/// Integrates all particles and writes trajectories.csv, indicator.csv, report.json and
/// snapshots_t{i}.csv (one per requested display time).
AnalysisResult cmd_analyze(const RunConfig& c);

/// Reads <out>/report.json and writes <out>/summary.md; returns the summary text.
std::string cmd_report(const RunConfig& c);

/// Loads the schedule the config asks for (default or learned checkpoint).
Schedule load_schedule(const RunConfig& c);

nlohmann::json report_to_json(const SplitReport& r, const RunConfig& c);

}  // namespace splitflow
