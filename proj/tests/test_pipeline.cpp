#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "splitflow/csv.hpp"
#include "splitflow/errors.hpp"
#include "splitflow/pipeline.hpp"

using namespace splitflow;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / "splitflow_test_pipeline" / name;
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

RunConfig small_config(const fs::path& out) {
    RunConfig c;
    c.out_dir = out;
    c.n_particles = 60;
    c.n_target = 200;
    c.max_atoms = 64;
    c.k = 10;
    c.grid.n_steps = 40;
    c.threads = 2;
    return c;
}

}  // namespace

TEST_CASE("dataset names") {
    for (DatasetKind k : {DatasetKind::TwoMoons, DatasetKind::Checkerboard, DatasetKind::SCurve,
                          DatasetKind::GaussianMixture, DatasetKind::TwoAtoms, DatasetKind::SingleAtom}) {
        CHECK(dataset_from_string(to_string(k)) == k);
    }
    CHECK_THROWS_AS(dataset_from_string("three_moons"), DomainError);
}

TEST_CASE("config JSON round trip and hashing") {
    RunConfig c;
    c.dataset = DatasetKind::Checkerboard;
    c.k = 17;
    c.seeds = {3, 4, 5};
    c.train.learning_rate = 2e-3;
    const RunConfig r = run_config_from_json(to_json(c));
    CHECK(r.dataset == DatasetKind::Checkerboard);
    CHECK(r.k == 17);
    CHECK(r.seeds.train == 4);
    CHECK(r.train.learning_rate == 2e-3);
    CHECK(config_hash(r) == config_hash(c));
    CHECK(config_hash(c).size() == 16);

    RunConfig moved = c;
    moved.out_dir = "elsewhere";
    moved.threads = 7;
    CHECK(config_hash(moved) == config_hash(c));
    RunConfig changed = c;
    changed.k = 18;
    CHECK(config_hash(changed) != config_hash(c));

    // absent fields keep the base value
    const RunConfig partial = run_config_from_json({{"k", 5}}, c);
    CHECK(partial.k == 5);
    CHECK(partial.dataset == DatasetKind::Checkerboard);
    CHECK_THROWS_AS(run_config_from_json({{"k", "many"}}), DomainError);
    CHECK_THROWS_AS(run_config_from_json({{"dataset", "blob"}}), DomainError);
}

TEST_CASE("config validation") {
    RunConfig c;
    CHECK_NOTHROW(c.validate());
    c.k = 0;
    CHECK_THROWS_AS(c.validate(), DomainError);
    c = RunConfig{};
    c.smoothing_window = 4;
    CHECK_THROWS_AS(c.validate(), DomainError);
    c = RunConfig{};
    c.schedule = "wavy";
    CHECK_THROWS_AS(c.validate(), DomainError);
    c = RunConfig{};
    c.grid.t_end = 1.0;
    CHECK_THROWS_AS(c.validate(), DomainError);
}

TEST_CASE("generate writes the requested rows and is repeatable") {
    const fs::path d = fresh_dir("generate");
    RunConfig c = small_config(d);
    c.n_particles = 100;
    c.seeds = {1, 1, 1};
    cmd_generate(c);
    const auto prior = read_csv(d / "prior.csv");
    CHECK(prior.rows.size() == 100);
    CHECK(prior.header == std::vector<std::string>{"x", "y"});
    const auto atoms = read_csv(d / "atoms.csv");
    CHECK(atoms.header == std::vector<std::string>{"x", "y", "prior"});
    CHECK(atoms.rows.size() == 64);
    const std::string first = slurp(d / "prior.csv");
    CHECK(first.rfind("# config_hash: " + config_hash(c), 0) == 0);
    cmd_generate(c);
    CHECK(slurp(d / "prior.csv") == first);
}

TEST_CASE("single atom analysis reports no split") {
    const fs::path d = fresh_dir("single");
    RunConfig c = small_config(d);
    c.dataset = DatasetKind::SingleAtom;
    cmd_generate(c);
    const auto res = cmd_analyze(c);
    CHECK_FALSE(res.report.split_detected);
    CHECK(res.report_json.at("split_detected") == false);
    CHECK(res.report_json.at("t_star").is_null());
    const std::string summary = cmd_report(c);
    CHECK(summary.find("no split") != std::string::npos);
}

TEST_CASE("analysis outputs, snapshots and report consistency") {
    const fs::path d = fresh_dir("two_atoms");
    RunConfig c = small_config(d);
    c.dataset = DatasetKind::TwoAtoms;
    c.snapshot_times = {0.0, 0.5, 1.0};
    cmd_generate(c);
    const auto res = cmd_analyze(c);
    REQUIRE(res.report.split_detected);
    for (const char* f : {"trajectories.csv", "indicator.csv", "report.json", "snapshots_t0.csv",
                          "snapshots_t1.csv", "snapshots_t2.csv"}) {
        CHECK(fs::exists(d / f));
    }
    CHECK_FALSE(fs::exists(d / "snapshots_t3.csv"));

    const auto snap = read_csv(d / "snapshots_t2.csv");
    CHECK(snap.rows.size() == c.n_particles);
    double flagged = 0;
    for (const auto& row : snap.rows) {
        flagged += row[snap.column("top_k")];
        CHECK(row[snap.column("t")] == doctest::Approx(c.grid.t_end));
        CHECK(row[snap.column("t_display")] == 1.0);
    }
    CHECK(flagged == c.k);

    const auto ind = read_csv(d / "indicator.csv");
    CHECK(ind.rows.size() == c.grid.size());
    const auto traj = read_csv(d / "trajectories.csv");
    CHECK(traj.rows.size() == c.grid.size() * c.n_particles);

    const std::string summary = cmd_report(c);
    CHECK(summary.find(format_double(res.report.t_star)) != std::string::npos);
    CHECK(summary.find(config_hash(c)) != std::string::npos);
    CHECK(cmd_report(c) == summary);
    for (const char* f : {"trajectories.csv", "indicator.csv", "snapshots_t0.csv"}) {
        CHECK(slurp(d / f).rfind("# config_hash: " + config_hash(c), 0) == 0);
    }
}

TEST_CASE("analyze regenerates when stored data came from another config") {
    const fs::path d = fresh_dir("stale");
    RunConfig c = small_config(d);
    c.dataset = DatasetKind::TwoMoons;
    cmd_generate(c);
    c.dataset = DatasetKind::SingleAtom;
    CHECK_FALSE(cmd_analyze(c).report.split_detected);
}

TEST_CASE("report without analysis is an I/O error") {
    const fs::path d = fresh_dir("no_report");
    CHECK_THROWS_AS(cmd_report(small_config(d)), IoError);
}

TEST_CASE("train writes a checkpoint the learned schedule can load") {
    const fs::path d = fresh_dir("train");
    RunConfig c = small_config(d);
    c.dataset = DatasetKind::TwoAtoms;
    c.train.n_steps = 5;
    c.train.batch_size = 16;
    c.train.n_time_samples = 16;
    cmd_generate(c);
    const auto out = cmd_train(c);
    CHECK(fs::exists(out.checkpoint));
    CHECK(read_csv(out.trace).rows.size() == 5);
    c.schedule = "learned";
    const Schedule s = load_schedule(c);
    CHECK(s.kind() == ScheduleKind::Learned);
    CHECK_NOTHROW(validate_schedule(s));
    const auto res = cmd_analyze(c);
    CHECK(res.records.size() == c.n_particles);

    RunConfig bad = c;
    bad.checkpoint = d / "missing_dir" / "ck.json";
    CHECK_THROWS_AS(cmd_train(bad), IoError);
}

TEST_CASE("zero energy weight trace stays at zero") {
    const fs::path d = fresh_dir("train_zero");
    RunConfig c = small_config(d);
    c.dataset = DatasetKind::TwoAtoms;
    c.train.lambda_energy = 0.0;
    c.train.n_steps = 10;
    c.train.batch_size = 8;
    c.train.n_time_samples = 8;
    const auto out = cmd_train(c);
    for (const auto& r : out.result.trace) CHECK(r.total <= 1e-20);
}

TEST_CASE("end-to-end determinism") {
    auto run = [](const fs::path& d) {
        RunConfig c = small_config(d);
        c.seeds = {2, 2, 2};
        cmd_generate(c);
        cmd_analyze(c);
        cmd_report(c);
    };
    const fs::path a = fresh_dir("det_a");
    const fs::path b = fresh_dir("det_b");
    run(a);
    run(b);
    for (const auto& e : fs::directory_iterator(a)) {
        const fs::path other = b / e.path().filename();
        REQUIRE(fs::exists(other));
        CHECK(slurp(e.path()) == slurp(other));
    }
}
