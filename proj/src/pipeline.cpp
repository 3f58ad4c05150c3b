#include "splitflow/pipeline.hpp"

#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <system_error>

#include "splitflow/csv.hpp"
#include "splitflow/errors.hpp"
#include "splitflow/velocity_field.hpp"

namespace fs = std::filesystem;

namespace splitflow {

namespace {

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) {
        throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
    }
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    out.close();
    if (out.fail()) throw IoError("failed writing " + path.string());
}

nlohmann::json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw IoError("malformed JSON in " + path.string() + ": " + e.what());
    }
}

std::string fnv1a_hex(const std::string& text) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// Fields that determine prior.csv / target.csv / atoms.csv.
std::string data_hash(const RunConfig& c) {
    const nlohmann::json j = canonical_json(c);
    const nlohmann::json data{{"dataset", j.at("dataset")},
                              {"dataset_params", j.at("dataset_params")},
                              {"n_particles", j.at("n_particles")},
                              {"n_target", j.at("n_target")},
                              {"max_atoms", j.at("max_atoms")},
                              {"data_seed", c.seeds.data},
                              {"run_seed", c.seeds.run}};
    return fnv1a_hex(data.dump());
}

std::string hash_comment(const RunConfig& c) { return "config_hash: " + config_hash(c); }

std::string data_comment(const RunConfig& c) {
    return hash_comment(c) + " data_hash: " + data_hash(c);
}

// True when `path` was written by generate for the same data fields as `c`.
bool generated_for(const fs::path& path, const RunConfig& c) {
    std::ifstream in(path);
    std::string first;
    if (!in || !std::getline(in, first)) return false;
    return first.find("data_hash: " + data_hash(c)) != std::string::npos;
}

ParticleCloud atom_cloud(const std::vector<Vec2>& atoms, std::size_t n, std::uint64_t seed,
                         const std::string& label) {
    ParticleCloud c{std::vector<Vec2>(n), seed, label};
    for (std::size_t i = 0; i < n; ++i) c.points[i] = atoms[i % atoms.size()];
    return c;
}

nlohmann::json grid_to_json(const TimeGrid& g) {
    return {{"t_start", g.t_start}, {"t_end", g.t_end}, {"n_steps", g.n_steps}};
}

}  // namespace

std::string to_string(DatasetKind kind) {
    switch (kind) {
        case DatasetKind::TwoMoons: return "two_moons";
        case DatasetKind::Checkerboard: return "checkerboard";
        case DatasetKind::SCurve: return "s_curve";
        case DatasetKind::GaussianMixture: return "gaussian_mixture";
        case DatasetKind::TwoAtoms: return "two_atoms";
        case DatasetKind::SingleAtom: return "single_atom";
    }
    return "unknown";
}

DatasetKind dataset_from_string(const std::string& name) {
    for (DatasetKind k : {DatasetKind::TwoMoons, DatasetKind::Checkerboard, DatasetKind::SCurve,
                          DatasetKind::GaussianMixture, DatasetKind::TwoAtoms,
                          DatasetKind::SingleAtom}) {
        if (to_string(k) == name) return k;
    }
    throw DomainError("unknown dataset: " + name);
}

void RunConfig::validate() const {
    if (n_particles < 1) throw DomainError("n_particles must be at least 1");
    if (n_target < 2) throw DomainError("n_target must be at least 2");
    if (max_atoms < 1) throw DomainError("max_atoms must be at least 1");
    if (schedule != "default" && schedule != "learned") {
        throw DomainError("schedule must be 'default' or 'learned'");
    }
    grid.validate();
    if (k < 1 || k > n_particles) throw DomainError("k must lie in [1, n_particles]");
    if (smoothing_window < 1 || smoothing_window % 2 == 0 || smoothing_window > grid.size()) {
        throw DomainError("smoothing_window must be odd and at most the grid length");
    }
    if (params.checker_cells <= 0 || params.checker_cells % 2 != 0) {
        throw DomainError("checkerboard cells must be a positive even number");
    }
    train.validate();
}

fs::path RunConfig::checkpoint_path() const {
    return checkpoint.empty() ? out_dir / "checkpoint.json" : checkpoint;
}

nlohmann::json to_json(const RunConfig& c) {
    const DatasetParams& p = c.params;
    return {{"dataset", to_string(c.dataset)},
            {"dataset_params",
             {{"moons_noise", p.moons_noise},
              {"moons_scale", p.moons_scale},
              {"checker_cells", p.checker_cells},
              {"checker_extent", p.checker_extent},
              {"s_curve_noise", p.s_curve_noise},
              {"mixture_k", p.mixture_k},
              {"mixture_radius", p.mixture_radius},
              {"mixture_std", p.mixture_std},
              {"atom_offset", p.atom_offset}}},
            {"n_particles", c.n_particles},
            {"n_target", c.n_target},
            {"max_atoms", c.max_atoms},
            {"schedule", c.schedule},
            {"checkpoint", c.checkpoint.string()},
            {"grid", grid_to_json(c.grid)},
            {"k", c.k},
            {"smoothing_window", c.smoothing_window},
            {"snapshot_times", c.snapshot_times},
            {"seeds", {{"data", c.seeds.data}, {"train", c.seeds.train}, {"run", c.seeds.run}}},
            {"train", to_json(c.train)},
            {"out_dir", c.out_dir.string()},
            {"threads", c.threads}};
}

RunConfig run_config_from_json(const nlohmann::json& j, RunConfig c) {
    try {
        if (j.contains("dataset")) c.dataset = dataset_from_string(j.at("dataset").get<std::string>());
        if (j.contains("dataset_params")) {
            const auto& d = j.at("dataset_params");
            DatasetParams& p = c.params;
            p.moons_noise = d.value("moons_noise", p.moons_noise);
            p.moons_scale = d.value("moons_scale", p.moons_scale);
            p.checker_cells = d.value("checker_cells", p.checker_cells);
            p.checker_extent = d.value("checker_extent", p.checker_extent);
            p.s_curve_noise = d.value("s_curve_noise", p.s_curve_noise);
            p.mixture_k = d.value("mixture_k", p.mixture_k);
            p.mixture_radius = d.value("mixture_radius", p.mixture_radius);
            p.mixture_std = d.value("mixture_std", p.mixture_std);
            p.atom_offset = d.value("atom_offset", p.atom_offset);
        }
        c.n_particles = j.value("n_particles", c.n_particles);
        c.n_target = j.value("n_target", c.n_target);
        c.max_atoms = j.value("max_atoms", c.max_atoms);
        c.schedule = j.value("schedule", c.schedule);
        if (j.contains("checkpoint")) c.checkpoint = j.at("checkpoint").get<std::string>();
        if (j.contains("grid")) {
            const auto& g = j.at("grid");
            c.grid.t_start = g.value("t_start", c.grid.t_start);
            c.grid.t_end = g.value("t_end", c.grid.t_end);
            c.grid.n_steps = g.value("n_steps", c.grid.n_steps);
        }
        c.k = j.value("k", c.k);
        c.smoothing_window = j.value("smoothing_window", c.smoothing_window);
        c.snapshot_times = j.value("snapshot_times", c.snapshot_times);
        if (j.contains("seeds")) {
            const auto& s = j.at("seeds");
            c.seeds.data = s.value("data", c.seeds.data);
            c.seeds.train = s.value("train", c.seeds.train);
            c.seeds.run = s.value("run", c.seeds.run);
        }
        if (j.contains("train")) c.train = train_config_from_json(j.at("train"), c.train);
        if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
        c.threads = j.value("threads", c.threads);
    } catch (const nlohmann::json::exception& e) {
        throw DomainError(std::string("invalid config: ") + e.what());
    }
    return c;
}

nlohmann::json canonical_json(const RunConfig& c) {
    nlohmann::json j = to_json(c);
    j.erase("out_dir");
    j.erase("threads");
    return j;
}

std::string config_hash(const RunConfig& c) { return fnv1a_hex(canonical_json(c).dump()); }

DatasetBundle build_datasets(const RunConfig& c) {
    const DatasetParams& p = c.params;
    const std::uint64_t seed = c.seeds.data;
    DatasetBundle b;
    b.prior = sample_prior(c.n_particles, c.seeds.run);
    switch (c.dataset) {
        case DatasetKind::TwoMoons:
            b.target_cloud = make_two_moons(c.n_target, p.moons_noise, seed, p.moons_scale);
            break;
        case DatasetKind::Checkerboard:
            b.target_cloud = make_checkerboard(c.n_target, p.checker_cells, p.checker_extent, seed);
            break;
        case DatasetKind::SCurve:
            b.target_cloud = make_s_curve(c.n_target, p.s_curve_noise, seed);
            break;
        case DatasetKind::GaussianMixture:
            b.target_cloud =
                make_gaussian_mixture(c.n_target, p.mixture_k, p.mixture_radius, p.mixture_std, seed);
            break;
        case DatasetKind::TwoAtoms: {
            const std::vector<Vec2> atoms{{p.atom_offset, 0.0}, {-p.atom_offset, 0.0}};
            b.target_cloud = atom_cloud(atoms, c.n_target, seed, "two_atoms");
            b.target = DiscreteTarget::uniform(atoms);
            return b;
        }
        case DatasetKind::SingleAtom: {
            const std::vector<Vec2> atoms{{p.atom_offset, 0.0}};
            b.target_cloud = atom_cloud(atoms, c.n_target, seed, "single_atom");
            b.target = DiscreteTarget::uniform(atoms);
            return b;
        }
    }
    b.target = cloud_to_target(b.target_cloud, c.max_atoms, seed + 1);
    return b;
}

std::string cmd_generate(const RunConfig& c) {
    c.validate();
    ensure_dir(c.out_dir);
    const DatasetBundle b = build_datasets(c);
    const std::string comment = data_comment(c);
    write_cloud_csv(c.out_dir / "prior.csv", b.prior, comment);
    write_cloud_csv(c.out_dir / "target.csv", b.target_cloud, comment);
    write_target_csv(c.out_dir / "atoms.csv", b.target, comment);
    std::ostringstream msg;
    msg << "generated " << to_string(c.dataset) << ": " << b.prior.points.size()
        << " prior particles, " << b.target_cloud.points.size() << " target points, "
        << b.target.size() << " atoms -> " << c.out_dir.string();
    return msg.str();
}

TrainOutcome cmd_train(const RunConfig& c) {
    c.validate();
    ensure_dir(c.out_dir);
    const fs::path ckpt = c.checkpoint_path();
    if (!ckpt.parent_path().empty() && !fs::is_directory(ckpt.parent_path())) {
        throw IoError("checkpoint directory does not exist: " + ckpt.parent_path().string());
    }
    const fs::path target_csv = c.out_dir / "target.csv";
    const ParticleCloud target = generated_for(target_csv, c) ? read_cloud_csv(target_csv)
                                                              : build_datasets(c).target_cloud;

    TrainConfig tc = c.train;
    tc.seed = c.seeds.train;
    const PointSampler prior = [](std::mt19937_64& rng) {
        std::normal_distribution<double> normal(0.0, 1.0);
        const double x = normal(rng);
        return Vec2{x, normal(rng)};
    };
    const std::vector<Vec2> points = target.points;
    const PointSampler target_sampler = [points](std::mt19937_64& rng) {
        std::uniform_int_distribution<std::size_t> pick(0, points.size() - 1);
        return points[pick(rng)];
    };

    TrainOutcome out{train(tc, prior, target_sampler), ckpt, c.out_dir / "train_trace.csv"};
    nlohmann::json ck = checkpoint_to_json(out.result, tc);
    ck["config_hash"] = config_hash(c);
    write_text(ckpt, ck.dump(1) + "\n");

    CsvWriter w(out.trace, {"step", "total", "bound", "energy", "grad_norm"}, hash_comment(c));
    for (const TrainRecord& r : out.result.trace) {
        w.row({static_cast<double>(r.step), r.total, r.bound, r.energy, r.grad_norm});
    }
    w.close();
    return out;
}

Schedule load_schedule(const RunConfig& c) {
    if (c.schedule == "default") return Schedule::analytic_default();
    const Checkpoint ck = checkpoint_from_json(read_json(c.checkpoint_path()));
    auto net = std::make_shared<const PathNetParams>(ck.params);
    return Schedule::learned(std::move(net), ck.derivative_step);
}

nlohmann::json report_to_json(const SplitReport& r, const RunConfig& c) {
    nlohmann::json hotspots = nlohmann::json::array();
    for (const Vec2& p : r.hotspot_positions) hotspots.push_back({p.x, p.y});
    nlohmann::json j;
    j["config_hash"] = config_hash(c);
    j["split_detected"] = r.split_detected;
    j["finding"] = r.finding;
    if (r.split_detected) {
        const Vec2 centroid = hotspot_centroid(r);
        j["t_star"] = r.t_star;
        j["t_index"] = r.t_index;
        j["peak_slope"] = r.peak_slope;
        j["peak_lambda"] = r.peak_lambda;
        j["hotspot_centroid"] = {centroid.x, centroid.y};
        j["hotspot_ids"] = r.hotspot_ids;
    } else {
        j["t_star"] = nullptr;
        j["t_index"] = nullptr;
        j["peak_slope"] = nullptr;
        j["peak_lambda"] = nullptr;
        j["hotspot_centroid"] = nullptr;
        j["hotspot_ids"] = nlohmann::json::array();
    }
    j["k"] = r.k;
    j["hotspots"] = hotspots;
    j["config_echo"] = canonical_json(c);
    return j;
}

AnalysisResult cmd_analyze(const RunConfig& c) {
    c.validate();
    ensure_dir(c.out_dir);
    const fs::path prior_csv = c.out_dir / "prior.csv";
    const fs::path atoms_csv = c.out_dir / "atoms.csv";
    ParticleCloud prior;
    DiscreteTarget target;
    if (generated_for(prior_csv, c) && generated_for(atoms_csv, c)) {
        prior = read_cloud_csv(prior_csv);
        target = read_target_csv(atoms_csv);
    } else {
        DatasetBundle b = build_datasets(c);
        prior = std::move(b.prior);
        target = std::move(b.target);
    }
    if (c.k > prior.points.size()) throw DomainError("k exceeds the number of particles");

    const Schedule schedule = load_schedule(c);
    validate_schedule(schedule);
    const std::vector<double> stage_times = c.grid.stage_times();
    const FieldEvaluator field = closed_form_field(target, schedule, stage_times);

    AnalysisResult res;
    res.records = integrate_cloud(prior.points, field, c.grid, c.threads);
    const TimeParticleMatrix lambdas = lambda_matrix(res.records);
    const TimeParticleMatrix deltas = delta_field(res.records);
    res.series = build_indicator(lambdas, c.grid, c.k, c.smoothing_window);
    res.report = detect_t_star(res.series, res.records);
    res.report_json = report_to_json(res.report, c);

    const std::string comment = hash_comment(c);
    write_trajectories_csv(c.out_dir / "trajectories.csv", res.records, comment);
    write_indicator_csv(c.out_dir / "indicator.csv", res.series, comment);
    write_text(c.out_dir / "report.json", res.report_json.dump(2) + "\n");

    for (std::size_t i = 0; i < c.snapshot_times.size(); ++i) {
        const double shown = c.snapshot_times[i];
        const std::size_t node = c.grid.nearest(shown);
        std::vector<char> flagged(prior.points.size(), 0);
        for (std::size_t p : res.series.topk_indices[node]) flagged[p] = 1;
        CsvWriter w(c.out_dir / ("snapshots_t" + std::to_string(i) + ".csv"),
                    {"particle_id", "t_display", "t", "x", "y", "lambda_max", "delta", "top_k"},
                    comment, 10);
        for (std::size_t p = 0; p < res.records.size(); ++p) {
            const Vec2& x = res.records[p].positions[node];
            w.row({static_cast<double>(p), shown, res.series.times[node], x.x, x.y,
                   lambdas(node, p), deltas(node, p), static_cast<double>(flagged[p])});
        }
        w.close();
    }
    return res;
}

std::string cmd_report(const RunConfig& c) {
    const fs::path report_path = c.out_dir / "report.json";
    if (!fs::exists(report_path)) {
        throw IoError("no analysis found at " + report_path.string() + "; run analyze first");
    }
    const nlohmann::json r = read_json(report_path);
    std::ostringstream md;
    md << "# Splitting analysis\n\n";
    md << "- config hash: `" << r.value("config_hash", std::string("?")) << "`\n";
    md << "- finding: " << r.value("finding", std::string("?")) << "\n";
    md << "- K: " << r.at("k").get<std::size_t>() << "\n";
    if (r.value("split_detected", false)) {
        const auto centroid = r.at("hotspot_centroid").get<std::vector<double>>();
        md << "- t_star: " << format_double(r.at("t_star").get<double>()) << "\n";
        md << "- peak slope: " << format_double(r.at("peak_slope").get<double>()) << "\n";
        md << "- peak Top-K mean lambda_max: " << format_double(r.at("peak_lambda").get<double>())
           << "\n";
        md << "- hotspot centroid: (" << format_double(centroid.at(0)) << ", "
           << format_double(centroid.at(1)) << ")\n";
    } else {
        md << "- t_star: none (no split detected)\n";
    }
    md << "\n## Configuration\n\n```json\n" << r.at("config_echo").dump(2) << "\n```\n";
    const std::string text = md.str();
    write_text(c.out_dir / "summary.md", text);
    return text;
}

}  // namespace splitflow
