#include "splitflow/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <string>

#include "splitflow/csv.hpp"
#include "splitflow/errors.hpp"

namespace splitflow {

namespace {

void require_points(std::size_t n, std::size_t min_n, const char* what) {
    if (n < min_n) {
        throw DomainError(std::string(what) + ": need at least " + std::to_string(min_n) +
                          " points");
    }
}

}  // namespace

DiscreteTarget DiscreteTarget::uniform(std::vector<Vec2> atoms) {
    DiscreteTarget t;
    const double w = 1.0 / static_cast<double>(atoms.size());
    t.priors.assign(atoms.size(), w);
    t.atoms = std::move(atoms);
    return t;
}

void DiscreteTarget::validate() const {
    if (atoms.empty()) throw DomainError("target has no atoms");
    if (atoms.size() != priors.size()) throw DomainError("atom/prior count mismatch");
    double sum = 0.0;
    for (std::size_t i = 0; i < priors.size(); ++i) {
        if (!(priors[i] > 0.0)) throw DomainError("prior weights must be positive");
        if (!is_finite(atoms[i])) throw DomainError("non-finite atom");
        sum += priors[i];
    }
    if (std::fabs(sum - 1.0) > 1e-12) throw DomainError("prior weights must sum to 1");
}

ParticleCloud sample_prior(std::size_t n, std::uint64_t seed) {
    require_points(n, 1, "sample_prior");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    ParticleCloud c{std::vector<Vec2>(n), seed, "prior"};
    for (Vec2& p : c.points) {
        p.x = normal(rng);
        p.y = normal(rng);
    }
    return c;
}

ParticleCloud make_two_moons(std::size_t n, double noise, std::uint64_t seed, double scale) {
    require_points(n, 2, "make_two_moons");
    if (!(noise >= 0.0)) throw DomainError("noise must be non-negative");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
    std::normal_distribution<double> normal(0.0, 1.0);
    const Vec2 center{0.5, 0.25};
    ParticleCloud c{std::vector<Vec2>(n), seed, "two_moons"};
    for (std::size_t i = 0; i < n; ++i) {
        const double u = angle(rng);
        Vec2 p = (i % 2 == 0) ? Vec2{std::cos(u), std::sin(u)}
                              : Vec2{1.0 - std::cos(u), 0.5 - std::sin(u)};
        if (noise > 0.0) {
            p.x += noise * normal(rng);
            p.y += noise * normal(rng);
        }
        c.points[i] = scale * (p - center);
    }
    std::shuffle(c.points.begin(), c.points.end(), rng);
    return c;
}

ParticleCloud make_checkerboard(std::size_t n, int cells_per_side, double extent,
                                std::uint64_t seed) {
    require_points(n, 1, "make_checkerboard");
    if (cells_per_side <= 0 || cells_per_side % 2 != 0) {
        throw DomainError("checkerboard cells_per_side must be a positive even number");
    }
    if (!(extent > 0.0)) throw DomainError("checkerboard extent must be positive");
    const double width = 2.0 * extent / cells_per_side;
    std::vector<std::pair<int, int>> black;
    for (int i = 0; i < cells_per_side; ++i) {
        for (int j = 0; j < cells_per_side; ++j) {
            if ((i + j) % 2 == 0) black.emplace_back(i, j);
        }
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const auto cell_of = [&](double v) {
        return static_cast<int>(std::floor((v + extent) / width));
    };
    ParticleCloud c{std::vector<Vec2>(n), seed, "checkerboard"};
    for (std::size_t k = 0; k < n; ++k) {
        const auto [ci, cj] = black[k % black.size()];
        Vec2 p;
        // Rounding can land a draw on the far cell edge; redraw so the parity
        // predicate holds exactly.
        do {
            p.x = -extent + (ci + unit(rng)) * width;
            p.y = -extent + (cj + unit(rng)) * width;
        } while (cell_of(p.x) != ci || cell_of(p.y) != cj);
        c.points[k] = p;
    }
    std::shuffle(c.points.begin(), c.points.end(), rng);
    return c;
}

ParticleCloud make_s_curve(std::size_t n, double noise, std::uint64_t seed) {
    require_points(n, 1, "make_s_curve");
    if (!(noise >= 0.0)) throw DomainError("noise must be non-negative");
    std::mt19937_64 rng(seed);
    const double half = 1.5 * std::numbers::pi;
    std::uniform_real_distribution<double> param(-half, half);
    std::normal_distribution<double> normal(0.0, 1.0);
    // The raw curve spans [-1,1] x [-2,2]; a unit scale already fits [-2,2]^2.
    constexpr double scale = 1.0;
    ParticleCloud c{std::vector<Vec2>(n), seed, "s_curve"};
    for (Vec2& p : c.points) {
        const double u = param(rng);
        const double sgn = u < 0.0 ? -1.0 : 1.0;
        p = scale * Vec2{std::sin(u), sgn * (std::cos(u) - 1.0)};
        if (noise > 0.0) {
            p.x += noise * normal(rng);
            p.y += noise * normal(rng);
        }
    }
    return c;
}

ParticleCloud make_gaussian_mixture(std::size_t n, int k, double radius, double comp_std,
                                    std::uint64_t seed) {
    require_points(n, 1, "make_gaussian_mixture");
    if (k < 1) throw DomainError("mixture needs at least one component");
    if (!(radius > 0.0)) throw DomainError("mixture radius must be positive");
    if (!(comp_std >= 0.0)) throw DomainError("component std must be non-negative");
    std::vector<Vec2> means(static_cast<std::size_t>(k));
    for (int j = 0; j < k; ++j) {
        const double a = 2.0 * std::numbers::pi * j / k;
        means[j] = {radius * std::cos(a), radius * std::sin(a)};
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    ParticleCloud c{std::vector<Vec2>(n), seed, "gaussian_mixture"};
    for (std::size_t i = 0; i < n; ++i) {
        Vec2 p = means[i % means.size()];
        if (comp_std > 0.0) {
            p.x += comp_std * normal(rng);
            p.y += comp_std * normal(rng);
        }
        c.points[i] = p;
    }
    std::shuffle(c.points.begin(), c.points.end(), rng);
    return c;
}

DiscreteTarget cloud_to_target(const ParticleCloud& cloud, std::size_t max_atoms,
                               std::uint64_t seed) {
    if (cloud.points.empty()) throw DomainError("cannot build a target from an empty cloud");
    if (max_atoms < 1) throw DomainError("max_atoms must be at least 1");
    if (cloud.points.size() <= max_atoms) return DiscreteTarget::uniform(cloud.points);

    std::vector<std::size_t> idx(cloud.points.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::vector<std::size_t> chosen;
    chosen.reserve(max_atoms);
    std::mt19937_64 rng(seed);
    std::sample(idx.begin(), idx.end(), std::back_inserter(chosen), max_atoms, rng);
    std::vector<Vec2> atoms;
    atoms.reserve(max_atoms);
    for (std::size_t i : chosen) atoms.push_back(cloud.points[i]);
    return DiscreteTarget::uniform(std::move(atoms));
}

void write_cloud_csv(const std::filesystem::path& path, const ParticleCloud& cloud,
                     const std::string& comment) {
    CsvWriter w(path, {"x", "y"}, comment);
    for (const Vec2& p : cloud.points) w.row({p.x, p.y});
    w.close();
}

ParticleCloud read_cloud_csv(const std::filesystem::path& path) {
    const CsvTable t = read_csv(path);
    const std::size_t cx = t.column("x"), cy = t.column("y");
    ParticleCloud c;
    c.label = path.stem().string();
    c.points.reserve(t.rows.size());
    for (const auto& r : t.rows) c.points.push_back({r[cx], r[cy]});
    if (c.points.empty()) throw IoError("no points in " + path.string());
    return c;
}

void write_target_csv(const std::filesystem::path& path, const DiscreteTarget& target,
                      const std::string& comment) {
    CsvWriter w(path, {"x", "y", "prior"}, comment);
    for (std::size_t i = 0; i < target.size(); ++i) {
        w.row({target.atoms[i].x, target.atoms[i].y, target.priors[i]});
    }
    w.close();
}

DiscreteTarget read_target_csv(const std::filesystem::path& path) {
    const CsvTable t = read_csv(path);
    const std::size_t cx = t.column("x"), cy = t.column("y"), cp = t.column("prior");
    DiscreteTarget target;
    for (const auto& r : t.rows) {
        target.atoms.push_back({r[cx], r[cy]});
        target.priors.push_back(r[cp]);
    }
    target.validate();
    return target;
}

}  // namespace splitflow
