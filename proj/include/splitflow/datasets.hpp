#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "splitflow/linalg.hpp"

namespace splitflow {

struct ParticleCloud {
    std::vector<Vec2> points;
    std::uint64_t seed = 0;
    std::string label;
};

/// Finite-support terminal law: atoms y_i with prior masses pi_i.
struct DiscreteTarget {
    std::vector<Vec2> atoms;
    std::vector<double> priors;

    std::size_t size() const noexcept { return atoms.size(); }

    /// Equal priors 1/N.
    static DiscreteTarget uniform(std::vector<Vec2> atoms);

    /// Throws DomainError unless priors are positive, sum to 1 within 1e-12, and
    /// match the atom count.
    void validate() const;
};

/// n i.i.d. N(0, I_2) samples.
ParticleCloud sample_prior(std::size_t n, std::uint64_t seed);

/// Two interleaved half circles: upper (cos u, sin u), lower (1 - cos u, 0.5 - sin u),
/// u ~ U[0, pi]. Gaussian noise is added in the raw frame, then the cloud is shifted by
/// the population mean (0.5, 0.25) and scaled by `scale`. Arcs alternate by index.
ParticleCloud make_two_moons(std::size_t n, double noise, std::uint64_t seed,
                             double scale = 2.0);

/// Uniform over the black cells ((i + j) even) of a cells x cells board on
/// [-extent, extent]^2.
ParticleCloud make_checkerboard(std::size_t n, int cells_per_side, double extent,
                                std::uint64_t seed);

/// x = sin u, y = sign(u)(cos u - 1), u ~ U[-3pi/2, 3pi/2], plus Gaussian noise.
ParticleCloud make_s_curve(std::size_t n, double noise, std::uint64_t seed);

/// Equal-weight mixture of k isotropic Gaussians on a circle of `radius`.
ParticleCloud make_gaussian_mixture(std::size_t n, int k, double radius, double comp_std,
                                    std::uint64_t seed);

/// All points when the cloud is small enough, otherwise a uniform subsample without
/// replacement. Priors are uniform either way.
DiscreteTarget cloud_to_target(const ParticleCloud& cloud, std::size_t max_atoms,
                               std::uint64_t seed);

// CSV: cloud header `x,y`, target header `x,y,prior`. Lines starting with '#' are
// comments; `comment` (if non-empty) is written as such a line ahead of the header.
void write_cloud_csv(const std::filesystem::path& path, const ParticleCloud& cloud,
                     const std::string& comment = {});
ParticleCloud read_cloud_csv(const std::filesystem::path& path);
void write_target_csv(const std::filesystem::path& path, const DiscreteTarget& target,
                      const std::string& comment = {});
DiscreteTarget read_target_csv(const std::filesystem::path& path);

}  // namespace splitflow
