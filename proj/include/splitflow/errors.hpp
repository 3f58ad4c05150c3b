#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace splitflow {

/// Precondition violation on an argument (out-of-range time, bad shape, ...).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// sigma^2(t) <= 0: the posterior weights are undefined at this time.
class SingularTimeError : public std::runtime_error {
public:
    SingularTimeError(double t, double sigma2)
        : std::runtime_error("singular time t=" + std::to_string(t) +
                             " (sigma^2=" + std::to_string(sigma2) + ")"),
          time_(t) {}
    double time() const noexcept { return time_; }

private:
    double time_;
};

/// Monte Carlo bin received too few samples to form a conditional mean.
class InsufficientSamplesError : public std::runtime_error {
public:
    explicit InsufficientSamplesError(std::size_t hits)
        : std::runtime_error("insufficient samples in bin: " + std::to_string(hits) + " hits"),
          hits_(hits) {}
    std::size_t hits() const noexcept { return hits_; }

private:
    std::size_t hits_;
};

/// Non-finite state while integrating a trajectory.
class BlowUpError : public std::runtime_error {
public:
    BlowUpError(double t, const std::string& what)
        : std::runtime_error("integration blow-up at t=" + std::to_string(t) + ": " + what),
          time_(t) {}
    double time() const noexcept { return time_; }

private:
    double time_;
};

/// Non-finite loss during schedule training.
class DivergenceError : public std::runtime_error {
public:
    explicit DivergenceError(std::size_t step)
        : std::runtime_error("training diverged at step " + std::to_string(step)), step_(step) {}
    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace splitflow
