#pragma once

#include <cstdint>
#include <span>

namespace hindpo::trainer {

/// Running statistics of values shifted by the first value seen; `mean` is
/// the mean of the shifted values.
struct WelfordState {
    std::uint64_t count = 0;
    double mean = 0.0;
    double m2 = 0.0;
    double shift = 0.0;
};

/// One single-pass update of the running mean and sum of squared deviations.
WelfordState welford_update(WelfordState state, double value);

/// Sample variance m2 / (count - 1). Throws hindpo::Error when count < 2.
double welford_finalize(const WelfordState& state);

double running_sample_variance(std::span<const double> values);

} // namespace hindpo::trainer
