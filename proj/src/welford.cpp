#include "hindpo/welford.hpp"

#include "hindpo/error.hpp"

#include <string>

namespace hindpo::trainer {

WelfordState welford_update(WelfordState state, double value) {
    if (state.count == 0) state.shift = value;
    ++state.count;
    const double x = value - state.shift;
    const double delta = x - state.mean;
    state.mean += delta / static_cast<double>(state.count);
    state.m2 += delta * (x - state.mean);
    return state;
}

double welford_finalize(const WelfordState& state) {
    if (state.count < 2) {
        throw Error("sample variance needs at least 2 values, have " + std::to_string(state.count));
    }
    return state.m2 / static_cast<double>(state.count - 1);
}

double running_sample_variance(std::span<const double> values) {
    WelfordState state;
    for (double v : values) state = welford_update(state, v);
    return welford_finalize(state);
}

} // namespace hindpo::trainer
