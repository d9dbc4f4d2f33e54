#pragma once

#include <cstdint>
#include <limits>
#include <string_view>
#include <vector>

#include "dcqr/survival.hpp"

namespace dcqr {

enum class ScenarioKind { NoGroupEffect, GroupEffect };

ScenarioKind parse_scenario_kind(std::string_view name);  // "none" | "group"

// Failure time T given covariate x is exponential with the rate of the
// segment [breakpoints[k], breakpoints[k+1]) containing x; the group arm
// multiplies T by group_multiplier. Censoring C ~ Uniform(0, censor_bound).
struct Scenario {
    ScenarioKind kind = ScenarioKind::NoGroupEffect;
    std::vector<double> breakpoints{0.0, 1.0, 2.0, 3.0, 4.0, 5.0};
    std::vector<double> rates{2.0, 0.5, 0.2, 0.5, 2.0};
    double group_multiplier = 2.0;
    double censor_bound = std::numeric_limits<double>::infinity();  // inf: no censoring

    void validate() const;
    double rate_at(double x) const;
};

Scenario default_scenario(ScenarioKind kind);

struct SimReplicate {
    Dataset dataset;                  // covariates: x, plus group (0/1) for the group kind
    std::vector<double> true_times;  // T_i, for oracle evaluation only
};

SimReplicate simulate(const Scenario& scenario, std::size_t n, std::uint64_t seed);

struct CensorCalibration {
    double censor_bound = 0.0;
    double proportion = 0.0;  // Monte Carlo P(C < T) at censor_bound, <= target
};

inline constexpr std::size_t kCalibrationDraws = 100000;

// Bisection on c over a fixed Monte Carlo sample of (T, C/c). The search
// range is [0.01, 1000] times the median failure time; a target outside
// what that range can reach raises CalibrationFailure.
CensorCalibration calibrate_censor_bound(const Scenario& scenario, double target, std::uint64_t seed,
                                         std::size_t draws = kCalibrationDraws);

// -log(1 - tau) / rate(x), times the multiplier for the group arm.
double true_quantile(const Scenario& scenario, double x, bool group, double tau);

}  // namespace dcqr
