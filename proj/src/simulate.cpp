#include "dcqr/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dcqr/error.hpp"
#include "dcqr/random.hpp"

namespace dcqr {

ScenarioKind parse_scenario_kind(std::string_view name) {
    if (name == "none") return ScenarioKind::NoGroupEffect;
    if (name == "group") return ScenarioKind::GroupEffect;
    fail(ErrorKind::InvalidConfig, "unknown scenario '" + std::string(name) + "' (expected none|group)");
}

void Scenario::validate() const {
    require(breakpoints.size() >= 2, ErrorKind::InvalidConfig, "scenario needs at least two breakpoints");
    require(rates.size() + 1 == breakpoints.size(), ErrorKind::InvalidConfig,
            "scenario needs one rate per breakpoint segment");
    for (std::size_t k = 0; k + 1 < breakpoints.size(); ++k)
        require(breakpoints[k] < breakpoints[k + 1], ErrorKind::InvalidConfig,
                "scenario breakpoints must be strictly increasing");
    for (double r : rates)
        require(r > 0.0 && std::isfinite(r), ErrorKind::InvalidConfig, "scenario rates must be positive");
    require(group_multiplier > 0.0 && std::isfinite(group_multiplier), ErrorKind::InvalidConfig,
            "group multiplier must be positive");
    require(censor_bound > 0.0, ErrorKind::InvalidConfig, "censor bound must be positive");
}

double Scenario::rate_at(double x) const {
    if (!(x >= breakpoints.front() && x <= breakpoints.back()))
        fail(ErrorKind::InvalidInput, "covariate " + std::to_string(x) + " outside the breakpoint span");
    auto it = std::upper_bound(breakpoints.begin(), breakpoints.end(), x);
    auto seg = static_cast<std::size_t>(it - breakpoints.begin());
    // x == last breakpoint belongs to the last segment
    seg = std::min(seg, rates.size());
    return rates[seg - 1];
}

Scenario default_scenario(ScenarioKind kind) {
    Scenario s;
    s.kind = kind;
    return s;
}

namespace {

struct Draw {
    double x;
    bool group;
    double failure;
};

Draw draw_subject(const Scenario& s, Rng& rng) {
    Draw d{};
    d.x = rng.uniform(s.breakpoints.front(), s.breakpoints.back());
    d.group = s.kind == ScenarioKind::GroupEffect && rng.bernoulli(0.5);
    d.failure = rng.exponential(s.rate_at(d.x));
    if (d.group) d.failure *= s.group_multiplier;
    return d;
}

}  // namespace

SimReplicate simulate(const Scenario& scenario, std::size_t n, std::uint64_t seed) {
    scenario.validate();
    require(n > 0, ErrorKind::InvalidConfig, "simulate: n must be positive");
    Rng rng(seed);
    SimReplicate rep;
    rep.dataset.feature_names = {"x"};
    if (scenario.kind == ScenarioKind::GroupEffect) rep.dataset.feature_names.push_back("group");
    rep.dataset.records.reserve(n);
    rep.true_times.reserve(n);
    const bool censoring = std::isfinite(scenario.censor_bound);
    for (std::size_t i = 0; i < n; ++i) {
        const auto d = draw_subject(scenario, rng);
        const double c = censoring ? scenario.censor_bound * rng.uniform_open()
                                   : std::numeric_limits<double>::infinity();
        SurvivalRecord r;
        r.time = std::min(d.failure, c);
        r.event = d.failure <= c ? 1 : 0;
        r.covariates.push_back(d.x);
        if (scenario.kind == ScenarioKind::GroupEffect) r.covariates.push_back(d.group ? 1.0 : 0.0);
        rep.dataset.records.push_back(std::move(r));
        rep.true_times.push_back(d.failure);
    }
    return rep;
}

CensorCalibration calibrate_censor_bound(const Scenario& scenario, double target, std::uint64_t seed,
                                         std::size_t draws) {
    scenario.validate();
    require(target > 0.0 && target < 1.0, ErrorKind::InvalidConfig, "calibration target must lie in (0, 1)");
    require(draws > 0, ErrorKind::InvalidConfig, "calibration needs at least one draw");

    // Subject j is censored at bound c iff c * u_j < T_j, i.e. c < T_j / u_j.
    Rng rng(seed);
    std::vector<double> failures(draws);
    std::vector<double> ratios(draws);
    for (std::size_t j = 0; j < draws; ++j) {
        failures[j] = draw_subject(scenario, rng).failure;
        ratios[j] = failures[j] / rng.uniform_open();
    }
    std::sort(ratios.begin(), ratios.end());
    auto censored_share = [&](double c) {
        const auto above = ratios.end() - std::upper_bound(ratios.begin(), ratios.end(), c);
        return static_cast<double>(above) / static_cast<double>(draws);
    };

    std::nth_element(failures.begin(), failures.begin() + static_cast<std::ptrdiff_t>(draws / 2), failures.end());
    const double median = failures[draws / 2];
    double lo = 1e-2 * median;
    double hi = 1e3 * median;
    // censored_share is nonincreasing in c
    if (censored_share(lo) < target || censored_share(hi) > target)
        fail(ErrorKind::CalibrationFailure, "censoring proportion " + std::to_string(target) +
                                                " is not reachable within the search range");
    for (int it = 0; it < 200 && hi / lo - 1.0 > 1e-13; ++it) {
        const double mid = std::sqrt(lo * hi);
        if (censored_share(mid) > target)
            lo = mid;
        else
            hi = mid;
    }
    const double achieved = censored_share(hi);
    if (std::abs(achieved - target) > 0.005)
        fail(ErrorKind::CalibrationFailure, "calibration stalled at proportion " + std::to_string(achieved));
    return CensorCalibration{hi, achieved};
}

double true_quantile(const Scenario& scenario, double x, bool group, double tau) {
    scenario.validate();
    require(tau >= 0.0 && tau < 1.0, ErrorKind::InvalidConfig, "tau must lie in [0, 1)");
    double q = -std::log1p(-tau) / scenario.rate_at(x);
    if (group) q *= scenario.group_multiplier;
    return q;
}

}  // namespace dcqr
