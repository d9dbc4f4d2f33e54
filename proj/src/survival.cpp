#include "dcqr/survival.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dcqr/error.hpp"

namespace dcqr {

std::size_t Dataset::n_events() const {
    return static_cast<std::size_t>(std::count_if(
        records.begin(), records.end(), [](const SurvivalRecord& r) { return r.event == 1; }));
}

void Dataset::validate() const {
    require(!records.empty(), ErrorKind::InvalidInput, "dataset is empty");
    const std::size_t p = feature_names.size();
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        if (!(r.time > 0.0) || !std::isfinite(r.time))
            fail(ErrorKind::InvalidInput, "record " + std::to_string(i) + ": time must be > 0");
        if (r.event != 0 && r.event != 1)
            fail(ErrorKind::InvalidInput, "record " + std::to_string(i) + ": event must be 0 or 1");
        if (r.covariates.size() != p)
            fail(ErrorKind::InvalidInput, "record " + std::to_string(i) + ": expected " +
                                              std::to_string(p) + " covariates");
    }
}

std::vector<double> Dataset::log_times() const {
    std::vector<double> out(records.size());
    std::transform(records.begin(), records.end(), out.begin(),
                   [](const SurvivalRecord& r) { return std::log(r.time); });
    return out;
}

Eigen::MatrixXd Dataset::covariate_matrix() const {
    const auto n = static_cast<Eigen::Index>(records.size());
    const auto p = static_cast<Eigen::Index>(dim());
    Eigen::MatrixXd x(n, p);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < p; ++j) x(i, j) = records[i].covariates[j];
    return x;
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
    Dataset out;
    out.feature_names = feature_names;
    out.records.reserve(rows.size());
    for (auto r : rows) out.records.push_back(records.at(r));
    return out;
}

double KmCurve::eval(double t) const {
    // index of the last jump <= t
    auto it = std::upper_bound(jump_times.begin(), jump_times.end(), t);
    if (it == jump_times.begin()) return 1.0;
    return survival_values[static_cast<std::size_t>(it - jump_times.begin()) - 1];
}

double KmCurve::eval_left(double t) const {
    // index of the last jump < t
    auto it = std::lower_bound(jump_times.begin(), jump_times.end(), t);
    if (it == jump_times.begin()) return 1.0;
    return survival_values[static_cast<std::size_t>(it - jump_times.begin()) - 1];
}

KmCurve km_censoring_estimate(const Dataset& data) {
    require(!data.records.empty(), ErrorKind::InvalidInput, "km: dataset is empty");
    const std::size_t n = data.records.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    // Time ascending; at ties failures (event 1) come first.
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto& ra = data.records[a];
        const auto& rb = data.records[b];
        if (ra.time != rb.time) return ra.time < rb.time;
        return ra.event > rb.event;
    });

    KmCurve curve;
    double surv = 1.0;
    std::size_t at_risk = n;
    std::size_t k = 0;
    while (k < n) {
        const double t = data.records[order[k]].time;
        std::size_t failures = 0;
        while (k < n && data.records[order[k]].time == t && data.records[order[k]].event == 1) {
            ++failures;
            ++k;
        }
        at_risk -= failures;
        std::size_t censored = 0;
        while (k < n && data.records[order[k]].time == t) {
            ++censored;
            ++k;
        }
        if (censored > 0) {
            surv *= 1.0 - static_cast<double>(censored) / static_cast<double>(at_risk);
            curve.jump_times.push_back(t);
            curve.survival_values.push_back(surv);
        }
        at_risk -= censored;
    }
    return curve;
}

double km_eval_left(const KmCurve& curve, double t) { return curve.eval_left(t); }

std::vector<double> ipcw_weights(const Dataset& data, const KmCurve& curve) {
    std::vector<double> w(data.records.size(), 0.0);
    for (std::size_t i = 0; i < w.size(); ++i) {
        const auto& r = data.records[i];
        if (r.event == 0) continue;
        const double g = curve.eval_left(r.time);
        if (!(g > 0.0))
            fail(ErrorKind::DegenerateWeight,
                 "ipcw: censoring survival is 0 just before event time of record " + std::to_string(i));
        w[i] = 1.0 / g;
    }
    return w;
}

}  // namespace dcqr
