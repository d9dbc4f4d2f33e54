#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace dcqr {

struct SurvivalRecord {
    double time = 0.0;  // observed Y = min(T, C), > 0
    int event = 0;      // 1 = failure observed, 0 = censored
    std::vector<double> covariates;
};

struct Dataset {
    std::vector<SurvivalRecord> records;
    std::vector<std::string> feature_names;

    std::size_t size() const { return records.size(); }
    std::size_t dim() const { return feature_names.size(); }
    std::size_t n_events() const;

    // Throws InvalidInput on empty data, time <= 0, bad event codes or
    // ragged covariates.
    void validate() const;

    std::vector<double> log_times() const;
    Eigen::MatrixXd covariate_matrix() const;  // n x p
    Dataset subset(std::span<const std::size_t> rows) const;
};

// Right-continuous step function: value(t) = survival_values[k] for
// jump_times[k] <= t < jump_times[k+1], and 1 before the first jump.
struct KmCurve {
    std::vector<double> jump_times;
    std::vector<double> survival_values;

    double eval(double t) const;
    double eval_left(double t) const;
};

// Product-limit estimate of the censoring survival function G, with
// censorings (event == 0) as the events of interest. At tied times,
// failures leave the risk set before the censorings are counted.
KmCurve km_censoring_estimate(const Dataset& data);

// G(t-), the left limit; 1 when t precedes the first jump.
double km_eval_left(const KmCurve& curve, double t);

// w_i = event_i / G(Y_i-).
std::vector<double> ipcw_weights(const Dataset& data, const KmCurve& curve);

inline std::vector<double> ipcw_weights(const Dataset& data) {
    return ipcw_weights(data, km_censoring_estimate(data));
}

}  // namespace dcqr
