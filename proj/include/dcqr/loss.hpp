#pragma once

#include <span>
#include <vector>

namespace dcqr {

inline constexpr double kDefaultHuberXi = 0.125;

struct LossConfig {
    double tau = 0.5;
    double xi = kDefaultHuberXi;  // half-width of the quadratic zone, log-time units
    bool use_huber = true;

    void validate() const;
};

// rho_tau(u) = u * (tau - 1{u <= 0})
double check(double u, double tau);

// Huber-smoothed check: tau*h(u) for u >= 0, (1-tau)*h(u) for u < 0, with
// h(u) = u^2/(2 xi) on |u| <= xi and |u| - xi/2 beyond. h is C1 and convex,
// and |huber_check - check| <= max(tau, 1-tau) * xi / 2.
double huber_check(double u, double tau, double xi);
double huber_check_grad(double u, double tau, double xi);

// Subgradient of check(); takes tau - 1 at u == 0, matching the indicator.
double check_grad(double u, double tau);

// Dispatches on cfg.use_huber.
double residual_loss(double u, const LossConfig& cfg);
double residual_loss_grad(double u, const LossConfig& cfg);

// sum_i w_i * rho(log_times[i] - log_preds[i])
double weighted_loss(std::span<const double> log_times, std::span<const double> log_preds,
                     std::span<const double> weights, const LossConfig& cfg);

}  // namespace dcqr
