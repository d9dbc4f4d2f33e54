#pragma once

// Finite-difference check of network gradients under the weighted loss.

#include <cmath>
#include <vector>

#include "dcqr/loss.hpp"
#include "dcqr/network.hpp"

namespace gradcheck {

struct Problem {
    Eigen::MatrixXd x;
    std::vector<double> log_y;
    std::vector<double> weights;
    dcqr::LossConfig loss;
};

// Batch-mean weighted loss, evaluated in infer mode.
inline double batch_loss(const dcqr::MlpModel& model, const Problem& p) {
    const Eigen::VectorXd pred = dcqr::predict_log(model, p.x);
    double s = 0.0;
    for (std::size_t i = 0; i < p.log_y.size(); ++i)
        s += p.weights[i] * dcqr::residual_loss(p.log_y[i] - pred(static_cast<Eigen::Index>(i)), p.loss);
    return s / static_cast<double>(p.log_y.size());
}

inline dcqr::ParamSet analytic(const dcqr::MlpModel& model, const Problem& p) {
    dcqr::Rng rng(0);
    auto fwd = dcqr::forward(model, p.x, dcqr::ForwardMode::Infer, rng);
    const auto m = static_cast<double>(p.log_y.size());
    Eigen::VectorXd d(fwd.log_preds.size());
    for (Eigen::Index i = 0; i < d.size(); ++i) {
        const auto k = static_cast<std::size_t>(i);
        d(i) = -p.weights[k] * dcqr::residual_loss_grad(p.log_y[k] - fwd.log_preds(i), p.loss) / m;
    }
    return dcqr::backward(model, fwd.cache, d);
}

// True when every pre-activation and residual is at least `margin` away
// from a point where the loss is not twice differentiable.
inline bool away_from_kinks(const dcqr::MlpModel& model, const Problem& p, double margin) {
    dcqr::Rng rng(0);
    auto fwd = dcqr::forward(model, p.x, dcqr::ForwardMode::Infer, rng);
    const auto act = model.config.activation;
    for (const auto& z : fwd.cache.pre)
        for (Eigen::Index i = 0; i < z.size(); ++i) {
            const double v = z.data()[i];
            if ((act == dcqr::Activation::Relu || act == dcqr::Activation::Selu) && std::abs(v) < margin) return false;
            if (act == dcqr::Activation::HardSigmoid && std::abs(std::abs(v) - 2.5) < margin) return false;
        }
    for (std::size_t i = 0; i < p.log_y.size(); ++i) {
        if (p.weights[i] == 0.0) continue;
        const double u = p.log_y[i] - fwd.log_preds(static_cast<Eigen::Index>(i));
        if (std::abs(u) < margin || (p.loss.use_huber && std::abs(std::abs(u) - p.loss.xi) < margin)) return false;
    }
    return true;
}

struct Result {
    double max_rel_error = 0.0;
    std::size_t n_params = 0;
};

// Relative error |a - f| / max(|a|, |f|, floor) over every parameter.
inline Result compare(dcqr::MlpModel model, const Problem& p, double step = 1e-6, double floor = 1e-4) {
    const auto grads = analytic(model, p);
    Result r;
    auto probe = [&](double& param, double analytic_value) {
        const double saved = param;
        param = saved + step;
        const double up = batch_loss(model, p);
        param = saved - step;
        const double down = batch_loss(model, p);
        param = saved;
        const double fd = (up - down) / (2.0 * step);
        const double denom = std::max({std::abs(analytic_value), std::abs(fd), floor});
        r.max_rel_error = std::max(r.max_rel_error, std::abs(analytic_value - fd) / denom);
        ++r.n_params;
    };
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        auto& layer = model.layers[l];
        for (Eigen::Index i = 0; i < layer.weights.size(); ++i) probe(layer.weights.data()[i], grads[l].weights.data()[i]);
        for (Eigen::Index i = 0; i < layer.bias.size(); ++i) probe(layer.bias.data()[i], grads[l].bias.data()[i]);
    }
    return r;
}

}  // namespace gradcheck
