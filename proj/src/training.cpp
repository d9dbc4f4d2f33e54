#include "dcqr/training.hpp"

#include <cmath>
#include <algorithm>
#include <numeric>
#include <ostream>
#include <string>

#include "dcqr/error.hpp"
#include "dcqr/text.hpp"

namespace dcqr {

OptimizerKind parse_optimizer(std::string_view name) {
    if (name == "sgd") return OptimizerKind::Sgd;
    if (name == "adam") return OptimizerKind::Adam;
    if (name == "adadelta") return OptimizerKind::Adadelta;
    if (name == "adamax") return OptimizerKind::Adamax;
    fail(ErrorKind::InvalidConfig, "unknown optimizer '" + std::string(name) + "'");
}

std::string_view to_string(OptimizerKind k) {
    switch (k) {
        case OptimizerKind::Sgd: return "sgd";
        case OptimizerKind::Adam: return "adam";
        case OptimizerKind::Adadelta: return "adadelta";
        case OptimizerKind::Adamax: return "adamax";
    }
    return "?";
}

double default_learning_rate(OptimizerKind k) {
    switch (k) {
        case OptimizerKind::Sgd: return 1e-2;
        case OptimizerKind::Adam:
        case OptimizerKind::Adamax: return 1e-3;
        case OptimizerKind::Adadelta: return 1.0;
    }
    return 1e-3;
}

OptimizerState init_optimizer_state(const ParamSet& params) {
    return OptimizerState{zeros_like(params), zeros_like(params), 0};
}

namespace {

using ArrayMap = Eigen::Map<Eigen::ArrayXd>;
using ConstArrayMap = Eigen::Map<const Eigen::ArrayXd>;

struct Block {
    ArrayMap p, s1, s2;
    ConstArrayMap g;
};

template <class F>
void for_each_block(ParamSet& params, OptimizerState& state, const ParamSet& grads, F&& fn) {
    for (std::size_t l = 0; l < params.size(); ++l) {
        auto& W = params[l].weights;
        auto& b = params[l].bias;
        fn(Block{ArrayMap(W.data(), W.size()), ArrayMap(state.first[l].weights.data(), W.size()),
                 ArrayMap(state.second[l].weights.data(), W.size()),
                 ConstArrayMap(grads[l].weights.data(), W.size())});
        fn(Block{ArrayMap(b.data(), b.size()), ArrayMap(state.first[l].bias.data(), b.size()),
                 ArrayMap(state.second[l].bias.data(), b.size()), ConstArrayMap(grads[l].bias.data(), b.size())});
    }
}

bool same_shape(const ParamSet& a, const ParamSet& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t l = 0; l < a.size(); ++l)
        if (a[l].weights.rows() != b[l].weights.rows() || a[l].weights.cols() != b[l].weights.cols() ||
            a[l].bias.size() != b[l].bias.size())
            return false;
    return true;
}

}  // namespace

void optimizer_step(OptimizerKind kind, const OptimizerParams& hp, OptimizerState& state, ParamSet& params,
                    const ParamSet& grads, double lr) {
    require(same_shape(params, grads) && same_shape(params, state.first) && same_shape(params, state.second),
            ErrorKind::InvalidInput, "optimizer_step: parameter, gradient and state shapes differ");
    for (std::size_t l = 0; l < grads.size(); ++l) {
        if (!grads[l].weights.allFinite())
            fail(ErrorKind::Numeric, "non-finite gradient in layer " + std::to_string(l) + " weights");
        if (!grads[l].bias.allFinite())
            fail(ErrorKind::Numeric, "non-finite gradient in layer " + std::to_string(l) + " bias");
    }

    ++state.step;
    const double t = static_cast<double>(state.step);
    switch (kind) {
        case OptimizerKind::Sgd:
            for_each_block(params, state, grads, [&](Block blk) { blk.p -= lr * blk.g; });
            break;
        case OptimizerKind::Adam: {
            const double c1 = 1.0 - std::pow(hp.beta1, t);
            const double c2 = 1.0 - std::pow(hp.beta2, t);
            for_each_block(params, state, grads, [&](Block blk) {
                blk.s1 = hp.beta1 * blk.s1 + (1.0 - hp.beta1) * blk.g;
                blk.s2 = hp.beta2 * blk.s2 + (1.0 - hp.beta2) * blk.g.square();
                blk.p -= lr * (blk.s1 / c1) / ((blk.s2 / c2).sqrt() + hp.epsilon);
            });
            break;
        }
        case OptimizerKind::Adamax: {
            const double c1 = 1.0 - std::pow(hp.beta1, t);
            for_each_block(params, state, grads, [&](Block blk) {
                blk.s1 = hp.beta1 * blk.s1 + (1.0 - hp.beta1) * blk.g;
                blk.s2 = (hp.beta2 * blk.s2).max(blk.g.abs());
                blk.p -= (lr / c1) * blk.s1 / (blk.s2 + hp.epsilon);
            });
            break;
        }
        case OptimizerKind::Adadelta:
            for_each_block(params, state, grads, [&](Block blk) {
                blk.s1 = hp.rho * blk.s1 + (1.0 - hp.rho) * blk.g.square();
                const Eigen::ArrayXd dx =
                    -((blk.s2 + hp.adadelta_epsilon).sqrt() / (blk.s1 + hp.adadelta_epsilon).sqrt()) * blk.g;
                blk.s2 = hp.rho * blk.s2 + (1.0 - hp.rho) * dx.square();
                blk.p += lr * dx;
            });
            break;
    }
}

void TrainConfig::validate(std::size_t n) const {
    loss.validate();
    require(epochs >= 1, ErrorKind::InvalidConfig, "epochs must be >= 1");
    require(batch_size >= 1, ErrorKind::InvalidConfig, "batch_size must be >= 1");
    require(batch_size <= n, ErrorKind::InvalidConfig,
            "batch_size " + std::to_string(batch_size) + " exceeds sample size " + std::to_string(n));
    require(std::isfinite(lr()) && lr() >= 0.0, ErrorKind::InvalidConfig, "learning rate must be >= 0");
}

void write_train_log_csv(std::ostream& os, const TrainLog& log) {
    os << "epoch,mean_loss\n";
    for (std::size_t e = 0; e < log.epoch_loss.size(); ++e)
        os << (e + 1) << ',' << format_double(log.epoch_loss[e]) << '\n';
}

TrainResult train(MlpModel model, const Dataset& data, const TrainConfig& cfg) {
    data.validate();
    require(data.n_events() > 0, ErrorKind::DegenerateData, "train: dataset has no event observations");
    const auto weights = ipcw_weights(data);
    return train_weighted(std::move(model), data, weights, cfg);
}

TrainResult train_weighted(MlpModel model, const Dataset& data, std::span<const double> weights,
                           const TrainConfig& cfg) {
    data.validate();
    const std::size_t n = data.size();
    cfg.validate(n);
    require(weights.size() == n, ErrorKind::InvalidInput, "train: weight vector length mismatch");
    require(std::any_of(weights.begin(), weights.end(), [](double w) { return w > 0.0; }),
            ErrorKind::DegenerateData, "train: all observation weights are zero");
    require(data.dim() == model.config.input_dim, ErrorKind::InvalidInput,
            "train: data has " + std::to_string(data.dim()) + " covariates, model expects " +
                std::to_string(model.config.input_dim));

    const Eigen::MatrixXd x = data.covariate_matrix();
    const auto log_y = data.log_times();
    const double lr = cfg.lr();
    Rng rng(cfg.seed);
    auto state = init_optimizer_state(model.layers);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});

    TrainResult result;
    result.log.epoch_loss.reserve(cfg.epochs);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order.begin(), order.end());
        double epoch_total = 0.0;
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t m = std::min(cfg.batch_size, n - start);
            Eigen::MatrixXd xb(static_cast<Eigen::Index>(m), x.cols());
            for (std::size_t i = 0; i < m; ++i) xb.row(static_cast<Eigen::Index>(i)) = x.row(order[start + i]);

            auto fwd = forward(model, xb, ForwardMode::Train, rng);
            Eigen::VectorXd dpred(static_cast<Eigen::Index>(m));
            double batch_total = 0.0;
            const double inv_m = 1.0 / static_cast<double>(m);
            for (std::size_t i = 0; i < m; ++i) {
                const std::size_t r = order[start + i];
                const double w = weights[r];
                const auto ii = static_cast<Eigen::Index>(i);
                if (w == 0.0) {
                    dpred(ii) = 0.0;
                    continue;
                }
                const double u = log_y[r] - fwd.log_preds(ii);
                batch_total += w * residual_loss(u, cfg.loss);
                // d/dpred of rho(log y - pred)
                dpred(ii) = -w * residual_loss_grad(u, cfg.loss) * inv_m;
            }
            epoch_total += batch_total;
            auto grads = backward(model, fwd.cache, dpred);
            optimizer_step(cfg.optimizer, cfg.optimizer_params, state, model.layers, grads, lr);
        }
        const double mean_loss = epoch_total / static_cast<double>(n);
        if (!std::isfinite(mean_loss))
            fail(ErrorKind::Numeric, "train: non-finite loss at epoch " + std::to_string(epoch + 1));
        result.log.epoch_loss.push_back(mean_loss);
    }
    for (std::size_t l = 0; l < model.layers.size(); ++l)
        if (!model.layers[l].weights.allFinite() || !model.layers[l].bias.allFinite())
            fail(ErrorKind::Numeric, "train: non-finite parameters in layer " + std::to_string(l));
    result.model = std::move(model);
    return result;
}

}  // namespace dcqr
