#include "dcqr/linear.hpp"

#include <cmath>
#include <ostream>

#include "dcqr/error.hpp"
#include "dcqr/text.hpp"

namespace dcqr {

TrainConfig linear_train_config(const LossConfig& loss, const LinearFitConfig& opt, std::size_t n) {
    TrainConfig cfg;
    cfg.loss = loss;
    cfg.optimizer = opt.optimizer;
    cfg.learning_rate = opt.learning_rate;
    cfg.epochs = opt.epochs;
    cfg.batch_size = n;
    cfg.seed = derive_seed(opt.seed, 1);
    return cfg;
}

LinearModel fit_linear_cqr(const Dataset& data, const LossConfig& loss, const LinearFitConfig& opt) {
    data.validate();
    require(data.n_events() > 0, ErrorKind::DegenerateData, "fit_linear_cqr: dataset has no event observations");
    NetworkConfig net;
    net.input_dim = data.dim();
    auto model = init_network(net, opt.seed);
    auto fitted = train(std::move(model), data, linear_train_config(loss, opt, data.size()));
    return from_network(fitted.model);
}

double predict_linear_log(const LinearModel& model, std::span<const double> x) {
    require(model.coefficients.size() == x.size() + 1, ErrorKind::InvalidInput,
            "predict_linear: expected " + std::to_string(model.coefficients.size() - 1) + " covariates, got " +
                std::to_string(x.size()));
    double eta = model.coefficients[0];
    for (std::size_t j = 0; j < x.size(); ++j) eta += model.coefficients[j + 1] * x[j];
    return eta;
}

double predict_linear(const LinearModel& model, std::span<const double> x) {
    return std::exp(predict_linear_log(model, x));
}

MlpModel to_network(const LinearModel& model) {
    require(!model.coefficients.empty(), ErrorKind::InvalidInput, "linear model has no intercept");
    const auto p = static_cast<Eigen::Index>(model.coefficients.size() - 1);
    MlpModel net;
    net.config.input_dim = static_cast<std::size_t>(p);
    DenseLayer out{Eigen::MatrixXd(p, 1), Eigen::VectorXd::Constant(1, model.coefficients[0])};
    for (Eigen::Index j = 0; j < p; ++j) out.weights(j, 0) = model.coefficients[static_cast<std::size_t>(j) + 1];
    net.layers.push_back(std::move(out));
    return net;
}

LinearModel from_network(const MlpModel& model) {
    require(model.config.hidden_layers.empty() && model.layers.size() == 1, ErrorKind::InvalidInput,
            "from_network: model has hidden layers");
    const auto& out = model.output_layer();
    LinearModel lin;
    lin.coefficients.push_back(out.bias(0));
    for (Eigen::Index j = 0; j < out.weights.rows(); ++j) lin.coefficients.push_back(out.weights(j, 0));
    return lin;
}

void write_coefficients_csv(std::ostream& os, const LinearModel& model, const std::vector<std::string>& feature_names) {
    require(feature_names.size() + 1 == model.coefficients.size(), ErrorKind::InvalidInput,
            "write_coefficients_csv: name count does not match coefficients");
    os << "name,value\n";
    os << "(intercept)," << format_double(model.coefficients[0]) << '\n';
    for (std::size_t j = 0; j < feature_names.size(); ++j)
        os << feature_names[j] << ',' << format_double(model.coefficients[j + 1]) << '\n';
}

}  // namespace dcqr
