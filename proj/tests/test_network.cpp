#include <doctest.h>

#include <cmath>
#include <sstream>

#include "dcqr/error.hpp"
#include "dcqr/network.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

using namespace dcqr;

namespace {

const Activation kAll[] = {Activation::Relu, Activation::Sigmoid, Activation::HardSigmoid, Activation::Tanh,
                           Activation::Selu};

bool same_params(const ParamSet& a, const ParamSet& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t l = 0; l < a.size(); ++l)
        if (a[l].weights != b[l].weights || a[l].bias != b[l].bias) return false;
    return true;
}

gradcheck::Problem random_problem(Rng& rng, std::size_t m, std::size_t p) {
    gradcheck::Problem prob;
    prob.x = Eigen::MatrixXd(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(p));
    for (Eigen::Index i = 0; i < prob.x.size(); ++i) prob.x.data()[i] = rng.uniform(-2.0, 2.0);
    for (std::size_t i = 0; i < m; ++i) {
        prob.log_y.push_back(rng.uniform(-1.5, 1.5));
        prob.weights.push_back(rng.bernoulli(0.7) ? rng.uniform(0.5, 2.0) : 0.0);
    }
    prob.loss = LossConfig{rng.uniform(0.1, 0.9), 0.125, true};
    return prob;
}

}  // namespace

TEST_CASE("activation values") {
    CHECK(activation_eval(Activation::Relu, -1.0) == 0.0);
    CHECK(activation_eval(Activation::Relu, 3.0) == 3.0);
    CHECK(activation_eval(Activation::Sigmoid, 0.0) == 0.5);
    CHECK(activation_eval(Activation::HardSigmoid, 10.0) == 1.0);
    CHECK(activation_eval(Activation::HardSigmoid, -10.0) == 0.0);
    CHECK(activation_eval(Activation::HardSigmoid, 0.0) == 0.5);
    CHECK(activation_eval(Activation::Selu, 1.0) == doctest::Approx(1.05070098));
    CHECK(activation_eval(Activation::Selu, -1.0) == doctest::Approx(1.05070098 * 1.67326324 * (std::exp(-1.0) - 1)));
    CHECK(activation_deriv(Activation::Relu, 0.0) == 0.0);
    CHECK_THROWS_AS(parse_activation("softplus"), Error);
}

TEST_CASE("activation derivatives match finite differences away from kinks") {
    Rng rng(2);
    for (auto kind : kAll) {
        for (int i = 0; i < 500; ++i) {
            const double u = rng.uniform(-6.0, 6.0);
            if (std::abs(u) < 1e-3 || std::abs(std::abs(u) - 2.5) < 1e-3) continue;
            const double fd = oracle::central_diff([&](double v) { return activation_eval(kind, v); }, u, 1e-6);
            const double g = activation_deriv(kind, u);
            CHECK(std::abs(g - fd) <= 1e-6 * std::max(std::abs(g), 1e-3));
        }
    }
}

TEST_CASE("init: shapes, zero biases, determinism") {
    NetworkConfig cfg;
    cfg.input_dim = 2;
    cfg.hidden_layers = {300, 300};
    const auto a = init_network(cfg, 42);
    const auto b = init_network(cfg, 42);
    REQUIRE(a.layers.size() == 3);
    CHECK(a.layers[0].weights.rows() == 2);
    CHECK(a.layers[0].weights.cols() == 300);
    CHECK(a.layers[1].weights.rows() == 300);
    CHECK(a.layers[1].weights.cols() == 300);
    CHECK(a.layers[2].weights.rows() == 300);
    CHECK(a.layers[2].weights.cols() == 1);
    for (const auto& l : a.layers) CHECK(l.bias.isZero(0.0));
    CHECK(same_params(a.layers, b.layers));
    CHECK_FALSE(same_params(a.layers, init_network(cfg, 43).layers));
    const double limit = std::sqrt(6.0 / 302.0);
    CHECK(a.layers[0].weights.cwiseAbs().maxCoeff() <= limit);
    CHECK(cfg.parameter_count() == 3 * 300 + 301 * 300 + 301);
}

TEST_CASE("init: invalid configs") {
    NetworkConfig cfg;
    cfg.hidden_layers = {0};
    CHECK_THROWS_AS(init_network(cfg, 1), Error);
    cfg.hidden_layers = {3};
    cfg.dropout_rate = 1.0;
    CHECK_THROWS_AS(init_network(cfg, 1), Error);
}

TEST_CASE("forward: linear output with no hidden layers") {
    NetworkConfig cfg;
    cfg.input_dim = 2;
    auto model = init_network(cfg, 1);
    model.layers[0].weights << 1.0, 1.0;
    model.layers[0].bias << 0.0;
    Eigen::MatrixXd x(2, 2);
    x << 0.3, 0.4, -1.0, 2.5;
    const auto out = predict_log(model, x);
    CHECK(out(0) == doctest::Approx(0.7));
    CHECK(out(1) == doctest::Approx(1.5));
}

TEST_CASE("forward: dead relu network returns the output bias") {
    NetworkConfig cfg;
    cfg.input_dim = 3;
    cfg.hidden_layers = {4, 5};
    auto model = init_network(cfg, 9);
    for (auto& l : model.layers) {
        l.weights.setZero();
        l.bias.setZero();
    }
    model.layers.back().bias(0) = 0.42;
    Eigen::MatrixXd x = Eigen::MatrixXd::Random(6, 3);
    const auto out = predict_log(model, x);
    for (Eigen::Index i = 0; i < out.size(); ++i) CHECK(out(i) == 0.42);
}

TEST_CASE("forward: dropout 0 makes train and infer identical; infer ignores rng") {
    NetworkConfig cfg;
    cfg.input_dim = 2;
    cfg.hidden_layers = {8, 8};
    cfg.activation = Activation::Tanh;
    const auto model = init_network(cfg, 5);
    Eigen::MatrixXd x = Eigen::MatrixXd::Random(10, 2);
    Rng r1(1), r2(2);
    const auto train_out = forward(model, x, ForwardMode::Train, r1).log_preds;
    const auto infer_out = forward(model, x, ForwardMode::Infer, r2).log_preds;
    CHECK(train_out == infer_out);

    auto drop = model;
    drop.config.dropout_rate = 0.5;
    Rng r3(3), r4(4);
    CHECK(forward(drop, x, ForwardMode::Infer, r3).log_preds == forward(drop, x, ForwardMode::Infer, r4).log_preds);
}

TEST_CASE("forward: dimension mismatch") {
    NetworkConfig cfg;
    cfg.input_dim = 2;
    cfg.hidden_layers = {3};
    const auto model = init_network(cfg, 5);
    Rng rng(0);
    CHECK_THROWS_AS(forward(model, Eigen::MatrixXd::Zero(4, 3), ForwardMode::Infer, rng), Error);
}

TEST_CASE("inverted dropout preserves the expected node output") {
    // relu on a positive input is linear, so the mean masked output should
    // match the unmasked one.
    NetworkConfig cfg;
    cfg.input_dim = 1;
    cfg.hidden_layers = {1};
    cfg.activation = Activation::Relu;
    cfg.dropout_rate = 0.3;
    auto model = init_network(cfg, 1);
    model.layers[0].weights(0, 0) = 1.0;
    model.layers[0].bias(0) = 0.0;
    model.layers[1].weights(0, 0) = 1.0;
    model.layers[1].bias(0) = 0.0;
    Eigen::MatrixXd x = Eigen::MatrixXd::Constant(20000, 1, 2.0);
    Rng rng(77);
    const auto out = forward(model, x, ForwardMode::Train, rng).log_preds;
    CHECK(out.mean() == doctest::Approx(2.0).epsilon(0.02));
}

TEST_CASE("backward: zero upstream gives zero gradients") {
    NetworkConfig cfg;
    cfg.input_dim = 2;
    cfg.hidden_layers = {4, 3};
    const auto model = init_network(cfg, 3);
    Rng rng(1);
    auto fwd = forward(model, Eigen::MatrixXd::Random(5, 2), ForwardMode::Train, rng);
    for (const auto& g : backward(model, fwd.cache, Eigen::VectorXd::Zero(5))) {
        CHECK(g.weights.isZero(0.0));
        CHECK(g.bias.isZero(0.0));
    }
}

TEST_CASE("backward: stale cache is rejected") {
    NetworkConfig cfg;
    cfg.input_dim = 2;
    cfg.hidden_layers = {4};
    const auto model = init_network(cfg, 3);
    Rng rng(1);
    auto fwd = forward(model, Eigen::MatrixXd::Random(5, 2), ForwardMode::Infer, rng);
    CHECK_THROWS_AS(backward(model, fwd.cache, Eigen::VectorXd::Zero(4)), Error);
    auto wider = cfg;
    wider.hidden_layers = {6};
    CHECK_THROWS_AS(backward(init_network(wider, 1), fwd.cache, Eigen::VectorXd::Zero(5)), Error);
}

TEST_CASE("backward: masked node gets no gradient on its outgoing weights") {
    NetworkConfig cfg;
    cfg.input_dim = 2;
    cfg.hidden_layers = {4};
    cfg.dropout_rate = 0.5;
    const auto model = init_network(cfg, 3);
    Rng rng(1);
    auto fwd = forward(model, Eigen::MatrixXd::Random(1, 2), ForwardMode::Train, rng);
    // fix the mask: node 2 dropped, others kept
    auto& cache = fwd.cache;
    cache.masks[0].setConstant(2.0);
    cache.masks[0](0, 2) = 0.0;
    Eigen::MatrixXd h = (cache.pre[0].array().max(0.0)).matrix();
    cache.post[0] = (h.array() * cache.masks[0].array()).matrix();
    const auto g = backward(model, cache, Eigen::VectorXd::Constant(1, 0.7));
    CHECK(g[1].weights(2, 0) == 0.0);    // output weight fed by the dropped node
    CHECK(g[0].weights.col(2).isZero(0.0));  // its incoming weights see no signal either
    CHECK(g[0].bias(2) == 0.0);
}

TEST_CASE("backward: single-hidden-layer relu gradients match finite differences") {
    Rng rng(21);
    int done = 0;
    while (done < 20) {
        NetworkConfig cfg;
        cfg.input_dim = 1;
        cfg.hidden_layers = {5};
        const auto model = init_network(cfg, rng.index(1u << 30));
        auto prob = random_problem(rng, 1, 1);
        prob.weights[0] = 1.0;
        if (!gradcheck::away_from_kinks(model, prob, 1e-4)) continue;
        CHECK(gradcheck::compare(model, prob).max_rel_error < 1e-5);
        ++done;
    }
}

TEST_CASE("backward: random deep networks match finite differences for every activation") {
    Rng rng(99);
    for (auto kind : kAll) {
        int done = 0;
        while (done < 10) {
            NetworkConfig cfg;
            cfg.input_dim = 1 + rng.index(3);
            const auto depth = 1 + rng.index(3);
            for (std::uint64_t l = 0; l < depth; ++l) cfg.hidden_layers.push_back(1 + rng.index(8));
            cfg.activation = kind;
            const auto model = init_network(cfg, rng.index(1u << 30));
            const auto prob = random_problem(rng, 6, cfg.input_dim);
            if (!gradcheck::away_from_kinks(model, prob, 1e-4)) continue;
            const auto res = gradcheck::compare(model, prob);
            CHECK_MESSAGE(res.max_rel_error < 1e-5, to_string(kind));
            ++done;
        }
    }
}

TEST_CASE("model file round trip reproduces predictions bit-exactly") {
    NetworkConfig cfg;
    cfg.input_dim = 2;
    cfg.hidden_layers = {7, 3};
    cfg.activation = Activation::Selu;
    cfg.dropout_rate = 0.25;
    ModelFile f;
    f.model = init_network(cfg, 8);
    f.model.layers[1].bias.setConstant(0.1 / 3.0);
    f.feature_names = {"x", "group"};
    f.tau = 0.3;
    f.xi = 0.125;
    std::stringstream ss;
    save_model(ss, f);
    const auto g = load_model(ss);
    CHECK(g.kind == "deep");
    CHECK(g.tau == 0.3);
    CHECK(g.feature_names == f.feature_names);
    CHECK(g.model.config.dropout_rate == 0.25);
    CHECK(g.model.config.activation == Activation::Selu);
    CHECK(same_params(g.model.layers, f.model.layers));
    Eigen::MatrixXd x = Eigen::MatrixXd::Random(9, 2);
    CHECK(predict_log(g.model, x) == predict_log(f.model, x));
}

TEST_CASE("model file: malformed input") {
    std::istringstream bad("dcqr-model 1\nkind deep\ntau oops\n");
    CHECK_THROWS_AS(load_model(bad), Error);
    std::istringstream truncated("dcqr-model 1\nkind deep\ntau 0.5\nxi 0.1\nhuber 1\ninput_dim 1\nhidden\n"
                                 "activation relu\ndropout 0\nfeatures x\nlayer 0 1 1\n");
    CHECK_THROWS_AS(load_model(truncated), Error);
}
