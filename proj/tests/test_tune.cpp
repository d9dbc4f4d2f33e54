#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <vector>

#include "dcqr/error.hpp"
#include "dcqr/random.hpp"
#include "dcqr/simulate.hpp"
#include "dcqr/tune.hpp"

using namespace dcqr;

namespace {

HyperGrid tiny_grid() {
    HyperGrid g;
    g.layers = {1};
    g.nodes = {6};
    g.activation = {Activation::Tanh};
    g.dropout = {0.0};
    g.epochs = {40};
    g.batch_size = {32};
    g.learning_rate = {0.01};
    return g;
}

Dataset sim_data(std::size_t n, std::uint64_t seed) {
    auto s = default_scenario(ScenarioKind::NoGroupEffect);
    s.censor_bound = 20.0;
    return simulate(s, n, seed).dataset;
}

// Inverse empirical CDF by counting: the smallest draw v with #{d <= v} >= q B.
double ecdf_inverse(const std::vector<double>& draws, double q) {
    const double need = q * static_cast<double>(draws.size()) - 1e-9;
    double best = INFINITY;
    for (double v : draws) {
        const auto c = std::count_if(draws.begin(), draws.end(), [&](double d) { return d <= v; });
        if (static_cast<double>(c) >= need) best = std::min(best, v);
    }
    return best;
}

}  // namespace

TEST_CASE("kfold examples") {
    const auto f = kfold_split(10, 5, 1);
    REQUIRE(f.size() == 5);
    std::set<std::size_t> all;
    for (const auto& fold : f) {
        CHECK(fold.size() == 2);
        all.insert(fold.begin(), fold.end());
    }
    CHECK(all.size() == 10);
    CHECK(*all.rbegin() == 9);

    std::vector<std::size_t> sizes;
    for (const auto& fold : kfold_split(11, 5, 1)) sizes.push_back(fold.size());
    CHECK(sizes == std::vector<std::size_t>{3, 2, 2, 2, 2});
    CHECK(kfold_split(37, 4, 9) == kfold_split(37, 4, 9));
    CHECK(kfold_split(37, 4, 9) != kfold_split(37, 4, 10));
    CHECK_THROWS_AS(kfold_split(3, 4, 0), Error);
    CHECK_THROWS_AS(kfold_split(3, 1, 0), Error);
}

TEST_CASE("kfold partitions exactly") {
    Rng rng(3);
    for (int rep = 0; rep < 100; ++rep) {
        const auto k = 2 + rng.index(6);
        const auto n = k + rng.index(50);
        std::vector<int> seen(n, 0);
        for (const auto& fold : kfold_split(n, k, rng.index(1000))) {
            CHECK((fold.size() == n / k || fold.size() == (n + k - 1) / k));
            for (auto i : fold) ++seen[i];
        }
        CHECK(std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; }));
    }
}

TEST_CASE("singleton grid") {
    const auto data = sim_data(120, 1);
    const auto res = grid_search(data, tiny_grid(), LossConfig{}, 3, 5);
    REQUIRE(res.rows.size() == 1);
    CHECK(res.best == 0);
    CHECK(res.rows[0].evaluable);
    CHECK(res.rows[0].n_folds_used == 3);
    CHECK(res.rows[0].mean_ql > 0.0);
}

TEST_CASE("duplicate candidates score identically") {
    const auto data = sim_data(120, 2);
    auto g = tiny_grid();
    g.nodes = {6, 6};
    const auto res = grid_search(data, g, LossConfig{}, 3, 5);
    REQUIRE(res.rows.size() == 2);
    CHECK(res.rows[0].mean_ql == res.rows[1].mean_ql);
    CHECK(res.best == 0);
}

TEST_CASE("a model that cannot learn loses") {
    const auto data = sim_data(200, 3);
    auto g = tiny_grid();
    g.epochs = {150};
    g.learning_rate = {0.0, 0.02};
    const auto res = grid_search(data, g, LossConfig{}, 4, 7);
    REQUIRE(res.rows.size() == 2);
    CHECK(res.best == 1);
    CHECK(res.rows[1].mean_ql < res.rows[0].mean_ql);
}

TEST_CASE("grid search does not depend on the worker count") {
    const auto data = sim_data(90, 4);
    auto g = tiny_grid();
    g.activation = {Activation::Relu, Activation::Selu};
    g.dropout = {0.0, 0.2};
    const auto a = grid_search(data, g, LossConfig{}, 3, 11, 1);
    const auto b = grid_search(data, g, LossConfig{}, 3, 11, 4);
    std::ostringstream sa, sb;
    write_cv_csv(sa, a);
    write_cv_csv(sb, b);
    CHECK(sa.str() == sb.str());
    CHECK(sa.str().rfind("layers,nodes,activation,optimizer,dropout,epochs,batch,lr,mean_ql,sd_ql,n_folds_used,best\n", 0) == 0);
}

TEST_CASE("folds without events are skipped") {
    Dataset d;
    d.feature_names = {"x"};
    for (int i = 0; i < 12; ++i) d.records.push_back({1.0 + i, i == 0 ? 1 : 0, {0.1 * i}});
    // the fold holding the single event leaves the training side without
    // events, and every other held-out fold has none, so nothing is evaluable
    CHECK_THROWS_AS(grid_search(d, tiny_grid(), LossConfig{}, 3, 1), Error);
}

TEST_CASE("grid file parsing") {
    std::istringstream is(
        "# comment\n"
        "layers=1,2\n"
        "nodes = 100, 300\n"
        "\n"
        "activation=relu,selu\n"
        "optimizer=adam\n"
        "dropout=0.1,0.4\n"
        "epochs=200\n"
        "batch=32,64\n"
        "lr=default,0.01\n");
    const auto g = parse_grid(is);
    CHECK(g.layers == std::vector<std::size_t>{1, 2});
    CHECK(g.nodes == std::vector<std::size_t>{100, 300});
    CHECK(g.activation == std::vector<Activation>{Activation::Relu, Activation::Selu});
    CHECK(g.learning_rate.size() == 2);
    CHECK_FALSE(g.learning_rate[0]);
    CHECK(g.candidates().size() == 2 * 2 * 2 * 2 * 2 * 2);
    CHECK(g.candidates()[1].learning_rate == 0.01);

    std::istringstream bad1("widths=3\n"), bad2("layers=1\nlayers=2\n"), bad3("dropout=1.5\n"), bad4("nodes=\n");
    CHECK_THROWS_AS(parse_grid(bad1), Error);
    CHECK_THROWS_AS(parse_grid(bad2), Error);
    CHECK_THROWS_AS(parse_grid(bad3), Error);
    CHECK_THROWS_AS(parse_grid(bad4), Error);
}

TEST_CASE("dropout-free intervals collapse to the point prediction") {
    NetworkConfig nc{2, {5, 5}, Activation::Relu, 0.0};
    const auto model = init_network(nc, 3);
    const std::vector<double> x{0.4, -1.2};
    const auto pi = mc_dropout_predict(model, x, 50, 0.95, 9);
    Eigen::MatrixXd row(1, 2);
    row << 0.4, -1.2;
    const double infer = std::exp(predict_log(model, row)(0));
    CHECK(pi.lower == pi.upper);
    CHECK(pi.point == infer);
    CHECK(pi.lower == infer);
    CHECK(pi.n_draws == 50);
}

TEST_CASE("two draws give min and max") {
    NetworkConfig nc{1, {16}, Activation::Tanh, 0.5};
    const auto model = init_network(nc, 4);
    const std::vector<double> x{0.7};
    const auto pi = mc_dropout_predict(model, x, 2, 0.95, 21);
    Eigen::MatrixXd row(1, 1);
    row << 0.7;
    std::vector<double> d;
    for (std::size_t b = 0; b < 2; ++b) {
        Rng rng(derive_seed(21, b));
        d.push_back(std::exp(forward(model, row, ForwardMode::McDropout, rng).log_preds(0)));
    }
    CHECK(pi.lower == std::min(d[0], d[1]));
    CHECK(pi.upper == std::max(d[0], d[1]));
    CHECK_THROWS_AS(mc_dropout_predict(model, x, 1, 0.95, 21), Error);
}

TEST_CASE("interval bounds are order statistics of the draws") {
    NetworkConfig nc{2, {8, 8}, Activation::Selu, 0.3};
    const auto model = init_network(nc, 5);
    Rng xr(6);
    Eigen::MatrixXd xs(10, 2);
    for (Eigen::Index i = 0; i < xs.size(); ++i) xs.data()[i] = xr.uniform(-2, 2);
    for (std::size_t B : {7, 40, 200}) {
        for (double level : {0.5, 0.9, 0.95}) {
            const auto out = mc_dropout_predict_batch(model, xs, B, level, 31, 3);
            // draw b runs the whole batch through one mask stream
            std::vector<Eigen::VectorXd> passes;
            for (std::size_t b = 0; b < B; ++b) {
                Rng rng(derive_seed(31, b));
                passes.push_back(forward(model, xs, ForwardMode::McDropout, rng).log_preds);
            }
            for (Eigen::Index i = 0; i < xs.rows(); ++i) {
                std::vector<double> draws;
                double sum = 0.0;
                for (std::size_t b = 0; b < B; ++b) {
                    const double v = passes[b](i);
                    draws.push_back(std::exp(v));
                    sum += v;
                }
                const auto& pi = out[static_cast<std::size_t>(i)];
                CHECK(pi.lower == ecdf_inverse(draws, (1 - level) / 2));
                CHECK(pi.upper == ecdf_inverse(draws, 1 - (1 - level) / 2));
                CHECK(pi.lower <= pi.upper);
                CHECK(pi.point == doctest::Approx(std::exp(sum / B)).epsilon(1e-12));
            }
        }
    }
    CHECK(order_statistic_rank(200, 0.025) == 5);
    CHECK(order_statistic_rank(200, 0.975) == 195);
    CHECK(order_statistic_rank(2, 0.025) == 1);
    CHECK(order_statistic_rank(2, 0.975) == 2);
}
