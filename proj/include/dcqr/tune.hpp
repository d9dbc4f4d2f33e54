#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dcqr/loss.hpp"
#include "dcqr/network.hpp"
#include "dcqr/survival.hpp"
#include "dcqr/training.hpp"

namespace dcqr {

// ---- cross-validated grid search --------------------------------------------

struct Candidate {
    std::size_t layers = 2;
    std::size_t nodes = 300;
    Activation activation = Activation::Relu;
    OptimizerKind optimizer = OptimizerKind::Adam;
    double dropout = 0.1;
    std::size_t epochs = 500;
    std::size_t batch_size = 64;
    std::optional<double> learning_rate;  // optimizer default when unset

    NetworkConfig network(std::size_t input_dim) const;
    TrainConfig training(const LossConfig& loss, std::uint64_t seed) const;
    // Stable key used to derive the candidate's seeds.
    std::string key() const;
};

struct HyperGrid {
    std::vector<std::size_t> layers{2};
    std::vector<std::size_t> nodes{300};
    std::vector<Activation> activation{Activation::Relu};
    std::vector<OptimizerKind> optimizer{OptimizerKind::Adam};
    std::vector<double> dropout{0.1};
    std::vector<std::size_t> epochs{500};
    std::vector<std::size_t> batch_size{64};
    std::vector<std::optional<double>> learning_rate{std::nullopt};

    void validate() const;
    // Cartesian product, the last key (learning_rate) varying fastest.
    std::vector<Candidate> candidates() const;
};

// One `key=value1,value2,...` line per hyperparameter; keys are layers,
// nodes, activation, optimizer, dropout, epochs, batch, lr. Blank lines and
// '#' comments are skipped. Keys not given keep their single default.
HyperGrid parse_grid(std::istream& is);
HyperGrid read_grid(const std::string& path);

// Seeded permutation of 0..n-1 cut into k folds; the first n % k folds
// get one extra index.
std::vector<std::vector<std::size_t>> kfold_split(std::size_t n, std::size_t k, std::uint64_t seed);

struct CvRow {
    Candidate candidate;
    double mean_ql = 0.0;
    double sd_ql = 0.0;
    std::size_t n_folds_used = 0;
    bool evaluable = false;
    std::vector<std::string> warnings;
};

struct CvResult {
    std::vector<CvRow> rows;  // grid order
    std::size_t best = 0;
};

// Each candidate x fold cell trains on the other k-1 folds and scores
// quantile_loss on the held-out fold. jobs > 1 runs cells on worker threads;
// the result does not depend on jobs.
CvResult grid_search(const Dataset& data, const HyperGrid& grid, const LossConfig& loss, std::size_t k,
                     std::uint64_t seed, std::size_t jobs = 1);

void write_cv_csv(std::ostream& os, const CvResult& result);

// ---- MC dropout prediction intervals -----------------------------------------

inline constexpr std::size_t kDefaultDropoutDraws = 200;

struct PredictionInterval {
    double point = 0.0;  // exp of the mean log draw
    double lower = 0.0;
    double upper = 0.0;
    double level = 0.95;
    std::size_t n_draws = 0;
};

// B dropout-active forward passes; bounds are order statistics of the draws
// at (1-level)/2 and 1-(1-level)/2 (inverse empirical CDF).
PredictionInterval mc_dropout_predict(const MlpModel& model, std::span<const double> x, std::size_t draws,
                                      double level, std::uint64_t seed);

std::vector<PredictionInterval> mc_dropout_predict_batch(const MlpModel& model, const Eigen::MatrixXd& x,
                                                         std::size_t draws, double level, std::uint64_t seed,
                                                         std::size_t jobs = 1);

// 1-based rank of the order statistic used for probability q among B draws.
std::size_t order_statistic_rank(std::size_t draws, double q);

}  // namespace dcqr
