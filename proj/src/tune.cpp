#include "dcqr/tune.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "dcqr/error.hpp"
#include "dcqr/metrics.hpp"
#include "dcqr/parallel.hpp"
#include "dcqr/random.hpp"
#include "dcqr/text.hpp"

namespace dcqr {

NetworkConfig Candidate::network(std::size_t input_dim) const {
    NetworkConfig cfg;
    cfg.input_dim = input_dim;
    cfg.hidden_layers.assign(layers, nodes);
    cfg.activation = activation;
    cfg.dropout_rate = dropout;
    return cfg;
}

TrainConfig Candidate::training(const LossConfig& loss, std::uint64_t seed) const {
    TrainConfig cfg;
    cfg.loss = loss;
    cfg.optimizer = optimizer;
    cfg.learning_rate = learning_rate;
    cfg.epochs = epochs;
    cfg.batch_size = batch_size;
    cfg.seed = seed;
    return cfg;
}

std::string Candidate::key() const {
    std::ostringstream ss;
    ss << layers << '|' << nodes << '|' << to_string(activation) << '|' << to_string(optimizer) << '|'
       << format_double(dropout) << '|' << epochs << '|' << batch_size << '|'
       << (learning_rate ? format_double(*learning_rate) : "default");
    return ss.str();
}

void HyperGrid::validate() const {
    require(!layers.empty() && !nodes.empty() && !activation.empty() && !optimizer.empty() && !dropout.empty() &&
                !epochs.empty() && !batch_size.empty() && !learning_rate.empty(),
            ErrorKind::InvalidConfig, "every hyperparameter list must be nonempty");
    for (auto v : nodes) require(v > 0, ErrorKind::InvalidConfig, "grid: nodes must be positive");
    for (auto v : dropout) require(v >= 0.0 && v < 1.0, ErrorKind::InvalidConfig, "grid: dropout must lie in [0, 1)");
    for (auto v : epochs) require(v > 0, ErrorKind::InvalidConfig, "grid: epochs must be positive");
    for (auto v : batch_size) require(v > 0, ErrorKind::InvalidConfig, "grid: batch must be positive");
    for (auto v : learning_rate)
        require(!v || (*v >= 0.0 && std::isfinite(*v)), ErrorKind::InvalidConfig, "grid: lr must be >= 0");
}

std::vector<Candidate> HyperGrid::candidates() const {
    validate();
    std::vector<Candidate> out;
    for (auto l : layers)
        for (auto k : nodes)
            for (auto a : activation)
                for (auto o : optimizer)
                    for (auto d : dropout)
                        for (auto e : epochs)
                            for (auto b : batch_size)
                                for (auto lr : learning_rate) out.push_back(Candidate{l, k, a, o, d, e, b, lr});
    return out;
}

namespace {

template <class T, class Parse>
std::vector<T> parse_list(const std::string& key, const std::string& values, Parse parse) {
    std::vector<T> out;
    for (const auto& tok : split(values, ',')) {
        const auto t = std::string(trim(tok));
        if (t.empty()) fail(ErrorKind::InvalidConfig, "grid: empty value for '" + key + "'");
        out.push_back(parse(t));
    }
    return out;
}

std::size_t parse_count(const std::string& key, const std::string& s) {
    auto v = parse_int(s);
    if (!v || *v < 0) fail(ErrorKind::InvalidConfig, "grid: bad integer '" + s + "' for '" + key + "'");
    return static_cast<std::size_t>(*v);
}

double parse_real(const std::string& key, const std::string& s) {
    auto v = parse_double(s);
    if (!v) fail(ErrorKind::InvalidConfig, "grid: bad number '" + s + "' for '" + key + "'");
    return *v;
}

}  // namespace

HyperGrid parse_grid(std::istream& is) {
    HyperGrid grid;
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string> seen;
    while (std::getline(is, line)) {
        ++line_no;
        auto body = trim(line);
        if (body.empty() || body.front() == '#') continue;
        const auto eq = body.find('=');
        if (eq == std::string_view::npos)
            fail(ErrorKind::InvalidConfig, "grid line " + std::to_string(line_no) + ": expected key=values");
        const auto key = std::string(trim(body.substr(0, eq)));
        const auto values = std::string(trim(body.substr(eq + 1)));
        if (std::find(seen.begin(), seen.end(), key) != seen.end())
            fail(ErrorKind::InvalidConfig, "grid line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
        seen.push_back(key);
        if (key == "layers")
            grid.layers = parse_list<std::size_t>(key, values, [&](const std::string& s) { return parse_count(key, s); });
        else if (key == "nodes")
            grid.nodes = parse_list<std::size_t>(key, values, [&](const std::string& s) { return parse_count(key, s); });
        else if (key == "activation")
            grid.activation = parse_list<Activation>(key, values, [](const std::string& s) { return parse_activation(s); });
        else if (key == "optimizer")
            grid.optimizer = parse_list<OptimizerKind>(key, values, [](const std::string& s) { return parse_optimizer(s); });
        else if (key == "dropout")
            grid.dropout = parse_list<double>(key, values, [&](const std::string& s) { return parse_real(key, s); });
        else if (key == "epochs")
            grid.epochs = parse_list<std::size_t>(key, values, [&](const std::string& s) { return parse_count(key, s); });
        else if (key == "batch")
            grid.batch_size = parse_list<std::size_t>(key, values, [&](const std::string& s) { return parse_count(key, s); });
        else if (key == "lr")
            grid.learning_rate = parse_list<std::optional<double>>(
                key, values, [&](const std::string& s) -> std::optional<double> {
                    if (s == "default") return std::nullopt;
                    return parse_real(key, s);
                });
        else
            fail(ErrorKind::InvalidConfig, "grid line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
    grid.validate();
    return grid;
}

HyperGrid read_grid(const std::string& path) {
    std::ifstream is(path);
    if (!is) fail(ErrorKind::InvalidInput, "cannot open grid file '" + path + "'");
    return parse_grid(is);
}

std::vector<std::vector<std::size_t>> kfold_split(std::size_t n, std::size_t k, std::uint64_t seed) {
    require(k >= 2, ErrorKind::InvalidInput, "kfold_split: k must be >= 2");
    require(k <= n, ErrorKind::InvalidInput,
            "kfold_split: k = " + std::to_string(k) + " exceeds n = " + std::to_string(n));
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(perm.begin(), perm.end());
    std::vector<std::vector<std::size_t>> folds(k);
    std::size_t pos = 0;
    for (std::size_t f = 0; f < k; ++f) {
        const std::size_t size = n / k + (f < n % k ? 1 : 0);
        folds[f].assign(perm.begin() + static_cast<std::ptrdiff_t>(pos),
                        perm.begin() + static_cast<std::ptrdiff_t>(pos + size));
        pos += size;
    }
    return folds;
}

namespace {

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

struct CellOutcome {
    std::optional<double> loss;
    std::string warning;
};

CellOutcome run_cell(const Dataset& data, const std::vector<std::vector<std::size_t>>& folds, std::size_t fold,
                     const Candidate& cand, const LossConfig& loss, std::uint64_t cand_seed) {
    const std::string tag = "fold " + std::to_string(fold + 1) + ": ";
    std::vector<std::size_t> train_rows;
    for (std::size_t f = 0; f < folds.size(); ++f)
        if (f != fold) train_rows.insert(train_rows.end(), folds[f].begin(), folds[f].end());
    const auto train_set = data.subset(train_rows);
    const auto held_out = data.subset(folds[fold]);
    if (train_set.n_events() == 0) return {std::nullopt, tag + "training folds have no events; skipped"};
    if (held_out.n_events() == 0) return {std::nullopt, tag + "held-out fold has no events; skipped"};

    auto train_cfg = cand.training(loss, derive_seed(cand_seed, 2 * fold + 1));
    train_cfg.batch_size = std::min(train_cfg.batch_size, train_set.size());
    try {
        auto model = init_network(cand.network(data.dim()), derive_seed(cand_seed, 2 * fold));
        auto fitted = train(std::move(model), train_set, train_cfg);
        const Eigen::VectorXd pred = predict_log(fitted.model, held_out.covariate_matrix());
        const auto ql = quantile_loss(held_out, {pred.data(), static_cast<std::size_t>(pred.size())}, loss.tau,
                                      default_cap_u(held_out));
        return {ql.value, {}};
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::Numeric && e.kind() != ErrorKind::DegenerateData) throw;
        return {std::nullopt, tag + e.what()};
    }
}

}  // namespace

CvResult grid_search(const Dataset& data, const HyperGrid& grid, const LossConfig& loss, std::size_t k,
                     std::uint64_t seed, std::size_t jobs) {
    data.validate();
    loss.validate();
    const auto cands = grid.candidates();
    const auto folds = kfold_split(data.size(), k, seed);

    std::vector<CellOutcome> cells(cands.size() * k);
    parallel_for(cells.size(), jobs, [&](std::size_t idx) {
        const std::size_t c = idx / k;
        const std::size_t f = idx % k;
        const std::uint64_t cand_seed = seed ^ fnv1a(cands[c].key());
        cells[idx] = run_cell(data, folds, f, cands[c], loss, cand_seed);
    });

    CvResult result;
    for (std::size_t c = 0; c < cands.size(); ++c) {
        CvRow row;
        row.candidate = cands[c];
        std::vector<double> losses;
        for (std::size_t f = 0; f < k; ++f) {
            const auto& cell = cells[c * k + f];
            if (cell.loss)
                losses.push_back(*cell.loss);
            else
                row.warnings.push_back(cell.warning);
        }
        row.n_folds_used = losses.size();
        row.evaluable = !losses.empty();
        if (row.evaluable) {
            row.mean_ql = std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(losses.size());
            double ss = 0.0;
            for (double v : losses) ss += (v - row.mean_ql) * (v - row.mean_ql);
            row.sd_ql = losses.size() > 1 ? std::sqrt(ss / static_cast<double>(losses.size() - 1)) : 0.0;
        }
        result.rows.push_back(std::move(row));
    }

    // argmin of mean loss; ties go to fewer parameters, then grid order
    std::optional<std::size_t> best;
    for (std::size_t c = 0; c < result.rows.size(); ++c) {
        const auto& row = result.rows[c];
        if (!row.evaluable) continue;
        if (!best) {
            best = c;
            continue;
        }
        const auto& cur = result.rows[*best];
        if (row.mean_ql < cur.mean_ql ||
            (row.mean_ql == cur.mean_ql && row.candidate.network(data.dim()).parameter_count() <
                                               cur.candidate.network(data.dim()).parameter_count()))
            best = c;
    }
    if (!best) fail(ErrorKind::DegenerateData, "grid_search: no candidate could be evaluated on any fold");
    result.best = *best;
    return result;
}

void write_cv_csv(std::ostream& os, const CvResult& result) {
    os << "layers,nodes,activation,optimizer,dropout,epochs,batch,lr,mean_ql,sd_ql,n_folds_used,best\n";
    for (std::size_t c = 0; c < result.rows.size(); ++c) {
        const auto& r = result.rows[c];
        const auto& cd = r.candidate;
        os << cd.layers << ',' << cd.nodes << ',' << to_string(cd.activation) << ',' << to_string(cd.optimizer) << ','
           << format_double(cd.dropout) << ',' << cd.epochs << ',' << cd.batch_size << ','
           << (cd.learning_rate ? format_double(*cd.learning_rate) : "default") << ','
           << (r.evaluable ? format_double(r.mean_ql) : "NA") << ',' << (r.evaluable ? format_double(r.sd_ql) : "NA")
           << ',' << r.n_folds_used << ',' << (c == result.best ? 1 : 0) << '\n';
    }
}

// ---- MC dropout --------------------------------------------------------------

std::size_t order_statistic_rank(std::size_t draws, double q) {
    // smallest rank r with r / B >= q; the slack absorbs rounding in B * q
    const double scaled = static_cast<double>(draws) * q;
    auto r = static_cast<std::size_t>(std::ceil(scaled - 1e-9));
    return std::clamp<std::size_t>(r, 1, draws);
}

std::vector<PredictionInterval> mc_dropout_predict_batch(const MlpModel& model, const Eigen::MatrixXd& x,
                                                         std::size_t draws, double level, std::uint64_t seed,
                                                         std::size_t jobs) {
    require(draws >= 2, ErrorKind::InvalidInput, "mc_dropout: at least 2 draws required");
    require(level > 0.0 && level < 1.0, ErrorKind::InvalidInput, "mc_dropout: level must lie in (0, 1)");
    const auto n = x.rows();
    Eigen::MatrixXd samples(n, static_cast<Eigen::Index>(draws));
    parallel_for(draws, jobs, [&](std::size_t b) {
        Rng rng(derive_seed(seed, b));
        samples.col(static_cast<Eigen::Index>(b)) = forward(model, x, ForwardMode::McDropout, rng).log_preds;
    });

    const double alpha = (1.0 - level) / 2.0;
    const auto lo_rank = order_statistic_rank(draws, alpha);
    const auto hi_rank = order_statistic_rank(draws, 1.0 - alpha);
    std::vector<PredictionInterval> out;
    out.reserve(static_cast<std::size_t>(n));
    std::vector<double> row(draws);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (std::size_t b = 0; b < draws; ++b) row[b] = samples(i, static_cast<Eigen::Index>(b));
        // shifted mean: exact when all draws coincide
        double shift = 0.0;
        for (double v : row) shift += v - row[0];
        const double mean = row[0] + shift / static_cast<double>(draws);
        std::sort(row.begin(), row.end());
        out.push_back(PredictionInterval{std::exp(mean), std::exp(row[lo_rank - 1]), std::exp(row[hi_rank - 1]), level,
                                         draws});
    }
    return out;
}

PredictionInterval mc_dropout_predict(const MlpModel& model, std::span<const double> x, std::size_t draws,
                                      double level, std::uint64_t seed) {
    Eigen::MatrixXd row(1, static_cast<Eigen::Index>(x.size()));
    for (std::size_t j = 0; j < x.size(); ++j) row(0, static_cast<Eigen::Index>(j)) = x[j];
    return mc_dropout_predict_batch(model, row, draws, level, seed).front();
}

}  // namespace dcqr
