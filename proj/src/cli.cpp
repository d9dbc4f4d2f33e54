#include "dcqr/cli.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "dcqr/data_io.hpp"
#include "dcqr/error.hpp"
#include "dcqr/linear.hpp"
#include "dcqr/metrics.hpp"
#include "dcqr/network.hpp"
#include "dcqr/simulate.hpp"
#include "dcqr/text.hpp"
#include "dcqr/training.hpp"
#include "dcqr/tune.hpp"

namespace dcqr::cli {

namespace {

using json = nlohmann::ordered_json;

// Files a command read and wrote, for the manifest.
struct RunRecord {
    std::map<std::string, std::string> inputs;
    std::map<std::string, std::string> outputs;
    std::string manifest_base;  // manifest goes to <manifest_base>.manifest.json
};

std::string file_checksum(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) return "missing";
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 14];
    while (is) {
        is.read(buf, sizeof buf);
        for (std::streamsize i = 0; i < is.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
    }
    std::ostringstream ss;
    ss << std::hex << std::setw(16) << std::setfill('0') << h;
    return ss.str();
}

void write_text(const std::string& path, const std::string& body) {
    std::ofstream os(path, std::ios::binary);
    if (!os) fail(ErrorKind::InvalidInput, "cannot open '" + path + "' for writing");
    os << body;
    if (!os) fail(ErrorKind::InvalidInput, "failed writing '" + path + "'");
}

// Covariate matrix of `data` in the column order the model was trained on.
Eigen::MatrixXd aligned_covariates(const Dataset& data, const std::vector<std::string>& names) {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(data.size()), static_cast<Eigen::Index>(names.size()));
    for (std::size_t j = 0; j < names.size(); ++j) {
        auto it = std::find(data.feature_names.begin(), data.feature_names.end(), names[j]);
        if (it == data.feature_names.end())
            fail(ErrorKind::InvalidInput, "data is missing feature column '" + names[j] + "'");
        const auto src = static_cast<std::size_t>(it - data.feature_names.begin());
        for (std::size_t i = 0; i < data.size(); ++i)
            x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = data.records[i].covariates[src];
    }
    return x;
}

LossConfig loss_from(double tau, double xi) {
    LossConfig loss{tau, xi, xi > 0.0};
    loss.validate();
    return loss;
}

// ---- subcommands -----------------------------------------------------------

struct SimulateOpts {
    std::string scenario = "none";
    std::size_t n = 0;
    double censor = 0.0;
    std::uint64_t seed = 0;
    std::string out;
    bool truth = false;
};

void do_simulate(const SimulateOpts& o, RunRecord& rec, std::ostream& out) {
    auto scenario = default_scenario(parse_scenario_kind(o.scenario));
    require(o.censor >= 0.0 && o.censor < 1.0, ErrorKind::InvalidConfig, "--censor must lie in [0, 1)");
    if (o.censor > 0.0) {
        const auto cal = calibrate_censor_bound(scenario, o.censor, derive_seed(o.seed, 1));
        scenario.censor_bound = cal.censor_bound;
        out << "calibrated censor bound c = " << format_double(cal.censor_bound) << " (Monte Carlo proportion "
            << format_double(cal.proportion) << ")\n";
    }
    const auto rep = simulate(scenario, o.n, derive_seed(o.seed, 2));
    std::ostringstream body;
    write_dataset(body, rep.dataset, o.truth ? std::span<const double>(rep.true_times) : std::span<const double>{});
    write_text(o.out, body.str());
    out << "wrote " << rep.dataset.size() << " rows (" << rep.dataset.n_events() << " events) to " << o.out << '\n';
    rec.outputs["out"] = o.out;
    rec.manifest_base = o.out;
}

struct TrainOpts {
    std::string data, out, log, coef;
    double tau = 0.5;
    std::string model = "deep";
    std::size_t layers = 2, nodes = 300;
    std::string activation = "relu", optimizer = "adam";
    double dropout = 0.1;
    std::size_t epochs = 500, batch = 64;
    double lr = 0.0;
    double xi = kDefaultHuberXi;
    std::uint64_t seed = 0;
    bool epochs_set = false, lr_set = false;
};

void do_train(const TrainOpts& o, RunRecord& rec, std::ostream& out) {
    const auto data = read_dataset(o.data).dataset;
    rec.inputs["data"] = o.data;
    data.validate();
    const auto loss = loss_from(o.tau, o.xi);
    const auto optimizer = parse_optimizer(o.optimizer);

    ModelFile file;
    file.kind = o.model;
    file.tau = o.tau;
    file.xi = o.xi;
    file.use_huber = loss.use_huber;
    file.feature_names = data.feature_names;
    TrainLog log;
    if (o.model == "linear") {
        LinearFitConfig fit;
        fit.optimizer = optimizer;
        if (o.lr_set) fit.learning_rate = o.lr;
        if (o.epochs_set) fit.epochs = o.epochs;
        fit.seed = o.seed;
        require(data.n_events() > 0, ErrorKind::DegenerateData, "train: dataset has no event observations");
        NetworkConfig net;
        net.input_dim = data.dim();
        auto fitted = train(init_network(net, fit.seed), data, linear_train_config(loss, fit, data.size()));
        const auto lin = from_network(fitted.model);
        file.model = to_network(lin);
        log = std::move(fitted.log);
        if (!o.coef.empty()) {
            std::ostringstream body;
            write_coefficients_csv(body, lin, data.feature_names);
            write_text(o.coef, body.str());
            rec.outputs["coef"] = o.coef;
        }
    } else {
        NetworkConfig net;
        net.input_dim = data.dim();
        net.hidden_layers.assign(o.layers, o.nodes);
        net.activation = parse_activation(o.activation);
        net.dropout_rate = o.dropout;
        TrainConfig cfg;
        cfg.loss = loss;
        cfg.optimizer = optimizer;
        if (o.lr_set) cfg.learning_rate = o.lr;
        cfg.epochs = o.epochs;
        cfg.batch_size = o.batch;
        cfg.seed = derive_seed(o.seed, 1);
        cfg.validate(data.size());
        auto fitted = train(init_network(net, derive_seed(o.seed, 0)), data, cfg);
        file.model = std::move(fitted.model);
        log = std::move(fitted.log);
    }
    std::ostringstream body;
    save_model(body, file);
    write_text(o.out, body.str());
    rec.outputs["out"] = o.out;
    rec.manifest_base = o.out;
    if (!o.log.empty()) {
        std::ostringstream lb;
        write_train_log_csv(lb, log);
        write_text(o.log, lb.str());
        rec.outputs["log"] = o.log;
    }
    out << "trained " << o.model << " model on " << data.size() << " rows; final epoch loss "
        << format_double(log.final_loss()) << '\n';
}

struct PredictOpts {
    std::string model, data, out;
    double interval = 0.0;
    std::size_t draws = kDefaultDropoutDraws;
    std::uint64_t seed = 0;
    std::size_t jobs = 1;
};

void do_predict(const PredictOpts& o, RunRecord& rec, std::ostream& out) {
    const auto file = load_model(o.model);
    rec.inputs["model"] = o.model;
    const auto x = read_covariates(o.data, file.feature_names);
    rec.inputs["data"] = o.data;
    std::ostringstream body;
    if (o.interval > 0.0) {
        const auto intervals = mc_dropout_predict_batch(file.model, x, o.draws, o.interval, o.seed, o.jobs);
        body << "pred,lower,upper\n";
        for (const auto& pi : intervals)
            body << format_double(pi.point) << ',' << format_double(pi.lower) << ',' << format_double(pi.upper) << '\n';
    } else {
        const Eigen::VectorXd lp = predict_log(file.model, x);
        body << "pred\n";
        for (Eigen::Index i = 0; i < lp.size(); ++i) body << format_double(std::exp(lp(i))) << '\n';
    }
    write_text(o.out, body.str());
    rec.outputs["out"] = o.out;
    rec.manifest_base = o.out;
    out << "wrote " << x.rows() << " predictions to " << o.out << '\n';
}

struct EvaluateOpts {
    std::string model, data, out;
    double tau = 0.5;
    double cap_u = 0.0;
    bool tau_set = false, cap_set = false;
};

void do_evaluate(const EvaluateOpts& o, RunRecord& rec, std::ostream& out) {
    const auto file = load_model(o.model);
    rec.inputs["model"] = o.model;
    const auto data = read_dataset(o.data).dataset;
    rec.inputs["data"] = o.data;
    const Eigen::VectorXd lp = predict_log(file.model, aligned_covariates(data, file.feature_names));
    const double tau = o.tau_set ? o.tau : file.tau;
    const auto report =
        evaluate_predictions(data, {lp.data(), static_cast<std::size_t>(lp.size())}, tau,
                             o.cap_set ? std::optional<double>(o.cap_u) : std::nullopt);
    std::ostringstream body;
    write_metrics_csv(body, report);
    write_text(o.out, body.str());
    rec.outputs["out"] = o.out;
    rec.manifest_base = o.out;
    print_metrics_table(out, report);
}

struct TuneOpts {
    std::string data, grid, out;
    double tau = 0.5;
    double xi = kDefaultHuberXi;
    std::size_t folds = 5;
    std::uint64_t seed = 0;
    std::size_t jobs = 1;
};

void do_tune(const TuneOpts& o, RunRecord& rec, std::ostream& out) {
    const auto data = read_dataset(o.data).dataset;
    rec.inputs["data"] = o.data;
    HyperGrid grid;
    if (!o.grid.empty()) {
        grid = read_grid(o.grid);
        rec.inputs["grid"] = o.grid;
    }
    const auto result = grid_search(data, grid, loss_from(o.tau, o.xi), o.folds, o.seed, o.jobs);
    std::ostringstream body;
    write_cv_csv(body, result);
    write_text(o.out, body.str());
    rec.outputs["out"] = o.out;
    rec.manifest_base = o.out;
    for (const auto& row : result.rows)
        for (const auto& w : row.warnings) out << "warning: " << row.candidate.key() << ": " << w << '\n';
    const auto& best = result.rows[result.best];
    out << "best candidate: " << best.candidate.key() << " mean_ql " << format_double(best.mean_ql) << '\n';
}

// ---- manifest ----------------------------------------------------------------

json resolved_flags(CLI::App* sub) {
    json flags = json::object();
    for (const CLI::Option* opt : sub->get_options()) {
        const auto name = opt->get_single_name();
        if (name.empty() || name == "help") continue;
        std::string value;
        if (opt->count() > 0) {
            const auto& res = opt->results();
            for (std::size_t i = 0; i < res.size(); ++i) value += (i ? "," : "") + res[i];
            if (res.empty()) value = "true";
        } else {
            value = opt->get_default_str();
        }
        flags[name] = value;
    }
    return flags;
}

void write_manifest(const std::string& command, const std::vector<std::string>& args, CLI::App* sub,
                    const RunRecord& rec, double duration_ms) {
    json m;
    m["command"] = command;
    m["args"] = args;
    m["flags"] = resolved_flags(sub);
    json seeds = json::object();
    if (auto* opt = sub->get_option_no_throw("--seed")) seeds["seed"] = opt->count() ? opt->results().front() : opt->get_default_str();
    m["seeds"] = seeds;
    json inputs = json::object();
    for (const auto& [role, path] : rec.inputs) inputs[role] = {{"path", path}, {"fnv1a64", file_checksum(path)}};
    m["inputs"] = inputs;
    json outputs = json::object();
    for (const auto& [role, path] : rec.outputs) outputs[role] = {{"path", path}, {"fnv1a64", file_checksum(path)}};
    m["outputs"] = outputs;
    m["duration_ms"] = duration_ms;
    write_text(rec.manifest_base + ".manifest.json", m.dump(2) + "\n");
}

int exit_code_for(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InvalidInput:
        case ErrorKind::InvalidConfig:
        case ErrorKind::CalibrationFailure: return kExitUsage;
        case ErrorKind::Numeric:
        case ErrorKind::DegenerateData:
        case ErrorKind::DegenerateWeight:
        case ErrorKind::UndefinedMetric: return kExitNumeric;
    }
    return kExitNumeric;
}

int run_impl(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, bool allow_replay);

int do_replay(const std::string& manifest_path, std::ostream& out, std::ostream& err) {
    std::ifstream is(manifest_path);
    if (!is) fail(ErrorKind::InvalidInput, "cannot open manifest '" + manifest_path + "'");
    json m;
    try {
        m = json::parse(is);
    } catch (const json::exception& e) {
        fail(ErrorKind::InvalidInput, "manifest '" + manifest_path + "': " + e.what());
    }
    if (!m.contains("args") || !m["args"].is_array())
        fail(ErrorKind::InvalidInput, "manifest '" + manifest_path + "' has no args");
    const auto args = m["args"].get<std::vector<std::string>>();
    const int code = run_impl(args, out, err, false);
    if (code != kExitOk) return code;
    bool same = true;
    for (const auto& [role, entry] : m["outputs"].items()) {
        const auto path = entry["path"].get<std::string>();
        const auto want = entry["fnv1a64"].get<std::string>();
        const auto got = file_checksum(path);
        if (got != want) {
            err << "replay mismatch: " << path << " checksum " << got << ", manifest " << want << '\n';
            same = false;
        }
    }
    if (!same) return kExitNumeric;
    out << "replay reproduced all outputs of " << manifest_path << '\n';
    return kExitOk;
}

int run_impl(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, bool allow_replay) {
    CLI::App app{"Censored quantile regression with neural networks and IPCW"};
    app.name("dcqr");
    app.require_subcommand(1);
    app.option_defaults()->always_capture_default();

    SimulateOpts sim;
    auto* c_sim = app.add_subcommand("simulate", "Generate a piecewise-exponential survival dataset");
    c_sim->add_option("--scenario", sim.scenario, "none | group")->check(CLI::IsMember({"none", "group"}));
    c_sim->add_option("--n", sim.n, "Number of subjects")->required()->check(CLI::PositiveNumber);
    c_sim->add_option("--censor", sim.censor, "Target censoring proportion (0 = none)");
    c_sim->add_option("--seed", sim.seed, "Random seed");
    c_sim->add_option("--out", sim.out, "Output data CSV")->required();
    c_sim->add_flag("--truth", sim.truth, "Add a true_time column");

    TrainOpts tr;
    auto* c_train = app.add_subcommand("train", "Fit a deep or linear censored quantile model");
    c_train->add_option("--data", tr.data, "Training data CSV")->required();
    c_train->add_option("--tau", tr.tau, "Quantile level");
    c_train->add_option("--model", tr.model, "deep | linear")->check(CLI::IsMember({"deep", "linear"}));
    c_train->add_option("--layers", tr.layers, "Hidden layers");
    c_train->add_option("--nodes", tr.nodes, "Nodes per hidden layer");
    c_train->add_option("--activation", tr.activation, "relu | sigmoid | hard_sigmoid | tanh | selu");
    c_train->add_option("--optimizer", tr.optimizer, "sgd | adam | adadelta | adamax");
    c_train->add_option("--dropout", tr.dropout, "Dropout rate");
    auto* epochs_opt = c_train->add_option("--epochs", tr.epochs, "Training epochs (linear default 3000)");
    c_train->add_option("--batch", tr.batch, "Mini-batch size (deep model only)");
    auto* lr_opt = c_train->add_option("--lr", tr.lr, "Learning rate (optimizer default when omitted)");
    c_train->add_option("--xi", tr.xi, "Huber smoothing width; 0 uses the plain check function");
    c_train->add_option("--seed", tr.seed, "Random seed");
    c_train->add_option("--out", tr.out, "Output model file")->required();
    c_train->add_option("--log", tr.log, "Optional per-epoch loss CSV");
    c_train->add_option("--coef", tr.coef, "Optional coefficient CSV (linear model)");

    PredictOpts pr;
    auto* c_pred = app.add_subcommand("predict", "Predict conditional quantiles (time scale)");
    c_pred->add_option("--model", pr.model, "Model file")->required();
    c_pred->add_option("--data", pr.data, "CSV with the model's feature columns")->required();
    c_pred->add_option("--out", pr.out, "Output predictions CSV")->required();
    c_pred->add_option("--interval", pr.interval, "MC-dropout interval level, e.g. 0.95");
    c_pred->add_option("--draws", pr.draws, "MC-dropout draws");
    c_pred->add_option("--seed", pr.seed, "Random seed for dropout masks");

    EvaluateOpts ev;
    auto* c_eval = app.add_subcommand("evaluate", "C-index, MMSE and quantile loss on a labelled dataset");
    c_eval->add_option("--model", ev.model, "Model file")->required();
    c_eval->add_option("--data", ev.data, "Evaluation data CSV")->required();
    auto* tau_opt = c_eval->add_option("--tau", ev.tau, "Quantile level (defaults to the model's)");
    auto* cap_opt = c_eval->add_option("--cap-u", ev.cap_u, "Time cap u (default: 95th percentile of times)");
    c_eval->add_option("--out", ev.out, "Output metrics CSV")->required();

    TuneOpts tu;
    auto* c_tune = app.add_subcommand("tune", "k-fold cross-validated grid search");
    c_tune->add_option("--data", tu.data, "Training data CSV")->required();
    c_tune->add_option("--tau", tu.tau, "Quantile level");
    c_tune->add_option("--xi", tu.xi, "Huber smoothing width");
    c_tune->add_option("--grid", tu.grid, "Grid file (key=v1,v2 lines)");
    c_tune->add_option("--folds", tu.folds, "Number of folds");
    c_tune->add_option("--seed", tu.seed, "Random seed");
    c_tune->add_option("--out", tu.out, "Output CV table CSV")->required();

    std::size_t jobs = 1;
    for (auto* sub : {c_sim, c_train, c_pred, c_eval, c_tune})
        sub->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);

    std::string manifest;
    CLI::App* c_replay = nullptr;
    if (allow_replay) {
        c_replay = app.add_subcommand("replay", "Re-run a command from its manifest and verify outputs");
        c_replay->add_option("--manifest", manifest, "Manifest JSON")->required();
    }

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    }

    const auto start = std::chrono::steady_clock::now();
    try {
        RunRecord rec;
        CLI::App* used = nullptr;
        std::string command;
        if (c_replay && c_replay->parsed()) return do_replay(manifest, out, err);
        if (c_sim->parsed()) {
            do_simulate(sim, rec, out);
            used = c_sim;
            command = "simulate";
        } else if (c_train->parsed()) {
            tr.epochs_set = epochs_opt->count() > 0;
            tr.lr_set = lr_opt->count() > 0;
            do_train(tr, rec, out);
            used = c_train;
            command = "train";
        } else if (c_pred->parsed()) {
            pr.jobs = jobs;
            do_predict(pr, rec, out);
            used = c_pred;
            command = "predict";
        } else if (c_eval->parsed()) {
            ev.tau_set = tau_opt->count() > 0;
            ev.cap_set = cap_opt->count() > 0;
            do_evaluate(ev, rec, out);
            used = c_eval;
            command = "evaluate";
        } else {
            tu.jobs = jobs;
            do_tune(tu, rec, out);
            used = c_tune;
            command = "tune";
        }
        const std::chrono::duration<double, std::milli> elapsed = std::chrono::steady_clock::now() - start;
        write_manifest(command, args, used, rec, elapsed.count());
        return kExitOk;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return exit_code_for(e.kind());
    }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    return run_impl(args, out, err, true);
}

}  // namespace dcqr::cli
