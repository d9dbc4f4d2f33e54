#include "dcqr/network.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "dcqr/error.hpp"
#include "dcqr/text.hpp"

namespace dcqr {

Activation parse_activation(std::string_view name) {
    if (name == "relu") return Activation::Relu;
    if (name == "sigmoid") return Activation::Sigmoid;
    if (name == "hard_sigmoid") return Activation::HardSigmoid;
    if (name == "tanh") return Activation::Tanh;
    if (name == "selu") return Activation::Selu;
    fail(ErrorKind::InvalidConfig, "unknown activation '" + std::string(name) + "'");
}

std::string_view to_string(Activation a) {
    switch (a) {
        case Activation::Relu: return "relu";
        case Activation::Sigmoid: return "sigmoid";
        case Activation::HardSigmoid: return "hard_sigmoid";
        case Activation::Tanh: return "tanh";
        case Activation::Selu: return "selu";
    }
    return "?";
}

double activation_eval(Activation kind, double u) {
    switch (kind) {
        case Activation::Relu: return u > 0.0 ? u : 0.0;
        case Activation::Sigmoid: return 1.0 / (1.0 + std::exp(-u));
        case Activation::HardSigmoid: return std::clamp(0.2 * u + 0.5, 0.0, 1.0);
        case Activation::Tanh: return std::tanh(u);
        case Activation::Selu: return u > 0.0 ? kSeluLambda * u : kSeluLambda * kSeluAlpha * std::expm1(u);
    }
    fail(ErrorKind::InvalidConfig, "unknown activation");
}

double activation_deriv(Activation kind, double u) {
    switch (kind) {
        case Activation::Relu: return u > 0.0 ? 1.0 : 0.0;
        case Activation::Sigmoid: {
            const double s = 1.0 / (1.0 + std::exp(-u));
            return s * (1.0 - s);
        }
        case Activation::HardSigmoid: return (u > -2.5 && u < 2.5) ? 0.2 : 0.0;
        case Activation::Tanh: {
            const double t = std::tanh(u);
            return 1.0 - t * t;
        }
        case Activation::Selu: return u > 0.0 ? kSeluLambda : kSeluLambda * kSeluAlpha * std::exp(u);
    }
    fail(ErrorKind::InvalidConfig, "unknown activation");
}

namespace {

// Whole-matrix versions of the scalar functions above; same formulas.
Eigen::MatrixXd apply_activation(Activation kind, const Eigen::MatrixXd& z) {
    const auto a = z.array();
    switch (kind) {
        case Activation::Relu: return a.max(0.0).matrix();
        case Activation::Sigmoid: return (1.0 / (1.0 + (-a).exp())).matrix();
        case Activation::HardSigmoid: return (0.2 * a + 0.5).max(0.0).min(1.0).matrix();
        case Activation::Tanh: return a.tanh().matrix();
        case Activation::Selu:
            return (a > 0.0).select(kSeluLambda * a, kSeluLambda * kSeluAlpha * a.unaryExpr([](double v) {
                return std::expm1(v);
            })).matrix();
    }
    fail(ErrorKind::InvalidConfig, "unknown activation");
}

Eigen::MatrixXd activation_derivative(Activation kind, const Eigen::MatrixXd& z) {
    const auto a = z.array();
    switch (kind) {
        case Activation::Relu: return (a > 0.0).cast<double>().matrix();
        case Activation::Sigmoid: {
            const Eigen::ArrayXXd s = 1.0 / (1.0 + (-a).exp());
            return (s * (1.0 - s)).matrix();
        }
        case Activation::HardSigmoid: return ((a > -2.5) && (a < 2.5)).cast<double>().matrix() * 0.2;
        case Activation::Tanh: {
            const Eigen::ArrayXXd t = a.tanh();
            return (1.0 - t * t).matrix();
        }
        case Activation::Selu:
            return (a > 0.0).select(Eigen::ArrayXXd::Constant(a.rows(), a.cols(), kSeluLambda),
                                    kSeluLambda * kSeluAlpha * a.exp()).matrix();
    }
    fail(ErrorKind::InvalidConfig, "unknown activation");
}

std::vector<std::size_t> layer_widths(const NetworkConfig& cfg) {
    std::vector<std::size_t> widths{cfg.input_dim};
    widths.insert(widths.end(), cfg.hidden_layers.begin(), cfg.hidden_layers.end());
    widths.push_back(1);
    return widths;
}

void check_dims(const MlpModel& model) {
    const auto widths = layer_widths(model.config);
    require(model.layers.size() + 1 == widths.size(), ErrorKind::InvalidInput,
            "model layer count does not match its config");
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const auto& layer = model.layers[l];
        require(static_cast<std::size_t>(layer.weights.rows()) == widths[l] &&
                    static_cast<std::size_t>(layer.weights.cols()) == widths[l + 1] &&
                    static_cast<std::size_t>(layer.bias.size()) == widths[l + 1],
                ErrorKind::InvalidInput, "layer " + std::to_string(l) + " shape does not match config");
    }
}

}  // namespace

void NetworkConfig::validate() const {
    require(!(input_dim == 0 && !hidden_layers.empty()), ErrorKind::InvalidConfig,
            "input_dim must be positive for a network with hidden layers");
    for (auto w : hidden_layers)
        require(w > 0, ErrorKind::InvalidConfig, "hidden layer width must be positive");
    require(dropout_rate >= 0.0 && dropout_rate < 1.0, ErrorKind::InvalidConfig,
            "dropout_rate must lie in [0, 1)");
}

std::size_t NetworkConfig::parameter_count() const {
    const auto widths = layer_widths(*this);
    std::size_t count = 0;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) count += (widths[l] + 1) * widths[l + 1];
    return count;
}

MlpModel init_network(const NetworkConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    MlpModel model;
    model.config = cfg;
    const auto widths = layer_widths(cfg);
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        const auto fan_in = static_cast<Eigen::Index>(widths[l]);
        const auto fan_out = static_cast<Eigen::Index>(widths[l + 1]);
        const double limit = std::sqrt(6.0 / static_cast<double>(std::max<Eigen::Index>(fan_in + fan_out, 1)));
        DenseLayer layer{Eigen::MatrixXd(fan_in, fan_out), Eigen::VectorXd::Zero(fan_out)};
        for (Eigen::Index i = 0; i < fan_in; ++i)
            for (Eigen::Index j = 0; j < fan_out; ++j) layer.weights(i, j) = rng.uniform(-limit, limit);
        model.layers.push_back(std::move(layer));
    }
    return model;
}

ForwardResult forward(const MlpModel& model, const Eigen::MatrixXd& batch, ForwardMode mode, Rng& rng) {
    require(static_cast<std::size_t>(batch.cols()) == model.config.input_dim, ErrorKind::InvalidInput,
            "forward: batch has " + std::to_string(batch.cols()) + " columns, model expects " +
                std::to_string(model.config.input_dim));
    check_dims(model);

    const double rate = model.config.dropout_rate;
    const bool dropout = mode != ForwardMode::Infer && rate > 0.0;
    const double keep_scale = 1.0 / (1.0 - rate);

    ForwardResult out;
    auto& cache = out.cache;
    cache.input = batch;
    const Eigen::MatrixXd* prev = &cache.input;
    for (std::size_t l = 0; l < model.hidden_count(); ++l) {
        const auto& layer = model.layers[l];
        Eigen::MatrixXd z = (*prev) * layer.weights;
        z.rowwise() += layer.bias.transpose();
        Eigen::MatrixXd h = apply_activation(model.config.activation, z);
        if (dropout) {
            Eigen::MatrixXd mask(h.rows(), h.cols());
            for (Eigen::Index i = 0; i < mask.rows(); ++i)
                for (Eigen::Index k = 0; k < mask.cols(); ++k)
                    mask(i, k) = rng.uniform() < rate ? 0.0 : keep_scale;
            h.array() *= mask.array();
            cache.masks.push_back(std::move(mask));
        }
        cache.pre.push_back(std::move(z));
        cache.post.push_back(std::move(h));
        prev = &cache.post.back();
    }
    const auto& outl = model.output_layer();
    out.log_preds = (*prev) * outl.weights.col(0);
    out.log_preds.array() += outl.bias(0);
    if (!out.log_preds.allFinite()) fail(ErrorKind::Numeric, "forward: non-finite network output");
    return out;
}

Eigen::VectorXd predict_log(const MlpModel& model, const Eigen::MatrixXd& batch) {
    Rng unused(0);
    return forward(model, batch, ForwardMode::Infer, unused).log_preds;
}

ParamSet backward(const MlpModel& model, const ForwardCache& cache, const Eigen::VectorXd& dloss_dpred) {
    const std::size_t hidden = model.hidden_count();
    const Eigen::Index m = dloss_dpred.size();
    bool fresh = cache.pre.size() == hidden && cache.post.size() == hidden && cache.input.rows() == m &&
                 static_cast<std::size_t>(cache.input.cols()) == model.config.input_dim &&
                 (cache.masks.empty() || cache.masks.size() == hidden);
    for (std::size_t l = 0; fresh && l < hidden; ++l)
        fresh = cache.pre[l].rows() == m && cache.pre[l].cols() == model.layers[l].weights.cols() &&
                cache.post[l].rows() == m && cache.post[l].cols() == cache.pre[l].cols();
    require(fresh, ErrorKind::InvalidInput, "backward: cache does not match model or batch");

    ParamSet grads(model.layers.size());
    const Eigen::MatrixXd& last = hidden == 0 ? cache.input : cache.post.back();
    auto& gout = grads.back();
    gout.weights = last.transpose() * dloss_dpred;
    gout.bias = Eigen::VectorXd::Constant(1, dloss_dpred.sum());
    if (hidden == 0) return grads;

    // d loss / d (hidden output) of the last hidden layer
    Eigen::MatrixXd upstream = dloss_dpred * model.output_layer().weights.col(0).transpose();
    for (std::size_t l = hidden; l-- > 0;) {
        if (!cache.masks.empty()) upstream.array() *= cache.masks[l].array();
        Eigen::MatrixXd dz = upstream.cwiseProduct(activation_derivative(model.config.activation, cache.pre[l]));
        const Eigen::MatrixXd& input = l == 0 ? cache.input : cache.post[l - 1];
        grads[l].weights = input.transpose() * dz;
        grads[l].bias = dz.colwise().sum().transpose();
        if (l > 0) upstream = dz * model.layers[l].weights.transpose();
    }
    return grads;
}

ParamSet zeros_like(const ParamSet& params) {
    ParamSet out;
    out.reserve(params.size());
    for (const auto& p : params)
        out.push_back({Eigen::MatrixXd::Zero(p.weights.rows(), p.weights.cols()),
                       Eigen::VectorXd::Zero(p.bias.size())});
    return out;
}

// ---- model file -----------------------------------------------------------

namespace {

constexpr std::string_view kMagic = "dcqr-model";
constexpr int kFormatVersion = 1;

std::string read_line(std::istream& is, const std::string& what) {
    std::string line;
    while (std::getline(is, line)) {
        if (!trim(line).empty()) return line;
    }
    fail(ErrorKind::InvalidInput, "model file: unexpected end of file reading " + what);
}

// Reads "key v1 v2 ..." and returns the values.
std::vector<std::string> read_keyed(std::istream& is, std::string_view key) {
    const auto line = read_line(is, std::string(key));
    std::istringstream ss(line);
    std::string head;
    ss >> head;
    if (head != key) fail(ErrorKind::InvalidInput, "model file: expected '" + std::string(key) + "', got '" + head + "'");
    std::vector<std::string> vals;
    for (std::string tok; ss >> tok;) vals.push_back(tok);
    return vals;
}

double to_double(const std::string& s) {
    auto v = parse_double(s);
    if (!v) fail(ErrorKind::InvalidInput, "model file: bad number '" + s + "'");
    return *v;
}

std::size_t to_size(const std::string& s) {
    auto v = parse_int(s);
    if (!v || *v < 0) fail(ErrorKind::InvalidInput, "model file: bad count '" + s + "'");
    return static_cast<std::size_t>(*v);
}

std::string one(const std::vector<std::string>& vals, std::string_view key) {
    if (vals.size() != 1) fail(ErrorKind::InvalidInput, "model file: '" + std::string(key) + "' takes one value");
    return vals[0];
}

}  // namespace

void save_model(std::ostream& os, const ModelFile& file) {
    const auto& cfg = file.model.config;
    os << kMagic << ' ' << kFormatVersion << '\n';
    os << "kind " << file.kind << '\n';
    os << "tau " << format_double(file.tau) << '\n';
    os << "xi " << format_double(file.xi) << '\n';
    os << "huber " << (file.use_huber ? 1 : 0) << '\n';
    os << "input_dim " << cfg.input_dim << '\n';
    os << "hidden";
    for (auto w : cfg.hidden_layers) os << ' ' << w;
    os << '\n';
    os << "activation " << to_string(cfg.activation) << '\n';
    os << "dropout " << format_double(cfg.dropout_rate) << '\n';
    os << "features";
    for (const auto& f : file.feature_names) os << ' ' << f;
    os << '\n';
    for (std::size_t l = 0; l < file.model.layers.size(); ++l) {
        const auto& layer = file.model.layers[l];
        os << "layer " << l << ' ' << layer.weights.rows() << ' ' << layer.weights.cols() << '\n';
        for (Eigen::Index i = 0; i < layer.weights.rows(); ++i) {
            for (Eigen::Index j = 0; j < layer.weights.cols(); ++j)
                os << (j ? " " : "") << format_double(layer.weights(i, j));
            os << '\n';
        }
        os << "bias";
        for (Eigen::Index j = 0; j < layer.bias.size(); ++j) os << ' ' << format_double(layer.bias(j));
        os << '\n';
    }
}

ModelFile load_model(std::istream& is) {
    ModelFile file;
    {
        const auto header = read_keyed(is, kMagic);
        if (header.size() != 1 || to_size(header[0]) != kFormatVersion)
            fail(ErrorKind::InvalidInput, "model file: unsupported format version");
    }
    file.kind = one(read_keyed(is, "kind"), "kind");
    if (file.kind != "deep" && file.kind != "linear")
        fail(ErrorKind::InvalidInput, "model file: unknown kind '" + file.kind + "'");
    file.tau = to_double(one(read_keyed(is, "tau"), "tau"));
    file.xi = to_double(one(read_keyed(is, "xi"), "xi"));
    file.use_huber = to_size(one(read_keyed(is, "huber"), "huber")) != 0;

    auto& cfg = file.model.config;
    cfg.input_dim = to_size(one(read_keyed(is, "input_dim"), "input_dim"));
    for (const auto& w : read_keyed(is, "hidden")) cfg.hidden_layers.push_back(to_size(w));
    cfg.activation = parse_activation(one(read_keyed(is, "activation"), "activation"));
    cfg.dropout_rate = to_double(one(read_keyed(is, "dropout"), "dropout"));
    file.feature_names = read_keyed(is, "features");
    try {
        cfg.validate();
    } catch (const Error& e) {
        fail(ErrorKind::InvalidInput, std::string("model file: ") + e.what());
    }
    if (file.feature_names.size() != cfg.input_dim)
        fail(ErrorKind::InvalidInput, "model file: feature count does not match input_dim");

    const auto widths = layer_widths(cfg);
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        const auto head = read_keyed(is, "layer");
        if (head.size() != 3 || to_size(head[0]) != l || to_size(head[1]) != widths[l] ||
            to_size(head[2]) != widths[l + 1])
            fail(ErrorKind::InvalidInput, "model file: layer " + std::to_string(l) + " header mismatch");
        const auto rows = static_cast<Eigen::Index>(widths[l]);
        const auto cols = static_cast<Eigen::Index>(widths[l + 1]);
        DenseLayer layer{Eigen::MatrixXd(rows, cols), Eigen::VectorXd(cols)};
        for (Eigen::Index i = 0; i < rows; ++i) {
            std::istringstream ss(read_line(is, "weights"));
            Eigen::Index j = 0;
            for (std::string tok; ss >> tok; ++j) {
                if (j >= cols) fail(ErrorKind::InvalidInput, "model file: too many weights in a row");
                layer.weights(i, j) = to_double(tok);
            }
            if (j != cols) fail(ErrorKind::InvalidInput, "model file: too few weights in a row");
        }
        const auto bias = read_keyed(is, "bias");
        if (static_cast<Eigen::Index>(bias.size()) != cols)
            fail(ErrorKind::InvalidInput, "model file: bias length mismatch");
        for (Eigen::Index j = 0; j < cols; ++j) layer.bias(j) = to_double(bias[j]);
        if (!layer.weights.allFinite() || !layer.bias.allFinite())
            fail(ErrorKind::InvalidInput, "model file: non-finite parameter");
        file.model.layers.push_back(std::move(layer));
    }
    return file;
}

void save_model(const std::string& path, const ModelFile& file) {
    std::ofstream os(path, std::ios::binary);
    if (!os) fail(ErrorKind::InvalidInput, "cannot open '" + path + "' for writing");
    save_model(os, file);
}

ModelFile load_model(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail(ErrorKind::InvalidInput, "cannot open model file '" + path + "'");
    return load_model(is);
}

}  // namespace dcqr
