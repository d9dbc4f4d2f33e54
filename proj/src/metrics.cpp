#include "dcqr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>

#include "dcqr/error.hpp"
#include "dcqr/loss.hpp"
#include "dcqr/text.hpp"

namespace dcqr {

namespace {

void require_aligned(const Dataset& data, std::size_t n, const char* who) {
    require(data.size() == n, ErrorKind::InvalidInput,
            std::string(who) + ": " + std::to_string(n) + " predictions for " + std::to_string(data.size()) + " rows");
}

class Fenwick {
public:
    explicit Fenwick(std::size_t n) : tree_(n + 1, 0) {}
    void add(std::size_t i) {
        for (++i; i < tree_.size(); i += i & (~i + 1)) ++tree_[i];
    }
    // count of inserted ranks <= i
    std::size_t prefix(std::size_t i) const {
        std::size_t s = 0;
        for (++i; i > 0; i -= i & (~i + 1)) s += tree_[i];
        return s;
    }

private:
    std::vector<std::size_t> tree_;
};

}  // namespace

CIndex c_index(const Dataset& data, std::span<const double> preds) {
    require_aligned(data, preds.size(), "c_index");
    const std::size_t n = preds.size();

    std::vector<double> levels(preds.begin(), preds.end());
    std::sort(levels.begin(), levels.end());
    levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
    auto rank_of = [&](double v) {
        return static_cast<std::size_t>(std::lower_bound(levels.begin(), levels.end(), v) - levels.begin());
    };

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return data.records[a].time > data.records[b].time; });

    // Sweep from the latest time; the tree holds predictions of rows with
    // strictly larger observed time than the current group.
    Fenwick tree(levels.size());
    std::size_t inserted = 0;
    std::size_t comparable = 0;
    std::size_t greater = 0;
    std::size_t equal = 0;
    for (std::size_t k = 0; k < n;) {
        std::size_t end = k;
        const double t = data.records[order[k]].time;
        while (end < n && data.records[order[end]].time == t) ++end;
        for (std::size_t q = k; q < end; ++q) {
            const std::size_t i = order[q];
            if (data.records[i].event != 1) continue;
            const std::size_t r = rank_of(preds[i]);
            const std::size_t le = tree.prefix(r);
            const std::size_t lt = r == 0 ? 0 : tree.prefix(r - 1);
            comparable += inserted;
            greater += inserted - le;
            equal += le - lt;
        }
        for (std::size_t q = k; q < end; ++q) {
            tree.add(rank_of(preds[order[q]]));
            ++inserted;
        }
        k = end;
    }
    if (comparable == 0) fail(ErrorKind::UndefinedMetric, "c_index: no comparable pairs");
    const double mass = static_cast<double>(greater) + 0.5 * static_cast<double>(equal);
    return CIndex{mass / static_cast<double>(comparable), comparable};
}

double mmse(const Dataset& data, std::span<const double> log_preds) {
    require_aligned(data, log_preds.size(), "mmse");
    double total = 0.0;
    std::size_t events = 0;
    for (std::size_t i = 0; i < log_preds.size(); ++i) {
        const auto& r = data.records[i];
        if (r.event != 1) continue;
        const double d = std::log(r.time) - log_preds[i];
        total += d * d;
        ++events;
    }
    if (events == 0) fail(ErrorKind::UndefinedMetric, "mmse: no event observations");
    return total / static_cast<double>(events);
}

QuantileLoss quantile_loss(const Dataset& data, std::span<const double> log_preds, double tau, double cap_u) {
    require_aligned(data, log_preds.size(), "quantile_loss");
    require(cap_u > 0.0, ErrorKind::InvalidInput, "quantile_loss: cap_u must be > 0");
    require(tau > 0.0 && tau < 1.0, ErrorKind::InvalidConfig, "quantile_loss: tau must lie in (0, 1)");
    const auto weights = ipcw_weights(data);
    double total = 0.0;
    bool any = false;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (weights[i] == 0.0) continue;
        any = true;
        const double capped = std::log(std::min(data.records[i].time, cap_u));
        total += weights[i] * check(capped - log_preds[i], tau);
    }
    return QuantileLoss{total / static_cast<double>(data.size()), !any};
}

double default_cap_u(const Dataset& data) {
    require(!data.records.empty(), ErrorKind::InvalidInput, "default_cap_u: dataset is empty");
    std::vector<double> t;
    t.reserve(data.size());
    for (const auto& r : data.records) t.push_back(r.time);
    std::sort(t.begin(), t.end());
    const double h = 0.95 * static_cast<double>(t.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, t.size() - 1);
    return t[lo] + (h - static_cast<double>(lo)) * (t[hi] - t[lo]);
}

MetricsReport evaluate_predictions(const Dataset& data, std::span<const double> log_preds, double tau,
                                   std::optional<double> cap_u) {
    data.validate();
    MetricsReport rep;
    rep.tau = tau;
    rep.cap_u = cap_u.value_or(default_cap_u(data));
    rep.n_events = data.n_events();
    try {
        const auto c = c_index(data, log_preds);
        rep.c_index = c.value;
        rep.n_comparable_pairs = c.n_comparable;
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::UndefinedMetric) throw;
    }
    if (rep.n_events > 0) rep.mmse = mmse(data, log_preds);
    rep.quantile_loss = quantile_loss(data, log_preds, tau, rep.cap_u).value;
    return rep;
}

namespace {
std::string opt_str(const std::optional<double>& v) { return v ? format_double(*v) : "NA"; }
}  // namespace

void write_metrics_csv(std::ostream& os, const MetricsReport& r) {
    os << "c_index,mmse,quantile_loss,n_events,n_comparable,tau,cap_u\n";
    os << opt_str(r.c_index) << ',' << opt_str(r.mmse) << ',' << format_double(r.quantile_loss) << ','
       << r.n_events << ',' << r.n_comparable_pairs << ',' << format_double(r.tau) << ','
       << format_double(r.cap_u) << '\n';
}

void print_metrics_table(std::ostream& os, const MetricsReport& r) {
    auto num = [](const std::optional<double>& v) {
        if (!v) return std::string("NA");
        std::ostringstream ss;
        ss << std::fixed << std::setprecision(6) << *v;
        return ss.str();
    };
    os << std::left << std::setw(16) << "c_index" << num(r.c_index) << '\n'
       << std::setw(16) << "mmse" << num(r.mmse) << '\n'
       << std::setw(16) << "quantile_loss" << num(r.quantile_loss) << '\n'
       << std::setw(16) << "n_events" << r.n_events << '\n'
       << std::setw(16) << "n_comparable" << r.n_comparable_pairs << '\n';
}

}  // namespace dcqr
