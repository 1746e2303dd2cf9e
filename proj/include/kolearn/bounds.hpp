#pragma once

// Worst-case composed-approximation-error bounds for two-stage operator
// chains f(x) = g(u(x)), where the inner vector function and/or the outer
// scalar function are replaced by approximations. Provides the per-term
// sigmoid-layer bound, its Lipschitz generalization, a grid sweep of the
// underlying sigmoid inequality, and an empirical verifier that measures
// component error budgets by sampling and checks the composed deviation
// never exceeds the theoretical bound.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "kolearn/common.hpp"
#include "kolearn/nn.hpp"

namespace kolearn::bounds {

// ---------------------------------------------------------------------------
// Specs

/// Per-component inner error bounds and the outer approximation error bound.
struct ErrorBudget {
    Vec eps_u;         // bounds on |e_{u_j}|, one per inner component
    double eps_g = 0;  // bound on the outer approximation error

    void validate() const {
        for (double e : eps_u)
            if (!(e >= 0.0)) throw ConfigInvalid("ErrorBudget: eps_u entries must be >= 0");
        if (!(eps_g >= 0.0)) throw ConfigInvalid("ErrorBudget: eps_g must be >= 0");
    }
};

/// Outer stage of the chain as a weighted sigmoid superposition:
/// G(y) = sum_j g_j * s(y_j) + g_bias. The slope bound is the sigmoid's.
struct OuterLayerSpec {
    Vec g_weights;
    double g_bias = 0.0;
    double slope_bound = nn::kSigmoidSlopeBound;

    double operator()(const Vec& y) const {
        if (y.size() != g_weights.size())
            throw DimensionMismatch("OuterLayerSpec: input size");
        double v = g_bias;
        for (std::size_t j = 0; j < y.size(); ++j) v += g_weights[j] * nn::sigmoid(y[j]);
        return v;
    }
};

/// General outer stage characterized only by a Lipschitz constant.
struct LipschitzSpec {
    double l_g = 0.0;
};

// ---------------------------------------------------------------------------
// The inequality and the composed bounds

/// g_j*s(x+e) - g_j*s(x) - |g_j|*l_s*|e|; nonpositive for every g_j, x, e.
inline double sigmoid_inequality_residual(double g_j, double x, double e) {
    return g_j * nn::sigmoid(x + e) - g_j * nn::sigmoid(x) -
           std::abs(g_j) * nn::kSigmoidSlopeBound * std::abs(e);
}

/// Worst-case composed error when the outer stage is a sigmoid layer:
/// sum_j |g_j| * l_s * eps_u_j + eps_g.
inline double composed_bound_sigmoid(const OuterLayerSpec& outer,
                                     const ErrorBudget& budget) {
    budget.validate();
    if (outer.g_weights.size() != budget.eps_u.size())
        throw DimensionMismatch("composed_bound_sigmoid: weights vs eps_u");
    double b = budget.eps_g;
    for (std::size_t j = 0; j < budget.eps_u.size(); ++j)
        b += std::abs(outer.g_weights[j]) * outer.slope_bound * budget.eps_u[j];
    return b;
}

/// L1-norm form for a general Lipschitz outer stage:
/// l_g * sum_j eps_u_j + eps_g (eps_g is 0 when the outer stage is known).
inline double composed_bound_lipschitz(const LipschitzSpec& spec,
                                       const ErrorBudget& budget) {
    budget.validate();
    if (!(spec.l_g >= 0.0)) throw ConfigInvalid("composed_bound_lipschitz: l_g < 0");
    double s = 0.0;
    for (double e : budget.eps_u) s += e;
    return spec.l_g * s + budget.eps_g;
}

// ---------------------------------------------------------------------------
// Grid sweep of the inequality

struct GridSweepResult {
    double max_residual = -std::numeric_limits<double>::infinity();
    std::map<double, double> per_g_max;  // g value -> max residual over the grid
};

namespace detail {

/// Grid values snapped to integer multiples of step so that 0 lies exactly on
/// the grid whenever the range straddles it.
inline std::vector<double> snapped_grid(double lo, double hi, double step) {
    if (!(step > 0.0)) throw ConfigInvalid("grid: step must be > 0");
    const long long ilo = std::llround(lo / step);
    const long long ihi = std::llround(hi / step);
    std::vector<double> v;
    v.reserve(static_cast<std::size_t>(ihi - ilo + 1));
    for (long long i = ilo; i <= ihi; ++i) v.push_back(static_cast<double>(i) * step);
    return v;
}

inline std::string format_g(double g) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%+g", g);
    return buf;
}

}  // namespace detail

/// Sweeps the inequality residual over an (x, e) grid for each g value,
/// optionally dumping one CSV per g (columns x,e,normalized_residual, the
/// residual divided by |g|).
inline GridSweepResult sweep_inequality_grid(
    const std::vector<double>& g_values, double x_lo, double x_hi, double e_lo,
    double e_hi, double step,
    const std::optional<std::filesystem::path>& csv_dir = std::nullopt) {
    const std::vector<double> xs = detail::snapped_grid(x_lo, x_hi, step);
    const std::vector<double> es = detail::snapped_grid(e_lo, e_hi, step);

    GridSweepResult result;
    for (double g : g_values) {
        std::ofstream csv;
        if (csv_dir) {
            std::filesystem::create_directories(*csv_dir);
            const auto path = *csv_dir / ("inequality_g" + detail::format_g(g) + ".csv");
            csv.open(path);
            if (!csv) throw IoError("sweep_inequality_grid: cannot open " + path.string());
            csv << "x,e,normalized_residual\n";
        }
        const double abs_g = std::abs(g);
        double g_max = -std::numeric_limits<double>::infinity();
        for (double x : xs) {
            for (double e : es) {
                const double r = sigmoid_inequality_residual(g, x, e);
                g_max = std::max(g_max, r);
                if (csv.is_open()) {
                    char line[96];
                    std::snprintf(line, sizeof(line), "%.17g,%.17g,%.17g\n", x, e,
                                  r / abs_g);
                    csv << line;
                }
            }
        }
        result.per_g_max[g] = g_max;
        result.max_residual = std::max(result.max_residual, g_max);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Empirical verification

struct Box {
    Vec lo, hi;

    std::size_t dim() const { return lo.size(); }

    void validate() const {
        if (lo.size() != hi.size() || lo.empty())
            throw DimensionMismatch("Box: lo/hi sizes");
        for (std::size_t i = 0; i < lo.size(); ++i)
            if (!(lo[i] <= hi[i])) throw ConfigInvalid("Box: lo > hi");
    }

    Vec sample(Rng& rng) const {
        Vec x(lo.size());
        for (std::size_t i = 0; i < lo.size(); ++i) x[i] = rng.uniform(lo[i], hi[i]);
        return x;
    }
};

struct BoundReport {
    double theoretical_bound = 0.0;
    double empirical_max_dev = 0.0;
    std::size_t n_samples = 0;
    double margin = 0.0;  // theoretical - empirical
    bool falsified = false;
    Vec eps_u;          // measured per-component inner budgets
    double eps_g = 0.0;  // measured outer budget

    nlohmann::json to_json() const {
        return {{"theoretical_bound", theoretical_bound},
                {"empirical_max_dev", empirical_max_dev},
                {"n_samples", n_samples},
                {"margin", margin},
                {"falsified", falsified},
                {"eps_u", eps_u},
                {"eps_g", eps_g}};
    }
};

using VectorFn = std::function<Vec(const Vec&)>;
using ScalarFn = std::function<double(const Vec&)>;

/// A two-stage chain together with its approximations. The outer approximator
/// is a sigmoid layer so the per-term bound applies with its weights.
struct FunctionPair {
    std::size_t input_dim = 0;
    std::size_t inner_dim = 0;
    VectorFn true_inner;
    VectorFn approx_inner;
    ScalarFn true_outer;
    OuterLayerSpec approx_outer;
};

namespace detail {

struct MeasuredBudgets {
    ErrorBudget budget;   // eps_u sampled over the domain, eps_g over the padded box
    Box reachable;        // observed inner-approximation output range, padded
};

inline MeasuredBudgets measure_budgets(const FunctionPair& fp, const Box& domain,
                                       std::size_t n, std::uint64_t seed) {
    MeasuredBudgets m;
    m.budget.eps_u.assign(fp.inner_dim, 0.0);
    Vec lo(fp.inner_dim, std::numeric_limits<double>::infinity());
    Vec hi(fp.inner_dim, -std::numeric_limits<double>::infinity());

    Rng rng(derive_seed(seed, 1));
    for (std::size_t i = 0; i < n; ++i) {
        const Vec x = domain.sample(rng);
        const Vec u = fp.true_inner(x);
        const Vec U = fp.approx_inner(x);
        if (u.size() != fp.inner_dim || U.size() != fp.inner_dim)
            throw DimensionMismatch("verify: inner output dim");
        for (std::size_t j = 0; j < fp.inner_dim; ++j) {
            m.budget.eps_u[j] = std::max(m.budget.eps_u[j], std::abs(U[j] - u[j]));
            lo[j] = std::min(lo[j], U[j]);
            hi[j] = std::max(hi[j], U[j]);
        }
    }
    // The outer pair is compared on the reachable range of the inner
    // approximation padded by the measured inner budgets: the bound evaluates
    // the outer stage at true inner outputs, which live inside that pad.
    for (std::size_t j = 0; j < fp.inner_dim; ++j) {
        lo[j] -= m.budget.eps_u[j];
        hi[j] += m.budget.eps_u[j];
    }
    m.reachable = Box{std::move(lo), std::move(hi)};

    Rng outer_rng(derive_seed(seed, 2));
    m.budget.eps_g = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const Vec y = m.reachable.sample(outer_rng);
        m.budget.eps_g =
            std::max(m.budget.eps_g, std::abs(fp.approx_outer(y) - fp.true_outer(y)));
    }
    return m;
}

inline double max_deviation(const std::function<double(const Vec&)>& a,
                            const std::function<double(const Vec&)>& b,
                            const Box& domain, std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    double dev = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const Vec x = domain.sample(rng);
        dev = std::max(dev, std::abs(a(x) - b(x)));
    }
    return dev;
}

}  // namespace detail

/// Measures the component error budgets by sampling, computes the theoretical
/// composed bound and the empirical max deviation of the fully approximated
/// chain on fresh samples. Throws FalsificationError if the deviation exceeds
/// the bound — that indicates an implementation bug, never a tight bound.
inline BoundReport verify_bound_empirically(const FunctionPair& fp, const Box& domain,
                                            std::size_t n, std::uint64_t seed) {
    if (n == 0) throw ConfigInvalid("verify_bound_empirically: n must be > 0");
    domain.validate();
    const auto measured = detail::measure_budgets(fp, domain, n, seed);

    BoundReport report;
    report.eps_u = measured.budget.eps_u;
    report.eps_g = measured.budget.eps_g;
    report.n_samples = n;
    report.theoretical_bound = composed_bound_sigmoid(fp.approx_outer, measured.budget);
    report.empirical_max_dev = detail::max_deviation(
        [&](const Vec& x) { return fp.approx_outer(fp.approx_inner(x)); },
        [&](const Vec& x) { return fp.true_outer(fp.true_inner(x)); }, domain, n,
        derive_seed(seed, 3));
    report.margin = report.theoretical_bound - report.empirical_max_dev;
    report.falsified = report.margin < 0.0;
    if (report.falsified)
        throw FalsificationError(
            "bound falsified: empirical " + std::to_string(report.empirical_max_dev) +
            " > theoretical " + std::to_string(report.theoretical_bound));
    return report;
}

/// Reports for the three approximation configurations of the same pair:
/// full chain (both stages approximated), known outer stage, known inner
/// stage. The dropped-term bounds of the partial configurations are never
/// larger than the full bound.
struct ConfigurationReports {
    BoundReport full;         // approx outer of approx inner
    BoundReport known_outer;  // true outer of approx inner
    BoundReport known_inner;  // approx outer of true inner
};

inline ConfigurationReports verify_configurations(const FunctionPair& fp,
                                                  const Box& domain, std::size_t n,
                                                  std::uint64_t seed) {
    if (n == 0) throw ConfigInvalid("verify_configurations: n must be > 0");
    domain.validate();
    const auto measured = detail::measure_budgets(fp, domain, n, seed);

    ConfigurationReports out;
    const std::uint64_t fresh = derive_seed(seed, 3);
    auto fill = [&](BoundReport& r, double bound, const ScalarFn& chain) {
        r.eps_u = measured.budget.eps_u;
        r.eps_g = measured.budget.eps_g;
        r.n_samples = n;
        r.theoretical_bound = bound;
        r.empirical_max_dev = detail::max_deviation(
            chain, [&](const Vec& x) { return fp.true_outer(fp.true_inner(x)); },
            domain, n, fresh);
        r.margin = r.theoretical_bound - r.empirical_max_dev;
        r.falsified = r.margin < 0.0;
    };

    ErrorBudget inner_only = measured.budget;
    inner_only.eps_g = 0.0;
    ErrorBudget outer_only = measured.budget;
    std::fill(outer_only.eps_u.begin(), outer_only.eps_u.end(), 0.0);

    fill(out.full, composed_bound_sigmoid(fp.approx_outer, measured.budget),
         [&](const Vec& x) { return fp.approx_outer(fp.approx_inner(x)); });
    fill(out.known_outer, composed_bound_sigmoid(fp.approx_outer, inner_only),
         [&](const Vec& x) { return fp.true_outer(fp.approx_inner(x)); });
    fill(out.known_inner, composed_bound_sigmoid(fp.approx_outer, outer_only),
         [&](const Vec& x) { return fp.approx_outer(fp.true_inner(x)); });

    if (out.full.falsified)
        throw FalsificationError("bound falsified on full chain: empirical " +
                                 std::to_string(out.full.empirical_max_dev) +
                                 " > theoretical " +
                                 std::to_string(out.full.theoretical_bound));
    return out;
}

// ---------------------------------------------------------------------------
// Seeded random two-stage pairs for verification sweeps. The approximations
// are small sigmoid networks; the true functions add smooth bounded
// perturbations, so sampled maxima estimate the budgets well.

struct SeededPair {
    FunctionPair pair;
    Box domain;
};

inline SeededPair random_function_pair(std::uint64_t seed, std::size_t max_dim = 4) {
    if (max_dim == 0) throw ConfigInvalid("random_function_pair: max_dim must be > 0");
    Rng rng(seed);
    const std::size_t d = 1 + static_cast<std::size_t>(rng.next_below(max_dim));
    const std::size_t m = 1 + static_cast<std::size_t>(rng.next_below(max_dim));
    const std::size_t hidden = 3 + static_cast<std::size_t>(rng.next_below(6));

    // Inner approximation: one hidden sigmoid layer, identity combination.
    nn::MlpModel inner;
    {
        nn::DenseLayer l0;
        l0.in_dim = d;
        l0.out_dim = hidden;
        l0.activation = nn::Activation::Sigmoid;
        l0.weights.resize(hidden * d);
        for (double& w : l0.weights) w = rng.uniform(-1.0, 1.0);
        l0.bias.resize(hidden);
        for (double& b : l0.bias) b = rng.uniform(-1.0, 1.0);
        nn::DenseLayer l1;
        l1.in_dim = hidden;
        l1.out_dim = m;
        l1.activation = nn::Activation::Identity;
        l1.weights.resize(m * hidden);
        for (double& w : l1.weights) w = rng.uniform(-1.0, 1.0);
        l1.bias.resize(m);
        for (double& b : l1.bias) b = rng.uniform(-0.5, 0.5);
        inner.layers = {std::move(l0), std::move(l1)};
    }

    // Smooth bounded perturbations turning the approximations into "truths".
    struct Wave {
        double amp, omega, phase;
        Vec dir;
    };
    auto make_wave = [&](std::size_t dim, double amp_lo, double amp_hi, double om_lo,
                         double om_hi) {
        Wave w;
        w.amp = rng.uniform(amp_lo, amp_hi) * (rng.next_below(2) ? 1.0 : -1.0);
        w.omega = rng.uniform(om_lo, om_hi);
        w.phase = rng.uniform(0.0, 6.283185307179586);
        w.dir.resize(dim);
        double norm = 0.0;
        for (double& c : w.dir) {
            c = rng.uniform(-1.0, 1.0);
            norm += c * c;
        }
        norm = std::sqrt(std::max(norm, 1e-12));
        for (double& c : w.dir) c /= norm;
        return w;
    };
    std::vector<Wave> inner_waves;
    for (std::size_t j = 0; j < m; ++j)
        inner_waves.push_back(make_wave(d, 0.01, 0.1, 0.3, 1.0));
    const Wave outer_wave = make_wave(m, 0.01, 0.05, 0.2, 0.5);

    OuterLayerSpec outer;
    outer.g_weights.resize(m);
    for (double& g : outer.g_weights)
        g = rng.uniform(0.5, 2.0) * (rng.next_below(2) ? 1.0 : -1.0);
    outer.g_bias = rng.uniform(-1.0, 1.0);

    auto eval_wave = [](const Wave& w, const Vec& x) {
        double t = w.phase;
        for (std::size_t i = 0; i < x.size(); ++i) t += w.omega * w.dir[i] * x[i];
        return w.amp * std::sin(t);
    };

    SeededPair sp;
    sp.pair.input_dim = d;
    sp.pair.inner_dim = m;
    sp.pair.approx_inner = [inner](const Vec& x) { return inner.forward(x); };
    sp.pair.true_inner = [inner, inner_waves, eval_wave](const Vec& x) {
        Vec y = inner.forward(x);
        for (std::size_t j = 0; j < y.size(); ++j) y[j] += eval_wave(inner_waves[j], x);
        return y;
    };
    sp.pair.approx_outer = outer;
    sp.pair.true_outer = [outer, outer_wave, eval_wave](const Vec& y) {
        return outer(y) + eval_wave(outer_wave, y);
    };
    sp.domain = Box{Vec(d, -2.0), Vec(d, 2.0)};
    return sp;
}

}  // namespace kolearn::bounds
