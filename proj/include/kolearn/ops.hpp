#pragma once

// Catalog of fixed, analytically differentiable operators used as prior
// knowledge in pipelines: the per-bin negative-log transform that maps
// detector intensities into the line-integral domain, and the polynomial
// feature expansion. Plus the two pieces of pipeline plumbing the experiment
// needs (per-feature standardization, intensity floor).

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "kolearn/common.hpp"
#include "kolearn/nn.hpp"

namespace kolearn::ops {

// ---------------------------------------------------------------------------
// Negative-log transform: component b maps I_b to -ln(I_b / i0_b), given the
// calibrated flat-field intensity per bin. Strict about non-positive inputs;
// clamping is an application policy (see IntensityFloor).

struct NegLogTransform {
    Vec i0_per_bin;

    explicit NegLogTransform(Vec i0) : i0_per_bin(std::move(i0)) {
        if (i0_per_bin.empty())
            throw ConfigInvalid("NegLogTransform: empty flat field");
        for (double v : i0_per_bin)
            if (!(v > 0.0))
                throw NonPositiveIntensity("NegLogTransform: flat field must be > 0");
    }

    std::size_t dim() const { return i0_per_bin.size(); }

    Vec forward(const Vec& intensities) const {
        if (intensities.size() != dim())
            throw DimensionMismatch("NegLogTransform: input size");
        Vec out(dim());
        for (std::size_t b = 0; b < dim(); ++b) {
            if (!(intensities[b] > 0.0))
                throw NonPositiveIntensity("NegLogTransform: intensity <= 0 in bin " +
                                           std::to_string(b));
            out[b] = -std::log(intensities[b] / i0_per_bin[b]);
        }
        return out;
    }

    Vec jvp(const Vec& intensities, const Vec& upstream) const {
        if (intensities.size() != dim() || upstream.size() != dim())
            throw DimensionMismatch("NegLogTransform: jvp sizes");
        Vec out(dim());
        for (std::size_t b = 0; b < dim(); ++b) {
            if (!(intensities[b] > 0.0))
                throw NonPositiveIntensity("NegLogTransform: intensity <= 0 in bin " +
                                           std::to_string(b));
            out[b] = upstream[b] * (-1.0 / intensities[b]);
        }
        return out;
    }

    nn::OperatorNode node() const {
        nn::OperatorNode n;
        n.name = "neg_log";
        n.in_dim = n.out_dim = dim();
        n.forward = [t = *this](const Vec& x) { return t.forward(x); };
        n.jvp = [t = *this](const Vec& x, const Vec& u) { return t.jvp(x, u); };
        return n;
    }
};

// ---------------------------------------------------------------------------
// Polynomial expansion: all monomials of total degree 1..degree, in graded
// order (degree ascending, exponent vectors in descending lexicographic order
// within a degree). The constant monomial is excluded; network biases cover
// it. Without cross terms only single-variable powers are kept.

struct PolynomialExpansion {
    std::size_t input_dim = 0;
    std::size_t degree = 0;
    bool include_cross_terms = true;
    std::vector<std::vector<unsigned>> exponents;  // one multi-index per output

    PolynomialExpansion(std::size_t input_dim_, std::size_t degree_,
                        bool include_cross_terms_)
        : input_dim(input_dim_),
          degree(degree_),
          include_cross_terms(include_cross_terms_) {
        if (input_dim == 0 || degree == 0)
            throw ConfigInvalid("PolynomialExpansion: input_dim and degree must be > 0");
        std::vector<unsigned> alpha(input_dim, 0);
        for (std::size_t d = 1; d <= degree; ++d) emit(alpha, 0, d);
    }

    std::size_t output_dim() const { return exponents.size(); }

    /// Closed-form output count: C(n+d, d) - 1 with cross terms, n*d without.
    static std::size_t expected_output_dim(std::size_t n, std::size_t d, bool cross) {
        if (!cross) return n * d;
        // C(n+d, d) via incremental products, exact in 64-bit for desk scales.
        std::size_t c = 1;
        for (std::size_t i = 1; i <= d; ++i) c = c * (n + i) / i;
        return c - 1;
    }

    Vec forward(const Vec& x) const {
        if (x.size() != input_dim) throw DimensionMismatch("PolynomialExpansion: input");
        Vec out(exponents.size());
        for (std::size_t k = 0; k < exponents.size(); ++k) out[k] = monomial(x, k);
        return out;
    }

    /// Exact analytic Jacobian-transpose product of the monomial map.
    Vec jvp(const Vec& x, const Vec& upstream) const {
        if (x.size() != input_dim || upstream.size() != exponents.size())
            throw DimensionMismatch("PolynomialExpansion: jvp sizes");
        Vec grad(input_dim, 0.0);
        for (std::size_t k = 0; k < exponents.size(); ++k) {
            const auto& alpha = exponents[k];
            for (std::size_t i = 0; i < input_dim; ++i) {
                const unsigned a = alpha[i];
                if (a == 0) continue;
                double term = static_cast<double>(a) * int_pow(x[i], a - 1);
                for (std::size_t j = 0; j < input_dim; ++j) {
                    if (j == i) continue;
                    if (alpha[j] != 0) term *= int_pow(x[j], alpha[j]);
                }
                grad[i] += upstream[k] * term;
            }
        }
        return grad;
    }

    nn::OperatorNode node() const {
        nn::OperatorNode n;
        n.name = "poly_expand";
        n.in_dim = input_dim;
        n.out_dim = output_dim();
        n.forward = [p = *this](const Vec& x) { return p.forward(x); };
        n.jvp = [p = *this](const Vec& x, const Vec& u) { return p.jvp(x, u); };
        return n;
    }

private:
    static double int_pow(double x, unsigned e) {
        double r = 1.0;
        for (unsigned i = 0; i < e; ++i) r *= x;
        return r;
    }

    double monomial(const Vec& x, std::size_t k) const {
        double v = 1.0;
        const auto& alpha = exponents[k];
        for (std::size_t i = 0; i < input_dim; ++i)
            if (alpha[i] != 0) v *= int_pow(x[i], alpha[i]);
        return v;
    }

    // Emits multi-indices of total degree `remaining` over positions pos..n-1,
    // leading exponent largest first, which yields descending lex order.
    void emit(std::vector<unsigned>& alpha, std::size_t pos, std::size_t remaining) {
        if (pos + 1 == alpha.size()) {
            alpha[pos] = static_cast<unsigned>(remaining);
            push(alpha);
            alpha[pos] = 0;
            return;
        }
        for (std::size_t a = remaining + 1; a-- > 0;) {
            alpha[pos] = static_cast<unsigned>(a);
            emit(alpha, pos + 1, remaining - a);
        }
        alpha[pos] = 0;
    }

    void push(const std::vector<unsigned>& alpha) {
        if (!include_cross_terms) {
            std::size_t nonzero = 0;
            for (unsigned a : alpha) nonzero += (a != 0);
            if (nonzero > 1) return;
        }
        exponents.push_back(alpha);
    }
};

// ---------------------------------------------------------------------------
// Per-feature standardization: (x - mean) / std, statistics fitted on the
// training split, never trainable. A constant feature gets unit scale.

struct Standardizer {
    Vec mean;
    Vec inv_std;

    static Standardizer fit(const std::vector<Vec>& samples) {
        if (samples.empty()) throw ConfigInvalid("Standardizer: no samples");
        const std::size_t d = samples.front().size();
        Standardizer s;
        s.mean.assign(d, 0.0);
        s.inv_std.assign(d, 1.0);
        for (const auto& x : samples) {
            if (x.size() != d) throw DimensionMismatch("Standardizer: ragged samples");
            for (std::size_t i = 0; i < d; ++i) s.mean[i] += x[i];
        }
        const double inv_n = 1.0 / static_cast<double>(samples.size());
        for (double& m : s.mean) m *= inv_n;
        Vec var(d, 0.0);
        for (const auto& x : samples)
            for (std::size_t i = 0; i < d; ++i) {
                const double dx = x[i] - s.mean[i];
                var[i] += dx * dx;
            }
        for (std::size_t i = 0; i < d; ++i) {
            const double sd = std::sqrt(var[i] * inv_n);
            s.inv_std[i] = sd > 1e-12 ? 1.0 / sd : 1.0;
        }
        return s;
    }

    static Standardizer identity(std::size_t dim) {
        Standardizer s;
        s.mean.assign(dim, 0.0);
        s.inv_std.assign(dim, 1.0);
        return s;
    }

    std::size_t dim() const { return mean.size(); }

    Vec forward(const Vec& x) const {
        if (x.size() != dim()) throw DimensionMismatch("Standardizer: input size");
        Vec out(dim());
        for (std::size_t i = 0; i < dim(); ++i) out[i] = (x[i] - mean[i]) * inv_std[i];
        return out;
    }

    Vec jvp(const Vec&, const Vec& upstream) const {
        if (upstream.size() != dim()) throw DimensionMismatch("Standardizer: jvp size");
        Vec out(dim());
        for (std::size_t i = 0; i < dim(); ++i) out[i] = upstream[i] * inv_std[i];
        return out;
    }

    nn::OperatorNode node() const {
        nn::OperatorNode n;
        n.name = "standardize";
        n.in_dim = n.out_dim = dim();
        n.forward = [s = *this](const Vec& x) { return s.forward(x); };
        n.jvp = [s = *this](const Vec& x, const Vec& u) { return s.jvp(x, u); };
        return n;
    }
};

// ---------------------------------------------------------------------------
// Intensity floor: clamps each bin at floor_scale * i0_b. Poisson-noised
// synthetic pixels can reach zero counts; the experiment pipeline clamps
// before the strict neg-log operator instead of erroring.

struct IntensityFloor {
    Vec i0_per_bin;
    double floor_scale = 1e-12;

    std::size_t dim() const { return i0_per_bin.size(); }

    Vec forward(const Vec& x) const {
        if (x.size() != dim()) throw DimensionMismatch("IntensityFloor: input size");
        Vec out(dim());
        for (std::size_t b = 0; b < dim(); ++b)
            out[b] = std::max(x[b], floor_scale * i0_per_bin[b]);
        return out;
    }

    Vec jvp(const Vec& x, const Vec& upstream) const {
        if (x.size() != dim() || upstream.size() != dim())
            throw DimensionMismatch("IntensityFloor: jvp sizes");
        Vec out(dim());
        for (std::size_t b = 0; b < dim(); ++b)
            out[b] = x[b] > floor_scale * i0_per_bin[b] ? upstream[b] : 0.0;
        return out;
    }

    nn::OperatorNode node() const {
        nn::OperatorNode n;
        n.name = "intensity_floor";
        n.in_dim = n.out_dim = dim();
        n.forward = [f = *this](const Vec& x) { return f.forward(x); };
        n.jvp = [f = *this](const Vec& x, const Vec& u) { return f.jvp(x, u); };
        return n;
    }
};

}  // namespace kolearn::ops
