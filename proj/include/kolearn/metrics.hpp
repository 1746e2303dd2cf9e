#pragma once

// Prediction-quality metrics: Pearson's sample correlation coefficient and
// the structural similarity index (Gaussian-windowed, valid windows only).

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "kolearn/common.hpp"

namespace kolearn::metrics {

/// Standard sample correlation coefficient, two-pass. Errors on constant
/// input rather than returning NaN.
inline double pearson_r(std::span<const double> pred, std::span<const double> truth) {
    if (pred.size() != truth.size()) throw DimensionMismatch("pearson_r: sizes");
    const std::size_t n = pred.size();
    if (n < 2) throw DegenerateInput("pearson_r: need at least two samples");

    double mp = 0.0, mt = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mp += pred[i];
        mt += truth[i];
    }
    mp /= static_cast<double>(n);
    mt /= static_cast<double>(n);

    double spp = 0.0, stt = 0.0, spt = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dp = pred[i] - mp;
        const double dt = truth[i] - mt;
        spp += dp * dp;
        stt += dt * dt;
        spt += dp * dt;
    }
    if (!(stt > 0.0)) throw DegenerateInput("pearson_r: ground truth is constant");
    if (!(spp > 0.0)) throw DegenerateInput("pearson_r: prediction is constant");
    return spt / std::sqrt(spp * stt);
}

struct SsimConfig {
    std::size_t window_size = 11;  // odd
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    std::optional<double> dynamic_range;  // default: truth max - min

    void validate() const {
        if (window_size < 3 || window_size % 2 == 0)
            throw ConfigInvalid("SsimConfig: window size must be odd and >= 3");
        if (!(sigma > 0.0) || !(k1 > 0.0) || !(k2 > 0.0))
            throw ConfigInvalid("SsimConfig: sigma/k1/k2 must be positive");
    }
};

namespace detail {

inline std::vector<double> gaussian_window(std::size_t size, double sigma) {
    std::vector<double> w(size * size);
    const double c = (static_cast<double>(size) - 1.0) / 2.0;
    double sum = 0.0;
    for (std::size_t y = 0; y < size; ++y)
        for (std::size_t x = 0; x < size; ++x) {
            const double dx = static_cast<double>(x) - c;
            const double dy = static_cast<double>(y) - c;
            w[y * size + x] = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
            sum += w[y * size + x];
        }
    for (double& v : w) v /= sum;
    return w;
}

}  // namespace detail

/// Mean SSIM over all valid (fully interior) window positions of two
/// single-channel images stored row-major. No border padding.
inline double ssim(std::span<const double> pred, std::span<const double> truth,
                   std::size_t width, std::size_t height, const SsimConfig& cfg = {}) {
    cfg.validate();
    if (pred.size() != truth.size() || pred.size() != width * height)
        throw DimensionMismatch("ssim: image sizes");
    const std::size_t win = cfg.window_size;
    if (width < win || height < win) throw ImageTooSmall("ssim: image smaller than window");

    double range;
    if (cfg.dynamic_range) {
        range = *cfg.dynamic_range;
    } else {
        double lo = truth[0], hi = truth[0];
        for (double v : truth) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        range = hi - lo;
    }
    if (!(range > 0.0)) throw DegenerateInput("ssim: zero dynamic range");

    const double c1 = (cfg.k1 * range) * (cfg.k1 * range);
    const double c2 = (cfg.k2 * range) * (cfg.k2 * range);
    const std::vector<double> w = detail::gaussian_window(win, cfg.sigma);

    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t oy = 0; oy + win <= height; ++oy) {
        for (std::size_t ox = 0; ox + win <= width; ++ox) {
            double mx = 0.0, my = 0.0;
            for (std::size_t wy = 0; wy < win; ++wy)
                for (std::size_t wx = 0; wx < win; ++wx) {
                    const double wv = w[wy * win + wx];
                    const std::size_t idx = (oy + wy) * width + (ox + wx);
                    mx += wv * pred[idx];
                    my += wv * truth[idx];
                }
            double vx = 0.0, vy = 0.0, cov = 0.0;
            for (std::size_t wy = 0; wy < win; ++wy)
                for (std::size_t wx = 0; wx < win; ++wx) {
                    const double wv = w[wy * win + wx];
                    const std::size_t idx = (oy + wy) * width + (ox + wx);
                    const double dx = pred[idx] - mx;
                    const double dy = truth[idx] - my;
                    vx += wv * dx * dx;
                    vy += wv * dy * dy;
                    cov += wv * dx * dy;
                }
            const double num = (2.0 * mx * my + c1) * (2.0 * cov + c2);
            const double den = (mx * mx + my * my + c1) * (vx + vy + c2);
            total += num / den;
            ++count;
        }
    }
    return total / static_cast<double>(count);
}

}  // namespace kolearn::metrics
