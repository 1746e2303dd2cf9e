#pragma once

// Minimal feed-forward sigmoid network with reverse-mode gradients.
// A Pipeline is a linear chain of stages; each stage is either a fixed
// OperatorNode (no trainable parameters, contributes gradients through its
// jvp) or the single trainable MlpModel. This is the smallest structure that
// supports embedding analytically known transforms anywhere in the chain.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "kolearn/common.hpp"

namespace kolearn::nn {

/// Logistic sigmoid, evaluated in the numerically stable branch form.
/// Saturates gracefully for large |x|; output is always in (0, 1).
inline double sigmoid(double x) {
    if (x >= 0.0) {
        const double t = std::exp(-x);
        return 1.0 / (1.0 + t);
    }
    const double t = std::exp(x);
    return t / (1.0 + t);
}

/// Slope bound of the sigmoid; the maximum derivative, attained at 0.
inline constexpr double kSigmoidSlopeBound = 0.25;

enum class Activation { Sigmoid, Identity };

inline std::string to_string(Activation a) {
    return a == Activation::Sigmoid ? "sigmoid" : "identity";
}

inline Activation activation_from_string(const std::string& s) {
    if (s == "sigmoid") return Activation::Sigmoid;
    if (s == "identity") return Activation::Identity;
    throw ConfigInvalid("unknown activation: " + s);
}

// ---------------------------------------------------------------------------
// DenseLayer / MlpModel

struct DenseLayer {
    std::size_t in_dim = 0;
    std::size_t out_dim = 0;
    Vec weights;  // out_dim x in_dim, row-major
    Vec bias;     // out_dim
    Activation activation = Activation::Sigmoid;

    void validate() const {
        if (in_dim == 0 || out_dim == 0)
            throw DimensionMismatch("DenseLayer: dimensions must be positive");
        if (weights.size() != out_dim * in_dim)
            throw DimensionMismatch("DenseLayer: weight shape");
        if (bias.size() != out_dim) throw DimensionMismatch("DenseLayer: bias shape");
    }

    Vec forward(const Vec& x) const {
        if (x.size() != in_dim) throw DimensionMismatch("DenseLayer: input size");
        Vec y(out_dim);
        for (std::size_t r = 0; r < out_dim; ++r) {
            double z = bias[r];
            const double* w = weights.data() + r * in_dim;
            for (std::size_t c = 0; c < in_dim; ++c) z += w[c] * x[c];
            y[r] = activation == Activation::Sigmoid ? sigmoid(z) : z;
        }
        return y;
    }
};

struct MlpModel {
    std::vector<DenseLayer> layers;

    std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().in_dim; }
    std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().out_dim; }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& l : layers) n += l.weights.size() + l.bias.size();
        return n;
    }

    void validate() const {
        if (layers.empty()) throw DimensionMismatch("MlpModel: no layers");
        for (const auto& l : layers) l.validate();
        for (std::size_t k = 0; k + 1 < layers.size(); ++k)
            if (layers[k].out_dim != layers[k + 1].in_dim)
                throw DimensionMismatch("MlpModel: layer dimensions do not chain");
        for (const auto& l : layers)
            if (!all_finite(l.weights) || !all_finite(l.bias))
                throw NonFiniteGradient("MlpModel: non-finite weight");
    }

    Vec forward(const Vec& x) const {
        Vec a = x;
        for (const auto& l : layers) a = l.forward(a);
        return a;
    }

    /// Builds a network with the given layer sizes {in, hidden..., out}:
    /// sigmoid hidden layers, identity output layer. Weights drawn uniformly
    /// from +-sqrt(6/(in+out)) with the library's fixed seeded generator.
    static MlpModel make(const std::vector<std::size_t>& dims, std::uint64_t seed) {
        if (dims.size() < 2) throw DimensionMismatch("MlpModel::make: need >= 2 dims");
        Rng rng(seed);
        MlpModel m;
        for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
            DenseLayer l;
            l.in_dim = dims[k];
            l.out_dim = dims[k + 1];
            l.activation =
                (k + 2 == dims.size()) ? Activation::Identity : Activation::Sigmoid;
            const double bound =
                std::sqrt(6.0 / static_cast<double>(l.in_dim + l.out_dim));
            l.weights.resize(l.out_dim * l.in_dim);
            for (double& w : l.weights) w = rng.uniform(-bound, bound);
            l.bias.assign(l.out_dim, 0.0);
            m.layers.push_back(std::move(l));
        }
        m.validate();
        return m;
    }
};

// ---------------------------------------------------------------------------
// OperatorNode: a fixed transform with an analytic reverse-mode product.
// jvp maps (input, upstream cotangent) to the input cotangent and must stay
// consistent with forward (finite-difference checked in the test suite).

struct OperatorNode {
    std::string name;
    std::size_t in_dim = 0;
    std::size_t out_dim = 0;
    std::function<Vec(const Vec&)> forward;
    std::function<Vec(const Vec&, const Vec&)> jvp;

    void validate() const {
        if (in_dim == 0 || out_dim == 0)
            throw DimensionMismatch("OperatorNode " + name + ": dims must be positive");
        if (!forward || !jvp)
            throw ConfigInvalid("OperatorNode " + name + ": missing forward/jvp");
    }
};

inline OperatorNode identity_operator(std::size_t dim) {
    OperatorNode n;
    n.name = "identity";
    n.in_dim = n.out_dim = dim;
    n.forward = [](const Vec& x) { return x; };
    n.jvp = [](const Vec&, const Vec& upstream) { return upstream; };
    return n;
}

// ---------------------------------------------------------------------------
// Pipeline

enum class Loss { MSE };

struct Pipeline {
    using Stage = std::variant<OperatorNode, MlpModel>;

    std::vector<Stage> stages;
    Loss loss = Loss::MSE;

    std::size_t input_dim() const {
        if (stages.empty()) return 0;
        return std::visit(
            [](const auto& v) {
                if constexpr (std::is_same_v<std::decay_t<decltype(v)>, OperatorNode>)
                    return v.in_dim;
                else
                    return v.input_dim();
            },
            stages.front());
    }

    std::size_t output_dim() const {
        if (stages.empty()) return 0;
        return std::visit(
            [](const auto& v) {
                if constexpr (std::is_same_v<std::decay_t<decltype(v)>, OperatorNode>)
                    return v.out_dim;
                else
                    return v.output_dim();
            },
            stages.back());
    }

    std::optional<std::size_t> model_index() const {
        std::optional<std::size_t> idx;
        for (std::size_t k = 0; k < stages.size(); ++k) {
            if (std::holds_alternative<MlpModel>(stages[k])) {
                if (idx) throw ConfigInvalid("Pipeline: more than one trainable model");
                idx = k;
            }
        }
        return idx;
    }

    const MlpModel* model() const {
        auto idx = model_index();
        return idx ? &std::get<MlpModel>(stages[*idx]) : nullptr;
    }
    MlpModel* model() {
        auto idx = model_index();
        return idx ? &std::get<MlpModel>(stages[*idx]) : nullptr;
    }

    void validate() const {
        if (stages.empty()) throw ConfigInvalid("Pipeline: empty");
        std::size_t cur = input_dim();
        for (const auto& s : stages) {
            std::size_t in, out;
            if (const auto* op = std::get_if<OperatorNode>(&s)) {
                op->validate();
                in = op->in_dim;
                out = op->out_dim;
            } else {
                const auto& m = std::get<MlpModel>(s);
                m.validate();
                in = m.input_dim();
                out = m.output_dim();
            }
            if (in != cur) throw DimensionMismatch("Pipeline: stage boundary mismatch");
            cur = out;
        }
        model_index();  // throws on a second trainable stage
    }

    Vec forward(const Vec& x) const {
        if (stages.empty()) throw ConfigInvalid("Pipeline: empty");
        if (x.size() != input_dim()) throw DimensionMismatch("Pipeline: input size");
        Vec a = x;
        for (const auto& s : stages) {
            if (const auto* op = std::get_if<OperatorNode>(&s)) {
                if (a.size() != op->in_dim)
                    throw DimensionMismatch("Pipeline: stage boundary mismatch");
                a = op->forward(a);
                if (a.size() != op->out_dim)
                    throw DimensionMismatch("Pipeline: operator " + op->name +
                                            " returned wrong size");
            } else {
                a = std::get<MlpModel>(s).forward(a);
            }
        }
        return a;
    }
};

// ---------------------------------------------------------------------------
// Loss and reverse pass

inline double mse_loss(const Vec& pred, const Vec& target) {
    if (pred.size() != target.size()) throw DimensionMismatch("mse_loss: sizes");
    if (pred.empty()) throw DimensionMismatch("mse_loss: empty");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        s += d * d;
    }
    return s / static_cast<double>(pred.size());
}

struct LayerGrads {
    Vec weights;
    Vec bias;
};

struct Gradients {
    std::vector<LayerGrads> layers;  // one entry per MlpModel layer; empty if no model
    double loss = 0.0;

    void check_finite() const {
        for (const auto& g : layers)
            if (!all_finite(g.weights) || !all_finite(g.bias))
                throw NonFiniteGradient("gradient contains NaN/Inf");
    }
};

namespace detail {

/// Reverse pass through one MlpModel: given the stage input and the upstream
/// cotangent at its output, produces per-layer parameter gradients and the
/// cotangent at its input.
inline std::pair<std::vector<LayerGrads>, Vec> mlp_backward(const MlpModel& m,
                                                            const Vec& input,
                                                            const Vec& upstream) {
    const std::size_t L = m.layers.size();
    // Forward, caching post-activation values per layer.
    std::vector<Vec> acts(L + 1);
    acts[0] = input;
    for (std::size_t k = 0; k < L; ++k) acts[k + 1] = m.layers[k].forward(acts[k]);

    std::vector<LayerGrads> grads(L);
    Vec delta = upstream;
    for (std::size_t k = L; k-- > 0;) {
        const DenseLayer& layer = m.layers[k];
        const Vec& a_in = acts[k];
        const Vec& a_out = acts[k + 1];
        if (delta.size() != layer.out_dim)
            throw DimensionMismatch("mlp_backward: cotangent size");
        // d(activation)/d(pre-activation); for the sigmoid, s' = s(1-s).
        Vec dz(layer.out_dim);
        for (std::size_t r = 0; r < layer.out_dim; ++r) {
            const double da = layer.activation == Activation::Sigmoid
                                  ? a_out[r] * (1.0 - a_out[r])
                                  : 1.0;
            dz[r] = delta[r] * da;
        }
        LayerGrads g;
        g.weights.resize(layer.out_dim * layer.in_dim);
        g.bias.resize(layer.out_dim);
        for (std::size_t r = 0; r < layer.out_dim; ++r) {
            g.bias[r] = dz[r];
            double* gw = g.weights.data() + r * layer.in_dim;
            for (std::size_t c = 0; c < layer.in_dim; ++c) gw[c] = dz[r] * a_in[c];
        }
        grads[k] = std::move(g);
        Vec prev(layer.in_dim, 0.0);
        for (std::size_t r = 0; r < layer.out_dim; ++r) {
            const double* w = layer.weights.data() + r * layer.in_dim;
            for (std::size_t c = 0; c < layer.in_dim; ++c) prev[c] += w[c] * dz[r];
        }
        delta = std::move(prev);
    }
    return {std::move(grads), std::move(delta)};
}

}  // namespace detail

/// Reverse-mode gradients of the MSE loss w.r.t. every trainable weight/bias.
/// Known-operator stages pass cotangents through their jvp and contribute no
/// parameters of their own.
inline Gradients pipeline_backward(const Pipeline& p, const Vec& x, const Vec& target) {
    // Forward, caching every stage input.
    std::vector<Vec> stage_inputs(p.stages.size());
    Vec a = x;
    for (std::size_t k = 0; k < p.stages.size(); ++k) {
        stage_inputs[k] = a;
        if (const auto* op = std::get_if<OperatorNode>(&p.stages[k])) {
            if (a.size() != op->in_dim)
                throw DimensionMismatch("pipeline_backward: stage boundary");
            a = op->forward(a);
        } else {
            a = std::get<MlpModel>(p.stages[k]).forward(a);
        }
    }

    Gradients out;
    out.loss = mse_loss(a, target);

    // dL/dy for the mean-squared error.
    Vec upstream(a.size());
    const double inv_m = 1.0 / static_cast<double>(a.size());
    for (std::size_t i = 0; i < a.size(); ++i)
        upstream[i] = 2.0 * (a[i] - target[i]) * inv_m;

    for (std::size_t k = p.stages.size(); k-- > 0;) {
        if (const auto* op = std::get_if<OperatorNode>(&p.stages[k])) {
            upstream = op->jvp(stage_inputs[k], upstream);
            if (upstream.size() != op->in_dim)
                throw DimensionMismatch("pipeline_backward: operator " + op->name +
                                        " jvp returned wrong size");
        } else {
            auto [grads, prev] =
                detail::mlp_backward(std::get<MlpModel>(p.stages[k]), stage_inputs[k],
                                     upstream);
            out.layers = std::move(grads);
            upstream = std::move(prev);
        }
    }
    out.check_finite();
    return out;
}

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
    std::size_t epochs = 200;
    std::size_t batch_size = 64;
    double learning_rate = 1e-2;
    double momentum = 0.9;
    double lr_decay = 0.5;  // applied at 1/3 and 2/3 of the epoch budget
    std::uint64_t seed = 0;

    void validate() const {
        if (epochs == 0 || batch_size == 0)
            throw ConfigInvalid("TrainConfig: epochs and batch_size must be positive");
        if (!(learning_rate > 0.0)) throw ConfigInvalid("TrainConfig: learning rate");
        if (momentum < 0.0 || momentum >= 1.0) throw ConfigInvalid("TrainConfig: momentum");
        if (!(lr_decay > 0.0)) throw ConfigInvalid("TrainConfig: lr_decay");
    }
};

struct TrainResult {
    Pipeline pipeline;
    std::vector<double> loss_history;  // mean training loss per completed epoch
    bool diverged = false;
    std::size_t epochs_completed = 0;

    double final_loss() const {
        return loss_history.empty() ? std::numeric_limits<double>::quiet_NaN()
                                    : loss_history.back();
    }
};

/// Mini-batch SGD with momentum on the pipeline's single trainable model.
/// Deterministic given the seed: fixed shuffle algorithm, fixed batch order,
/// fixed accumulation order. If the loss goes non-finite the run aborts with
/// the history collected so far and diverged = true.
inline TrainResult train(Pipeline p, const std::vector<Vec>& inputs,
                         const std::vector<Vec>& targets, const TrainConfig& cfg) {
    cfg.validate();
    p.validate();
    if (inputs.empty()) throw ConfigInvalid("train: empty dataset");
    if (inputs.size() != targets.size()) throw DimensionMismatch("train: dataset sizes");

    const auto model_idx = p.model_index();
    if (!model_idx) throw ConfigInvalid("train: pipeline has no trainable model");

    // All stages before the model are fixed pure operators, so their outputs
    // per sample never change across steps; precompute them once.
    std::vector<Vec> feats(inputs.size());
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        Vec a = inputs[i];
        for (std::size_t k = 0; k < *model_idx; ++k)
            a = std::get<OperatorNode>(p.stages[k]).forward(a);
        feats[i] = std::move(a);
    }
    // Sub-pipeline from the model onward (the part gradients flow through).
    Pipeline tail;
    tail.loss = p.loss;
    for (std::size_t k = *model_idx; k < p.stages.size(); ++k)
        tail.stages.push_back(p.stages[k]);

    MlpModel& model = std::get<MlpModel>(tail.stages.front());
    std::vector<LayerGrads> velocity(model.layers.size());
    for (std::size_t k = 0; k < model.layers.size(); ++k) {
        velocity[k].weights.assign(model.layers[k].weights.size(), 0.0);
        velocity[k].bias.assign(model.layers[k].bias.size(), 0.0);
    }

    TrainResult result;
    Rng shuffle_rng(derive_seed(cfg.seed, 0x5f5f));
    std::vector<std::size_t> order(inputs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    double lr = cfg.learning_rate;
    const std::size_t third = std::max<std::size_t>(1, cfg.epochs / 3);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (epoch > 0 && cfg.epochs >= 3 &&
            (epoch == third || epoch == 2 * third))
            lr *= cfg.lr_decay;

        shuffle_rng.shuffle(order);
        double epoch_loss = 0.0;

        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            const double inv_b = 1.0 / static_cast<double>(end - start);

            std::vector<LayerGrads> acc(model.layers.size());
            for (std::size_t k = 0; k < model.layers.size(); ++k) {
                acc[k].weights.assign(model.layers[k].weights.size(), 0.0);
                acc[k].bias.assign(model.layers[k].bias.size(), 0.0);
            }
            double batch_loss = 0.0;
            for (std::size_t i = start; i < end; ++i) {
                const std::size_t s = order[i];
                Gradients g = pipeline_backward(tail, feats[s], targets[s]);
                batch_loss += g.loss;
                for (std::size_t k = 0; k < acc.size(); ++k) {
                    for (std::size_t j = 0; j < acc[k].weights.size(); ++j)
                        acc[k].weights[j] += g.layers[k].weights[j];
                    for (std::size_t j = 0; j < acc[k].bias.size(); ++j)
                        acc[k].bias[j] += g.layers[k].bias[j];
                }
            }
            batch_loss *= inv_b;
            epoch_loss += batch_loss * static_cast<double>(end - start);

            if (!std::isfinite(batch_loss)) {
                result.diverged = true;
                break;
            }
            for (std::size_t k = 0; k < model.layers.size(); ++k) {
                auto& layer = model.layers[k];
                for (std::size_t j = 0; j < layer.weights.size(); ++j) {
                    velocity[k].weights[j] = cfg.momentum * velocity[k].weights[j] -
                                             lr * acc[k].weights[j] * inv_b;
                    layer.weights[j] += velocity[k].weights[j];
                }
                for (std::size_t j = 0; j < layer.bias.size(); ++j) {
                    velocity[k].bias[j] =
                        cfg.momentum * velocity[k].bias[j] - lr * acc[k].bias[j] * inv_b;
                    layer.bias[j] += velocity[k].bias[j];
                }
                if (!all_finite(layer.weights) || !all_finite(layer.bias)) {
                    result.diverged = true;
                    break;
                }
            }
            if (result.diverged) break;
        }
        if (result.diverged) break;

        result.loss_history.push_back(epoch_loss /
                                      static_cast<double>(order.size()));
        result.epochs_completed = epoch + 1;
    }

    // Write the trained model back into the caller-visible pipeline.
    p.stages[*model_idx] = model;
    result.pipeline = std::move(p);
    return result;
}

// ---------------------------------------------------------------------------
// Gradient checking

struct GradientCheckReport {
    double max_rel_error = 0.0;
    double tolerance = 0.0;
    std::size_t n_parameters = 0;
    bool passed = false;
};

namespace detail {

inline double rel_error(double analytic, double numeric) {
    const double scale = std::max({1.0, std::abs(analytic), std::abs(numeric)});
    return std::abs(analytic - numeric) / scale;
}

}  // namespace detail

/// Compares reverse-mode gradients against central finite differences of the
/// full pipeline loss, parameter by parameter.
inline GradientCheckReport gradient_check(const Pipeline& p, const Vec& x,
                                          const Vec& target, double h, double tol) {
    if (!(h > 0.0) || !(tol > 0.0))
        throw ConfigInvalid("gradient_check: h and tol must be positive");
    Gradients analytic = pipeline_backward(p, x, target);

    Pipeline probe = p;
    const auto idx = probe.model_index();
    GradientCheckReport report;
    report.tolerance = tol;
    if (!idx) {
        report.passed = true;
        return report;
    }
    MlpModel& m = std::get<MlpModel>(probe.stages[*idx]);

    auto loss_at = [&]() { return mse_loss(probe.forward(x), target); };
    for (std::size_t k = 0; k < m.layers.size(); ++k) {
        auto probe_param = [&](double& param, double grad) {
            const double saved = param;
            param = saved + h;
            const double lp = loss_at();
            param = saved - h;
            const double lm = loss_at();
            param = saved;
            const double numeric = (lp - lm) / (2.0 * h);
            report.max_rel_error =
                std::max(report.max_rel_error, detail::rel_error(grad, numeric));
            ++report.n_parameters;
        };
        for (std::size_t j = 0; j < m.layers[k].weights.size(); ++j)
            probe_param(m.layers[k].weights[j], analytic.layers[k].weights[j]);
        for (std::size_t j = 0; j < m.layers[k].bias.size(); ++j)
            probe_param(m.layers[k].bias[j], analytic.layers[k].bias[j]);
    }
    report.passed = report.max_rel_error < tol;
    return report;
}

/// Finite-difference consistency check for an OperatorNode's jvp: compares
/// upstream^T * J (column-wise central differences) against jvp(x, upstream).
inline double operator_jvp_max_rel_error(const OperatorNode& op, const Vec& x,
                                         const Vec& upstream, double h = 1e-6) {
    Vec analytic = op.jvp(x, upstream);
    double worst = 0.0;
    Vec xp = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        xp[i] = x[i] + h;
        Vec fp = op.forward(xp);
        xp[i] = x[i] - h;
        Vec fm = op.forward(xp);
        xp[i] = x[i];
        double numeric = 0.0;
        for (std::size_t r = 0; r < upstream.size(); ++r)
            numeric += upstream[r] * (fp[r] - fm[r]) / (2.0 * h);
        worst = std::max(worst, detail::rel_error(analytic[i], numeric));
    }
    return worst;
}

// ---------------------------------------------------------------------------
// Model file: one compact JSON line (dims, activations, seed, config), then
// raw little-endian f64 blocks per layer, weights row-major followed by bias.

inline void save_model(const MlpModel& m, const nlohmann::json& config,
                       const std::filesystem::path& path) {
    m.validate();
    nlohmann::json header;
    header["format"] = "kolearn-model";
    header["version"] = 1;
    auto& layers = header["layers"] = nlohmann::json::array();
    for (const auto& l : m.layers)
        layers.push_back({{"in", l.in_dim},
                          {"out", l.out_dim},
                          {"activation", to_string(l.activation)}});
    header["config"] = config;

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("save_model: cannot open " + path.string());
    out << header.dump() << '\n';
    for (const auto& l : m.layers) {
        out.write(reinterpret_cast<const char*>(l.weights.data()),
                  static_cast<std::streamsize>(l.weights.size() * sizeof(double)));
        out.write(reinterpret_cast<const char*>(l.bias.data()),
                  static_cast<std::streamsize>(l.bias.size() * sizeof(double)));
    }
    if (!out) throw IoError("save_model: write failed for " + path.string());
}

struct LoadedModel {
    MlpModel model;
    nlohmann::json config;
};

inline LoadedModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("load_model: cannot open " + path.string());
    std::string header_line;
    if (!std::getline(in, header_line)) throw IoError("load_model: missing header");
    nlohmann::json header = nlohmann::json::parse(header_line);
    if (header.value("format", "") != "kolearn-model")
        throw IoError("load_model: not a kolearn model file");

    LoadedModel lm;
    lm.config = header.value("config", nlohmann::json::object());
    for (const auto& jl : header.at("layers")) {
        DenseLayer l;
        l.in_dim = jl.at("in").get<std::size_t>();
        l.out_dim = jl.at("out").get<std::size_t>();
        l.activation = activation_from_string(jl.at("activation").get<std::string>());
        l.weights.resize(l.out_dim * l.in_dim);
        l.bias.resize(l.out_dim);
        in.read(reinterpret_cast<char*>(l.weights.data()),
                static_cast<std::streamsize>(l.weights.size() * sizeof(double)));
        in.read(reinterpret_cast<char*>(l.bias.data()),
                static_cast<std::streamsize>(l.bias.size() * sizeof(double)));
        if (!in) throw IoError("load_model: truncated weight block");
        lm.model.layers.push_back(std::move(l));
    }
    lm.model.validate();
    return lm;
}

}  // namespace kolearn::nn
