#pragma once

// Four-variant material-decomposition study on synthetic multi-energy data:
// build the shared dataset per seed, assemble the variant pipelines (raw
// intensities, neg-log, polynomial expansion, or both in front of the MLP),
// train, predict the full image, score with Pearson's r and SSIM, and emit
// result CSVs, scatter data and prediction rasters.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "kolearn/common.hpp"
#include "kolearn/metrics.hpp"
#include "kolearn/nn.hpp"
#include "kolearn/ops.hpp"
#include "kolearn/xray.hpp"

namespace kolearn::experiment {

inline constexpr const char* kToolVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Variants

enum class Variant { Raw, U, G, GU };

inline const std::vector<Variant>& all_variants() {
    static const std::vector<Variant> v = {Variant::Raw, Variant::U, Variant::G,
                                           Variant::GU};
    return v;
}

inline std::string variant_id(Variant v) {
    switch (v) {
        case Variant::Raw: return "raw";
        case Variant::U: return "u";
        case Variant::G: return "g";
        case Variant::GU: return "gu";
    }
    throw UnknownVariant("variant_id: bad enum");
}

/// Display name describing the feature chain in front of the network.
inline std::string variant_label(Variant v) {
    switch (v) {
        case Variant::Raw: return "F(I)";
        case Variant::U: return "F(u(I))";
        case Variant::G: return "F(g(I))";
        case Variant::GU: return "F(g(u(I)))";
    }
    throw UnknownVariant("variant_label: bad enum");
}

inline Variant variant_from_id(const std::string& id) {
    for (Variant v : all_variants())
        if (variant_id(v) == id) return v;
    throw UnknownVariant("unknown variant: " + id);
}

// ---------------------------------------------------------------------------
// Configuration

struct MlpConfig {
    std::vector<std::size_t> hidden = {16, 16};
};

struct PolyConfig {
    std::size_t degree = 3;
    bool cross_terms = true;
};

struct SpectraConfig {
    std::vector<double> kvps = {41.0, 70.0, 125.0};
    double photons = 1e6;
    double grid_min_kev = 10.0;
    double grid_max_kev = 150.0;
    double grid_step_kev = 1.0;
    double low_cutoff_kev = 10.0;
};

struct ExperimentConfig {
    xray::PhantomConfig phantom;
    SpectraConfig spectra;
    bool noise_enabled = true;
    std::vector<Variant> variants = all_variants();
    MlpConfig mlp;
    nn::TrainConfig training;
    PolyConfig poly;
    std::vector<std::uint64_t> seeds = {1, 2, 3};
    std::string out_dir = "out";
    double train_fraction = 0.8;

    void validate() const {
        phantom.validate();
        training.validate();
        if (spectra.kvps.empty()) throw ConfigInvalid("config: no spectra");
        if (!(spectra.photons > 0.0)) throw ConfigInvalid("config: photon count");
        if (variants.empty()) throw ConfigInvalid("config: no variants");
        if (seeds.empty()) throw ConfigInvalid("config: no seeds");
        if (poly.degree == 0) throw ConfigInvalid("config: poly degree");
        if (mlp.hidden.empty()) throw ConfigInvalid("config: no hidden layers");
        if (!(train_fraction > 0.0) || !(train_fraction < 1.0))
            throw ConfigInvalid("config: train fraction must be in (0,1)");
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["phantom"] = {{"width", phantom.width},
                        {"height", phantom.height},
                        {"pixel_size_cm", phantom.pixel_size_cm},
                        {"soft_tissue_cm", phantom.soft_tissue_cm},
                        {"bone_cm", phantom.bone_cm},
                        {"needle_diameter_cm", phantom.needle_diameter_cm},
                        {"needle_length_frac", phantom.needle_length_frac},
                        {"plastic_cm", phantom.plastic_cm},
                        {"bone_count_min", phantom.bone_count_min},
                        {"bone_count_max", phantom.bone_count_max}};
        j["spectra"] = {{"kvps", spectra.kvps},
                        {"photons", spectra.photons},
                        {"grid_min_kev", spectra.grid_min_kev},
                        {"grid_max_kev", spectra.grid_max_kev},
                        {"grid_step_kev", spectra.grid_step_kev},
                        {"low_cutoff_kev", spectra.low_cutoff_kev}};
        j["noise"] = {{"enabled", noise_enabled}};
        std::vector<std::string> ids;
        for (Variant v : variants) ids.push_back(variant_id(v));
        j["variants"] = ids;
        j["mlp"] = {{"hidden", mlp.hidden}};
        j["training"] = {{"epochs", training.epochs},
                         {"batch_size", training.batch_size},
                         {"learning_rate", training.learning_rate},
                         {"momentum", training.momentum},
                         {"lr_decay", training.lr_decay}};
        j["poly"] = {{"degree", poly.degree}, {"cross_terms", poly.cross_terms}};
        j["seeds"] = seeds;
        j["out_dir"] = out_dir;
        j["train_fraction"] = train_fraction;
        return j;
    }

    /// Applies the keys present in j over the defaults; absent keys keep them.
    static ExperimentConfig from_json(const nlohmann::json& j) {
        ExperimentConfig c;
        if (j.contains("phantom")) {
            const auto& p = j.at("phantom");
            c.phantom.width = p.value("width", c.phantom.width);
            c.phantom.height = p.value("height", c.phantom.height);
            c.phantom.pixel_size_cm = p.value("pixel_size_cm", c.phantom.pixel_size_cm);
            c.phantom.soft_tissue_cm = p.value("soft_tissue_cm", c.phantom.soft_tissue_cm);
            c.phantom.bone_cm = p.value("bone_cm", c.phantom.bone_cm);
            c.phantom.needle_diameter_cm =
                p.value("needle_diameter_cm", c.phantom.needle_diameter_cm);
            c.phantom.needle_length_frac =
                p.value("needle_length_frac", c.phantom.needle_length_frac);
            c.phantom.plastic_cm = p.value("plastic_cm", c.phantom.plastic_cm);
            c.phantom.bone_count_min = p.value("bone_count_min", c.phantom.bone_count_min);
            c.phantom.bone_count_max = p.value("bone_count_max", c.phantom.bone_count_max);
        }
        if (j.contains("spectra")) {
            const auto& s = j.at("spectra");
            c.spectra.kvps = s.value("kvps", c.spectra.kvps);
            c.spectra.photons = s.value("photons", c.spectra.photons);
            c.spectra.grid_min_kev = s.value("grid_min_kev", c.spectra.grid_min_kev);
            c.spectra.grid_max_kev = s.value("grid_max_kev", c.spectra.grid_max_kev);
            c.spectra.grid_step_kev = s.value("grid_step_kev", c.spectra.grid_step_kev);
            c.spectra.low_cutoff_kev = s.value("low_cutoff_kev", c.spectra.low_cutoff_kev);
        }
        if (j.contains("noise")) c.noise_enabled = j.at("noise").value("enabled", true);
        if (j.contains("variants")) {
            c.variants.clear();
            for (const auto& id : j.at("variants"))
                c.variants.push_back(variant_from_id(id.get<std::string>()));
        }
        if (j.contains("mlp")) c.mlp.hidden = j.at("mlp").value("hidden", c.mlp.hidden);
        if (j.contains("training")) {
            const auto& t = j.at("training");
            c.training.epochs = t.value("epochs", c.training.epochs);
            c.training.batch_size = t.value("batch_size", c.training.batch_size);
            c.training.learning_rate = t.value("learning_rate", c.training.learning_rate);
            c.training.momentum = t.value("momentum", c.training.momentum);
            c.training.lr_decay = t.value("lr_decay", c.training.lr_decay);
        }
        if (j.contains("poly")) {
            c.poly.degree = j.at("poly").value("degree", c.poly.degree);
            c.poly.cross_terms = j.at("poly").value("cross_terms", c.poly.cross_terms);
        }
        if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
        if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
        if (j.contains("train_fraction"))
            c.train_fraction = j.at("train_fraction").get<double>();
        c.validate();
        return c;
    }

    std::string config_hash() const { return hex64(fnv1a64(to_json().dump())); }
};

// ---------------------------------------------------------------------------
// Pipeline assembly

/// Fixed operator chain in front of the network for a variant. Variants with
/// the neg-log transform get an intensity floor first: Poisson pixels can hit
/// zero counts and the clamping policy lives in the pipeline, not the operator.
inline std::vector<nn::OperatorNode> variant_prefix(Variant v,
                                                    const ExperimentConfig& cfg,
                                                    const Vec& i0) {
    std::vector<nn::OperatorNode> prefix;
    const bool with_u = (v == Variant::U || v == Variant::GU);
    const bool with_g = (v == Variant::G || v == Variant::GU);
    if (with_u) {
        prefix.push_back(ops::IntensityFloor{i0}.node());
        prefix.push_back(ops::NegLogTransform(i0).node());
    }
    if (with_g) {
        const std::size_t in = i0.size();
        prefix.push_back(
            ops::PolynomialExpansion(in, cfg.poly.degree, cfg.poly.cross_terms).node());
    }
    return prefix;
}

/// Variant pipeline: [prefix ops..., standardizer, MLP]. The standardizer is
/// identity here; run_experiment fits it on the training split and rebuilds.
inline nn::Pipeline build_variant(Variant v, const ExperimentConfig& cfg, const Vec& i0,
                                  const ops::Standardizer* fitted = nullptr,
                                  std::uint64_t init_seed = 0) {
    if (i0.empty()) throw ConfigInvalid("build_variant: empty flat field");
    nn::Pipeline p;
    std::size_t dim = i0.size();
    for (auto& op : variant_prefix(v, cfg, i0)) {
        dim = op.out_dim;
        p.stages.emplace_back(std::move(op));
    }
    const ops::Standardizer st =
        fitted ? *fitted : ops::Standardizer::identity(dim);
    if (st.dim() != dim) throw DimensionMismatch("build_variant: standardizer dim");
    p.stages.emplace_back(st.node());

    std::vector<std::size_t> dims;
    dims.push_back(dim);
    for (std::size_t h : cfg.mlp.hidden) dims.push_back(h);
    dims.push_back(1);
    p.stages.emplace_back(nn::MlpModel::make(dims, init_seed));
    p.validate();
    return p;
}

// ---------------------------------------------------------------------------
// Results

struct VariantResult {
    std::uint64_t seed = 0;
    Variant variant = Variant::Raw;
    double pearson_r = std::numeric_limits<double>::quiet_NaN();
    double ssim_value = std::numeric_limits<double>::quiet_NaN();
    double final_train_loss = std::numeric_limits<double>::quiet_NaN();
    std::string prediction_raster;  // relative to out_dir
    std::string scatter_csv;        // relative to out_dir
    std::string dataset_hash;
    bool diverged = false;
};

struct RunSummary {
    std::vector<VariantResult> results;
    std::filesystem::path out_dir;
    bool any_diverged = false;
};

namespace detail {

inline std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::uint64_t dataset_hash(const xray::DatasetBundle& ds) {
    std::uint64_t h = fnv1a64(ds.features.data.data(),
                              ds.features.data.size() * sizeof(double));
    // Chain the target hash into the feature hash.
    const std::uint64_t t =
        fnv1a64(ds.target.data.data(), ds.target.data.size() * sizeof(double));
    return fnv1a64(&t, sizeof(t)) ^ h;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Scatter and report emission

/// CSV `truth,pred` per pixel. Subsampling is a deterministic stride walk:
/// stride = round(1/fraction), phase = seed % stride.
inline void emit_scatter(const xray::MultiChannelImage& pred,
                         const xray::MultiChannelImage& truth,
                         const std::filesystem::path& path, double fraction = 1.0,
                         std::uint64_t seed = 0) {
    if (pred.width != truth.width || pred.height != truth.height ||
        pred.channels != 1 || truth.channels != 1)
        throw DimensionMismatch("emit_scatter: image shapes");
    if (!(fraction > 0.0) || fraction > 1.0)
        throw ConfigInvalid("emit_scatter: fraction must be in (0,1]");
    std::ofstream out(path);
    if (!out) throw IoError("emit_scatter: cannot open " + path.string());
    out << "truth,pred\n";
    const std::size_t stride =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(1.0 / fraction)));
    for (std::size_t p = seed % stride; p < pred.pixel_count(); p += stride)
        out << detail::fmt17(truth.data[p]) << ',' << detail::fmt17(pred.data[p])
            << '\n';
    if (!out) throw IoError("emit_scatter: write failed");
}

/// results.csv (one row per seed x variant, canonical order) plus a markdown
/// summary table shaped like the study overview: variants as columns, metric
/// percentages as rows, best mean per row bolded.
inline void emit_report(const std::vector<VariantResult>& results,
                        const std::filesystem::path& out_dir) {
    if (results.empty()) throw ConfigInvalid("emit_report: no results");
    std::filesystem::create_directories(out_dir);

    std::vector<VariantResult> sorted = results;
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
        if (a.seed != b.seed) return a.seed < b.seed;
        return static_cast<int>(a.variant) < static_cast<int>(b.variant);
    });

    {
        std::ofstream csv(out_dir / "results.csv");
        if (!csv) throw IoError("emit_report: cannot open results.csv");
        csv << "seed,variant,pearson_r,ssim,final_train_loss,prediction_raster,"
               "scatter_csv,dataset_hash,diverged\n";
        for (const auto& r : sorted) {
            csv << r.seed << ',' << variant_id(r.variant) << ','
                << detail::fmt17(r.pearson_r) << ',' << detail::fmt17(r.ssim_value)
                << ',' << detail::fmt17(r.final_train_loss) << ','
                << r.prediction_raster << ',' << r.scatter_csv << ',' << r.dataset_hash
                << ',' << (r.diverged ? 1 : 0) << '\n';
        }
        if (!csv) throw IoError("emit_report: write failed");
    }

    // Column order: canonical variant order, restricted to what was run.
    std::vector<Variant> columns;
    for (Variant v : all_variants())
        for (const auto& r : sorted)
            if (r.variant == v && !std::count(columns.begin(), columns.end(), v)) {
                columns.push_back(v);
                break;
            }

    struct Stat {
        double mean = std::numeric_limits<double>::quiet_NaN();
        double half_range = 0.0;
        bool valid = false;
    };
    auto aggregate = [&](Variant v, auto metric) {
        Stat s;
        double sum = 0.0, lo = 0.0, hi = 0.0;
        std::size_t n = 0;
        for (const auto& r : sorted) {
            if (r.variant != v || r.diverged) continue;
            const double m = metric(r);
            if (n == 0) lo = hi = m;
            lo = std::min(lo, m);
            hi = std::max(hi, m);
            sum += m;
            ++n;
        }
        if (n > 0) {
            s.mean = sum / static_cast<double>(n);
            s.half_range = (hi - lo) / 2.0;
            s.valid = true;
        }
        return s;
    };

    std::ofstream md(out_dir / "summary.md");
    if (!md) throw IoError("emit_report: cannot open summary.md");
    md << "# Material decomposition summary\n\n";
    md << "Mean over seeds, as percentages; +- is half the range across seeds.\n\n";
    md << "| Metric |";
    for (Variant v : columns) md << ' ' << variant_label(v) << " |";
    md << "\n|---|";
    for (std::size_t i = 0; i < columns.size(); ++i) md << "---|";
    md << '\n';

    auto row = [&](const std::string& name, auto metric) {
        std::vector<Stat> stats;
        for (Variant v : columns) stats.push_back(aggregate(v, metric));
        std::size_t best = 0;
        bool any = false;
        for (std::size_t i = 0; i < stats.size(); ++i)
            if (stats[i].valid && (!any || stats[i].mean > stats[best].mean)) {
                best = i;
                any = true;
            }
        md << "| " << name << " |";
        for (std::size_t i = 0; i < stats.size(); ++i) {
            if (!stats[i].valid) {
                md << " failed |";
                continue;
            }
            char cell[64];
            std::snprintf(cell, sizeof(cell), "%.1f +- %.1f", 100.0 * stats[i].mean,
                          100.0 * stats[i].half_range);
            if (any && i == best)
                md << " **" << cell << "** |";
            else
                md << ' ' << cell << " |";
        }
        md << '\n';
    };
    row("Pearson's r [%]", [](const VariantResult& r) { return r.pearson_r; });
    row("SSIM [%]", [](const VariantResult& r) { return r.ssim_value; });
    if (!md) throw IoError("emit_report: write failed");
}

// ---------------------------------------------------------------------------
// Run

namespace detail {

struct SeedDataset {
    xray::PathLengthMap phantom;
    xray::DatasetBundle bundle;
    std::vector<Vec> inputs;       // per-pixel feature vectors
    std::vector<Vec> targets;      // per-pixel {metal_cm}
    std::vector<std::size_t> train_idx, test_idx;
    double truth_range = 0.0;      // shared SSIM dynamic range
};

inline SeedDataset build_seed_dataset(const ExperimentConfig& cfg, std::uint64_t seed) {
    SeedDataset sd;
    sd.phantom = xray::make_phantom(cfg.phantom, derive_seed(seed, 1));

    const Vec grid = xray::make_energy_grid(cfg.spectra.grid_min_kev,
                                            cfg.spectra.grid_max_kev,
                                            cfg.spectra.grid_step_kev);
    const xray::MaterialSet mats = xray::default_materials(grid);
    std::vector<xray::EnergySpectrum> spectra;
    for (double kvp : cfg.spectra.kvps)
        spectra.push_back(xray::make_spectrum(kvp, grid, cfg.spectra.photons,
                                              cfg.spectra.low_cutoff_kev));
    sd.bundle = xray::make_dataset(sd.phantom, spectra, mats,
                                   {cfg.noise_enabled, derive_seed(seed, 2)});

    const std::size_t n = sd.bundle.features.pixel_count();
    const std::size_t c = sd.bundle.features.channels;
    sd.inputs.resize(n);
    sd.targets.resize(n);
    for (std::size_t p = 0; p < n; ++p) {
        sd.inputs[p].assign(sd.bundle.features.data.begin() + p * c,
                            sd.bundle.features.data.begin() + (p + 1) * c);
        sd.targets[p] = {sd.bundle.target.data[p]};
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng split_rng(derive_seed(seed, 3));
    split_rng.shuffle(order);
    const std::size_t n_train =
        std::max<std::size_t>(1, static_cast<std::size_t>(
                                     std::llround(cfg.train_fraction * static_cast<double>(n))));
    sd.train_idx.assign(order.begin(), order.begin() + n_train);
    sd.test_idx.assign(order.begin() + n_train, order.end());

    double lo = sd.bundle.target.data[0], hi = lo;
    for (double v : sd.bundle.target.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    sd.truth_range = hi - lo;
    return sd;
}

}  // namespace detail

/// Trains and evaluates one variant on an already-built seed dataset,
/// persisting the prediction raster, scatter CSV and model file under
/// seed_dir/<variant>/. A diverged fit is recorded as failed, not fatal.
inline VariantResult run_variant(const ExperimentConfig& cfg,
                                 const detail::SeedDataset& sd, std::uint64_t seed,
                                 Variant v, const std::filesystem::path& out_root,
                                 std::vector<std::string>* file_list = nullptr) {
    VariantResult result;
    result.seed = seed;
    result.variant = v;
    result.dataset_hash = hex64(detail::dataset_hash(sd.bundle));

    const std::size_t vix = static_cast<std::size_t>(v);
    const Vec& i0 = sd.bundle.i0_per_bin;

    // Fit the standardizer on the training split, after the fixed prefix.
    std::vector<nn::OperatorNode> prefix = variant_prefix(v, cfg, i0);
    std::vector<Vec> train_feats(sd.train_idx.size());
    for (std::size_t i = 0; i < sd.train_idx.size(); ++i) {
        Vec a = sd.inputs[sd.train_idx[i]];
        for (const auto& op : prefix) a = op.forward(a);
        train_feats[i] = std::move(a);
    }
    const ops::Standardizer st = ops::Standardizer::fit(train_feats);

    nn::Pipeline pipeline =
        build_variant(v, cfg, i0, &st, derive_seed(seed, 100 + vix));

    std::vector<Vec> train_in(sd.train_idx.size()), train_tg(sd.train_idx.size());
    for (std::size_t i = 0; i < sd.train_idx.size(); ++i) {
        train_in[i] = sd.inputs[sd.train_idx[i]];
        train_tg[i] = sd.targets[sd.train_idx[i]];
    }
    nn::TrainConfig tc = cfg.training;
    tc.seed = derive_seed(seed, 200 + vix);
    nn::TrainResult trained = nn::train(std::move(pipeline), train_in, train_tg, tc);
    result.final_train_loss = trained.final_loss();
    if (trained.diverged) {
        result.diverged = true;
        return result;
    }

    // Full-image prediction.
    xray::MultiChannelImage pred;
    pred.width = sd.bundle.target.width;
    pred.height = sd.bundle.target.height;
    pred.channels = 1;
    pred.channel_names = {"prediction"};
    pred.data.resize(pred.pixel_count());
    for (std::size_t p = 0; p < pred.pixel_count(); ++p)
        pred.data[p] = trained.pipeline.forward(sd.inputs[p])[0];

    const std::filesystem::path vdir =
        out_root / ("seed_" + std::to_string(seed)) / variant_id(v);
    std::filesystem::create_directories(vdir);
    const std::filesystem::path pred_base = vdir / "prediction";
    xray::write_raster(pred, pred_base);
    const std::filesystem::path scatter_path = vdir / "scatter.csv";
    emit_scatter(pred, sd.bundle.target, scatter_path);

    nlohmann::json model_meta = {{"variant", variant_id(v)},
                                 {"seed", seed},
                                 {"standardizer_mean", st.mean},
                                 {"standardizer_inv_std", st.inv_std},
                                 {"i0_per_bin", i0},
                                 {"poly_degree", cfg.poly.degree},
                                 {"poly_cross_terms", cfg.poly.cross_terms},
                                 {"config_hash", cfg.config_hash()}};
    nn::save_model(*trained.pipeline.model(), model_meta, vdir / "model.kom");

    // SSIM on the full raster (spatial metric), Pearson's r on the test split.
    metrics::SsimConfig ssim_cfg;
    ssim_cfg.dynamic_range = sd.truth_range;
    result.ssim_value = metrics::ssim(pred.data, sd.bundle.target.data, pred.width,
                                      pred.height, ssim_cfg);
    Vec test_pred(sd.test_idx.size()), test_truth(sd.test_idx.size());
    for (std::size_t i = 0; i < sd.test_idx.size(); ++i) {
        test_pred[i] = pred.data[sd.test_idx[i]];
        test_truth[i] = sd.bundle.target.data[sd.test_idx[i]];
    }
    result.pearson_r = metrics::pearson_r(test_pred, test_truth);

    const auto rel = [&](const std::filesystem::path& p) {
        return std::filesystem::relative(p, out_root).generic_string();
    };
    result.prediction_raster = rel(pred_base) + ".f64le";
    result.scatter_csv = rel(scatter_path);
    if (file_list) {
        file_list->push_back(rel(pred_base) + ".json");
        file_list->push_back(rel(pred_base) + ".f64le");
        file_list->push_back(rel(scatter_path));
        file_list->push_back(rel(vdir / "model.kom"));
    }
    return result;
}

/// Writes the per-seed dataset rasters plus a dataset manifest.
inline void persist_dataset(const detail::SeedDataset& sd, std::uint64_t seed,
                            const ExperimentConfig& cfg,
                            const std::filesystem::path& out_root,
                            std::vector<std::string>* file_list = nullptr) {
    const std::filesystem::path ddir =
        out_root / ("seed_" + std::to_string(seed)) / "dataset";
    std::filesystem::create_directories(ddir);
    xray::write_raster(sd.bundle.features, ddir / "features");
    xray::write_raster(sd.bundle.target, ddir / "target");
    nlohmann::json manifest = {{"seed", seed},
                               {"i0_per_bin", sd.bundle.i0_per_bin},
                               {"feature_raster", "features.f64le"},
                               {"target_raster", "target.f64le"},
                               {"dataset_hash", hex64(detail::dataset_hash(sd.bundle))},
                               {"config_hash", cfg.config_hash()}};
    std::ofstream m(ddir / "manifest.json");
    if (!m) throw IoError("persist_dataset: cannot open manifest");
    m << manifest.dump(2) << '\n';
    if (file_list) {
        const auto rel = [&](const char* name) {
            return std::filesystem::relative(ddir / name, out_root).generic_string();
        };
        file_list->push_back(rel("features.json"));
        file_list->push_back(rel("features.f64le"));
        file_list->push_back(rel("target.json"));
        file_list->push_back(rel("target.f64le"));
        file_list->push_back(rel("manifest.json"));
    }
}

/// Full study: for each seed, one shared dataset; for each variant, train,
/// evaluate and persist. Emits results.csv, summary.md and a run manifest.
inline RunSummary run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    RunSummary summary;
    summary.out_dir = cfg.out_dir;
    std::filesystem::create_directories(summary.out_dir);
    std::vector<std::string> files;

    for (std::uint64_t seed : cfg.seeds) {
        const detail::SeedDataset sd = detail::build_seed_dataset(cfg, seed);
        persist_dataset(sd, seed, cfg, summary.out_dir, &files);
        for (Variant v : cfg.variants) {
            VariantResult r = run_variant(cfg, sd, seed, v, summary.out_dir, &files);
            summary.any_diverged = summary.any_diverged || r.diverged;
            summary.results.push_back(std::move(r));
        }
    }

    emit_report(summary.results, summary.out_dir);
    files.push_back("results.csv");
    files.push_back("summary.md");
    std::sort(files.begin(), files.end());

    nlohmann::json manifest = {{"tool", "kolearn"},
                               {"version", kToolVersion},
                               {"config_hash", cfg.config_hash()},
                               {"config", cfg.to_json()},
                               {"files", files}};
    std::ofstream m(summary.out_dir / "manifest.json");
    if (!m) throw IoError("run_experiment: cannot open manifest");
    m << manifest.dump(2) << '\n';
    return summary;
}

}  // namespace kolearn::experiment
