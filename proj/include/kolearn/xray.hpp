#pragma once

// Synthetic polychromatic X-ray forward model: tube-like spectra on a keV
// grid, analytic material attenuation curves, a procedural 2D phantom with an
// embedded metal needle, exponential-attenuation detector intensities with
// one bin per acquisition, and optional Poisson noise. A parallel-beam
// thickness model: the per-pixel path length through a material is its
// assigned through-plane thickness, no ray casting.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "kolearn/common.hpp"

namespace kolearn::xray {

// ---------------------------------------------------------------------------
// Spectra

struct EnergySpectrum {
    Vec energies;  // keV, strictly increasing
    Vec flux;      // photons per energy sample
    double kvp_label = 0.0;

    void validate() const {
        if (energies.size() != flux.size() || energies.empty())
            throw DimensionMismatch("EnergySpectrum: energies/flux sizes");
        double total = 0.0;
        for (std::size_t k = 0; k < energies.size(); ++k) {
            if (k > 0 && !(energies[k] > energies[k - 1]))
                throw ConfigInvalid("EnergySpectrum: energies must increase");
            if (!(flux[k] >= 0.0)) throw ConfigInvalid("EnergySpectrum: negative flux");
            if (energies[k] > kvp_label && flux[k] != 0.0)
                throw ConfigInvalid("EnergySpectrum: photons above tube voltage");
            total += flux[k];
        }
        if (!(total > 0.0)) throw ConfigInvalid("EnergySpectrum: zero total flux");
    }

    double total_flux() const {
        double t = 0.0;
        for (double f : flux) t += f;
        return t;
    }
};

inline Vec make_energy_grid(double min_kev = 10.0, double max_kev = 150.0,
                            double step_kev = 1.0) {
    if (!(step_kev > 0.0) || !(max_kev > min_kev))
        throw ConfigInvalid("energy grid: bad range");
    Vec g;
    for (double e = min_kev; e <= max_kev + 1e-9; e += step_kev) g.push_back(e);
    return g;
}

/// Synthetic tube-like spectrum: flux(E) = E*(kvp - E) on the open interval
/// (low_cutoff, kvp), zero elsewhere, normalized to total_photons.
inline EnergySpectrum make_spectrum(double kvp, const Vec& grid,
                                    double total_photons = 1e6,
                                    double low_cutoff_kev = 10.0) {
    if (grid.empty()) throw ConfigInvalid("make_spectrum: empty grid");
    if (!(kvp > grid.front()) || !(kvp <= grid.back()))
        throw InvalidKvp("make_spectrum: kvp outside energy grid");
    if (!(total_photons > 0.0)) throw ConfigInvalid("make_spectrum: photon count");

    EnergySpectrum s;
    s.energies = grid;
    s.flux.assign(grid.size(), 0.0);
    s.kvp_label = kvp;
    double total = 0.0;
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const double e = grid[k];
        if (e > low_cutoff_kev && e < kvp) {
            s.flux[k] = e * (kvp - e);
            total += s.flux[k];
        }
    }
    if (!(total > 0.0)) throw InvalidKvp("make_spectrum: empty support");
    const double scale = total_photons / total;
    for (double& f : s.flux) f *= scale;
    return s;
}

// ---------------------------------------------------------------------------
// Materials: mu(E) = a * (E / 30 keV)^-3 + b, photoelectric-like plus a
// constant Compton-like term. Coefficients are synthetic with plausible
// magnitudes; they are not measured data.

struct MaterialSet {
    std::vector<std::string> names;
    std::vector<Vec> mu;  // [material][energy sample], 1/cm

    std::size_t material_count() const { return names.size(); }

    void validate() const {
        if (names.size() != mu.size()) throw DimensionMismatch("MaterialSet: sizes");
        for (const auto& row : mu) {
            for (double v : row)
                if (!(v >= 0.0)) throw ConfigInvalid("MaterialSet: negative mu");
            for (std::size_t k = 1; k < row.size(); ++k)
                if (row[k] > row[k - 1] + 1e-12)
                    throw ConfigInvalid("MaterialSet: mu must not increase with E");
        }
    }

    std::size_t index_of(const std::string& name) const {
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == name) return i;
        throw ConfigInvalid("MaterialSet: unknown material " + name);
    }
};

// Fixed material ordering used by the phantom and default_materials().
inline constexpr std::size_t kSoftTissue = 0, kBone = 1, kMetal = 2, kPlastic = 3;

inline MaterialSet default_materials(const Vec& grid) {
    struct Coeff {
        const char* name;
        double a, b;
    };
    static constexpr Coeff coeffs[] = {
        {"soft_tissue", 0.15, 0.18},
        {"bone", 1.2, 0.28},
        {"metal", 18.0, 1.0},
        {"plastic", 0.10, 0.15},
    };
    MaterialSet ms;
    for (const auto& c : coeffs) {
        ms.names.emplace_back(c.name);
        Vec row(grid.size());
        for (std::size_t k = 0; k < grid.size(); ++k) {
            const double r = grid[k] / 30.0;
            row[k] = c.a / (r * r * r) + c.b;
        }
        ms.mu.push_back(std::move(row));
    }
    ms.validate();
    return ms;
}

// ---------------------------------------------------------------------------
// Images

struct PathLengthMap {
    std::size_t width = 0, height = 0, materials = 0;
    Vec lengths;  // (y*width + x)*materials + m, cm

    double& at(std::size_t x, std::size_t y, std::size_t m) {
        return lengths[(y * width + x) * materials + m];
    }
    double at(std::size_t x, std::size_t y, std::size_t m) const {
        return lengths[(y * width + x) * materials + m];
    }
    std::size_t pixel_count() const { return width * height; }
};

struct MultiChannelImage {
    std::size_t width = 0, height = 0, channels = 0;
    std::vector<std::string> channel_names;
    Vec data;  // (y*width + x)*channels + c

    double& at(std::size_t x, std::size_t y, std::size_t c) {
        return data[(y * width + x) * channels + c];
    }
    double at(std::size_t x, std::size_t y, std::size_t c) const {
        return data[(y * width + x) * channels + c];
    }
    std::size_t pixel_count() const { return width * height; }

    void validate() const {
        if (width == 0 || height == 0 || channels == 0)
            throw DimensionMismatch("MultiChannelImage: zero dimension");
        if (data.size() != width * height * channels)
            throw DimensionMismatch("MultiChannelImage: data size");
        if (!all_finite(data)) throw ConfigInvalid("MultiChannelImage: non-finite data");
    }

    Vec channel(std::size_t c) const {
        Vec out(pixel_count());
        for (std::size_t p = 0; p < pixel_count(); ++p) out[p] = data[p * channels + c];
        return out;
    }
};

// ---------------------------------------------------------------------------
// Beer-Lambert forward projection

/// Detector reading for one pixel: sum_k flux[k] * exp(-sum_i mu(i,k)*l_i),
/// the discrete quadrature of the bin integral over the spectrum's support.
inline double beer_lambert_intensity(const EnergySpectrum& spec, const MaterialSet& mats,
                                     std::span<const double> lengths) {
    if (lengths.size() != mats.material_count())
        throw DimensionMismatch("beer_lambert_intensity: material count");
    const std::size_t K = spec.energies.size();
    for (const auto& row : mats.mu)
        if (row.size() != K)
            throw DimensionMismatch("beer_lambert_intensity: energy grids differ");
    double intensity = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        if (spec.flux[k] == 0.0) continue;
        double att = 0.0;
        for (std::size_t i = 0; i < lengths.size(); ++i)
            att += mats.mu[i][k] * lengths[i];
        intensity += spec.flux[k] * std::exp(-att);
    }
    return intensity;
}

/// Full-image projection for one acquisition; one output channel.
inline MultiChannelImage forward_beer_lambert(const EnergySpectrum& spec,
                                              const MaterialSet& mats,
                                              const PathLengthMap& map) {
    if (map.materials != mats.material_count())
        throw DimensionMismatch("forward_beer_lambert: material count");
    MultiChannelImage img;
    img.width = map.width;
    img.height = map.height;
    img.channels = 1;
    img.channel_names = {"intensity"};
    img.data.resize(map.pixel_count());
    for (std::size_t p = 0; p < map.pixel_count(); ++p) {
        img.data[p] = beer_lambert_intensity(
            spec, mats,
            std::span<const double>(map.lengths.data() + p * map.materials,
                                    map.materials));
    }
    return img;
}

// ---------------------------------------------------------------------------
// Procedural phantom: soft-tissue ellipse, bone ellipses inside, a thin
// rotated metal needle with a plastic grip at one end. Thickness profiles are
// chords through ellipsoids/cylinders so the regression target is continuous.

struct PhantomConfig {
    std::size_t width = 128, height = 128;
    double pixel_size_cm = 0.1;
    double soft_tissue_cm = 12.0;       // max through-plane chord
    double bone_cm = 2.5;               // max chord per bone ellipse
    double needle_diameter_cm = 0.3;    // metal cylinder diameter
    double needle_length_frac = 0.45;   // of image width
    double plastic_cm = 1.5;            // grip thickness
    std::size_t bone_count_min = 2, bone_count_max = 4;

    void validate() const {
        if (width < 16 || height < 16) throw ConfigInvalid("PhantomConfig: dims");
        if (!(pixel_size_cm > 0.0)) throw ConfigInvalid("PhantomConfig: pixel size");
        if (!(soft_tissue_cm > 0.0) || !(bone_cm >= 0.0) ||
            !(needle_diameter_cm > 0.0) || !(plastic_cm >= 0.0))
            throw ConfigInvalid("PhantomConfig: thicknesses");
        if (bone_count_min > bone_count_max || bone_count_max > 8)
            throw ConfigInvalid("PhantomConfig: bone count range");
        if (!(needle_length_frac > 0.0) || needle_length_frac > 0.6)
            throw ConfigInvalid("PhantomConfig: needle length fraction");
    }
};

namespace detail {

struct Ellipse {
    double cx, cy, rx, ry;  // pixels

    // 1 - normalized squared radius; > 0 strictly inside.
    double inside(double x, double y) const {
        const double dx = (x - cx) / rx;
        const double dy = (y - cy) / ry;
        return 1.0 - dx * dx - dy * dy;
    }
};

}  // namespace detail

/// Deterministic per seed. Materials in the order of default_materials():
/// soft_tissue, bone, metal, plastic.
inline PathLengthMap make_phantom(const PhantomConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);

    const double W = static_cast<double>(cfg.width);
    const double H = static_cast<double>(cfg.height);

    const detail::Ellipse body{W / 2.0 + rng.uniform(-0.02, 0.02) * W,
                               H / 2.0 + rng.uniform(-0.02, 0.02) * H,
                               rng.uniform(0.40, 0.44) * W, rng.uniform(0.38, 0.42) * H};

    const std::size_t bone_count =
        cfg.bone_count_min +
        static_cast<std::size_t>(rng.next_below(cfg.bone_count_max - cfg.bone_count_min + 1));
    std::vector<detail::Ellipse> bones;
    for (std::size_t i = 0; i < bone_count; ++i) {
        // Centers inside half the body radius so bones stay within the body.
        const double ang = rng.uniform(0.0, 6.283185307179586);
        const double rad = rng.uniform(0.1, 0.5);
        bones.push_back(detail::Ellipse{body.cx + rad * body.rx * std::cos(ang),
                                        body.cy + rad * body.ry * std::sin(ang),
                                        rng.uniform(0.05, 0.10) * W,
                                        rng.uniform(0.05, 0.10) * H});
    }

    // Needle: a rotated segment through the body interior. Placement is
    // redrawn until needle and grip fit strictly inside the body ellipse
    // (and thus the image); background pixels must stay empty.
    const double needle_len = cfg.needle_length_frac * W;
    const double needle_radius_px = 0.5 * cfg.needle_diameter_cm / cfg.pixel_size_cm;
    const double footprint_half_width = 0.9 * needle_radius_px;
    const double grip_len_px = 4.0 * needle_radius_px + 3.0;
    const double grip_half_width = 2.0 * needle_radius_px + 1.0;

    auto fits_inside_body = [&](double x, double y, double margin_px) {
        const double need = 2.0 * margin_px / std::min(body.rx, body.ry);
        return body.inside(x, y) >= need && x >= margin_px && y >= margin_px &&
               x <= W - margin_px && y <= H - margin_px;
    };
    double ux = 1.0, uy = 0.0, ax = 0.0, ay = 0.0;
    bool placed = false;
    for (int attempt = 0; attempt < 64 && !placed; ++attempt) {
        const double ang = rng.uniform(0.0, 6.283185307179586);
        ux = std::cos(ang);
        uy = std::sin(ang);
        const double mid_x = body.cx + rng.uniform(-0.05, 0.05) * W;
        const double mid_y = body.cy + rng.uniform(-0.05, 0.05) * H;
        ax = mid_x - 0.5 * needle_len * ux;
        ay = mid_y - 0.5 * needle_len * uy;
        const double bx = mid_x + 0.5 * needle_len * ux;
        const double by = mid_y + 0.5 * needle_len * uy;
        placed = fits_inside_body(ax, ay, grip_len_px + grip_half_width) &&
                 fits_inside_body(bx, by, footprint_half_width + 1.0);
    }
    if (!placed)
        throw ConfigInvalid("make_phantom: needle does not fit inside the phantom");

    PathLengthMap map;
    map.width = cfg.width;
    map.height = cfg.height;
    map.materials = 4;
    map.lengths.assign(map.pixel_count() * map.materials, 0.0);

    for (std::size_t py = 0; py < cfg.height; ++py) {
        for (std::size_t px = 0; px < cfg.width; ++px) {
            const double x = static_cast<double>(px) + 0.5;
            const double y = static_cast<double>(py) + 0.5;

            const double body_in = body.inside(x, y);
            if (body_in <= 0.0) continue;  // background: all-zero lengths
            map.at(px, py, kSoftTissue) = cfg.soft_tissue_cm * std::sqrt(body_in);

            for (const auto& bone : bones) {
                const double bin = bone.inside(x, y);
                if (bin > 0.0) map.at(px, py, kBone) += cfg.bone_cm * std::sqrt(bin);
            }

            // Signed coordinates along/across the needle axis.
            const double rxp = x - ax, ryp = y - ay;
            const double along = rxp * ux + ryp * uy;
            const double across = -rxp * uy + ryp * ux;

            if (along >= 0.0 && along <= needle_len &&
                std::abs(across) <= footprint_half_width) {
                // Cylinder chord; strictly positive over the footprint since
                // the footprint half-width is 0.9 of the radius.
                const double d_cm = across * cfg.pixel_size_cm;
                const double r_cm = 0.5 * cfg.needle_diameter_cm;
                map.at(px, py, kMetal) =
                    2.0 * std::sqrt(std::max(r_cm * r_cm - d_cm * d_cm, 0.0));
            }

            // Grip: plastic block just behind the needle's entry end.
            if (along <= 0.0 && along >= -grip_len_px &&
                std::abs(across) <= grip_half_width)
                map.at(px, py, kPlastic) = cfg.plastic_cm;
        }
    }
    return map;
}

// ---------------------------------------------------------------------------
// Poisson noise

/// Each value replaced by a Poisson draw with that value as mean.
/// Deterministic per seed for a given build.
inline MultiChannelImage apply_poisson_noise(const MultiChannelImage& img,
                                             std::uint64_t seed) {
    img.validate();
    for (double v : img.data)
        if (v < 0.0) throw NegativeMean("apply_poisson_noise: negative mean");
    MultiChannelImage out = img;
    std::mt19937_64 engine(seed);
    for (double& v : out.data) {
        if (v == 0.0) continue;
        std::poisson_distribution<long long> dist(v);
        v = static_cast<double>(dist(engine));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Dataset assembly

struct NoiseConfig {
    bool enabled = true;
    std::uint64_t seed = 0;
};

struct DatasetBundle {
    MultiChannelImage features;  // one channel per acquisition
    MultiChannelImage target;    // metal path length, cm
    Vec i0_per_bin;              // flat-field reading per acquisition
};

/// Simulates every acquisition, stacks the per-pixel bin intensities into the
/// feature image, extracts the metal channel as the regression target and
/// records the flat-field vector (all-zero path lengths) for the neg-log
/// operator. Noise applies to the features only; the flat field is treated
/// as a calibrated quantity.
inline DatasetBundle make_dataset(const PathLengthMap& phantom,
                                  const std::vector<EnergySpectrum>& spectra,
                                  const MaterialSet& mats, const NoiseConfig& noise) {
    if (spectra.empty()) throw ConfigInvalid("make_dataset: no spectra");
    DatasetBundle ds;
    ds.features.width = phantom.width;
    ds.features.height = phantom.height;
    ds.features.channels = spectra.size();
    ds.features.data.resize(phantom.pixel_count() * spectra.size());

    const Vec empty_beam(mats.material_count(), 0.0);
    for (std::size_t c = 0; c < spectra.size(); ++c) {
        spectra[c].validate();
        char label[32];
        std::snprintf(label, sizeof(label), "kvp%g", spectra[c].kvp_label);
        ds.features.channel_names.emplace_back(label);
        const MultiChannelImage bin = forward_beer_lambert(spectra[c], mats, phantom);
        for (std::size_t p = 0; p < phantom.pixel_count(); ++p)
            ds.features.data[p * spectra.size() + c] = bin.data[p];
        ds.i0_per_bin.push_back(beer_lambert_intensity(spectra[c], mats, empty_beam));
    }
    if (noise.enabled) ds.features = apply_poisson_noise(ds.features, noise.seed);

    const std::size_t m_metal = mats.index_of("metal");
    ds.target.width = phantom.width;
    ds.target.height = phantom.height;
    ds.target.channels = 1;
    ds.target.channel_names = {"metal_cm"};
    ds.target.data.resize(phantom.pixel_count());
    for (std::size_t p = 0; p < phantom.pixel_count(); ++p)
        ds.target.data[p] = phantom.lengths[p * phantom.materials + m_metal];
    return ds;
}

// ---------------------------------------------------------------------------
// Raster files: <base>.json sidecar header + <base>.f64le flat binary,
// pixel-major then channel.

inline void write_raster(const MultiChannelImage& img,
                         const std::filesystem::path& base) {
    img.validate();
    nlohmann::json header = {{"width", img.width},
                             {"height", img.height},
                             {"channels", img.channels},
                             {"channel_names", img.channel_names},
                             {"dtype", "f64le"}};
    {
        std::ofstream j(base.string() + ".json");
        if (!j) throw IoError("write_raster: cannot open " + base.string() + ".json");
        j << header.dump(2) << '\n';
    }
    std::ofstream bin(base.string() + ".f64le", std::ios::binary);
    if (!bin) throw IoError("write_raster: cannot open " + base.string() + ".f64le");
    bin.write(reinterpret_cast<const char*>(img.data.data()),
              static_cast<std::streamsize>(img.data.size() * sizeof(double)));
    if (!bin) throw IoError("write_raster: write failed");
}

inline MultiChannelImage read_raster(const std::filesystem::path& base) {
    std::ifstream j(base.string() + ".json");
    if (!j) throw IoError("read_raster: cannot open " + base.string() + ".json");
    nlohmann::json header = nlohmann::json::parse(j);
    MultiChannelImage img;
    img.width = header.at("width").get<std::size_t>();
    img.height = header.at("height").get<std::size_t>();
    img.channels = header.at("channels").get<std::size_t>();
    img.channel_names = header.at("channel_names").get<std::vector<std::string>>();
    if (header.value("dtype", "") != "f64le")
        throw IoError("read_raster: unsupported dtype");
    img.data.resize(img.width * img.height * img.channels);
    std::ifstream bin(base.string() + ".f64le", std::ios::binary);
    if (!bin) throw IoError("read_raster: cannot open " + base.string() + ".f64le");
    bin.read(reinterpret_cast<char*>(img.data.data()),
             static_cast<std::streamsize>(img.data.size() * sizeof(double)));
    if (!bin) throw IoError("read_raster: truncated data");
    img.validate();
    return img;
}

}  // namespace kolearn::xray
