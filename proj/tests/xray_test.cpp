#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>

#include "kolearn/xray.hpp"

using namespace kolearn;
using xray::EnergySpectrum;
using xray::MaterialSet;
using xray::MultiChannelImage;
using xray::PathLengthMap;
using xray::PhantomConfig;

namespace {

const Vec kGrid = xray::make_energy_grid();  // 10..150 keV, 1 keV steps

}  // namespace

// ---------------------------------------------------------------------------
// Spectra

TEST(Spectrum, NoPhotonsAtOrAboveTubeVoltage) {
    const EnergySpectrum s = xray::make_spectrum(70.0, kGrid);
    for (std::size_t k = 0; k < s.energies.size(); ++k)
        if (s.energies[k] >= 70.0) EXPECT_EQ(s.flux[k], 0.0);
    s.validate();
}

TEST(Spectrum, SupportIsOpenInterval) {
    // kvp = 125 on the 10..150 grid: photons exactly on (10, 125).
    const EnergySpectrum s = xray::make_spectrum(125.0, kGrid);
    for (std::size_t k = 0; k < s.energies.size(); ++k) {
        const double e = s.energies[k];
        if (e > 10.0 && e < 125.0)
            EXPECT_GT(s.flux[k], 0.0) << "E=" << e;
        else
            EXPECT_EQ(s.flux[k], 0.0) << "E=" << e;
    }
}

TEST(Spectrum, NormalizedToConfiguredPhotonCount) {
    for (double kvp : {41.0, 70.0, 125.0}) {
        const EnergySpectrum s = xray::make_spectrum(kvp, kGrid, 1e6);
        EXPECT_NEAR(s.total_flux() / 1e6, 1.0, 1e-9) << kvp;
    }
    const EnergySpectrum tiny = xray::make_spectrum(70.0, kGrid, 2500.0);
    EXPECT_NEAR(tiny.total_flux() / 2500.0, 1.0, 1e-9);
}

TEST(Spectrum, RejectsKvpOutsideGrid) {
    EXPECT_THROW(xray::make_spectrum(200.0, kGrid), InvalidKvp);
    EXPECT_THROW(xray::make_spectrum(5.0, kGrid), InvalidKvp);
    EXPECT_THROW(xray::make_spectrum(10.0, kGrid), InvalidKvp);  // empty support
}

// ---------------------------------------------------------------------------
// Beer-Lambert projection

TEST(BeerLambert, EmptyBeamSeesTotalFlux) {
    const EnergySpectrum s = xray::make_spectrum(70.0, kGrid);
    const MaterialSet mats = xray::default_materials(kGrid);
    const Vec zeros(mats.material_count(), 0.0);
    EXPECT_EQ(xray::beer_lambert_intensity(s, mats, zeros), s.total_flux());
}

TEST(BeerLambert, MonoenergeticScalarOracle) {
    EnergySpectrum s;
    s.energies = {60.0, 61.0};
    s.flux = {12345.0, 0.0};
    s.kvp_label = 61.0;
    MaterialSet mats;
    mats.names = {"m"};
    mats.mu = {{0.31, 0.31}};
    const double l = 2.7;
    EXPECT_NEAR(xray::beer_lambert_intensity(s, mats, Vec{l}),
                12345.0 * std::exp(-0.31 * l), 1e-9);
}

TEST(BeerLambert, DoublingLengthsSquaresTransmissions) {
    // Per-energy oracle: I(2l) = sum_k flux_k * t_k^2 where t_k is the
    // single-length transmission at energy k.
    const EnergySpectrum s = xray::make_spectrum(125.0, kGrid);
    const MaterialSet mats = xray::default_materials(kGrid);
    const Vec l = {3.0, 0.7, 0.05, 0.4};
    Vec doubled = l;
    for (double& v : doubled) v *= 2.0;

    double oracle = 0.0;
    for (std::size_t k = 0; k < kGrid.size(); ++k) {
        double att = 0.0;
        for (std::size_t i = 0; i < l.size(); ++i) att += mats.mu[i][k] * l[i];
        const double t = std::exp(-att);
        oracle += s.flux[k] * t * t;
    }
    const double got = xray::beer_lambert_intensity(s, mats, doubled);
    EXPECT_NEAR(got / oracle, 1.0, 1e-12);
}

TEST(BeerLambert, IntensityStrictlyDecreasesWithAnyLength) {
    const EnergySpectrum s = xray::make_spectrum(70.0, kGrid);
    const MaterialSet mats = xray::default_materials(kGrid);
    Vec l = {2.0, 0.5, 0.1, 0.3};
    const double base = xray::beer_lambert_intensity(s, mats, l);
    for (std::size_t i = 0; i < l.size(); ++i) {
        Vec more = l;
        more[i] += 0.25;
        EXPECT_LT(xray::beer_lambert_intensity(s, mats, more), base) << i;
    }
}

TEST(BeerLambert, ConservesFlux) {
    // 0 < I <= flat field for every pixel of a simulated phantom.
    PhantomConfig cfg;
    cfg.width = cfg.height = 48;
    const PathLengthMap map = xray::make_phantom(cfg, 4);
    const EnergySpectrum s = xray::make_spectrum(70.0, kGrid);
    const MaterialSet mats = xray::default_materials(kGrid);
    const MultiChannelImage img = xray::forward_beer_lambert(s, mats, map);
    const double flat = s.total_flux();
    for (double v : img.data) {
        EXPECT_GT(v, 0.0);
        EXPECT_LE(v, flat);
    }
}

TEST(BeerLambert, BeamHardeningOnThicknessRamp) {
    // Polychromatic single-material ramp: -log(I/I0)/l falls as l grows.
    const EnergySpectrum s = xray::make_spectrum(70.0, kGrid);
    MaterialSet mats = xray::default_materials(kGrid);
    const double flat = s.total_flux();
    double prev = std::numeric_limits<double>::infinity();
    for (double l = 1.0; l <= 10.0; l += 1.0) {
        const Vec lengths = {l, 0.0, 0.0, 0.0};
        const double intensity = xray::beer_lambert_intensity(s, mats, lengths);
        const double ratio = -std::log(intensity / flat) / l;
        EXPECT_LT(ratio, prev) << "l=" << l;
        prev = ratio;
    }
}

TEST(Materials, AttenuationNonIncreasingWithEnergy) {
    const MaterialSet mats = xray::default_materials(kGrid);
    mats.validate();
    EXPECT_EQ(mats.material_count(), 4u);
    EXPECT_EQ(mats.index_of("metal"), xray::kMetal);
}

// ---------------------------------------------------------------------------
// Phantom

TEST(Phantom, BackgroundPixelsAreAllZero) {
    PhantomConfig cfg;
    cfg.width = cfg.height = 64;
    const PathLengthMap map = xray::make_phantom(cfg, 11);
    std::size_t interior = 0;
    for (std::size_t p = 0; p < map.pixel_count(); ++p) {
        const double soft = map.lengths[p * map.materials + xray::kSoftTissue];
        if (soft == 0.0) {
            for (std::size_t m = 0; m < map.materials; ++m)
                EXPECT_EQ(map.lengths[p * map.materials + m], 0.0);
        } else {
            ++interior;
        }
    }
    EXPECT_GT(interior, map.pixel_count() / 4);
    EXPECT_LT(interior, map.pixel_count());
}

TEST(Phantom, NeedleAndGripArePresentAndInterior) {
    PhantomConfig cfg;
    const PathLengthMap map = xray::make_phantom(cfg, 7);
    std::size_t metal_px = 0, plastic_px = 0;
    double max_metal = 0.0;
    for (std::size_t p = 0; p < map.pixel_count(); ++p) {
        const double soft = map.lengths[p * map.materials + xray::kSoftTissue];
        const double metal = map.lengths[p * map.materials + xray::kMetal];
        const double plastic = map.lengths[p * map.materials + xray::kPlastic];
        if (metal > 0.0) {
            ++metal_px;
            EXPECT_GT(soft, 0.0);  // needle stays inside the body
            max_metal = std::max(max_metal, metal);
        }
        if (plastic > 0.0) {
            ++plastic_px;
            EXPECT_GT(soft, 0.0);
        }
    }
    EXPECT_GT(metal_px, 20u);
    EXPECT_LT(metal_px, map.pixel_count() / 10);
    EXPECT_GT(plastic_px, 10u);
    // Cylinder chord never exceeds the needle diameter.
    EXPECT_LE(max_metal, cfg.needle_diameter_cm + 1e-12);
    EXPECT_GT(max_metal, 0.8 * cfg.needle_diameter_cm);
}

TEST(Phantom, DeterministicPerSeed) {
    PhantomConfig cfg;
    cfg.width = cfg.height = 64;
    const PathLengthMap a = xray::make_phantom(cfg, 21);
    const PathLengthMap b = xray::make_phantom(cfg, 21);
    ASSERT_EQ(a.lengths.size(), b.lengths.size());
    EXPECT_EQ(std::memcmp(a.lengths.data(), b.lengths.data(),
                          a.lengths.size() * sizeof(double)),
              0);
    const PathLengthMap c = xray::make_phantom(cfg, 22);
    EXPECT_NE(std::memcmp(a.lengths.data(), c.lengths.data(),
                          a.lengths.size() * sizeof(double)),
              0);
}

TEST(Phantom, ImpossibleNeedlePlacementThrows) {
    PhantomConfig cfg;
    cfg.width = cfg.height = 16;
    cfg.needle_diameter_cm = 3.0;  // grip footprint larger than the image
    EXPECT_THROW(xray::make_phantom(cfg, 1), ConfigInvalid);
}

// ---------------------------------------------------------------------------
// Poisson noise

TEST(PoissonNoise, ZeroMeanStaysZero) {
    MultiChannelImage img;
    img.width = 4;
    img.height = 1;
    img.channels = 1;
    img.channel_names = {"c"};
    img.data = {0.0, 0.0, 0.0, 0.0};
    const MultiChannelImage out = xray::apply_poisson_noise(img, 9);
    for (double v : out.data) EXPECT_EQ(v, 0.0);
}

TEST(PoissonNoise, SampleMeanMatchesStatisticalOracle) {
    const std::size_t n = 100000;
    MultiChannelImage img;
    img.width = n;
    img.height = 1;
    img.channels = 1;
    img.channel_names = {"c"};
    img.data.assign(n, 1000.0);
    const MultiChannelImage out = xray::apply_poisson_noise(img, 123);
    double mean = 0.0;
    for (double v : out.data) mean += v;
    mean /= static_cast<double>(n);
    // Standard error of the mean is sqrt(1000/n) = 0.1; allow five sigma.
    EXPECT_NEAR(mean, 1000.0, 0.5);
}

TEST(PoissonNoise, DeterministicPerSeed) {
    MultiChannelImage img;
    img.width = 64;
    img.height = 1;
    img.channels = 1;
    img.channel_names = {"c"};
    Rng rng(5);
    img.data.resize(64);
    for (double& v : img.data) v = rng.uniform(0.0, 5000.0);
    const MultiChannelImage a = xray::apply_poisson_noise(img, 77);
    const MultiChannelImage b = xray::apply_poisson_noise(img, 77);
    EXPECT_EQ(a.data, b.data);
}

TEST(PoissonNoise, RejectsNegativeMeans) {
    MultiChannelImage img;
    img.width = 1;
    img.height = 1;
    img.channels = 1;
    img.channel_names = {"c"};
    img.data = {-1.0};
    EXPECT_THROW(xray::apply_poisson_noise(img, 1), NegativeMean);
}

// ---------------------------------------------------------------------------
// Dataset assembly

namespace {

xray::DatasetBundle small_dataset(bool noise, std::uint64_t seed,
                                  std::size_t size = 48) {
    PhantomConfig cfg;
    cfg.width = cfg.height = size;
    const PathLengthMap map = xray::make_phantom(cfg, seed);
    const MaterialSet mats = xray::default_materials(kGrid);
    std::vector<EnergySpectrum> spectra;
    for (double kvp : {41.0, 70.0, 125.0})
        spectra.push_back(xray::make_spectrum(kvp, kGrid));
    return xray::make_dataset(map, spectra, mats, {noise, derive_seed(seed, 2)});
}

}  // namespace

TEST(Dataset, FeatureCountingAndShape) {
    const auto ds = small_dataset(false, 3);
    EXPECT_EQ(ds.features.channels, 3u);
    EXPECT_EQ(ds.features.pixel_count(), 48u * 48u);
    EXPECT_EQ(ds.features.data.size(), 48u * 48u * 3u);
    EXPECT_EQ(ds.target.channels, 1u);
    EXPECT_EQ(ds.i0_per_bin.size(), 3u);
    EXPECT_EQ(ds.features.channel_names[0], "kvp41");
}

TEST(Dataset, FlatFieldPixelEqualsI0WithoutNoise) {
    const auto ds = small_dataset(false, 3);
    // Corner pixel lies outside the body ellipse: zero path lengths.
    for (std::size_t c = 0; c < 3; ++c)
        EXPECT_EQ(ds.features.at(0, 0, c), ds.i0_per_bin[c]);
}

TEST(Dataset, NoiseDisabledIsExactSimulation) {
    const auto clean = small_dataset(false, 5);
    const auto noisy = small_dataset(true, 5);
    EXPECT_NE(clean.features.data, noisy.features.data);
    // Targets and flat fields are untouched by noise.
    EXPECT_EQ(clean.target.data, noisy.target.data);
    EXPECT_EQ(clean.i0_per_bin, noisy.i0_per_bin);
}

TEST(Dataset, RemovingMetalChangesOnlyNeedlePixels) {
    // The needle-subtraction protocol in silico: re-simulate without the
    // metal channel and diff.
    PhantomConfig cfg;
    cfg.width = cfg.height = 48;
    const PathLengthMap with_needle = xray::make_phantom(cfg, 13);
    PathLengthMap without = with_needle;
    for (std::size_t p = 0; p < without.pixel_count(); ++p)
        without.lengths[p * without.materials + xray::kMetal] = 0.0;

    const MaterialSet mats = xray::default_materials(kGrid);
    const EnergySpectrum s = xray::make_spectrum(125.0, kGrid);
    const MultiChannelImage a = xray::forward_beer_lambert(s, mats, with_needle);
    const MultiChannelImage b = xray::forward_beer_lambert(s, mats, without);
    for (std::size_t p = 0; p < a.pixel_count(); ++p) {
        const bool under_needle =
            with_needle.lengths[p * with_needle.materials + xray::kMetal] > 0.0;
        if (under_needle)
            EXPECT_LT(a.data[p], b.data[p]);
        else
            EXPECT_EQ(a.data[p], b.data[p]);
    }
}

// ---------------------------------------------------------------------------
// Raster IO

TEST(Raster, RoundTripIsExact) {
    const auto ds = small_dataset(true, 8, 24);
    const auto dir = std::filesystem::temp_directory_path() / "kolearn_raster_test";
    std::filesystem::create_directories(dir);
    xray::write_raster(ds.features, dir / "features");
    const MultiChannelImage back = xray::read_raster(dir / "features");
    EXPECT_EQ(back.width, ds.features.width);
    EXPECT_EQ(back.height, ds.features.height);
    EXPECT_EQ(back.channels, ds.features.channels);
    EXPECT_EQ(back.channel_names, ds.features.channel_names);
    EXPECT_EQ(back.data, ds.features.data);
    std::filesystem::remove_all(dir);
}
