#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "pixellens/lightcurves.hpp"
#include "pixellens/rng.hpp"
#include "pixellens/skysim.hpp"

using namespace pixellens;
using lightcurves::EpochSeries;
using lightcurves::LightCurve;

namespace {

EpochSeries constant_series(int w, int h, int n_epochs, float value) {
    std::vector<Frame> frames;
    std::vector<double> times;
    for (int e = 0; e < n_epochs; ++e) {
        frames.push_back(Frame::constant(w, h, value));
        times.push_back(static_cast<double>(e));
    }
    return lightcurves::make_series(std::move(frames), std::move(times));
}

TileSpec full_region(int w, int h, int halo) {
    TileSpec t;
    t.core_w = w;
    t.core_h = h;
    t.halo = halo;
    t.frame_w = w;
    t.frame_h = h;
    return t;
}

}  // namespace

TEST_CASE("constant series with m = 1 gives constant 9.0 curves") {
    const auto series = constant_series(8, 8, 6, 1.0f);
    const auto curves = lightcurves::build_curves(series, 1, full_region(8, 8, 1), 0.0);
    REQUIRE(curves.size() == 64);
    for (const auto& c : curves) {
        const bool interior = c.i >= 1 && c.i < 7 && c.j >= 1 && c.j < 7;
        for (const auto& s : c.samples) {
            if (interior) {
                REQUIRE(s.valid);
                REQUIRE(s.flux == 9.0);
            } else {
                REQUIRE(!s.valid);
            }
        }
    }
}

TEST_CASE("m = 0 reproduces the raw pixel series") {
    Rng rng(1);
    std::vector<Frame> frames;
    std::vector<double> times;
    for (int e = 0; e < 4; ++e) {
        Frame f = Frame::zeros(5, 5);
        for (auto& p : f.pixels) p = static_cast<float>(rng.uniform(0, 100));
        frames.push_back(std::move(f));
        times.push_back(e);
    }
    const auto series = lightcurves::make_series(std::move(frames), std::move(times));
    const auto curves = lightcurves::build_curves(series, 0, full_region(5, 5, 0), 0.0);
    for (const auto& c : curves)
        for (std::size_t e = 0; e < c.samples.size(); ++e)
            REQUIRE(c.samples[e].flux == static_cast<double>(series.epochs[e].at(c.j, c.i)));
}

TEST_CASE("window sums equal a brute-force oracle on a 32x32x5 series") {
    Rng rng(2);
    std::vector<Frame> frames;
    std::vector<double> times;
    for (int e = 0; e < 5; ++e) {
        Frame f = Frame::zeros(32, 32);
        for (auto& p : f.pixels) p = static_cast<float>(rng.uniform(-50, 150));
        frames.push_back(std::move(f));
        times.push_back(e);
    }
    const auto series = lightcurves::make_series(std::move(frames), std::move(times));
    const int m = 3;
    const auto curves = lightcurves::build_curves(series, m, full_region(32, 32, m), 5.0);
    for (const auto& c : curves) {
        for (std::size_t e = 0; e < c.samples.size(); ++e) {
            if (!c.samples[e].valid) continue;
            double sum = 0;
            for (int y = c.i - m; y <= c.i + m; ++y)
                for (int x = c.j - m; x <= c.j + m; ++x)
                    sum += static_cast<double>(series.epochs[e].at(x, y));
            REQUIRE(c.samples[e].flux == sum);
        }
    }
}

TEST_CASE("per-tile curves with halo m are bit-identical to full-frame curves") {
    Rng rng(3);
    std::vector<Frame> frames;
    std::vector<double> times;
    for (int e = 0; e < 6; ++e) {
        Frame f = Frame::zeros(48, 40);
        f.ensure_mask();
        for (auto& p : f.pixels) p = static_cast<float>(rng.uniform(0, 500));
        // Sprinkle masked pixels; they must invalidate the same samples on
        // both paths.
        for (int k = 0; k < 10; ++k)
            f.mask[rng.uniform_index(f.mask.size())] = 1;
        frames.push_back(std::move(f));
        times.push_back(e);
    }
    const auto series = lightcurves::make_series(std::move(frames), std::move(times));
    const int m = 3;

    const auto full = lightcurves::build_curves(series, m, full_region(48, 40, m), 5.0);
    auto find_full = [&](int i, int j) -> const LightCurve& {
        return full[static_cast<std::size_t>(i) * 48 + j];
    };

    for (const auto& tile : tile_partition(48, 40, 4, m)) {
        const auto cut = lightcurves::cut_series(series, tile);
        const auto tile_curves = lightcurves::build_curves(cut, m, tile, 5.0);
        REQUIRE(tile_curves.size() ==
                static_cast<std::size_t>(tile.core_w) * static_cast<std::size_t>(tile.core_h));
        for (const auto& c : tile_curves) {
            const auto& ref = find_full(c.i, c.j);
            for (std::size_t e = 0; e < c.samples.size(); ++e) {
                REQUIRE(c.samples[e].valid == ref.samples[e].valid);
                REQUIRE(c.samples[e].flux == ref.samples[e].flux);
                REQUIRE(c.samples[e].sigma == ref.samples[e].sigma);
            }
        }
    }
}

TEST_CASE("an injected event's curve peaks at the epoch nearest t0") {
    CampaignConfig cfg;
    cfg.seed = 10;
    cfg.width = 64;
    cfg.height = 64;
    cfg.read_noise = 0;
    cfg.shot_noise = false;

    EventConfig ev;
    ev.x = 30.0;
    ev.y = 28.0;
    ev.u0 = 0.5;
    ev.t0 = 4.3;
    ev.tE = 2.0;
    ev.flux = 1000.0;

    std::vector<Frame> frames;
    std::vector<double> times;
    skysim::StarCatalog cat;
    for (int e = 0; e < 10; ++e) {
        EpochConfig ep;
        ep.id = e;
        ep.t = e;
        ep.seeing_fwhm = 2.5;
        ep.sky = 50.0;
        frames.push_back(skysim::render_scene_plus_sky(cat, ep, {ev}, cfg));
        times.push_back(e);
    }
    const auto series = lightcurves::make_series(std::move(frames), std::move(times));
    const auto curves = lightcurves::build_curves(series, 3, full_region(64, 64, 3), 5.0);
    const auto& c = curves[28 * 64 + 30];
    std::size_t peak = 0;
    for (std::size_t e = 1; e < c.samples.size(); ++e)
        if (c.samples[e].flux > c.samples[peak].flux) peak = e;
    CHECK(peak == 4);
}

TEST_CASE("baseline stats: constant, ramp and Monte Carlo") {
    LightCurve c;
    for (int i = 0; i < 5; ++i) c.samples.push_back({static_cast<double>(i), 10.0, 1.0, true});
    auto b = lightcurves::baseline_stats(c);
    CHECK(b.baseline == 10.0);
    CHECK(b.sigma == 0.0);

    LightCurve ramp;
    Rng rng(8);
    std::vector<double> vals;
    for (int i = 1; i <= 101; ++i) vals.push_back(i);
    for (std::size_t i = vals.size(); i > 1; --i) std::swap(vals[i - 1], vals[rng.uniform_index(i)]);
    for (std::size_t i = 0; i < vals.size(); ++i)
        ramp.samples.push_back({static_cast<double>(i), vals[i], 1.0, true});
    b = lightcurves::baseline_stats(ramp);
    CHECK(b.baseline == 51.0);
    CHECK_THAT(b.sigma, Catch::Matchers::WithinAbs(37.065, 1e-9));

    LightCurve noise;
    for (int i = 0; i < 1000; ++i)
        noise.samples.push_back({static_cast<double>(i), rng.gaussian(0.0, 3.0), 1.0, true});
    b = lightcurves::baseline_stats(noise);
    CHECK(b.sigma > 2.7);
    CHECK(b.sigma < 3.3);
}

TEST_CASE("baseline stats need at least 5 valid samples") {
    LightCurve c;
    for (int i = 0; i < 6; ++i) c.samples.push_back({static_cast<double>(i), 1.0, 1.0, i < 4});
    CHECK_THROWS_WITH(lightcurves::baseline_stats(c),
                      Catch::Matchers::ContainsSubstring("curve too short"));
}

TEST_CASE("curve binary export round-trips") {
    Rng rng(6);
    std::vector<LightCurve> curves;
    for (int k = 0; k < 7; ++k) {
        LightCurve c;
        c.i = k;
        c.j = 2 * k;
        for (int e = 0; e < 5; ++e)
            c.samples.push_back({static_cast<double>(e), rng.uniform(0, 1000),
                                 rng.uniform(0.5, 5.0), rng.uniform() < 0.9});
        curves.push_back(std::move(c));
    }
    const auto path = std::filesystem::temp_directory_path() / "pixellens_curves.bin";
    lightcurves::write_curves(curves, path.string());
    const auto read = lightcurves::read_curves(path.string());
    REQUIRE(read.size() == curves.size());
    for (std::size_t k = 0; k < curves.size(); ++k) {
        REQUIRE(read[k].i == curves[k].i);
        REQUIRE(read[k].j == curves[k].j);
        for (std::size_t e = 0; e < curves[k].samples.size(); ++e) {
            REQUIRE(read[k].samples[e].t == curves[k].samples[e].t);
            REQUIRE(read[k].samples[e].flux == curves[k].samples[e].flux);
            REQUIRE(read[k].samples[e].sigma == curves[k].samples[e].sigma);
            REQUIRE(read[k].samples[e].valid == curves[k].samples[e].valid);
        }
    }
}
