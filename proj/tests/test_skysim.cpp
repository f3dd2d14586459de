#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "pixellens/skysim.hpp"

using namespace pixellens;

namespace {

// All stochastic and instrumental effects off; callers re-enable what they
// test.
CampaignConfig quiet_config(int w = 64, int h = 64) {
    CampaignConfig c;
    c.seed = 99;
    c.width = w;
    c.height = h;
    c.n_stars = 0;
    c.bias_level = 0.0;
    c.bias_gradient = 0.0;
    c.dark_rate = 0.0;
    c.hot_pixels = 0;
    c.flat_vignette = 0.0;
    c.dead_pixels = 0;
    c.read_noise = 0.0;
    c.shot_noise = false;
    c.calib_noise = 0.0;
    c.background_gradient = 0.0;
    return c;
}

EpochConfig quiet_epoch(int id, double t) {
    EpochConfig e;
    e.id = id;
    e.t = t;
    e.exposure = 1.0;
    e.seeing_fwhm = 2.5;
    e.sky = 0.0;
    e.gain = 1.0;
    e.offset = 0.0;
    e.n_cosmics = 0;
    return e;
}

}  // namespace

TEST_CASE("generate_catalog is deterministic, bounded and respects the flux range") {
    const auto empty = skysim::generate_catalog(1, 0, 64, 64, 100, 10000);
    CHECK(empty.entries.empty());

    const auto a = skysim::generate_catalog(42, 500, 512, 512, 100, 10000);
    const auto b = skysim::generate_catalog(42, 500, 512, 512, 100, 10000);
    REQUIRE(a.entries.size() == 500);
    REQUIRE(b.entries.size() == 500);
    for (std::size_t i = 0; i < a.entries.size(); ++i) {
        REQUIRE(a.entries[i].x == b.entries[i].x);
        REQUIRE(a.entries[i].y == b.entries[i].y);
        REQUIRE(a.entries[i].flux == b.entries[i].flux);
        REQUIRE(a.entries[i].x >= 0.0);
        REQUIRE(a.entries[i].x < 512.0);
        REQUIRE(a.entries[i].y >= 0.0);
        REQUIRE(a.entries[i].y < 512.0);
        REQUIRE(a.entries[i].flux >= 100.0);
        REQUIRE(a.entries[i].flux <= 10000.0);
    }

    const auto c = skysim::generate_catalog(43, 500, 512, 512, 100, 10000);
    CHECK(a.entries[0].x != c.entries[0].x);
}

TEST_CASE("with everything off the raw frame equals the bias surface exactly") {
    auto cfg = quiet_config();
    cfg.bias_level = 300.0;
    cfg.bias_gradient = 20.0;
    const auto truth = skysim::make_truth(cfg);
    const auto cat = skysim::generate_catalog(cfg.seed, 0, cfg.width, cfg.height, 100, 1000);
    const auto raw = skysim::render_epoch(cat, quiet_epoch(0, 0.0), {}, truth, cfg);
    REQUIRE(raw.pixels.size() == truth.bias.pixels.size());
    for (std::size_t i = 0; i < raw.pixels.size(); ++i)
        REQUIRE(raw.pixels[i] == truth.bias.pixels[i]);
}

TEST_CASE("identical parameters and substreams render identical frames") {
    auto cfg = quiet_config();
    cfg.n_stars = 1;
    cfg.read_noise = 5.0;
    cfg.shot_noise = true;
    const auto truth = skysim::make_truth(cfg);
    const auto cat = skysim::generate_catalog(cfg.seed, 1, cfg.width, cfg.height, 500, 500);
    auto ep = quiet_epoch(3, 3.0);
    ep.sky = 50.0;
    const auto f1 = skysim::render_epoch(cat, ep, {}, truth, cfg);
    const auto f2 = skysim::render_epoch(cat, ep, {}, truth, cfg);
    REQUIRE(bitwise_equal(f1, f2));
}

TEST_CASE("an event at u0 = 1 amplifies the source by 3/sqrt(5) at t0") {
    auto cfg = quiet_config(96, 96);
    const auto truth = skysim::make_truth(cfg);
    const auto cat = skysim::generate_catalog(cfg.seed, 0, cfg.width, cfg.height, 100, 1000);

    EventConfig ev;
    ev.x = 48.2;
    ev.y = 47.7;
    ev.u0 = 1.0;
    ev.t0 = 15.0;
    ev.tE = 4.0;
    ev.flux = 1000.0;

    const auto peak = skysim::render_epoch(cat, quiet_epoch(0, 15.0), {ev}, truth, cfg);
    const auto base = skysim::render_epoch(cat, quiet_epoch(1, 415.0), {ev}, truth, cfg);
    double sum_peak = 0, sum_base = 0;
    for (std::size_t i = 0; i < peak.pixels.size(); ++i) {
        sum_peak += peak.pixels[i];
        sum_base += base.pixels[i];
    }
    // 3/sqrt(5) = 1.3416408; the baseline epoch sits 100 Einstein times out.
    CHECK_THAT(sum_peak / sum_base, Catch::Matchers::WithinAbs(1.3416408, 1e-3));

    // The closed-form rate matches the amplification formula bit for bit.
    CHECK(skysim::event_flux_rate(ev, 15.0) == 1000.0 * trigger2::pspl_amplification(1.0));
}

TEST_CASE("events outside the frame are rejected") {
    auto cfg = quiet_config();
    const auto truth = skysim::make_truth(cfg);
    const auto cat = skysim::generate_catalog(cfg.seed, 0, cfg.width, cfg.height, 100, 1000);
    EventConfig ev;
    ev.x = -5.0;
    ev.y = 10.0;
    CHECK_THROWS_WITH(skysim::render_epoch(cat, quiet_epoch(0, 0.0), {ev}, truth, cfg),
                      Catch::Matchers::ContainsSubstring("event outside frame bounds"));
}

TEST_CASE("noiseless calibration frames equal the truth surfaces") {
    auto cfg = quiet_config();
    cfg.bias_level = 300.0;
    cfg.bias_gradient = 10.0;
    cfg.dark_rate = 2.0;
    cfg.n_bias = 3;
    cfg.n_dark = 3;
    cfg.n_flat = 3;
    cfg.dark_exposure = 2.0;
    cfg.flat_level = 1000.0;
    const auto truth = skysim::make_truth(cfg);
    const auto set = skysim::render_calibration_set(truth, cfg);
    REQUIRE(set.bias.size() == 3);
    for (const auto& f : set.bias)
        for (std::size_t i = 0; i < f.pixels.size(); ++i)
            REQUIRE(f.pixels[i] == truth.bias.pixels[i]);

    // Darks at exposure 2 s with rate r: mean pixel = bias + 2r.
    for (const auto& f : set.dark)
        for (std::size_t i = 0; i < f.pixels.size(); ++i)
            REQUIRE_THAT(static_cast<double>(f.pixels[i]),
                         Catch::Matchers::WithinAbs(
                             static_cast<double>(truth.bias.pixels[i]) + 2.0 * 2.0, 1e-4));
}

TEST_CASE("ten noisy flats average back to the truth surface") {
    auto cfg = quiet_config(32, 32);
    cfg.calib_noise = 0.001;
    cfg.n_flat = 10;
    cfg.flat_level = 1.0;
    cfg.flat_vignette = 0.05;
    const auto truth = skysim::make_truth(cfg);
    const auto set = skysim::render_calibration_set(truth, cfg);
    REQUIRE(set.flat.size() == 10);

    double max_err = 0.0, rms = 0.0;
    for (std::size_t i = 0; i < truth.flat.pixels.size(); ++i) {
        double mean = 0.0;
        for (const auto& f : set.flat) mean += f.pixels[i];
        mean /= 10.0;
        const double expect = static_cast<double>(truth.flat.pixels[i]) * cfg.flat_level;
        const double err = std::fabs(mean - expect);
        max_err = std::max(max_err, err);
        rms += err * err;
    }
    rms = std::sqrt(rms / static_cast<double>(truth.flat.pixels.size()));
    // sigma_mean = 0.001/sqrt(10); the 0.001 bound is ~3 sigma_mean, allow a
    // deterministic-seed excursion to 0.0015 on the max over 1024 pixels.
    CHECK(rms < 0.001);
    CHECK(max_err < 0.0015);
}

TEST_CASE("ground truth sidecar lists every event with its amplification history") {
    auto cfg = quiet_config();
    cfg.epochs = {quiet_epoch(0, 0.0), quiet_epoch(1, 1.0), quiet_epoch(2, 2.0)};
    EventConfig ev;
    ev.x = 30.0;
    ev.y = 30.0;
    ev.u0 = 0.5;
    ev.t0 = 1.0;
    ev.tE = 1.0;
    ev.flux = 1000.0;
    cfg.events = {ev};
    const auto gt = skysim::ground_truth(cfg);
    REQUIRE(gt.size() == 1);
    REQUIRE(gt[0].per_epoch.size() == 3);
    CHECK(gt[0].per_epoch[1].amplification == trigger2::pspl_amplification(0.5));
    CHECK(gt[0].per_epoch[0].amplification < gt[0].per_epoch[1].amplification);
}
