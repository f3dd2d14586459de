#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "pixellens/config.hpp"
#include "pixellens/frame.hpp"
#include "pixellens/rng.hpp"
#include "pixellens/trigger2.hpp"

// Synthetic observation generator standing in for the acquisition hardware.
// Produces multi-night raw CCD frames with known ground truth: star field,
// per-night photometric/geometric/seeing conditions, injected microlensing
// events, calibration surfaces and noise. Everything is a pure function of
// the campaign master seed.

namespace pixellens::skysim {

using InjectedEvent = EventConfig;

struct StarCatalog {
    struct Star {
        double x = 0.0;
        double y = 0.0;
        double flux = 0.0;  // ADU per second
    };
    std::vector<Star> entries;
    std::uint64_t seed = 0;
};

// Deterministic star field: positions uniform with a 2 px margin, fluxes
// log-uniform in [flux_min, flux_max].
inline StarCatalog generate_catalog(std::uint64_t seed, int n_stars, int width, int height,
                                    double flux_min, double flux_max) {
    if (n_stars < 0) throw pipeline_error("generate_catalog: n_stars must be >= 0");
    if (width < 5 || height < 5)
        if (n_stars > 0) throw pipeline_error("generate_catalog: bounds too small for stars");
    if (flux_min <= 0 || flux_max < flux_min)
        throw pipeline_error("generate_catalog: need 0 < flux_min <= flux_max");
    StarCatalog cat;
    cat.seed = seed;
    auto rng = substream(seed, "catalog");
    cat.entries.reserve(static_cast<std::size_t>(n_stars));
    const double lf0 = std::log(flux_min), lf1 = std::log(flux_max);
    for (int i = 0; i < n_stars; ++i) {
        StarCatalog::Star s;
        s.x = rng.uniform(2.0, width - 3.0);
        s.y = rng.uniform(2.0, height - 3.0);
        s.flux = std::exp(rng.uniform(lf0, lf1));
        cat.entries.push_back(s);
    }
    return cat;
}

// True calibration surfaces the reduction stage has to recover.
struct CalibrationTruth {
    Frame bias;       // ADU
    Frame dark_rate;  // ADU per second
    Frame flat;       // dimensionless, mean 1 over live pixels
};

inline CalibrationTruth make_truth(const CampaignConfig& c) {
    const int w = c.width, h = c.height;
    CalibrationTruth t;
    t.bias = Frame::zeros(w, h);
    t.dark_rate = Frame::zeros(w, h);
    t.flat = Frame::zeros(w, h);

    const double two_pi = 6.283185307179586;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double bias = c.bias_level +
                                c.bias_gradient * 0.5 *
                                    (std::sin(two_pi * x / w) + std::cos(two_pi * y / h));
            t.bias.at(x, y) = static_cast<float>(bias);
            t.dark_rate.at(x, y) = static_cast<float>(c.dark_rate);
        }
    }

    auto rng = substream(c.seed, "truth");
    for (int i = 0; i < c.hot_pixels; ++i) {
        const int x = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(w)));
        const int y = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(h)));
        t.dark_rate.at(x, y) = static_cast<float>(c.hot_pixel_rate);
    }

    const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
    const double r2max = cx * cx + cy * cy;
    std::vector<double> flat(static_cast<std::size_t>(w) * h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double r2 = ((x - cx) * (x - cx) + (y - cy) * (y - cy)) / (r2max > 0 ? r2max : 1);
            flat[static_cast<std::size_t>(y) * w + x] = 1.0 - c.flat_vignette * r2;
        }
    }
    for (int i = 0; i < c.dead_pixels; ++i) {
        const int x = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(w)));
        const int y = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(h)));
        flat[static_cast<std::size_t>(y) * w + x] = 0.01;
    }
    // Normalize live pixels to mean 1 so recovered and true flats compare
    // directly.
    double sum = 0.0;
    std::size_t n_live = 0;
    for (double f : flat)
        if (f > 0.1) {
            sum += f;
            ++n_live;
        }
    const double mean = n_live > 0 ? sum / static_cast<double>(n_live) : 1.0;
    for (std::size_t i = 0; i < flat.size(); ++i)
        t.flat.pixels[i] = static_cast<float>(flat[i] > 0.1 ? flat[i] / mean : flat[i]);
    return t;
}

// Per-night pointing model: rotation about the frame center, then shift.
struct EpochTransform {
    double cx, cy, cos_r, sin_r, dx, dy;

    static EpochTransform from(const EpochConfig& e, int width, int height) {
        EpochTransform t;
        t.cx = (width - 1) / 2.0;
        t.cy = (height - 1) / 2.0;
        t.cos_r = std::cos(e.rot);
        t.sin_r = std::sin(e.rot);
        t.dx = e.dx;
        t.dy = e.dy;
        return t;
    }

    void apply(double x, double y, double& ox, double& oy) const {
        ox = cx + cos_r * (x - cx) - sin_r * (y - cy) + dx;
        oy = cy + sin_r * (x - cx) + cos_r * (y - cy) + dy;
    }
};

namespace detail {

inline constexpr double kFwhmToSigma = 2.3548200450309493;  // 2 sqrt(2 ln 2)

// Adds a pixel-integrated circular Gaussian of total flux `flux` at (x0, y0).
// Separable erf weights conserve flux exactly up to the stamp truncation.
inline void add_star(std::vector<double>& scene, int w, int h, double x0, double y0, double flux,
                     double sigma) {
    const double inv = 1.0 / (sigma * 1.4142135623730951);
    const int r = static_cast<int>(std::ceil(6.0 * sigma)) + 1;
    const int xlo = std::max(0, static_cast<int>(std::floor(x0)) - r);
    const int xhi = std::min(w - 1, static_cast<int>(std::floor(x0)) + r);
    const int ylo = std::max(0, static_cast<int>(std::floor(y0)) - r);
    const int yhi = std::min(h - 1, static_cast<int>(std::floor(y0)) + r);
    if (xlo > xhi || ylo > yhi) return;
    std::vector<double> wx(static_cast<std::size_t>(xhi - xlo + 1));
    std::vector<double> wy(static_cast<std::size_t>(yhi - ylo + 1));
    for (int x = xlo; x <= xhi; ++x)
        wx[static_cast<std::size_t>(x - xlo)] =
            0.5 * (std::erf((x + 0.5 - x0) * inv) - std::erf((x - 0.5 - x0) * inv));
    for (int y = ylo; y <= yhi; ++y)
        wy[static_cast<std::size_t>(y - ylo)] =
            0.5 * (std::erf((y + 0.5 - y0) * inv) - std::erf((y - 0.5 - y0) * inv));
    for (int y = ylo; y <= yhi; ++y) {
        const double fy = flux * wy[static_cast<std::size_t>(y - ylo)];
        for (int x = xlo; x <= xhi; ++x)
            scene[static_cast<std::size_t>(y) * w + x] += fy * wx[static_cast<std::size_t>(x - xlo)];
    }
}

inline double event_u(double t, double u0, double t0, double tE) {
    const double tau = (t - t0) / tE;
    return std::sqrt(u0 * u0 + tau * tau);
}

}  // namespace detail

// Total amplified flux (ADU/s) of an injected event at time t: primary
// component plus the optional secondary bump.
inline double event_flux_rate(const InjectedEvent& ev, double t) {
    double f = ev.flux * trigger2::pspl_amplification(detail::event_u(t, ev.u0, ev.t0, ev.tE));
    if (ev.has_secondary)
        f += ev.flux2 * trigger2::pspl_amplification(detail::event_u(t, ev.u02, ev.t02, ev.tE2));
    return f;
}

// The noiseless calibrated scene of one epoch: gain * (stars + events +
// extended background) * exposure + sky + offset. This is exactly what a
// perfect reduction should recover, and what the oracle tests compare
// against.
inline Frame render_scene_plus_sky(const StarCatalog& catalog, const EpochConfig& params,
                                   const std::vector<InjectedEvent>& events,
                                   const CampaignConfig& c) {
    const int w = c.width, h = c.height;
    const double sigma = params.seeing_fwhm / detail::kFwhmToSigma;
    const auto transform = EpochTransform::from(params, w, h);

    std::vector<double> scene(static_cast<std::size_t>(w) * h, 0.0);
    for (const auto& s : catalog.entries) {
        double x, y;
        transform.apply(s.x, s.y, x, y);
        detail::add_star(scene, w, h, x, y, s.flux * params.exposure, sigma);
    }
    for (const auto& ev : events) {
        if (ev.x < 0 || ev.x >= w || ev.y < 0 || ev.y >= h)
            throw pipeline_error("render_epoch: event outside frame bounds");
        double x, y;
        transform.apply(ev.x, ev.y, x, y);
        detail::add_star(scene, w, h, x, y, event_flux_rate(ev, params.t) * params.exposure, sigma);
    }
    if (c.background_gradient != 0.0) {
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                scene[static_cast<std::size_t>(y) * w + x] +=
                    c.background_gradient * (static_cast<double>(x) / (w > 1 ? w - 1 : 1)) *
                    params.exposure;
    }

    Frame out = Frame::zeros(w, h);
    out.epoch_id = params.id;
    out.exposure = params.exposure;
    out.seeing = params.seeing_fwhm;
    for (std::size_t i = 0; i < scene.size(); ++i)
        out.pixels[i] = static_cast<float>(params.gain * scene[i] + params.sky + params.offset);
    return out;
}

// One raw epoch:
//   flat (.) (gain * scene + sky + offset) + bias + dark_rate * exposure
//   [+ shot noise + read noise + cosmic spikes]
inline Frame render_epoch(const StarCatalog& catalog, const EpochConfig& params,
                          const std::vector<InjectedEvent>& events, const CalibrationTruth& truth,
                          const CampaignConfig& c) {
    const Frame scene = render_scene_plus_sky(catalog, params, events, c);
    const int w = c.width, h = c.height;
    if (truth.bias.width != w || truth.bias.height != h)
        throw pipeline_error("render_epoch: truth surfaces do not match frame dimensions");

    auto noise_rng = substream(c.seed, "noise", static_cast<std::uint64_t>(params.id));
    Frame raw = Frame::zeros(w, h);
    raw.epoch_id = params.id;
    raw.exposure = params.exposure;
    raw.seeing = params.seeing_fwhm;
    for (std::size_t i = 0; i < raw.pixels.size(); ++i) {
        const double lit = static_cast<double>(truth.flat.pixels[i]) * scene.pixels[i];
        const double dark = static_cast<double>(truth.dark_rate.pixels[i]) * params.exposure;
        double v = lit + static_cast<double>(truth.bias.pixels[i]) + dark;
        if (c.shot_noise) {
            const double signal = lit + dark;
            if (signal > 0.0) v += noise_rng.gaussian(0.0, std::sqrt(signal));
        }
        if (c.read_noise > 0.0) v += noise_rng.gaussian(0.0, c.read_noise);
        raw.pixels[i] = static_cast<float>(v);
    }

    auto cosmic_rng = substream(c.seed, "cosmics", static_cast<std::uint64_t>(params.id));
    for (int k = 0; k < params.n_cosmics; ++k) {
        const int x = static_cast<int>(cosmic_rng.uniform_index(static_cast<std::uint64_t>(w)));
        const int y = static_cast<int>(cosmic_rng.uniform_index(static_cast<std::uint64_t>(h)));
        raw.at(x, y) += static_cast<float>(c.cosmic_amplitude);
    }
    return raw;
}

struct CalibrationSet {
    std::vector<Frame> bias;
    std::vector<Frame> dark;
    std::vector<Frame> flat;
    double dark_exposure = 1.0;
    double flat_exposure = 1.0;
};

// Noisy realizations of the truth surfaces, suitable for master-frame
// estimation. Flats are exposed through the full signal chain (lamp level
// times flat, plus bias and dark).
inline CalibrationSet render_calibration_set(const CalibrationTruth& truth,
                                             const CampaignConfig& c) {
    if (c.n_bias < 1 || c.n_dark < 1 || c.n_flat < 1)
        throw pipeline_error("render_calibration_set: counts must be >= 1");
    CalibrationSet set;
    set.dark_exposure = c.dark_exposure;
    set.flat_exposure = 1.0;
    const int w = truth.bias.width, h = truth.bias.height;

    for (int n = 0; n < c.n_bias; ++n) {
        auto rng = substream(c.seed, "calib-bias", static_cast<std::uint64_t>(n));
        Frame f = Frame::zeros(w, h);
        f.exposure = 0.0;
        for (std::size_t i = 0; i < f.pixels.size(); ++i) {
            double v = truth.bias.pixels[i];
            if (c.calib_noise > 0.0) v += rng.gaussian(0.0, c.calib_noise);
            f.pixels[i] = static_cast<float>(v);
        }
        set.bias.push_back(std::move(f));
    }
    for (int n = 0; n < c.n_dark; ++n) {
        auto rng = substream(c.seed, "calib-dark", static_cast<std::uint64_t>(n));
        Frame f = Frame::zeros(w, h);
        f.exposure = c.dark_exposure;
        for (std::size_t i = 0; i < f.pixels.size(); ++i) {
            double v = static_cast<double>(truth.bias.pixels[i]) +
                       static_cast<double>(truth.dark_rate.pixels[i]) * c.dark_exposure;
            if (c.calib_noise > 0.0) v += rng.gaussian(0.0, c.calib_noise);
            f.pixels[i] = static_cast<float>(v);
        }
        set.dark.push_back(std::move(f));
    }
    for (int n = 0; n < c.n_flat; ++n) {
        auto rng = substream(c.seed, "calib-flat", static_cast<std::uint64_t>(n));
        Frame f = Frame::zeros(w, h);
        f.exposure = set.flat_exposure;
        for (std::size_t i = 0; i < f.pixels.size(); ++i) {
            double v = static_cast<double>(truth.flat.pixels[i]) * c.flat_level +
                       static_cast<double>(truth.bias.pixels[i]) +
                       static_cast<double>(truth.dark_rate.pixels[i]) * set.flat_exposure;
            if (c.calib_noise > 0.0) v += rng.gaussian(0.0, c.calib_noise);
            f.pixels[i] = static_cast<float>(v);
        }
        set.flat.push_back(std::move(f));
    }
    return set;
}

// Ground-truth record for one event at one epoch.
struct EventEpochTruth {
    double t = 0.0;
    double amplification = 1.0;  // total flux rate / baseline flux rate
    double x = 0.0, y = 0.0;     // transformed pixel position that night
};

struct EventTruth {
    InjectedEvent event;
    std::vector<EventEpochTruth> per_epoch;
};

inline std::vector<EventTruth> ground_truth(const CampaignConfig& c) {
    std::vector<EventTruth> out;
    out.reserve(c.events.size());
    for (const auto& ev : c.events) {
        EventTruth et;
        et.event = ev;
        const double baseline = ev.flux + (ev.has_secondary ? ev.flux2 : 0.0);
        for (const auto& ep : c.epochs) {
            EventEpochTruth t;
            t.t = ep.t;
            t.amplification = baseline > 0 ? event_flux_rate(ev, ep.t) / baseline : 1.0;
            const auto tr = EpochTransform::from(ep, c.width, c.height);
            tr.apply(ev.x, ev.y, t.x, t.y);
            et.per_epoch.push_back(t);
        }
        out.push_back(std::move(et));
    }
    return out;
}

}  // namespace pixellens::skysim
