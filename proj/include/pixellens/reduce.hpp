#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "pixellens/frame.hpp"
#include "pixellens/stats.hpp"

// Pre-reduction: master calibration frames (pixelwise medians, robust to
// cosmic hits in the calibration stacks) and conversion of raw frames to
// effective images with cosmetic repair. All per-pixel accumulation is in
// 64-bit with one final rounding to the 32-bit pixel type.

namespace pixellens::reduce {

// Flat values at or below this are dead pixels.
inline constexpr double kFlatFloor = 0.1;

struct MasterSet {
    Frame bias;        // ADU
    Frame dark_rate;   // ADU/s
    Frame flat;        // mean 1, bad pixels forced to 1
    std::vector<std::uint8_t> bad;  // 1 = dead pixel
};

namespace detail {

inline void check_stack(const std::vector<Frame>& frames, const char* op) {
    if (frames.empty()) throw pipeline_error(std::string(op) + ": empty frame list");
    for (const auto& f : frames) {
        if (f.width != frames[0].width || f.height != frames[0].height)
            throw pipeline_error(std::string(op) + ": frame dimension mismatch");
    }
}

// Median over a small stack; insertion into a scratch buffer keeps the
// reduction order fixed regardless of how the caller parallelizes pixels.
inline double stack_median(std::vector<double>& scratch) {
    std::sort(scratch.begin(), scratch.end());
    const std::size_t n = scratch.size();
    return n % 2 == 1 ? scratch[n / 2] : 0.5 * (scratch[n / 2 - 1] + scratch[n / 2]);
}

}  // namespace detail

// Pixelwise median across the stack.
inline Frame master_bias(const std::vector<Frame>& frames) {
    detail::check_stack(frames, "master_bias");
    Frame out = Frame::zeros(frames[0].width, frames[0].height);
    out.exposure = 0.0;
    std::vector<double> stack(frames.size());
    for (std::size_t i = 0; i < out.pixels.size(); ++i) {
        for (std::size_t k = 0; k < frames.size(); ++k) stack[k] = frames[k].pixels[i];
        out.pixels[i] = static_cast<float>(detail::stack_median(stack));
    }
    return out;
}

// Pixelwise median of (frame - bias) / exposure.
inline Frame master_dark_rate(const std::vector<Frame>& frames,
                              const std::vector<double>& exposures, const Frame& bias) {
    detail::check_stack(frames, "master_dark_rate");
    if (exposures.size() != frames.size())
        throw pipeline_error("master_dark_rate: one exposure per frame required");
    for (double e : exposures)
        if (!(e > 0.0)) throw pipeline_error("master_dark_rate: nonpositive exposure");
    if (bias.width != frames[0].width || bias.height != frames[0].height)
        throw pipeline_error("master_dark_rate: bias dimension mismatch");

    Frame out = Frame::zeros(frames[0].width, frames[0].height);
    std::vector<double> stack(frames.size());
    for (std::size_t i = 0; i < out.pixels.size(); ++i) {
        for (std::size_t k = 0; k < frames.size(); ++k)
            stack[k] = (static_cast<double>(frames[k].pixels[i]) - bias.pixels[i]) / exposures[k];
        out.pixels[i] = static_cast<float>(detail::stack_median(stack));
    }
    return out;
}

// Median of bias/dark-corrected flats, normalized to mean 1 over live
// pixels; pixels at or below kFlatFloor (relative to the normalized flat)
// are flagged dead and forced to 1.
inline std::pair<Frame, std::vector<std::uint8_t>> master_flat(
    const std::vector<Frame>& frames, const Frame& bias, const Frame& dark_rate,
    const std::vector<double>& exposures) {
    detail::check_stack(frames, "master_flat");
    if (exposures.size() != frames.size())
        throw pipeline_error("master_flat: one exposure per frame required");

    const std::size_t npix = frames[0].pixels.size();
    std::vector<double> med(npix);
    std::vector<double> stack(frames.size());
    for (std::size_t i = 0; i < npix; ++i) {
        for (std::size_t k = 0; k < frames.size(); ++k)
            stack[k] = static_cast<double>(frames[k].pixels[i]) -
                       static_cast<double>(bias.pixels[i]) -
                       static_cast<double>(dark_rate.pixels[i]) * exposures[k];
        med[i] = detail::stack_median(stack);
    }

    double sum = 0.0;
    for (double v : med) sum += v;
    if (!(sum > 0.0)) throw pipeline_error("master_flat: all-zero flat stack");
    double mean = sum / static_cast<double>(npix);

    // First normalization decides which pixels are dead, the second
    // renormalizes over live pixels only so the final mean is exactly 1
    // there (dead pixels sit at exactly 1 as well).
    std::vector<std::uint8_t> bad(npix, 0);
    double live_sum = 0.0;
    std::size_t live_n = 0;
    for (std::size_t i = 0; i < npix; ++i) {
        if (med[i] / mean <= kFlatFloor) {
            bad[i] = 1;
        } else {
            live_sum += med[i];
            ++live_n;
        }
    }
    if (live_n == 0) throw pipeline_error("master_flat: every pixel is dead");
    const double live_mean = live_sum / static_cast<double>(live_n);

    Frame flat = Frame::zeros(frames[0].width, frames[0].height);
    for (std::size_t i = 0; i < npix; ++i)
        flat.pixels[i] = static_cast<float>(bad[i] ? 1.0 : med[i] / live_mean);
    return {std::move(flat), std::move(bad)};
}

inline MasterSet build_masters(const std::vector<Frame>& bias_frames,
                               const std::vector<Frame>& dark_frames,
                               const std::vector<double>& dark_exposures,
                               const std::vector<Frame>& flat_frames,
                               const std::vector<double>& flat_exposures) {
    MasterSet m;
    m.bias = master_bias(bias_frames);
    m.dark_rate = master_dark_rate(dark_frames, dark_exposures, m.bias);
    auto [flat, bad] = master_flat(flat_frames, m.bias, m.dark_rate, flat_exposures);
    m.flat = std::move(flat);
    m.bad = std::move(bad);
    return m;
}

// Effective image: (raw - bias - dark_rate * exposure) / flat. Dead pixels
// are repaired with the mean of their unflagged 8-neighbors and stay flagged
// in the output mask; a fully dead neighborhood leaves the pixel at zero.
inline Frame reduce_frame(const Frame& raw, const MasterSet& masters) {
    if (raw.width != masters.bias.width || raw.height != masters.bias.height)
        throw pipeline_error("reduce_frame: dimension mismatch with masters");
    if (!(raw.exposure > 0.0)) throw pipeline_error("reduce_frame: raw exposure must be > 0");

    const int w = raw.width, h = raw.height;
    Frame out = Frame::zeros(w, h);
    out.epoch_id = raw.epoch_id;
    out.exposure = raw.exposure;
    out.seeing = raw.seeing;
    out.mask.assign(out.pixels.size(), 0);

    for (std::size_t i = 0; i < out.pixels.size(); ++i) {
        const double eff = (static_cast<double>(raw.pixels[i]) -
                            static_cast<double>(masters.bias.pixels[i]) -
                            static_cast<double>(masters.dark_rate.pixels[i]) * raw.exposure) /
                           static_cast<double>(masters.flat.pixels[i]);
        out.pixels[i] = static_cast<float>(eff);
        if ((i < masters.bad.size() && masters.bad[i]) || raw.masked(static_cast<int>(i % w),
                                                                     static_cast<int>(i / w)))
            out.mask[i] = 1;
    }

    // Repair pass reads only the pre-repair values.
    const std::vector<float> before = out.pixels;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            if (!out.mask[i]) continue;
            double sum = 0.0;
            int n = 0;
            for (int ny = y - 1; ny <= y + 1; ++ny) {
                for (int nx = x - 1; nx <= x + 1; ++nx) {
                    if (nx == x && ny == y) continue;
                    if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
                    const std::size_t k = static_cast<std::size_t>(ny) * w + nx;
                    if (out.mask[k]) continue;
                    sum += before[k];
                    ++n;
                }
            }
            out.pixels[i] = n > 0 ? static_cast<float>(sum / n) : 0.0f;
        }
    }
    return out;
}

}  // namespace pixellens::reduce
