#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "pixellens/bytes.hpp"
#include "pixellens/frame.hpp"
#include "pixellens/stats.hpp"

// Per-superpixel light curves across the homogenized epoch series. A
// superpixel is the (2m+1) x (2m+1) window around a pixel; its summed flux
// tracked over epochs is the unit of pixel-lensing detection.
//
// Window sums accumulate in 64-bit in a fixed row-then-column order, so a
// curve computed inside a tile (with halo >= m) is bit-identical to the same
// curve computed on the unpartitioned frame. Distributed correctness rests
// on this.

namespace pixellens::lightcurves {

struct Sample {
    double t = 0.0;
    double flux = 0.0;   // ADU, window sum
    double sigma = 1.0;  // ADU
    bool valid = true;
};

struct LightCurve {
    int i = 0;  // superpixel center row (y)
    int j = 0;  // superpixel center column (x)
    std::vector<Sample> samples;  // one per epoch, epoch order

    int n_valid() const {
        int n = 0;
        for (const auto& s : samples) n += s.valid ? 1 : 0;
        return n;
    }
};

// Homogenized frames on the reference grid. The frames may be tile cutouts;
// origin_x/origin_y give the absolute frame coordinate of their (0,0) pixel
// and frame_w/frame_h the full grid extent, so border handling is identical
// whether or not the series was cut.
struct EpochSeries {
    std::vector<Frame> epochs;
    std::vector<double> times;
    int origin_x = 0;
    int origin_y = 0;
    int frame_w = 0;
    int frame_h = 0;

    void validate() const {
        if (epochs.empty()) throw pipeline_error("epoch series is empty");
        if (times.size() != epochs.size())
            throw pipeline_error("epoch series: times/frames size mismatch");
        for (std::size_t e = 0; e < epochs.size(); ++e) {
            if (epochs[e].width != epochs[0].width || epochs[e].height != epochs[0].height)
                throw pipeline_error("epoch series: frame dimensions differ at epoch " +
                                     std::to_string(e));
        }
        for (std::size_t e = 1; e < times.size(); ++e)
            if (!(times[e] > times[e - 1]))
                throw pipeline_error("epoch series: times must be strictly increasing");
    }
};

inline EpochSeries make_series(std::vector<Frame> frames, std::vector<double> times) {
    EpochSeries s;
    s.epochs = std::move(frames);
    s.times = std::move(times);
    if (!s.epochs.empty()) {
        s.frame_w = s.epochs[0].width;
        s.frame_h = s.epochs[0].height;
    }
    s.validate();
    return s;
}

// Cuts the outer (core+halo) rectangle of a tile out of a full-grid series.
inline EpochSeries cut_series(const EpochSeries& full, const TileSpec& tile) {
    EpochSeries out;
    out.times = full.times;
    out.origin_x = tile.outer_x0();
    out.origin_y = tile.outer_y0();
    out.frame_w = full.frame_w;
    out.frame_h = full.frame_h;
    out.epochs.reserve(full.epochs.size());
    for (const auto& f : full.epochs) {
        Frame sub;
        sub.width = tile.outer_w();
        sub.height = tile.outer_h();
        sub.epoch_id = f.epoch_id;
        sub.exposure = f.exposure;
        sub.seeing = f.seeing;
        sub.pixels.resize(static_cast<std::size_t>(sub.width) * sub.height);
        if (f.has_mask()) sub.mask.resize(sub.pixels.size());
        for (int y = 0; y < sub.height; ++y) {
            for (int x = 0; x < sub.width; ++x) {
                const int fx = x + out.origin_x - full.origin_x;
                const int fy = y + out.origin_y - full.origin_y;
                sub.at(x, y) = f.at(fx, fy);
                if (f.has_mask())
                    sub.mask[static_cast<std::size_t>(y) * sub.width + x] =
                        f.mask[static_cast<std::size_t>(fy) * f.width + fx];
            }
        }
        out.epochs.push_back(std::move(sub));
    }
    return out;
}

// Builds one curve per core pixel of `region`. Window sums use the fixed
// row-major accumulation order; sigma propagates read noise plus
// shot noise (variance = read_noise^2 + max(pixel, 0) per pixel). Windows
// that cross the frame border or touch a masked pixel yield invalid samples
// with flux 0 and sigma 1.
inline std::vector<LightCurve> build_curves(const EpochSeries& series, int m,
                                            const TileSpec& region, double read_noise) {
    series.validate();
    if (m < 0) throw pipeline_error("build_curves: superpixel half-width must be >= 0");
    if (region.x0 < 0 || region.y0 < 0 || region.x0 + region.core_w > series.frame_w ||
        region.y0 + region.core_h > series.frame_h)
        throw pipeline_error("build_curves: region core outside frame");

    const std::size_t n_epochs = series.epochs.size();
    std::vector<LightCurve> curves;
    curves.reserve(static_cast<std::size_t>(region.core_w) * region.core_h);

    const double rn2 = read_noise * read_noise;
    for (int i = region.y0; i < region.y0 + region.core_h; ++i) {
        for (int j = region.x0; j < region.x0 + region.core_w; ++j) {
            LightCurve lc;
            lc.i = i;
            lc.j = j;
            lc.samples.resize(n_epochs);
            const bool in_frame = (i - m >= 0 && i + m < series.frame_h && j - m >= 0 &&
                                   j + m < series.frame_w);
            for (std::size_t e = 0; e < n_epochs; ++e) {
                Sample& s = lc.samples[e];
                s.t = series.times[e];
                if (!in_frame) {
                    s.flux = 0.0;
                    s.sigma = 1.0;
                    s.valid = false;
                    continue;
                }
                const Frame& f = series.epochs[e];
                double sum = 0.0;
                double var = 0.0;
                bool ok = true;
                for (int wy = i - m; wy <= i + m; ++wy) {
                    const int ly = wy - series.origin_y;
                    for (int wx = j - m; wx <= j + m; ++wx) {
                        const int lx = wx - series.origin_x;
                        if (lx < 0 || ly < 0 || lx >= f.width || ly >= f.height)
                            throw pipeline_error("build_curves: series cutout does not cover window");
                        if (f.masked(lx, ly)) {
                            ok = false;
                            break;
                        }
                        const double p = static_cast<double>(f.at(lx, ly));
                        sum += p;
                        var += rn2 + (p > 0.0 ? p : 0.0);
                    }
                    if (!ok) break;
                }
                if (!ok) {
                    s.flux = 0.0;
                    s.sigma = 1.0;
                    s.valid = false;
                } else {
                    s.flux = sum;
                    s.sigma = std::sqrt(var > 1e-24 ? var : 1e-24);
                    s.valid = true;
                }
            }
            curves.push_back(std::move(lc));
        }
    }
    return curves;
}

struct BaselineStats {
    double baseline = 0.0;  // median of valid fluxes
    double sigma = 0.0;     // 1.4826 * MAD
};

inline BaselineStats baseline_stats(const LightCurve& curve) {
    std::vector<double> flux;
    flux.reserve(curve.samples.size());
    for (const auto& s : curve.samples)
        if (s.valid) flux.push_back(s.flux);
    if (flux.size() < 5)
        throw pipeline_error("baseline_stats: curve too short (" + std::to_string(flux.size()) +
                             " valid samples, need 5)");
    BaselineStats b;
    b.baseline = stats::median(flux);
    for (double& f : flux) f = std::fabs(f - b.baseline);
    b.sigma = stats::kMadToSigma * stats::median_inplace(flux);
    return b;
}

// ---------------------------------------------------------------------------
// Curve file export
//
// Binary: magic "PXCV", u32 version, u32 n_curves, u32 n_epochs, then one
// record per curve: i and j as 32-bit integers followed by per-epoch
// (t, flux, sigma) as 64-bit reals and a validity byte. Big-endian.

inline constexpr char kCurveMagic[4] = {'P', 'X', 'C', 'V'};

inline void write_curves(const std::vector<LightCurve>& curves, const std::string& path) {
    ByteWriter w;
    w.raw(kCurveMagic, 4);
    w.u32(1);
    w.u32(static_cast<std::uint32_t>(curves.size()));
    w.u32(curves.empty() ? 0 : static_cast<std::uint32_t>(curves[0].samples.size()));
    for (const auto& c : curves) {
        if (!curves.empty() && c.samples.size() != curves[0].samples.size())
            throw pipeline_error("write_curves: inconsistent epoch counts");
        w.i32(c.i);
        w.i32(c.j);
        for (const auto& s : c.samples) {
            w.f64(s.t);
            w.f64(s.flux);
            w.f64(s.sigma);
            w.u8(s.valid ? 1 : 0);
        }
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw pipeline_error("write_curves: cannot open " + path);
    out.write(w.data().data(), static_cast<std::streamsize>(w.size()));
    if (!out) throw pipeline_error("write_curves: I/O failure writing " + path);
}

inline std::vector<LightCurve> read_curves(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw pipeline_error("read_curves: cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    ByteReader r(bytes);
    char magic[4];
    r.raw(magic, 4);
    if (std::memcmp(magic, kCurveMagic, 4) != 0)
        throw pipeline_error("read_curves: bad magic in " + path);
    const std::uint32_t version = r.u32();
    if (version != 1) throw pipeline_error("read_curves: unsupported version");
    const std::uint32_t n_curves = r.u32();
    const std::uint32_t n_epochs = r.u32();
    std::vector<LightCurve> curves(n_curves);
    for (auto& c : curves) {
        c.i = r.i32();
        c.j = r.i32();
        c.samples.resize(n_epochs);
        for (auto& s : c.samples) {
            s.t = r.f64();
            s.flux = r.f64();
            s.sigma = r.f64();
            s.valid = r.u8() != 0;
        }
    }
    return curves;
}

// Plain-text export of one curve for plotting: "t flux sigma valid" rows.
inline void write_curve_text(const LightCurve& c, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw pipeline_error("write_curve_text: cannot open " + path);
    out << "# superpixel i=" << c.i << " j=" << c.j << "\n";
    out << "# t flux sigma valid\n";
    char line[128];
    for (const auto& s : c.samples) {
        std::snprintf(line, sizeof line, "%.17g %.17g %.17g %d\n", s.t, s.flux, s.sigma,
                      s.valid ? 1 : 0);
        out << line;
    }
}

}  // namespace pixellens::lightcurves
