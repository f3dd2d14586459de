#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <numbers>
#include <string>
#include <vector>

#include "pixellens/align.hpp"
#include "pixellens/fft.hpp"
#include "pixellens/frame.hpp"
#include "pixellens/stats.hpp"

// Homogenization to the reference night: photometric calibration (affine
// gain + offset), PSF matching to a common seeing by Gaussian convolution in
// Fourier space, and extended-object removal with a smooth high-pass filter.

namespace pixellens::homogenize {

inline constexpr double kFwhmToSigma = 2.3548200450309493;  // 2 sqrt(2 ln 2)

struct PhotometricSolution {
    double a = 1.0;   // gain
    double b = 0.0;   // offset, ADU
    int n_stars_used = 0;
    double rms = 0.0;
};

// Robust linear fit flux_ref = a * flux_target + b over matched star fluxes,
// 3-sigma clipped least squares.
inline PhotometricSolution estimate_photometric_scale(const std::vector<double>& ref_flux,
                                                      const std::vector<double>& target_flux) {
    if (ref_flux.size() != target_flux.size())
        throw pipeline_error("estimate_photometric_scale: size mismatch");
    if (ref_flux.size() < 3)
        throw pipeline_error("estimate_photometric_scale: need at least 3 matched stars");
    const auto fit = stats::sigma_clipped_affine(target_flux, ref_flux);
    if (!(fit.a > 0.0))
        throw pipeline_error("estimate_photometric_scale: nonpositive gain (degenerate fluxes?)");
    PhotometricSolution sol;
    sol.a = fit.a;
    sol.b = fit.b;
    sol.rms = fit.rms;
    sol.n_stars_used = fit.n_used;
    return sol;
}

inline Frame apply_photometric(const Frame& frame, const PhotometricSolution& sol) {
    Frame out = frame;
    for (auto& p : out.pixels)
        p = static_cast<float>(sol.a * static_cast<double>(p) + sol.b);
    return out;
}

struct SeeingEstimate {
    double fwhm = 0.0;  // px
    int n_stars_used = 0;

    double sigma() const { return fwhm / kFwhmToSigma; }
};

namespace detail {

// Pixel-integrated Gaussian weight for pixel center c, source center mu.
inline double pix_gauss(double c, double mu, double sigma) {
    const double inv = 1.0 / (sigma * 1.4142135623730951);
    return 0.5 * (std::erf((c + 0.5 - mu) * inv) - std::erf((c - 0.5 - mu) * inv));
}

inline double pix_gauss_dsigma(double c, double mu, double sigma) {
    const double a = c - 0.5 - mu;
    const double b = c + 0.5 - mu;
    const double s2 = sigma * sigma;
    const double norm = 1.0 / (std::sqrt(2.0 * std::numbers::pi) * s2);
    return norm * (a * std::exp(-a * a / (2.0 * s2)) - b * std::exp(-b * b / (2.0 * s2)));
}

// Fits (amplitude, background, sigma) of a pixel-integrated Gaussian with
// fixed center to a 9x9 window. Returns sigma, or a negative value when the
// fit cannot proceed.
inline double fit_star_sigma(const Frame& frame, double cx, double cy, double sigma_init) {
    const int x0 = static_cast<int>(std::lround(cx));
    const int y0 = static_cast<int>(std::lround(cy));
    if (x0 < 4 || y0 < 4 || x0 >= frame.width - 4 || y0 >= frame.height - 4) return -1.0;

    double lo = frame.at(x0 - 4, y0 - 4), amp0 = 0.0;
    for (int y = y0 - 4; y <= y0 + 4; ++y)
        for (int x = x0 - 4; x <= x0 + 4; ++x) {
            if (frame.masked(x, y)) return -1.0;
            lo = std::min(lo, static_cast<double>(frame.at(x, y)));
        }
    for (int y = y0 - 4; y <= y0 + 4; ++y)
        for (int x = x0 - 4; x <= x0 + 4; ++x) amp0 += frame.at(x, y) - lo;

    double A = std::max(amp0, 1e-6), bg = lo, sigma = std::max(sigma_init, 0.5);
    double chi2 = 0.0;
    auto eval_chi2 = [&](double A_, double bg_, double s_) {
        double acc = 0.0;
        for (int y = y0 - 4; y <= y0 + 4; ++y)
            for (int x = x0 - 4; x <= x0 + 4; ++x) {
                const double m = bg_ + A_ * pix_gauss(x, cx, s_) * pix_gauss(y, cy, s_);
                const double r = frame.at(x, y) - m;
                acc += r * r;
            }
        return acc;
    };
    chi2 = eval_chi2(A, bg, sigma);

    for (int it = 0; it < 60; ++it) {
        double h[9] = {0};  // 3x3 normal matrix
        double g[3] = {0};
        for (int y = y0 - 4; y <= y0 + 4; ++y) {
            for (int x = x0 - 4; x <= x0 + 4; ++x) {
                const double gx = pix_gauss(x, cx, sigma);
                const double gy = pix_gauss(y, cy, sigma);
                const double m = bg + A * gx * gy;
                const double r = frame.at(x, y) - m;
                const double dA = gx * gy;
                const double dbg = 1.0;
                const double ds = A * (pix_gauss_dsigma(x, cx, sigma) * gy +
                                       gx * pix_gauss_dsigma(y, cy, sigma));
                const double J[3] = {dA, dbg, ds};
                for (int a = 0; a < 3; ++a) {
                    for (int b = 0; b < 3; ++b) h[a * 3 + b] += J[a] * J[b];
                    g[a] += J[a] * r;
                }
            }
        }
        // Solve the 3x3 system by Cramer's rule.
        const double det = h[0] * (h[4] * h[8] - h[5] * h[7]) - h[1] * (h[3] * h[8] - h[5] * h[6]) +
                           h[2] * (h[3] * h[7] - h[4] * h[6]);
        if (std::fabs(det) < 1e-30) break;
        auto det3 = [&](int col) {
            double m[9];
            for (int i = 0; i < 9; ++i) m[i] = h[i];
            for (int r = 0; r < 3; ++r) m[r * 3 + col] = g[r];
            return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
                   m[2] * (m[3] * m[7] - m[4] * m[6]);
        };
        const double dA = det3(0) / det, dbg = det3(1) / det, ds = det3(2) / det;
        double scale = 1.0;
        bool improved = false;
        for (int half = 0; half < 16; ++half, scale *= 0.5) {
            const double A_t = A + scale * dA;
            const double bg_t = bg + scale * dbg;
            const double s_t = sigma + scale * ds;
            if (!(s_t > 0.05) || !(A_t > 0.0)) continue;
            const double c_t = eval_chi2(A_t, bg_t, s_t);
            if (c_t <= chi2) {
                const double drop = chi2 - c_t;
                A = A_t;
                bg = bg_t;
                sigma = s_t;
                chi2 = c_t;
                improved = true;
                if (drop < 1e-12 * std::max(1.0, chi2)) return sigma;
                break;
            }
        }
        if (!improved) break;
    }
    return sigma;
}

}  // namespace detail

// Median Gaussian-fit FWHM over isolated, unsaturated stars (9x9 fit
// windows). `stars` comes from align::detect_stars on the same frame.
inline SeeingEstimate estimate_fwhm(const Frame& frame,
                                    const std::vector<align::StarDetection>& stars,
                                    int max_stars = 20) {
    std::vector<double> fwhms;
    for (std::size_t i = 0; i < stars.size() && static_cast<int>(fwhms.size()) < max_stars; ++i) {
        const auto& s = stars[i];
        bool isolated = true;
        for (std::size_t j = 0; j < stars.size(); ++j) {
            if (j == i) continue;
            const double d = std::hypot(stars[j].x - s.x, stars[j].y - s.y);
            if (d < 12.0 && stars[j].flux > 0.1 * s.flux) {
                isolated = false;
                break;
            }
        }
        if (!isolated) continue;
        const double init = frame.seeing ? *frame.seeing / kFwhmToSigma : 2.0;
        const double sigma = detail::fit_star_sigma(frame, s.x, s.y, init);
        if (sigma > 0.0) fwhms.push_back(kFwhmToSigma * sigma);
    }
    if (fwhms.empty()) throw pipeline_error("estimate_fwhm: no usable stars");
    SeeingEstimate est;
    est.n_stars_used = static_cast<int>(fwhms.size());
    est.fwhm = stats::median(fwhms);
    return est;
}

// Kernel width needed to degrade seeing `from` to seeing `to`.
inline double matching_kernel_sigma(const SeeingEstimate& from, const SeeingEstimate& to) {
    const double sf = from.sigma(), st = to.sigma();
    if (st < sf - 1e-9)
        throw pipeline_error("match_psf: cannot sharpen (target seeing below current)");
    const double d2 = st * st - sf * sf;
    return d2 > 0.0 ? std::sqrt(d2) : 0.0;
}

namespace detail {

// Symmetric (mirror) extension index: folds any integer into [0, n) with
// period 2n, edge pixels repeated ("abc|cba|abc...").
inline int fold_index(int i, int n) {
    const int period = 2 * n;
    int m = i % period;
    if (m < 0) m += period;
    return m < n ? m : period - 1 - m;
}

struct PaddedGrid {
    std::vector<std::complex<double>> grid;
    int pw = 0, ph = 0;   // padded (power-of-two) dimensions
    int ox = 0, oy = 0;   // origin of the original frame inside the grid
};

inline PaddedGrid mirror_pad(const Frame& frame, int min_pad) {
    PaddedGrid p;
    p.pw = fftops::next_pow2(frame.width + 2 * min_pad);
    p.ph = fftops::next_pow2(frame.height + 2 * min_pad);
    p.ox = (p.pw - frame.width) / 2;
    p.oy = (p.ph - frame.height) / 2;
    p.grid.resize(static_cast<std::size_t>(p.pw) * p.ph);
    for (int y = 0; y < p.ph; ++y) {
        const int sy = fold_index(y - p.oy, frame.height);
        for (int x = 0; x < p.pw; ++x) {
            const int sx = fold_index(x - p.ox, frame.width);
            p.grid[static_cast<std::size_t>(y) * p.pw + x] = frame.at(sx, sy);
        }
    }
    return p;
}

inline Frame crop_back(const PaddedGrid& p, const Frame& like) {
    Frame out = Frame::zeros(like.width, like.height);
    out.epoch_id = like.epoch_id;
    out.exposure = like.exposure;
    out.seeing = like.seeing;
    out.mask = like.mask;
    for (int y = 0; y < like.height; ++y)
        for (int x = 0; x < like.width; ++x)
            out.at(x, y) = static_cast<float>(
                p.grid[static_cast<std::size_t>(y + p.oy) * p.pw + (x + p.ox)].real());
    return out;
}

}  // namespace detail

// Density-sampled circular Gaussian kernel, normalized to unit sum; radius
// ceil(5 sigma) + 1.
inline std::vector<double> gaussian_kernel(double sigma, int& radius_out) {
    const int r = static_cast<int>(std::ceil(5.0 * sigma)) + 1;
    std::vector<double> k(static_cast<std::size_t>(2 * r + 1) * (2 * r + 1));
    double sum = 0.0;
    for (int y = -r; y <= r; ++y)
        for (int x = -r; x <= r; ++x) {
            const double v = std::exp(-(x * x + y * y) / (2.0 * sigma * sigma));
            k[static_cast<std::size_t>(y + r) * (2 * r + 1) + (x + r)] = v;
            sum += v;
        }
    for (auto& v : k) v /= sum;
    radius_out = r;
    return k;
}

// Convolution with a circular Gaussian of width sigma_k, executed by
// multiplication in Fourier space over a mirror-padded grid. Flux is
// conserved (the kernel sums to one and the padding is symmetric).
inline Frame convolve_gaussian(const Frame& frame, double sigma_k) {
    if (sigma_k < 1e-6) return frame;
    int r = 0;
    const auto kernel = gaussian_kernel(sigma_k, r);
    auto padded = detail::mirror_pad(frame, r);

    std::vector<std::complex<double>> kgrid(padded.grid.size());
    const int kw = 2 * r + 1;
    for (int y = -r; y <= r; ++y) {
        const int gy = (y + padded.ph) % padded.ph;
        for (int x = -r; x <= r; ++x) {
            const int gx = (x + padded.pw) % padded.pw;
            kgrid[static_cast<std::size_t>(gy) * padded.pw + gx] =
                kernel[static_cast<std::size_t>(y + r) * kw + (x + r)];
        }
    }

    fftops::fft_2d(padded.grid, padded.pw, padded.ph, false);
    fftops::fft_2d(kgrid, padded.pw, padded.ph, false);
    for (std::size_t i = 0; i < padded.grid.size(); ++i) padded.grid[i] *= kgrid[i];
    fftops::fft_2d(padded.grid, padded.pw, padded.ph, true);
    return detail::crop_back(padded, frame);
}

// PSF matching: degrade `frame` from its measured seeing to the common
// target seeing.
inline Frame match_psf(const Frame& frame, const SeeingEstimate& from, const SeeingEstimate& to) {
    return convolve_gaussian(frame, matching_kernel_sigma(from, to));
}

// High-pass filter in Fourier space: attenuates spatial frequencies below
// 1/cutoff_scale with a raised-cosine transition one octave wide (geometric
// center at the cutoff frequency). Removes the DC component, so the output
// mean is ~0 and smooth extended structure vanishes while point sources
// survive.
inline Frame remove_extended(const Frame& frame, double cutoff_scale, double psf_fwhm = 0.0) {
    if (!(cutoff_scale > 0.0)) throw pipeline_error("remove_extended: cutoff must be > 0");
    if (psf_fwhm > 0.0 && cutoff_scale <= psf_fwhm)
        throw pipeline_error("remove_extended: cutoff must exceed the PSF FWHM");

    auto padded = detail::mirror_pad(frame, static_cast<int>(std::ceil(cutoff_scale)));
    fftops::fft_2d(padded.grid, padded.pw, padded.ph, false);

    const double f_c = 1.0 / cutoff_scale;
    const double f_lo = f_c / std::numbers::sqrt2;
    const double f_hi = 2.0 * f_lo;
    for (int y = 0; y < padded.ph; ++y) {
        const double fy = (y <= padded.ph / 2 ? y : y - padded.ph) / static_cast<double>(padded.ph);
        for (int x = 0; x < padded.pw; ++x) {
            const double fx =
                (x <= padded.pw / 2 ? x : x - padded.pw) / static_cast<double>(padded.pw);
            const double f = std::sqrt(fx * fx + fy * fy);
            double gain;
            if (f <= f_lo) {
                gain = 0.0;
            } else if (f >= f_hi) {
                gain = 1.0;
            } else {
                gain = 0.5 * (1.0 - std::cos(std::numbers::pi * std::log2(f / f_lo)));
            }
            padded.grid[static_cast<std::size_t>(y) * padded.pw + x] *= gain;
        }
    }
    fftops::fft_2d(padded.grid, padded.pw, padded.ph, true);
    return detail::crop_back(padded, frame);
}

// Plain (2R+1)^2 window sum, the flux measure used for the photometric fit.
// No background subtraction: blended neighbors and sky scale with the same
// gain, so the affine relation between epochs stays exact.
inline double window_sum(const Frame& frame, double x, double y, int radius) {
    const int cx = static_cast<int>(std::lround(x));
    const int cy = static_cast<int>(std::lround(y));
    double sum = 0.0;
    for (int yy = cy - radius; yy <= cy + radius; ++yy)
        for (int xx = cx - radius; xx <= cx + radius; ++xx) {
            if (!frame.in_bounds(xx, yy) || frame.masked(xx, yy)) return -1.0;
            sum += frame.at(xx, yy);
        }
    return sum;
}

struct HomogenizeReport {
    int epoch_id = 0;
    double a = 1.0;
    double b = 0.0;
    double fwhm_before = 0.0;
    double fwhm_target = 0.0;
    double cutoff = 0.0;
};

inline std::string format_report_line(const HomogenizeReport& r) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "epoch=%d a=%.9f b=%.6f fwhm_before=%.6f fwhm_target=%.6f cutoff=%.3f",
                  r.epoch_id, r.a, r.b, r.fwhm_before, r.fwhm_target, r.cutoff);
    return buf;
}

}  // namespace pixellens::homogenize
