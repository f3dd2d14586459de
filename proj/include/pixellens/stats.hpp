#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

// Robust statistics used throughout the pipeline: median / MAD estimators
// and an iteratively sigma-clipped affine fit.

namespace pixellens::stats {

// Gaussian-consistency factor for the median absolute deviation.
inline constexpr double kMadToSigma = 1.4826;

// Median via nth_element; modifies its argument. Even-length inputs return
// the mean of the two middle order statistics.
inline double median_inplace(std::vector<double>& v) {
    if (v.empty()) throw std::invalid_argument("median of empty set");
    const std::size_t n = v.size();
    const std::size_t mid = n / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    double med = v[mid];
    if (n % 2 == 0) {
        auto lower = std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
        med = 0.5 * (med + *lower);
    }
    return med;
}

inline double median(std::vector<double> v) { return median_inplace(v); }

// MAD-based sigma estimate: 1.4826 * median(|x - median(x)|).
inline double mad_sigma(const std::vector<double>& v) {
    std::vector<double> work(v);
    double med = median_inplace(work);
    for (double& x : work) x = std::fabs(x - med);
    return kMadToSigma * median_inplace(work);
}

struct AffineFit {
    double a = 1.0;       // slope
    double b = 0.0;       // intercept
    double rms = 0.0;     // residual RMS of the retained points
    int n_used = 0;       // points surviving the clip
};

// Ordinary least squares y = a*x + b over the index subset `use`.
inline AffineFit least_squares_affine(const std::vector<double>& x, const std::vector<double>& y,
                                      const std::vector<char>& use) {
    double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!use[i]) continue;
        sw += 1.0;
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    if (sw < 2.0) throw std::invalid_argument("affine fit needs at least 2 points");
    const double det = sw * sxx - sx * sx;
    if (std::fabs(det) < 1e-12 * std::max(1.0, sxx * sw))
        throw std::invalid_argument("affine fit degenerate: x values carry no spread");
    AffineFit f;
    f.a = (sw * sxy - sx * sy) / det;
    f.b = (sxx * sy - sx * sxy) / det;
    double ss = 0;
    int n = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!use[i]) continue;
        const double r = y[i] - (f.a * x[i] + f.b);
        ss += r * r;
        ++n;
    }
    f.rms = n > 0 ? std::sqrt(ss / n) : 0.0;
    f.n_used = n;
    return f;
}

// Affine fit with iterated 3-sigma clipping (at most `max_iter` rounds).
// Residual sigma per round comes from the MAD so a single gross outlier
// cannot inflate its own acceptance window.
inline AffineFit sigma_clipped_affine(const std::vector<double>& x, const std::vector<double>& y,
                                      double clip = 3.0, int max_iter = 5) {
    if (x.size() != y.size()) throw std::invalid_argument("affine fit: size mismatch");
    if (x.size() < 3) throw std::invalid_argument("affine fit needs at least 3 points");
    std::vector<char> use(x.size(), 1);
    AffineFit fit = least_squares_affine(x, y, use);
    for (int it = 0; it < max_iter; ++it) {
        std::vector<double> res;
        res.reserve(x.size());
        for (std::size_t i = 0; i < x.size(); ++i)
            if (use[i]) res.push_back(y[i] - (fit.a * x[i] + fit.b));
        double sigma = mad_sigma(res);
        if (sigma <= 0.0) sigma = fit.rms;
        if (sigma <= 0.0) break;  // perfect fit, nothing to clip
        bool changed = false;
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (!use[i]) continue;
            const double r = y[i] - (fit.a * x[i] + fit.b);
            if (std::fabs(r) > clip * sigma) {
                use[i] = 0;
                changed = true;
            }
        }
        int left = 0;
        for (char u : use) left += u;
        if (left < 3) break;  // keep the last sane fit
        if (!changed) break;
        fit = least_squares_affine(x, y, use);
    }
    return fit;
}

// Inverse-variance weighted mean and its chi-square against the mean.
struct WeightedMean {
    double value = 0.0;
    double chi2 = 0.0;
    int n = 0;
};

inline WeightedMean weighted_mean(const std::vector<double>& v, const std::vector<double>& sigma) {
    if (v.size() != sigma.size()) throw std::invalid_argument("weighted mean: size mismatch");
    double sw = 0, swx = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!(sigma[i] > 0.0)) throw std::invalid_argument("weighted mean: nonpositive sigma");
        const double w = 1.0 / (sigma[i] * sigma[i]);
        sw += w;
        swx += w * v[i];
    }
    if (sw <= 0.0 || v.empty()) throw std::invalid_argument("weighted mean of empty set");
    WeightedMean m;
    m.value = swx / sw;
    m.n = static_cast<int>(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double r = (v[i] - m.value) / sigma[i];
        m.chi2 += r * r;
    }
    return m;
}

}  // namespace pixellens::stats
