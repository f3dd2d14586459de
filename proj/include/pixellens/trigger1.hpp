#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "pixellens/lightcurves.hpp"

// First trigger level: run-based peak detection on superpixel curves,
// followed by the cosmic-ray filter, the bright-star filter and peak
// classification. All pure per-curve functions; the distributed layer relies
// on their determinism.

namespace pixellens::trigger1 {

enum class PeakClass : std::uint8_t { Single = 1, Double = 2, Multiple = 3 };

inline const char* to_string(PeakClass c) {
    switch (c) {
        case PeakClass::Single: return "single";
        case PeakClass::Double: return "double";
        case PeakClass::Multiple: return "multiple";
    }
    return "?";
}

struct PeakCandidate {
    int i = 0;
    int j = 0;
    double t_start = 0.0;
    double t_peak = 0.0;
    double t_end = 0.0;
    double significance = 0.0;  // (flux - baseline) / sigma_base at the peak
    int n_consecutive = 0;
    int first_index = 0;  // epoch index of t_start, for in-run bookkeeping
};

// Maximal runs of >= n_min consecutive valid samples with
// flux > baseline + k * sigma_base. Each run reports its
// maximum-significance epoch. Invalid samples break runs.
inline std::vector<PeakCandidate> detect_peaks(const lightcurves::LightCurve& curve,
                                               double baseline, double sigma_base, double k,
                                               int n_min) {
    if (n_min < 1) throw pipeline_error("detect_peaks: n_min must be >= 1");
    // A noiseless baseline (MAD exactly zero) still has a meaningful
    // threshold: any excursion above it counts, with finite significance
    // computed against a tiny floor.
    const double sigma = sigma_base > 0.0
                             ? sigma_base
                             : 1e-12 * std::max(1.0, std::fabs(baseline));
    const double threshold = baseline + k * sigma;

    std::vector<PeakCandidate> out;
    const auto& s = curve.samples;
    std::size_t i = 0;
    while (i < s.size()) {
        if (!s[i].valid || !(s[i].flux > threshold)) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < s.size() && s[j].valid && s[j].flux > threshold) ++j;
        const int run = static_cast<int>(j - i);
        if (run >= n_min) {
            PeakCandidate c;
            c.i = curve.i;
            c.j = curve.j;
            c.first_index = static_cast<int>(i);
            c.t_start = s[i].t;
            c.t_end = s[j - 1].t;
            c.n_consecutive = run;
            std::size_t peak = i;
            for (std::size_t m = i + 1; m < j; ++m)
                if (s[m].flux > s[peak].flux) peak = m;
            c.t_peak = s[peak].t;
            c.significance = (s[peak].flux - baseline) / sigma;
            out.push_back(c);
        }
        i = j;
    }
    return out;
}

// Cosmic-ray filter: drops candidates confined to a single epoch and runs
// whose integrated excess above baseline is dominated more than 90% by one
// epoch.
inline std::vector<PeakCandidate> cosmic_filter(const lightcurves::LightCurve& curve,
                                                const std::vector<PeakCandidate>& candidates,
                                                double baseline, double dominance = 0.9) {
    std::vector<PeakCandidate> kept;
    kept.reserve(candidates.size());
    for (const auto& c : candidates) {
        if (c.n_consecutive <= 1) continue;
        double total = 0.0, largest = 0.0;
        for (int e = c.first_index; e < c.first_index + c.n_consecutive; ++e) {
            const double excess = curve.samples[static_cast<std::size_t>(e)].flux - baseline;
            if (excess > 0.0) {
                total += excess;
                largest = std::max(largest, excess);
            }
        }
        if (total > 0.0 && largest / total > dominance) continue;
        kept.push_back(c);
    }
    return kept;
}

// Bright resolved stars, dilated by the superpixel radius. Candidates whose
// superpixel center lands on the dilated mask are variable-star suspects and
// are removed rather than fitted.
struct StarMask {
    struct Pos {
        double x = 0.0;
        double y = 0.0;
    };
    std::vector<Pos> stars;
    int radius = 0;  // Chebyshev dilation radius, px

    bool covers(int i, int j) const {
        for (const auto& s : stars) {
            if (std::max(std::fabs(static_cast<double>(j) - s.x),
                         std::fabs(static_cast<double>(i) - s.y)) <= radius + 0.5)
                return true;
        }
        return false;
    }
};

inline std::vector<PeakCandidate> star_filter(const std::vector<PeakCandidate>& candidates,
                                              const StarMask& mask) {
    std::vector<PeakCandidate> kept;
    kept.reserve(candidates.size());
    for (const auto& c : candidates)
        if (!mask.covers(c.i, c.j)) kept.push_back(c);
    return kept;
}

// Disjoint surviving candidates on one curve: 1 -> Single, 2 -> Double,
// 3+ -> Multiple.
inline PeakClass classify_peaks(const std::vector<PeakCandidate>& candidates) {
    if (candidates.empty()) throw pipeline_error("classify_peaks: no candidates");
    if (candidates.size() == 1) return PeakClass::Single;
    if (candidates.size() == 2) return PeakClass::Double;
    return PeakClass::Multiple;
}

}  // namespace pixellens::trigger1
