#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "pixellens/frame.hpp"
#include "pixellens/stats.hpp"

// Astrometric alignment of effective images onto the reference night's pixel
// grid: star detection, triangle-invariant matching, least-squares
// similarity fit and bilinear resampling.

namespace pixellens::align {

struct StarDetection {
    double x = 0.0;     // subpixel centroid
    double y = 0.0;
    double flux = 0.0;  // background-subtracted 5x5 sum, ADU
    double peak = 0.0;  // peak pixel, ADU
};

// Local maxima above background + k_sigma * sigma, background and sigma from
// the global median and scaled MAD. Centroid is the flux-weighted mean over
// a 5x5 window. Plateaus of exactly equal pixels count once (the first in
// row-major order wins). Sorted by flux descending.
inline std::vector<StarDetection> detect_stars(const Frame& frame, double k_sigma) {
    validate_frame(frame);
    std::vector<double> vals(frame.pixels.begin(), frame.pixels.end());
    const double bg = stats::median(vals);
    double sigma = stats::mad_sigma(vals);
    if (sigma <= 0.0) sigma = 1e-12 * std::max(1.0, std::fabs(bg));
    const double threshold = bg + k_sigma * sigma;

    std::vector<StarDetection> out;
    const int w = frame.width, h = frame.height;
    for (int y = 2; y < h - 2; ++y) {
        for (int x = 2; x < w - 2; ++x) {
            const float p = frame.at(x, y);
            if (!(p > threshold)) continue;
            bool is_max = true;
            for (int ny = y - 1; ny <= y + 1 && is_max; ++ny) {
                for (int nx = x - 1; nx <= x + 1; ++nx) {
                    if (nx == x && ny == y) continue;
                    const float q = frame.at(nx, ny);
                    const bool earlier = (ny < y) || (ny == y && nx < x);
                    if (earlier ? !(p > q) : !(p >= q)) {
                        is_max = false;
                        break;
                    }
                }
            }
            if (!is_max) continue;

            double sum = 0.0, sx = 0.0, sy = 0.0;
            bool clean = true;
            for (int ny = y - 2; ny <= y + 2 && clean; ++ny) {
                for (int nx = x - 2; nx <= x + 2; ++nx) {
                    if (frame.masked(nx, ny)) {
                        clean = false;
                        break;
                    }
                    const double v = std::max(0.0, static_cast<double>(frame.at(nx, ny)) - bg);
                    sum += v;
                    sx += v * nx;
                    sy += v * ny;
                }
            }
            if (!clean || !(sum > 0.0)) continue;
            StarDetection d;
            d.x = sx / sum;
            d.y = sy / sum;
            d.flux = sum;
            d.peak = p;
            out.push_back(d);
        }
    }
    std::sort(out.begin(), out.end(), [](const StarDetection& a, const StarDetection& b) {
        if (a.flux != b.flux) return a.flux > b.flux;
        if (a.y != b.y) return a.y < b.y;
        return a.x < b.x;
    });
    return out;
}

// Similarity transform x' = s R(theta) x + t, mapping target coordinates to
// reference coordinates.
struct SimilarityTransform {
    double s = 1.0;
    double theta = 0.0;
    double tx = 0.0;
    double ty = 0.0;

    void apply(double x, double y, double& ox, double& oy) const {
        const double c = std::cos(theta), n = std::sin(theta);
        ox = s * (c * x - n * y) + tx;
        oy = s * (n * x + c * y) + ty;
    }

    SimilarityTransform invert() const {
        if (!(s > 0.0)) throw pipeline_error("similarity transform: scale must be > 0");
        SimilarityTransform inv;
        inv.s = 1.0 / s;
        inv.theta = -theta;
        const double c = std::cos(inv.theta), n = std::sin(inv.theta);
        inv.tx = -inv.s * (c * tx - n * ty);
        inv.ty = -inv.s * (n * tx + c * ty);
        return inv;
    }

    bool is_identity() const { return s == 1.0 && theta == 0.0 && tx == 0.0 && ty == 0.0; }
};

struct SimilarityFit {
    SimilarityTransform transform;
    double rms = 0.0;  // residual RMS, px
    int n_pairs = 0;
};

struct PointPair {
    double ref_x, ref_y;
    double tgt_x, tgt_y;
};

// Least-squares similarity transform mapping target points onto reference
// points (closed form on centered coordinates).
inline SimilarityFit fit_similarity(const std::vector<PointPair>& pairs) {
    if (pairs.size() < 2) throw pipeline_error("fit_similarity: need at least 2 pairs");
    double mrx = 0, mry = 0, mtx = 0, mty = 0;
    for (const auto& p : pairs) {
        mrx += p.ref_x;
        mry += p.ref_y;
        mtx += p.tgt_x;
        mty += p.tgt_y;
    }
    const double n = static_cast<double>(pairs.size());
    mrx /= n;
    mry /= n;
    mtx /= n;
    mty /= n;

    double sum_cross_c = 0, sum_cross_s = 0, sum_tgt2 = 0;
    for (const auto& p : pairs) {
        const double rx = p.ref_x - mrx, ry = p.ref_y - mry;
        const double tx = p.tgt_x - mtx, ty = p.tgt_y - mty;
        sum_cross_c += tx * rx + ty * ry;
        sum_cross_s += tx * ry - ty * rx;
        sum_tgt2 += tx * tx + ty * ty;
    }
    if (sum_tgt2 < 1e-12)
        throw pipeline_error("fit_similarity: degenerate geometry (points coincident)");

    const double alpha = sum_cross_c / sum_tgt2;  // s cos(theta)
    const double beta = sum_cross_s / sum_tgt2;   // s sin(theta)
    SimilarityFit fit;
    fit.transform.s = std::sqrt(alpha * alpha + beta * beta);
    fit.transform.theta = std::atan2(beta, alpha);
    fit.transform.tx = mrx - (alpha * mtx - beta * mty);
    fit.transform.ty = mry - (beta * mtx + alpha * mty);
    fit.n_pairs = static_cast<int>(pairs.size());

    double ss = 0.0;
    for (const auto& p : pairs) {
        double px, py;
        fit.transform.apply(p.tgt_x, p.tgt_y, px, py);
        const double dx = p.ref_x - px, dy = p.ref_y - py;
        ss += dx * dx + dy * dy;
    }
    fit.rms = std::sqrt(ss / n);
    return fit;
}

struct MatchOptions {
    int n_brightest = 30;     // stars entering the triangle stage
    double ratio_tol = 0.01;  // side-ratio signature tolerance
    double min_side = 4.0;    // px; smaller triangles carry no shape information
    double min_shape = 0.1;   // reject near-collinear triangles (c/a below this)
    int min_votes = 3;        // triangle votes to trust a pairing
    double confirm_tol = 2.0; // px, nearest-neighbor confirmation radius
};

namespace detail {

struct Triangle {
    int v_a, v_b, v_c;   // vertex opposite the longest / middle / shortest side
    double r1, r2;       // b/a, c/a with sides a >= b >= c
};

inline std::vector<Triangle> make_triangles(const std::vector<StarDetection>& stars,
                                            const MatchOptions& opt) {
    const int n = std::min<int>(opt.n_brightest, static_cast<int>(stars.size()));
    std::vector<Triangle> tris;
    auto dist = [&](int i, int j) {
        const double dx = stars[i].x - stars[j].x;
        const double dy = stars[i].y - stars[j].y;
        return std::sqrt(dx * dx + dy * dy);
    };
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            for (int k = j + 1; k < n; ++k) {
                // Sides opposite each vertex.
                struct SideRef {
                    double len;
                    int opposite;
                } sides[3] = {{dist(j, k), i}, {dist(i, k), j}, {dist(i, j), k}};
                std::sort(sides, sides + 3,
                          [](const SideRef& a, const SideRef& b) { return a.len > b.len; });
                if (sides[2].len < opt.min_side) continue;
                const double r1 = sides[1].len / sides[0].len;
                const double r2 = sides[2].len / sides[0].len;
                if (r2 < opt.min_shape) continue;
                tris.push_back({sides[0].opposite, sides[1].opposite, sides[2].opposite, r1, r2});
            }
        }
    }
    return tris;
}

}  // namespace detail

// Correspondences between two detection lists via triangle-invariant
// matching on the brightest stars, followed by nearest-neighbor
// confirmation under the implied transform. Returns (ref index, target
// index) pairs; throws "alignment failure" when fewer than 2 confident
// pairs survive.
inline std::vector<std::pair<int, int>> match_stars(const std::vector<StarDetection>& ref,
                                                    const std::vector<StarDetection>& target,
                                                    const MatchOptions& opt = {}) {
    if (ref.size() < 2 || target.size() < 2)
        throw pipeline_error("match_stars: alignment failure (need at least 2 detections each)");

    const auto ref_tris = detail::make_triangles(ref, opt);
    const auto tgt_tris = detail::make_triangles(target, opt);

    const int nr = std::min<int>(opt.n_brightest, static_cast<int>(ref.size()));
    const int nt = std::min<int>(opt.n_brightest, static_cast<int>(target.size()));
    std::vector<int> votes(static_cast<std::size_t>(nr) * nt, 0);
    for (const auto& rt : ref_tris) {
        for (const auto& tt : tgt_tris) {
            if (std::fabs(rt.r1 - tt.r1) > opt.ratio_tol) continue;
            if (std::fabs(rt.r2 - tt.r2) > opt.ratio_tol) continue;
            ++votes[static_cast<std::size_t>(rt.v_a) * nt + tt.v_a];
            ++votes[static_cast<std::size_t>(rt.v_b) * nt + tt.v_b];
            ++votes[static_cast<std::size_t>(rt.v_c) * nt + tt.v_c];
        }
    }

    // Greedy mutually-exclusive selection by vote count.
    std::vector<std::pair<int, int>> seeds;
    std::vector<char> used_r(static_cast<std::size_t>(nr), 0), used_t(static_cast<std::size_t>(nt), 0);
    while (true) {
        int best = opt.min_votes - 1, br = -1, bt = -1;
        for (int r = 0; r < nr; ++r) {
            if (used_r[r]) continue;
            for (int t = 0; t < nt; ++t) {
                if (used_t[t]) continue;
                const int v = votes[static_cast<std::size_t>(r) * nt + t];
                if (v > best) {
                    best = v;
                    br = r;
                    bt = t;
                }
            }
        }
        if (br < 0) break;
        used_r[br] = 1;
        used_t[bt] = 1;
        seeds.emplace_back(br, bt);
    }
    if (seeds.size() < 2) throw pipeline_error("match_stars: alignment failure (no consistent triangles)");

    // Preliminary transform from the seed pairs, with one outlier-rejection
    // round, then nearest-neighbor confirmation over the full lists.
    auto fit_from = [&](const std::vector<std::pair<int, int>>& prs) {
        std::vector<PointPair> pp;
        pp.reserve(prs.size());
        for (auto [r, t] : prs)
            pp.push_back({ref[static_cast<std::size_t>(r)].x, ref[static_cast<std::size_t>(r)].y,
                          target[static_cast<std::size_t>(t)].x,
                          target[static_cast<std::size_t>(t)].y});
        return fit_similarity(pp);
    };
    SimilarityFit prelim = fit_from(seeds);
    {
        std::vector<std::pair<int, int>> kept;
        for (auto [r, t] : seeds) {
            double px, py;
            prelim.transform.apply(target[static_cast<std::size_t>(t)].x,
                                   target[static_cast<std::size_t>(t)].y, px, py);
            const double dx = ref[static_cast<std::size_t>(r)].x - px;
            const double dy = ref[static_cast<std::size_t>(r)].y - py;
            if (std::sqrt(dx * dx + dy * dy) <= opt.confirm_tol) kept.emplace_back(r, t);
        }
        if (kept.size() >= 2 && kept.size() < seeds.size()) prelim = fit_from(kept);
        if (kept.size() < 2) throw pipeline_error("match_stars: alignment failure (seed pairs inconsistent)");
    }

    std::vector<std::pair<int, int>> confirmed;
    std::vector<char> ref_taken(ref.size(), 0);
    for (std::size_t t = 0; t < target.size(); ++t) {
        double px, py;
        prelim.transform.apply(target[t].x, target[t].y, px, py);
        int best = -1;
        double best_d = opt.confirm_tol;
        for (std::size_t r = 0; r < ref.size(); ++r) {
            if (ref_taken[r]) continue;
            const double dx = ref[r].x - px, dy = ref[r].y - py;
            const double d = std::sqrt(dx * dx + dy * dy);
            if (d < best_d) {
                best_d = d;
                best = static_cast<int>(r);
            }
        }
        if (best >= 0) {
            ref_taken[static_cast<std::size_t>(best)] = 1;
            confirmed.emplace_back(best, static_cast<int>(t));
        }
    }
    if (confirmed.size() < 2)
        throw pipeline_error("match_stars: alignment failure (fewer than 2 confirmed pairs)");
    std::sort(confirmed.begin(), confirmed.end());
    return confirmed;
}

// Bilinear resampling of `frame` onto the reference grid under `transform`
// (target -> ref). Out-of-source pixels and pixels fed by masked input are
// flagged in the output mask. An exact identity transform returns the input
// bit-for-bit.
inline Frame resample(const Frame& frame, const SimilarityTransform& transform) {
    const SimilarityTransform inv = transform.invert();  // ref -> target
    const int w = frame.width, h = frame.height;
    Frame out = Frame::zeros(w, h);
    out.epoch_id = frame.epoch_id;
    out.exposure = frame.exposure;
    out.seeing = frame.seeing;
    out.mask.assign(out.pixels.size(), 0);

    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double sx, sy;
            inv.apply(x, y, sx, sy);
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            if (sx < 0.0 || sy < 0.0 || sx > w - 1 || sy > h - 1) {
                out.mask[i] = 1;
                continue;
            }
            const int x0 = static_cast<int>(std::floor(sx));
            const int y0 = static_cast<int>(std::floor(sy));
            const double fx = sx - x0;
            const double fy = sy - y0;
            const int x1 = fx > 0.0 ? x0 + 1 : x0;
            const int y1 = fy > 0.0 ? y0 + 1 : y0;
            // Masked inputs flag the output but the interpolated value is
            // still written, so an identity transform is bit-exact even on
            // masked frames.
            if (frame.masked(x0, y0) || frame.masked(x1, y0) || frame.masked(x0, y1) ||
                frame.masked(x1, y1))
                out.mask[i] = 1;
            const double p00 = frame.at(x0, y0);
            const double p10 = frame.at(x1, y0);
            const double p01 = frame.at(x0, y1);
            const double p11 = frame.at(x1, y1);
            const double v = (1.0 - fy) * ((1.0 - fx) * p00 + fx * p10) +
                             fy * ((1.0 - fx) * p01 + fx * p11);
            out.pixels[i] = static_cast<float>(v);
        }
    }
    if (!frame.has_mask()) {
        bool any = false;
        for (auto m : out.mask)
            if (m) {
                any = true;
                break;
            }
        if (!any && transform.is_identity()) out.mask.clear();
    }
    return out;
}

// Per-epoch alignment report line (structured text).
struct AlignmentReport {
    int epoch_id = 0;
    SimilarityTransform transform;
    double rms = 0.0;
    int n_pairs = 0;
};

inline std::string format_report_line(const AlignmentReport& r) {
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "epoch=%d s=%.9f theta=%.9f tx=%.6f ty=%.6f rms=%.6f n_pairs=%d", r.epoch_id,
                  r.transform.s, r.transform.theta, r.transform.tx, r.transform.ty, r.rms,
                  r.n_pairs);
    return buf;
}

}  // namespace pixellens::align
