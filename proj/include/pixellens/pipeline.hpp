#pragma once

#include <algorithm>
#include <chrono>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pixellens/align.hpp"
#include "pixellens/config.hpp"
#include "pixellens/homogenize.hpp"
#include "pixellens/lightcurves.hpp"
#include "pixellens/reduce.hpp"
#include "pixellens/skysim.hpp"
#include "pixellens/trigger1.hpp"
#include "pixellens/trigger2.hpp"

// End-to-end orchestration. The Run class drives the coordinator-side stages
// in their fixed order (synthesize/load -> reduce -> register -> homogenize)
// and the analyze_tile kernel runs curves -> trigger1 -> trigger2 on one
// tile. The distributed layer calls exactly the same kernel, which is what
// makes serial and distributed outputs bit-identical.

namespace pixellens::pipeline {

// Everything a worker needs to analyze a tile, beyond the frames themselves.
struct AnalysisParams {
    int superpixel_m = 3;
    double read_noise = 5.0;
    double trigger_k = 3.0;
    int trigger_nmin = 3;
    trigger2::SelectionThresholds thresholds;
    std::vector<double> epoch_times;
    trigger1::StarMask star_mask;
};

struct TileAnalysis {
    std::vector<trigger1::PeakCandidate> candidates;  // surviving trigger-1
    std::vector<trigger2::EventRecord> events;        // one per fitted curve
    long curves_built = 0;
    std::map<std::string, double> stage_seconds;
};

// The per-tile analysis kernel. Pure, deterministic, core-only output.
// Curves are built and triaged in row chunks so a full-frame tile never
// materializes all of its curves at once.
inline TileAnalysis analyze_tile(const lightcurves::EpochSeries& series, const TileSpec& tile,
                                 const AnalysisParams& p) {
    using clock = std::chrono::steady_clock;
    const auto elapsed = [](clock::time_point start) {
        return std::chrono::duration<double>(clock::now() - start).count();
    };

    TileAnalysis out;
    out.stage_seconds["curves"] = 0.0;
    out.stage_seconds["trigger1"] = 0.0;
    out.stage_seconds["trigger2"] = 0.0;

    // Curves that survive trigger-1, kept for the fitting pass.
    std::vector<std::pair<lightcurves::LightCurve, std::vector<trigger1::PeakCandidate>>> survivors;

    const int chunk_rows = std::max(1, (1 << 22) / std::max(1, tile.core_w * 64));
    for (int row0 = 0; row0 < tile.core_h; row0 += chunk_rows) {
        TileSpec chunk = tile;
        chunk.y0 = tile.y0 + row0;
        chunk.core_h = std::min(chunk_rows, tile.core_h - row0);

        auto t_start = clock::now();
        const auto curves =
            lightcurves::build_curves(series, p.superpixel_m, chunk, p.read_noise);
        out.curves_built += static_cast<long>(curves.size());
        out.stage_seconds["curves"] += elapsed(t_start);

        t_start = clock::now();
        for (const auto& curve : curves) {
            if (curve.n_valid() < 5) continue;
            const auto base = lightcurves::baseline_stats(curve);
            auto cands = trigger1::detect_peaks(curve, base.baseline, base.sigma, p.trigger_k,
                                                p.trigger_nmin);
            cands = trigger1::cosmic_filter(curve, cands, base.baseline);
            cands = trigger1::star_filter(cands, p.star_mask);
            if (cands.empty()) continue;
            for (const auto& c : cands) out.candidates.push_back(c);
            survivors.emplace_back(curve, std::move(cands));
        }
        out.stage_seconds["trigger1"] += elapsed(t_start);
    }

    const auto t_fit = clock::now();
    for (const auto& [curve, cands] : survivors) {
        const auto peak_class = trigger1::classify_peaks(cands);
        if (curve.n_valid() < 6) continue;
        auto by_strength = cands;
        std::sort(by_strength.begin(), by_strength.end(),
                  [](const trigger1::PeakCandidate& a, const trigger1::PeakCandidate& b) {
                      if (a.significance != b.significance) return a.significance > b.significance;
                      return a.t_peak < b.t_peak;
                  });
        const auto& seed = by_strength.front();
        const auto constant = trigger2::fit_constant(curve);
        const auto single = trigger2::fit_pspl(curve, seed);
        std::optional<trigger2::DoubleFit> dbl;
        if (curve.n_valid() >= 11) dbl = trigger2::fit_double(curve, by_strength, single);
        out.events.push_back(trigger2::classify_event(seed, peak_class, constant, single,
                                                      dbl ? &*dbl : nullptr, p.thresholds));
    }
    out.stage_seconds["trigger2"] += elapsed(t_fit);
    return out;
}

// Global ordering of merged event records: by superpixel row, column, then
// peak time.
inline void sort_events(std::vector<trigger2::EventRecord>& events) {
    std::sort(events.begin(), events.end(),
              [](const trigger2::EventRecord& a, const trigger2::EventRecord& b) {
                  if (a.candidate.i != b.candidate.i) return a.candidate.i < b.candidate.i;
                  if (a.candidate.j != b.candidate.j) return a.candidate.j < b.candidate.j;
                  return a.candidate.t_peak < b.candidate.t_peak;
              });
}

inline void sort_candidates(std::vector<trigger1::PeakCandidate>& cands) {
    std::sort(cands.begin(), cands.end(),
              [](const trigger1::PeakCandidate& a, const trigger1::PeakCandidate& b) {
                  if (a.i != b.i) return a.i < b.i;
                  if (a.j != b.j) return a.j < b.j;
                  return a.t_peak < b.t_peak;
              });
}

// ---------------------------------------------------------------------------
// Event/candidate serialization (JSON lines; key order fixed, so equal event
// lists serialize byte-equal).

inline nlohmann::ordered_json event_to_json(const trigger2::EventRecord& e) {
    nlohmann::ordered_json j;
    j["i"] = e.candidate.i;
    j["j"] = e.candidate.j;
    j["t_start"] = e.candidate.t_start;
    j["t_peak"] = e.candidate.t_peak;
    j["t_end"] = e.candidate.t_end;
    j["significance"] = e.candidate.significance;
    j["n_consecutive"] = e.candidate.n_consecutive;
    j["peak_class"] = trigger1::to_string(e.peak_class);
    j["model"] = trigger2::to_string(e.model);
    j["f_base"] = e.primary.f_base;
    j["f_s"] = e.primary.f_s;
    j["t0"] = e.primary.t0;
    j["tE"] = e.primary.tE;
    j["u0"] = e.primary.u0;
    if (e.has_secondary) {
        nlohmann::ordered_json s;
        s["f_s"] = e.f_s2;
        s["t0"] = e.t02;
        s["tE"] = e.tE2;
        s["u0"] = e.u02;
        j["secondary"] = s;
    } else {
        j["secondary"] = nullptr;
    }
    j["chi2_constant"] = e.chi2_constant;
    j["chi2_pspl"] = e.chi2_pspl;
    j["chi2_double"] = e.chi2_double;
    j["chi2_best"] = e.chi2_best;
    j["dof"] = e.dof;
    j["accepted"] = e.accepted;
    j["reason"] = e.reason;
    return j;
}

inline trigger2::EventRecord event_from_json(const nlohmann::json& j) {
    trigger2::EventRecord e;
    e.candidate.i = j.at("i").get<int>();
    e.candidate.j = j.at("j").get<int>();
    e.candidate.t_start = j.at("t_start").get<double>();
    e.candidate.t_peak = j.at("t_peak").get<double>();
    e.candidate.t_end = j.at("t_end").get<double>();
    e.candidate.significance = j.at("significance").get<double>();
    e.candidate.n_consecutive = j.at("n_consecutive").get<int>();
    const std::string pc = j.at("peak_class").get<std::string>();
    e.peak_class = pc == "single" ? trigger1::PeakClass::Single
                   : pc == "double" ? trigger1::PeakClass::Double
                                    : trigger1::PeakClass::Multiple;
    const std::string model = j.at("model").get<std::string>();
    e.model = model == "single-pspl" ? trigger2::EventModel::SinglePSPL
              : model == "double-pspl" ? trigger2::EventModel::DoublePSPL
                                       : trigger2::EventModel::Constant;
    e.primary.f_base = j.at("f_base").get<double>();
    e.primary.f_s = j.at("f_s").get<double>();
    e.primary.t0 = j.at("t0").get<double>();
    e.primary.tE = j.at("tE").get<double>();
    e.primary.u0 = j.at("u0").get<double>();
    if (!j.at("secondary").is_null()) {
        e.has_secondary = true;
        e.f_s2 = j["secondary"].at("f_s").get<double>();
        e.t02 = j["secondary"].at("t0").get<double>();
        e.tE2 = j["secondary"].at("tE").get<double>();
        e.u02 = j["secondary"].at("u0").get<double>();
    }
    e.chi2_constant = j.at("chi2_constant").get<double>();
    e.chi2_pspl = j.at("chi2_pspl").get<double>();
    e.chi2_double = j.at("chi2_double").get<double>();
    e.chi2_best = j.at("chi2_best").get<double>();
    e.dof = j.at("dof").get<int>();
    e.accepted = j.at("accepted").get<bool>();
    e.reason = j.at("reason").get<std::string>();
    return e;
}

inline std::string events_to_jsonl(const std::vector<trigger2::EventRecord>& events) {
    std::string out;
    for (const auto& e : events) {
        out += event_to_json(e).dump();
        out += "\n";
    }
    return out;
}

inline std::vector<trigger2::EventRecord> events_from_jsonl(const std::string& text) {
    std::vector<trigger2::EventRecord> events;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string::npos) end = text.size();
        const std::string line = text.substr(pos, end - pos);
        pos = end + 1;
        if (line.empty()) continue;
        events.push_back(event_from_json(nlohmann::json::parse(line)));
    }
    return events;
}

inline std::string candidates_to_text(const std::vector<trigger1::PeakCandidate>& cands) {
    std::string out = "# i j t_start t_peak t_end significance n_consecutive\n";
    char line[256];
    for (const auto& c : cands) {
        std::snprintf(line, sizeof line, "%d %d %.17g %.17g %.17g %.17g %d\n", c.i, c.j, c.t_start,
                      c.t_peak, c.t_end, c.significance, c.n_consecutive);
        out += line;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Coordinator-side stages

struct StageTimings {
    std::map<std::string, double> seconds;

    void add(const std::string& stage, double s) { seconds[stage] += s; }
};

struct RunCounts {
    long frames_reduced = 0;
    long stars_matched = 0;
    long curves_built = 0;
    long t1_candidates = 0;
    long t2_accepted = 0;
};

// ---------------------------------------------------------------------------
// Stage functions shared by the in-memory Run and the file-based CLI stages.

struct ReduceOutput {
    reduce::MasterSet masters;
    std::vector<Frame> effective;
};

inline ReduceOutput reduce_frames(const skysim::CalibrationSet& calib,
                                  const std::vector<Frame>& raw) {
    ReduceOutput out;
    out.masters = reduce::build_masters(
        calib.bias, calib.dark, std::vector<double>(calib.dark.size(), calib.dark_exposure),
        calib.flat, std::vector<double>(calib.flat.size(), calib.flat_exposure));
    for (const auto& r : raw) out.effective.push_back(reduce::reduce_frame(r, out.masters));
    return out;
}

struct RegisterOutput {
    std::vector<align::AlignmentReport> reports;
    std::vector<Frame> registered;
    std::size_t reference = 0;
    long stars_matched = 0;
};

inline RegisterOutput register_frames(const CampaignConfig& cfg,
                                      const std::vector<Frame>& effective) {
    if (effective.empty()) throw pipeline_error("register: no frames");
    RegisterOutput out;
    std::vector<std::vector<align::StarDetection>> detections;
    std::vector<homogenize::SeeingEstimate> seeing;
    for (const auto& f : effective) {
        detections.push_back(align::detect_stars(f, cfg.detect_ksigma));
        seeing.push_back(homogenize::estimate_fwhm(f, detections.back()));
    }
    // Reference night: best (smallest) seeing.
    out.reference = 0;
    for (std::size_t e = 1; e < seeing.size(); ++e)
        if (seeing[e].fwhm < seeing[out.reference].fwhm) out.reference = e;

    for (std::size_t e = 0; e < effective.size(); ++e) {
        align::AlignmentReport rep;
        rep.epoch_id = effective[e].epoch_id;
        if (e == out.reference) {
            rep.n_pairs = static_cast<int>(detections[e].size());
            out.registered.push_back(align::resample(effective[e], rep.transform));
        } else {
            const auto pairs = align::match_stars(detections[out.reference], detections[e]);
            std::vector<align::PointPair> pp;
            pp.reserve(pairs.size());
            for (auto [r, k] : pairs)
                pp.push_back({detections[out.reference][static_cast<std::size_t>(r)].x,
                              detections[out.reference][static_cast<std::size_t>(r)].y,
                              detections[e][static_cast<std::size_t>(k)].x,
                              detections[e][static_cast<std::size_t>(k)].y});
            const auto fit = align::fit_similarity(pp);
            rep.transform = fit.transform;
            rep.rms = fit.rms;
            rep.n_pairs = fit.n_pairs;
            out.registered.push_back(align::resample(effective[e], fit.transform));
        }
        out.stars_matched += rep.n_pairs;
        out.reports.push_back(rep);
    }
    return out;
}

struct HomogenizeOutput {
    std::vector<homogenize::HomogenizeReport> reports;
    lightcurves::EpochSeries series;
    trigger1::StarMask star_mask;
    homogenize::SeeingEstimate target_seeing;
};

inline HomogenizeOutput homogenize_frames(const CampaignConfig& cfg,
                                          const std::vector<Frame>& registered,
                                          std::size_t reference,
                                          const std::vector<double>& times) {
    if (registered.empty()) throw pipeline_error("homogenize: no frames");
    if (reference >= registered.size()) throw pipeline_error("homogenize: bad reference index");
    HomogenizeOutput out;

    // Star positions on the reference grid drive flux measurements, the
    // trigger-1 star mask and the seeing estimates.
    const auto ref_dets = align::detect_stars(registered[reference], cfg.detect_ksigma);
    if (ref_dets.size() < 3)
        throw pipeline_error("homogenize: too few stars on the reference frame");

    out.star_mask.radius = cfg.superpixel_m;
    for (const auto& d : ref_dets)
        if (d.flux >= cfg.star_filter_min_flux) out.star_mask.stars.push_back({d.x, d.y});

    const int R = 9;  // photometric window radius; generous vs. worst seeing
    const double area = (2.0 * R + 1) * (2.0 * R + 1);
    const int n_phot = static_cast<int>(std::min<std::size_t>(ref_dets.size(), 60));

    std::vector<Frame> corrected;
    std::vector<homogenize::SeeingEstimate> seeing;
    for (std::size_t e = 0; e < registered.size(); ++e) {
        homogenize::PhotometricSolution sol;  // identity for the reference
        if (e != reference) {
            std::vector<double> f_ref, f_tgt;
            for (int k = 0; k < n_phot; ++k) {
                const auto& d = ref_dets[static_cast<std::size_t>(k)];
                const double wr = homogenize::window_sum(registered[reference], d.x, d.y, R);
                const double wt = homogenize::window_sum(registered[e], d.x, d.y, R);
                if (wr < 0.0 || wt < 0.0) continue;  // clipped or masked window
                f_ref.push_back(wr);
                f_tgt.push_back(wt);
            }
            const auto window_sol = homogenize::estimate_photometric_scale(f_ref, f_tgt);
            sol.a = window_sol.a;
            sol.b = window_sol.b / area;  // window offset back to per-pixel
            sol.n_stars_used = window_sol.n_stars_used;
            sol.rms = window_sol.rms;
        }
        Frame corr = homogenize::apply_photometric(registered[e], sol);
        const auto dets = align::detect_stars(corr, cfg.detect_ksigma);
        seeing.push_back(homogenize::estimate_fwhm(corr, dets));
        corrected.push_back(std::move(corr));

        homogenize::HomogenizeReport rep;
        rep.epoch_id = registered[e].epoch_id;
        rep.a = sol.a;
        rep.b = sol.b;
        rep.fwhm_before = seeing.back().fwhm;
        rep.cutoff = cfg.cutoff_scale;
        out.reports.push_back(rep);
    }

    // Common target PSF: the worst seeing of the campaign (convolve only,
    // never sharpen).
    out.target_seeing = seeing[0];
    for (const auto& s : seeing)
        if (s.fwhm > out.target_seeing.fwhm) out.target_seeing = s;

    std::vector<Frame> finals;
    for (std::size_t e = 0; e < corrected.size(); ++e) {
        out.reports[e].fwhm_target = out.target_seeing.fwhm;
        Frame matched = homogenize::match_psf(corrected[e], seeing[e], out.target_seeing);
        finals.push_back(
            homogenize::remove_extended(matched, cfg.cutoff_scale, out.target_seeing.fwhm));
    }
    out.series = lightcurves::make_series(std::move(finals), times);
    return out;
}

class Run {
public:
    explicit Run(CampaignConfig cfg) : config_(std::move(cfg)) {
        if (config_.epochs.empty()) throw pipeline_error("run: campaign has no epochs");
        for (std::size_t e = 1; e < config_.epochs.size(); ++e)
            if (!(config_.epochs[e].t > config_.epochs[e - 1].t))
                throw pipeline_error("run: epoch times must be strictly increasing");
    }

    const CampaignConfig& config() const { return config_; }

    // Stage 1-2 stand-in: synthesize the raw campaign.
    void synthesize() {
        require(Stage::Start, "synthesize");
        Timer t(*this, "synthesize");
        truth_ = skysim::make_truth(config_);
        catalog_ = skysim::generate_catalog(config_.seed, config_.n_stars, config_.width,
                                            config_.height, config_.flux_min, config_.flux_max);
        calib_ = skysim::render_calibration_set(truth_, config_);
        raw_.clear();
        for (const auto& ep : config_.epochs)
            raw_.push_back(skysim::render_epoch(catalog_, ep, config_.events, truth_, config_));
        stage_ = Stage::Synthesized;
    }

    // Alternative entry: previously acquired frames.
    void load(std::vector<Frame> raw, skysim::CalibrationSet calib) {
        require(Stage::Start, "load");
        raw_ = std::move(raw);
        calib_ = std::move(calib);
        stage_ = Stage::Synthesized;
    }

    void reduce_stage() {
        require(Stage::Synthesized, "reduce");
        Timer t(*this, "reduce");
        auto out = reduce_frames(calib_, raw_);
        masters_ = std::move(out.masters);
        effective_ = std::move(out.effective);
        counts.frames_reduced = static_cast<long>(effective_.size());
        raw_.clear();
        calib_ = {};
        stage_ = Stage::Reduced;
    }

    void register_stage() {
        require(Stage::Reduced, "register");
        Timer t(*this, "register");
        auto out = register_frames(config_, effective_);
        reference_ = out.reference;
        alignment_ = std::move(out.reports);
        registered_ = std::move(out.registered);
        counts.stars_matched = out.stars_matched;
        effective_.clear();
        stage_ = Stage::Registered;
    }

    void homogenize_stage() {
        require(Stage::Registered, "homogenize");
        Timer t(*this, "homogenize");
        std::vector<double> times;
        for (const auto& e : config_.epochs) times.push_back(e.t);
        auto out = homogenize_frames(config_, registered_, reference_, times);
        homog_ = std::move(out.reports);
        series_ = std::move(out.series);
        star_mask_ = std::move(out.star_mask);
        target_seeing_ = out.target_seeing;
        registered_.clear();
        stage_ = Stage::Homogenized;
    }

    AnalysisParams analysis_params() const {
        require(Stage::Homogenized, "analysis_params");
        AnalysisParams p;
        p.superpixel_m = config_.superpixel_m;
        p.read_noise = config_.read_noise;
        p.trigger_k = config_.trigger_k;
        p.trigger_nmin = config_.trigger_nmin;
        p.thresholds.delta_chi2_single = config_.delta_chi2_single;
        p.thresholds.delta_chi2_double = config_.delta_chi2_double;
        p.thresholds.chi2_dof_max = config_.chi2_dof_max;
        p.epoch_times = series_.times;
        p.star_mask = star_mask_;
        return p;
    }

    const lightcurves::EpochSeries& series() const {
        require(Stage::Homogenized, "series");
        return series_;
    }

    // In-process analysis over an n-tile partition (n = 1 is the plain
    // serial run). Tile-local curves are exact under the halo, so the result
    // does not depend on n.
    TileAnalysis analyze_inprocess(int n_tiles = 1) {
        require(Stage::Homogenized, "analyze");
        Timer t(*this, "analyze");
        const auto params = analysis_params();
        const auto tiles =
            tile_partition(config_.width, config_.height, n_tiles, config_.superpixel_m);
        TileAnalysis merged;
        for (const auto& tile : tiles) {
            auto part = analyze_tile(series_, tile, params);
            merged.curves_built += part.curves_built;
            merged.candidates.insert(merged.candidates.end(), part.candidates.begin(),
                                     part.candidates.end());
            merged.events.insert(merged.events.end(), part.events.begin(), part.events.end());
            for (const auto& [stage, s] : part.stage_seconds) timings.add(stage, s);
        }
        sort_candidates(merged.candidates);
        sort_events(merged.events);
        counts.curves_built = merged.curves_built;
        counts.t1_candidates = static_cast<long>(merged.candidates.size());
        counts.t2_accepted = 0;
        for (const auto& e : merged.events) counts.t2_accepted += e.accepted ? 1 : 0;
        return merged;
    }

    std::size_t reference_epoch() const { return reference_; }
    const std::vector<align::AlignmentReport>& alignment_reports() const { return alignment_; }
    const std::vector<homogenize::HomogenizeReport>& homogenize_reports() const { return homog_; }
    const trigger1::StarMask& star_mask() const { return star_mask_; }
    const skysim::CalibrationTruth& truth() const { return truth_; }
    const reduce::MasterSet& masters() const { return masters_; }

    RunCounts counts;
    StageTimings timings;

private:
    enum class Stage { Start, Synthesized, Reduced, Registered, Homogenized };

    void require(Stage expected, const char* op) const {
        if (stage_ != expected)
            throw pipeline_error(std::string("pipeline stage order violated: '") + op +
                                 "' called out of sequence");
    }

    struct Timer {
        Run& run;
        std::string stage;
        std::chrono::steady_clock::time_point start;
        Timer(Run& r, std::string s)
            : run(r), stage(std::move(s)), start(std::chrono::steady_clock::now()) {}
        ~Timer() {
            const auto dt = std::chrono::steady_clock::now() - start;
            run.timings.add(stage, std::chrono::duration<double>(dt).count());
        }
    };

    CampaignConfig config_;
    Stage stage_ = Stage::Start;
    skysim::CalibrationTruth truth_;
    skysim::StarCatalog catalog_;
    skysim::CalibrationSet calib_;
    std::vector<Frame> raw_;
    reduce::MasterSet masters_;
    std::vector<Frame> effective_;
    std::size_t reference_ = 0;
    std::vector<align::AlignmentReport> alignment_;
    std::vector<Frame> registered_;
    std::vector<homogenize::HomogenizeReport> homog_;
    homogenize::SeeingEstimate target_seeing_;
    trigger1::StarMask star_mask_;
    lightcurves::EpochSeries series_;
};

// Ground-truth sidecar (JSON) written next to synthesized frames.
inline std::string truth_sidecar_json(const CampaignConfig& cfg) {
    const auto gt = skysim::ground_truth(cfg);
    nlohmann::ordered_json j;
    j["seed"] = cfg.seed;
    j["n_stars"] = cfg.n_stars;
    auto epochs = nlohmann::ordered_json::array();
    for (const auto& e : cfg.epochs) {
        nlohmann::ordered_json je;
        je["id"] = e.id;
        je["t"] = e.t;
        je["exposure"] = e.exposure;
        je["seeing"] = e.seeing_fwhm;
        je["sky"] = e.sky;
        je["gain"] = e.gain;
        je["offset"] = e.offset;
        je["dx"] = e.dx;
        je["dy"] = e.dy;
        je["rot"] = e.rot;
        je["cosmics"] = e.n_cosmics;
        epochs.push_back(je);
    }
    j["epochs"] = epochs;
    auto events = nlohmann::ordered_json::array();
    for (const auto& et : gt) {
        nlohmann::ordered_json je;
        je["x"] = et.event.x;
        je["y"] = et.event.y;
        je["u0"] = et.event.u0;
        je["t0"] = et.event.t0;
        je["tE"] = et.event.tE;
        je["flux"] = et.event.flux;
        if (et.event.has_secondary) {
            je["u02"] = et.event.u02;
            je["t02"] = et.event.t02;
            je["tE2"] = et.event.tE2;
            je["flux2"] = et.event.flux2;
        }
        auto hist = nlohmann::ordered_json::array();
        for (const auto& pe : et.per_epoch) {
            nlohmann::ordered_json jp;
            jp["t"] = pe.t;
            jp["amplification"] = pe.amplification;
            jp["x"] = pe.x;
            jp["y"] = pe.y;
            hist.push_back(jp);
        }
        je["per_epoch"] = hist;
        events.push_back(je);
    }
    j["events"] = events;
    return j.dump(2) + "\n";
}

}  // namespace pixellens::pipeline
