#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pixellens/bytes.hpp"
#include "pixellens/frame.hpp"

// Campaign configuration: one key-value text file describes the synthetic
// sky, the per-night observing parameters, the injected events and every
// analysis threshold. The canonical re-serialization of the parsed config is
// hashed and carried in each distributed job so coordinator and workers can
// prove they agree on it.

namespace pixellens {

struct EpochConfig {
    int id = 0;
    double t = 0.0;            // observation time, epoch units
    double exposure = 1.0;     // s
    double seeing_fwhm = 2.5;  // px
    double sky = 100.0;        // ADU
    double gain = 1.0;         // photometric scale a
    double offset = 0.0;       // photometric offset b, ADU
    double dx = 0.0;           // pointing shift, px
    double dy = 0.0;
    double rot = 0.0;          // rotator angle, radians
    int n_cosmics = 0;
};

struct EventConfig {
    double x = 0.0;
    double y = 0.0;
    double u0 = 0.5;
    double t0 = 0.0;
    double tE = 1.0;
    double flux = 1000.0;  // source flux, ADU/s
    // Optional second bump (planetary-style secondary peak).
    bool has_secondary = false;
    double u02 = 0.5;
    double t02 = 0.0;
    double tE2 = 1.0;
    double flux2 = 0.0;
};

struct AlertSinkConfig {
    enum class Kind { Stdout, File, Webhook };
    Kind kind = Kind::Stdout;
    std::string target;  // path or URL
};

struct CampaignConfig {
    std::uint64_t seed = 1;
    int width = 256;
    int height = 256;
    int n_stars = 200;
    double flux_min = 100.0;
    double flux_max = 10000.0;

    // Calibration truth surfaces.
    double bias_level = 300.0;
    double bias_gradient = 20.0;   // smooth pattern amplitude, ADU
    double dark_rate = 0.2;        // ADU/s
    int hot_pixels = 0;
    double hot_pixel_rate = 25.0;  // ADU/s for hot pixels
    double flat_vignette = 0.1;    // vignetting depth at the corners
    int dead_pixels = 0;

    // Noise model.
    double read_noise = 5.0;       // ADU rms per pixel
    bool shot_noise = true;
    double calib_noise = 2.0;      // rms for calibration exposures
    double cosmic_amplitude = 4000.0;

    // Calibration acquisition plan.
    int n_bias = 10;
    int n_dark = 10;
    int n_flat = 10;
    double dark_exposure = 10.0;
    double flat_level = 10000.0;

    // Optional smooth extended background, ADU edge-to-edge across the frame.
    double background_gradient = 0.0;

    // Analysis.
    int superpixel_m = 3;
    double trigger_k = 3.0;
    int trigger_nmin = 3;
    double delta_chi2_single = 25.0;
    double delta_chi2_double = 16.0;
    double chi2_dof_max = 3.0;
    double cutoff_scale = 64.0;        // px, extended-object high-pass scale
    double detect_ksigma = 5.0;        // star detection threshold
    double star_filter_min_flux = 2000.0;  // ADU; brighter detections mask curves
    double short_te = 3.0;             // events with tE below this are "short"

    // Cluster policy.
    double heartbeat_s = 5.0;
    int heartbeat_misses = 3;
    int job_retries = 2;
    bool ship_inline = true;  // inline tile payloads vs path references

    std::vector<AlertSinkConfig> alerts;
    std::string catalog_path;  // empty = no catalog persistence

    std::vector<EpochConfig> epochs;
    std::vector<EventConfig> events;
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Parses "k1=v1 k2=v2 ..." item lists used by epoch and event lines.
inline std::vector<std::pair<std::string, std::string>> parse_items(const std::string& s) {
    std::vector<std::pair<std::string, std::string>> items;
    std::istringstream iss(s);
    std::string tok;
    while (iss >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos || eq == 0)
            throw pipeline_error("config: malformed item '" + tok + "' (expected key=value)");
        items.emplace_back(tok.substr(0, eq), tok.substr(eq + 1));
    }
    return items;
}

inline double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("junk");
        return d;
    } catch (const std::exception&) {
        throw pipeline_error("config: bad numeric value for '" + key + "': '" + v + "'");
    }
}

inline long long to_int(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        long long d = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("junk");
        return d;
    } catch (const std::exception&) {
        throw pipeline_error("config: bad integer value for '" + key + "': '" + v + "'");
    }
}

inline bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "off" || v == "no") return false;
    throw pipeline_error("config: bad boolean value for '" + key + "': '" + v + "'");
}

}  // namespace detail

inline EpochConfig parse_epoch_line(const std::string& value) {
    EpochConfig e;
    bool saw_t = false;
    for (const auto& [k, v] : detail::parse_items(value)) {
        if (k == "id") e.id = static_cast<int>(detail::to_int(k, v));
        else if (k == "t") { e.t = detail::to_double(k, v); saw_t = true; }
        else if (k == "exposure") e.exposure = detail::to_double(k, v);
        else if (k == "seeing") e.seeing_fwhm = detail::to_double(k, v);
        else if (k == "sky") e.sky = detail::to_double(k, v);
        else if (k == "gain") e.gain = detail::to_double(k, v);
        else if (k == "offset") e.offset = detail::to_double(k, v);
        else if (k == "dx") e.dx = detail::to_double(k, v);
        else if (k == "dy") e.dy = detail::to_double(k, v);
        else if (k == "rot") e.rot = detail::to_double(k, v);
        else if (k == "cosmics") e.n_cosmics = static_cast<int>(detail::to_int(k, v));
        else throw pipeline_error("config: unknown epoch field '" + k + "'");
    }
    if (!saw_t) e.t = static_cast<double>(e.id);
    if (e.exposure <= 0) throw pipeline_error("config: epoch exposure must be > 0");
    if (e.seeing_fwhm <= 0) throw pipeline_error("config: epoch seeing must be > 0");
    return e;
}

inline EventConfig parse_event_line(const std::string& value) {
    EventConfig ev;
    for (const auto& [k, v] : detail::parse_items(value)) {
        if (k == "x") ev.x = detail::to_double(k, v);
        else if (k == "y") ev.y = detail::to_double(k, v);
        else if (k == "u0") ev.u0 = detail::to_double(k, v);
        else if (k == "t0") ev.t0 = detail::to_double(k, v);
        else if (k == "tE") ev.tE = detail::to_double(k, v);
        else if (k == "flux") ev.flux = detail::to_double(k, v);
        else if (k == "u02") { ev.u02 = detail::to_double(k, v); ev.has_secondary = true; }
        else if (k == "t02") { ev.t02 = detail::to_double(k, v); ev.has_secondary = true; }
        else if (k == "tE2") { ev.tE2 = detail::to_double(k, v); ev.has_secondary = true; }
        else if (k == "flux2") { ev.flux2 = detail::to_double(k, v); ev.has_secondary = true; }
        else throw pipeline_error("config: unknown event field '" + k + "'");
    }
    if (ev.u0 <= 0 || ev.tE <= 0) throw pipeline_error("config: event needs u0 > 0 and tE > 0");
    if (ev.has_secondary && (ev.u02 <= 0 || ev.tE2 <= 0))
        throw pipeline_error("config: secondary event component needs u02 > 0 and tE2 > 0");
    return ev;
}

inline AlertSinkConfig parse_alert_value(const std::string& v) {
    AlertSinkConfig s;
    if (v == "stdout") {
        s.kind = AlertSinkConfig::Kind::Stdout;
    } else if (v.rfind("file:", 0) == 0) {
        s.kind = AlertSinkConfig::Kind::File;
        s.target = v.substr(5);
    } else if (v.rfind("webhook:", 0) == 0) {
        s.kind = AlertSinkConfig::Kind::Webhook;
        s.target = v.substr(8);
    } else {
        throw pipeline_error("config: unknown alert sink '" + v +
                             "' (expected stdout, file:PATH or webhook:URL)");
    }
    return s;
}

inline CampaignConfig parse_campaign_text(const std::string& text) {
    CampaignConfig c;
    c.alerts.clear();
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw pipeline_error("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));

        if (key == "seed") c.seed = static_cast<std::uint64_t>(detail::to_int(key, value));
        else if (key == "width") c.width = static_cast<int>(detail::to_int(key, value));
        else if (key == "height") c.height = static_cast<int>(detail::to_int(key, value));
        else if (key == "n_stars") c.n_stars = static_cast<int>(detail::to_int(key, value));
        else if (key == "flux_min") c.flux_min = detail::to_double(key, value);
        else if (key == "flux_max") c.flux_max = detail::to_double(key, value);
        else if (key == "bias_level") c.bias_level = detail::to_double(key, value);
        else if (key == "bias_gradient") c.bias_gradient = detail::to_double(key, value);
        else if (key == "dark_rate") c.dark_rate = detail::to_double(key, value);
        else if (key == "hot_pixels") c.hot_pixels = static_cast<int>(detail::to_int(key, value));
        else if (key == "hot_pixel_rate") c.hot_pixel_rate = detail::to_double(key, value);
        else if (key == "flat_vignette") c.flat_vignette = detail::to_double(key, value);
        else if (key == "dead_pixels") c.dead_pixels = static_cast<int>(detail::to_int(key, value));
        else if (key == "read_noise") c.read_noise = detail::to_double(key, value);
        else if (key == "shot_noise") c.shot_noise = detail::to_bool(key, value);
        else if (key == "calib_noise") c.calib_noise = detail::to_double(key, value);
        else if (key == "cosmic_amplitude") c.cosmic_amplitude = detail::to_double(key, value);
        else if (key == "n_bias") c.n_bias = static_cast<int>(detail::to_int(key, value));
        else if (key == "n_dark") c.n_dark = static_cast<int>(detail::to_int(key, value));
        else if (key == "n_flat") c.n_flat = static_cast<int>(detail::to_int(key, value));
        else if (key == "dark_exposure") c.dark_exposure = detail::to_double(key, value);
        else if (key == "flat_level") c.flat_level = detail::to_double(key, value);
        else if (key == "background_gradient") c.background_gradient = detail::to_double(key, value);
        else if (key == "superpixel_m") c.superpixel_m = static_cast<int>(detail::to_int(key, value));
        else if (key == "trigger_k") c.trigger_k = detail::to_double(key, value);
        else if (key == "trigger_nmin") c.trigger_nmin = static_cast<int>(detail::to_int(key, value));
        else if (key == "delta_chi2_single") c.delta_chi2_single = detail::to_double(key, value);
        else if (key == "delta_chi2_double") c.delta_chi2_double = detail::to_double(key, value);
        else if (key == "chi2_dof_max") c.chi2_dof_max = detail::to_double(key, value);
        else if (key == "cutoff_scale") c.cutoff_scale = detail::to_double(key, value);
        else if (key == "detect_ksigma") c.detect_ksigma = detail::to_double(key, value);
        else if (key == "star_filter_min_flux") c.star_filter_min_flux = detail::to_double(key, value);
        else if (key == "short_te") c.short_te = detail::to_double(key, value);
        else if (key == "heartbeat_s") c.heartbeat_s = detail::to_double(key, value);
        else if (key == "heartbeat_misses") c.heartbeat_misses = static_cast<int>(detail::to_int(key, value));
        else if (key == "job_retries") c.job_retries = static_cast<int>(detail::to_int(key, value));
        else if (key == "ship_mode") {
            if (value == "inline") c.ship_inline = true;
            else if (value == "path") c.ship_inline = false;
            else throw pipeline_error("config: ship_mode must be 'inline' or 'path'");
        }
        else if (key == "alert") c.alerts.push_back(parse_alert_value(value));
        else if (key == "catalog") c.catalog_path = value;
        else if (key == "epoch") c.epochs.push_back(parse_epoch_line(value));
        else if (key == "event") c.events.push_back(parse_event_line(value));
        else throw pipeline_error("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
    if (c.width < 1 || c.height < 1) throw pipeline_error("config: frame dimensions must be >= 1");
    if (c.superpixel_m < 0) throw pipeline_error("config: superpixel_m must be >= 0");
    return c;
}

inline CampaignConfig load_campaign(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw pipeline_error("config: cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_campaign_text(text);
}

// Canonical re-serialization: fixed key order, %.17g floats. Two configs
// that parse equal serialize byte-equal, so the hash of this text is the
// campaign identity used by the wire protocol.
inline std::string canonical_campaign_text(const CampaignConfig& c) {
    using detail::fmt_double;
    std::ostringstream out;
    out << "seed = " << c.seed << "\n";
    out << "width = " << c.width << "\n";
    out << "height = " << c.height << "\n";
    out << "n_stars = " << c.n_stars << "\n";
    out << "flux_min = " << fmt_double(c.flux_min) << "\n";
    out << "flux_max = " << fmt_double(c.flux_max) << "\n";
    out << "bias_level = " << fmt_double(c.bias_level) << "\n";
    out << "bias_gradient = " << fmt_double(c.bias_gradient) << "\n";
    out << "dark_rate = " << fmt_double(c.dark_rate) << "\n";
    out << "hot_pixels = " << c.hot_pixels << "\n";
    out << "hot_pixel_rate = " << fmt_double(c.hot_pixel_rate) << "\n";
    out << "flat_vignette = " << fmt_double(c.flat_vignette) << "\n";
    out << "dead_pixels = " << c.dead_pixels << "\n";
    out << "read_noise = " << fmt_double(c.read_noise) << "\n";
    out << "shot_noise = " << (c.shot_noise ? "true" : "false") << "\n";
    out << "calib_noise = " << fmt_double(c.calib_noise) << "\n";
    out << "cosmic_amplitude = " << fmt_double(c.cosmic_amplitude) << "\n";
    out << "n_bias = " << c.n_bias << "\n";
    out << "n_dark = " << c.n_dark << "\n";
    out << "n_flat = " << c.n_flat << "\n";
    out << "dark_exposure = " << fmt_double(c.dark_exposure) << "\n";
    out << "flat_level = " << fmt_double(c.flat_level) << "\n";
    out << "background_gradient = " << fmt_double(c.background_gradient) << "\n";
    out << "superpixel_m = " << c.superpixel_m << "\n";
    out << "trigger_k = " << fmt_double(c.trigger_k) << "\n";
    out << "trigger_nmin = " << c.trigger_nmin << "\n";
    out << "delta_chi2_single = " << fmt_double(c.delta_chi2_single) << "\n";
    out << "delta_chi2_double = " << fmt_double(c.delta_chi2_double) << "\n";
    out << "chi2_dof_max = " << fmt_double(c.chi2_dof_max) << "\n";
    out << "cutoff_scale = " << fmt_double(c.cutoff_scale) << "\n";
    out << "detect_ksigma = " << fmt_double(c.detect_ksigma) << "\n";
    out << "star_filter_min_flux = " << fmt_double(c.star_filter_min_flux) << "\n";
    out << "short_te = " << fmt_double(c.short_te) << "\n";
    out << "heartbeat_s = " << fmt_double(c.heartbeat_s) << "\n";
    out << "heartbeat_misses = " << c.heartbeat_misses << "\n";
    out << "job_retries = " << c.job_retries << "\n";
    out << "ship_mode = " << (c.ship_inline ? "inline" : "path") << "\n";
    for (const auto& a : c.alerts) {
        out << "alert = ";
        switch (a.kind) {
            case AlertSinkConfig::Kind::Stdout: out << "stdout"; break;
            case AlertSinkConfig::Kind::File: out << "file:" << a.target; break;
            case AlertSinkConfig::Kind::Webhook: out << "webhook:" << a.target; break;
        }
        out << "\n";
    }
    if (!c.catalog_path.empty()) out << "catalog = " << c.catalog_path << "\n";
    for (const auto& e : c.epochs) {
        out << "epoch = id=" << e.id << " t=" << fmt_double(e.t)
            << " exposure=" << fmt_double(e.exposure) << " seeing=" << fmt_double(e.seeing_fwhm)
            << " sky=" << fmt_double(e.sky) << " gain=" << fmt_double(e.gain)
            << " offset=" << fmt_double(e.offset) << " dx=" << fmt_double(e.dx)
            << " dy=" << fmt_double(e.dy) << " rot=" << fmt_double(e.rot)
            << " cosmics=" << e.n_cosmics << "\n";
    }
    for (const auto& ev : c.events) {
        out << "event = x=" << fmt_double(ev.x) << " y=" << fmt_double(ev.y)
            << " u0=" << fmt_double(ev.u0) << " t0=" << fmt_double(ev.t0)
            << " tE=" << fmt_double(ev.tE) << " flux=" << fmt_double(ev.flux);
        if (ev.has_secondary)
            out << " u02=" << fmt_double(ev.u02) << " t02=" << fmt_double(ev.t02)
                << " tE2=" << fmt_double(ev.tE2) << " flux2=" << fmt_double(ev.flux2);
        out << "\n";
    }
    return out.str();
}

inline std::uint64_t campaign_hash(const CampaignConfig& c) {
    return fnv1a64(canonical_campaign_text(c));
}

}  // namespace pixellens
