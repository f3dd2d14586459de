#pragma once

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "pixellens/bytes.hpp"
#include "pixellens/cluster.hpp"
#include "pixellens/config.hpp"
#include "pixellens/pipeline.hpp"
#include "pixellens/trigger2.hpp"

// Status reports across the data flow, alert dispatch for special events and
// the append-only file-backed event catalog.

namespace pixellens::dispatcher {

// ---------------------------------------------------------------------------
// Run state and reports
//
// Everything the report needs is persisted in one state file, so
// re-generating a report from persisted state is byte-identical. Wall-clock
// values live in the report's `meta` object, which byte-comparisons exclude.

struct RunState {
    std::string run_id;
    std::uint64_t config_hash = 0;
    pipeline::RunCounts counts;
    std::map<std::string, double> timings;
    std::vector<cluster::WorkerStats> workers;
    std::vector<trigger2::EventRecord> events;  // merged, sorted
    bool run_failed = false;
    std::vector<std::uint64_t> failed_jobs;
    std::string created;  // wall-clock metadata only
};

inline nlohmann::ordered_json state_to_json(const RunState& s) {
    nlohmann::ordered_json j;
    j["run_id"] = s.run_id;
    j["config_hash"] = s.config_hash;
    j["counts"] = {{"frames_reduced", s.counts.frames_reduced},
                   {"stars_matched", s.counts.stars_matched},
                   {"curves_built", s.counts.curves_built},
                   {"t1_candidates", s.counts.t1_candidates},
                   {"t2_accepted", s.counts.t2_accepted}};
    j["timings"] = s.timings;
    auto workers = nlohmann::ordered_json::array();
    for (const auto& w : s.workers) {
        nlohmann::ordered_json jw;
        jw["name"] = w.name;
        jw["jobs_completed"] = w.jobs_completed;
        jw["busy_s"] = w.busy_s;
        workers.push_back(jw);
    }
    j["workers"] = workers;
    auto events = nlohmann::ordered_json::array();
    for (const auto& e : s.events) events.push_back(pipeline::event_to_json(e));
    j["events"] = events;
    j["run_failed"] = s.run_failed;
    j["failed_jobs"] = s.failed_jobs;
    j["created"] = s.created;
    return j;
}

inline RunState state_from_json(const nlohmann::json& j) {
    RunState s;
    s.run_id = j.at("run_id").get<std::string>();
    s.config_hash = j.at("config_hash").get<std::uint64_t>();
    s.counts.frames_reduced = j.at("counts").at("frames_reduced").get<long>();
    s.counts.stars_matched = j.at("counts").at("stars_matched").get<long>();
    s.counts.curves_built = j.at("counts").at("curves_built").get<long>();
    s.counts.t1_candidates = j.at("counts").at("t1_candidates").get<long>();
    s.counts.t2_accepted = j.at("counts").at("t2_accepted").get<long>();
    for (const auto& [k, v] : j.at("timings").items()) s.timings[k] = v.get<double>();
    for (const auto& jw : j.at("workers")) {
        cluster::WorkerStats w;
        w.name = jw.at("name").get<std::string>();
        w.jobs_completed = jw.at("jobs_completed").get<int>();
        w.busy_s = jw.at("busy_s").get<double>();
        s.workers.push_back(w);
    }
    for (const auto& je : j.at("events")) s.events.push_back(pipeline::event_from_json(je));
    s.run_failed = j.at("run_failed").get<bool>();
    for (const auto& f : j.at("failed_jobs")) s.failed_jobs.push_back(f.get<std::uint64_t>());
    s.created = j.at("created").get<std::string>();
    return s;
}

inline void save_state(const RunState& s, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw pipeline_error("save_state: cannot open " + path);
    out << state_to_json(s).dump(2) << "\n";
}

inline RunState load_state(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw pipeline_error("load_state: cannot open " + path);
    nlohmann::json j;
    in >> j;
    return state_from_json(j);
}

// Builds the run report. Deterministic given the state; enforces the count
// monotonicity invariant (accepted events cannot outnumber candidates).
inline nlohmann::ordered_json build_report(const RunState& s) {
    if (s.counts.t2_accepted > s.counts.t1_candidates)
        throw pipeline_error("report invariant violated: accepted events exceed candidates");
    if (s.counts.t1_candidates > 0 && s.counts.curves_built == 0)
        throw pipeline_error("report invariant violated: candidates without curves");

    nlohmann::ordered_json j;
    j["run_id"] = s.run_id;
    j["status"] = s.run_failed ? "failed" : "ok";
    j["config_hash"] = s.config_hash;
    j["counts"] = {{"frames_reduced", s.counts.frames_reduced},
                   {"stars_matched", s.counts.stars_matched},
                   {"curves_built", s.counts.curves_built},
                   {"t1_candidates", s.counts.t1_candidates},
                   {"t2_accepted", s.counts.t2_accepted}};
    j["timings"] = s.timings;
    auto workers = nlohmann::ordered_json::array();
    for (const auto& w : s.workers) {
        nlohmann::ordered_json jw;
        jw["name"] = w.name;
        jw["jobs_completed"] = w.jobs_completed;
        jw["busy_s"] = w.busy_s;
        workers.push_back(jw);
    }
    j["workers"] = workers;
    j["failed_jobs"] = s.failed_jobs;
    auto accepted = nlohmann::ordered_json::array();
    for (const auto& e : s.events)
        if (e.accepted) accepted.push_back(pipeline::event_to_json(e));
    j["accepted_events"] = accepted;
    j["n_event_records"] = s.events.size();
    j["meta"] = {{"created", s.created}};
    return j;
}

inline std::string report_text(const RunState& s) { return build_report(s).dump(2) + "\n"; }

// Plain-text plot data for one accepted event: observations and the fitted
// model sampled at the same epochs.
inline std::string event_plot_text(const trigger2::EventRecord& e,
                                   const lightcurves::LightCurve& curve) {
    std::string out;
    char line[256];
    std::snprintf(line, sizeof line, "# event i=%d j=%d model=%s\n", e.candidate.i, e.candidate.j,
                  trigger2::to_string(e.model));
    out += line;
    out += "# t flux sigma model valid\n";
    for (const auto& s : curve.samples) {
        double model = e.primary.f_base;
        if (e.model != trigger2::EventModel::Constant) {
            model = trigger2::pspl_flux(s.t, e.primary);
            if (e.has_secondary) {
                trigger2::PsplParams sec{0.0, e.f_s2, e.t02, e.tE2, e.u02};
                model += e.f_s2 * (trigger2::pspl_amplification(trigger2::pspl_u(s.t, sec)) - 1.0);
            }
        }
        std::snprintf(line, sizeof line, "%.17g %.17g %.17g %.17g %d\n", s.t, s.flux, s.sigma,
                      model, s.valid ? 1 : 0);
        out += line;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Alerts

struct AlertPolicy {
    double short_te = 3.0;        // events faster than this are "short"
    int max_attempts = 3;         // first try plus two retries
    double webhook_timeout_s = 5.0;
};

struct DeliveryRecord {
    std::string sink;    // "stdout" | "file" | "webhook"
    std::string target;
    std::string kind;    // "event" | "failure"
    bool ok = false;
    int attempts = 0;
    std::string detail;
};

inline bool is_short_event(const trigger2::EventRecord& e, double short_te) {
    if (e.model == trigger2::EventModel::Constant) return false;
    if (e.primary.tE < short_te) return true;
    return e.has_secondary && e.tE2 < short_te;
}

class AlertDispatcher {
public:
    AlertDispatcher(std::vector<AlertSinkConfig> sinks, AlertPolicy policy,
                    std::ostream* stdout_stream = nullptr)
        : sinks_(std::move(sinks)), policy_(policy),
          out_(stdout_stream ? stdout_stream : &std::cout) {}

    // One alert per configured sink for an accepted event.
    void alert_event(const trigger2::EventRecord& e) {
        nlohmann::ordered_json msg;
        msg["type"] = "event";
        msg["short_event"] = is_short_event(e, policy_.short_te);
        msg["record"] = pipeline::event_to_json(e);
        dispatch("event", msg.dump());
    }

    // System-failure notice (dead workers, failed jobs).
    void alert_failure(const std::string& what) {
        nlohmann::ordered_json msg;
        msg["type"] = "failure";
        msg["what"] = what;
        dispatch("failure", msg.dump());
    }

    const std::vector<DeliveryRecord>& delivery_log() const { return log_; }

private:
    void dispatch(const std::string& kind, const std::string& body) {
        for (const auto& sink : sinks_) {
            DeliveryRecord rec;
            rec.kind = kind;
            rec.target = sink.target;
            switch (sink.kind) {
                case AlertSinkConfig::Kind::Stdout: {
                    rec.sink = "stdout";
                    (*out_) << "ALERT " << body << "\n";
                    out_->flush();
                    rec.ok = true;
                    rec.attempts = 1;
                    break;
                }
                case AlertSinkConfig::Kind::File: {
                    rec.sink = "file";
                    rec.attempts = 1;
                    std::ofstream f(sink.target, std::ios::app);
                    if (f) {
                        f << body << "\n";
                        rec.ok = static_cast<bool>(f);
                    }
                    if (!rec.ok) rec.detail = "cannot write " + sink.target;
                    break;
                }
                case AlertSinkConfig::Kind::Webhook: {
                    rec.sink = "webhook";
                    for (rec.attempts = 1; rec.attempts <= policy_.max_attempts; ++rec.attempts) {
                        if (post_webhook(sink.target, body, rec.detail)) {
                            rec.ok = true;
                            break;
                        }
                    }
                    if (!rec.ok) rec.attempts = policy_.max_attempts;
                    break;
                }
            }
            log_.push_back(rec);
        }
    }

    bool post_webhook(const std::string& url, const std::string& body, std::string& detail) {
        // Split http://host:port/path into base and path.
        const auto scheme_end = url.find("://");
        if (scheme_end == std::string::npos) {
            detail = "bad webhook URL";
            return false;
        }
        const auto path_start = url.find('/', scheme_end + 3);
        const std::string base = path_start == std::string::npos ? url : url.substr(0, path_start);
        const std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);
        httplib::Client client(base);
        client.set_connection_timeout(std::chrono::duration<double>(policy_.webhook_timeout_s));
        client.set_read_timeout(std::chrono::duration<double>(policy_.webhook_timeout_s));
        const auto res = client.Post(path, body, "application/json");
        if (!res) {
            detail = "no response";
            return false;
        }
        if (res->status < 200 || res->status >= 300) {
            detail = "http status " + std::to_string(res->status);
            return false;
        }
        return true;
    }

    std::vector<AlertSinkConfig> sinks_;
    AlertPolicy policy_;
    std::ostream* out_;
    std::vector<DeliveryRecord> log_;
};

// ---------------------------------------------------------------------------
// Event catalog
//
// Append-only file of length-prefixed records: u32 payload length, u32
// FNV-1a checksum, then the binary event record. A torn tail (crash during
// write) is detected by the length/checksum scan and truncated away.

class Catalog {
public:
    explicit Catalog(std::string path) : path_(std::move(path)) {}

    const std::string& path() const { return path_; }

    void append(const trigger2::EventRecord& e) {
        ByteWriter payload;
        wire::put_event(payload, e);
        ByteWriter rec;
        rec.u32(static_cast<std::uint32_t>(payload.size()));
        rec.u32(fnv1a32(payload.data().data(), payload.size()));
        rec.raw(payload.data().data(), payload.size());

        std::ofstream out(path_, std::ios::binary | std::ios::app);
        if (!out) throw pipeline_error("catalog: cannot open " + path_);
        out.write(rec.data().data(), static_cast<std::streamsize>(rec.size()));
        out.flush();
        if (!out) throw pipeline_error("catalog: append failed for " + path_);
    }

    struct Filter {
        std::optional<double> xmin, xmax, ymin, ymax;  // position box (j = x, i = y)
        std::optional<double> tmin, tmax;              // peak-time span
        std::optional<trigger2::EventModel> model;
        std::optional<bool> accepted;

        bool matches(const trigger2::EventRecord& e) const {
            const double x = e.candidate.j, y = e.candidate.i, t = e.candidate.t_peak;
            if (xmin && x < *xmin) return false;
            if (xmax && x > *xmax) return false;
            if (ymin && y < *ymin) return false;
            if (ymax && y > *ymax) return false;
            if (tmin && t < *tmin) return false;
            if (tmax && t > *tmax) return false;
            if (model && e.model != *model) return false;
            if (accepted && e.accepted != *accepted) return false;
            return true;
        }
    };

    struct ScanResult {
        std::vector<trigger2::EventRecord> records;
        bool truncated_tail = false;   // a torn/corrupt tail was ignored
        std::size_t valid_bytes = 0;
    };

    ScanResult scan() const {
        ScanResult out;
        std::ifstream in(path_, std::ios::binary);
        if (!in) return out;  // absent catalog reads as empty
        std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        std::size_t pos = 0;
        while (pos + 8 <= bytes.size()) {
            ByteReader head(bytes.data() + pos, 8);
            const std::uint32_t len = head.u32();
            const std::uint32_t sum = head.u32();
            if (pos + 8 + len > bytes.size()) break;  // torn record
            const char* payload = bytes.data() + pos + 8;
            if (fnv1a32(payload, len) != sum) break;  // corrupt record
            try {
                ByteReader r(payload, len);
                out.records.push_back(wire::get_event(r));
                if (!r.done()) break;
            } catch (const std::exception&) {
                break;
            }
            pos += 8 + len;
        }
        out.valid_bytes = pos;
        out.truncated_tail = pos != bytes.size();
        return out;
    }

    // Truncates a torn tail in place; returns the number of valid records.
    std::size_t recover() const {
        const auto res = scan();
        if (res.truncated_tail) {
            std::ifstream in(path_, std::ios::binary);
            std::string bytes((std::istreambuf_iterator<char>(in)),
                              std::istreambuf_iterator<char>());
            in.close();
            bytes.resize(res.valid_bytes);
            std::ofstream outf(path_, std::ios::binary | std::ios::trunc);
            outf.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        }
        return res.records.size();
    }

    std::vector<trigger2::EventRecord> query(const Filter& f) const {
        std::vector<trigger2::EventRecord> out;
        for (const auto& e : scan().records)
            if (f.matches(e)) out.push_back(e);
        return out;
    }

private:
    std::string path_;
};

}  // namespace pixellens::dispatcher
