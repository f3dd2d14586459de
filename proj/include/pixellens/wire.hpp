#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pixellens/bytes.hpp"
#include "pixellens/frame.hpp"
#include "pixellens/pipeline.hpp"
#include "pixellens/trigger1.hpp"
#include "pixellens/trigger2.hpp"

// Coordinator/worker wire protocol. A connection starts with the magic bytes
// "PXLN" and a version byte 0x01 in each direction, then carries frames of
// [u32 big-endian payload length][1-byte type][payload]. Integers are
// big-endian, reals IEEE-754 64-bit big-endian, strings length-prefixed
// UTF-8. Payloads are capped at 256 MiB.

namespace pixellens::wire {

inline constexpr char kMagic[4] = {'P', 'X', 'L', 'N'};
inline constexpr std::uint8_t kProtocolVersion = 0x01;
inline constexpr std::uint32_t kMaxPayload = 256u * 1024 * 1024;

enum class MsgType : std::uint8_t {
    Hello = 0x01,
    Job = 0x02,
    Result = 0x03,
    Heartbeat = 0x04,
    Error = 0x05,
    Shutdown = 0x06,
};

class protocol_error : public std::runtime_error {
public:
    explicit protocol_error(const std::string& what) : std::runtime_error(what) {}
};

// One framed message, ready for the transport.
inline std::string frame_message(MsgType type, const std::string& payload) {
    if (payload.size() > kMaxPayload)
        throw protocol_error("payload of " + std::to_string(payload.size()) +
                             " bytes exceeds the 256 MiB cap");
    ByteWriter w;
    w.u32(static_cast<std::uint32_t>(payload.size()));
    w.u8(static_cast<std::uint8_t>(type));
    w.raw(payload.data(), payload.size());
    return w.take();
}

inline std::string preamble() {
    std::string p(kMagic, 4);
    p.push_back(static_cast<char>(kProtocolVersion));
    return p;
}

inline void check_preamble(const char* bytes) {
    if (std::memcmp(bytes, kMagic, 4) != 0)
        throw protocol_error("bad magic bytes on connection");
    if (static_cast<std::uint8_t>(bytes[4]) != kProtocolVersion)
        throw protocol_error("unsupported protocol version " +
                             std::to_string(static_cast<unsigned>(bytes[4])));
}

// ---------------------------------------------------------------------------
// Message bodies

struct HelloMsg {
    std::string worker_name;
    std::uint32_t protocol_version = kProtocolVersion;
};

struct HeartbeatMsg {
    std::uint64_t job_id = 0;
};

enum class ErrorCode : std::uint32_t {
    MalformedJob = 1,
    MissingFrame = 2,
    ConfigMismatch = 3,
    Internal = 4,
};

struct ErrorMsg {
    std::uint64_t job_id = 0;
    std::uint32_t code = 0;
    std::string text;
};

struct FrameRef {
    enum class Kind : std::uint8_t { Path = 0, Inline = 1 };
    Kind kind = Kind::Inline;
    std::string path;   // Kind::Path
    Frame frame;        // Kind::Inline (tile cutout)
};

struct JobMessage {
    std::uint64_t job_id = 0;
    TileSpec tile;
    std::uint64_t config_hash = 0;
    double heartbeat_s = 5.0;
    pipeline::AnalysisParams params;
    std::vector<FrameRef> frames;  // one per epoch, epoch order
    // Inline cutout placement on the full grid (tile outer rect origin).
    int origin_x = 0;
    int origin_y = 0;
};

struct ResultMessage {
    std::uint64_t job_id = 0;
    std::string worker_id;
    long curves_built = 0;
    std::map<std::string, double> timings;  // per-stage seconds
    std::vector<trigger1::PeakCandidate> candidates;
    std::vector<trigger2::EventRecord> events;
};

// ---------------------------------------------------------------------------
// Codecs

inline void put_hello(ByteWriter& w, const HelloMsg& m) {
    w.str(m.worker_name);
    w.u32(m.protocol_version);
}

inline HelloMsg get_hello(ByteReader& r) {
    HelloMsg m;
    m.worker_name = r.str();
    m.protocol_version = r.u32();
    return m;
}

inline void put_heartbeat(ByteWriter& w, const HeartbeatMsg& m) { w.u64(m.job_id); }

inline HeartbeatMsg get_heartbeat(ByteReader& r) { return HeartbeatMsg{r.u64()}; }

inline void put_error(ByteWriter& w, const ErrorMsg& m) {
    w.u64(m.job_id);
    w.u32(m.code);
    w.str(m.text);
}

inline ErrorMsg get_error(ByteReader& r) {
    ErrorMsg m;
    m.job_id = r.u64();
    m.code = r.u32();
    m.text = r.str();
    return m;
}

inline void put_tile(ByteWriter& w, const TileSpec& t) {
    w.i32(t.x0);
    w.i32(t.y0);
    w.i32(t.core_w);
    w.i32(t.core_h);
    w.i32(t.halo);
    w.i32(t.frame_w);
    w.i32(t.frame_h);
}

inline TileSpec get_tile(ByteReader& r) {
    TileSpec t;
    t.x0 = r.i32();
    t.y0 = r.i32();
    t.core_w = r.i32();
    t.core_h = r.i32();
    t.halo = r.i32();
    t.frame_w = r.i32();
    t.frame_h = r.i32();
    return t;
}

inline void put_frame(ByteWriter& w, const Frame& f) {
    w.i32(f.width);
    w.i32(f.height);
    w.i32(f.epoch_id);
    w.f64(f.exposure);
    w.u8(f.seeing ? 1 : 0);
    if (f.seeing) w.f64(*f.seeing);
    std::string pix(f.pixels.size() * 4, '\0');
    for (std::size_t i = 0; i < f.pixels.size(); ++i)
        put_f32_be(f.pixels[i], reinterpret_cast<unsigned char*>(pix.data()) + 4 * i);
    w.u32(static_cast<std::uint32_t>(f.pixels.size()));
    w.raw(pix.data(), pix.size());
    w.u8(f.has_mask() ? 1 : 0);
    if (f.has_mask()) w.raw(f.mask.data(), f.mask.size());
}

inline Frame get_frame(ByteReader& r) {
    Frame f;
    f.width = r.i32();
    f.height = r.i32();
    f.epoch_id = r.i32();
    f.exposure = r.f64();
    if (r.u8()) f.seeing = r.f64();
    if (f.width < 1 || f.height < 1) throw protocol_error("frame payload with empty dimensions");
    const std::uint32_t n = r.u32();
    if (n != static_cast<std::uint64_t>(f.width) * static_cast<std::uint64_t>(f.height))
        throw protocol_error("frame payload pixel count mismatch");
    f.pixels.resize(n);
    std::string pix(static_cast<std::size_t>(n) * 4, '\0');
    r.raw(pix.data(), pix.size());
    for (std::uint32_t i = 0; i < n; ++i)
        f.pixels[i] = get_f32_be(reinterpret_cast<const unsigned char*>(pix.data()) + 4 * i);
    if (r.u8()) {
        f.mask.resize(n);
        r.raw(f.mask.data(), n);
    }
    return f;
}

inline void put_params(ByteWriter& w, const pipeline::AnalysisParams& p) {
    w.i32(p.superpixel_m);
    w.f64(p.read_noise);
    w.f64(p.trigger_k);
    w.i32(p.trigger_nmin);
    w.f64(p.thresholds.delta_chi2_single);
    w.f64(p.thresholds.delta_chi2_double);
    w.f64(p.thresholds.chi2_dof_max);
    w.u32(static_cast<std::uint32_t>(p.epoch_times.size()));
    for (double t : p.epoch_times) w.f64(t);
    w.i32(p.star_mask.radius);
    w.u32(static_cast<std::uint32_t>(p.star_mask.stars.size()));
    for (const auto& s : p.star_mask.stars) {
        w.f64(s.x);
        w.f64(s.y);
    }
}

inline pipeline::AnalysisParams get_params(ByteReader& r) {
    pipeline::AnalysisParams p;
    p.superpixel_m = r.i32();
    p.read_noise = r.f64();
    p.trigger_k = r.f64();
    p.trigger_nmin = r.i32();
    p.thresholds.delta_chi2_single = r.f64();
    p.thresholds.delta_chi2_double = r.f64();
    p.thresholds.chi2_dof_max = r.f64();
    p.epoch_times.resize(r.u32());
    for (auto& t : p.epoch_times) t = r.f64();
    p.star_mask.radius = r.i32();
    p.star_mask.stars.resize(r.u32());
    for (auto& s : p.star_mask.stars) {
        s.x = r.f64();
        s.y = r.f64();
    }
    return p;
}

inline std::string encode_job(const JobMessage& m) {
    ByteWriter w;
    w.u64(m.job_id);
    put_tile(w, m.tile);
    w.u64(m.config_hash);
    w.f64(m.heartbeat_s);
    put_params(w, m.params);
    w.i32(m.origin_x);
    w.i32(m.origin_y);
    w.u32(static_cast<std::uint32_t>(m.frames.size()));
    for (const auto& fr : m.frames) {
        w.u8(static_cast<std::uint8_t>(fr.kind));
        if (fr.kind == FrameRef::Kind::Path)
            w.str(fr.path);
        else
            put_frame(w, fr.frame);
    }
    return w.take();
}

inline JobMessage decode_job(const std::string& payload) {
    ByteReader r(payload);
    JobMessage m;
    m.job_id = r.u64();
    m.tile = get_tile(r);
    m.config_hash = r.u64();
    m.heartbeat_s = r.f64();
    m.params = get_params(r);
    m.origin_x = r.i32();
    m.origin_y = r.i32();
    m.frames.resize(r.u32());
    for (auto& fr : m.frames) {
        const auto kind = r.u8();
        if (kind > 1) throw protocol_error("unknown frame reference kind");
        fr.kind = static_cast<FrameRef::Kind>(kind);
        if (fr.kind == FrameRef::Kind::Path)
            fr.path = r.str();
        else
            fr.frame = get_frame(r);
    }
    if (!r.done()) throw protocol_error("trailing bytes after JOB payload");
    return m;
}

inline void put_candidate(ByteWriter& w, const trigger1::PeakCandidate& c) {
    w.i32(c.i);
    w.i32(c.j);
    w.f64(c.t_start);
    w.f64(c.t_peak);
    w.f64(c.t_end);
    w.f64(c.significance);
    w.i32(c.n_consecutive);
    w.i32(c.first_index);
}

inline trigger1::PeakCandidate get_candidate(ByteReader& r) {
    trigger1::PeakCandidate c;
    c.i = r.i32();
    c.j = r.i32();
    c.t_start = r.f64();
    c.t_peak = r.f64();
    c.t_end = r.f64();
    c.significance = r.f64();
    c.n_consecutive = r.i32();
    c.first_index = r.i32();
    return c;
}

inline void put_event(ByteWriter& w, const trigger2::EventRecord& e) {
    put_candidate(w, e.candidate);
    w.u8(static_cast<std::uint8_t>(e.peak_class));
    w.u8(static_cast<std::uint8_t>(e.model));
    w.f64(e.primary.f_base);
    w.f64(e.primary.f_s);
    w.f64(e.primary.t0);
    w.f64(e.primary.tE);
    w.f64(e.primary.u0);
    w.u8(e.has_secondary ? 1 : 0);
    if (e.has_secondary) {
        w.f64(e.f_s2);
        w.f64(e.t02);
        w.f64(e.tE2);
        w.f64(e.u02);
    }
    w.f64(e.chi2_constant);
    w.f64(e.chi2_pspl);
    w.f64(e.chi2_double);
    w.f64(e.chi2_best);
    w.i32(e.dof);
    w.u8(e.accepted ? 1 : 0);
    w.str(e.reason);
}

inline trigger2::EventRecord get_event(ByteReader& r) {
    trigger2::EventRecord e;
    e.candidate = get_candidate(r);
    e.peak_class = static_cast<trigger1::PeakClass>(r.u8());
    e.model = static_cast<trigger2::EventModel>(r.u8());
    e.primary.f_base = r.f64();
    e.primary.f_s = r.f64();
    e.primary.t0 = r.f64();
    e.primary.tE = r.f64();
    e.primary.u0 = r.f64();
    if (r.u8()) {
        e.has_secondary = true;
        e.f_s2 = r.f64();
        e.t02 = r.f64();
        e.tE2 = r.f64();
        e.u02 = r.f64();
    }
    e.chi2_constant = r.f64();
    e.chi2_pspl = r.f64();
    e.chi2_double = r.f64();
    e.chi2_best = r.f64();
    e.dof = r.i32();
    e.accepted = r.u8() != 0;
    e.reason = r.str();
    return e;
}

inline std::string encode_result(const ResultMessage& m) {
    ByteWriter w;
    w.u64(m.job_id);
    w.str(m.worker_id);
    w.i64(m.curves_built);
    w.u32(static_cast<std::uint32_t>(m.timings.size()));
    for (const auto& [k, v] : m.timings) {
        w.str(k);
        w.f64(v);
    }
    w.u32(static_cast<std::uint32_t>(m.candidates.size()));
    for (const auto& c : m.candidates) put_candidate(w, c);
    w.u32(static_cast<std::uint32_t>(m.events.size()));
    for (const auto& e : m.events) put_event(w, e);
    return w.take();
}

inline ResultMessage decode_result(const std::string& payload) {
    ByteReader r(payload);
    ResultMessage m;
    m.job_id = r.u64();
    m.worker_id = r.str();
    m.curves_built = static_cast<long>(r.i64());
    const std::uint32_t nt = r.u32();
    for (std::uint32_t i = 0; i < nt; ++i) {
        std::string k = r.str();
        m.timings[k] = r.f64();
    }
    m.candidates.resize(r.u32());
    for (auto& c : m.candidates) c = get_candidate(r);
    m.events.resize(r.u32());
    for (auto& e : m.events) e = get_event(r);
    if (!r.done()) throw protocol_error("trailing bytes after RESULT payload");
    return m;
}

inline std::string encode_hello(const HelloMsg& m) {
    ByteWriter w;
    put_hello(w, m);
    return w.take();
}

inline HelloMsg decode_hello(const std::string& payload) {
    ByteReader r(payload);
    auto m = get_hello(r);
    if (!r.done()) throw protocol_error("trailing bytes after HELLO payload");
    return m;
}

inline std::string encode_heartbeat(const HeartbeatMsg& m) {
    ByteWriter w;
    put_heartbeat(w, m);
    return w.take();
}

inline HeartbeatMsg decode_heartbeat(const std::string& payload) {
    ByteReader r(payload);
    auto m = get_heartbeat(r);
    if (!r.done()) throw protocol_error("trailing bytes after HEARTBEAT payload");
    return m;
}

inline std::string encode_error(const ErrorMsg& m) {
    ByteWriter w;
    put_error(w, m);
    return w.take();
}

inline ErrorMsg decode_error(const std::string& payload) {
    ByteReader r(payload);
    auto m = get_error(r);
    if (!r.done()) throw protocol_error("trailing bytes after ERROR payload");
    return m;
}

}  // namespace pixellens::wire
