#pragma once

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "pixellens/config.hpp"
#include "pixellens/lightcurves.hpp"
#include "pixellens/pipeline.hpp"
#include "pixellens/wire.hpp"

// Distributed execution: a coordinator partitions the homogenized grid into
// tiles, ships curve-building and trigger work to up to 256 workers over the
// wire protocol, survives worker failure by re-queueing, and merges results
// identical to the serial run.
//
// Concurrency model: all worker-state transitions and the job queue are
// owned by the coordinator main loop. Reader threads only decode frames and
// push events; only the main loop writes to worker sockets (the worker side
// mirrors this with a write mutex shared by its heartbeat pump).

namespace pixellens::cluster {

class cluster_error : public std::runtime_error {
public:
    explicit cluster_error(const std::string& what) : std::runtime_error(what) {}
};

// ---------------------------------------------------------------------------
// Addressing and sockets

struct Address {
    std::string host = "127.0.0.1";
    std::uint16_t port = 0;
};

inline Address parse_address(const std::string& s) {
    const auto colon = s.rfind(':');
    if (colon == std::string::npos)
        throw cluster_error("address '" + s + "' must be host:port");
    Address a;
    a.host = s.substr(0, colon);
    if (a.host == "localhost") a.host = "127.0.0.1";
    const std::string port = s.substr(colon + 1);
    try {
        const int p = std::stoi(port);
        if (p < 0 || p > 65535) throw std::out_of_range("port");
        a.port = static_cast<std::uint16_t>(p);
    } catch (const std::exception&) {
        throw cluster_error("bad port in address '" + s + "'");
    }
    return a;
}

inline sockaddr_in to_sockaddr(const Address& a) {
    sockaddr_in sa{};
    sa.sin_family = AF_INET;
    sa.sin_port = htons(a.port);
    if (inet_pton(AF_INET, a.host.c_str(), &sa.sin_addr) != 1)
        throw cluster_error("cannot parse host '" + a.host + "' (IPv4 dotted quad expected)");
    return sa;
}

class Socket {
public:
    Socket() = default;
    explicit Socket(int fd) : fd_(fd) {}
    Socket(Socket&& other) noexcept : fd_(other.fd_) { other.fd_ = -1; }
    Socket& operator=(Socket&& other) noexcept {
        if (this != &other) {
            close_fd();
            fd_ = other.fd_;
            other.fd_ = -1;
        }
        return *this;
    }
    Socket(const Socket&) = delete;
    Socket& operator=(const Socket&) = delete;
    ~Socket() { close_fd(); }

    bool valid() const { return fd_ >= 0; }
    int fd() const { return fd_; }

    // Wakes any thread blocked on this socket; the fd stays allocated until
    // destruction so concurrent readers never see a reused descriptor.
    void shutdown_both() {
        if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
    }

    void send_all(const void* data, std::size_t n) {
        const char* p = static_cast<const char*>(data);
        while (n > 0) {
            const ssize_t sent = ::send(fd_, p, n, MSG_NOSIGNAL);
            if (sent <= 0) throw cluster_error("socket send failed (peer gone?)");
            p += sent;
            n -= static_cast<std::size_t>(sent);
        }
    }

    // False on clean EOF (or reset) before the first byte; throws on
    // mid-object EOF.
    bool recv_exact(void* data, std::size_t n) {
        char* p = static_cast<char*>(data);
        std::size_t got = 0;
        while (got < n) {
            const ssize_t r = ::recv(fd_, p + got, n - got, 0);
            if (r == 0) {
                if (got == 0) return false;
                throw cluster_error("connection closed mid-message");
            }
            if (r < 0) {
                if (got == 0) return false;
                throw cluster_error("socket recv failed");
            }
            got += static_cast<std::size_t>(r);
        }
        return true;
    }

private:
    void close_fd() {
        if (fd_ >= 0) {
            ::close(fd_);
            fd_ = -1;
        }
    }
    int fd_ = -1;
};

inline Socket connect_to(const Address& a) {
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw cluster_error("cannot create socket");
    Socket s(fd);
    const auto sa = to_sockaddr(a);
    if (::connect(fd, reinterpret_cast<const sockaddr*>(&sa), sizeof sa) != 0)
        throw cluster_error("cannot connect to " + a.host + ":" + std::to_string(a.port));
    const int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    return s;
}

class Listener {
public:
    explicit Listener(const Address& a) {
        const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
        if (fd < 0) throw cluster_error("cannot create listen socket");
        sock_ = Socket(fd);
        const int one = 1;
        ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
        auto sa = to_sockaddr(a);
        if (::bind(fd, reinterpret_cast<const sockaddr*>(&sa), sizeof sa) != 0)
            throw cluster_error("cannot bind " + a.host + ":" + std::to_string(a.port));
        if (::listen(fd, 64) != 0) throw cluster_error("cannot listen");
        sockaddr_in bound{};
        socklen_t len = sizeof bound;
        ::getsockname(fd, reinterpret_cast<sockaddr*>(&bound), &len);
        port_ = ntohs(bound.sin_port);
    }

    std::uint16_t port() const { return port_; }

    std::optional<Socket> accept_one(double timeout_s) {
        pollfd p{sock_.fd(), POLLIN, 0};
        const int r = ::poll(&p, 1, static_cast<int>(timeout_s * 1000.0));
        if (r <= 0 || !(p.revents & POLLIN)) return std::nullopt;
        const int fd = ::accept(sock_.fd(), nullptr, nullptr);
        if (fd < 0) return std::nullopt;
        const int one = 1;
        ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
        return Socket(fd);
    }

    void shutdown() { sock_.shutdown_both(); }

private:
    Socket sock_;
    std::uint16_t port_ = 0;
};

// ---------------------------------------------------------------------------
// Framed message transport

inline void send_preamble(Socket& s) {
    const auto p = wire::preamble();
    s.send_all(p.data(), p.size());
}

inline bool read_preamble(Socket& s) {
    char buf[5];
    if (!s.recv_exact(buf, 5)) return false;
    wire::check_preamble(buf);
    return true;
}

inline void send_message(Socket& s, wire::MsgType type, const std::string& payload) {
    const auto framed = wire::frame_message(type, payload);
    s.send_all(framed.data(), framed.size());
}

// False on clean EOF.
inline bool read_message(Socket& s, wire::MsgType& type, std::string& payload) {
    unsigned char head[5];
    if (!s.recv_exact(head, 5)) return false;
    std::uint32_t len;
    std::memcpy(&len, head, 4);
    len = be32_to_host(len);
    if (len > wire::kMaxPayload)
        throw wire::protocol_error("incoming payload of " + std::to_string(len) +
                                   " bytes exceeds the 256 MiB cap");
    type = static_cast<wire::MsgType>(head[4]);
    payload.resize(len);
    if (len > 0 && !s.recv_exact(payload.data(), len))
        throw wire::protocol_error("connection closed mid-message");
    return true;
}

// ---------------------------------------------------------------------------
// Job planning and result merging

struct ClusterPolicy {
    double heartbeat_s = 5.0;
    int heartbeat_misses = 3;
    int job_retries = 2;       // re-queues tolerated per job on worker death
    double worker_wait_s = 30.0;

    static ClusterPolicy from(const CampaignConfig& cfg) {
        ClusterPolicy p;
        p.heartbeat_s = cfg.heartbeat_s;
        p.heartbeat_misses = cfg.heartbeat_misses;
        p.job_retries = cfg.job_retries;
        return p;
    }
};

// One job per tile, halo sized to the superpixel half-width, row-major
// deterministic order. Frames are attached at dispatch time.
inline std::vector<wire::JobMessage> plan_jobs(const CampaignConfig& cfg,
                                               const pipeline::AnalysisParams& params,
                                               int n_workers) {
    const auto tiles = tile_partition(cfg.width, cfg.height, n_workers, params.superpixel_m);
    std::vector<wire::JobMessage> jobs;
    jobs.reserve(tiles.size());
    const std::uint64_t hash = campaign_hash(cfg);
    for (std::size_t k = 0; k < tiles.size(); ++k) {
        wire::JobMessage j;
        j.job_id = static_cast<std::uint64_t>(k);
        j.tile = tiles[k];
        j.config_hash = hash;
        j.heartbeat_s = cfg.heartbeat_s;
        j.params = params;
        jobs.push_back(std::move(j));
    }
    return jobs;
}

inline void attach_inline_frames(wire::JobMessage& job, const lightcurves::EpochSeries& series) {
    const auto cut = lightcurves::cut_series(series, job.tile);
    job.origin_x = cut.origin_x;
    job.origin_y = cut.origin_y;
    job.frames.clear();
    for (const auto& f : cut.epochs) {
        wire::FrameRef ref;
        ref.kind = wire::FrameRef::Kind::Inline;
        ref.frame = f;
        job.frames.push_back(std::move(ref));
    }
}

inline void attach_path_frames(wire::JobMessage& job, const std::vector<std::string>& paths) {
    job.frames.clear();
    for (const auto& p : paths) {
        wire::FrameRef ref;
        ref.kind = wire::FrameRef::Kind::Path;
        ref.path = p;
        job.frames.push_back(std::move(ref));
    }
}

struct MergedResults {
    std::vector<trigger2::EventRecord> events;
    std::vector<trigger1::PeakCandidate> candidates;
    long curves_built = 0;
};

// Concatenates per-job records and sorts by (i, j, t_peak). Cores are
// disjoint so no deduplication is needed; a record outside its job's core is
// a protocol violation and a hard error.
inline MergedResults merge_results(const std::vector<wire::ResultMessage>& results,
                                   const std::vector<wire::JobMessage>& jobs) {
    std::map<std::uint64_t, const wire::JobMessage*> by_id;
    for (const auto& j : jobs) by_id[j.job_id] = &j;
    std::map<std::uint64_t, const wire::ResultMessage*> seen;
    for (const auto& r : results) {
        if (!by_id.count(r.job_id))
            throw cluster_error("result for unknown job " + std::to_string(r.job_id));
        if (!seen.emplace(r.job_id, &r).second)
            throw cluster_error("duplicate result for job " + std::to_string(r.job_id));
    }
    for (const auto& j : jobs)
        if (!seen.count(j.job_id))
            throw cluster_error("missing job result for job " + std::to_string(j.job_id));

    MergedResults out;
    for (const auto& r : results) {
        const TileSpec& tile = by_id[r.job_id]->tile;
        for (const auto& e : r.events)
            if (!tile.core_contains(e.candidate.j, e.candidate.i))
                throw cluster_error("event record outside its tile core (job " +
                                    std::to_string(r.job_id) + ")");
        for (const auto& c : r.candidates)
            if (!tile.core_contains(c.j, c.i))
                throw cluster_error("candidate record outside its tile core (job " +
                                    std::to_string(r.job_id) + ")");
        out.curves_built += r.curves_built;
        out.events.insert(out.events.end(), r.events.begin(), r.events.end());
        out.candidates.insert(out.candidates.end(), r.candidates.begin(), r.candidates.end());
    }
    pipeline::sort_events(out.events);
    pipeline::sort_candidates(out.candidates);
    return out;
}

// ---------------------------------------------------------------------------
// Coordinator

struct WorkerStats {
    std::string name;
    int jobs_completed = 0;
    double busy_s = 0.0;
};

struct DistributedOutcome {
    bool complete = false;
    MergedResults merged;
    std::vector<std::uint64_t> failed_jobs;
    std::vector<WorkerStats> workers;
    std::vector<wire::ResultMessage> raw_results;
};

class Coordinator {
public:
    explicit Coordinator(const Address& listen) : listener_(listen) {}

    std::uint16_t port() const { return listener_.port(); }

    // Runs the dispatch loop to completion. `series` provides tile cutouts
    // for inline shipping; pass frame paths instead for shared-filesystem
    // deployments.
    DistributedOutcome run(std::vector<wire::JobMessage> jobs,
                           const lightcurves::EpochSeries* series,
                           const std::vector<std::string>& frame_paths,
                           const ClusterPolicy& policy) {
        if (jobs.empty()) throw cluster_error("coordinator: no jobs planned");
        using clock = std::chrono::steady_clock;

        enum class JobState { Pending, Assigned, Completed, Failed };
        struct JobSlot {
            JobState state = JobState::Pending;
            int requeues = 0;
            int errors = 0;
        };
        std::vector<JobSlot> slots(jobs.size());
        std::deque<std::size_t> pending;
        for (std::size_t k = 0; k < jobs.size(); ++k) pending.push_back(k);

        std::vector<wire::ResultMessage> results;

        const auto requeue = [&](std::size_t job_index, bool deterministic_failure) {
            auto& slot = slots[job_index];
            if (slot.state != JobState::Assigned) return;
            if (deterministic_failure) {
                // Worker-reported errors burn out after 2 attempts.
                if (++slot.errors >= 2) {
                    slot.state = JobState::Failed;
                    return;
                }
            } else {
                if (++slot.requeues > policy.job_retries) {
                    slot.state = JobState::Failed;
                    return;
                }
            }
            slot.state = JobState::Pending;
            pending.push_back(job_index);
        };

        const auto drop_worker = [&](Worker& w) {
            if (w.state == WorkerState::Assigned) requeue(w.job, false);
            if (w.state != WorkerState::Dead) {
                w.state = WorkerState::Dead;
                w.sock.shutdown_both();
            }
        };

        accepting_ = true;
        std::thread acceptor([this] { accept_loop(); });
        auto last_alive = clock::now();
        DistributedOutcome outcome;

        while (true) {
            std::vector<Event> batch;
            {
                std::unique_lock lock(mutex_);
                cv_.wait_for(lock, std::chrono::milliseconds(50), [&] { return !events_.empty(); });
                batch.assign(std::make_move_iterator(events_.begin()),
                             std::make_move_iterator(events_.end()));
                events_.clear();
            }
            const auto now = clock::now();

            for (auto& ev : batch) {
                Worker& w = *ev.worker;
                switch (ev.kind) {
                    case Event::Kind::Hello: {
                        wire::HelloMsg hello;
                        try {
                            hello = wire::decode_hello(ev.payload);
                        } catch (const std::exception&) {
                            drop_worker(w);
                            break;
                        }
                        if (hello.protocol_version != wire::kProtocolVersion) {
                            send_quiet(w, wire::MsgType::Error,
                                       wire::encode_error({0,
                                                           static_cast<std::uint32_t>(
                                                               wire::ErrorCode::Internal),
                                                           "protocol version mismatch"}));
                            drop_worker(w);
                            break;
                        }
                        w.name = hello.worker_name;
                        if (w.state == WorkerState::New) w.state = WorkerState::Idle;
                        w.last_heard = now;
                        break;
                    }
                    case Event::Kind::Heartbeat: {
                        wire::HeartbeatMsg hb{};
                        try {
                            hb = wire::decode_heartbeat(ev.payload);
                        } catch (const std::exception&) {
                            drop_worker(w);
                            break;
                        }
                        if (w.state == WorkerState::Assigned && hb.job_id == w.job)
                            w.last_heard = now;
                        break;
                    }
                    case Event::Kind::Result: {
                        wire::ResultMessage msg;
                        try {
                            msg = wire::decode_result(ev.payload);
                        } catch (const std::exception&) {
                            drop_worker(w);
                            break;
                        }
                        w.last_heard = now;
                        if (msg.job_id < slots.size() &&
                            slots[msg.job_id].state != JobState::Completed &&
                            slots[msg.job_id].state != JobState::Failed) {
                            slots[msg.job_id].state = JobState::Completed;
                            w.jobs_completed += 1;
                            const auto total = msg.timings.find("total");
                            if (total != msg.timings.end()) w.busy_s += total->second;
                            results.push_back(std::move(msg));
                            if (w.state == WorkerState::Assigned &&
                                results.back().job_id == w.job)
                                w.state = WorkerState::Idle;
                        } else if (w.state == WorkerState::Assigned && msg.job_id == w.job) {
                            // Duplicate (someone else finished it first):
                            // discard, worker is free again.
                            w.state = WorkerState::Idle;
                        }
                        break;
                    }
                    case Event::Kind::Error: {
                        wire::ErrorMsg msg;
                        try {
                            msg = wire::decode_error(ev.payload);
                        } catch (const std::exception&) {
                            drop_worker(w);
                            break;
                        }
                        w.last_heard = now;
                        if (w.state == WorkerState::Assigned && msg.job_id == w.job) {
                            requeue(w.job, true);
                            w.state = WorkerState::Idle;
                        }
                        break;
                    }
                    case Event::Kind::Gone:
                        drop_worker(w);
                        break;
                }
            }

            // Heartbeat deadlines: a worker that misses `misses` intervals
            // is presumed dead and its job goes back in the queue.
            const auto deadline =
                std::chrono::duration<double>(policy.heartbeat_s * policy.heartbeat_misses);
            const auto snapshot = worker_snapshot();
            for (Worker* wp : snapshot) {
                if (wp->state == WorkerState::Assigned && now - wp->last_heard > deadline)
                    drop_worker(*wp);
            }

            for (Worker* wp : snapshot) {
                if (pending.empty()) break;
                if (wp->state != WorkerState::Idle) continue;
                const std::size_t job_index = pending.front();
                auto& job = jobs[job_index];
                if (job.frames.empty()) {
                    if (series != nullptr)
                        attach_inline_frames(job, *series);
                    else
                        attach_path_frames(job, frame_paths);
                }
                try {
                    send_message(wp->sock, wire::MsgType::Job, wire::encode_job(job));
                } catch (const std::exception&) {
                    drop_worker(*wp);
                    continue;
                }
                pending.pop_front();
                slots[job_index].state = JobState::Assigned;
                wp->state = WorkerState::Assigned;
                wp->job = job_index;
                wp->last_heard = now;
            }

            bool any_alive = false;
            for (Worker* wp : snapshot)
                if (wp->state != WorkerState::Dead) any_alive = true;
            if (any_alive) last_alive = now;

            std::size_t done = 0, failed = 0, assigned = 0;
            for (const auto& s : slots) {
                done += s.state == JobState::Completed;
                failed += s.state == JobState::Failed;
                assigned += s.state == JobState::Assigned;
            }
            if (done + failed == slots.size() && assigned == 0) break;
            if (!any_alive &&
                now - last_alive > std::chrono::duration<double>(policy.worker_wait_s))
                break;  // nobody left to run the remaining jobs
        }

        // Orderly shutdown: tell live workers, let them close, then force
        // any stragglers.
        accepting_ = false;
        listener_.shutdown();
        acceptor.join();
        {
            const auto snapshot = worker_snapshot();
            for (Worker* wp : snapshot)
                if (wp->state != WorkerState::Dead)
                    send_quiet(*wp, wire::MsgType::Shutdown, "");
            const auto grace_end = clock::now() + std::chrono::seconds(3);
            while (clock::now() < grace_end) {
                bool all_done = true;
                for (Worker* wp : snapshot) all_done = all_done && wp->reader_done.load();
                if (all_done) break;
                std::this_thread::sleep_for(std::chrono::milliseconds(10));
            }
            for (Worker* wp : snapshot) wp->sock.shutdown_both();
        }
        for (auto& wp : workers_)
            if (wp->reader.joinable()) wp->reader.join();

        for (const auto& wp : workers_) {
            WorkerStats ws;
            ws.name = wp->name.empty() ? "(no hello)" : wp->name;
            ws.jobs_completed = wp->jobs_completed;
            ws.busy_s = wp->busy_s;
            outcome.workers.push_back(ws);
        }
        for (std::size_t k = 0; k < slots.size(); ++k)
            if (slots[k].state != JobState::Completed)
                outcome.failed_jobs.push_back(jobs[k].job_id);

        outcome.complete = outcome.failed_jobs.empty();
        outcome.raw_results = results;
        if (outcome.complete) {
            outcome.merged = merge_results(results, jobs);
        } else {
            // Partial merge for the failure report: completed jobs only.
            std::vector<wire::JobMessage> completed_jobs;
            for (const auto& j : jobs)
                for (const auto& r : results)
                    if (r.job_id == j.job_id) {
                        completed_jobs.push_back(j);
                        break;
                    }
            outcome.merged = merge_results(results, completed_jobs);
        }
        return outcome;
    }

private:
    enum class WorkerState { New, Idle, Assigned, Dead };

    struct Worker {
        Socket sock;
        std::thread reader;
        std::atomic<bool> reader_done{false};
        std::string name;
        WorkerState state = WorkerState::New;
        std::size_t job = 0;
        std::chrono::steady_clock::time_point last_heard;
        int jobs_completed = 0;
        double busy_s = 0.0;
    };

    struct Event {
        enum class Kind { Hello, Heartbeat, Result, Error, Gone };
        Kind kind;
        Worker* worker;
        std::string payload;
    };

    // workers_ is append-only (std::deque never moves existing elements), so
    // Worker pointers stay valid for the lifetime of the run.
    std::vector<Worker*> worker_snapshot() {
        std::unique_lock lock(mutex_);
        std::vector<Worker*> v;
        v.reserve(workers_.size());
        for (auto& wp : workers_) v.push_back(wp.get());
        return v;
    }

    void accept_loop() {
        while (accepting_) {
            auto sock = listener_.accept_one(0.1);
            if (!sock) continue;
            Worker* w = nullptr;
            {
                std::unique_lock lock(mutex_);
                workers_.push_back(std::make_unique<Worker>());
                w = workers_.back().get();
            }
            w->sock = std::move(*sock);
            w->last_heard = std::chrono::steady_clock::now();
            try {
                send_preamble(w->sock);
            } catch (const std::exception&) {
                w->state = WorkerState::Dead;
                w->reader_done = true;
                continue;
            }
            w->reader = std::thread([this, w] { reader_loop(*w); });
        }
    }

    void reader_loop(Worker& w) {
        try {
            if (read_preamble(w.sock)) {
                wire::MsgType type;
                std::string payload;
                while (read_message(w.sock, type, payload)) {
                    Event::Kind kind;
                    switch (type) {
                        case wire::MsgType::Hello: kind = Event::Kind::Hello; break;
                        case wire::MsgType::Heartbeat: kind = Event::Kind::Heartbeat; break;
                        case wire::MsgType::Result: kind = Event::Kind::Result; break;
                        case wire::MsgType::Error: kind = Event::Kind::Error; break;
                        default: continue;  // coordinator ignores other types
                    }
                    post({kind, &w, std::move(payload)});
                    payload.clear();
                }
            }
        } catch (const std::exception&) {
            // fall through to Gone
        }
        w.reader_done = true;
        post({Event::Kind::Gone, &w, {}});
    }

    void post(Event ev) {
        std::unique_lock lock(mutex_);
        events_.push_back(std::move(ev));
        cv_.notify_all();
    }

    void send_quiet(Worker& w, wire::MsgType type, const std::string& payload) {
        try {
            send_message(w.sock, type, payload);
        } catch (const std::exception&) {
        }
    }

    Listener listener_;
    std::atomic<bool> accepting_{false};
    std::mutex mutex_;
    std::condition_variable cv_;
    std::deque<Event> events_;
    std::deque<std::unique_ptr<Worker>> workers_;
};

// ---------------------------------------------------------------------------
// Worker

struct WorkerOptions {
    std::string name = "worker";
    double backoff_initial_s = 0.5;
    double backoff_cap_s = 30.0;
    int max_connect_failures = 10;
};

namespace detail {

// Sends HEARTBEAT{job_id} every interval/2 while computing; writes share the
// socket with the main worker thread, hence the mutex.
class HeartbeatPump {
public:
    HeartbeatPump(Socket& sock, std::mutex& write_mutex, std::uint64_t job_id, double interval_s)
        : sock_(sock), write_mutex_(write_mutex), job_id_(job_id),
          interval_s_(std::max(interval_s, 0.02)) {
        thread_ = std::thread([this] { run(); });
    }

    ~HeartbeatPump() {
        {
            std::unique_lock lock(mutex_);
            stop_ = true;
            cv_.notify_all();
        }
        thread_.join();
    }

private:
    void run() {
        std::unique_lock lock(mutex_);
        while (!stop_) {
            cv_.wait_for(lock, std::chrono::duration<double>(interval_s_ / 2.0),
                         [this] { return stop_; });
            if (stop_) return;
            lock.unlock();
            try {
                std::unique_lock wl(write_mutex_);
                send_message(sock_, wire::MsgType::Heartbeat, wire::encode_heartbeat({job_id_}));
            } catch (const std::exception&) {
                // connection is gone; the main loop will notice
            }
            lock.lock();
        }
    }

    Socket& sock_;
    std::mutex& write_mutex_;
    std::uint64_t job_id_;
    double interval_s_;
    std::mutex mutex_;
    std::condition_variable cv_;
    bool stop_ = false;
    std::thread thread_;
};

inline lightcurves::EpochSeries series_for_job(const wire::JobMessage& job) {
    lightcurves::EpochSeries series;
    series.times = job.params.epoch_times;
    if (job.frames.empty()) throw cluster_error("job carries no frames");
    if (job.frames.front().kind == wire::FrameRef::Kind::Inline) {
        series.origin_x = job.origin_x;
        series.origin_y = job.origin_y;
        series.frame_w = job.tile.frame_w;
        series.frame_h = job.tile.frame_h;
        for (const auto& ref : job.frames) series.epochs.push_back(ref.frame);
        series.validate();
        return series;
    }
    // Path mode: load full frames from the shared filesystem and cut the
    // tile locally; identical float values, identical curves.
    std::vector<Frame> full;
    for (const auto& ref : job.frames) full.push_back(read_frame(ref.path));
    lightcurves::EpochSeries full_series = lightcurves::make_series(std::move(full), series.times);
    return lightcurves::cut_series(full_series, job.tile);
}

}  // namespace detail

// Connect-and-serve loop: HELLO, receive jobs, analyze tiles, send results,
// heartbeat while computing. Reconnects with exponential backoff (capped at
// 30 s) on connection loss; returns 0 after a clean SHUTDOWN.
inline int worker_run(const Address& addr, const WorkerOptions& opt = {}) {
    double backoff = opt.backoff_initial_s;
    int failures = 0;
    std::optional<std::uint64_t> config_hash_seen;

    while (true) {
        Socket sock;
        try {
            sock = connect_to(addr);
        } catch (const std::exception&) {
            if (++failures > opt.max_connect_failures) return 1;
            std::this_thread::sleep_for(std::chrono::duration<double>(backoff));
            backoff = std::min(backoff * 2.0, opt.backoff_cap_s);
            continue;
        }
        failures = 0;
        backoff = opt.backoff_initial_s;
        std::mutex write_mutex;

        const auto send_locked = [&](wire::MsgType type, const std::string& payload) {
            std::unique_lock wl(write_mutex);
            send_message(sock, type, payload);
        };

        try {
            send_preamble(sock);
            if (!read_preamble(sock)) continue;
            send_locked(wire::MsgType::Hello,
                        wire::encode_hello({opt.name, wire::kProtocolVersion}));

            wire::MsgType type;
            std::string payload;
            while (read_message(sock, type, payload)) {
                if (type == wire::MsgType::Shutdown) return 0;
                if (type != wire::MsgType::Job) continue;

                wire::JobMessage job;
                try {
                    job = wire::decode_job(payload);
                } catch (const std::exception& ex) {
                    send_locked(wire::MsgType::Error,
                                wire::encode_error(
                                    {0, static_cast<std::uint32_t>(wire::ErrorCode::MalformedJob),
                                     ex.what()}));
                    continue;
                }
                if (config_hash_seen && *config_hash_seen != job.config_hash) {
                    send_locked(wire::MsgType::Error,
                                wire::encode_error({job.job_id,
                                                    static_cast<std::uint32_t>(
                                                        wire::ErrorCode::ConfigMismatch),
                                                    "campaign config hash changed mid-run"}));
                    continue;
                }
                config_hash_seen = job.config_hash;

                wire::ResultMessage result;
                result.job_id = job.job_id;
                result.worker_id = opt.name;
                {
                    detail::HeartbeatPump pump(sock, write_mutex, job.job_id, job.heartbeat_s);
                    const auto start = std::chrono::steady_clock::now();
                    lightcurves::EpochSeries series;
                    try {
                        series = detail::series_for_job(job);
                    } catch (const std::exception& ex) {
                        send_locked(wire::MsgType::Error,
                                    wire::encode_error({job.job_id,
                                                        static_cast<std::uint32_t>(
                                                            wire::ErrorCode::MissingFrame),
                                                        ex.what()}));
                        continue;
                    }
                    try {
                        const auto analysis = pipeline::analyze_tile(series, job.tile, job.params);
                        result.curves_built = analysis.curves_built;
                        result.candidates = analysis.candidates;
                        result.events = analysis.events;
                        result.timings = analysis.stage_seconds;
                        result.timings["total"] =
                            std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                                .count();
                    } catch (const std::exception& ex) {
                        send_locked(wire::MsgType::Error,
                                    wire::encode_error({job.job_id,
                                                        static_cast<std::uint32_t>(
                                                            wire::ErrorCode::Internal),
                                                        ex.what()}));
                        continue;
                    }
                }
                send_locked(wire::MsgType::Result, wire::encode_result(result));
            }
        } catch (const std::exception&) {
            // connection problem: fall through to reconnect
        }
    }
}

}  // namespace pixellens::cluster
