#pragma once

#include <any>
#include <condition_variable>
#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <thread>

#include "ahlp/core.hpp"

namespace ahlp::runtime {

struct Config {
    int workers = 0;             // physical worker slots; 0 = one per rank
    bool deterministic = true;   // deterministic collectives (fixed fold order)
    std::uint64_t fuzz_seed = 0; // nonzero: randomized scheduling jitter in send/recv
};

class deadlock_error : public std::runtime_error {
public:
    explicit deadlock_error(std::vector<int> blocked)
        : std::runtime_error(describe(blocked)), blocked_(std::move(blocked)) {}
    const std::vector<int>& blocked_ranks() const { return blocked_; }

private:
    std::vector<int> blocked_;
    static std::string describe(const std::vector<int>& b) {
        std::string s = "deadlock: all live ranks blocked on receives {";
        for (size_t i = 0; i < b.size(); ++i) s += (i ? "," : "") + std::to_string(b[i]);
        return s + "}";
    }
};

class abort_error : public std::runtime_error {
public:
    abort_error(int origin, const std::string& what)
        : std::runtime_error("rank " + std::to_string(origin) + " failed: " + what), origin_(origin) {}
    int origin_rank() const { return origin_; }

private:
    int origin_;
};

namespace detail {

struct Mail {
    int src = 0;
    std::int64_t tag = 0;
    std::uint64_t seq = 0; // per (src,dst) channel sequence number
    std::any payload;
};

class Session {
public:
    Session(int num_ranks, const Config& cfg)
        : cfg_(cfg), num_ranks_(num_ranks), live_(num_ranks),
          slots_(cfg.workers > 0 ? std::min(cfg.workers, num_ranks) : num_ranks),
          ranks_(static_cast<size_t>(num_ranks)) {
        for (int r = 0; r < num_ranks; ++r) ranks_[static_cast<size_t>(r)].fuzz = Rng(cfg.fuzz_seed + static_cast<std::uint64_t>(r) * 7919u);
    }

    const Config& config() const { return cfg_; }
    int num_ranks() const { return num_ranks_; }

    void acquire_slot() {
        std::unique_lock lk(mu_);
        slot_cv_.wait(lk, [&] { return slots_ > 0; });
        --slots_;
    }

    void release_slot_locked() {
        ++slots_;
        slot_cv_.notify_one();
    }

    void finish(int me) {
        std::unique_lock lk(mu_);
        ranks_[static_cast<size_t>(me)].finished = true;
        --live_;
        release_slot_locked();
        check_quiescence_locked();
    }

    void abort(int origin, const std::string& what) {
        std::unique_lock lk(mu_);
        if (!aborted_) {
            aborted_ = true;
            origin_ = origin;
            what_ = what;
            deadlock_ = false;
        }
        wake_all_locked();
    }

    void rethrow_failure() {
        std::unique_lock lk(mu_);
        if (!aborted_) return;
        if (deadlock_) throw deadlock_error(deadlocked_);
        throw abort_error(origin_, what_);
    }

    void send(int me, int dst, std::int64_t tag, std::any payload) {
        fuzz_delay(me);
        std::unique_lock lk(mu_);
        throw_if_aborted_locked();
        if (dst < 0 || dst >= num_ranks_) throw invalid_argument_error("send: bad destination rank");
        RankState& r = ranks_[static_cast<size_t>(dst)];
        Mail m;
        m.src = me;
        m.tag = tag;
        m.seq = ++channel_seq_[{me, dst}];
        m.payload = std::move(payload);
        r.inbox.push_back(std::move(m));
        if (r.blocked) r.cv.notify_one();
    }

    Mail recv(int me, int src, std::int64_t tag) {
        fuzz_delay(me);
        std::unique_lock lk(mu_);
        RankState& r = ranks_[static_cast<size_t>(me)];
        for (;;) {
            throw_if_aborted_locked();
            for (auto it = r.inbox.begin(); it != r.inbox.end(); ++it) {
                if (it->src == src && it->tag == tag) {
                    Mail m = std::move(*it);
                    r.inbox.erase(it);
                    return m;
                }
            }
            r.blocked = true;
            r.wait_src = src;
            r.wait_tag = tag;
            ++blocked_;
            release_slot_locked();
            check_quiescence_locked();
            r.cv.wait(lk, [&] { return aborted_ || has_match_locked(me); });
            --blocked_;
            r.blocked = false;
            // re-acquire a worker slot before resuming user code
            slot_cv_.wait(lk, [&] { return slots_ > 0 || aborted_; });
            if (!aborted_) --slots_;
        }
    }

    std::int64_t comm_id(int me, const std::vector<int>& members) {
        std::unique_lock lk(mu_);
        auto& occurrence = ranks_[static_cast<size_t>(me)].comm_occurrence;
        const int occ = occurrence[members]++;
        auto key = std::make_pair(members, occ);
        auto it = comm_ids_.find(key);
        if (it != comm_ids_.end()) return it->second;
        const std::int64_t id = next_comm_id_++;
        comm_ids_.emplace(std::move(key), id);
        return id;
    }

private:
    struct RankState {
        std::deque<Mail> inbox;
        bool blocked = false;
        bool finished = false;
        int wait_src = -1;
        std::int64_t wait_tag = 0;
        std::condition_variable cv;
        std::map<std::vector<int>, int> comm_occurrence;
        Rng fuzz{1};
    };

    Config cfg_;
    int num_ranks_;
    int live_;
    int slots_;
    int blocked_ = 0;
    bool aborted_ = false;
    bool deadlock_ = false;
    int origin_ = -1;
    std::string what_;
    std::vector<int> deadlocked_;
    std::mutex mu_;
    std::condition_variable slot_cv_;
    std::vector<RankState> ranks_;
    std::map<std::pair<int, int>, std::uint64_t> channel_seq_;
    std::map<std::pair<std::vector<int>, int>, std::int64_t> comm_ids_;
    std::int64_t next_comm_id_ = 1;

    void fuzz_delay(int me) {
        if (cfg_.fuzz_seed == 0) return;
        Rng& rng = ranks_[static_cast<size_t>(me)].fuzz;
        std::uint64_t spin;
        {
            std::unique_lock lk(mu_);
            spin = rng.next_u64() % 4;
        }
        if (spin == 0)
            std::this_thread::yield();
        else
            std::this_thread::sleep_for(std::chrono::microseconds(spin * 37 % 97));
    }

    bool has_match_locked(int me) const {
        const RankState& r = ranks_[static_cast<size_t>(me)];
        for (const Mail& m : r.inbox)
            if (m.src == r.wait_src && m.tag == r.wait_tag) return true;
        return false;
    }

    void throw_if_aborted_locked() {
        if (!aborted_) return;
        if (deadlock_) throw deadlock_error(deadlocked_);
        throw abort_error(origin_, what_);
    }

    void wake_all_locked() {
        for (auto& r : ranks_) r.cv.notify_all();
        slot_cv_.notify_all();
    }

    /// Quiescence: every live rank is blocked on a receive and none of them has
    /// a deliverable message. Triggered by the rank that blocks or finishes last.
    void check_quiescence_locked() {
        if (aborted_ || live_ == 0 || blocked_ < live_) return;
        for (int r = 0; r < num_ranks_; ++r) {
            const RankState& rs = ranks_[static_cast<size_t>(r)];
            if (!rs.finished && rs.blocked && has_match_locked(r)) return;
        }
        std::vector<int> blocked;
        for (int r = 0; r < num_ranks_; ++r)
            if (!ranks_[static_cast<size_t>(r)].finished) blocked.push_back(r);
        aborted_ = true;
        deadlock_ = true;
        deadlocked_ = std::move(blocked);
        wake_all_locked();
    }
};

} // namespace detail

class RankContext;

/// Ordered rank group with a fixed binary tree topology derived from the member
/// order. In deterministic mode, reductions route values up the tree untouched
/// and apply the operation at the root in member order, which makes the result
/// bitwise equal to a sequential left-fold in rank order regardless of worker
/// count or scheduling. The opt-in fast mode folds eagerly at every tree node.
class Comm {
public:
    Comm() = default;

    int size() const { return static_cast<int>(members_.size()); }
    int local_rank() const { return local_; }
    int member(int i) const { return members_[static_cast<size_t>(i)]; }
    const std::vector<int>& members() const { return members_; }
    std::int64_t id() const { return id_; }

    template <class T, class Op>
    std::optional<T> reduce(const T& local, Op op, int root_local = 0);

    template <class T, class Op>
    T allreduce(const T& local, Op op);

    /// Root's value delivered to every member (bitwise-identical copies).
    template <class T>
    T scatter(int root_local, const T& value);

    void barrier();

private:
    friend class RankContext;
    Comm(detail::Session* s, int me, std::vector<int> members, std::int64_t id)
        : session_(s), me_(me), members_(std::move(members)), id_(id) {
        for (size_t i = 0; i < members_.size(); ++i)
            if (members_[i] == me_) local_ = static_cast<int>(i);
        if (local_ < 0) throw invalid_argument_error("comm: calling rank is not a member");
    }

    std::int64_t op_tag() {
        // collective operations advance in lockstep on every member
        return (id_ << 24) | static_cast<std::int64_t>(op_seq_++);
    }

    detail::Session* session_ = nullptr;
    int me_ = -1;
    int local_ = -1;
    std::vector<int> members_;
    std::int64_t id_ = 0;
    std::uint32_t op_seq_ = 0;
};

/// Per-rank view of the runtime: identity, point-to-point messaging, and
/// communicator construction. Messages are delivered exactly once, FIFO per
/// (source, destination) channel.
class RankContext {
public:
    RankContext(detail::Session* s, int rank) : session_(s), rank_(rank) {}

    int rank() const { return rank_; }
    int num_ranks() const { return session_->num_ranks(); }
    bool deterministic() const { return session_->config().deterministic; }

    template <class T>
    void send(int dst, std::int64_t tag, T value) {
        session_->send(rank_, dst, user_tag(tag), std::any(std::move(value)));
    }

    template <class T>
    T recv(int src, std::int64_t tag) {
        detail::Mail m = session_->recv(rank_, src, user_tag(tag));
        return std::any_cast<T>(std::move(m.payload));
    }

    /// Receive returning the channel sequence number (for delivery-order checks).
    template <class T>
    std::pair<T, std::uint64_t> recv_with_seq(int src, std::int64_t tag) {
        detail::Mail m = session_->recv(rank_, src, user_tag(tag));
        return {std::any_cast<T>(std::move(m.payload)), m.seq};
    }

    Comm world() {
        std::vector<int> all(static_cast<size_t>(num_ranks()));
        for (int r = 0; r < num_ranks(); ++r) all[static_cast<size_t>(r)] = r;
        return split(all);
    }

    /// Collective over the member set: every member must call with the same list.
    Comm split(std::vector<int> members) {
        const std::int64_t id = session_->comm_id(rank_, members);
        return Comm(session_, rank_, std::move(members), id);
    }

    detail::Session* session() { return session_; }

private:
    detail::Session* session_;
    int rank_;

    static std::int64_t user_tag(std::int64_t tag) { return tag & 0xffffff; }
};

namespace detail {

template <class T>
struct TaggedList {
    std::vector<std::pair<int, T>> items; // (member index, value)
};

} // namespace detail

template <class T, class Op>
std::optional<T> Comm::reduce(const T& local, Op op, int root_local) {
    const std::int64_t tag = op_tag();
    auto child = [&](int c) { return 2 * local_ + 1 + c; };
    const int parent = (local_ - 1) / 2;

    if (session_->config().deterministic) {
        detail::TaggedList<T> acc;
        acc.items.emplace_back(local_, local);
        for (int c = 0; c < 2; ++c) {
            if (child(c) >= size()) continue;
            detail::Mail m = session_->recv(me_, members_[static_cast<size_t>(child(c))], tag);
            auto list = std::any_cast<detail::TaggedList<T>>(std::move(m.payload));
            for (auto& it : list.items) acc.items.push_back(std::move(it));
        }
        if (local_ != 0) {
            session_->send(me_, members_[static_cast<size_t>(parent)], tag, std::any(std::move(acc)));
        } else {
            std::sort(acc.items.begin(), acc.items.end(),
                      [](const auto& a, const auto& b) { return a.first < b.first; });
            T result = std::move(acc.items.front().second);
            for (size_t i = 1; i < acc.items.size(); ++i) result = op(std::move(result), acc.items[i].second);
            if (root_local == 0) return result;
            session_->send(me_, members_[static_cast<size_t>(root_local)], tag, std::any(std::move(result)));
        }
        if (local_ == root_local && local_ != 0) {
            detail::Mail m = session_->recv(me_, members_[0], tag);
            return std::any_cast<T>(std::move(m.payload));
        }
        return std::nullopt;
    }

    // fast mode: eager pairwise folding up the tree, arrival order unspecified
    T acc = local;
    for (int c = 0; c < 2; ++c) {
        if (child(c) >= size()) continue;
        detail::Mail m = session_->recv(me_, members_[static_cast<size_t>(child(c))], tag);
        acc = op(std::move(acc), std::any_cast<T>(std::move(m.payload)));
    }
    if (local_ != 0) {
        session_->send(me_, members_[static_cast<size_t>(parent)], tag, std::any(std::move(acc)));
        if (local_ == root_local) {
            detail::Mail m = session_->recv(me_, members_[0], tag);
            return std::any_cast<T>(std::move(m.payload));
        }
        return std::nullopt;
    }
    if (root_local == 0) return acc;
    session_->send(me_, members_[static_cast<size_t>(root_local)], tag, std::any(std::move(acc)));
    return std::nullopt;
}

template <class T>
T Comm::scatter(int root_local, const T& value) {
    const std::int64_t tag = op_tag();
    // virtual indices rooted at root_local keep the tree fixed per member order
    const int n = size();
    const int v = (local_ - root_local + n) % n;
    T held = value;
    if (v != 0) {
        const int vparent = (v - 1) / 2;
        const int parent = (vparent + root_local) % n;
        detail::Mail m = session_->recv(me_, members_[static_cast<size_t>(parent)], tag);
        held = std::any_cast<T>(std::move(m.payload));
    }
    for (int c = 1; c <= 2; ++c) {
        const int vc = 2 * v + c;
        if (vc >= n) continue;
        const int dst = (vc + root_local) % n;
        session_->send(me_, members_[static_cast<size_t>(dst)], tag, std::any(held));
    }
    return held;
}

template <class T, class Op>
T Comm::allreduce(const T& local, Op op) {
    std::optional<T> at_root = reduce(local, op, 0);
    return scatter(0, local_ == 0 ? *at_root : T{});
}

inline void Comm::barrier() {
    allreduce<int>(0, [](int a, int b) { return a + b; });
}

/// Runs `program` once per logical rank on a bounded worker pool. Ranks are
/// multiplexed: at most `workers` of them execute simultaneously; a rank
/// blocked on a receive yields its slot. A failure in any rank aborts all of
/// them; full quiescence (every live rank blocked, nothing deliverable) is
/// reported as a deadlock with the blocked rank set.
template <class F>
auto spawn(int num_ranks, const Config& cfg, F&& program)
    -> std::vector<decltype(program(std::declval<RankContext&>()))> {
    using R = decltype(program(std::declval<RankContext&>()));
    if (num_ranks < 1) throw invalid_argument_error("spawn: num_ranks must be >= 1");

    detail::Session session(num_ranks, cfg);
    std::vector<R> results(static_cast<size_t>(num_ranks));
    std::vector<std::thread> threads;
    threads.reserve(static_cast<size_t>(num_ranks));
    for (int r = 0; r < num_ranks; ++r) {
        threads.emplace_back([&, r] {
            RankContext ctx(&session, r);
            session.acquire_slot();
            try {
                results[static_cast<size_t>(r)] = program(ctx);
            } catch (const deadlock_error&) {
                // recorded by the session already
            } catch (const abort_error&) {
            } catch (const std::exception& e) {
                session.abort(r, e.what());
            } catch (...) {
                session.abort(r, "unknown error");
            }
            session.finish(r);
        });
    }
    for (auto& t : threads) t.join();
    session.rethrow_failure();
    return results;
}

template <class F>
auto spawn(int num_ranks, F&& program) {
    return spawn(num_ranks, Config{}, std::forward<F>(program));
}

} // namespace ahlp::runtime
