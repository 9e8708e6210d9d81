#pragma once

#include <chrono>
#include <condition_variable>
#include <deque>
#include <map>
#include <memory>
#include <mutex>

#include "mpso/common.hpp"
#include "mpso/prg.hpp"

namespace mpso {

enum class Stage : u8 {
  handshake = 0,
  hash_agree = 1,
  oprf_query = 2,
  oprf_response = 3,
  opprf_hint = 4,
  peqt = 5,
  rot_mask = 6,
  beaver_open = 7,
  shuffle = 8,
  reconstruct = 9,
  indicator = 10,
  result = 11,
  done = 12,
};

inline constexpr std::size_t kStageCount = 13;

inline const char* stage_name(Stage s) {
  switch (s) {
    case Stage::handshake: return "handshake";
    case Stage::hash_agree: return "hash_agree";
    case Stage::oprf_query: return "oprf_query";
    case Stage::oprf_response: return "oprf_response";
    case Stage::opprf_hint: return "opprf_hint";
    case Stage::peqt: return "peqt";
    case Stage::rot_mask: return "rot_mask";
    case Stage::beaver_open: return "beaver_open";
    case Stage::shuffle: return "shuffle";
    case Stage::reconstruct: return "reconstruct";
    case Stage::indicator: return "indicator";
    case Stage::result: return "result";
    case Stage::done: return "done";
  }
  return "?";
}

inline constexpr std::size_t kFrameHeader = 9;  // u32 len, u16 session, u8 stage, u16 round
inline constexpr std::size_t kMaxFrame = std::size_t{64} << 20;

struct Frame {
  u16 session = 0;
  Stage stage = Stage::handshake;
  u16 round = 0;
  Bytes payload;
};

// Incoming frames from one peer; recv picks the first frame with a matching tag.
class FrameQueue {
 public:
  void push(Frame f) {
    {
      std::lock_guard<std::mutex> g(mu_);
      q_.push_back(std::move(f));
    }
    cv_.notify_all();
  }
  void close(const std::string& why) {
    {
      std::lock_guard<std::mutex> g(mu_);
      if (!closed_) why_ = why;
      closed_ = true;
    }
    cv_.notify_all();
  }
  Frame pop(Stage st, u16 round, std::chrono::milliseconds timeout) {
    std::unique_lock<std::mutex> lk(mu_);
    auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;) {
      for (auto it = q_.begin(); it != q_.end(); ++it)
        if (it->stage == st && it->round == round) {
          Frame f = std::move(*it);
          q_.erase(it);
          return f;
        }
      if (closed_) throw ProtocolError("peer disconnected: " + why_);
      if (cv_.wait_until(lk, deadline) == std::cv_status::timeout) {
        bool found = std::any_of(q_.begin(), q_.end(), [&](const Frame& f) { return f.stage == st && f.round == round; });
        if (!found)
          throw ProtocolError(std::string("timeout waiting for ") + stage_name(st) + " round " + std::to_string(round));
      }
    }
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Frame> q_;
  bool closed_ = false;
  std::string why_;
};

class Link {
 public:
  virtual ~Link() = default;
  virtual void send(const Frame& f) = 0;
  virtual void close() {}
  FrameQueue& incoming() { return *in_; }

 protected:
  std::shared_ptr<FrameQueue> in_ = std::make_shared<FrameQueue>();
};

struct ChannelStats {
  u64 bytes_sent = 0, bytes_recv = 0, frames_sent = 0, frames_recv = 0;
};

// Per-stage running hashes, updated in program order.
class Transcript {
 public:
  void absorb(Stage st, u8 dir, PartyId peer, u16 round, std::span<const u8> payload) {
    auto it = h_.find(st);
    if (it == h_.end()) it = h_.emplace(st, Blake2b(32)).first;
    it->second.update_le<u8>(dir).update_le<u32>(peer).update_le<u16>(round).update_le<u64>(payload.size()).update(payload);
    if (log_.empty() || log_.back() != st) log_.push_back(st);
  }
  std::map<Stage, std::string> digests() const {
    std::map<Stage, std::string> out;
    for (auto [st, h] : h_) out[st] = to_hex(h.digest<32>());
    return out;
  }
  // Stage of every send/recv event, consecutive duplicates collapsed.
  const std::vector<Stage>& stage_log() const { return log_; }

 private:
  std::map<Stage, Blake2b> h_;
  std::vector<Stage> log_;
};

// One party's view of the full mesh.
class Mesh {
 public:
  Mesh(PartyId self, unsigned m, u16 session)
      : self_(self), m_(m), session_(session), links_(m + 1), stats_(m + 1), sent_(m + 1), recvd_(m + 1) {}
  ~Mesh() { close(); }

  PartyId self() const { return self_; }
  unsigned parties() const { return m_; }
  u16 session() const { return session_; }
  void set_link(PartyId peer, std::unique_ptr<Link> l) { links_.at(peer) = std::move(l); }
  void set_timeout(std::chrono::milliseconds t) { timeout_ = t; }
  std::size_t channel_count() const {
    return static_cast<std::size_t>(std::count_if(links_.begin(), links_.end(), [](auto& l) { return l != nullptr; }));
  }

  // Round ids count frames per (peer, stage, direction), so each recv is matched
  // to the sender's frame with the same position in that stage's sequence.
  void send(PartyId to, Stage st, Bytes payload) {
    if (payload.size() > kMaxFrame) throw ProtocolError("frame exceeds 64 MiB cap");
    Link& l = link(to);
    u16 round = sent_[to][static_cast<u8>(st)]++;
    transcript_.absorb(st, 0, to, round, payload);
    stats_[to].bytes_sent += payload.size() + kFrameHeader;
    stats_[to].frames_sent += 1;
    l.send(Frame{session_, st, round, std::move(payload)});
  }
  Bytes recv(PartyId from, Stage st) {
    Link& l = link(from);
    u16& round = recvd_[from][static_cast<u8>(st)];
    Frame f = l.incoming().pop(st, round, timeout_);
    ++round;
    if (f.session != session_) throw ProtocolError("frame from foreign session");
    transcript_.absorb(st, 1, from, f.round, f.payload);
    stats_[from].bytes_recv += f.payload.size() + kFrameHeader;
    stats_[from].frames_recv += 1;
    return std::move(f.payload);
  }
  void broadcast(std::span<const PartyId> to, Stage st, const Bytes& payload) {
    for (PartyId p : to)
      if (p != self_) send(p, st, payload);
  }
  // Every party tells every other it is finished; safe to tear down sockets afterwards.
  void barrier() {
    for (PartyId p = 1; p <= m_; ++p)
      if (p != self_) send(p, Stage::done, {});
    for (PartyId p = 1; p <= m_; ++p)
      if (p != self_) recv(p, Stage::done);
  }
  void close() {
    for (auto& l : links_)
      if (l) l->close();
  }

  const Transcript& transcript() const { return transcript_; }
  const ChannelStats& stats(PartyId peer) const { return stats_.at(peer); }
  ChannelStats total_stats() const {
    ChannelStats t;
    for (auto& s : stats_) {
      t.bytes_sent += s.bytes_sent;
      t.bytes_recv += s.bytes_recv;
      t.frames_sent += s.frames_sent;
      t.frames_recv += s.frames_recv;
    }
    return t;
  }

 private:
  Link& link(PartyId p) {
    if (p == 0 || p > m_ || p == self_ || !links_[p]) throw ProtocolError("no channel to party " + std::to_string(p));
    return *links_[p];
  }

  PartyId self_;
  unsigned m_;
  u16 session_;
  std::vector<std::unique_ptr<Link>> links_;
  std::vector<ChannelStats> stats_;
  std::vector<std::array<u16, kStageCount>> sent_, recvd_;
  Transcript transcript_;
  std::chrono::milliseconds timeout_{30000};
};

// In-process transport: each send lands directly in the peer's queue.
class LocalLink : public Link {
 public:
  void connect(std::shared_ptr<FrameQueue> peer_in) { peer_ = std::move(peer_in); }
  std::shared_ptr<FrameQueue> queue() const { return in_; }
  void send(const Frame& f) override { peer_->push(f); }
  void close() override {
    in_->close("local link closed");
    if (peer_) peer_->close("peer link closed");
  }

 private:
  std::shared_ptr<FrameQueue> peer_;
};

// Builds m in-process meshes; index 0 unused.
inline std::vector<std::unique_ptr<Mesh>> connect_local_mesh(unsigned m, u16 session = 1) {
  std::vector<std::unique_ptr<Mesh>> meshes(m + 1);
  std::vector<std::vector<LocalLink*>> raw(m + 1, std::vector<LocalLink*>(m + 1, nullptr));
  for (PartyId i = 1; i <= m; ++i) meshes[i] = std::make_unique<Mesh>(i, m, session);
  for (PartyId i = 1; i <= m; ++i)
    for (PartyId j = 1; j <= m; ++j) {
      if (i == j) continue;
      auto l = std::make_unique<LocalLink>();
      raw[i][j] = l.get();
      meshes[i]->set_link(j, std::move(l));
    }
  for (PartyId i = 1; i <= m; ++i)
    for (PartyId j = 1; j <= m; ++j)
      if (i != j) raw[i][j]->connect(raw[j][i]->queue());
  return meshes;
}

inline std::size_t unordered_channel_count(const std::vector<std::unique_ptr<Mesh>>& meshes) {
  std::size_t c = 0;
  for (auto& m : meshes)
    if (m) c += m->channel_count();
  return c / 2;
}

}  // namespace mpso
