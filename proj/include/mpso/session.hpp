#pragma once

#include <exception>
#include <thread>

#include <unordered_map>

#include "mpso/dealer.hpp"
#include "mpso/group.hpp"
#include "mpso/net.hpp"

namespace mpso {

// Everything a party needs while running a protocol.
struct Party {
  PartyId id;
  unsigned m;
  Mesh& net;
  CorrelationStore& store;
  Seed seed;
  Prg prg;

  // OPRF state. Keys are per receiver; the element cache avoids recomputing
  // k * H1(x) when the same receiver is served more than once.
  bool ideal_oprf = false;
  Seed ideal_seed{};
  std::map<PartyId, OprfKey> oprf_keys;
  std::map<PartyId, std::unordered_map<Element, Point, ElementHash>> oprf_cache;
  std::map<PartyId, u32> oprf_domains;

  Party(PartyId i, Mesh& n, CorrelationStore& s, const Seed& sd)
      : id(i), m(n.parties()), net(n), store(s), seed(sd), prg(derive_seed(sd, "party-prg")) {}

  // Fresh H2 domain for the next program/receive with `peer`; both ends count in lockstep.
  u32 next_domain(PartyId peer) { return oprf_domains[peer]++; }
};

inline std::vector<PartyId> all_parties(unsigned m) {
  std::vector<PartyId> v(m);
  for (PartyId p = 1; p <= m; ++p) v[p - 1] = p;
  return v;
}

inline bool contains(std::span<const PartyId> ps, PartyId p) { return std::find(ps.begin(), ps.end(), p) != ps.end(); }

// Gather-to-leader then broadcast: one opening round for the whole vector.
template <class T>
std::vector<T> open_sum(Party& P, std::span<const PartyId> group, PartyId leader, std::vector<T> mine,
                        Stage st = Stage::beaver_open) {
  const std::size_t n = mine.size();
  if (P.id == leader) {
    for (PartyId q : group) {
      if (q == leader) continue;
      add_into(mine, unpack_vec<T>(P.net.recv(q, st), n));
    }
    Bytes out = pack_vec(mine);
    P.net.broadcast(group, st, out);
    return mine;
  }
  P.net.send(leader, st, pack_vec(mine));
  return unpack_vec<T>(P.net.recv(leader, st), n);
}

template <class B>
void mark_used(B& batch) {
  if (batch.used) throw CorrelationError("correlation reuse detected");
  batch.used = true;
}

// Elementwise product of two shared vectors over the parties in `group`.
template <class F>
std::vector<F> beaver_mul(Party& P, std::span<const PartyId> group, PartyId leader, const std::vector<F>& x,
                          const std::vector<F>& y) {
  if (x.size() != y.size()) throw ProtocolError("beaver_mul: length mismatch");
  const std::size_t n = x.size();
  auto t = P.store.take_beaver<F>(party_mask(group), n);
  mark_used(t);
  std::vector<F> de(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    de[i] = x[i] - t.a[i];
    de[n + i] = y[i] - t.b[i];
  }
  de = open_sum(P, group, leader, std::move(de));
  std::vector<F> z(n);
  for (std::size_t i = 0; i < n; ++i) {
    F d = de[i], e = de[n + i];
    z[i] = t.c[i] + d * t.b[i] + e * t.a[i];
    if (P.id == leader) z[i] += d * e;
  }
  return z;
}

// Shares of r * b for a fresh uniform nonzero b unknown to everyone.
// Zero stays zero, anything else becomes uniform in F*.
template <class F>
std::vector<F> beaver_mul_random(Party& P, std::span<const PartyId> group, PartyId leader, const std::vector<F>& r) {
  const std::size_t n = r.size();
  auto t = P.store.take_beaver<F>(party_mask(group), n);
  mark_used(t);
  std::vector<F> u(n);
  for (std::size_t i = 0; i < n; ++i) u[i] = r[i] + t.a[i];
  u = open_sum(P, group, leader, std::move(u));
  std::vector<F> s(n);
  for (std::size_t i = 0; i < n; ++i) s[i] = u[i] * t.b[i] - t.c[i];
  return s;
}

// Runs fn(p) for p = 1..m on separate threads. A failing party closes its mesh so
// peers fail fast instead of waiting out the timeout; the first error is rethrown.
template <class Fn>
void run_parties(std::vector<std::unique_ptr<Mesh>>& meshes, Fn fn) {
  const unsigned m = static_cast<unsigned>(meshes.size() - 1);
  std::vector<std::exception_ptr> err(m + 1);
  std::vector<std::thread> th;
  for (PartyId p = 1; p <= m; ++p)
    th.emplace_back([&, p] {
      try {
        fn(p);
      } catch (...) {
        err[p] = std::current_exception();
        meshes[p]->close();
      }
    });
  for (auto& t : th) t.join();
  // Prefer a root cause over the disconnects it triggered.
  std::exception_ptr first;
  for (PartyId p = 1; p <= m; ++p) {
    if (!err[p]) continue;
    try {
      std::rethrow_exception(err[p]);
    } catch (const ProtocolError& e) {
      if (std::string_view(e.what()).starts_with("peer disconnected")) {
        if (!first) first = err[p];
        continue;
      }
      std::rethrow_exception(err[p]);
    } catch (...) {
      std::rethrow_exception(err[p]);
    }
  }
  if (first) std::rethrow_exception(first);
}

inline Bytes pack_bits(const std::vector<u8>& bits) {
  Bytes out((bits.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < bits.size(); ++i)
    if (bits[i]) out[i / 8] |= static_cast<u8>(1u << (i % 8));
  return out;
}

inline std::vector<u8> unpack_bits(std::span<const u8> b, std::size_t n) {
  if (b.size() != (n + 7) / 8) throw ProtocolError("unexpected bit vector size");
  std::vector<u8> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = (b[i / 8] >> (i % 8)) & 1;
  return out;
}

// Random OT to chosen-choice OT. The receiver with choice e sends d = e ^ c;
// the sender then holds r_b = m_{b ^ d}, and the receiver's m_c equals r_e.
template <class F>
std::vector<u8> rot_choice_flip(const RotRecvBatch<F>& rot, const std::vector<u8>& e) {
  std::vector<u8> d(e.size());
  for (std::size_t i = 0; i < e.size(); ++i) d[i] = static_cast<u8>((e[i] ^ rot.choice[i]) & 1);
  return d;
}

template <class F>
std::pair<F, F> rot_sender_pair(const RotSendBatch<F>& rot, std::size_t i, u8 d) {
  return d ? std::pair{rot.m1[i], rot.m0[i]} : std::pair{rot.m0[i], rot.m1[i]};
}

}  // namespace mpso
