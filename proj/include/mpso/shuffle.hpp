#pragma once

#include <functional>

#include "mpso/session.hpp"

namespace mpso {

// Per-lane share vectors, raw values: field lanes hold field_bits-wide
// elements, ring lanes hold u64 values.
using Lanes = std::vector<std::vector<u128>>;

// Audit hook: called after every round with this party's current shares.
using ShuffleObserver = std::function<void(unsigned round, const Lanes&)>;

namespace detail {

inline Bytes pack_lanes(const ShuffleJobSpec& spec, unsigned fb, const Lanes& x) {
  ByteWriter w;
  for (std::size_t l = 0; l < x.size(); ++l)
    for (u128 v : x[l]) detail::put_value(w, v, lane_bytes(spec.lanes[l], fb));
  return std::move(w.buf);
}

inline Lanes unpack_lanes(const ShuffleJobSpec& spec, unsigned fb, std::span<const u8> b) {
  ByteReader r(b);
  Lanes x(spec.lanes.size());
  for (std::size_t l = 0; l < x.size(); ++l) {
    x[l].resize(spec.N);
    for (auto& v : x[l]) v = detail::get_value(r, lane_bytes(spec.lanes[l], fb));
  }
  if (!r.done()) throw ProtocolError("shuffle message has trailing bytes");
  return x;
}

}  // namespace detail

// m sequential permute-and-reshare rounds; round i is permuted by P_i.
inline Lanes mshuffle(Party& P, const ShuffleJobSpec& spec, Lanes x, const ShuffleObserver& obs = {}) {
  if (x.size() != spec.lanes.size()) throw ProtocolError("shuffle lane count mismatch");
  for (auto& lane : x)
    if (lane.size() != spec.N) throw ProtocolError("shuffle lane length mismatch");
  auto& corr = P.store.take_shuffle(spec);
  mark_used(corr);
  const unsigned fb = P.store.field_bits;
  const std::size_t L = spec.lanes.size();

  for (PartyId i = 1; i <= P.m; ++i) {
    auto& rd = corr.rounds[i - 1];
    if (P.id == i) {
      if (!rd.permuter) throw CorrelationError("shuffle correlation role mismatch");
      Lanes z = x;
      for (PartyId j = 1; j <= P.m; ++j) {
        if (j == i) continue;
        auto in = detail::unpack_lanes(spec, fb, P.net.recv(j, Stage::shuffle));
        for (std::size_t l = 0; l < L; ++l)
          for (std::size_t k = 0; k < spec.N; ++k) z[l][k] = lane_add(spec.lanes[l], fb, z[l][k], in[l][k]);
      }
      for (std::size_t l = 0; l < L; ++l) {
        x[l] = apply_perm(rd.perm, z[l]);
        for (std::size_t k = 0; k < spec.N; ++k) x[l][k] = lane_add(spec.lanes[l], fb, x[l][k], rd.delta[l][k]);
      }
    } else {
      if (rd.permuter) throw CorrelationError("shuffle correlation role mismatch");
      Lanes masked(L);
      for (std::size_t l = 0; l < L; ++l) {
        masked[l].resize(spec.N);
        for (std::size_t k = 0; k < spec.N; ++k) masked[l][k] = lane_sub(spec.lanes[l], fb, x[l][k], rd.a[l][k]);
      }
      P.net.send(i, Stage::shuffle, detail::pack_lanes(spec, fb, masked));
      x = rd.b;
    }
    if (obs) obs(i, x);
  }
  return x;
}

template <class F>
std::vector<u128> to_lane(const std::vector<F>& v) {
  std::vector<u128> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<u128>(v[i].v);
  return out;
}

template <class F>
std::vector<F> from_lane(const std::vector<u128>& v) {
  std::vector<F> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    if constexpr (std::is_same_v<F, Payload>) out[i] = Payload(static_cast<u64>(v[i]));
    else out[i] = F(static_cast<typename F::rep>(v[i]));
  }
  return out;
}

}  // namespace mpso
