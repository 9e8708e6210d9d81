#pragma once

#include "mpso/opprf.hpp"

namespace mpso {

// ssPMT target width: sigma + log2 T + log2 B, rounded up to whole bytes.
inline unsigned pmt_gamma(unsigned sigma, u64 instances, std::size_t B) {
  unsigned g = sigma + ceil_log2(std::max<u64>(1, instances)) + ceil_log2(std::max<std::size_t>(1, B));
  g = (g + 7) / 8 * 8;
  if (g > kMaxValueBits) throw ConfigError("ssPMT width exceeds 256 bits");
  return g;
}

// AND gates consumed by one ssPEQT over gamma bits.
inline std::size_t peqt_and_count(unsigned gamma) { return gamma ? gamma - 1 : 0; }

// Batched secret-shared equality. Party 0 holds `a`, party 1 holds `b`; the
// returned bits XOR to [a == b]. Bitwise XNOR shares are AND-ed with a
// left-balanced tree, one layer per round, all instances in parallel.
inline std::vector<u8> sspeqt(Party& P, PartyId peer, bool party0, const std::vector<OkvsValue>& in, unsigned gamma) {
  const std::size_t n = in.size();
  auto bit = [](const OkvsValue& v, unsigned i) -> u8 { return (v[i / 64] >> (i % 64)) & 1; };
  // Layer state, instance-major: cur[k * w + j].
  std::size_t w = gamma;
  std::vector<u8> cur(n * w);
  for (std::size_t k = 0; k < n; ++k)
    for (unsigned j = 0; j < gamma; ++j) cur[k * w + j] = party0 ? bit(in[k], j) : static_cast<u8>(bit(in[k], j) ^ 1);

  while (w > 1) {
    const std::size_t pairs = w / 2, nw = (w + 1) / 2, gates = n * pairs;
    auto t = P.store.take_bits(peer, gates);
    std::vector<u8> de(2 * gates);
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t j = 0; j < pairs; ++j) {
        std::size_t g = k * pairs + j;
        de[g] = cur[k * w + 2 * j] ^ static_cast<u8>(get_bit(t.a, g));
        de[gates + g] = cur[k * w + 2 * j + 1] ^ static_cast<u8>(get_bit(t.b, g));
      }
    P.net.send(peer, Stage::peqt, pack_bits(de));
    auto other = unpack_bits(P.net.recv(peer, Stage::peqt), 2 * gates);
    std::vector<u8> next(n * nw);
    for (std::size_t k = 0; k < n; ++k) {
      for (std::size_t j = 0; j < pairs; ++j) {
        std::size_t g = k * pairs + j;
        u8 d = de[g] ^ other[g], e = de[gates + g] ^ other[gates + g];
        u8 z = static_cast<u8>(get_bit(t.c, g)) ^ (d & static_cast<u8>(get_bit(t.b, g))) ^
               (e & static_cast<u8>(get_bit(t.a, g)));
        if (party0) z ^= d & e;
        next[k * nw + j] = z;
      }
      if (w % 2) next[k * nw + pairs] = cur[k * w + w - 1];
    }
    cur = std::move(next);
    w = nw;
  }
  if (gamma == 0) return std::vector<u8>(n, party0 ? 1 : 0);
  return cur;
}

// Batch ssPMT, sender side: per bin, a fresh target programmed on every entry of
// that bin. Returns the sender's membership shares.
inline std::vector<u8> bsspmt_send(Party& P, PartyId receiver, const std::vector<Element>& X, const SimpleTable& t,
                                   unsigned gamma) {
  const std::size_t B = t.bins.size();
  std::vector<OkvsValue> target(B);
  std::vector<OpprfEntry> entries;
  entries.reserve(t.total());
  for (std::size_t b = 0; b < B; ++b) {
    OkvsValue v{};
    for (auto& w : v) w = P.prg.next_u64();
    target[b] = mask_value(v, gamma);
    for (auto& e : t.bins[b]) entries.push_back({static_cast<u32>(b), e.index, e.tag, target[b]});
  }
  opprf_program(P, receiver, X, entries, gamma);
  return sspeqt(P, receiver, true, target, gamma);
}

// Receiver side: shares of [item_b in sender's bin b].
inline std::vector<u8> bsspmt_recv(Party& P, PartyId sender, const OprfView& view, unsigned gamma) {
  auto f = opprf_receive(P, sender, view, gamma);
  return sspeqt(P, sender, false, f, gamma);
}

}  // namespace mpso
