#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "bfn/chem/mol_graph.hpp"

namespace bfn::chem {

/// Fixed-width bit set produced by folding hashed atom environments.
struct Fingerprint {
  int width = 1024;
  int radius = 2;
  std::vector<std::uint64_t> words;

  Fingerprint() = default;
  Fingerprint(int width_bits, int radius_)
      : width(width_bits), radius(radius_), words((width_bits + 63) / 64, 0) {}

  void set(int bit) { words[bit / 64] |= std::uint64_t{1} << (bit % 64); }
  bool test(int bit) const { return (words[bit / 64] >> (bit % 64)) & 1U; }

  int count() const {
    int total = 0;
    for (auto w : words) total += std::popcount(w);
    return total;
  }

  std::vector<int> on_bits() const {
    std::vector<int> out;
    for (int b = 0; b < width; ++b) {
      if (test(b)) out.push_back(b);
    }
    return out;
  }

  friend bool operator==(const Fingerprint&, const Fingerprint&) = default;
};

namespace detail {

/// 64-bit FNV-1a over a sequence of 64-bit integers (little-endian bytes).
class Fnv1a {
 public:
  void add(std::uint64_t value) {
    for (int i = 0; i < 8; ++i) {
      hash_ ^= (value >> (8 * i)) & 0xFFU;
      hash_ *= 0x100000001b3ULL;
    }
  }
  void add_signed(std::int64_t value) { add(static_cast<std::uint64_t>(value)); }
  std::uint64_t value() const { return hash_; }

 private:
  std::uint64_t hash_ = 0xcbf29ce484222325ULL;
};

}  // namespace detail

/// Circular-environment fingerprint. Radius-0 identifiers hash (element,
/// charge, heavy degree, hydrogen count); each further round hashes the
/// previous identifier with the sorted (bond order, neighbour identifier)
/// list. Identifiers of every radius 0..radius set bit `id % width`.
inline Fingerprint morgan_fingerprint(const MolGraph& g, int radius = 2, int width = 1024) {
  if (width <= 0) throw std::invalid_argument("fingerprint width must be positive");
  if (radius < 0) throw std::invalid_argument("fingerprint radius must be non-negative");
  Fingerprint fp(width, radius);
  const int n = g.atom_count();
  std::vector<std::uint64_t> ids(n);
  for (int i = 0; i < n; ++i) {
    const Atom& a = g.atom(i);
    detail::Fnv1a h;
    h.add_signed(a.element);
    h.add_signed(a.charge);
    h.add_signed(g.degree(i));
    h.add_signed(a.hydrogens);
    ids[i] = h.value();
    fp.set(static_cast<int>(ids[i] % static_cast<std::uint64_t>(width)));
  }
  for (int r = 1; r <= radius; ++r) {
    std::vector<std::uint64_t> next(n);
    for (int i = 0; i < n; ++i) {
      std::vector<std::pair<std::uint64_t, std::uint64_t>> env;
      for (const auto& nb : g.neighbors(i)) {
        env.emplace_back(static_cast<std::uint64_t>(g.bond(nb.bond).order), ids[nb.atom]);
      }
      std::sort(env.begin(), env.end());
      detail::Fnv1a h;
      h.add_signed(r);
      h.add(ids[i]);
      for (const auto& [order, id] : env) {
        h.add(order);
        h.add(id);
      }
      next[i] = h.value();
      fp.set(static_cast<int>(next[i] % static_cast<std::uint64_t>(width)));
    }
    ids = std::move(next);
  }
  return fp;
}

/// |a AND b| / |a OR b|; two empty fingerprints are identical (1.0).
inline double tanimoto(const Fingerprint& a, const Fingerprint& b) {
  if (a.width != b.width) throw std::invalid_argument("fingerprint width mismatch");
  int both = 0;
  int either = 0;
  for (std::size_t k = 0; k < a.words.size(); ++k) {
    both += std::popcount(a.words[k] & b.words[k]);
    either += std::popcount(a.words[k] | b.words[k]);
  }
  if (either == 0) return 1.0;
  return static_cast<double>(both) / static_cast<double>(either);
}

}  // namespace bfn::chem
