#pragma once

#include <cstdint>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "bfn/chem/canonical.hpp"
#include "bfn/chem/smiles.hpp"

namespace bfn::chem {

/// Random acyclic molecule over C, N and O as canonical SMILES: a random
/// tree of `atoms` heavy atoms, bond orders drawn within the valence left.
template <class Rng>
std::string random_acyclic_smiles(Rng& rng, int atoms) {
  static constexpr int kElements[3] = {6, 7, 8};
  static constexpr int kValence[3] = {4, 3, 2};
  std::discrete_distribution<int> element({6, 2, 2});
  std::discrete_distribution<int> order({12, 3, 1});
  MolGraph g;
  std::vector<int> free;
  for (int i = 0; i < atoms; ++i) {
    int e = element(rng);
    std::vector<int> hosts;
    for (int j = 0; j < i; ++j) {
      if (free[j] > 0) hosts.push_back(j);
    }
    if (i > 0 && hosts.empty()) break;
    Atom a;
    a.element = kElements[e];
    g.add_atom(a);
    free.push_back(kValence[e]);
    if (i == 0) continue;
    const int host = hosts[std::uniform_int_distribution<int>(0, static_cast<int>(hosts.size()) - 1)(rng)];
    const int limit = std::min({free[host], free[i], 3});
    const int bo = std::min(1 + order(rng), limit);
    g.add_bond(host, i, static_cast<BondOrder>(bo));
    free[host] -= bo;
    free[i] -= bo;
  }
  assign_hydrogens(g);
  return canonical_smiles(g);
}

/// `count` distinct acyclic C/N/O molecules whose SMILES have at most
/// `max_length` characters.
inline std::vector<std::string> desk_corpus(int count, int max_length, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> size(2, 9);
  std::set<std::string> seen;
  std::vector<std::string> out;
  long attempts = 0;
  while (static_cast<int>(out.size()) < count) {
    if (++attempts > 200L * count + 10000) throw std::runtime_error("cannot find enough distinct molecules");
    const std::string s = random_acyclic_smiles(rng, size(rng));
    if (static_cast<int>(s.size()) > max_length || !is_valid(s)) continue;
    if (seen.insert(s).second) out.push_back(s);
  }
  return out;
}

}  // namespace bfn::chem
