#pragma once

#include <string>
#include <string_view>

#include "bfn/chem/selfies.hpp"
#include "bfn/chem/smiles.hpp"
#include "bfn/token/vocab.hpp"

namespace bfn::eval {

/// SMILES for a decoded string: SELFIES are translated, SMILES pass
/// through, protein strings have none.
inline std::string to_smiles(std::string_view decoded, token::Scheme scheme) {
  switch (scheme) {
    case token::Scheme::kSmiles: return std::string(decoded);
    case token::Scheme::kSelfies: return chem::decode_selfies(decoded);
    case token::Scheme::kAminoAcid: return {};
  }
  return {};
}

/// Validity of a decoded sample. Molecules must parse and pass the valence
/// check; protein strings must be non-empty runs of standard residues.
inline bool is_valid_decoded(std::string_view decoded, token::Scheme scheme) {
  if (scheme == token::Scheme::kAminoAcid) {
    if (decoded.empty()) return false;
    for (char c : decoded) {
      if (token::kAminoAcids.find(c) == std::string_view::npos) return false;
    }
    return true;
  }
  return chem::is_valid(to_smiles(decoded, scheme));
}

}  // namespace bfn::eval
