#pragma once

#include <cctype>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bfn/chem/aromaticity.hpp"
#include "bfn/chem/elements.hpp"
#include "bfn/chem/errors.hpp"
#include "bfn/chem/mol_graph.hpp"

namespace bfn::chem {

namespace detail {

class SmilesReader {
 public:
  explicit SmilesReader(std::string_view text) : text_(text) {}

  MolGraph read() {
    if (text_.empty()) throw ParseError(ParseErrorKind::kEmpty, "no atoms");
    while (pos_ < text_.size()) step();
    if (!branches_.empty()) {
      throw ParseError(ParseErrorKind::kUnbalancedParenthesis, "unclosed '('");
    }
    if (!open_rings_.empty()) {
      throw ParseError(ParseErrorKind::kUnclosedRing,
                       "ring bond " + std::to_string(open_rings_.begin()->first) + " never closed");
    }
    if (pending_bond_) throw ParseError(ParseErrorKind::kDanglingBond, "bond at end of input");
    if (graph_.empty()) throw ParseError(ParseErrorKind::kEmpty, "no atoms");
    return std::move(graph_);
  }

 private:
  struct RingOpening {
    int atom;
    std::optional<BondOrder> order;
  };

  [[noreturn]] void lexical(const std::string& what) const {
    throw ParseError(ParseErrorKind::kLexical, what + " at position " + std::to_string(pos_));
  }

  void step() {
    const char c = text_[pos_];
    switch (c) {
      case '(':
        if (prev_ < 0) {
          throw ParseError(ParseErrorKind::kUnbalancedParenthesis, "branch without an atom");
        }
        if (pending_bond_) throw ParseError(ParseErrorKind::kDanglingBond, "bond before '('");
        branches_.push_back(prev_);
        ++pos_;
        return;
      case ')':
        if (branches_.empty()) {
          throw ParseError(ParseErrorKind::kUnbalancedParenthesis, "unmatched ')'");
        }
        if (pending_bond_) throw ParseError(ParseErrorKind::kDanglingBond, "bond before ')'");
        if (text_.substr(0, pos_).ends_with('(')) {
          throw ParseError(ParseErrorKind::kUnbalancedParenthesis, "empty branch");
        }
        prev_ = branches_.back();
        branches_.pop_back();
        ++pos_;
        return;
      case '.':
        if (pending_bond_ || prev_ < 0 || !branches_.empty()) {
          throw ParseError(ParseErrorKind::kDanglingBond, "misplaced '.'");
        }
        prev_ = -1;
        ++pos_;
        return;
      case '-': set_bond(BondOrder::kSingle); return;
      case '/': case '\\': case '~': set_bond(std::nullopt); return;
      case '=': set_bond(BondOrder::kDouble); return;
      case '#': set_bond(BondOrder::kTriple); return;
      case ':': set_bond(BondOrder::kAromatic); return;
      case '%': {
        if (pos_ + 2 >= text_.size() || !std::isdigit(static_cast<unsigned char>(text_[pos_ + 1])) ||
            !std::isdigit(static_cast<unsigned char>(text_[pos_ + 2]))) {
          lexical("malformed %nn ring closure");
        }
        const int number = (text_[pos_ + 1] - '0') * 10 + (text_[pos_ + 2] - '0');
        pos_ += 3;
        ring_closure(number);
        return;
      }
      case '[': bracket_atom(); return;
      default: break;
    }
    if (std::isdigit(static_cast<unsigned char>(c))) {
      ++pos_;
      ring_closure(c - '0');
      return;
    }
    organic_atom();
  }

  void set_bond(std::optional<BondOrder> order) {
    if (prev_ < 0) throw ParseError(ParseErrorKind::kDanglingBond, "bond without a preceding atom");
    if (pending_bond_) throw ParseError(ParseErrorKind::kDanglingBond, "two consecutive bonds");
    pending_bond_ = true;
    pending_order_ = order;
    ++pos_;
  }

  BondOrder resolve(std::optional<BondOrder> order, int a, int b) const {
    if (order) return *order;
    return (graph_.atom(a).aromatic && graph_.atom(b).aromatic) ? BondOrder::kAromatic
                                                               : BondOrder::kSingle;
  }

  void ring_closure(int number) {
    if (prev_ < 0) throw ParseError(ParseErrorKind::kBadRingClosure, "ring bond without an atom");
    const std::optional<BondOrder> order =
        pending_bond_ ? pending_order_ : std::optional<BondOrder>{};
    pending_bond_ = false;
    pending_order_.reset();
    auto it = open_rings_.find(number);
    if (it == open_rings_.end()) {
      open_rings_[number] = RingOpening{prev_, order};
      return;
    }
    const RingOpening opening = it->second;
    open_rings_.erase(it);
    if (opening.atom == prev_) {
      throw ParseError(ParseErrorKind::kBadRingClosure, "ring bond to the same atom");
    }
    if (opening.order && order && *opening.order != *order) {
      throw ParseError(ParseErrorKind::kBadRingClosure, "conflicting ring bond orders");
    }
    if (graph_.find_bond(opening.atom, prev_) >= 0) {
      throw ParseError(ParseErrorKind::kBadRingClosure, "ring bond duplicates an existing bond");
    }
    graph_.add_bond(opening.atom, prev_, resolve(opening.order ? opening.order : order,
                                                 opening.atom, prev_));
  }

  void attach(const Atom& atom) {
    const int index = graph_.add_atom(atom);
    if (prev_ >= 0) {
      graph_.add_bond(prev_, index, resolve(pending_bond_ ? pending_order_ : std::nullopt, prev_, index));
    } else if (pending_bond_) {
      throw ParseError(ParseErrorKind::kDanglingBond, "bond without a preceding atom");
    }
    pending_bond_ = false;
    pending_order_.reset();
    prev_ = index;
  }

  void organic_atom() {
    const char c = text_[pos_];
    Atom atom;
    auto two = [&](char next) {
      return pos_ + 1 < text_.size() && text_[pos_ + 1] == next;
    };
    std::size_t length = 1;
    switch (c) {
      case 'B':
        if (two('r')) { atom.element = 35; length = 2; } else { atom.element = 5; }
        break;
      case 'C':
        if (two('l')) { atom.element = 17; length = 2; } else { atom.element = 6; }
        break;
      case 'N': atom.element = 7; break;
      case 'O': atom.element = 8; break;
      case 'P': atom.element = 15; break;
      case 'S': atom.element = 16; break;
      case 'F': atom.element = 9; break;
      case 'I': atom.element = 53; break;
      case 'b': atom.element = 5; atom.aromatic = true; break;
      case 'c': atom.element = 6; atom.aromatic = true; break;
      case 'n': atom.element = 7; atom.aromatic = true; break;
      case 'o': atom.element = 8; atom.aromatic = true; break;
      case 'p': atom.element = 15; atom.aromatic = true; break;
      case 's': atom.element = 16; atom.aromatic = true; break;
      default: lexical(std::string("unexpected character '") + c + "'");
    }
    pos_ += length;
    attach(atom);
  }

  void bracket_atom() {
    const std::size_t close = text_.find(']', pos_);
    if (close == std::string_view::npos) lexical("unterminated bracket atom");
    std::string_view body = text_.substr(pos_ + 1, close - pos_ - 1);
    std::size_t i = 0;
    Atom atom;
    atom.bracket = true;

    while (i < body.size() && std::isdigit(static_cast<unsigned char>(body[i]))) {
      atom.isotope = atom.isotope * 10 + (body[i] - '0');
      if (atom.isotope > 999) lexical("isotope out of range");
      ++i;
    }
    if (i >= body.size()) lexical("bracket atom without element");
    if (std::islower(static_cast<unsigned char>(body[i]))) {
      // Aromatic bracket symbols: b c n o p s se as te.
      std::string_view sym;
      if (body.substr(i, 2) == "se" || body.substr(i, 2) == "as" || body.substr(i, 2) == "te") {
        sym = body.substr(i, 2);
      } else {
        sym = body.substr(i, 1);
      }
      std::string upper(sym);
      upper[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(upper[0])));
      const auto z = atomic_number(upper);
      if (!z || !is_aromatic_capable(*z)) lexical("unknown aromatic symbol");
      atom.element = *z;
      atom.aromatic = true;
      i += sym.size();
    } else if (std::isupper(static_cast<unsigned char>(body[i]))) {
      std::optional<int> z;
      if (i + 1 < body.size() && std::islower(static_cast<unsigned char>(body[i + 1]))) {
        z = atomic_number(body.substr(i, 2));
        if (z) i += 2;
      }
      if (!z) {
        z = atomic_number(body.substr(i, 1));
        if (!z) lexical("unknown element in bracket atom");
        i += 1;
      }
      atom.element = *z;
    } else {
      lexical("bracket atom without element");
    }

    while (i < body.size() && body[i] == '@') ++i;  // chirality is discarded
    if (i + 1 < body.size() &&
        (body.substr(i, 2) == "TH" || body.substr(i, 2) == "AL" || body.substr(i, 2) == "SP" ||
         body.substr(i, 2) == "TB" || body.substr(i, 2) == "OH")) {
      i += 2;
      while (i < body.size() && std::isdigit(static_cast<unsigned char>(body[i]))) ++i;
    }
    if (i < body.size() && body[i] == 'H') {
      ++i;
      int count = 1;
      if (i < body.size() && std::isdigit(static_cast<unsigned char>(body[i]))) {
        count = body[i] - '0';
        ++i;
      }
      atom.hydrogens = count;
    }
    if (i < body.size() && (body[i] == '+' || body[i] == '-')) {
      const char sign = body[i];
      int magnitude = 1;
      ++i;
      if (i < body.size() && std::isdigit(static_cast<unsigned char>(body[i]))) {
        magnitude = 0;
        while (i < body.size() && std::isdigit(static_cast<unsigned char>(body[i]))) {
          magnitude = magnitude * 10 + (body[i] - '0');
          ++i;
        }
      } else {
        while (i < body.size() && body[i] == sign) {
          ++magnitude;
          ++i;
        }
      }
      if (magnitude > 15) lexical("charge out of range");
      atom.charge = sign == '+' ? magnitude : -magnitude;
    }
    if (i < body.size() && body[i] == ':') {
      ++i;
      if (i >= body.size()) lexical("empty atom class");
      while (i < body.size() && std::isdigit(static_cast<unsigned char>(body[i]))) ++i;
    }
    if (i != body.size()) lexical("trailing characters in bracket atom");
    pos_ = close + 1;
    attach(atom);
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  MolGraph graph_;
  int prev_ = -1;
  bool pending_bond_ = false;
  std::optional<BondOrder> pending_order_;
  std::vector<int> branches_;
  std::map<int, RingOpening> open_rings_;
};

}  // namespace detail

/// Parses a SMILES string into a hydrogen-complete, valence-checked graph
/// with aromaticity re-perceived. Throws ParseError.
inline MolGraph parse_smiles(std::string_view smiles) {
  MolGraph g = detail::SmilesReader(smiles).read();
  kekulize(g);
  assign_hydrogens(g);
  perceive_aromaticity(g);
  return g;
}

/// Validity criterion used by the reward and the metrics: the string parses,
/// every ring closes, every atom respects the valence table and aromatic
/// systems admit a Kekulé structure.
inline bool is_valid(std::string_view smiles) {
  try {
    parse_smiles(smiles);
    return true;
  } catch (const ParseError&) {
    return false;
  } catch (const GraphError&) {
    return false;
  }
}

}  // namespace bfn::chem
