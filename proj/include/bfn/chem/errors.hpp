#pragma once

#include <stdexcept>
#include <string>

namespace bfn::chem {

enum class ParseErrorKind {
  kEmpty,
  kLexical,
  kUnbalancedParenthesis,
  kUnclosedRing,
  kBadRingClosure,
  kDanglingBond,
  kValence,
  kAromaticity,
};

inline const char* to_string(ParseErrorKind kind) {
  switch (kind) {
    case ParseErrorKind::kEmpty: return "empty input";
    case ParseErrorKind::kLexical: return "lexical error";
    case ParseErrorKind::kUnbalancedParenthesis: return "unbalanced parenthesis";
    case ParseErrorKind::kUnclosedRing: return "unclosed ring bond";
    case ParseErrorKind::kBadRingClosure: return "bad ring closure";
    case ParseErrorKind::kDanglingBond: return "dangling bond";
    case ParseErrorKind::kValence: return "valence violation";
    case ParseErrorKind::kAromaticity: return "aromatic perception failure";
  }
  return "parse error";
}

class ParseError : public std::runtime_error {
 public:
  ParseError(ParseErrorKind kind, const std::string& detail)
      : std::runtime_error(std::string(to_string(kind)) + ": " + detail), kind_(kind) {}

  ParseErrorKind kind() const { return kind_; }

 private:
  ParseErrorKind kind_;
};

}  // namespace bfn::chem
