#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"

namespace bfn::token {

enum class Scheme { kSmiles, kSelfies, kAminoAcid };

inline std::string to_string(Scheme s) {
  switch (s) {
    case Scheme::kSmiles: return "smiles";
    case Scheme::kSelfies: return "selfies";
    case Scheme::kAminoAcid: return "amino-acid";
  }
  return "smiles";
}

inline Scheme parse_scheme(std::string_view name) {
  if (name == "smiles" || name == "smiles-atomwise") return Scheme::kSmiles;
  if (name == "selfies" || name == "selfies-tokenwise") return Scheme::kSelfies;
  if (name == "amino-acid" || name == "protein") return Scheme::kAminoAcid;
  throw std::invalid_argument("unknown tokenization scheme '" + std::string(name) + "'");
}

class TokenError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kPad = 0;
inline constexpr int kStart = 1;
inline constexpr int kEnd = 2;
inline constexpr int kUnknown = 3;
inline constexpr int kReserved = 4;

inline constexpr std::string_view kAminoAcids = "ACDEFGHIKLMNPQRSTVWY";

/// Splits a string into tokens of the given scheme. SMILES: bracket atoms,
/// Cl, Br and %nn are single tokens, everything else is one character.
inline std::vector<std::string> tokenize(std::string_view s, Scheme scheme) {
  std::vector<std::string> out;
  std::size_t i = 0;
  switch (scheme) {
    case Scheme::kSmiles:
      while (i < s.size()) {
        const char c = s[i];
        if (c == '[') {
          const std::size_t close = s.find(']', i);
          if (close == std::string_view::npos) throw TokenError("unterminated '[' in SMILES");
          out.emplace_back(s.substr(i, close - i + 1));
          i = close + 1;
        } else if ((c == 'C' && i + 1 < s.size() && s[i + 1] == 'l') ||
                   (c == 'B' && i + 1 < s.size() && s[i + 1] == 'r')) {
          out.emplace_back(s.substr(i, 2));
          i += 2;
        } else if (c == '%' && i + 2 < s.size()) {
          out.emplace_back(s.substr(i, 3));
          i += 3;
        } else if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
          throw TokenError("whitespace inside SMILES");
        } else {
          out.emplace_back(1, c);
          ++i;
        }
      }
      break;
    case Scheme::kSelfies:
      while (i < s.size()) {
        if (s[i] == '.') {
          out.emplace_back(".");
          ++i;
          continue;
        }
        if (s[i] != '[') throw TokenError("SELFIES text outside brackets");
        const std::size_t close = s.find(']', i);
        if (close == std::string_view::npos) throw TokenError("unterminated '[' in SELFIES");
        out.emplace_back(s.substr(i, close - i + 1));
        i = close + 1;
      }
      break;
    case Scheme::kAminoAcid:
      for (char c : s) {
        if (kAminoAcids.find(c) == std::string_view::npos) {
          throw TokenError(std::string("not a standard amino acid: '") + c + "'");
        }
        out.emplace_back(1, c);
      }
      break;
  }
  return out;
}

/// Fixed-length id sequence: start, tokens, end, then pad.
struct TokenSequence {
  std::vector<int> ids;
  int length() const { return static_cast<int>(ids.size()); }
  friend bool operator==(const TokenSequence&, const TokenSequence&) = default;
};

class Vocab {
 public:
  Vocab() : Vocab(Scheme::kSmiles, {}) {}

  /// `tokens` excludes the four reserved entries.
  Vocab(Scheme scheme, std::vector<std::string> tokens) : scheme_(scheme) {
    tokens_ = {"<pad>", "<start>", "<end>", "<unk>"};
    for (auto& t : tokens) tokens_.push_back(std::move(t));
    for (int i = 0; i < size(); ++i) {
      if (!index_.emplace(tokens_[i], i).second) throw TokenError("duplicate token " + tokens_[i]);
    }
  }

  Scheme scheme() const { return scheme_; }
  int size() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  int id(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() || it->second < kReserved ? kUnknown : it->second;
  }

  /// Text of id; reserved and out-of-range ids render as "".
  std::string_view text(int id) const {
    if (id < kReserved || id >= size()) return {};
    return tokens_[id];
  }

  nlohmann::json to_json() const {
    return {{"scheme", to_string(scheme_)},
            {"tokens", std::vector<std::string>(tokens_.begin() + kReserved, tokens_.end())}};
  }

  static Vocab from_json(const nlohmann::json& j) {
    return Vocab(parse_scheme(j.at("scheme").get<std::string>()),
                 j.at("tokens").get<std::vector<std::string>>());
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << to_json().dump(1) << '\n';
  }

  static Vocab load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read vocabulary " + path);
    return from_json(nlohmann::json::parse(in));
  }

  /// FNV-1a of the scheme and token list, as 16 hex digits.
  std::string hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&](std::string_view s) {
      for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
      }
      h ^= 0xFF;
      h *= 0x100000001b3ULL;
    };
    mix(to_string(scheme_));
    for (const auto& t : tokens_) mix(t);
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
  }

  friend bool operator==(const Vocab& a, const Vocab& b) {
    return a.scheme_ == b.scheme_ && a.tokens_ == b.tokens_;
  }

 private:
  Scheme scheme_;
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

/// Tokens ordered by descending frequency, ties by token text.
inline Vocab build_vocab(const std::vector<std::string>& corpus, Scheme scheme) {
  if (corpus.empty()) throw TokenError("empty corpus");
  std::map<std::string, long> freq;
  for (const auto& s : corpus) {
    for (auto& t : tokenize(s, scheme)) ++freq[t];
  }
  if (freq.empty()) throw TokenError("corpus has no tokens");
  std::vector<std::pair<std::string, long>> entries(freq.begin(), freq.end());
  std::stable_sort(entries.begin(), entries.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens;
  for (auto& e : entries) tokens.push_back(std::move(e.first));
  return Vocab(scheme, std::move(tokens));
}

/// Unknown tokens map to id 3. Throws when the string needs more than L-2 slots.
inline TokenSequence encode(std::string_view s, const Vocab& v, int L) {
  const auto toks = tokenize(s, v.scheme());
  if (static_cast<int>(toks.size()) > L - 2) {
    throw TokenError("sequence of " + std::to_string(toks.size()) + " tokens exceeds length " +
                     std::to_string(L));
  }
  TokenSequence seq{std::vector<int>(L, kPad)};
  seq.ids[0] = kStart;
  for (std::size_t k = 0; k < toks.size(); ++k) seq.ids[k + 1] = v.id(toks[k]);
  seq.ids[toks.size() + 1] = kEnd;
  return seq;
}

/// Concatenates token text up to the first end id. Pad, start and unknown
/// ids (including ids >= K) contribute nothing.
inline std::string decode(const std::vector<int>& ids, const Vocab& v) {
  std::string out;
  for (int id : ids) {
    if (id == kEnd) break;
    out += v.text(id);
  }
  return out;
}

inline std::string decode(const TokenSequence& seq, const Vocab& v) { return decode(seq.ids, v); }

}  // namespace bfn::token
