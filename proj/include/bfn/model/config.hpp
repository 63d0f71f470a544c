#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

#include "json.hpp"

namespace bfn::model {

enum class MaskMode { kNormal, kSar };

inline std::string to_string(MaskMode m) { return m == MaskMode::kSar ? "sar" : "normal"; }

inline MaskMode parse_mask(std::string_view s) {
  if (s == "normal" || s == "bi") return MaskMode::kNormal;
  if (s == "sar" || s == "SAR" || s == "causal") return MaskMode::kSar;
  throw std::invalid_argument("unknown mask mode '" + std::string(s) + "'");
}

/// Training and sampling mask pair; strategies 1-4 in order
/// (normal,normal) (normal,sar) (sar,normal) (sar,sar).
struct StrategyConfig {
  MaskMode train = MaskMode::kNormal;
  MaskMode sample = MaskMode::kNormal;

  int number() const { return 1 + (train == MaskMode::kSar ? 2 : 0) + (sample == MaskMode::kSar ? 1 : 0); }

  static StrategyConfig from_number(int n) {
    if (n < 1 || n > 4) throw std::invalid_argument("strategy must be 1..4");
    return {(n - 1) / 2 ? MaskMode::kSar : MaskMode::kNormal,
            (n - 1) % 2 ? MaskMode::kSar : MaskMode::kNormal};
  }
};

struct ModelConfig {
  int layers = 12;
  int heads = 8;
  int hidden = 512;
  int K = 0;              // vocabulary size
  int L = 64;             // sequence length
  int cond_dim = 0;       // condition width f; 0 means unconditional only
  int time_features = 32; // sinusoidal features of t

  static ModelConfig desk(int K, int L, int cond_dim = 0) {
    ModelConfig c;
    c.layers = 2;
    c.heads = 4;
    c.hidden = 64;
    c.K = K;
    c.L = L;
    c.cond_dim = cond_dim;
    return c;
  }

  int ffn() const { return 4 * hidden; }

  void validate() const {
    if (layers < 1 || heads < 1 || hidden < 1 || L < 1 || time_features < 2 || cond_dim < 0) {
      throw std::invalid_argument("model dimensions must be positive");
    }
    if (K < 5) throw std::invalid_argument("vocabulary size must be at least 5");
    if (hidden % heads != 0) throw std::invalid_argument("hidden size not divisible by heads");
    if (time_features % 2 != 0) throw std::invalid_argument("time_features must be even");
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"layers", c.layers}, {"heads", c.heads},   {"hidden", c.hidden},
       {"K", c.K},           {"L", c.L},           {"cond_dim", c.cond_dim},
       {"time_features", c.time_features}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  c = ModelConfig{};
  c.layers = j.value("layers", c.layers);
  c.heads = j.value("heads", c.heads);
  c.hidden = j.value("hidden", c.hidden);
  c.K = j.value("K", c.K);
  c.L = j.value("L", c.L);
  c.cond_dim = j.value("cond_dim", c.cond_dim);
  c.time_features = j.value("time_features", c.time_features);
}

}  // namespace bfn::model
