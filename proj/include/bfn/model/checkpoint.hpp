#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "bfn/model/config.hpp"
#include "bfn/model/transformer.hpp"
#include "bfn/token/vocab.hpp"

namespace bfn::model {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

/// File layout: "BFNCKPT1", uint64 header length, JSON header, float32
/// weights in tensor declaration order, then optional float64 Adam moments.
struct Checkpoint {
  ModelConfig config;
  token::Vocab vocab;
  MaskMode train_mask = MaskMode::kNormal;
  long step = 0;
  int epoch = 0;
  nlohmann::json extra = nlohmann::json::object();
  std::vector<float> weights;
  std::vector<double> moment1;
  std::vector<double> moment2;

  template <class S>
  Transformer<S> model() const {
    Transformer<S> m(config);
    if (weights.size() != m.parameter_count()) {
      throw std::runtime_error("checkpoint holds " + std::to_string(weights.size()) +
                               " weights, model needs " + std::to_string(m.parameter_count()));
    }
    for (std::size_t k = 0; k < weights.size(); ++k) m.weights()[k] = static_cast<S>(weights[k]);
    return m;
  }

  template <class S>
  void set_weights(const Transformer<S>& m) {
    config = m.config();
    weights.assign(m.weights().begin(), m.weights().end());
  }
};

namespace detail {

inline constexpr char kMagic[8] = {'B', 'F', 'N', 'C', 'K', 'P', 'T', '1'};

template <class T>
void write_floats(std::ofstream& out, const std::vector<T>& v) {
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
}

template <class T>
std::vector<T> read_floats(std::ifstream& in, std::size_t n, const std::string& path) {
  std::vector<T> v(n);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(T)));
  if (static_cast<std::size_t>(in.gcount()) != n * sizeof(T)) {
    throw std::runtime_error("truncated checkpoint " + path);
  }
  return v;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const Checkpoint& c) {
  const Transformer<float> shape(c.config);
  if (c.weights.size() != shape.parameter_count()) throw std::invalid_argument("weight count mismatch");
  const bool moments = !c.moment1.empty();
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& t : shape.tensors()) tensors.push_back({{"name", t.name}, {"shape", {t.rows, t.cols}}});
  nlohmann::json header = {{"format", "bfn-checkpoint"},
                           {"version", 1},
                           {"model", c.config},
                           {"vocab", c.vocab.to_json()},
                           {"vocab_hash", c.vocab.hash()},
                           {"train_mask", to_string(c.train_mask)},
                           {"step", c.step},
                           {"epoch", c.epoch},
                           {"dtype", "float32-le"},
                           {"optimizer_moments", moments},
                           {"moment_dtype", "float64-le"},
                           {"tensors", tensors},
                           {"extra", c.extra}};
  const std::string text = header.dump();
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path);
    out.write(detail::kMagic, sizeof detail::kMagic);
    const std::uint64_t n = text.size();
    out.write(reinterpret_cast<const char*>(&n), sizeof n);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    detail::write_floats(out, c.weights);
    if (moments) {
      detail::write_floats(out, c.moment1);
      detail::write_floats(out, c.moment2);
    }
    if (!out) throw std::runtime_error("write failed for checkpoint " + path);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw std::runtime_error("cannot move checkpoint to " + path);
}

inline nlohmann::json read_checkpoint_header(std::ifstream& in, const std::string& path) {
  char magic[8];
  in.read(magic, sizeof magic);
  if (in.gcount() != 8 || std::memcmp(magic, detail::kMagic, 8) != 0) {
    throw std::runtime_error(path + " is not a checkpoint");
  }
  std::uint64_t n = 0;
  in.read(reinterpret_cast<char*>(&n), sizeof n);
  if (!in || n > (1u << 26)) throw std::runtime_error("corrupt checkpoint header in " + path);
  std::string text(n, '\0');
  in.read(text.data(), static_cast<std::streamsize>(n));
  if (static_cast<std::uint64_t>(in.gcount()) != n) throw std::runtime_error("truncated checkpoint " + path);
  return nlohmann::json::parse(text);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path);
  const nlohmann::json h = read_checkpoint_header(in, path);
  Checkpoint c;
  c.config = h.at("model").get<ModelConfig>();
  c.vocab = token::Vocab::from_json(h.at("vocab"));
  if (c.vocab.hash() != h.at("vocab_hash").get<std::string>()) {
    throw std::runtime_error("vocabulary hash mismatch in " + path);
  }
  if (c.vocab.size() != c.config.K) throw std::runtime_error("vocabulary size does not match model K");
  c.train_mask = parse_mask(h.at("train_mask").get<std::string>());
  c.step = h.at("step").get<long>();
  c.epoch = h.at("epoch").get<int>();
  c.extra = h.value("extra", nlohmann::json::object());
  const std::size_t count = Transformer<float>(c.config).parameter_count();
  c.weights = detail::read_floats<float>(in, count, path);
  if (h.value("optimizer_moments", false)) {
    c.moment1 = detail::read_floats<double>(in, count, path);
    c.moment2 = detail::read_floats<double>(in, count, path);
  }
  return c;
}

}  // namespace bfn::model
