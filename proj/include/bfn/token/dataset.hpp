#pragma once

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace bfn::token {

struct Record {
  std::string text;
  std::vector<double> condition;
};

/// One record per line: the string, then optional tab-separated numbers.
/// Blank lines are skipped; every record must have the same column count.
inline std::vector<Record> read_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read dataset " + path);
  std::vector<Record> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::stringstream ss(line);
    Record r;
    std::getline(ss, r.text, '\t');
    std::string field;
    while (std::getline(ss, field, '\t')) {
      try {
        std::size_t used = 0;
        r.condition.push_back(std::stod(field, &used));
        if (used != field.size()) throw std::invalid_argument(field);
      } catch (const std::exception&) {
        throw std::runtime_error(path + ":" + std::to_string(lineno) + ": bad condition value '" +
                                 field + "'");
      }
    }
    if (!out.empty() && out.front().condition.size() != r.condition.size()) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": inconsistent column count");
    }
    out.push_back(std::move(r));
  }
  return out;
}

inline std::vector<std::string> texts(const std::vector<Record>& records) {
  std::vector<std::string> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.text);
  return out;
}

}  // namespace bfn::token
