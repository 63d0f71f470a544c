#pragma once

#include <memory>
#include <string>
#include <vector>

#include "httplib.h"
// <resolv.h> defines _res, which Eigen uses as an identifier.
#ifdef _res
#undef _res
#endif
#include "json.hpp"

#include "bfn/oracle/scorer.hpp"

namespace bfn::oracle {

/// POSTs {"smiles": [...]} to an http:// endpoint.
class HttpScorer : public Scorer {
 public:
  explicit HttpScorer(std::string url, double timeout_seconds = 300.0) : url_(std::move(url)), timeout_(timeout_seconds) {
    const std::string scheme = "http://";
    if (url_.rfind(scheme, 0) != 0) throw ScorerError("only http:// scorer URLs are supported: " + url_);
    const auto slash = url_.find('/', scheme.size());
    host_ = url_.substr(0, slash);
    path_ = slash == std::string::npos ? "/" : url_.substr(slash);
  }

  std::vector<ScoreOutcome> score(const std::vector<std::string>& smiles) override {
    if (smiles.empty()) return {};
    httplib::Client client(host_);
    const auto secs = static_cast<time_t>(timeout_);
    const auto usecs = static_cast<time_t>((timeout_ - static_cast<double>(secs)) * 1e6);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);
    const nlohmann::json body = {{"smiles", smiles}};
    auto res = client.Post(path_, body.dump(), "application/json");
    if (!res) throw ScorerError("HTTP scorer request failed (" + httplib::to_string(res.error()) + "): " + url_);
    if (res->status != 200) throw ScorerError("HTTP scorer returned status " + std::to_string(res->status));
    nlohmann::json reply;
    try {
      reply = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception&) {
      throw ScorerError("HTTP scorer reply is not JSON");
    }
    return parse_http_records(reply, smiles.size());
  }

  std::string describe() const override { return url_; }

 private:
  std::string url_, host_, path_;
  double timeout_;
};

/// "toy", an http:// URL, or a shell command.
inline std::unique_ptr<Scorer> make_scorer(const std::string& target, double timeout_seconds = 300.0) {
  if (target.empty() || target == "toy") return std::make_unique<ToyScorer>();
  if (target.rfind("http://", 0) == 0) return std::make_unique<HttpScorer>(target, timeout_seconds);
  return std::make_unique<SubprocessScorer>(target, timeout_seconds);
}

}  // namespace bfn::oracle
