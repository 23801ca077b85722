#include "awac/predictor.hpp"

#include <cmath>
#include <regex>

#include <httplib.h>
#include <json.hpp>

#include "awac/error.hpp"

namespace awac {

SimulatedOperatorPredictor::SimulatedOperatorPredictor(int n_operators, double kappa,
                                                       double noise_sigma, std::uint64_t seed)
    : kappa_(kappa), noise_sigma_(noise_sigma), rng_(seed) {
  if (n_operators < 1) throw ConfigError("predictor: n_operators must be >= 1");
  for (int i = 0; i < n_operators; ++i) baselines_.push_back(uniform01(rng_));
}

WorkloadLevel SimulatedOperatorPredictor::predict(const PredictionRequest& request) {
  if (request.operator_id < 0 || request.operator_id >= static_cast<int>(baselines_.size())) {
    throw ConfigError("predictor: unknown operator");
  }
  const double share = static_cast<double>(request.total_views) / request.n_operators;
  double w = baselines_[static_cast<std::size_t>(request.operator_id)] +
             kappa_ * (request.views - share);
  if (noise_sigma_ > 0.0) w += std::normal_distribution<double>(0.0, noise_sigma_)(rng_);
  return WorkloadLevel::clamped(w);
}

HttpPredictor::HttpPredictor(std::string url, int timeout_ms)
    : url_(std::move(url)), timeout_ms_(timeout_ms) {
  static const std::regex kUrl(R"(^http://([^/:]+)(?::(\d+))?(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(url_, m, kUrl)) throw ConfigError("predictor url must be http://host[:port]/path");
  host_ = m[1];
  port_ = m[2].matched ? std::stoi(m[2]) : 80;
  path_ = m[3].matched ? std::string(m[3]) : "/";
}

std::string prediction_request_json(const PredictionRequest& r) {
  return nlohmann::json{{"session", r.session_id}, {"operator", r.operator_id},
                        {"t", r.t_ms},             {"task_index", r.task_index},
                        {"set", r.set},            {"views", r.views},
                        {"total_views", r.total_views}, {"n_operators", r.n_operators}}
      .dump();
}

WorkloadLevel parse_prediction_response(const std::string& body) {
  try {
    const auto j = nlohmann::json::parse(body);
    const double w = j.at("workload").get<double>();
    if (!std::isfinite(w) || w < 0.0 || w > 1.0) throw IoError("predictor workload outside [0,1]");
    return WorkloadLevel{w};
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("bad predictor response: ") + e.what());
  }
}

WorkloadLevel HttpPredictor::predict(const PredictionRequest& request) {
  httplib::Client client(host_, port_);
  client.set_connection_timeout(0, timeout_ms_ * 1000);
  client.set_read_timeout(0, timeout_ms_ * 1000);
  auto res = client.Post(path_, prediction_request_json(request), "application/json");
  if (!res) throw IoError("predictor unreachable at " + url_);
  if (res->status != 200) throw IoError("predictor returned HTTP " + std::to_string(res->status));
  return parse_prediction_response(res->body);
}

}  // namespace awac
