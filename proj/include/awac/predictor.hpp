#pragma once

// Objective-workload sources for the prediction session. The default is a
// simulated operator model; an external predictor can be plugged in over HTTP.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "awac/hpm.hpp"
#include "awac/rng.hpp"

namespace awac {

struct PredictionRequest {
  std::string session_id;
  int operator_id = 0;
  std::int64_t t_ms = 0;
  int task_index = 0;
  int set = 0;
  int views = 0;        // views currently assigned to this operator
  int total_views = 0;
  int n_operators = 0;
};

class WorkloadPredictor {
 public:
  virtual ~WorkloadPredictor() = default;
  virtual WorkloadLevel predict(const PredictionRequest& request) = 0;
  virtual std::string name() const = 0;
};

// Each operator has a seeded baseline workload at the equal share of views;
// every extra view adds `kappa`, plus optional Gaussian noise.
class SimulatedOperatorPredictor final : public WorkloadPredictor {
 public:
  SimulatedOperatorPredictor(int n_operators, double kappa, double noise_sigma, std::uint64_t seed);

  WorkloadLevel predict(const PredictionRequest& request) override;
  std::string name() const override { return "simulated"; }

  double baseline(int operator_id) const { return baselines_.at(static_cast<std::size_t>(operator_id)); }

 private:
  std::vector<double> baselines_;
  double kappa_;
  double noise_sigma_;
  Rng rng_;
};

// POSTs the request as JSON to `url` (http://host:port/path) and expects
// {"workload": <number in [0,1]>}. Throws IoError on transport or format errors.
class HttpPredictor final : public WorkloadPredictor {
 public:
  explicit HttpPredictor(std::string url, int timeout_ms = 2000);

  WorkloadLevel predict(const PredictionRequest& request) override;
  std::string name() const override { return "http:" + url_; }

 private:
  std::string url_;
  std::string host_;
  int port_ = 80;
  std::string path_;
  int timeout_ms_;
};

std::string prediction_request_json(const PredictionRequest& request);
WorkloadLevel parse_prediction_response(const std::string& body);

}  // namespace awac
