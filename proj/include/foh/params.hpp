#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

namespace foh {

/// Loss weights, balance factors, query-pool sizes and optimizer controls.
/// Defaults are the CIFAR-10 configuration.
struct HyperParams {
  double sigma = 0.8;   // quantization
  double theta = 1.2;   // label projection, stream data
  double mu = 0.5;      // label projection, existing data
  double lambda = 0.6;  // ridge on W
  double tau = 0.6;     // ridge on P
  double eta_s = 1.2;   // similar-pair weight
  double eta_d = 0.2;   // dissimilar-pair weight

  std::size_t u = 500;  // central points
  std::size_t v = 500;  // neighbors per central point
  std::size_t beta = 10;
  std::size_t r = 50;   // centers replaced per refresh
  std::size_t refresh_every = 1;

  std::size_t max_alt_iters = 5;
  double tol = 1e-4;
  std::size_t max_existing = 0;  // column cap on B_e per stage, 0 = uncapped
  bool label_projection = true;
  bool paper_sign_z = false;
  bool monotone_be = true;  // reject Be updates that raise the objective
  std::uint64_t seed = 1;

  void validate() const {
    for (double w : {sigma, theta, mu, lambda, tau})
      if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("loss weights must be >= 0");
    if (!(eta_d > 0.0) || !(eta_s > eta_d) || !std::isfinite(eta_s))
      throw std::invalid_argument("balance factors require eta_s > eta_d > 0");
    if (u < 1) throw std::invalid_argument("u must be >= 1");
    if (v < 1) throw std::invalid_argument("v must be >= 1");
    if (beta < 1) throw std::invalid_argument("beta must be >= 1");
    if (beta > u) throw std::invalid_argument("beta exceeds u");
    if (r > u) throw std::invalid_argument("r exceeds u");
    if (refresh_every < 1) throw std::invalid_argument("refresh_every must be >= 1");
    if (!(tol >= 0.0)) throw std::invalid_argument("tol must be >= 0");
  }

  std::map<std::string, std::string> to_map() const {
    auto num = [](double x) {
      std::ostringstream os;
      os.precision(17);
      os << x;
      return os.str();
    };
    return {
        {"sigma", num(sigma)},
        {"theta", num(theta)},
        {"mu", num(mu)},
        {"lambda", num(lambda)},
        {"tau", num(tau)},
        {"eta_s", num(eta_s)},
        {"eta_d", num(eta_d)},
        {"u", std::to_string(u)},
        {"v", std::to_string(v)},
        {"beta", std::to_string(beta)},
        {"r", std::to_string(r)},
        {"refresh_every", std::to_string(refresh_every)},
        {"max_alt_iters", std::to_string(max_alt_iters)},
        {"tol", num(tol)},
        {"max_existing", std::to_string(max_existing)},
        {"label_projection", label_projection ? "true" : "false"},
        {"paper_sign_z", paper_sign_z ? "true" : "false"},
        {"monotone_be", monotone_be ? "true" : "false"},
        {"seed", std::to_string(seed)},
    };
  }

  /// Assigns one field by name; returns false for an unknown key.
  bool set(const std::string& key, const std::string& value) {
    auto real = [&](double& dst) {
      std::size_t pos = 0;
      double x = 0;
      try {
        x = std::stod(value, &pos);
      } catch (const std::exception&) {
        pos = 0;
      }
      if (pos == 0 || pos != value.size())
        throw std::invalid_argument("unparsable value for " + key + ": '" + value + "'");
      dst = x;
    };
    auto integer = [&](auto& dst) {
      std::size_t pos = 0;
      unsigned long long x = 0;
      try {
        if (!value.empty() && value[0] == '-') throw std::invalid_argument("negative");
        x = std::stoull(value, &pos);
      } catch (const std::exception&) {
        pos = 0;
      }
      if (pos == 0 || pos != value.size())
        throw std::invalid_argument("unparsable value for " + key + ": '" + value + "'");
      dst = static_cast<std::remove_reference_t<decltype(dst)>>(x);
    };
    auto boolean = [&](bool& dst) {
      if (value == "true" || value == "1") dst = true;
      else if (value == "false" || value == "0") dst = false;
      else throw std::invalid_argument("unparsable value for " + key + ": '" + value + "'");
    };
    if (key == "sigma") real(sigma);
    else if (key == "theta") real(theta);
    else if (key == "mu") real(mu);
    else if (key == "lambda") real(lambda);
    else if (key == "tau") real(tau);
    else if (key == "eta_s") real(eta_s);
    else if (key == "eta_d") real(eta_d);
    else if (key == "u") integer(u);
    else if (key == "v") integer(v);
    else if (key == "beta") integer(beta);
    else if (key == "r") integer(r);
    else if (key == "refresh_every") integer(refresh_every);
    else if (key == "max_alt_iters") integer(max_alt_iters);
    else if (key == "tol") real(tol);
    else if (key == "max_existing") integer(max_existing);
    else if (key == "label_projection") boolean(label_projection);
    else if (key == "paper_sign_z") boolean(paper_sign_z);
    else if (key == "monotone_be") boolean(monotone_be);
    else if (key == "seed") integer(seed);
    else return false;
    return true;
  }

  friend bool operator==(const HyperParams&, const HyperParams&) = default;
};

}  // namespace foh
