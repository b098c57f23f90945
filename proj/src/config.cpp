#include "cvtslam/experiment.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <functional>
#include <map>
#include <stdexcept>

namespace cvtslam {

namespace {

std::string unquote(std::string s) {
  if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) return s.substr(1, s.size() - 2);
  return s;
}

double to_double(const std::string& key, const std::string& s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw std::invalid_argument("config key '" + key + "': expected a number, got '" + s + "'");
}

long long to_integer(const std::string& key, const std::string& s) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw std::invalid_argument("config key '" + key + "': expected an integer, got '" + s + "'");
}

using Values = std::vector<std::string>;

const std::string& scalar(const std::string& key, const Values& v) {
  if (v.size() != 1) throw std::invalid_argument("config key '" + key + "': expected a single value");
  return v.front();
}

template <int N>
Eigen::Matrix<double, N, 1> vec(const std::string& key, const Values& v) {
  if (v.size() != N) throw std::invalid_argument("config key '" + key + "': expected " + std::to_string(N) + " values");
  Eigen::Matrix<double, N, 1> out;
  for (int i = 0; i < N; ++i) out[i] = to_double(key, v[static_cast<std::size_t>(i)]);
  return out;
}

}  // namespace

ExperimentConfig parse_experiment_config(std::istream& is, const std::string& source) {
  ExperimentConfig cfg;
  auto& sc = cfg.scene;
  auto& est = cfg.estimator;
  auto& noise = est.noise;

  auto num = [](double& target) { return [&target](const std::string& k, const Values& v) { target = to_double(k, scalar(k, v)); }; };
  auto integer = [](auto& target) {
    return [&target](const std::string& k, const Values& v) {
      target = static_cast<std::remove_reference_t<decltype(target)>>(to_integer(k, scalar(k, v)));
    };
  };
  auto degrees = [](double& target) {
    return [&target](const std::string& k, const Values& v) { target = deg2rad(to_double(k, scalar(k, v))); };
  };

  std::map<std::string, std::function<void(const std::string&, const Values&)>> handlers{
      {"seed", [&](const std::string& k, const Values& v) { cfg.seed = static_cast<std::uint64_t>(std::stoull(scalar(k, v))); }},
      {"densities",
       [&](const std::string& k, const Values& v) {
         cfg.densities.clear();
         for (const auto& s : v) cfg.densities.push_back(static_cast<int>(to_integer(k, s)));
       }},
      {"runs", integer(cfg.runs)},
      {"slots", integer(cfg.slots)},
      {"parallel", integer(cfg.parallel)},
      {"dt", num(est.dt)},
      {"particles_vehicle", integer(est.particles_vehicle)},
      {"particles_cvt", integer(est.particles_cvt)},

      {"noise.sigma_d", num(noise.sigma_d)},
      {"noise.sigma_alpha_deg", degrees(noise.sigma_alpha)},
      {"noise.sigma_eps", num(noise.sigma_eps)},
      {"noise.sigma_v", num(noise.sigma_v)},
      {"noise.sigma_omega_deg", degrees(noise.sigma_omega)},
      {"noise.truncation", num(noise.truncation)},

      {"scene.bs_position", [&](const std::string& k, const Values& v) { sc.bs_position = vec<3>(k, v); }},
      {"scene.road_x", [&](const std::string& k, const Values& v) { sc.road_x = vec<2>(k, v); }},
      {"scene.road_y", [&](const std::string& k, const Values& v) { sc.road_y = vec<2>(k, v); }},
      {"scene.lanes", integer(sc.lanes)},
      {"scene.lane_width", num(sc.lane_width)},
      {"scene.antenna_height", num(sc.antenna_height)},
      {"scene.facades_y",
       [&](const std::string& k, const Values& v) {
         sc.facades_y.clear();
         for (const auto& s : v)
           if (!s.empty()) sc.facades_y.push_back(to_double(k, s));
       }},
      {"scene.facade_z", [&](const std::string& k, const Values& v) { sc.facade_z = vec<2>(k, v); }},
      {"scene.speed", num(sc.speed)},
      {"scene.spawn_forward", [&](const std::string& k, const Values& v) { sc.spawn_forward = vec<2>(k, v); }},
      {"scene.spawn_backward", [&](const std::string& k, const Values& v) { sc.spawn_backward = vec<2>(k, v); }},
      {"scene.spawn_headway", num(sc.spawn_headway)},
      {"scene.spawn_retries", integer(sc.spawn_retries)},

      {"estimator.ap_lambda", num(est.ap.lambda)},
      {"estimator.ap_iterations", integer(est.ap.n_iter)},
      {"estimator.ap_preference",
       [&](const std::string& k, const Values& v) {
         const auto s = unquote(scalar(k, v));
         est.ap.preference.reset();
         if (s == "median")
           est.ap.rule = PreferenceRule::median;
         else if (s == "minimum")
           est.ap.rule = PreferenceRule::minimum;
         else
           est.ap.preference = to_double(k, s);
       }},
      {"estimator.ap_damping",
       [&](const std::string& k, const Values& v) {
         const auto s = unquote(scalar(k, v));
         if (s == "conventional")
           est.ap.damping = DampingMode::conventional;
         else if (s == "literal")
           est.ap.damping = DampingMode::literal;
         else
           throw std::invalid_argument("config key '" + k + "': expected conventional or literal");
       }},
      {"estimator.kernel_scale",
       [&](const std::string& k, const Values& v) {
         const auto s = unquote(scalar(k, v));
         est.kernel_scale = s == "adaptive" ? std::nullopt : std::optional<double>(to_double(k, s));
       }},
      {"estimator.min_kernel_scale", num(est.min_kernel_scale)},
      {"estimator.cvt_init_spread", num(est.cvt_init_spread)},
      {"estimator.cvt_roughening", num(est.cvt_roughening)},
      {"estimator.ess_threshold", num(est.resample.ess_threshold)},
      {"estimator.velocity_noise",
       [&](const std::string& k, const Values& v) {
         const auto s = unquote(scalar(k, v));
         if (s == "heading")
           est.velocity_noise = VelocityNoiseMode::heading_relative;
         else if (s == "absolute")
           est.velocity_noise = VelocityNoiseMode::absolute;
         else
           throw std::invalid_argument("config key '" + k + "': expected heading or absolute");
       }},
  };

  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigTOML().from_config(is);
  } catch (const CLI::Error& e) {
    throw std::invalid_argument(source + ": " + e.what());
  }
  for (const auto& item : items) {
    if (item.name == "++" || item.name == "--") continue;
    std::string key = item.fullname();
    if (key.rfind("default.", 0) == 0) key.erase(0, 8);
    const auto it = handlers.find(key);
    if (it == handlers.end()) throw std::invalid_argument(source + ": unknown config key '" + key + "'");
    Values values;
    for (const auto& s : item.inputs) values.push_back(unquote(s));
    try {
      it->second(key, values);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(source + ": " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config " + path.string());
  return parse_experiment_config(is, path.string());
}

}  // namespace cvtslam
