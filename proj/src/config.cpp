#include "garec/config.hpp"

#include <charconv>
#include <fstream>
#include <string>

#include <json.hpp>

#include "garec/error.hpp"

namespace garec {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing junk");
    return v;
  } catch (const std::exception&) {
    throw Error("config: key '" + key + "' needs a number, got '" + value + "'");
  }
}

int parse_int(const std::string& key, const std::string& value) {
  int v = 0;
  auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc{} || p != value.data() + value.size())
    throw Error("config: key '" + key + "' needs an integer, got '" + value +
                "'");
  return v;
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc{} || p != value.data() + value.size())
    throw Error("config: key '" + key +
                "' needs an unsigned integer, got '" + value + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw Error("config: key '" + key + "' needs true or false, got '" + value +
              "'");
}

}  // namespace

void apply_config_line(TrainConfig& cfg, const std::string& key,
                       const std::string& value) {
  if (key == "learning_rate") cfg.learning_rate = parse_double(key, value);
  else if (key == "batch_size") cfg.batch_size = parse_int(key, value);
  else if (key == "max_epochs") cfg.max_epochs = parse_int(key, value);
  else if (key == "patience") cfg.patience = parse_int(key, value);
  else if (key == "seed") cfg.seed = parse_u64(key, value);
  else if (key == "freeze_factors") cfg.freeze_factors = parse_bool(key, value);
  else if (key == "T") cfg.cap = parse_int(key, value);
  else if (key == "d") cfg.d = parse_int(key, value);
  else if (key == "d_prime") cfg.d_prime = parse_int(key, value);
  else if (key == "activation") cfg.activation = activation_from_string(value);
  else if (key == "validation_fraction")
    cfg.validation_fraction = parse_double(key, value);
  else if (key == "shared_qk") cfg.shared_qk = parse_bool(key, value);
  else if (key == "mlp_h1") cfg.mlp_h1 = parse_int(key, value);
  else if (key == "mlp_h2") cfg.mlp_h2 = parse_int(key, value);
  else if (key == "threads") cfg.threads = parse_int(key, value);
  else if (key == "record_seconds") cfg.record_seconds = parse_bool(key, value);
  else if (key == "nmf_max_iters") cfg.nmf_max_iters = parse_int(key, value);
  else if (key == "nmf_rel_tol") cfg.nmf_rel_tol = parse_double(key, value);
  else if (key == "nmf_epsilon") cfg.nmf_epsilon = parse_double(key, value);
  else throw Error("config: unknown key '" + key + "'");
}

void apply_config_file(TrainConfig& cfg, const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("config: cannot open " + path);
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    const std::size_t eq = stripped.find('=');
    if (eq == std::string::npos)
      throw Error(path + ":" + std::to_string(line_no) +
                  ": expected 'key = value'");
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (key.empty() || value.empty())
      throw Error(path + ":" + std::to_string(line_no) +
                  ": expected 'key = value'");
    try {
      apply_config_line(cfg, key, value);
    } catch (const Error& e) {
      throw Error(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

std::string config_echo_json(const TrainConfig& cfg) {
  nlohmann::json j;
  j["learning_rate"] = cfg.learning_rate;
  j["batch_size"] = cfg.batch_size;
  j["max_epochs"] = cfg.max_epochs;
  j["patience"] = cfg.patience;
  j["seed"] = cfg.seed;
  j["freeze_factors"] = cfg.freeze_factors;
  j["T"] = cfg.cap;
  j["d"] = cfg.d;
  j["d_prime"] = cfg.d_prime;
  j["activation"] = to_string(cfg.activation);
  j["validation_fraction"] = cfg.validation_fraction;
  j["shared_qk"] = cfg.shared_qk;
  j["mlp_h1"] = cfg.mlp_h1;
  j["mlp_h2"] = cfg.mlp_h2;
  j["threads"] = cfg.threads;
  j["record_seconds"] = cfg.record_seconds;
  j["nmf_max_iters"] = cfg.nmf_max_iters;
  j["nmf_rel_tol"] = cfg.nmf_rel_tol;
  j["nmf_epsilon"] = cfg.nmf_epsilon;
  return j.dump();
}

}  // namespace garec
