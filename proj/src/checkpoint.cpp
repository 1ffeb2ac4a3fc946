#include "garec/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "garec/error.hpp"

namespace garec {

namespace {

constexpr char kMagic[5] = {'G', 'A', 'R', 'E', 'C'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kKindFactors = 1;
constexpr std::uint32_t kKindModel = 2;

class Writer {
 public:
  explicit Writer(const std::string& path) : os_(path, std::ios::binary) {
    if (!os_) throw Error("checkpoint: cannot open " + path + " for writing");
  }
  void bytes(const void* p, std::size_t n) {
    os_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  }
  template <typename T>
  void pod(T v) {
    bytes(&v, sizeof v);
  }
  void matrix(const Eigen::MatrixXd& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) pod<double>(m(r, c));
  }
  void vector(const Eigen::VectorXd& v) {
    for (Eigen::Index r = 0; r < v.size(); ++r) pod<double>(v[r]);
  }
  void finish(const std::string& path) {
    os_.flush();
    if (!os_) throw Error("checkpoint: write failed for " + path);
  }

 private:
  std::ofstream os_;
};

class Reader {
 public:
  explicit Reader(const std::string& path) : os_(path, std::ios::binary), path_(path) {
    if (!os_) throw Error("checkpoint: cannot open " + path);
  }
  void bytes(void* p, std::size_t n) {
    os_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (os_.gcount() != static_cast<std::streamsize>(n))
      throw Error("checkpoint: truncated file " + path_);
  }
  template <typename T>
  T pod() {
    T v;
    bytes(&v, sizeof v);
    return v;
  }
  Eigen::MatrixXd matrix(Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = pod<double>();
    return m;
  }
  Eigen::VectorXd vector(Eigen::Index n) {
    Eigen::VectorXd v(n);
    for (Eigen::Index r = 0; r < n; ++r) v[r] = pod<double>();
    return v;
  }
  const std::string& path() const { return path_; }

 private:
  std::ifstream os_;
  std::string path_;
};

void write_header(Writer& w, std::uint32_t kind) {
  w.bytes(kMagic, sizeof kMagic);
  w.pod<std::uint32_t>(kVersion);
  w.pod<std::uint32_t>(kind);
}

void read_header(Reader& r, std::uint32_t want_kind) {
  char magic[5];
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw Error("checkpoint: " + r.path() + " is not a GAREC file");
  const auto version = r.pod<std::uint32_t>();
  if (version != kVersion)
    throw Error("checkpoint: " + r.path() + " has format version " +
                std::to_string(version) + ", this build reads version " +
                std::to_string(kVersion));
  const auto kind = r.pod<std::uint32_t>();
  if (kind != want_kind)
    throw Error("checkpoint: " + r.path() + " holds record kind " +
                std::to_string(kind) + ", expected kind " +
                std::to_string(want_kind));
}

void check_expected_d(int d, std::optional<int> expect_d,
                      const std::string& path) {
  if (expect_d && d != *expect_d)
    throw Error("checkpoint: " + path + " carries d=" + std::to_string(d) +
                " but d=" + std::to_string(*expect_d) + " was expected");
}

void write_attn(Writer& w, const AttentionParams& p) {
  w.matrix(p.w_query);
  if (p.w_key.size() != 0) w.matrix(p.w_key);
  w.matrix(p.w_self);
  w.matrix(p.w_nei);
}

AttentionParams read_attn(Reader& r, int d, int dp, bool shared_qk) {
  AttentionParams p;
  p.w_query = r.matrix(d, dp);
  if (!shared_qk) p.w_key = r.matrix(d, dp);
  p.w_self = r.matrix(d, dp);
  p.w_nei = r.matrix(dp, dp);
  return p;
}

}  // namespace

void save_factors(const FactorPair& fp, std::uint64_t seed,
                  const std::string& path) {
  Writer w(path);
  write_header(w, kKindFactors);
  w.pod<std::uint64_t>(seed);
  w.pod<std::int64_t>(fp.fu.rows());
  w.pod<std::int64_t>(fp.fi.rows());
  w.pod<std::int32_t>(fp.d);
  w.matrix(fp.fu);
  w.matrix(fp.fi);
  w.finish(path);
}

FactorPair load_factors(const std::string& path, std::optional<int> expect_d,
                        std::uint64_t* seed_out) {
  Reader r(path);
  read_header(r, kKindFactors);
  const auto seed = r.pod<std::uint64_t>();
  const auto n = r.pod<std::int64_t>();
  const auto m = r.pod<std::int64_t>();
  const auto d = r.pod<std::int32_t>();
  if (n < 1 || m < 1 || d < 1)
    throw Error("checkpoint: " + path + " has corrupt dimensions");
  check_expected_d(d, expect_d, path);
  FactorPair fp;
  fp.d = d;
  fp.fu = r.matrix(n, d);
  fp.fi = r.matrix(m, d);
  if (seed_out) *seed_out = seed;
  return fp;
}

void save_model(const ModelState& state, std::uint64_t seed,
                bool freeze_factors, const std::string& path,
                const std::string& config_echo_json) {
  state.validate();
  Writer w(path);
  write_header(w, kKindModel);
  w.pod<std::uint64_t>(seed);
  w.pod<std::uint8_t>(freeze_factors ? 1 : 0);
  w.pod<std::uint8_t>(state.user_attn.shared_qk() ? 1 : 0);
  w.pod<std::uint8_t>(static_cast<std::uint8_t>(state.update_act));
  w.pod<std::int32_t>(state.d());
  w.pod<std::int32_t>(state.d_prime());
  w.pod<std::int64_t>(state.factors.fu.rows());
  w.pod<std::int64_t>(state.factors.fi.rows());
  w.pod<double>(state.rating_min);
  w.pod<double>(state.rating_max);
  w.matrix(state.factors.fu);
  w.matrix(state.factors.fi);
  write_attn(w, state.user_attn);
  write_attn(w, state.item_attn);
  w.pod<std::int32_t>(static_cast<std::int32_t>(state.mlp.layers.size()));
  for (const MlpLayer& layer : state.mlp.layers) {
    w.pod<std::int64_t>(layer.weight.rows());
    w.pod<std::int64_t>(layer.weight.cols());
    w.matrix(layer.weight);
    w.vector(layer.bias);
  }
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(config_echo_json.size()));
  w.bytes(config_echo_json.data(), config_echo_json.size());
  w.finish(path);
}

ModelState load_model(const std::string& path, std::optional<int> expect_d,
                      std::uint64_t* seed_out, bool* freeze_out,
                      std::string* config_echo_out) {
  Reader r(path);
  read_header(r, kKindModel);
  const auto seed = r.pod<std::uint64_t>();
  const bool freeze = r.pod<std::uint8_t>() != 0;
  const bool shared_qk = r.pod<std::uint8_t>() != 0;
  const auto act_raw = r.pod<std::uint8_t>();
  if (act_raw > 2)
    throw Error("checkpoint: " + path + " has corrupt activation tag");
  const auto d = r.pod<std::int32_t>();
  const auto dp = r.pod<std::int32_t>();
  const auto n = r.pod<std::int64_t>();
  const auto m = r.pod<std::int64_t>();
  if (n < 1 || m < 1 || d < 1 || dp < 1)
    throw Error("checkpoint: " + path + " has corrupt dimensions");
  check_expected_d(d, expect_d, path);

  ModelState s;
  s.rating_min = r.pod<double>();
  s.rating_max = r.pod<double>();
  s.factors.d = d;
  s.factors.fu = r.matrix(n, d);
  s.factors.fi = r.matrix(m, d);
  s.user_attn = read_attn(r, d, dp, shared_qk);
  s.item_attn = read_attn(r, d, dp, shared_qk);
  const auto n_layers = r.pod<std::int32_t>();
  if (n_layers < 1 || n_layers > 64)
    throw Error("checkpoint: " + path + " has corrupt layer count");
  for (std::int32_t l = 0; l < n_layers; ++l) {
    const auto rows = r.pod<std::int64_t>();
    const auto cols = r.pod<std::int64_t>();
    if (rows < 1 || cols < 1)
      throw Error("checkpoint: " + path + " has corrupt layer dimensions");
    MlpLayer layer;
    layer.weight = r.matrix(rows, cols);
    layer.bias = r.vector(cols);
    s.mlp.layers.push_back(std::move(layer));
  }
  s.update_act = static_cast<Activation>(act_raw);
  const auto echo_len = r.pod<std::uint32_t>();
  std::string echo(echo_len, '\0');
  if (echo_len > 0) r.bytes(echo.data(), echo_len);

  s.validate();
  if (seed_out) *seed_out = seed;
  if (freeze_out) *freeze_out = freeze;
  if (config_echo_out) *config_echo_out = std::move(echo);
  return s;
}

}  // namespace garec
