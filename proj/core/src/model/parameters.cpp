#include "icefuse/model/parameters.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <string>

#include "icefuse/common/error.hpp"
#include "icefuse/common/rng.hpp"

namespace icefuse::model {

std::vector<ParamSpec> parameter_specs(const ModelConfig& cfg) {
  cfg.validate();
  const std::size_t f = cfg.hidden;
  const std::size_t d = cfg.token_dim();
  const std::size_t wide = cfg.mlp_ratio * f;
  std::vector<ParamSpec> specs{
      {"embed.w", {cfg.patch_features(), f}, ParamKind::Dense},
      {"embed.b", {f}, ParamKind::Bias},
  };
  auto attention = [&](const std::string& p, std::size_t dim) {
    specs.push_back({p + ".norm.g", {dim}, ParamKind::NormGain});
    specs.push_back({p + ".norm.b", {dim}, ParamKind::NormBias});
    for (const char* m : {".wq", ".wk", ".wv", ".wo"}) specs.push_back({p + m, {dim, dim}, ParamKind::Attention});
  };
  auto mlp = [&](const std::string& p) {
    specs.push_back({p + ".norm.g", {f}, ParamKind::NormGain});
    specs.push_back({p + ".norm.b", {f}, ParamKind::NormBias});
    specs.push_back({p + ".w1", {f, wide}, ParamKind::Dense});
    specs.push_back({p + ".b1", {wide}, ParamKind::Bias});
    specs.push_back({p + ".w2", {wide, f}, ParamKind::Dense});
    specs.push_back({p + ".b2", {f}, ParamKind::Bias});
  };
  for (std::size_t s = 0; s < cfg.stages; ++s) {
    const std::string p = "stage" + std::to_string(s);
    attention(p + ".glo", d);
    mlp(p + ".mlp1");
    attention(p + ".lo", f);
    mlp(p + ".mlp2");
  }
  for (std::size_t s = 0; s < cfg.stages; ++s)
    specs.push_back({"head.w" + std::to_string(s), {f, cfg.patch * cfg.patch}, ParamKind::Dense});
  specs.push_back({"head.b", {cfg.patch * cfg.patch}, ParamKind::Bias});
  return specs;
}

bool is_variational(const ParamSpec& spec) noexcept { return spec.kind == ParamKind::Attention; }

namespace {

nk::Tensor init_tensor(const ParamSpec& spec, std::uint64_t seed) {
  switch (spec.kind) {
    case ParamKind::NormGain: return nk::Tensor(spec.shape, 1.0);
    case ParamKind::Bias:
    case ParamKind::NormBias: return nk::Tensor(spec.shape, 0.0);
    case ParamKind::Attention:
    case ParamKind::Dense: break;
  }
  nk::Tensor t(spec.shape);
  const CounterRng rng(derive_key(seed, spec.name));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = kInitStd * rng.normal(i);
  return t;
}

}  // namespace

ParameterSet init_deterministic(const ModelConfig& cfg, std::uint64_t seed) {
  ParameterSet out;
  for (const auto& spec : parameter_specs(cfg)) out.emplace(spec.name, init_tensor(spec, seed));
  return out;
}

ParameterSet init_variational(const ModelConfig& cfg, std::uint64_t seed) {
  ParameterSet out;
  for (const auto& spec : parameter_specs(cfg)) {
    if (is_variational(spec)) {
      out.emplace(spec.name + ".mu", init_tensor(spec, seed));
      out.emplace(spec.name + ".rho", nk::Tensor(spec.shape, kInitRho));
    } else {
      out.emplace(spec.name, init_tensor(spec, seed));
    }
  }
  return out;
}

Variant detect_variant(const ParameterSet& params) {
  for (const auto& [name, _] : params)
    if (name.ends_with(".mu")) return Variant::Variational;
  return Variant::Deterministic;
}

void check_complete(const ParameterSet& params, const ModelConfig& cfg, Variant variant) {
  std::size_t expected = 0;
  auto require = [&](const std::string& name, const nk::Shape& shape) {
    const auto it = params.find(name);
    if (it == params.end()) throw ConfigError("weights missing tensor '" + name + "'");
    if (it->second.shape() != shape)
      throw ConfigError("tensor '" + name + "' has shape " + nk::shape_string(it->second.shape()) + ", expected " +
                        nk::shape_string(shape));
    ++expected;
  };
  for (const auto& spec : parameter_specs(cfg)) {
    if (variant == Variant::Variational && is_variational(spec)) {
      require(spec.name + ".mu", spec.shape);
      require(spec.name + ".rho", spec.shape);
    } else {
      require(spec.name, spec.shape);
    }
  }
  if (params.size() != expected)
    throw ConfigError("weights contain " + std::to_string(params.size() - expected) +
                      " tensor(s) not used by this model config");
}

ParameterSet mean_weights(const ParameterSet& params) {
  ParameterSet out;
  for (const auto& [name, t] : params) {
    if (name.ends_with(".rho")) continue;
    if (name.ends_with(".mu"))
      out.emplace(name.substr(0, name.size() - 3), t);
    else
      out.emplace(name, t);
  }
  return out;
}

bool bitwise_equal(const ParameterSet& a, const ParameterSet& b) {
  if (a.size() != b.size()) return false;
  for (auto ia = a.begin(), ib = b.begin(); ia != a.end(); ++ia, ++ib)
    if (ia->first != ib->first || !ia->second.bitwise_equal(ib->second)) return false;
  return true;
}

namespace {

constexpr std::array<char, 4> kMagic{'S', 'I', 'C', 'W'};

template <typename U>
void put(std::string& buf, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

template <typename U>
U take(std::istream& in, const char* what) {
  std::array<unsigned char, sizeof(U)> b{};
  in.read(reinterpret_cast<char*>(b.data()), sizeof(U));
  if (in.gcount() != static_cast<std::streamsize>(sizeof(U)))
    throw FormatError(std::string("SICW: truncated while reading ") + what);
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(b[i]) << (8 * i));
  return v;
}

}  // namespace

void write_checkpoint(const ParameterSet& params, std::ostream& out) {
  std::string buf(kMagic.begin(), kMagic.end());
  put<std::uint16_t>(buf, kSicwVersion);
  put<std::uint16_t>(buf, 0);
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    put<std::uint32_t>(buf, static_cast<std::uint32_t>(name.size()));
    buf += name;
    put<std::uint32_t>(buf, static_cast<std::uint32_t>(t.rank()));
    for (auto e : t.shape()) put<std::uint64_t>(buf, e);
    for (double v : t.data()) put<std::uint64_t>(buf, std::bit_cast<std::uint64_t>(v));
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw FormatError("SICW: write failed");
}

void write_checkpoint(const ParameterSet& params, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open for writing: " + path.string());
  write_checkpoint(params, out);
}

ParameterSet read_checkpoint(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), 4);
  if (in.gcount() != 4 || magic != kMagic) throw FormatError("SICW: bad magic");
  const auto version = take<std::uint16_t>(in, "version");
  if (version != kSicwVersion) throw FormatError("SICW: unsupported version " + std::to_string(version));
  take<std::uint16_t>(in, "reserved");
  const auto count = take<std::uint32_t>(in, "count");
  ParameterSet out;
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto len = take<std::uint32_t>(in, "name length");
    if (len > (1u << 16)) throw FormatError("SICW: implausible name length");
    std::string name(len, '\0');
    in.read(name.data(), len);
    if (in.gcount() != static_cast<std::streamsize>(len)) throw FormatError("SICW: truncated name");
    const auto rank = take<std::uint32_t>(in, "rank");
    if (rank > 8) throw FormatError("SICW: implausible rank for '" + name + "'");
    nk::Shape shape(rank);
    std::uint64_t total = 1;
    for (auto& e : shape) {
      const auto ext = take<std::uint64_t>(in, "extent");
      if (ext == 0 || ext > (std::uint64_t{1} << 32)) throw FormatError("SICW: bad extent for '" + name + "'");
      e = static_cast<std::size_t>(ext);
      total *= ext;
      if (total > (std::uint64_t{1} << 34)) throw FormatError("SICW: tensor too large");
    }
    std::vector<double> data(static_cast<std::size_t>(total));
    for (auto& v : data) v = std::bit_cast<double>(take<std::uint64_t>(in, "payload"));
    if (!out.emplace(std::move(name), nk::Tensor(std::move(shape), std::move(data))).second)
      throw FormatError("SICW: duplicate tensor name");
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("SICW: trailing bytes");
  return out;
}

ParameterSet read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint: " + path.string());
  try {
    return read_checkpoint(in);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace icefuse::model
