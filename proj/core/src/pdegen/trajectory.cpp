// Copyright (c) 2026 The unipde Authors
// SPDX-License-Identifier: Apache-2.0

#include "unipde/pdegen/trajectory.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "unipde/common.hpp"
#include "unipde/pdegen/initial_conditions.hpp"
#include "unipde/pdegen/solvers.hpp"

namespace unipde::pde {
namespace {

using json = nlohmann::json;

struct FamilyInfo {
  Family family;
  const char* name;
  int dim;
  std::vector<std::string> channels;
  std::size_t timesteps;
  double t_final;
};

const std::vector<FamilyInfo>& family_table() {
  static const std::vector<FamilyInfo> table = {
      {Family::kAdvection, "advection", 1, {"u"}, 41, 2.0},
      {Family::kBurgers, "burgers", 1, {"u"}, 41, 2.0},
      {Family::kDiffusionSorption, "diffusion_sorption", 1, {"u"}, 21, 500.0},
      {Family::kReactionDiffusion1D, "reaction_diffusion_1d", 1, {"u"}, 21, 1.0},
      {Family::kReactionDiffusion2D, "reaction_diffusion_2d", 2, {"u1", "u2"}, 101, 5.0},
      {Family::kShallowWater, "shallow_water", 2, {"h", "u1", "u2"}, 101, 1.0},
      {Family::kExternal, "external", 0, {}, 0, 0.0},
  };
  return table;
}

const FamilyInfo& info(Family f) {
  for (const auto& e : family_table()) {
    if (e.family == f) return e;
  }
  throw std::invalid_argument("unknown family");
}

double coef(const std::map<std::string, double>& c, const std::string& key) {
  auto it = c.find(key);
  if (it == c.end()) throw ConfigError("missing coefficient '" + key + "'");
  return it->second;
}

std::vector<double> subsample(const gk::Tensor& frames, std::size_t steps, std::size_t fine, std::size_t n) {
  const std::size_t stride = fine / n;
  std::vector<double> out(steps * n);
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t j = 0; j < n; ++j) out[t * n + j] = frames[t * fine + j * stride];
  }
  return out;
}

std::vector<double> solve_one(const GenSpec& spec, const std::map<std::string, double>& c, std::size_t steps, double dt,
                              std::uint64_t seed) {
  const std::size_t n = spec.n;
  SinusoidOptions sine;
  switch (spec.family) {
    case Family::kAdvection: {
      auto u0 = sample_ic_sinusoid(seed, n, sine);
      auto out = solve_advection(u0, coef(c, "beta"), steps, dt);
      return {out.data().begin(), out.data().end()};
    }
    case Family::kBurgers: {
      const std::size_t fine = spec.solve_n ? spec.solve_n : std::max<std::size_t>(n, 512);
      if (fine % n != 0 || !is_pow2(fine)) throw ConfigError("burgers: solve_n must be a power-of-two multiple of n");
      auto u0 = sample_ic_sinusoid(seed, fine, sine);
      auto out = solve_burgers(u0, coef(c, "nu"), steps, dt);
      return subsample(out, steps, fine, n);
    }
    case Family::kDiffusionSorption: {
      auto u0 = sample_ic_sinusoid(seed, n, sine);
      rescale_to_range(u0, 0.0, 0.2);
      SorptionParams p;
      p.diffusivity = coef(c, "D");
      auto out = solve_diffusion_sorption(u0, p, steps, dt);
      return {out.data().begin(), out.data().end()};
    }
    case Family::kReactionDiffusion1D: {
      auto u0 = sample_ic_sinusoid(seed, n, sine);
      rescale_to_range(u0, 0.0, 1.0);
      auto out = solve_reaction_diffusion_1d(u0, coef(c, "nu"), coef(c, "rho"), steps, dt);
      return {out.data().begin(), out.data().end()};
    }
    case Family::kReactionDiffusion2D: {
      gk::Tensor u0({2, n, n});
      for (std::size_t ch = 0; ch < 2; ++ch) {
        auto f = sample_ic_grf(derive_seed(seed, ch), n, 0.1);
        std::copy(f.data().begin(), f.data().end(), u0.ptr() + ch * n * n);
      }
      auto out = solve_reaction_diffusion_2d(u0, coef(c, "nu1"), coef(c, "nu2"), coef(c, "k"), steps, dt);
      return {out.data().begin(), out.data().end()};
    }
    case Family::kShallowWater: {
      std::mt19937_64 rng(seed);
      std::uniform_real_distribution<double> rdist(0.3, 0.7), cdist(-0.5, 0.5);
      const double radius = rdist(rng);
      const double cx = cdist(rng), cy = cdist(rng);
      ShallowWaterParams p;
      p.gravity = coef(c, "g");
      p.boundary = spec.periodic ? SweBoundary::kPeriodic : SweBoundary::kReflective;
      const auto x = cell_centers(n, p.domain_lo, p.domain_hi);
      gk::Tensor h({n, n}), zero({n, n});
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t col = 0; col < n; ++col) {
          const double dx = x[col] - cx, dy = x[r] - cy;
          h[r * n + col] = std::sqrt(dx * dx + dy * dy) < radius ? 2.0 : 1.0;
        }
      }
      auto out = solve_shallow_water(h, zero, zero, zero, p, steps, dt);
      return {out.data().begin(), out.data().end()};
    }
    case Family::kExternal:
      break;
  }
  throw ConfigError("family '" + family_name(spec.family) + "' cannot be generated; ingest it from a trajectory file");
}

template <typename T>
void put(std::string& out, T v) {
  if constexpr (std::is_floating_point_v<T>) {
    using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
    put(out, std::bit_cast<U>(v));
  } else {
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFF));
  }
}

template <typename T>
T get(std::istream& in, const std::string& what) {
  unsigned char buf[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(buf), sizeof(T))) throw FormatError("trajectory file truncated while reading " + what);
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return static_cast<T>(v);
}

json header_json(const TrajectorySet& s) {
  json j;
  j["family"] = family_name(s.family);
  j["d"] = s.dim;
  j["n"] = s.n;
  j["T"] = s.timesteps;
  j["num_traj"] = s.num_traj;
  j["channels"] = s.channels;
  j["coefficients"] = s.coefficients;
  json b = json::array();
  for (const auto& [lo, hi] : s.bounds) b.push_back({lo, hi});
  j["bounds"] = b;
  j["dt"] = s.dt;
  j["seed"] = s.seed;
  json times = json::array();
  for (std::size_t t = 0; t < s.timesteps; ++t) times.push_back(s.dt * static_cast<double>(t));
  j["times"] = times;
  return j;
}

TrajectorySet read_header(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4)) throw FormatError("trajectory file truncated: missing magic");
  if (std::memcmp(magic, kTrajectoryMagic, 4) != 0) throw FormatError("not a trajectory file (bad magic)");
  const auto version = get<std::uint32_t>(in, "version");
  if (version != kTrajectoryVersion) throw FormatError("unsupported trajectory file version " + std::to_string(version));
  const auto len = get<std::uint64_t>(in, "header length");
  if (len > (1ULL << 30)) throw FormatError("trajectory header length is implausible");
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) throw FormatError("trajectory file truncated in header");
  TrajectorySet s;
  try {
    const json j = json::parse(text);
    s.family = parse_family(j.at("family").get<std::string>());
    s.dim = j.at("d").get<int>();
    s.n = j.at("n").get<std::size_t>();
    s.timesteps = j.at("T").get<std::size_t>();
    s.num_traj = j.at("num_traj").get<std::size_t>();
    s.channels = j.at("channels").get<std::vector<std::string>>();
    s.coefficients = j.at("coefficients").get<std::map<std::string, double>>();
    for (const auto& b : j.at("bounds")) s.bounds.emplace_back(b.at(0).get<double>(), b.at(1).get<double>());
    s.dt = j.at("dt").get<double>();
    s.seed = j.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed trajectory header: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("malformed trajectory header: ") + e.what());
  }
  if (s.dim != 1 && s.dim != 2) throw FormatError("trajectory header: d must be 1 or 2");
  return s;
}

}  // namespace

std::string family_name(Family f) { return info(f).name; }

Family parse_family(const std::string& name) {
  for (const auto& e : family_table()) {
    if (name == e.name) return e.family;
  }
  throw ConfigError("unknown PDE family '" + name + "'");
}

int family_dim(Family f) { return info(f).dim; }
std::vector<std::string> family_channels(Family f) { return info(f).channels; }
std::size_t default_timesteps(Family f) { return info(f).timesteps; }
double default_t_final(Family f) { return info(f).t_final; }

std::map<std::string, double> default_coefficients(Family f) {
  switch (f) {
    case Family::kAdvection: return {{"beta", 0.4}};
    case Family::kBurgers: return {{"nu", 0.001}};
    case Family::kDiffusionSorption: return {{"D", 5e-4}};
    case Family::kReactionDiffusion1D: return {{"nu", 0.5}, {"rho", 1.0}};
    case Family::kReactionDiffusion2D: return {{"nu1", 1e-3}, {"nu2", 5e-3}, {"k", 5e-3}};
    case Family::kShallowWater: return {{"g", 1.0}};
    case Family::kExternal: return {};
  }
  return {};
}

void TrajectorySet::validate() const {
  if (data.size() != num_traj * traj_size()) {
    throw FormatError("trajectory set holds " + std::to_string(data.size()) + " values, header implies " +
                      std::to_string(num_traj * traj_size()));
  }
  for (float v : data) {
    if (!std::isfinite(v)) throw FormatError("trajectory set contains non-finite values");
  }
}

TrajectorySet TrajectorySet::subset(std::size_t begin, std::size_t end) const {
  if (begin > end || end > num_traj) throw std::out_of_range("trajectory subset out of range");
  TrajectorySet s = *this;
  s.num_traj = end - begin;
  s.data.assign(data.begin() + static_cast<std::ptrdiff_t>(begin * traj_size()),
                data.begin() + static_cast<std::ptrdiff_t>(end * traj_size()));
  return s;
}

TrajectorySet generate_family(const GenSpec& spec) {
  if (spec.family == Family::kExternal) throw ConfigError("external data is ingested from files, not generated");
  if (!is_pow2(spec.n) || spec.n < 4) throw ConfigError("grid size n must be a power of two >= 4");
  TrajectorySet s;
  s.family = spec.family;
  s.dim = family_dim(spec.family);
  s.n = spec.n;
  s.timesteps = spec.timesteps ? spec.timesteps : default_timesteps(spec.family);
  if (s.timesteps < 2) throw ConfigError("timesteps must be >= 2");
  s.num_traj = spec.num_traj;
  s.channels = family_channels(spec.family);
  s.coefficients = default_coefficients(spec.family);
  for (const auto& [k, v] : spec.coefficients) {
    if (!s.coefficients.count(k)) throw ConfigError("family " + family_name(spec.family) + " has no coefficient '" + k + "'");
    s.coefficients[k] = v;
  }
  const double t_final = spec.t_final > 0.0 ? spec.t_final : default_t_final(spec.family);
  s.dt = t_final / static_cast<double>(s.timesteps - 1);
  s.seed = spec.seed;
  switch (spec.family) {
    case Family::kReactionDiffusion2D: s.bounds = {{-1.0, 1.0}, {-1.0, 1.0}}; break;
    case Family::kShallowWater: s.bounds = {{-2.5, 2.5}, {-2.5, 2.5}}; break;
    default: s.bounds = {{0.0, 1.0}}; break;
  }
  s.data.assign(s.num_traj * s.traj_size(), 0.0f);
  std::vector<std::string> errors(s.num_traj);
  parallel_for(s.num_traj, [&](std::size_t i) {
    try {
      const auto vals = solve_one(spec, s.coefficients, s.timesteps, s.dt, derive_seed(spec.seed, i));
      float* dst = s.data.data() + i * s.traj_size();
      for (std::size_t k = 0; k < vals.size(); ++k) dst[k] = static_cast<float>(vals[k]);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });
  for (std::size_t i = 0; i < s.num_traj; ++i) {
    if (!errors[i].empty()) {
      throw NumericalError(family_name(spec.family) + " trajectory " + std::to_string(i) + ": " + errors[i]);
    }
  }
  s.validate();
  return s;
}

void write_trajectories(const TrajectorySet& set, const std::filesystem::path& path) {
  set.validate();
  const std::string header = header_json(set).dump();
  std::string buf;
  buf.reserve(16 + header.size() + set.data.size() * 4);
  buf.append(kTrajectoryMagic, 4);
  put(buf, kTrajectoryVersion);
  put(buf, static_cast<std::uint64_t>(header.size()));
  buf += header;
  for (float v : set.data) put(buf, v);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open '" + path.string() + "' for writing");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw ConfigError("failed writing '" + path.string() + "'");
}

TrajectorySet read_trajectory_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open trajectory file '" + path.string() + "'");
  return read_header(in);
}

TrajectorySet read_trajectories(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open trajectory file '" + path.string() + "'");
  TrajectorySet s = read_header(in);
  const std::size_t count = s.num_traj * s.traj_size();
  std::vector<unsigned char> raw(count * 4);
  if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
    throw FormatError("trajectory file truncated: expected " + std::to_string(count) + " float32 values");
  }
  s.data.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(raw[4 * i + b]) << (8 * b);
    s.data[i] = std::bit_cast<float>(v);
  }
  s.validate();
  return s;
}

}  // namespace unipde::pde
