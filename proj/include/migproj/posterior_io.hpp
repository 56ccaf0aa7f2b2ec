#pragma once

// Posterior draws on disk.
//
// Flat CSV: `chain,iter,param_name,value`, one row per scalar parameter per
// retained draw, parameters in `parameter_names` order.
//
// Binary cache (little-endian):
//   char[8]  "MIGPOST1"
//   u64      country count C, then per country: u32 length + ISO3 bytes
//   u64      chain count K, then K x 3 f64 acceptance rates (phi, tau, ab)
//   u64      draw count N, then per draw: u64 chain, u64 iter, (3C + 4) f64
//            in `parameter_names` order

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "migproj/csv.hpp"
#include "migproj/diagnostics.hpp"
#include "migproj/error.hpp"
#include "migproj/sampler.hpp"

namespace migproj {

static_assert(std::endian::native == std::endian::little, "binary posterior cache assumes a little-endian host");

inline std::string posterior_to_csv(const PosteriorSample& sample) {
  const auto names = parameter_names(sample.country_codes);
  std::string out = "chain,iter,param_name,value\n";
  out.reserve(out.size() + sample.draws.size() * names.size() * 32);
  for (const auto& d : sample.draws) {
    const auto v = parameter_values(d.state);
    const std::string prefix = std::to_string(d.chain) + ',' + std::to_string(d.iter) + ',';
    for (std::size_t p = 0; p < v.size(); ++p) {
      out += prefix;
      out += names[p];
      out += ',';
      csv::append_double(out, v[p]);
      out += '\n';
    }
  }
  return out;
}

inline void save_posterior_csv(const PosteriorSample& sample, const std::filesystem::path& path) {
  csv::write_file_atomic(path, posterior_to_csv(sample));
}

/// Reads the flat CSV. Acceptance rates are not part of this format and come
/// back empty.
inline PosteriorSample load_posterior_csv(const std::filesystem::path& path) {
  const std::string source = path.string();
  const auto rows = csv::read(path, {"chain", "iter", "param_name", "value"});
  PosteriorSample out;
  std::map<std::string, std::size_t> country_index;
  // First pass: country axis from mu[...] names of the first draw.
  for (const auto& row : rows) {
    const auto& name = row.fields[2];
    if (name.rfind("mu[", 0) == 0 && name.back() == ']') {
      const auto code = name.substr(3, name.size() - 4);
      if (country_index.count(code)) break;
      country_index[code] = out.country_codes.size();
      out.country_codes.push_back(code);
    }
  }
  const std::size_t C = out.country_codes.size();
  const std::size_t P = 3 * C + 4;
  if (rows.size() % P != 0) throw ParseError(source, rows.size() + 1, "row count is not a multiple of the parameter count");
  const auto names = parameter_names(out.country_codes);
  std::size_t max_chain = 0;
  for (std::size_t start = 0; start < rows.size(); start += P) {
    const auto& first = rows[start];
    const auto chain = static_cast<std::size_t>(csv::to_int(first.fields[0], source, first.line));
    const auto iter = static_cast<std::size_t>(csv::to_int(first.fields[1], source, first.line));
    std::vector<double> v(P);
    for (std::size_t p = 0; p < P; ++p) {
      const auto& row = rows[start + p];
      if (row.fields[2] != names[p] || row.fields[0] != first.fields[0] || row.fields[1] != first.fields[1]) {
        throw ParseError(source, row.line, "expected parameter " + names[p] + " of draw (" + first.fields[0] + ", " +
                                               first.fields[1] + ")");
      }
      v[p] = csv::to_double(row.fields[3], source, row.line, false);
    }
    Draw d{chain, iter, {}};
    d.state.countries.resize(C);
    for (std::size_t c = 0; c < C; ++c) d.state.countries[c] = {v[3 * c], v[3 * c + 1], v[3 * c + 2]};
    d.state.hyper.lambda = v[3 * C];
    d.state.hyper.tau = v[3 * C + 1];
    d.state.hyper.a = v[3 * C + 2];
    d.state.hyper.b = v[3 * C + 3];
    max_chain = std::max(max_chain, chain);
    out.draws.push_back(std::move(d));
  }
  out.n_chains = out.draws.empty() ? 0 : max_chain + 1;
  return out;
}

namespace detail {

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class ByteReader {
 public:
  ByteReader(const std::string& data, std::string source) : data_(data), source_(std::move(source)) {}

  template <typename T>
  T get() {
    if (pos_ + sizeof(T) > data_.size()) throw ParseError(source_, 0, "truncated posterior cache");
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string bytes(std::size_t n) {
    if (pos_ + n > data_.size()) throw ParseError(source_, 0, "truncated posterior cache");
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool at_end() const { return pos_ == data_.size(); }

 private:
  const std::string& data_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline constexpr char kPosteriorMagic[8] = {'M', 'I', 'G', 'P', 'O', 'S', 'T', '1'};

inline std::string posterior_to_binary(const PosteriorSample& sample) {
  std::string out(kPosteriorMagic, sizeof kPosteriorMagic);
  detail::put<std::uint64_t>(out, sample.country_codes.size());
  for (const auto& c : sample.country_codes) {
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(c.size()));
    out += c;
  }
  detail::put<std::uint64_t>(out, sample.n_chains);
  for (std::size_t k = 0; k < sample.n_chains; ++k) {
    const AcceptanceRates a = k < sample.acceptance.size() ? sample.acceptance[k] : AcceptanceRates{};
    detail::put(out, a.phi);
    detail::put(out, a.tau);
    detail::put(out, a.ab);
  }
  detail::put<std::uint64_t>(out, sample.draws.size());
  for (const auto& d : sample.draws) {
    detail::put<std::uint64_t>(out, d.chain);
    detail::put<std::uint64_t>(out, d.iter);
    for (const double v : parameter_values(d.state)) detail::put(out, v);
  }
  return out;
}

inline void save_posterior_binary(const PosteriorSample& sample, const std::filesystem::path& path) {
  csv::write_file_atomic(path, posterior_to_binary(sample));
}

inline PosteriorSample load_posterior_binary(const std::filesystem::path& path) {
  const std::string data = csv::read_file(path);
  detail::ByteReader in(data, path.string());
  if (in.bytes(sizeof kPosteriorMagic) != std::string(kPosteriorMagic, sizeof kPosteriorMagic)) {
    throw ParseError(path.string(), 0, "not a posterior cache (bad magic)");
  }
  PosteriorSample out;
  const auto C = in.get<std::uint64_t>();
  for (std::uint64_t c = 0; c < C; ++c) out.country_codes.push_back(in.bytes(in.get<std::uint32_t>()));
  out.n_chains = in.get<std::uint64_t>();
  for (std::size_t k = 0; k < out.n_chains; ++k) {
    AcceptanceRates a;
    a.phi = in.get<double>();
    a.tau = in.get<double>();
    a.ab = in.get<double>();
    out.acceptance.push_back(a);
  }
  const auto n = in.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < n; ++i) {
    Draw d;
    d.chain = in.get<std::uint64_t>();
    d.iter = in.get<std::uint64_t>();
    d.state.countries.resize(C);
    for (auto& p : d.state.countries) {
      p.mu = in.get<double>();
      p.phi = in.get<double>();
      p.sigma2 = in.get<double>();
    }
    d.state.hyper.lambda = in.get<double>();
    d.state.hyper.tau = in.get<double>();
    d.state.hyper.a = in.get<double>();
    d.state.hyper.b = in.get<double>();
    out.draws.push_back(std::move(d));
  }
  if (!in.at_end()) throw ParseError(path.string(), 0, "trailing bytes in posterior cache");
  return out;
}

inline std::string diagnostics_to_csv(const std::vector<ParamDiagnostic>& diags) {
  std::string out = "param_name,rhat,ess\n";
  for (const auto& d : diags) {
    out += d.name + ',';
    csv::append_double(out, d.rhat);
    out += ',';
    csv::append_double(out, d.ess);
    out += '\n';
  }
  return out;
}

}  // namespace migproj
