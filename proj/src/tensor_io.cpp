// SPDX-License-Identifier: Apache-2.0
//
// Parameter sets, checkpoint files, initialization and Adam.

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "scalenav/tensor.hpp"

namespace scalenav::tensor {

Tensor& ParamSet::add(std::string name, Shape shape) {
  for (const auto& e : entries_) {
    if (e.name == name) throw InvalidArgument("duplicate parameter name '" + name + "'");
  }
  entries_.push_back({std::move(name), Tensor::zeros(std::move(shape), true)});
  return entries_.back().tensor;
}

Tensor& ParamSet::get(std::string_view name) {
  for (auto& e : entries_)
    if (e.name == name) return e.tensor;
  throw InvalidArgument("no parameter named '" + std::string(name) + "'");
}

const Tensor& ParamSet::get(std::string_view name) const {
  return const_cast<ParamSet*>(this)->get(name);
}

std::vector<Tensor> ParamSet::tensors() const {
  std::vector<Tensor> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.tensor);
  return out;
}

std::size_t ParamSet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.size();
  return n;
}

void ParamSet::set_requires_grad(bool on) {
  for (auto& e : entries_) e.tensor.set_requires_grad(on);
}

void ParamSet::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

std::uint64_t fnv1a64(std::span<const double> values, std::uint64_t h) {
  const auto* bytes = reinterpret_cast<const unsigned char*>(values.data());
  for (std::size_t i = 0; i < values.size_bytes(); ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t ParamSet::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& e : entries_) h = fnv1a64(e.tensor.values(), h);
  return h;
}

namespace {

std::filesystem::path with_suffix(const std::filesystem::path& prefix, const char* suffix) {
  return prefix.parent_path() / (prefix.filename().string() + suffix);
}

std::string shape_token(const Shape& s) {
  if (s.empty()) return "scalar";
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
  return out;
}

}  // namespace

bool checkpoint_exists(const std::filesystem::path& prefix) {
  return std::filesystem::exists(with_suffix(prefix, ".bin")) &&
         std::filesystem::exists(with_suffix(prefix, ".manifest"));
}

void ParamSet::save(const std::filesystem::path& prefix) const {
  if (prefix.has_parent_path()) std::filesystem::create_directories(prefix.parent_path());
  std::ofstream bin(with_suffix(prefix, ".bin"), std::ios::binary);
  std::ofstream man(with_suffix(prefix, ".manifest"));
  if (!bin || !man) throw std::runtime_error("cannot write checkpoint " + prefix.string());
  man << "# scalenav checkpoint v1\n# name shape offset bytes fnv1a64\n";
  std::size_t offset = 0;
  for (const auto& e : entries_) {
    const auto vals = e.tensor.values();
    bin.write(reinterpret_cast<const char*>(vals.data()),
              static_cast<std::streamsize>(vals.size_bytes()));
    man << e.name << ' ' << shape_token(e.tensor.shape()) << ' ' << offset << ' '
        << vals.size_bytes() << ' ' << std::hex << std::setw(16) << std::setfill('0')
        << fnv1a64(vals) << std::dec << std::setfill(' ') << '\n';
    offset += vals.size_bytes();
  }
  if (!bin || !man) throw std::runtime_error("write failed for checkpoint " + prefix.string());
}

void ParamSet::load(const std::filesystem::path& prefix) {
  std::ifstream man(with_suffix(prefix, ".manifest"));
  std::ifstream bin(with_suffix(prefix, ".bin"), std::ios::binary);
  if (!man || !bin) throw InvalidArgument("missing checkpoint " + prefix.string());
  std::string line;
  std::size_t idx = 0;
  while (std::getline(man, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string name, shape, sum;
    std::size_t offset = 0, bytes = 0;
    if (!(ls >> name >> shape >> offset >> bytes >> sum)) {
      throw InvalidArgument("bad manifest line '" + line + "'");
    }
    if (idx >= entries_.size() || entries_[idx].name != name) {
      throw InvalidArgument("checkpoint " + prefix.string() + ": unexpected parameter '" + name + "'");
    }
    Tensor& t = entries_[idx].tensor;
    if (shape != shape_token(t.shape()) || bytes != t.size() * sizeof(double)) {
      throw InvalidArgument("checkpoint " + prefix.string() + ": shape mismatch for '" + name +
                            "' (" + shape + " vs " + shape_token(t.shape()) + ")");
    }
    bin.seekg(static_cast<std::streamoff>(offset));
    auto vals = t.values();
    bin.read(reinterpret_cast<char*>(vals.data()), static_cast<std::streamsize>(bytes));
    if (!bin) throw InvalidArgument("checkpoint " + prefix.string() + ": truncated data");
    std::ostringstream hex;
    hex << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(vals);
    if (hex.str() != sum) {
      throw InvalidArgument("checkpoint " + prefix.string() + ": checksum mismatch for '" + name + "'");
    }
    ++idx;
  }
  if (idx != entries_.size()) {
    throw InvalidArgument("checkpoint " + prefix.string() + ": missing parameters");
  }
}

void init_uniform(Tensor& t, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  for (double& v : t.values()) v = u(rng);
}

AdamState make_adam_state(const std::vector<Tensor>& params, AdamConfig config) {
  AdamState s;
  s.config = config;
  for (const auto& p : params) {
    s.m.emplace_back(p.size(), 0.0);
    s.v.emplace_back(p.size(), 0.0);
  }
  return s;
}

void adam_step(std::vector<Tensor>& params, AdamState& state) {
  if (params.size() != state.m.size()) throw InvalidArgument("adam_step: parameter list changed");
  const auto& c = state.config;
  ++state.step;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto vals = params[k].values();
    const auto grads = params[k].grad();
    auto& m = state.m[k];
    auto& v = state.v[k];
    if (m.size() != vals.size()) throw InvalidArgument("adam_step: parameter shape changed");
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double g = grads[i];
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
      vals[i] -= c.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + c.epsilon);
    }
  }
}

double clip_grad_norm(std::vector<Tensor>& params, double max_norm) {
  double sq = 0.0;
  for (auto& p : params)
    for (double g : p.grad()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (auto& p : params)
      for (double& g : p.grad()) g *= s;
  }
  return norm;
}

}  // namespace scalenav::tensor
