#include "s2s/params.hpp"

#include "s2s/error.hpp"

namespace s2s {

Parameter& ParamStore::add(const std::string& name, Tensor value, bool decay) {
  if (contains(name)) throw UsageError("duplicate parameter name: " + name);
  const auto n = value.size();
  auto [it, ok] = params_.emplace(name, Parameter{std::move(value), std::vector<double>(n, 0.0), decay});
  return it->second;
}

Parameter& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw UsageError("unknown parameter: " + name);
  return it->second;
}

const Parameter& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw UsageError("unknown parameter: " + name);
  return it->second;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& [name, p] : params_) out.push_back(name);
  return out;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, p] : params_) n += p.value.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [name, p] : params_) std::fill(p.grad.begin(), p.grad.end(), 0.0);
}

}  // namespace s2s
