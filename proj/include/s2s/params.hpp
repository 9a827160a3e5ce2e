#pragma once

#include <map>
#include <string>
#include <vector>

#include "s2s/tensor.hpp"

namespace s2s {

struct Parameter {
  Tensor value;
  std::vector<double> grad;   // same length as value, reset by zero_grad()
  bool decay = true;          // subject to decoupled weight decay
};

/// Named trainable tensors, iterated in lexicographic name order.
class ParamStore {
 public:
  Parameter& add(const std::string& name, Tensor value, bool decay = true);

  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;

  std::vector<std::string> names() const;
  std::size_t scalar_count() const;
  void zero_grad();

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  std::size_t size() const { return params_.size(); }

 private:
  std::map<std::string, Parameter> params_;
};

}  // namespace s2s
