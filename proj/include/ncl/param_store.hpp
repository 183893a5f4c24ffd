#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "ncl/matrix.hpp"

namespace ncl {

/// Learning-rate group. WCB weights train at their own rate.
enum class ParamGroup { wcb, other };

std::string_view to_string(ParamGroup g);
ParamGroup parse_param_group(std::string_view s);

struct Parameter {
  std::string name;
  ParamGroup group = ParamGroup::other;
  Matrix value;
  Matrix grad;  // same shape as value; accumulated by Tape::backward
};

/// Named trainable matrices. Insertion order is preserved and is the
/// canonical order for serialization and optimizer state.
class ParamStore {
 public:
  Parameter& add(std::string name, ParamGroup group, Matrix value);

  bool contains(std::string_view name) const;
  std::size_t index_of(std::string_view name) const;
  Parameter& at(std::string_view name);
  const Parameter& at(std::string_view name) const;
  Parameter& at(std::size_t index) { return params_[index]; }
  const Parameter& at(std::size_t index) const { return params_[index]; }

  std::size_t size() const { return params_.size(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad();
  std::size_t scalar_count() const;

  friend bool operator==(const ParamStore& a, const ParamStore& b);

 private:
  std::vector<Parameter> params_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

}  // namespace ncl
