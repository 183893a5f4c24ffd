#include "ncl/param_store.hpp"

#include "ncl/errors.hpp"

namespace ncl {

std::string_view to_string(ParamGroup g) { return g == ParamGroup::wcb ? "wcb" : "other"; }

ParamGroup parse_param_group(std::string_view s) {
  if (s == "wcb") return ParamGroup::wcb;
  if (s == "other") return ParamGroup::other;
  throw DataError("unknown parameter group '" + std::string(s) + "'");
}

Parameter& ParamStore::add(std::string name, ParamGroup group, Matrix value) {
  if (contains(name)) throw ConfigError("duplicate parameter '" + name + "'");
  Matrix grad(value.rows(), value.cols());
  index_.emplace(name, params_.size());
  params_.push_back(Parameter{std::move(name), group, std::move(value), std::move(grad)});
  return params_.back();
}

bool ParamStore::contains(std::string_view name) const { return index_.find(name) != index_.end(); }

std::size_t ParamStore::index_of(std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter '" + std::string(name) + "'");
  return it->second;
}

Parameter& ParamStore::at(std::string_view name) { return params_[index_of(name)]; }
const Parameter& ParamStore::at(std::string_view name) const { return params_[index_of(name)]; }

void ParamStore::zero_grad() {
  for (auto& p : params_) p.grad = Matrix(p.value.rows(), p.value.cols());
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

bool operator==(const ParamStore& a, const ParamStore& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& x = a.at(i);
    const auto& y = b.at(i);
    if (x.name != y.name || x.group != y.group || !(x.value == y.value)) return false;
  }
  return true;
}

}  // namespace ncl
