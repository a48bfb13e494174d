#include "params.hpp"

#include <stdexcept>

namespace sgw {

Tensor& ParamSet::add(const std::string& name, Tensor init) {
  if (index_.count(name))
    throw std::invalid_argument("params: duplicate parameter '" + name + "'");
  index_[name] = static_cast<int>(items_.size());
  items_.push_back(Param{name, std::move(init), Tensor(), Tensor()});
  return items_.back().value;
}

const Tensor& ParamSet::value(const std::string& name) const {
  return items_[static_cast<size_t>(index_of(name))].value;
}

Tensor& ParamSet::mutable_value(const std::string& name) {
  return items_[static_cast<size_t>(index_of(name))].value;
}

int ParamSet::index_of(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end())
    throw std::invalid_argument("params: unknown parameter '" + name + "'");
  return it->second;
}

ParamView::ParamView(const ParamSet& ps, Tape* tape) : ps_(&ps), recorded_(tape != nullptr) {
  rec_.reserve(ps.size());
  for (size_t i = 0; i < ps.size(); ++i)
    rec_.push_back(tape ? tape->watch(ps.at(i).value) : ps.at(i).value);
}

const Tensor& ParamView::operator[](const std::string& name) const {
  return rec_[static_cast<size_t>(ps_->index_of(name))];
}

void ParamView::override_with(const std::string& name, const Tensor& t) {
  const int i = ps_->index_of(name);
  if (t.shape != rec_[static_cast<size_t>(i)].shape)
    throw std::invalid_argument("params: override shape mismatch for '" + name + "'");
  rec_[static_cast<size_t>(i)] = t;
}

}  // namespace sgw
