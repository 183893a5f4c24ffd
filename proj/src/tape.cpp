#include "ncl/tape.hpp"

#include "ncl/errors.hpp"

namespace ncl {

namespace fault {
namespace {
std::string& slot() {
  static std::string op;
  return op;
}
}  // namespace

void corrupt_backward(std::string op) { slot() = std::move(op); }
void clear() { slot().clear(); }
const std::string& corrupted_op() { return slot(); }
}  // namespace fault

const Matrix& Var::value() const { return tape_->value(id_); }
const Matrix& Var::grad() const { return tape_->grad(id_); }

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{"constant", std::move(value), {}, {}, nullptr, nullptr, 0});
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(ParamStore& store, std::string_view name) {
  const std::size_t index = store.index_of(name);
  nodes_.push_back(Node{"parameter", store.at(index).value, {}, {}, nullptr, &store, index});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(std::string op, Matrix value, std::vector<std::size_t> inputs, BackwardFn backward) {
  for (std::size_t in : inputs) {
    if (in >= nodes_.size()) throw ShapeError("tape: input refers to an unrecorded node");
  }
  nodes_.push_back(Node{std::move(op), std::move(value), {}, std::move(inputs), std::move(backward), nullptr, 0});
  return Var(this, nodes_.size() - 1);
}

void Tape::backward(Var root) {
  if (&root.tape() != this) throw ShapeError("backward: variable belongs to another tape");
  const Matrix& rv = nodes_[root.id()].value;
  if (rv.rows() != 1 || rv.cols() != 1) throw ShapeError("backward: root must be a 1x1 scalar");

  for (auto& n : nodes_) n.grad = Matrix(n.value.rows(), n.value.cols());
  nodes_[root.id()].grad(0, 0) = 1.0;

  const std::string& corrupted = fault::corrupted_op();
  visit_order_.clear();
  for (std::size_t id = root.id() + 1; id-- > 0;) {
    visit_order_.push_back(id);
    Node& n = nodes_[id];
    if (!n.backward) continue;
    if (!corrupted.empty() && n.op == corrupted) {
      Matrix saved = n.grad;
      n.grad *= 1.5;
      n.backward(*this, id);
      nodes_[id].grad = std::move(saved);
    } else {
      n.backward(*this, id);
    }
  }

  for (auto& n : nodes_) {
    if (n.store != nullptr) n.store->at(n.param_index).grad += n.grad;
  }
}

}  // namespace ncl
