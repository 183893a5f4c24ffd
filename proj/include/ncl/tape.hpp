#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "ncl/matrix.hpp"
#include "ncl/param_store.hpp"

namespace ncl {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; only valid while the
/// tape is alive.
class Var {
 public:
  Var() = default;

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  const Matrix& value() const;
  const Matrix& grad() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode recorder. Nodes are appended in evaluation order; backward()
/// replays them in exact reverse order. A tape is single-threaded.
class Tape {
 public:
  // Called with the node's own index; reads grad(self) and adds into the
  // gradients of its inputs.
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  /// Leaf bound to a store parameter; its gradient is added into the
  /// parameter's grad slot at the end of backward().
  Var parameter(ParamStore& store, std::string_view name);

  Var record(std::string op, Matrix value, std::vector<std::size_t> inputs, BackwardFn backward);

  /// Seeds d(root)=1 for a 1×1 root. All gradient slots are zeroed first.
  void backward(Var root);

  std::size_t size() const { return nodes_.size(); }
  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  const Matrix& grad(std::size_t id) const { return nodes_[id].grad; }
  Matrix& grad(std::size_t id) { return nodes_[id].grad; }
  const std::string& op(std::size_t id) const { return nodes_[id].op; }
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_[id].inputs; }

  /// Node ids in the order the last backward() visited them.
  const std::vector<std::size_t>& last_visit_order() const { return visit_order_; }

 private:
  struct Node {
    std::string op;
    Matrix value;
    Matrix grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    ParamStore* store = nullptr;
    std::size_t param_index = 0;
  };

  std::vector<Node> nodes_;
  std::vector<std::size_t> visit_order_;
};

/// Test hook: makes the backward rule of one op kind propagate a scaled
/// (wrong) gradient. Used to prove that gradient checking catches bad rules.
namespace fault {
void corrupt_backward(std::string op);
void clear();
const std::string& corrupted_op();
}  // namespace fault

}  // namespace ncl
