// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "opsched/error.hpp"
#include "opsched/id_set.hpp"

namespace opsched {

/// ram holds activations and graph inputs; flash holds read-only parameters.
enum class Storage { ram, flash };

struct TensorInfo {
  TensorId id{};
  std::uint64_t size_bytes = 0;
  Storage storage = Storage::ram;
  /// Derived by validate(). If set by the caller it must agree with the
  /// operator list.
  std::optional<OperatorId> producer;

  friend bool operator==(const TensorInfo &, const TensorInfo &) = default;
};

struct OperatorNode {
  OperatorId id{};
  std::string opcode;
  std::vector<TensorId> inputs;
  TensorId output{};
  /// Index into `inputs` whose buffer may receive the result.
  std::optional<std::size_t> inplace_input;

  friend bool operator==(const OperatorNode &, const OperatorNode &) = default;
};

/// External ids for display and serialization. Empty vectors mean the dense
/// id is also the external id.
struct IdLabels {
  std::vector<std::int64_t> tensors;
  std::vector<std::int64_t> operators;

  friend bool operator==(const IdLabels &, const IdLabels &) = default;
};

/// Computation graph of single-output operators.
///
/// The operator list order is the embedded default schedule. A Graph only
/// becomes usable by the scheduler and the simulator after validate(), which
/// checks the structural invariants and builds the consumer and reachability
/// indexes. A validated Graph is immutable.
class Graph {
public:
  Graph() = default;
  Graph(std::vector<TensorInfo> tensors, std::vector<OperatorNode> operators,
        std::optional<std::string> name = std::nullopt, IdLabels labels = {});

  std::span<const TensorInfo> tensors() const { return tensors_; }
  /// Operators in list (default schedule) order.
  std::span<const OperatorNode> operators() const { return operators_; }
  const std::optional<std::string> &name() const { return name_; }
  const IdLabels &labels() const { return labels_; }
  std::int64_t label(TensorId id) const;
  std::int64_t label(OperatorId id) const;

  std::size_t tensor_count() const { return tensors_.size(); }
  std::size_t operator_count() const { return operators_.size(); }

  bool is_validated() const { return validated_; }

  const TensorInfo &tensor(TensorId id) const;
  const OperatorNode &op(OperatorId id) const;

  /// Operators consuming `id`, in increasing id order.
  std::span<const OperatorId> consumers(TensorId id) const;
  /// Transitive predecessors of `id` (excluding `id`).
  const OperatorSet &predecessor_set(OperatorId id) const;
  /// Operator ids in list order.
  std::vector<OperatorId> default_schedule() const;

  bool is_graph_output(TensorId id) const { return consumers(id).empty(); }
  bool is_graph_input(TensorId id) const {
    const auto &t = tensor(id);
    return t.storage == Storage::ram && !t.producer;
  }

  /// Structural equality: tensors, operators in list order, name and labels.
  friend bool operator==(const Graph &a, const Graph &b) {
    return a.tensors_ == b.tensors_ && a.operators_ == b.operators_ &&
           a.name_ == b.name_ && a.labels_ == b.labels_;
  }

private:
  friend Graph validate(Graph graph);
  void require_validated() const;

  std::vector<TensorInfo> tensors_;
  std::vector<OperatorNode> operators_;
  std::optional<std::string> name_;
  IdLabels labels_;

  bool validated_ = false;
  std::vector<std::size_t> op_position_;            // by id -> list position
  std::vector<std::vector<OperatorId>> consumers_;  // by tensor id
  std::vector<OperatorSet> predecessors_;           // by operator id
};

/// Checks every graph invariant and returns the graph with derived indexes
/// populated. Throws Error on the first violation found. Idempotent.
Graph validate(Graph graph);

/// All operators from which `op` is reachable through data dependencies.
OperatorSet predecessors(const Graph &graph, OperatorId op);

/// Total size of flash tensors.
std::uint64_t flash_bytes(const Graph &graph);

} // namespace opsched
