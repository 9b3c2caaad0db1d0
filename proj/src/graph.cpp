// SPDX-License-Identifier: Apache-2.0
#include "opsched/graph.hpp"

#include <algorithm>
#include <deque>
#include <sstream>

namespace opsched {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
  case ErrorKind::CycleDetected: return "CycleDetected";
  case ErrorKind::DanglingReference: return "DanglingReference";
  case ErrorKind::DuplicateProducer: return "DuplicateProducer";
  case ErrorKind::InplaceSizeMismatch: return "InplaceSizeMismatch";
  case ErrorKind::NonDenseIds: return "NonDenseIds";
  case ErrorKind::InvalidOperator: return "InvalidOperator";
  case ErrorKind::InvalidTensor: return "InvalidTensor";
  case ErrorKind::NoGraphOutput: return "NoGraphOutput";
  case ErrorKind::NotTopological: return "NotTopological";
  case ErrorKind::NotAPermutation: return "NotAPermutation";
  case ErrorKind::UnknownOperator: return "UnknownOperator";
  case ErrorKind::GraphTooLarge: return "GraphTooLarge";
  case ErrorKind::MemoBudgetExceeded: return "MemoBudgetExceeded";
  case ErrorKind::CapacityExceeded: return "CapacityExceeded";
  case ErrorKind::InvalidConfig: return "InvalidConfig";
  case ErrorKind::ParseError: return "ParseError";
  case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

namespace {

std::string capacity_message(std::size_t step, std::uint64_t attempted,
                             std::uint64_t live, std::uint64_t capacity) {
  std::ostringstream os;
  os << "step " << step << ": allocating " << attempted << " B with " << live
     << " B live exceeds arena capacity " << capacity << " B";
  return os.str();
}

} // namespace

CapacityExceeded::CapacityExceeded(std::size_t step,
                                   std::uint64_t attempted_size,
                                   std::uint64_t live_bytes,
                                   std::uint64_t capacity)
    : Error(ErrorKind::CapacityExceeded,
            capacity_message(step, attempted_size, live_bytes, capacity)),
      step_(step), attempted_size_(attempted_size), live_bytes_(live_bytes) {}

Graph::Graph(std::vector<TensorInfo> tensors,
             std::vector<OperatorNode> operators,
             std::optional<std::string> name, IdLabels labels)
    : tensors_(std::move(tensors)), operators_(std::move(operators)),
      name_(std::move(name)), labels_(std::move(labels)) {}

std::int64_t Graph::label(TensorId id) const {
  const std::size_t i = index(id);
  return i < labels_.tensors.size() ? labels_.tensors[i]
                                    : static_cast<std::int64_t>(i);
}

std::int64_t Graph::label(OperatorId id) const {
  const std::size_t i = index(id);
  return i < labels_.operators.size() ? labels_.operators[i]
                                      : static_cast<std::int64_t>(i);
}

void Graph::require_validated() const {
  if (!validated_)
    throw std::logic_error("graph must be validated before use");
}

const TensorInfo &Graph::tensor(TensorId id) const {
  require_validated();
  if (index(id) >= tensors_.size())
    throw Error(ErrorKind::DanglingReference,
                "unknown tensor " + std::to_string(index(id)));
  return tensors_[index(id)];
}

const OperatorNode &Graph::op(OperatorId id) const {
  require_validated();
  if (index(id) >= operators_.size())
    throw Error(ErrorKind::UnknownOperator,
                "unknown operator " + std::to_string(index(id)));
  return operators_[op_position_[index(id)]];
}

std::span<const OperatorId> Graph::consumers(TensorId id) const {
  require_validated();
  if (index(id) >= tensors_.size())
    throw Error(ErrorKind::DanglingReference,
                "unknown tensor " + std::to_string(index(id)));
  return consumers_[index(id)];
}

const OperatorSet &Graph::predecessor_set(OperatorId id) const {
  require_validated();
  if (index(id) >= operators_.size())
    throw Error(ErrorKind::UnknownOperator,
                "unknown operator " + std::to_string(index(id)));
  return predecessors_[index(id)];
}

std::vector<OperatorId> Graph::default_schedule() const {
  std::vector<OperatorId> order;
  order.reserve(operators_.size());
  for (const auto &node : operators_)
    order.push_back(node.id);
  return order;
}

namespace {

// Ids must form exactly {0, ..., n-1}.
template <class Range, class GetId>
void check_dense(const Range &items, GetId get_id, const char *what) {
  std::vector<bool> seen(items.size(), false);
  for (const auto &item : items) {
    const std::size_t i = index(get_id(item));
    if (i >= items.size() || seen[i]) {
      std::ostringstream os;
      os << what << " ids must be unique and cover 0.." << items.size()
         << " (exclusive); offending id " << i;
      throw Error(ErrorKind::NonDenseIds, os.str());
    }
    seen[i] = true;
  }
}

} // namespace

Graph validate(Graph g) {
  const std::size_t n_tensors = g.tensors_.size();
  const std::size_t n_ops = g.operators_.size();

  if (n_tensors == 0)
    throw Error(ErrorKind::NoGraphOutput, "graph has no tensors");

  check_dense(g.tensors_, [](const TensorInfo &t) { return t.id; }, "tensor");
  check_dense(g.operators_, [](const OperatorNode &o) { return o.id; },
              "operator");
  std::sort(g.tensors_.begin(), g.tensors_.end(),
            [](const TensorInfo &a, const TensorInfo &b) { return a.id < b.id; });

  auto canonical_labels = [](std::vector<std::int64_t> &labels, std::size_t n,
                             const char *what) {
    if (labels.empty()) {
      labels.resize(n);
      for (std::size_t i = 0; i < n; ++i)
        labels[i] = static_cast<std::int64_t>(i);
    } else if (labels.size() != n) {
      throw Error(ErrorKind::NonDenseIds,
                  std::string(what) + " label count does not match the graph");
    }
  };
  canonical_labels(g.labels_.tensors, n_tensors, "tensor");
  canonical_labels(g.labels_.operators, n_ops, "operator");

  auto op_name = [&](OperatorId id) {
    return "operator " + std::to_string(g.label(id));
  };
  auto tensor_name = [&](TensorId id) {
    return "tensor " + std::to_string(g.label(id));
  };

  g.op_position_.assign(n_ops, 0);
  for (std::size_t pos = 0; pos < n_ops; ++pos)
    g.op_position_[index(g.operators_[pos].id)] = pos;

  std::vector<std::optional<OperatorId>> producer(n_tensors);
  g.consumers_.assign(n_tensors, {});

  for (const auto &node : g.operators_) {
    if (node.inputs.empty())
      throw Error(ErrorKind::InvalidOperator, op_name(node.id) + " has no inputs");
    for (TensorId t : node.inputs)
      if (index(t) >= n_tensors)
        throw Error(ErrorKind::DanglingReference,
                    op_name(node.id) + " reads unknown tensor id " +
                        std::to_string(index(t)));
    if (index(node.output) >= n_tensors)
      throw Error(ErrorKind::DanglingReference,
                  op_name(node.id) + " writes unknown tensor id " +
                      std::to_string(index(node.output)));

    for (std::size_t i = 0; i < node.inputs.size(); ++i) {
      if (node.inputs[i] == node.output)
        throw Error(ErrorKind::InvalidOperator,
                    op_name(node.id) + " reads its own output " +
                        tensor_name(node.output));
      for (std::size_t j = 0; j < i; ++j)
        if (node.inputs[i] == node.inputs[j])
          throw Error(ErrorKind::InvalidOperator,
                      op_name(node.id) + " lists " + tensor_name(node.inputs[i]) +
                          " twice");
    }

    const TensorInfo &out = g.tensors_[index(node.output)];
    if (out.storage == Storage::flash)
      throw Error(ErrorKind::InvalidTensor,
                  tensor_name(node.output) + " is stored in flash but produced by " +
                      op_name(node.id));
    if (producer[index(node.output)])
      throw Error(ErrorKind::DuplicateProducer,
                  tensor_name(node.output) + " is produced by both " +
                      op_name(*producer[index(node.output)]) + " and " +
                      op_name(node.id));
    producer[index(node.output)] = node.id;

    if (node.inplace_input) {
      const std::size_t k = *node.inplace_input;
      if (k >= node.inputs.size())
        throw Error(ErrorKind::InvalidOperator,
                    op_name(node.id) + " has in-place input index " +
                        std::to_string(k) + " out of range");
      const TensorInfo &in = g.tensors_[index(node.inputs[k])];
      if (in.storage != Storage::ram)
        throw Error(ErrorKind::InvalidOperator,
                    op_name(node.id) + " cannot write in place into flash " +
                        tensor_name(in.id));
      if (in.size_bytes != out.size_bytes)
        throw Error(ErrorKind::InplaceSizeMismatch,
                    op_name(node.id) + ": in-place input " + tensor_name(in.id) +
                        " has " + std::to_string(in.size_bytes) +
                        " B but output has " + std::to_string(out.size_bytes) +
                        " B");
    }

    for (TensorId t : node.inputs)
      g.consumers_[index(t)].push_back(node.id);
  }

  for (auto &t : g.tensors_) {
    const auto &derived = producer[index(t.id)];
    if (t.producer && t.producer != derived)
      throw Error(ErrorKind::InvalidTensor,
                  tensor_name(t.id) + " declares a producer that does not output it");
    t.producer = derived;
  }
  for (auto &c : g.consumers_)
    std::sort(c.begin(), c.end());

  // Kahn's algorithm over operator dependencies.
  std::vector<std::size_t> indegree(n_ops, 0);
  for (const auto &node : g.operators_)
    for (TensorId t : node.inputs)
      if (producer[index(t)])
        ++indegree[index(node.id)];
  std::deque<OperatorId> ready;
  for (std::size_t i = 0; i < n_ops; ++i)
    if (indegree[i] == 0)
      ready.push_back(static_cast<OperatorId>(i));
  std::size_t processed = 0;
  while (!ready.empty()) {
    const OperatorId o = ready.front();
    ready.pop_front();
    ++processed;
    for (OperatorId c : g.consumers_[index(g.operators_[g.op_position_[index(o)]].output)])
      if (--indegree[index(c)] == 0)
        ready.push_back(c);
  }
  if (processed != n_ops) {
    // Every unprocessed operator has an unprocessed predecessor; walking
    // backwards through them must revisit one.
    OperatorId cur{};
    for (std::size_t i = 0; i < n_ops; ++i)
      if (indegree[i] > 0) {
        cur = static_cast<OperatorId>(i);
        break;
      }
    std::vector<std::size_t> visit_order(n_ops, n_ops);
    std::vector<OperatorId> walk;
    while (visit_order[index(cur)] == n_ops) {
      visit_order[index(cur)] = walk.size();
      walk.push_back(cur);
      const auto &node = g.operators_[g.op_position_[index(cur)]];
      for (TensorId t : node.inputs) {
        const auto &p = producer[index(t)];
        if (p && indegree[index(*p)] > 0) {
          cur = *p;
          break;
        }
      }
    }
    std::vector<OperatorId> cycle(walk.begin() + static_cast<std::ptrdiff_t>(visit_order[index(cur)]),
                                  walk.end());
    std::reverse(cycle.begin(), cycle.end());
    std::ostringstream os;
    os << "operators form a cycle:";
    for (OperatorId o : cycle)
      os << ' ' << g.label(o);
    throw Error(ErrorKind::CycleDetected, os.str());
  }

  for (std::size_t pos = 0; pos < n_ops; ++pos) {
    const auto &node = g.operators_[pos];
    for (TensorId t : node.inputs) {
      const auto &p = producer[index(t)];
      if (p && g.op_position_[index(*p)] > pos)
        throw Error(ErrorKind::NotTopological,
                    "embedded order runs " + op_name(node.id) + " before " +
                        op_name(*p) + ", which produces its input " +
                        tensor_name(t));
    }
  }

  // The list order is topological now, so one forward pass closes the
  // predecessor relation.
  g.predecessors_.assign(n_ops, OperatorSet(n_ops));
  for (const auto &node : g.operators_) {
    OperatorSet &preds = g.predecessors_[index(node.id)];
    for (TensorId t : node.inputs)
      if (const auto &p = producer[index(t)]) {
        preds.insert(*p);
        preds |= g.predecessors_[index(*p)];
      }
  }

  const bool has_output =
      std::any_of(g.consumers_.begin(), g.consumers_.end(),
                  [](const auto &c) { return c.empty(); });
  if (!has_output)
    throw Error(ErrorKind::NoGraphOutput,
                "every tensor is consumed; the graph has no output");

  g.validated_ = true;
  return g;
}

OperatorSet predecessors(const Graph &graph, OperatorId op) {
  return graph.predecessor_set(op);
}

std::uint64_t flash_bytes(const Graph &graph) {
  std::uint64_t total = 0;
  for (const auto &t : graph.tensors())
    if (t.storage == Storage::flash)
      total += t.size_bytes;
  return total;
}

} // namespace opsched
