// SPDX-License-Identifier: Apache-2.0
#include "opsched/io.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace opsched {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

[[noreturn]] void parse_fail(const std::string &where, const std::string &what) {
  throw Error(ErrorKind::ParseError, where + ": " + what);
}

void check_fields(const json &obj, const std::set<std::string> &allowed,
                  const std::string &where, bool strict) {
  if (!strict)
    return;
  for (const auto &item : obj.items())
    if (!allowed.contains(item.key()))
      parse_fail(where, "unknown field \"" + item.key() + "\"");
}

const json &require(const json &obj, const char *key, const std::string &where) {
  auto it = obj.find(key);
  if (it == obj.end())
    parse_fail(where, std::string("missing field \"") + key + "\"");
  return *it;
}

std::int64_t as_id(const json &v, const std::string &where) {
  if (!v.is_number_integer())
    parse_fail(where, "expected an integer id");
  const auto id = v.get<std::int64_t>();
  if (id < 0)
    parse_fail(where, "ids must be non-negative");
  return id;
}

std::string location(std::string_view text, std::size_t byte) {
  std::size_t line = 1, column = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      column = 1;
    } else {
      ++column;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(column);
}

} // namespace

Graph parse_graph(std::string_view text, const LoadOptions &options) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error &e) {
    throw Error(ErrorKind::ParseError,
                "malformed JSON at " + location(text, e.byte) + ": " + e.what());
  }
  if (!doc.is_object())
    parse_fail("document", "expected a JSON object");
  check_fields(doc, {"version", "name", "tensors", "operators"}, "document",
               options.strict);

  const json &version = require(doc, "version", "document");
  if (!version.is_number_integer() || version.get<std::int64_t>() != 1)
    parse_fail("version", "unsupported version " + version.dump());

  std::optional<std::string> name;
  if (auto it = doc.find("name"); it != doc.end() && !it->is_null()) {
    if (!it->is_string())
      parse_fail("name", "expected a string");
    name = it->get<std::string>();
  }

  const json &tensors = require(doc, "tensors", "document");
  const json &operators = require(doc, "operators", "document");
  if (!tensors.is_array())
    parse_fail("tensors", "expected an array");
  if (!operators.is_array())
    parse_fail("operators", "expected an array");

  struct RawTensor {
    std::int64_t id;
    std::uint64_t size;
    Storage storage;
  };
  std::vector<RawTensor> raw_tensors;
  std::map<std::int64_t, std::size_t> tensor_index;
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const std::string where = "tensors[" + std::to_string(i) + "]";
    const json &t = tensors[i];
    if (!t.is_object())
      parse_fail(where, "expected an object");
    check_fields(t, {"id", "size_bytes", "storage"}, where, options.strict);
    const std::int64_t id = as_id(require(t, "id", where), where + ".id");
    const json &size = require(t, "size_bytes", where);
    if (!size.is_number_integer() || size.get<std::int64_t>() < 0)
      parse_fail(where + ".size_bytes", "expected a non-negative integer");
    Storage storage = Storage::ram;
    if (auto it = t.find("storage"); it != t.end()) {
      if (*it == "ram")
        storage = Storage::ram;
      else if (*it == "flash")
        storage = Storage::flash;
      else
        parse_fail(where + ".storage", "expected \"ram\" or \"flash\"");
    }
    if (!tensor_index.emplace(id, i).second)
      parse_fail(where + ".id", "duplicate tensor id " + std::to_string(id));
    raw_tensors.push_back({id, size.get<std::uint64_t>(), storage});
  }

  struct RawOperator {
    std::int64_t id;
    std::string opcode;
    std::vector<std::int64_t> inputs;
    std::int64_t output;
    std::optional<std::size_t> inplace;
  };
  std::vector<RawOperator> raw_ops;
  std::set<std::int64_t> op_ids;
  for (std::size_t i = 0; i < operators.size(); ++i) {
    const std::string where = "operators[" + std::to_string(i) + "]";
    const json &o = operators[i];
    if (!o.is_object())
      parse_fail(where, "expected an object");
    check_fields(o, {"id", "opcode", "inputs", "output", "inplace_input"}, where,
                 options.strict);
    RawOperator op;
    op.id = as_id(require(o, "id", where), where + ".id");
    if (!op_ids.insert(op.id).second)
      parse_fail(where + ".id", "duplicate operator id " + std::to_string(op.id));
    if (auto it = o.find("opcode"); it != o.end()) {
      if (!it->is_string())
        parse_fail(where + ".opcode", "expected a string");
      op.opcode = it->get<std::string>();
    }
    const json &inputs = require(o, "inputs", where);
    if (!inputs.is_array())
      parse_fail(where + ".inputs", "expected an array");
    for (std::size_t k = 0; k < inputs.size(); ++k)
      op.inputs.push_back(
          as_id(inputs[k], where + ".inputs[" + std::to_string(k) + "]"));
    const json &output = require(o, "output", where);
    if (output.is_array())
      parse_fail(where + ".output", "operators produce a single output tensor");
    op.output = as_id(output, where + ".output");
    if (auto it = o.find("inplace_input"); it != o.end() && !it->is_null()) {
      if (!it->is_number_integer() || it->get<std::int64_t>() < 0)
        parse_fail(where + ".inplace_input", "expected a non-negative index");
      op.inplace = it->get<std::size_t>();
    }
    raw_ops.push_back(std::move(op));
  }

  // Densify: ascending external id order.
  IdLabels labels;
  std::map<std::int64_t, TensorId> tensor_dense;
  for (const auto &[ext, _] : tensor_index) {
    tensor_dense.emplace(ext, static_cast<TensorId>(labels.tensors.size()));
    labels.tensors.push_back(ext);
  }
  std::map<std::int64_t, OperatorId> op_dense;
  for (std::int64_t ext : op_ids) {
    op_dense.emplace(ext, static_cast<OperatorId>(labels.operators.size()));
    labels.operators.push_back(ext);
  }

  auto dense_tensor = [&](std::int64_t ext, std::int64_t op) {
    auto it = tensor_dense.find(ext);
    if (it == tensor_dense.end())
      throw Error(ErrorKind::DanglingReference,
                  "operator " + std::to_string(op) + " references unknown tensor " +
                      std::to_string(ext));
    return it->second;
  };

  std::vector<TensorInfo> graph_tensors;
  for (const auto &t : raw_tensors)
    graph_tensors.push_back({tensor_dense.at(t.id), t.size, t.storage, std::nullopt});
  std::vector<OperatorNode> graph_ops;
  for (const auto &o : raw_ops) {
    OperatorNode node;
    node.id = op_dense.at(o.id);
    node.opcode = o.opcode;
    for (std::int64_t in : o.inputs)
      node.inputs.push_back(dense_tensor(in, o.id));
    node.output = dense_tensor(o.output, o.id);
    node.inplace_input = o.inplace;
    graph_ops.push_back(std::move(node));
  }

  if (options.verbose) {
    auto dump = [&](const char *what, const std::vector<std::int64_t> &ext) {
      for (std::size_t i = 0; i < ext.size(); ++i)
        if (ext[i] != static_cast<std::int64_t>(i))
          *options.verbose << what << ' ' << ext[i] << " -> " << i << '\n';
    };
    dump("tensor", labels.tensors);
    dump("operator", labels.operators);
  }

  return validate(Graph(std::move(graph_tensors), std::move(graph_ops),
                        std::move(name), std::move(labels)));
}

Graph load_graph(const std::filesystem::path &path, const LoadOptions &options) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw Error(ErrorKind::IoError, "cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  try {
    return parse_graph(buffer.str(), options);
  } catch (const Error &e) {
    throw Error(e.kind(), path.string() + ": " + e.detail());
  }
}

std::string graph_to_json(const Graph &graph, const Schedule &schedule) {
  check_schedule(graph, schedule);
  ordered_json doc;
  doc["version"] = 1;
  if (graph.name())
    doc["name"] = *graph.name();
  doc["tensors"] = ordered_json::array();
  for (const auto &t : graph.tensors()) {
    ordered_json jt;
    jt["id"] = graph.label(t.id);
    jt["size_bytes"] = t.size_bytes;
    jt["storage"] = t.storage == Storage::ram ? "ram" : "flash";
    doc["tensors"].push_back(std::move(jt));
  }
  doc["operators"] = ordered_json::array();
  for (OperatorId id : schedule) {
    const auto &node = graph.op(id);
    ordered_json jo;
    jo["id"] = graph.label(id);
    jo["opcode"] = node.opcode;
    jo["inputs"] = ordered_json::array();
    for (TensorId in : node.inputs)
      jo["inputs"].push_back(graph.label(in));
    jo["output"] = graph.label(node.output);
    if (node.inplace_input)
      jo["inplace_input"] = *node.inplace_input;
    doc["operators"].push_back(std::move(jo));
  }
  return doc.dump(2) + "\n";
}

void save_graph_with_schedule(const Graph &graph, const Schedule &schedule,
                              const std::filesystem::path &path) {
  write_file_atomic(path, graph_to_json(graph, schedule));
}

namespace {

std::string csv_field(const std::string &s) {
  if (s.find_first_of(",\"\n") == std::string::npos)
    return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"')
      out += '"';
    out += c;
  }
  return out + "\"";
}

std::string xml_escape(const std::string &s) {
  std::string out;
  for (char c : s) {
    switch (c) {
    case '&': out += "&amp;"; break;
    case '<': out += "&lt;"; break;
    case '>': out += "&gt;"; break;
    case '"': out += "&quot;"; break;
    default: out += c;
    }
  }
  return out;
}

} // namespace

void write_trace_csv(std::ostream &os, const Graph &graph, const MemoryTrace &trace) {
  os << "step,operator_id,opcode,resident_tensor_ids,bytes\n";
  for (std::size_t k = 0; k < trace.steps.size(); ++k) {
    const auto &step = trace.steps[k];
    os << k << ',' << graph.label(step.op) << ','
       << csv_field(graph.op(step.op).opcode) << ',';
    bool first = true;
    step.resident.for_each([&](TensorId t) {
      os << (first ? "" : " ") << graph.label(t);
      first = false;
    });
    os << ',' << step.bytes << '\n';
  }
  os << "# peak_bytes=" << trace.peak_bytes << " peak_step=" << trace.peak_step
     << " flash_bytes=" << trace.flash_bytes << '\n';
}

void write_trace_svg(std::ostream &os, const Graph &graph, const MemoryTrace &trace) {
  constexpr double width = 800, height = 400;
  constexpr double left = 80, right = 20, top = 40, bottom = 50;
  constexpr double plot_w = width - left - right;
  constexpr double plot_h = height - top - bottom;

  const std::size_t n = trace.steps.size();
  const double y_max =
      trace.peak_bytes == 0 ? 1.0 : static_cast<double>(trace.peak_bytes) * 1.15;
  auto y_of = [&](double bytes) { return top + plot_h - bytes / y_max * plot_h; };
  const double slot = n == 0 ? plot_w : plot_w / static_cast<double>(n);

  std::ostringstream s;
  s << std::fixed << std::setprecision(1);
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"400\" "
       "viewBox=\"0 0 800 400\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s << "<rect x=\"0\" y=\"0\" width=\"800\" height=\"400\" fill=\"white\"/>\n";
  s << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\">"
    << xml_escape(graph.name().value_or("Working set per operator")) << "</text>\n";

  // Axes.
  s << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\""
    << top + plot_h << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\""
    << left + plot_w << "\" y2=\"" << top + plot_h << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const auto value = static_cast<std::uint64_t>(y_max * i / 4.0);
    const double y = y_of(static_cast<double>(value));
    s << "<line x1=\"" << left - 4 << "\" y1=\"" << y << "\" x2=\"" << left
      << "\" y2=\"" << y << "\" stroke=\"black\"/>\n";
    s << "<text x=\"" << left - 6 << "\" y=\"" << y + 4
      << "\" text-anchor=\"end\">" << value << "</text>\n";
  }
  s << "<text x=\"16\" y=\"" << top + plot_h / 2 << "\" text-anchor=\"middle\" "
    << "transform=\"rotate(-90 16 " << top + plot_h / 2 << ")\">Usage (B)</text>\n";
  s << "<text x=\"" << left + plot_w / 2 << "\" y=\"" << height - 10
    << "\" text-anchor=\"middle\">Operator</text>\n";

  for (std::size_t k = 0; k < n; ++k) {
    const auto &step = trace.steps[k];
    const double x = left + slot * static_cast<double>(k) + slot * 0.15;
    const double y = y_of(static_cast<double>(step.bytes));
    s << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << slot * 0.7
      << "\" height=\"" << top + plot_h - y << "\" fill=\""
      << (k == trace.peak_step && trace.peak_bytes > 0 ? "#d95f02" : "#1b9e77")
      << "\"/>\n";
    s << "<text x=\"" << x + slot * 0.35 << "\" y=\"" << top + plot_h + 16
      << "\" text-anchor=\"middle\">" << graph.label(step.op) << "</text>\n";
  }

  const double peak_y = y_of(static_cast<double>(trace.peak_bytes));
  s << "<line x1=\"" << left << "\" y1=\"" << peak_y << "\" x2=\"" << left + plot_w
    << "\" y2=\"" << peak_y << "\" stroke=\"#e7298a\" stroke-dasharray=\"6 4\"/>\n";
  s << "<text x=\"" << left + plot_w - 4 << "\" y=\"" << peak_y - 6
    << "\" text-anchor=\"end\">Peak: " << trace.peak_bytes << " B</text>\n";
  s << "</svg>\n";
  os << s.str();
}

void emit_trace(const Graph &graph, const MemoryTrace &trace, TraceFormat format,
                const std::filesystem::path &path) {
  std::ostringstream os;
  if (format == TraceFormat::csv)
    write_trace_csv(os, graph, trace);
  else
    write_trace_svg(os, graph, trace);
  write_file_atomic(path, os.str());
}

void write_file_atomic(const std::filesystem::path &path, std::string_view content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out)
      throw Error(ErrorKind::IoError, "cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out)
      throw Error(ErrorKind::IoError, "short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error(ErrorKind::IoError, "cannot rename into " + path.string());
  }
}

} // namespace opsched
