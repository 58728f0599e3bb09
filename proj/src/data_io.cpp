#include "ecp/data_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <regex>
#include <set>
#include <sstream>
#include <unordered_set>

#include "ecp/error.hpp"
#include "ecp/stats.hpp"
#include "json.hpp"

namespace ecp::io {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

// ---------------------------------------------------------------------------
// JSON field access with field-path error messages.

class FieldReader {
 public:
  FieldReader(const json& object, std::string path, std::vector<std::string>* warnings, bool lenient)
      : object_(object), path_(std::move(path)), warnings_(warnings), lenient_(lenient) {
    if (!object_.is_object()) fail(ErrorKind::ParseError, where() + "expected an object");
  }

  const json& required(const char* key) {
    seen_.insert(key);
    const auto it = object_.find(key);
    if (it == object_.end()) fail(ErrorKind::ParseError, "missing field '" + qualified(key) + "'");
    return *it;
  }

  const json* optional(const char* key) {
    seen_.insert(key);
    const auto it = object_.find(key);
    return it == object_.end() || it->is_null() ? nullptr : &*it;
  }

  double number(const char* key) { return as_number(required(key), key); }

  double number_or(const char* key, double fallback) {
    const json* v = optional(key);
    return v == nullptr ? fallback : as_number(*v, key);
  }

  std::string text(const char* key) {
    const json& v = required(key);
    if (!v.is_string()) fail(ErrorKind::ParseError, "field '" + qualified(key) + "' must be a string");
    return v.get<std::string>();
  }

  std::uint64_t count(const char* key) {
    const json& v = required(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
      fail(ErrorKind::ParseError, "field '" + qualified(key) + "' must be a non-negative integer");
    }
    return v.get<std::uint64_t>();
  }

  bool boolean(const char* key) {
    const json& v = required(key);
    if (!v.is_boolean()) fail(ErrorKind::ParseError, "field '" + qualified(key) + "' must be a boolean");
    return v.get<bool>();
  }

  std::vector<double> numbers(const char* key) {
    const json& v = required(key);
    if (!v.is_array()) fail(ErrorKind::ParseError, "field '" + qualified(key) + "' must be an array");
    std::vector<double> out;
    for (const auto& item : v) out.push_back(as_number(item, key));
    return out;
  }

  std::string qualified(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  /// Reports fields that were never asked for.
  void finish() {
    for (const auto& [key, value] : object_.items()) {
      if (seen_.contains(key)) continue;
      const std::string message = "unknown field '" + qualified(key) + "'";
      if (!lenient_) fail(ErrorKind::ParseError, message);
      if (warnings_ != nullptr) warnings_->push_back(message);
    }
  }

  std::vector<std::string>* warnings() const { return warnings_; }
  bool lenient() const { return lenient_; }

 private:
  double as_number(const json& v, const char* key) const {
    if (!v.is_number()) fail(ErrorKind::ParseError, "field '" + qualified(key) + "' must be a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) fail(ErrorKind::ParseError, "field '" + qualified(key) + "' is not finite");
    return d;
  }

  std::string where() const { return path_.empty() ? std::string() : "'" + path_ + "': "; }

  const json& object_;
  std::string path_;
  std::set<std::string, std::less<>> seen_;
  std::vector<std::string>* warnings_;
  bool lenient_;
};

json parse_json(std::string_view text, const std::string& context) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    fail(ErrorKind::ParseError, context + ": " + e.what());
  }
}

ResistanceBreakdown read_breakdown(const json& v, const std::string& path, std::vector<std::string>* warnings,
                                   bool lenient) {
  FieldReader r(v, path, warnings, lenient);
  ResistanceBreakdown b;
  b.plan = r.number("plan");
  b.operation = r.number("operation");
  b.domain = r.number("domain");
  b.calculate = r.number("calculate");
  r.finish();
  try {
    b.validate();
  } catch (const Error& e) {
    fail(ErrorKind::ParseError, "'" + path + "': " + e.message());
  }
  return b;
}

ordered_json breakdown_json(const ResistanceBreakdown& b) {
  ordered_json j;
  j["plan"] = b.plan;
  j["operation"] = b.operation;
  j["domain"] = b.domain;
  j["calculate"] = b.calculate;
  return j;
}

StrategyKind read_strategy(const json& v, const std::string& path, std::vector<std::string>* warnings,
                           bool lenient) {
  if (v.is_string()) {
    const auto tag = v.get<std::string>();
    if (tag == "zero_shot") return ZeroShot{};
    if (tag == "direct_answer") return DirectAnswer{};
    if (tag == "tool_usage") return ToolUsage{};
    if (tag == "program_of_thought") return ProgramOfThought{};
    fail(ErrorKind::ParseError, "'" + path + "': strategy '" + tag +
                                    "' needs parameters; use an object with a \"tag\" field");
  }
  FieldReader r(v, path, warnings, lenient);
  const std::string tag = r.text("tag");
  StrategyKind kind;
  const auto read_branches = [&](const char* key) {
    std::vector<ResistanceBreakdown> out;
    if (const json* list = r.optional(key)) {
      if (!list->is_array()) fail(ErrorKind::ParseError, "field '" + r.qualified(key) + "' must be an array");
      for (std::size_t i = 0; i < list->size(); ++i) {
        out.push_back(read_breakdown((*list)[i], r.qualified(key) + "[" + std::to_string(i) + "]", warnings, lenient));
      }
    }
    return out;
  };
  if (tag == "zero_shot") {
    kind = ZeroShot{};
  } else if (tag == "tool_usage") {
    kind = ToolUsage{};
  } else if (tag == "program_of_thought") {
    kind = ProgramOfThought{};
  } else if (tag == "direct_answer") {
    DirectAnswer s;
    if (r.optional("plan") || r.optional("operation") || r.optional("calculate") || r.optional("domain")) {
      DirectAnswerMultipliers m;
      m.plan = r.number_or("plan", m.plan);
      m.operation = r.number_or("operation", m.operation);
      m.domain = r.number_or("domain", m.domain);
      m.calculate = r.number_or("calculate", m.calculate);
      s.multipliers = m;
    }
    kind = s;
  } else if (tag == "self_consistency") {
    SelfConsistency s;
    s.n = r.count("n");
    s.r_s = r.number("r_s");
    s.branches = read_branches("branches");
    kind = s;
  } else if (tag == "coverage") {
    Coverage s;
    s.n = r.count("n");
    s.branches = read_branches("branches");
    kind = s;
  } else if (tag == "fine_grained_sc") {
    FineGrainedSC s;
    s.n = r.count("n");
    s.step_resistances = r.numbers("step_resistances");
    s.step_verifications = r.numbers("step_verifications");
    kind = s;
  } else if (tag == "chain_of_verification") {
    ChainOfVerification s;
    s.n = r.count("n");
    s.k = r.count("k");
    s.r_s = r.number("r_s");
    s.r_meta = r.number("r_meta");
    kind = s;
  } else {
    fail(ErrorKind::ParseError, "'" + path + "': unknown strategy tag '" + tag + "'");
  }
  r.finish();
  return kind;
}

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

ordered_json strategy_json(const StrategyKind& kind) {
  const auto tagged = [&] {
    ordered_json j;
    j["tag"] = std::string(strategy_tag(kind));
    return j;
  };
  const auto branches_json = [](const std::vector<ResistanceBreakdown>& branches) {
    ordered_json list = ordered_json::array();
    for (const auto& b : branches) list.push_back(breakdown_json(b));
    return list;
  };
  return std::visit(overloaded{
                        [&](const ZeroShot&) { return ordered_json("zero_shot"); },
                        [&](const ToolUsage&) { return ordered_json("tool_usage"); },
                        [&](const ProgramOfThought&) { return ordered_json("program_of_thought"); },
                        [&](const DirectAnswer& s) {
                          if (!s.multipliers) return ordered_json("direct_answer");
                          auto j = tagged();
                          j["plan"] = s.multipliers->plan;
                          j["operation"] = s.multipliers->operation;
                          j["domain"] = s.multipliers->domain;
                          j["calculate"] = s.multipliers->calculate;
                          return j;
                        },
                        [&](const SelfConsistency& s) {
                          auto j = tagged();
                          j["n"] = s.n;
                          j["r_s"] = s.r_s;
                          if (!s.branches.empty()) j["branches"] = branches_json(s.branches);
                          return j;
                        },
                        [&](const Coverage& s) {
                          auto j = tagged();
                          j["n"] = s.n;
                          if (!s.branches.empty()) j["branches"] = branches_json(s.branches);
                          return j;
                        },
                        [&](const FineGrainedSC& s) {
                          auto j = tagged();
                          j["n"] = s.n;
                          j["step_resistances"] = s.step_resistances;
                          j["step_verifications"] = s.step_verifications;
                          return j;
                        },
                        [&](const ChainOfVerification& s) {
                          auto j = tagged();
                          j["n"] = s.n;
                          j["k"] = s.k;
                          j["r_s"] = s.r_s;
                          j["r_meta"] = s.r_meta;
                          return j;
                        },
                    },
                    kind);
}

RunRecord read_run(const json& v, const std::string& path, std::vector<std::string>* warnings, bool lenient) {
  FieldReader r(v, path, warnings, lenient);
  RunRecord run;
  run.model = r.text("model");
  run.temperature = r.number("temperature");
  if (run.temperature < 0.0 || run.temperature > 1.0) {
    fail(ErrorKind::ParseError, "field '" + r.qualified("temperature") + "' must lie in [0, 1]");
  }
  run.strategy = read_strategy(r.required("strategy"), r.qualified("strategy"), warnings, lenient);
  run.representation = r.text("representation");
  const json& demos = r.required("demo_ids");
  if (!demos.is_array()) fail(ErrorKind::ParseError, "field '" + r.qualified("demo_ids") + "' must be an array");
  for (const auto& id : demos) {
    if (!id.is_string()) fail(ErrorKind::ParseError, "field '" + r.qualified("demo_ids") + "' must hold strings");
    run.demo_ids.push_back(id.get<std::string>());
  }
  run.correct = r.boolean("correct");
  r.finish();
  return run;
}

TaskRecord read_task(const json& v, std::vector<std::string>* warnings, bool lenient) {
  FieldReader r(v, "", warnings, lenient);
  TaskRecord task;
  task.task_id = r.text("task_id");
  task.family = r.text("family");
  task.query = r.text("query");
  task.resistance = read_breakdown(r.required("resistance"), "resistance", warnings, lenient);
  if (const json* e = r.optional("embedding_id")) {
    if (!e->is_string()) fail(ErrorKind::ParseError, "field 'embedding_id' must be a string or null");
    task.embedding_id = e->get<std::string>();
  }
  const json& runs = r.required("runs");
  if (!runs.is_array()) fail(ErrorKind::ParseError, "field 'runs' must be an array");
  for (std::size_t i = 0; i < runs.size(); ++i) {
    task.runs.push_back(read_run(runs[i], "runs[" + std::to_string(i) + "]", warnings, lenient));
  }
  r.finish();
  return task;
}

ordered_json task_json(const TaskRecord& task) {
  ordered_json j;
  j["task_id"] = task.task_id;
  j["family"] = task.family;
  j["query"] = task.query;
  j["resistance"] = breakdown_json(task.resistance);
  j["embedding_id"] = task.embedding_id ? ordered_json(*task.embedding_id) : ordered_json(nullptr);
  ordered_json runs = ordered_json::array();
  for (const auto& run : task.runs) {
    ordered_json rj;
    rj["model"] = run.model;
    rj["temperature"] = run.temperature;
    rj["strategy"] = strategy_json(run.strategy);
    rj["representation"] = run.representation;
    rj["demo_ids"] = run.demo_ids;
    rj["correct"] = run.correct;
    runs.push_back(std::move(rj));
  }
  j["runs"] = std::move(runs);
  return j;
}

std::ofstream open_for_write(const std::filesystem::path& path, bool binary = false) {
  std::ofstream out(path, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
  if (!out) fail(ErrorKind::IoError, "cannot open '" + path.string() + "' for writing");
  return out;
}

void finish_write(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) fail(ErrorKind::IoError, "failed writing '" + path.string() + "'");
}

// ---------------------------------------------------------------------------
// Binary embedding helpers.

class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

  std::size_t offset() const { return offset_; }
  std::size_t remaining() const { return bytes_.size() - offset_; }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n) {
      fail(ErrorKind::FormatError, "truncated " + std::string(what) + " at byte offset " + std::to_string(offset_));
    }
  }

  std::uint64_t u64(const char* what) { return read_le<std::uint64_t>(what); }
  std::uint16_t u16(const char* what) { return read_le<std::uint16_t>(what); }

  float f32(const char* what) { return std::bit_cast<float>(read_le<std::uint32_t>(what)); }

  std::string_view take(std::size_t n, const char* what) {
    need(n, what);
    const auto out = bytes_.substr(offset_, n);
    offset_ += n;
    return out;
  }

 private:
  template <class T>
  T read_le(const char* what) {
    need(sizeof(T), what);
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      value |= static_cast<T>(static_cast<T>(static_cast<unsigned char>(bytes_[offset_ + i])) << (8 * i));
    }
    offset_ += sizeof(T);
    return value;
  }

  std::string_view bytes_;
  std::size_t offset_ = 0;
};

template <class T>
void put_le(std::string& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
}

double through_float(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace

// ---------------------------------------------------------------------------

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IoError, "cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string format_number(double value) {
  std::array<char, 64> buf{};
  const auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  return std::string(buf.data(), end);
}

LoadedTasks parse_tasks(std::istream& in, const LoadOptions& options) {
  LoadedTasks out;
  std::unordered_set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const std::string context = "line " + std::to_string(line_no);
    TaskRecord task;
    try {
      task = read_task(parse_json(line, context), &out.warnings, options.lenient);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::ParseError || e.message().starts_with(context)) throw;
      fail(ErrorKind::ParseError, context + ": " + e.message());
    } catch (const json::exception& e) {
      fail(ErrorKind::ParseError, context + ": " + e.what());
    }
    if (!ids.insert(task.task_id).second) {
      fail(ErrorKind::DuplicateId, context + ": task_id '" + task.task_id + "' already defined");
    }
    out.tasks.push_back(std::move(task));
  }
  return out;
}

LoadedTasks load_tasks(const std::filesystem::path& path, const LoadOptions& options) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot open '" + path.string() + "'");
  return parse_tasks(in, options);
}

void write_tasks(const std::vector<TaskRecord>& tasks, std::ostream& out) {
  for (const auto& task : tasks) out << task_json(task).dump() << '\n';
}

void save_tasks(const std::vector<TaskRecord>& tasks, const std::filesystem::path& path) {
  auto out = open_for_write(path);
  write_tasks(tasks, out);
  finish_write(out, path);
}

DemoPool parse_embeddings_binary(std::string_view bytes) {
  ByteReader reader(bytes);
  const auto magic = reader.take(kEmbeddingMagic.size(), "magic");
  if (magic != kEmbeddingMagic) fail(ErrorKind::FormatError, "bad magic at byte offset 0");
  const std::size_t dim_offset = reader.offset();
  const std::uint64_t dim = reader.u64("header dim");
  const std::uint64_t count = reader.u64("header count");
  if (dim == 0) fail(ErrorKind::FormatError, "dim must be >= 1 at byte offset " + std::to_string(dim_offset));

  DemoPool pool;
  for (std::uint64_t row = 0; row < count; ++row) {
    const std::size_t row_offset = reader.offset();
    const std::uint16_t id_len = reader.u16("row id length");
    std::string id(reader.take(id_len, "row id"));
    if (dim > reader.remaining() / sizeof(float)) reader.need(reader.remaining() + 1, "row values");
    EmbeddingVector v{std::move(id), {}};
    v.values.reserve(dim);
    for (std::uint64_t d = 0; d < dim; ++d) v.values.push_back(static_cast<double>(reader.f32("row values")));
    try {
      pool.add(std::move(v));
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::DuplicateId) throw;
      fail(ErrorKind::FormatError, std::string(e.what()) + " (row at byte offset " + std::to_string(row_offset) + ")");
    }
  }
  if (reader.remaining() != 0) {
    fail(ErrorKind::FormatError, "trailing bytes after the last row at byte offset " + std::to_string(reader.offset()));
  }
  return pool;
}

DemoPool parse_embeddings_text(std::string_view text) {
  DemoPool pool;
  std::size_t line_no = 0;
  std::size_t offset = 0;
  while (offset < text.size()) {
    const std::size_t end = std::min(text.find('\n', offset), text.size());
    std::string_view line = text.substr(offset, end - offset);
    ++line_no;
    const std::string where = "line " + std::to_string(line_no) + " (byte offset " + std::to_string(offset) + ")";
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") != std::string_view::npos) {
      json row;
      try {
        row = json::parse(line.begin(), line.end());
      } catch (const json::parse_error& e) {
        fail(ErrorKind::FormatError, where + ": " + e.what());
      }
      if (!row.is_object() || !row.contains("id") || !row["id"].is_string()) {
        fail(ErrorKind::FormatError, where + ": missing string field 'id'");
      }
      if (!row.contains("vector") || !row["vector"].is_array()) {
        fail(ErrorKind::FormatError, where + ": missing array field 'vector'");
      }
      for (const auto& [key, value] : row.items()) {
        if (key != "id" && key != "vector" && key != "payload") {
          fail(ErrorKind::FormatError, where + ": unknown field '" + key + "'");
        }
      }
      EmbeddingVector v{row["id"].get<std::string>(), {}};
      for (const auto& x : row["vector"]) {
        if (!x.is_number()) fail(ErrorKind::FormatError, where + ": non-numeric vector entry");
        v.values.push_back(through_float(x.get<double>()));
      }
      if (v.values.empty()) fail(ErrorKind::FormatError, where + ": empty vector");
      if (!pool.empty() && v.dim() != pool.dim()) {
        fail(ErrorKind::FormatError, where + ": dimension " + std::to_string(v.dim()) + " disagrees with " +
                                         std::to_string(pool.dim()));
      }
      std::string payload;
      if (row.contains("payload")) {
        if (!row["payload"].is_string()) fail(ErrorKind::FormatError, where + ": 'payload' must be a string");
        payload = row["payload"].get<std::string>();
      }
      try {
        pool.add(std::move(v), std::move(payload));
      } catch (const Error& e) {
        if (e.kind() == ErrorKind::DuplicateId) fail(ErrorKind::DuplicateId, where + ": " + e.what());
        fail(ErrorKind::FormatError, where + ": " + e.what());
      }
    }
    offset = end + 1;
  }
  return pool;
}

DemoPool load_embeddings(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  const std::string_view view(bytes);
  if (view.starts_with(kEmbeddingMagic.substr(0, 7))) return parse_embeddings_binary(view);
  return parse_embeddings_text(view);
}

std::string encode_embeddings(const DemoPool& pool, EmbeddingEncoding encoding) {
  std::string out;
  if (encoding == EmbeddingEncoding::binary) {
    out.append(kEmbeddingMagic);
    put_le<std::uint64_t>(out, pool.empty() ? 1 : pool.dim());
    put_le<std::uint64_t>(out, pool.size());
    for (const auto& entry : pool.entries()) {
      const auto& id = entry.vector.id;
      if (id.size() > 0xFFFF) fail(ErrorKind::InvalidInput, "embedding id longer than 65535 bytes");
      put_le<std::uint16_t>(out, static_cast<std::uint16_t>(id.size()));
      out.append(id);
      for (double v : entry.vector.values) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
    return out;
  }
  for (const auto& entry : pool.entries()) {
    ordered_json row;
    row["id"] = entry.vector.id;
    ordered_json values = ordered_json::array();
    for (double v : entry.vector.values) values.push_back(through_float(v));
    row["vector"] = std::move(values);
    if (!entry.payload.empty()) row["payload"] = entry.payload;
    out.append(row.dump());
    out.push_back('\n');
  }
  return out;
}

void save_embeddings(const DemoPool& pool, const std::filesystem::path& path, EmbeddingEncoding encoding) {
  auto out = open_for_write(path, true);
  const auto bytes = encode_embeddings(pool, encoding);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  finish_write(out, path);
}

FitParams parse_params(std::string_view text) {
  const json root = parse_json(text, "params");
  FieldReader r(root, "", nullptr, false);
  FitParams p;
  p.r0 = r.number("r0");
  const auto read_map = [&](const char* key) {
    std::map<std::string, double> out;
    const json& m = r.required(key);
    if (!m.is_object()) fail(ErrorKind::ParseError, "field '" + std::string(key) + "' must be an object");
    for (const auto& [name, value] : m.items()) {
      if (!value.is_number()) fail(ErrorKind::ParseError, "field '" + std::string(key) + "." + name + "' must be a number");
      out.emplace(name, value.get<double>());
    }
    return out;
  };
  p.emf_model = read_map("emf_model");
  p.lambda = read_map("lambda");
  p.domain_constants = read_map("domain_constants");
  {
    FieldReader c(r.required("calib"), "calib", nullptr, false);
    p.calib.a = c.number("a");
    p.calib.b = c.number("b");
    c.finish();
  }
  p.gauge_model = r.text("gauge_model");
  if (const json* da = r.optional("direct_answer")) {
    FieldReader d(*da, "direct_answer", nullptr, false);
    p.direct_answer.plan = d.number("plan");
    p.direct_answer.operation = d.number("operation");
    p.direct_answer.domain = d.number_or("domain", 1.0);
    p.direct_answer.calculate = d.number("calculate");
    d.finish();
  }
  r.finish();
  try {
    p.validate();
  } catch (const Error& e) {
    fail(ErrorKind::ParseError, std::string("params: ") + e.what());
  }
  return p;
}

FitParams load_params(const std::filesystem::path& path) { return parse_params(read_file(path)); }

std::string encode_params(const FitParams& p) {
  ordered_json j;
  j["r0"] = p.r0;
  j["emf_model"] = p.emf_model;
  j["lambda"] = p.lambda;
  j["domain_constants"] = ordered_json::object();
  for (const auto& [k, v] : p.domain_constants) j["domain_constants"][k] = v;
  j["calib"] = {{"a", p.calib.a}, {"b", p.calib.b}};
  j["gauge_model"] = p.gauge_model;
  j["direct_answer"] = {{"plan", p.direct_answer.plan},
                        {"operation", p.direct_answer.operation},
                        {"domain", p.direct_answer.domain},
                        {"calculate", p.direct_answer.calculate}};
  if (p.emf_model.empty()) j["emf_model"] = ordered_json::object();
  if (p.lambda.empty()) j["lambda"] = ordered_json::object();
  return j.dump(2) + "\n";
}

void save_params(const FitParams& params, const std::filesystem::path& path) {
  auto out = open_for_write(path);
  out << encode_params(params);
  finish_write(out, path);
}

StrategyKind parse_strategy(std::string_view json_text) {
  const json v = parse_json(json_text, "strategy");
  return read_strategy(v, "strategy", nullptr, false);
}

std::string encode_strategy(const StrategyKind& kind) { return strategy_json(kind).dump(); }

SimulationConfig parse_strategy_config(std::string_view text) {
  const json root = parse_json(text, "strategy file");
  FieldReader r(root, "", nullptr, false);
  SimulationConfig config;
  config.spec.kind = read_strategy(r.required("strategy"), "strategy", nullptr, false);
  config.spec.base = read_breakdown(r.required("base"), "base", nullptr, false);
  config.emf_model = r.number_or("emf_model", 1.0);
  config.e_itl = r.number_or("e_itl", 0.0);
  config.r0 = r.number_or("r0", 1.0);
  if (const json* rule = r.optional("rule")) {
    if (!rule->is_string()) fail(ErrorKind::ParseError, "field 'rule' must be a string");
    try {
      config.rule = parse_sample_rule(rule->get<std::string>());
    } catch (const Error& e) {
      fail(ErrorKind::ParseError, e.what());
    }
  }
  r.finish();
  return config;
}

SimulationConfig load_strategy_file(const std::filesystem::path& path) {
  return parse_strategy_config(read_file(path));
}

StepAnnotation annotate_steps(std::string_view rationale) {
  StepAnnotation a;
  if (rationale.empty()) return a;

  static const std::regex marker(R"(step[ \t]*[0-9]+:)", std::regex::icase);
  const std::string text(rationale);
  const auto markers = static_cast<std::size_t>(
      std::distance(std::sregex_iterator(text.begin(), text.end(), marker), std::sregex_iterator()));

  std::size_t separators = 0;
  for (std::size_t pos = text.find("\n\n"); pos != std::string::npos; pos = text.find("\n\n", pos + 2)) {
    ++separators;
  }
  a.plan_steps = std::max(markers, separators);

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c != ',' && c != ';' && c != '.') continue;
    if (i + 1 == text.size() || std::isspace(static_cast<unsigned char>(text[i + 1]))) ++a.local_ops;
  }

  std::size_t line_start = 0;
  while (line_start <= text.size()) {
    const std::size_t line_end = std::min(text.find('\n', line_start), text.size());
    std::string_view line(text.data() + line_start, line_end - line_start);
    const auto first = line.find_first_not_of(" \t");
    if (first != std::string_view::npos) {
      line.remove_prefix(first);
      if (line.starts_with("- ") || line.starts_with("\xE2\x80\xA2 ")) ++a.local_ops;
    }
    line_start = line_end + 1;
  }
  return a;
}

ReportFormat parse_report_format(std::string_view text) {
  if (text == "csv") return ReportFormat::csv;
  if (text == "svg-scatter" || text == "svg") return ReportFormat::svg_scatter;
  fail(ErrorKind::InvalidInput, "unknown report format '" + std::string(text) + "'");
}

std::string csv_field(std::string_view value) {
  if (value.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(value);
  std::string out = "\"";
  for (char c : value) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::vector<std::string> split_csv_record(std::string_view line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  bool was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"' && field.empty() && !was_quoted) {
      quoted = true;
      was_quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
      was_quoted = false;
    } else {
      field.push_back(c);
    }
  }
  if (quoted) fail(ErrorKind::ParseError, "unterminated quoted csv field");
  fields.push_back(std::move(field));
  return fields;
}

void write_report_csv(const std::vector<ReportRow>& rows, std::ostream& out) {
  out << "power_mid,accuracy,count,model,strategy\n";
  for (const auto& row : rows) {
    out << format_number(row.power_mid) << ',' << format_number(row.accuracy) << ',' << row.count << ','
        << csv_field(row.model) << ',' << csv_field(row.strategy) << '\n';
  }
}

std::vector<ReportRow> parse_report_csv(std::istream& in) {
  std::vector<ReportRow> rows;
  std::string record;
  std::string line;
  std::size_t line_no = 0;
  bool header = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    record += line;
    // A record continues while a quoted field is open.
    if (std::count(record.begin(), record.end(), '"') % 2 != 0) {
      record.push_back('\n');
      continue;
    }
    const auto fields = split_csv_record(record);
    record.clear();
    if (header) {
      header = false;
      if (fields != std::vector<std::string>{"power_mid", "accuracy", "count", "model", "strategy"}) {
        fail(ErrorKind::ParseError, "line 1: unexpected csv header");
      }
      continue;
    }
    if (fields.size() != 5) fail(ErrorKind::ParseError, "line " + std::to_string(line_no) + ": expected 5 fields");
    ReportRow row;
    try {
      std::size_t used = 0;
      row.power_mid = std::stod(fields[0], &used);
      row.accuracy = std::stod(fields[1]);
      row.count = static_cast<std::size_t>(std::stoull(fields[2]));
    } catch (const std::exception&) {
      fail(ErrorKind::ParseError, "line " + std::to_string(line_no) + ": bad numeric field");
    }
    row.model = fields[3];
    row.strategy = fields[4];
    rows.push_back(std::move(row));
  }
  if (!record.empty()) fail(ErrorKind::ParseError, "unterminated quoted csv field at end of input");
  if (header) fail(ErrorKind::ParseError, "empty csv");
  return rows;
}

std::vector<ReportRow> read_report_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot open '" + path.string() + "'");
  return parse_report_csv(in);
}

namespace {

std::string xml_escape(std::string_view text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

}  // namespace

void write_report_svg(const std::vector<ReportRow>& rows, std::ostream& out, const SvgOptions& svg) {
  constexpr double width = 640.0;
  constexpr double height = 480.0;
  constexpr double margin = 60.0;

  double x_min = 0.0;
  double x_max = 1.0;
  if (!rows.empty()) {
    const auto [lo, hi] = std::minmax_element(rows.begin(), rows.end(), [](const ReportRow& a, const ReportRow& b) {
      return a.power_mid < b.power_mid;
    });
    x_min = std::min(0.0, lo->power_mid);
    x_max = hi->power_mid > x_min ? hi->power_mid : x_min + 1.0;
  }
  const auto sx = [&](double x) { return margin + (x - x_min) / (x_max - x_min) * (width - 2 * margin); };
  const auto sy = [&](double y) { return height - margin - std::clamp(y, 0.0, 1.0) * (height - 2 * margin); };

  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
  out << "  <rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
  if (!svg.title.empty()) {
    out << "  <text x=\"" << width / 2 << "\" y=\"30\" text-anchor=\"middle\" font-size=\"16\">"
        << xml_escape(svg.title) << "</text>\n";
  }
  out << "  <line x1=\"" << margin << "\" y1=\"" << height - margin << "\" x2=\"" << width - margin << "\" y2=\""
      << height - margin << "\" stroke=\"black\"/>\n";
  out << "  <line x1=\"" << margin << "\" y1=\"" << margin << "\" x2=\"" << margin << "\" y2=\"" << height - margin
      << "\" stroke=\"black\"/>\n";
  out << "  <text x=\"" << width / 2 << "\" y=\"" << height - 15
      << "\" text-anchor=\"middle\" font-size=\"12\">power</text>\n";
  out << "  <text x=\"15\" y=\"" << height / 2 << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 15 "
      << height / 2 << ")\">accuracy</text>\n";
  out << "  <text x=\"" << margin << "\" y=\"" << height - margin + 18 << "\" font-size=\"10\">"
      << format_number(x_min) << "</text>\n";
  out << "  <text x=\"" << width - margin << "\" y=\"" << height - margin + 18
      << "\" text-anchor=\"end\" font-size=\"10\">" << format_number(x_max) << "</text>\n";
  out << "  <g fill=\"steelblue\">\n";
  for (const auto& row : rows) {
    out << "    <circle cx=\"" << sx(row.power_mid) << "\" cy=\"" << sy(row.accuracy) << "\" r=\"4\"><title>"
        << xml_escape(row.model + " " + row.strategy) << " n=" << row.count << "</title></circle>\n";
  }
  out << "  </g>\n";

  if (svg.fitted_line && rows.size() >= 2) {
    std::vector<double> xs;
    std::vector<double> ys;
    for (const auto& row : rows) {
      xs.push_back(row.power_mid);
      ys.push_back(row.accuracy);
    }
    try {
      const auto fit = stats::least_squares(xs, ys);
      out << "  <line class=\"fit\" x1=\"" << sx(x_min) << "\" y1=\"" << sy(fit.slope * x_min + fit.intercept)
          << "\" x2=\"" << sx(x_max) << "\" y2=\"" << sy(fit.slope * x_max + fit.intercept)
          << "\" stroke=\"firebrick\" stroke-width=\"2\"/>\n";
    } catch (const Error&) {
      // All bins share one power; nothing to fit.
    }
  }
  out << "</svg>\n";
}

void write_report(const std::vector<ReportRow>& rows, const std::filesystem::path& path, ReportFormat format,
                  const SvgOptions& svg) {
  auto out = open_for_write(path);
  if (format == ReportFormat::csv) {
    write_report_csv(rows, out);
  } else {
    write_report_svg(rows, out, svg);
  }
  finish_write(out, path);
}

}  // namespace ecp::io
