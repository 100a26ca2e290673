#include "iclr/corpus.hpp"

#include <fstream>
#include <set>
#include <unordered_set>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "iclr/error.hpp"
#include "iclr/text.hpp"

namespace iclr {

std::string_view to_string(SegmentShape shape) {
  return shape == SegmentShape::pair ? "pair" : "single";
}

SegmentShape parse_segment_shape(std::string_view name) {
  if (name == "single") return SegmentShape::single;
  if (name == "pair") return SegmentShape::pair;
  throw ConfigError("corpus", "unknown segment shape '" + std::string(name) +
                                  "' (valid: single, pair)");
}

std::string LabeledExample::input_text() const {
  if (premise) return *premise + " " + hypothesis.value_or("");
  return text;
}

LabelSpace::LabelSpace(std::vector<std::string> words, std::optional<std::string> instruction)
    : words_(std::move(words)), instruction_(std::move(instruction)) {
  if (words_.empty()) throw ConfigError("corpus", "label space is empty");
  std::set<std::string> seen;
  for (const auto& w : words_) {
    const std::string key = to_lower(trim(w));
    if (key.empty()) throw ConfigError("corpus", "empty label word");
    if (!seen.insert(key).second) throw ConfigError("corpus", "duplicate label word '" + w + "'");
  }
}

const std::string& LabelSpace::word(int label) const {
  if (!valid(label)) throw ConfigError("corpus", "label id " + std::to_string(label) + " out of range");
  return words_[static_cast<std::size_t>(label)];
}

std::optional<int> LabelSpace::find(std::string_view word) const {
  const std::string key = to_lower(trim(word));
  for (std::size_t i = 0; i < words_.size(); ++i) {
    if (to_lower(trim(words_[i])) == key) return static_cast<int>(i);
  }
  return std::nullopt;
}

namespace {

std::size_t count_of(std::string_view hay, std::string_view needle) {
  std::size_t n = 0;
  for (std::size_t pos = hay.find(needle); pos != std::string_view::npos;
       pos = hay.find(needle, pos + needle.size())) {
    ++n;
  }
  return n;
}

std::string fill(const std::string& pattern, const LabeledExample& e, const Template& tmpl,
                 std::string_view label_word) {
  if (tmpl.shape == SegmentShape::single && e.premise) {
    throw ConfigError("corpus", "example " + e.id + " is a pair but the template is single");
  }
  if (tmpl.shape == SegmentShape::pair && (!e.premise || !e.hypothesis)) {
    throw ConfigError("corpus", "example " + e.id + " lacks premise/hypothesis for a pair template");
  }
  // one left-to-right pass, so placeholder-like text inside values stays literal
  std::string out;
  std::size_t i = 0;
  while (i < pattern.size()) {
    if (tmpl.shape == SegmentShape::single && pattern.compare(i, 6, "{text}") == 0) {
      out += e.text;
      i += 6;
    } else if (tmpl.shape == SegmentShape::pair && pattern.compare(i, 9, "{premise}") == 0) {
      out += *e.premise;
      i += 9;
    } else if (tmpl.shape == SegmentShape::pair && pattern.compare(i, 12, "{hypothesis}") == 0) {
      out += *e.hypothesis;
      i += 12;
    } else if (pattern.compare(i, 7, "{label}") == 0) {
      out += label_word;
      i += 7;
    } else {
      out.push_back(pattern[i++]);
    }
  }
  return out;
}

}  // namespace

void Template::validate() const {
  const auto need = [](const std::string& p, std::string_view ph, const char* which) {
    if (p.find(ph) == std::string::npos) {
      throw ConfigError("corpus", std::string(which) + " pattern lacks " + std::string(ph));
    }
  };
  const auto forbid = [](const std::string& p, std::string_view ph, const char* which) {
    if (p.find(ph) != std::string::npos) {
      throw ConfigError("corpus", std::string(which) + " pattern must not contain " + std::string(ph));
    }
  };
  if (shape == SegmentShape::single) {
    need(demo_pattern, "{text}", "demo");
    need(query_pattern, "{text}", "query");
    for (auto ph : {"{premise}", "{hypothesis}"}) {
      forbid(demo_pattern, ph, "demo");
      forbid(query_pattern, ph, "query");
    }
  } else {
    for (auto ph : {"{premise}", "{hypothesis}"}) {
      need(demo_pattern, ph, "demo");
      need(query_pattern, ph, "query");
    }
    forbid(demo_pattern, "{text}", "demo");
    forbid(query_pattern, "{text}", "query");
  }
  if (count_of(demo_pattern, "{label}") != 1) {
    throw ConfigError("corpus", "demo pattern needs exactly one {label}");
  }
  forbid(query_pattern, "{label}", "query");
}

std::string unescape(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\\' && i + 1 < s.size()) {
      const char n = s[i + 1];
      if (n == 'n') {
        out.push_back('\n');
        ++i;
        continue;
      }
      if (n == 't') {
        out.push_back('\t');
        ++i;
        continue;
      }
      if (n == '\\') {
        out.push_back('\\');
        ++i;
        continue;
      }
    }
    out.push_back(s[i]);
  }
  return out;
}

std::map<std::string, Task> load_tasks(const std::filesystem::path& path) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::read_ini(path.string(), tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError("corpus", "cannot read templates: " + std::string(e.what()));
  }
  std::map<std::string, Task> tasks;
  for (const auto& [name, sec] : tree) {
    if (sec.empty()) continue;
    Task task;
    task.name = name;
    task.tmpl.shape = parse_segment_shape(sec.get<std::string>("shape", "single"));
    task.tmpl.demo_pattern = unescape(sec.get<std::string>("demo_pattern", ""));
    task.tmpl.query_pattern = unescape(sec.get<std::string>("query_pattern", ""));
    task.tmpl.separator = unescape(sec.get<std::string>("separator", "\\n\\n"));
    try {
      task.tmpl.validate();
    } catch (const ConfigError& e) {
      throw ConfigError("corpus", "task " + name + ": " + e.what());
    }
    std::vector<std::string> words;
    const std::string labels = sec.get<std::string>("labels", "");
    std::size_t start = 0;
    while (start <= labels.size()) {
      const std::size_t comma = labels.find(',', start);
      const std::size_t end = comma == std::string::npos ? labels.size() : comma;
      words.push_back(trim(std::string_view(labels).substr(start, end - start)));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    std::optional<std::string> instruction;
    if (auto v = sec.get_optional<std::string>("instruction")) instruction = unescape(*v);
    task.labels = LabelSpace(std::move(words), std::move(instruction));
    tasks.emplace(name, std::move(task));
  }
  if (tasks.empty()) throw ConfigError("corpus", "no tasks in " + path.string());
  return tasks;
}

nlohmann::json to_json(const LabeledExample& e) {
  nlohmann::json j;
  j["id"] = e.id;
  if (e.premise) {
    j["premise"] = *e.premise;
    j["hypothesis"] = e.hypothesis.value_or("");
  } else {
    j["text"] = e.text;
  }
  j["label"] = e.label;
  if (e.origin_id) j["origin_id"] = *e.origin_id;
  return j;
}

LabeledExample example_from_json(const nlohmann::json& j, const LabelSpace& labels) {
  if (!j.is_object()) throw ConfigError("corpus", "record is not an object");
  LabeledExample e;
  if (!j.contains("id") || !j["id"].is_string()) throw ConfigError("corpus", "missing string field 'id'");
  e.id = j["id"].get<std::string>();
  const bool has_text = j.contains("text");
  const bool has_pair = j.contains("premise") || j.contains("hypothesis");
  if (has_text == has_pair) {
    throw ConfigError("corpus", "record " + e.id + " needs either text or premise+hypothesis");
  }
  if (has_text) {
    e.text = j["text"].get<std::string>();
  } else {
    if (!j.contains("premise") || !j.contains("hypothesis")) {
      throw ConfigError("corpus", "record " + e.id + " needs both premise and hypothesis");
    }
    e.premise = j["premise"].get<std::string>();
    e.hypothesis = j["hypothesis"].get<std::string>();
  }
  if (!j.contains("label")) throw ConfigError("corpus", "record " + e.id + " has no label");
  const auto& l = j["label"];
  if (l.is_number_integer()) {
    e.label = l.get<int>();
    if (!labels.valid(e.label)) {
      throw ConfigError("corpus", "record " + e.id + ": unknown label id " + std::to_string(e.label));
    }
  } else if (l.is_string()) {
    auto id = labels.find(l.get<std::string>());
    if (!id) throw ConfigError("corpus", "record " + e.id + ": unknown label word '" + l.get<std::string>() + "'");
    e.label = *id;
  } else {
    throw ConfigError("corpus", "record " + e.id + ": label must be an integer or a word");
  }
  if (j.contains("origin_id") && !j["origin_id"].is_null()) e.origin_id = j["origin_id"].get<std::string>();
  return e;
}

std::vector<LabeledExample> load_dataset(const std::filesystem::path& path, SegmentShape shape,
                                         const LabelSpace& labels) {
  std::ifstream in(path);
  if (!in) throw ConfigError("corpus", "cannot open dataset " + path.string());
  std::vector<LabeledExample> out;
  std::unordered_set<std::string> ids;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const std::string where = path.filename().string() + ":" + std::to_string(lineno);
    LabeledExample e;
    try {
      e = example_from_json(nlohmann::json::parse(line), labels);
    } catch (const nlohmann::json::exception& ex) {
      throw ConfigError("corpus", where + ": malformed record: " + ex.what());
    } catch (const ConfigError& ex) {
      throw ConfigError("corpus", where + ": " + ex.what());
    }
    if (e.shape() != shape) {
      throw ConfigError("corpus", where + ": expected a " + std::string(to_string(shape)) + " record");
    }
    if (!ids.insert(e.id).second) throw ConfigError("corpus", where + ": duplicate id " + e.id);
    out.push_back(std::move(e));
  }
  return out;
}

void save_dataset(const std::filesystem::path& path, const std::vector<LabeledExample>& examples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure("corpus", "cannot write " + path.string());
  for (const auto& e : examples) out << to_json(e).dump() << '\n';
}

std::string render_demo_with_word(const LabeledExample& example, const Template& tmpl,
                                  std::string_view label_word) {
  return fill(tmpl.demo_pattern, example, tmpl, label_word);
}

std::string render_demo(const LabeledExample& example, const Template& tmpl,
                        const LabelSpace& labels) {
  return render_demo_with_word(example, tmpl, labels.word(example.label));
}

std::string render_query(const LabeledExample& example, const Template& tmpl) {
  return fill(tmpl.query_pattern, example, tmpl, {});
}

}  // namespace iclr
