#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace iclr {

enum class SegmentShape { single, pair };

std::string_view to_string(SegmentShape shape);
SegmentShape parse_segment_shape(std::string_view name);

/// One classification instance. Single-segment tasks populate `text`;
/// pair tasks populate `premise` and `hypothesis`.
struct LabeledExample {
  std::string id;
  std::string text;
  std::optional<std::string> premise;
  std::optional<std::string> hypothesis;
  int label = 0;
  /// Set on perturbed variants; names the unperturbed ancestor.
  std::optional<std::string> origin_id;

  SegmentShape shape() const {
    return premise ? SegmentShape::pair : SegmentShape::single;
  }
  /// Text used for tokenisation and retrieval: `text`, or
  /// premise + " " + hypothesis for pair tasks.
  std::string input_text() const;
  /// Deduplication key: origin_id when present, otherwise id.
  const std::string& lineage() const { return origin_id ? *origin_id : id; }

  bool operator==(const LabeledExample&) const = default;
};

/// Ordered label words; label ids are the positions 0..|Y|-1.
class LabelSpace {
 public:
  LabelSpace() = default;
  explicit LabelSpace(std::vector<std::string> words,
                      std::optional<std::string> instruction = std::nullopt);

  std::size_t size() const { return words_.size(); }
  const std::string& word(int label) const;
  const std::vector<std::string>& words() const { return words_; }
  const std::optional<std::string>& instruction() const { return instruction_; }
  bool valid(int label) const {
    return label >= 0 && static_cast<std::size_t>(label) < words_.size();
  }
  /// Inverse verbaliser: case-insensitive, surrounding whitespace ignored.
  std::optional<int> find(std::string_view word) const;

  bool operator==(const LabelSpace&) const = default;

 private:
  std::vector<std::string> words_;
  std::optional<std::string> instruction_;
};

struct Template {
  std::string demo_pattern;
  std::string query_pattern;
  std::string separator = "\n\n";
  SegmentShape shape = SegmentShape::single;

  /// Throws ConfigError when placeholders do not fit `shape`.
  void validate() const;

  bool operator==(const Template&) const = default;
};

/// A named task: template plus verbaliser.
struct Task {
  std::string name;
  Template tmpl;
  LabelSpace labels;
};

/// Reads an INI file with one section per task. Keys: shape, demo_pattern,
/// query_pattern, separator, labels (comma separated), instruction.
std::map<std::string, Task> load_tasks(const std::filesystem::path& path);

/// JSON-lines reader. Labels may be integer ids or label words.
std::vector<LabeledExample> load_dataset(const std::filesystem::path& path,
                                         SegmentShape shape,
                                         const LabelSpace& labels);
void save_dataset(const std::filesystem::path& path,
                  const std::vector<LabeledExample>& examples);

nlohmann::json to_json(const LabeledExample& e);
LabeledExample example_from_json(const nlohmann::json& j, const LabelSpace& labels);

std::string render_demo(const LabeledExample& example, const Template& tmpl,
                        const LabelSpace& labels);
/// Renders a demonstration with an explicit label word (used for
/// placeholder labels that are not part of the label space).
std::string render_demo_with_word(const LabeledExample& example,
                                  const Template& tmpl,
                                  std::string_view label_word);
std::string render_query(const LabeledExample& example, const Template& tmpl);

/// Expands \n, \t and \\ escapes (config values are single-line).
std::string unescape(std::string_view s);

}  // namespace iclr
