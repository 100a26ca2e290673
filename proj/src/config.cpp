#include "iclr/config.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>

#include "iclr/error.hpp"
#include "iclr/remote.hpp"
#include "iclr/text.hpp"
#include "iclr/victim.hpp"

namespace iclr {

namespace pt = boost::property_tree;

ConfigFile ConfigFile::load(const std::filesystem::path& path) {
  ConfigFile cfg;
  if (!std::filesystem::exists(path)) throw ConfigError("config", "no such file: " + path.string());
  try {
    pt::read_ini(path.string(), cfg.tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("config", e.what());
  }
  cfg.base_dir = std::filesystem::absolute(path).parent_path();
  return cfg;
}

void ConfigFile::apply_override(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ConfigError("config", "override must look like section.key=value: " + std::string(assignment));
  }
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void ConfigFile::set(const std::string& key, const std::string& value) {
  if (std::count(key.begin(), key.end(), '.') > 1) {
    throw ConfigError("config", "keys are section.key or key: " + key);
  }
  tree.put(key, value);
}

std::string ConfigFile::get(const std::string& key, const std::string& fallback) const {
  return tree.get<std::string>(key, fallback);
}

std::filesystem::path ConfigFile::path(const std::string& key, const std::string& fallback) const {
  const std::string v = get(key, fallback);
  if (v.empty()) return {};
  std::filesystem::path p(v);
  return p.is_absolute() ? p : (base_dir / p).lexically_normal();
}

std::string ConfigFile::echo() const {
  std::ostringstream out;
  try {
    pt::write_ini(out, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("config", e.what());
  }
  return out.str();
}

namespace {

template <typename T>
T number(const ConfigFile& cfg, const std::string& key, T fallback) {
  const auto v = cfg.tree.get_optional<std::string>(key);
  if (!v || trim(*v).empty()) return fallback;
  const std::string s = trim(*v);
  T out{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError("config", key + ": not a number: " + s);
  }
  return out;
}

bool flag(const ConfigFile& cfg, const std::string& key, bool fallback) {
  const std::string v = to_lower(trim(cfg.get(key, fallback ? "true" : "false")));
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config", key + ": expected true or false, got " + v);
}

std::vector<std::string> list(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const std::size_t comma = s.find(',', start);
    const std::size_t end = comma == std::string::npos ? s.size() : comma;
    std::string item = trim(std::string_view(s).substr(start, end - start));
    if (!item.empty()) out.push_back(std::move(item));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::filesystem::path required(const ConfigFile& cfg, const std::string& key) {
  auto p = cfg.path(key, "");
  if (p.empty()) throw ConfigError("config", "missing required key " + key);
  return p;
}

RemoteConfig remote_config(const ConfigFile& cfg, const std::string& section) {
  RemoteConfig rc;
  rc.base_url = cfg.get(section + ".url", "");
  if (rc.base_url.empty()) throw ConfigError("config", section + ".url is required for remote use");
  rc.path = cfg.get(section + ".path", section == "victim" ? "/v1/completions" : "/v1/embeddings");
  rc.model = cfg.get(section + ".model", "");
  rc.api_key_env = cfg.get(section + ".api_key_env", "ICLR_API_KEY");
  rc.logprobs = number(cfg, section + ".logprobs", 20);
  rc.max_retries = number(cfg, section + ".max_retries", 3);
  rc.initial_backoff = std::chrono::milliseconds(number(cfg, section + ".backoff_ms", 500));
  rc.max_in_flight = number(cfg, section + ".max_in_flight", 4);
  rc.extra_key_tokens = list(cfg.get(section + ".extra_keys", ""));
  return rc;
}

}  // namespace

std::shared_ptr<const Victim> make_victim(const ConfigFile& cfg, const Task& task) {
  const std::string kind = cfg.get("victim.kind", "toy");
  if (kind == "toy") {
    ToyVictimConfig tc;
    const auto lex = cfg.path("victim.lexicon", "");
    if (!lex.empty()) tc.lexicon = load_lexicon(lex);
    tc.lambda_lex = number(cfg, "victim.lambda", 1.0);
    tc.mu_demo = number(cfg, "victim.mu", 4.0);
    tc.temperature = number(cfg, "victim.temperature", 1.0);
    tc.extra_key_tokens = list(cfg.get("victim.extra_keys", ""));
    return std::make_shared<const ToyVictim>(std::move(tc), task.labels.size());
  }
  if (kind == "remote") {
    RemoteConfig rc = remote_config(cfg, "victim");
    const auto timeout = std::chrono::seconds(number(cfg, "victim.timeout_s", 60));
    auto transport = std::make_shared<const HttplibTransport>(rc.base_url, timeout);
    return std::make_shared<const RemoteVictim>(std::move(rc), std::move(transport));
  }
  throw ConfigError("config", "unknown victim kind '" + kind + "' (valid: toy, remote)");
}

RunConfig make_run_config(const ConfigFile& cfg) {
  RunConfig rc;
  rc.seed = number<std::uint64_t>(cfg, "seed", 42);

  const auto templates = required(cfg, "data.templates");
  const auto tasks = load_tasks(templates);
  const std::string task_name = cfg.get("data.task", "");
  auto it = tasks.find(task_name);
  if (it == tasks.end()) {
    std::string valid;
    for (const auto& [n, t] : tasks) valid += (valid.empty() ? "" : ", ") + n;
    throw ConfigError("config", "unknown task '" + task_name + "' (valid: " + valid + ")");
  }
  rc.task = it->second;
  rc.dataset = cfg.get("data.name", task_name);

  const std::string tok = cfg.get("retrieval.tokenizer", "word");
  if (tok == "wordpiece") {
    rc.tokenizer = std::make_shared<const WordpieceTokenizer>(
        WordpieceTokenizer::from_file(required(cfg, "retrieval.vocab")));
  } else if (tok != "word") {
    throw ConfigError("config", "unknown tokenizer '" + tok + "' (valid: word, wordpiece)");
  }

  rc.train = load_dataset(required(cfg, "data.train"), rc.task.tmpl.shape, rc.task.labels);
  rc.test = load_dataset(required(cfg, "data.test"), rc.task.tmpl.shape, rc.task.labels);

  rc.method = parse_method(cfg.get("run.method", "icl"));
  rc.shots = number<std::size_t>(cfg, "run.shots", 8);
  rc.workers = number<std::size_t>(cfg, "run.workers", 1);
  rc.balanced = flag(cfg, "run.balanced", true);
  const std::string order = cfg.get("run.order", "most-similar-last");
  if (order == "most-similar-last") {
    rc.order = DemoOrder::most_similar_last;
  } else if (order == "most-similar-first") {
    rc.order = DemoOrder::most_similar_first;
  } else {
    throw ConfigError("config", "unknown order '" + order + "' (valid: most-similar-last, most-similar-first)");
  }

  rc.attack = parse_attack(cfg.get("attack.name", "none"));
  rc.test_budget.max_perturb_fraction = number(cfg, "attack.max_perturb_fraction", 0.4);
  rc.test_budget.max_candidates_per_site = number<std::size_t>(cfg, "attack.max_candidates", 32);
  rc.test_budget.max_queries = number<std::size_t>(cfg, "attack.max_queries", 5000);
  rc.demo_budget = rc.test_budget;
  rc.demo_budget.max_perturb_fraction = number(cfg, "attack.demo_perturb_fraction", 0.15);
  rc.irrelevant_rate = number(cfg, "attack.irr_rate", 0.5);

  const auto data_dir = cfg.path("data.dir", ".");
  const auto homoglyphs = cfg.path("attack.homoglyphs", (data_dir / "homoglyphs.json").string());
  const auto keyboard = cfg.path("attack.keyboard", (data_dir / "keyboard.json").string());
  const std::size_t max_c = rc.test_budget.max_candidates_per_site;
  rc.generators.bugger = std::make_shared<const CharBugGenerator>(BugMaps::load(homoglyphs, keyboard));
  rc.generators.fooler = std::make_shared<const TableGenerator>(
      load_word_table(cfg.path("attack.synonyms", (data_dir / "synonyms.json").string())), max_c);
  const auto masked = cfg.path("attack.masked_table", "");
  if (!masked.empty()) {
    rc.generators.masked = std::make_shared<const TableGenerator>(load_word_table(masked), max_c);
  }
  if (rc.attack == AttackKind::irrelevant) rc.ood_corpus = load_lines(required(cfg, "data.ood"));

  rc.defense = parse_defense(cfg.get("defense.name", "none"));
  rc.dard_styles.clear();
  for (const auto& s : list(cfg.get("defense.styles", "bugger,fooler"))) {
    rc.dard_styles.push_back(parse_test_attack_style(s));
  }
  rc.random_edits = number<std::size_t>(cfg, "defense.per_text_edits", 1);
  if (auto ck = cfg.path("defense.checkpoint", ""); !ck.empty()) rc.dard_checkpoint = ck;

  rc.knn_alpha = number(cfg, "knn.alpha", kDefaultKnnAlpha);
  rc.knn_m = number<std::size_t>(cfg, "knn.m", 0);

  const std::string emb = cfg.get("retrieval.embedder", "hashing");
  const auto dim = number<std::size_t>(cfg, "retrieval.dim", 256);
  if (emb == "hashing") {
    rc.embedder = std::make_shared<const HashingEmbedder>(dim, rc.tokenizer);
  } else if (emb == "remote") {
    RemoteConfig ec = remote_config(cfg, "retrieval");
    auto transport = std::make_shared<const HttplibTransport>(ec.base_url);
    rc.embedder = std::make_shared<const RemoteEmbedder>(std::move(ec), std::move(transport), dim);
  } else {
    throw ConfigError("config", "unknown embedder '" + emb + "' (valid: hashing, remote)");
  }

  rc.victim = make_victim(cfg, rc.task);
  // the [victim] section of another file builds the DARD pool against a different model
  if (auto other = cfg.path("defense.victim_config", ""); !other.empty()) {
    rc.dard_victim = make_victim(ConfigFile::load(other), rc.task);
  }
  rc.validate();
  return rc;
}

}  // namespace iclr
