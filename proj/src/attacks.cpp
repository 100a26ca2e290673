#include "iclr/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

#include "iclr/error.hpp"
#include "iclr/rng.hpp"
#include "iclr/text.hpp"
#include "iclr/victim.hpp"

namespace iclr {

void AttackBudget::validate() const {
  if (!(max_perturb_fraction > 0.0 && max_perturb_fraction <= 1.0)) {
    throw ConfigError("attacks", "max_perturb_fraction must lie in (0, 1]");
  }
  if (max_candidates_per_site == 0) throw ConfigError("attacks", "max_candidates_per_site must be positive");
  if (max_queries == 0) throw ConfigError("attacks", "max_queries must be positive");
}

std::size_t AttackBudget::edit_cap(std::size_t n_words) const {
  // the epsilon keeps 0.15 * 20 at 3 despite binary rounding
  return static_cast<std::size_t>(std::ceil(max_perturb_fraction * static_cast<double>(n_words) - 1e-9));
}

std::string_view to_string(AttackTarget t) {
  switch (t) {
    case AttackTarget::test_sample: return "test-sample";
    case AttackTarget::demonstrations: return "demonstrations";
    case AttackTarget::labels: return "labels";
    case AttackTarget::datastore: return "datastore";
  }
  return "unknown";
}

Prediction QueryCounter::evaluate(const Scenario& scenario, const Victim& victim) {
  if (!can_query()) throw Error("attacks", "query budget exhausted");
  ++used_;
  return evaluate_scenario(scenario, victim);
}

// ---------------------------------------------------------------------------

WordParts split_affixes(std::string_view word) {
  const std::u32string cps = decode_utf8(word);
  std::size_t b = 0, e = cps.size();
  while (b < e && !is_word_char(cps[b])) ++b;
  while (e > b && !is_word_char(cps[e - 1])) --e;
  const std::u32string_view v(cps);
  return {encode_utf8(v.substr(0, b)), encode_utf8(v.substr(b, e - b)), encode_utf8(v.substr(e))};
}

namespace {

std::map<char32_t, std::vector<std::string>> load_char_map(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("attacks", "cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("attacks", "malformed " + path.string() + ": " + e.what());
  }
  std::map<char32_t, std::vector<std::string>> out;
  for (const auto& [key, vals] : j.items()) {
    const std::u32string k = decode_utf8(key);
    if (k.size() != 1) throw ConfigError("attacks", "map key '" + key + "' is not a single character");
    out[k[0]] = vals.get<std::vector<std::string>>();
  }
  return out;
}

void push_unique(std::vector<std::string>& out, std::set<std::string>& seen, std::string s,
                 const std::string& original) {
  if (s.empty() || s == original) return;
  if (seen.insert(s).second) out.push_back(std::move(s));
}

char32_t lower_ascii(char32_t c) { return (c >= U'A' && c <= U'Z') ? c + 32 : c; }

}  // namespace

BugMaps BugMaps::load(const std::filesystem::path& homoglyph_file,
                      const std::filesystem::path& keyboard_file) {
  return {load_char_map(homoglyph_file), load_char_map(keyboard_file)};
}

BugMaps BugMaps::load_dir(const std::filesystem::path& dir) {
  return load(dir / "homoglyphs.json", dir / "keyboard.json");
}

std::vector<std::string> char_bug_candidates(std::string_view token, const BugMaps& maps) {
  const std::u32string cps = decode_utf8(token);
  const std::size_t n = cps.size();
  if (n == 0) return {};

  // one list per family, merged round-robin so truncation keeps every family
  std::vector<std::vector<std::u32string>> fam(5);
  for (std::size_t p = 1; p < n; ++p) {
    std::u32string s = cps;
    s.insert(s.begin() + static_cast<std::ptrdiff_t>(p), U' ');
    fam[0].push_back(std::move(s));
  }
  for (std::size_t p = 0; p < n; ++p) {
    std::u32string s = cps;
    s.insert(s.begin() + static_cast<std::ptrdiff_t>(p), cps[p]);
    fam[0].push_back(std::move(s));
  }
  for (std::size_t p = 1; p + 1 < n; ++p) {
    std::u32string s = cps;
    s.erase(s.begin() + static_cast<std::ptrdiff_t>(p));
    fam[1].push_back(std::move(s));
  }
  for (std::size_t p = 0; p + 1 < n; ++p) {
    if (cps[p] == cps[p + 1]) continue;
    std::u32string s = cps;
    std::swap(s[p], s[p + 1]);
    fam[2].push_back(std::move(s));
  }
  const auto substitute = [&](const std::map<char32_t, std::vector<std::string>>& map, auto& dst) {
    for (std::size_t p = 0; p < n; ++p) {
      auto it = map.find(lower_ascii(cps[p]));
      if (it == map.end()) continue;
      for (const auto& repl : it->second) {
        dst.push_back(cps.substr(0, p) + decode_utf8(repl) + cps.substr(p + 1));
      }
    }
  };
  substitute(maps.homoglyphs, fam[3]);
  substitute(maps.keyboard, fam[4]);

  const std::string original(token);
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (std::size_t i = 0;; ++i) {
    bool any = false;
    for (const auto& f : fam) {
      if (i >= f.size()) continue;
      any = true;
      push_unique(out, seen, encode_utf8(f[i]), original);
    }
    if (!any) break;
  }
  return out;
}

std::vector<std::string> CharBugGenerator::candidates(std::span<const std::string> words,
                                                      std::size_t site) const {
  const WordParts parts = split_affixes(words[site]);
  if (parts.core.empty()) return {};
  std::vector<std::string> out;
  for (auto& c : char_bug_candidates(parts.core, maps_)) out.push_back(parts.prefix + c + parts.suffix);
  return out;
}

WordTable load_word_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("attacks", "cannot open " + path.string());
  try {
    const auto j = nlohmann::json::parse(in);
    WordTable table;
    for (const auto& [k, v] : j.items()) table[to_lower(k)] = v.get<std::vector<std::string>>();
    return table;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("attacks", "malformed word table " + path.string() + ": " + e.what());
  }
}

std::vector<std::string> synonym_candidates(std::string_view token, const WordTable& lexicon,
                                            std::size_t max_candidates) {
  const std::string key = to_lower(token);
  auto it = lexicon.find(key);
  if (it == lexicon.end()) return {};
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& c : it->second) {
    if (out.size() >= max_candidates) break;
    if (to_lower(c) == key) continue;
    push_unique(out, seen, c, std::string(token));
  }
  return out;
}

std::vector<std::string> TableGenerator::candidates(std::span<const std::string> words,
                                                    std::size_t site) const {
  const WordParts parts = split_affixes(words[site]);
  if (parts.core.empty()) return {};
  std::vector<std::string> out;
  std::string tag;
  if (tagger_) tag = tagger_(words, site);
  for (const auto& c : synonym_candidates(parts.core, table_, max_)) {
    std::string replaced = parts.prefix + c + parts.suffix;
    if (tagger_) {
      std::vector<std::string> ctx(words.begin(), words.end());
      ctx[site] = replaced;
      if (tagger_(ctx, site) != tag) continue;
    }
    out.push_back(std::move(replaced));
  }
  return out;
}

std::string_view to_string(TestAttackStyle s) {
  switch (s) {
    case TestAttackStyle::bugger: return "bugger";
    case TestAttackStyle::fooler: return "fooler";
    case TestAttackStyle::masked: return "masked";
  }
  return "unknown";
}

TestAttackStyle parse_test_attack_style(std::string_view name) {
  if (name == "bugger") return TestAttackStyle::bugger;
  if (name == "fooler") return TestAttackStyle::fooler;
  if (name == "masked") return TestAttackStyle::masked;
  throw ConfigError("attacks", "unknown attack style '" + std::string(name) +
                                   "' (valid: bugger, fooler, masked)");
}

const CandidateGenerator& GeneratorSet::get(TestAttackStyle style) const {
  const CandidateGenerator* g = nullptr;
  switch (style) {
    case TestAttackStyle::bugger: g = bugger.get(); break;
    case TestAttackStyle::fooler: g = fooler.get(); break;
    case TestAttackStyle::masked: g = masked.get(); break;
  }
  if (!g) {
    throw ConfigError("attacks", "no candidate generator configured for style " +
                                     std::string(to_string(style)));
  }
  return *g;
}

// ---------------------------------------------------------------------------

namespace {

ImportanceRanking rank_sites(const WordSurface& surface, const Materializer& materialize, int gold,
                             const Victim& victim, QueryCounter& counter,
                             std::optional<double> baseline) {
  const std::size_t n = surface.words.size();
  ImportanceRanking r;
  r.scores.assign(n, 0.0);
  std::vector<bool> scored(n, false);
  if (!baseline) {
    if (!counter.can_query()) {
      r.order.resize(n);
      std::iota(r.order.begin(), r.order.end(), 0);
      return r;
    }
    baseline = counter.evaluate(materialize(surface.words), victim).dist[gold];
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (surface.words[i].empty()) continue;
    if (!counter.can_query()) break;
    std::vector<std::string> words = surface.words;
    words[i].clear();
    r.scores[i] = *baseline - counter.evaluate(materialize(words), victim).dist[gold];
    scored[i] = true;
  }
  r.order.resize(n);
  std::iota(r.order.begin(), r.order.end(), 0);
  std::stable_sort(r.order.begin(), r.order.end(), [&](std::size_t a, std::size_t b) {
    if (scored[a] != scored[b]) return static_cast<bool>(scored[a]);
    return scored[a] && r.scores[a] > r.scores[b];
  });
  return r;
}

}  // namespace

ImportanceRanking word_importance(const WordSurface& surface, const Materializer& materialize,
                                  int gold, const Victim& victim, QueryCounter& counter) {
  return rank_sites(surface, materialize, gold, victim, counter, std::nullopt);
}

AttackOutcome greedy_wir_attack(const WordSurface& surface, const Materializer& materialize,
                                int gold, const CandidateGenerator& generator,
                                const AttackBudget& budget, const Victim& victim) {
  budget.validate();
  if (surface.owner.size() != surface.words.size()) {
    throw ConfigError("attacks", "surface owner list does not match its words");
  }
  AttackOutcome out;
  out.gold = gold;
  QueryCounter counter(budget.max_queries);
  std::vector<std::string> words = surface.words;
  out.original = materialize(words);
  out.perturbed = out.original;
  try {
    const Prediction base = counter.evaluate(out.original, victim);
    out.final_prediction = base.label;
    if (base.label != gold) {
      out.skipped = true;
      out.queries_used = counter.used();
      return out;
    }
    double p_cur = base.dist[gold];
    out.trajectory.push_back(p_cur);
    const ImportanceRanking ranking = rank_sites(surface, materialize, gold, victim, counter, p_cur);

    std::map<int, std::size_t> used;
    bool done = false;
    for (std::size_t site : ranking.order) {
      if (done || !counter.can_query()) break;
      if (words[site].empty()) continue;
      const int owner = surface.owner[site];
      auto cap = surface.owner_cap.find(owner);
      const std::size_t limit = cap == surface.owner_cap.end() ? 0 : cap->second;
      if (used[owner] >= limit) continue;

      auto cands = generator.candidates(words, site);
      if (cands.size() > budget.max_candidates_per_site) cands.resize(budget.max_candidates_per_site);
      std::optional<std::size_t> best;
      double best_p = 0.0;
      int best_label = gold;
      for (std::size_t c = 0; c < cands.size(); ++c) {
        if (cands[c] == words[site]) continue;
        if (!counter.can_query()) break;
        std::vector<std::string> trial = words;
        trial[site] = cands[c];
        const Prediction pred = counter.evaluate(materialize(trial), victim);
        if (!best || pred.dist[gold] < best_p) {
          best = c;
          best_p = pred.dist[gold];
          best_label = pred.label;
        }
      }
      if (!best || !(best_p < p_cur)) continue;
      out.edits.push_back({owner, site, words[site], cands[*best]});
      words[site] = cands[*best];
      ++used[owner];
      p_cur = best_p;
      out.trajectory.push_back(p_cur);
      out.final_prediction = best_label;
      if (best_label != gold) {
        out.success = true;
        done = true;
      }
    }
  } catch (const RuntimeFailure& e) {
    out.aborted = true;
    out.error = e.what();
  }
  out.perturbed = materialize(words);
  out.queries_used = counter.used();
  return out;
}

WordSurface example_surface(const LabeledExample& example, int owner, std::size_t cap,
                            bool hypothesis_only) {
  WordSurface s;
  if (example.premise) {
    if (!hypothesis_only) s.words = split_words(*example.premise);
    for (auto& w : split_words(example.hypothesis.value_or(""))) s.words.push_back(std::move(w));
  } else {
    s.words = split_words(example.text);
  }
  s.owner.assign(s.words.size(), owner);
  s.owner_cap[owner] = cap;
  return s;
}

LabeledExample apply_surface(const LabeledExample& example, std::span<const std::string> words,
                             bool hypothesis_only) {
  LabeledExample out = example;
  if (!example.premise) {
    out.text = join_words(words);
    return out;
  }
  const std::size_t np = hypothesis_only ? 0 : split_words(*example.premise).size();
  if (np > words.size()) throw Error("attacks", "surface shorter than the premise");
  if (!hypothesis_only) out.premise = join_words(words.first(np));
  out.hypothesis = join_words(words.subspan(np));
  return out;
}

AttackOutcome attack_test_sample(TestAttackStyle style, const LabeledExample& test,
                                 const ScenarioBuilder& builder, const GeneratorSet& generators,
                                 const AttackBudget& budget, const Victim& victim,
                                 std::uint64_t seed) {
  const CandidateGenerator& gen = generators.get(style);
  const WordSurface probe = example_surface(test, kTestOwner, 0);
  const WordSurface surface = example_surface(test, kTestOwner, budget.edit_cap(probe.words.size()));
  const Materializer materialize = [&](const std::vector<std::string>& words) {
    return builder(apply_surface(test, words));
  };
  AttackOutcome out = greedy_wir_attack(surface, materialize, test.label, gen, budget, victim);
  out.target = AttackTarget::test_sample;
  out.seed = seed;
  return out;
}

AttackOutcome attack_demonstrations(const Scenario& scenario, const AttackBudget& budget,
                                    const CandidateGenerator& generator, const Victim& victim,
                                    std::uint64_t seed) {
  const auto& demos = scenario.prompt.demos;
  const bool pair = scenario.prompt.tmpl.shape == SegmentShape::pair;
  WordSurface surface;
  std::vector<std::size_t> offsets;
  for (std::size_t i = 0; i < demos.size(); ++i) {
    const int owner = static_cast<int>(i);
    WordSurface part = example_surface(demos[i], owner, 0, pair);
    offsets.push_back(surface.words.size());
    surface.owner_cap[owner] = budget.edit_cap(part.words.size());
    surface.words.insert(surface.words.end(), part.words.begin(), part.words.end());
    surface.owner.insert(surface.owner.end(), part.owner.begin(), part.owner.end());
  }
  offsets.push_back(surface.words.size());
  const Materializer materialize = [&](const std::vector<std::string>& words) {
    Scenario s = scenario;
    for (std::size_t i = 0; i < demos.size(); ++i) {
      const std::span<const std::string> part(words.data() + offsets[i], offsets[i + 1] - offsets[i]);
      s.prompt.demos[i] = apply_surface(demos[i], part, pair);
    }
    return s;
  };
  AttackOutcome out =
      greedy_wir_attack(surface, materialize, scenario.prompt.test.label, generator, budget, victim);
  out.target = AttackTarget::demonstrations;
  out.seed = seed;
  return out;
}

AttackOutcome attack_swap_labels(const Scenario& scenario, bool fix_distribution,
                                 const AttackBudget& budget, const Victim& victim,
                                 std::uint64_t seed) {
  budget.validate();
  AttackOutcome out;
  out.target = AttackTarget::labels;
  out.seed = seed;
  out.original = scenario;
  out.perturbed = scenario;
  const int gold = scenario.prompt.test.label;
  out.gold = gold;
  const std::size_t k = scenario.prompt.demos.size();
  const std::size_t num_labels = scenario.prompt.labels.size();
  const std::size_t cap = num_labels == 0 ? 0 : k / num_labels;
  QueryCounter counter(budget.max_queries);
  Scenario cur = scenario;

  try {
    const Prediction base = counter.evaluate(scenario, victim);
    out.final_prediction = base.label;
    if (base.label != gold) {
      out.skipped = true;
      out.queries_used = counter.used();
      return out;
    }
    double p_cur = base.dist[gold];
    out.trajectory.push_back(p_cur);

    std::vector<double> shift(k, 0.0);
    std::vector<bool> scored(k, false);
    for (std::size_t i = 0; i < k && counter.can_query(); ++i) {
      Scenario probe = scenario;
      probe.prompt.label_overrides[i] = std::string(kLabelPlaceholder);
      shift[i] = total_variation(counter.evaluate(probe, victim).dist, base.dist);
      scored[i] = true;
    }
    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (scored[a] != scored[b]) return static_cast<bool>(scored[a]);
      return scored[a] && shift[a] > shift[b];
    });

    std::vector<bool> touched(k, false);
    std::size_t swapped = 0;
    auto& demos = cur.prompt.demos;
    const auto word = [&](int y) { return scenario.prompt.labels.word(y); };

    for (std::size_t i : order) {
      if (out.success || !counter.can_query()) break;
      if (touched[i]) continue;
      if (!fix_distribution) {
        if (swapped + 1 > cap) break;
        std::optional<int> best;
        double best_p = 0.0;
        int best_label = gold;
        for (std::size_t y = 0; y < num_labels && counter.can_query(); ++y) {
          if (static_cast<int>(y) == demos[i].label) continue;
          Scenario trial = cur;
          trial.prompt.demos[i].label = static_cast<int>(y);
          const Prediction pred = counter.evaluate(trial, victim);
          if (!best || pred.dist[gold] < best_p) {
            best = static_cast<int>(y);
            best_p = pred.dist[gold];
            best_label = pred.label;
          }
        }
        if (!best || !(best_p < p_cur)) continue;
        out.edits.push_back({static_cast<int>(i), i, word(demos[i].label), word(*best)});
        demos[i].label = *best;
        touched[i] = true;
        ++swapped;
        p_cur = best_p;
        out.trajectory.push_back(p_cur);
        out.final_prediction = best_label;
        if (best_label != gold) out.success = true;
      } else {
        if (swapped + 2 > cap) break;
        std::optional<std::size_t> best;
        double best_p = 0.0;
        int best_label = gold;
        for (std::size_t j = 0; j < k && counter.can_query(); ++j) {
          if (j == i || touched[j] || demos[j].label == demos[i].label) continue;
          Scenario trial = cur;
          std::swap(trial.prompt.demos[i].label, trial.prompt.demos[j].label);
          const Prediction pred = counter.evaluate(trial, victim);
          if (!best || pred.dist[gold] < best_p) {
            best = j;
            best_p = pred.dist[gold];
            best_label = pred.label;
          }
        }
        if (!best || !(best_p < p_cur)) continue;
        const std::size_t j = *best;
        out.edits.push_back({static_cast<int>(i), i, word(demos[i].label), word(demos[j].label)});
        out.edits.push_back({static_cast<int>(j), j, word(demos[j].label), word(demos[i].label)});
        std::swap(demos[i].label, demos[j].label);
        touched[i] = touched[j] = true;
        swapped += 2;
        p_cur = best_p;
        out.trajectory.push_back(p_cur);
        out.final_prediction = best_label;
        if (best_label != gold) out.success = true;
      }
    }
  } catch (const RuntimeFailure& e) {
    out.aborted = true;
    out.error = e.what();
  }
  out.perturbed = cur;
  out.queries_used = counter.used();
  return out;
}

// ---------------------------------------------------------------------------

namespace {

std::size_t closest_unused(const std::vector<std::size_t>& lengths, std::vector<bool>& used,
                           std::size_t target) {
  std::optional<std::size_t> best;
  std::size_t best_gap = 0;
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    if (used[i]) continue;
    const std::size_t gap = lengths[i] > target ? lengths[i] - target : target - lengths[i];
    if (!best || gap < best_gap) {
      best = i;
      best_gap = gap;
    }
  }
  if (!best) throw ConfigError("attacks", "out-of-distribution corpus exhausted");
  used[*best] = true;
  return *best;
}

}  // namespace

ContaminatedPool attack_datastore_irrelevant(const DemoPool& pool,
                                             const std::vector<std::string>& ood_corpus,
                                             double rate, std::uint64_t seed) {
  if (!(rate > 0.0 && rate <= 1.0)) throw ConfigError("attacks", "contamination rate must lie in (0, 1]");
  const auto n = static_cast<std::size_t>(std::floor(rate * static_cast<double>(pool.size()) + 1e-9));
  const bool pair = pool.size() > 0 && pool[0].premise.has_value();
  const std::size_t need = pair ? 2 * n : n;
  if (ood_corpus.size() < need) {
    throw ConfigError("attacks", "out-of-distribution corpus has " + std::to_string(ood_corpus.size()) +
                                     " sentences, need " + std::to_string(need));
  }
  std::vector<std::size_t> lengths;
  lengths.reserve(ood_corpus.size());
  for (const auto& s : ood_corpus) lengths.push_back(pool.tokenizer().tokenize(s).size());

  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(std::span(order));
  std::vector<std::size_t> chosen(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n));
  std::sort(chosen.begin(), chosen.end());

  std::vector<LabeledExample> examples = pool.examples();
  std::vector<bool> used(ood_corpus.size(), false);
  const auto len = [&](const std::string& s) { return pool.tokenizer().tokenize(s).size(); };
  for (std::size_t idx : chosen) {
    LabeledExample& e = examples[idx];
    const std::string origin = e.lineage();
    if (e.premise) {
      e.premise = ood_corpus[closest_unused(lengths, used, len(*e.premise))];
      e.hypothesis = ood_corpus[closest_unused(lengths, used, len(e.hypothesis.value_or("")))];
    } else {
      e.text = ood_corpus[closest_unused(lengths, used, len(e.text))];
    }
    e.id = e.id + "#irr";
    e.origin_id = origin;
  }
  return {pool.rebuilt(std::move(examples)), std::move(chosen)};
}

std::vector<std::string> load_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("attacks", "cannot open " + path.string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (!line.empty()) out.push_back(std::move(line));
  }
  return out;
}

bool replay_misclassifies(const AttackOutcome& outcome, const Victim& victim) {
  return evaluate_scenario(outcome.perturbed, victim).label != outcome.gold;
}

}  // namespace iclr
