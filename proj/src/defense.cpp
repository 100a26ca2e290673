#include "iclr/defense.hpp"

#include <fstream>
#include <mutex>
#include <set>
#include <unordered_set>

#include "iclr/error.hpp"
#include "iclr/parallel.hpp"
#include "iclr/prompting.hpp"
#include "iclr/rng.hpp"
#include "iclr/text.hpp"
#include "iclr/victim.hpp"

namespace iclr {

std::vector<std::size_t> dard_selection(const DemoPool& pool,
                                        const std::vector<LabeledExample>& test_set,
                                        std::size_t k, RetrievalMethod method) {
  std::vector<std::size_t> out;
  std::unordered_set<std::string> seen;
  RetrieveOptions opts;
  opts.k = k;
  opts.method = method;
  for (const auto& t : test_set) {
    for (std::size_t idx : retrieve_topk(pool, t, opts).indices) {
      if (seen.insert(pool[idx].id).second) out.push_back(idx);
    }
  }
  return out;
}

namespace {

nlohmann::json checkpoint_line(const CheckpointEntry& e) {
  nlohmann::json j = to_json(e.variant);
  j["style"] = e.provenance.style;
  j["edits"] = e.provenance.edits;
  return j;
}

struct ItemResult {
  std::vector<CheckpointEntry> fresh;
  bool done = false;
  bool flushed = false;
};

}  // namespace

std::vector<CheckpointEntry> read_checkpoint(const std::filesystem::path& path,
                                             const LabelSpace& labels) {
  std::vector<CheckpointEntry> out;
  std::ifstream in(path);
  if (!in) return out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      CheckpointEntry e;
      e.variant = example_from_json(j, labels);
      e.provenance.style = j.at("style").get<std::string>();
      e.provenance.edits = j.at("edits").get<std::size_t>();
      out.push_back(std::move(e));
    } catch (const nlohmann::json::exception&) {
      // a build killed mid-write can leave a torn last line
      if (in.peek() == std::char_traits<char>::eof()) break;
      throw ConfigError("defense", path.filename().string() + ":" + std::to_string(lineno) +
                                       ": malformed checkpoint line");
    }
  }
  return out;
}

AugmentedPool dard_build(const DemoPool& pool, const std::vector<LabeledExample>& test_set,
                         const Task& task, const DardConfig& cfg, const GeneratorSet& generators,
                         const Victim& victim) {
  cfg.budget.validate();
  for (auto style : cfg.styles) generators.get(style);
  const std::vector<std::size_t> selection = dard_selection(pool, test_set, cfg.k, cfg.method);
  if (selection.empty()) throw ConfigError("defense", "retrieval selected no examples");

  std::vector<CheckpointEntry> kept;
  if (cfg.checkpoint && cfg.resume) kept = read_checkpoint(*cfg.checkpoint, task.labels);
  std::map<std::pair<std::string, std::string>, CheckpointEntry> previous;
  for (const auto& e : kept) previous.emplace(std::make_pair(e.variant.lineage(), e.provenance.style), e);
  std::ofstream ckpt;
  if (cfg.checkpoint) {
    // rewritten rather than appended so a torn last line is dropped
    ckpt.open(*cfg.checkpoint, std::ios::trunc | std::ios::binary);
    if (!ckpt) throw RuntimeFailure("defense", "cannot open checkpoint " + cfg.checkpoint->string());
    for (const auto& e : kept) ckpt << checkpoint_line(e).dump() << '\n';
    ckpt.flush();
  }

  std::vector<ItemResult> results(selection.size());
  std::mutex flush_mutex;
  std::size_t next_flush = 0;
  const auto flush_item = [&](ItemResult& r) {
    if (r.flushed) return;
    for (const auto& e : r.fresh) ckpt << checkpoint_line(e).dump() << '\n';
    r.flushed = true;
  };
  const auto flush_prefix = [&] {
    if (!ckpt.is_open()) return;
    while (next_flush < results.size() && results[next_flush].done) flush_item(results[next_flush++]);
    ckpt.flush();
  };

  try {
    parallel_for(selection.size(), cfg.workers, [&](std::size_t s) {
      if (cfg.cancel && cfg.cancel->load()) return;
      const LabeledExample& ex = pool[selection[s]];
      RetrieveOptions opts;
      opts.k = 1;
      opts.method = cfg.method;
      opts.exclude_lineage = ex.lineage();
      std::vector<LabeledExample> shot;
      for (std::size_t idx : retrieve_topk(pool, ex, opts).indices) shot.push_back(pool[idx]);
      const ScenarioBuilder builder = [&](const LabeledExample& t) {
        return Scenario{make_prompt(shot, t, task), nullptr};
      };
      ItemResult r;
      for (auto style : cfg.styles) {
        const std::string name(to_string(style));
        if (previous.contains({ex.lineage(), name})) continue;
        const AttackOutcome o =
            attack_test_sample(style, ex, builder, generators, cfg.budget, victim,
                               derive_seed(cfg.seed, ex.id + "/" + name));
        if (o.aborted) throw RuntimeFailure("defense", "attack on " + ex.id + " failed: " + o.error);
        if (!o.success) continue;
        LabeledExample v = o.perturbed.prompt.test;
        v.id = ex.id + "~" + name;
        v.origin_id = ex.lineage();
        v.label = ex.label;
        r.fresh.push_back({std::move(v), {name, o.edits.size()}});
      }
      std::lock_guard lock(flush_mutex);
      r.done = true;
      results[s] = std::move(r);
      flush_prefix();
    });
  } catch (...) {
    std::lock_guard lock(flush_mutex);
    for (auto& r : results) {
      if (r.done && ckpt.is_open()) flush_item(r);
    }
    if (ckpt.is_open()) ckpt.flush();
    throw;
  }
  for (auto& r : results) {
    if (r.done && ckpt.is_open()) flush_item(r);
  }
  if (ckpt.is_open()) ckpt.flush();

  AugmentedPool out;
  out.base = pool;
  out.selected = selection.size();
  for (std::size_t s = 0; s < selection.size(); ++s) {
    const LabeledExample& ex = pool[selection[s]];
    for (auto style : cfg.styles) {
      const std::string name(to_string(style));
      const CheckpointEntry* entry = nullptr;
      if (auto it = previous.find({ex.lineage(), name}); it != previous.end()) {
        entry = &it->second;
      } else {
        for (const auto& e : results[s].fresh) {
          if (e.provenance.style == name) entry = &e;
        }
      }
      if (!entry) continue;
      out.variants.push_back(entry->variant);
      out.provenance[ex.lineage()].push_back(entry->provenance);
    }
  }
  out.merged = pool.merged(out.variants);
  return out;
}

RetrievalResult dard_retrieve(const AugmentedPool& apool, const LabeledExample& query,
                              std::size_t k, RetrievalMethod method) {
  RetrieveOptions opts;
  opts.k = k;
  opts.method = method;
  opts.dedup_by_origin = true;
  return retrieve_topk(apool.merged, query, opts);
}

namespace {

std::string augment_segment(const std::string& text, AugmentMode mode, std::size_t edits, Rng& rng) {
  std::u32string cps = decode_utf8(text);
  const auto space = [](char32_t c) { return c == U' ' || c == U'\t' || c == U'\n' || c == U'\r'; };
  for (std::size_t e = 0; e < edits; ++e) {
    if (mode == AugmentMode::addition) {
      const std::size_t pos = rng.uniform_index(cps.size() + 1);
      const auto letter = static_cast<char32_t>(U'a' + rng.uniform_index(26));
      cps.insert(cps.begin() + static_cast<std::ptrdiff_t>(pos), letter);
      continue;
    }
    // only characters of words with at least two characters may go
    std::vector<std::size_t> eligible;
    std::size_t i = 0;
    while (i < cps.size()) {
      if (space(cps[i])) {
        ++i;
        continue;
      }
      std::size_t j = i;
      while (j < cps.size() && !space(cps[j])) ++j;
      if (j - i >= 2) {
        for (std::size_t p = i; p < j; ++p) eligible.push_back(p);
      }
      i = j;
    }
    if (eligible.empty()) break;
    cps.erase(cps.begin() + static_cast<std::ptrdiff_t>(eligible[rng.uniform_index(eligible.size())]));
  }
  return encode_utf8(cps);
}

}  // namespace

DemoPool augment_random(const DemoPool& pool, AugmentMode mode, std::size_t per_text_edits,
                        std::uint64_t seed) {
  if (per_text_edits == 0) throw ConfigError("defense", "per_text_edits must be at least 1");
  std::vector<LabeledExample> out = pool.examples();
  for (auto& e : out) {
    Rng rng(derive_seed(seed, e.id));
    if (e.premise) {
      e.premise = augment_segment(*e.premise, mode, per_text_edits, rng);
      e.hypothesis = augment_segment(e.hypothesis.value_or(""), mode, per_text_edits, rng);
    } else {
      e.text = augment_segment(e.text, mode, per_text_edits, rng);
    }
  }
  return pool.rebuilt(std::move(out));
}

}  // namespace iclr
