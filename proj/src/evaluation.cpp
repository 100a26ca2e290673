#include "iclr/evaluation.hpp"

#include <algorithm>
#include <array>

#include "iclr/error.hpp"
#include "iclr/parallel.hpp"
#include "iclr/rng.hpp"
#include "iclr/victim.hpp"

namespace iclr {

namespace {

constexpr std::array<std::pair<Method, std::string_view>, 4> kMethods{{
    {Method::icl, "icl"},
    {Method::knn_icl, "knn-icl"},
    {Method::ricl_bm25, "ricl-bm25"},
    {Method::ricl_embed, "ricl-embed"},
}};

constexpr std::array<std::pair<AttackKind, std::string_view>, 8> kAttacks{{
    {AttackKind::none, "none"},
    {AttackKind::bugger, "bugger"},
    {AttackKind::fooler, "fooler"},
    {AttackKind::masked, "masked"},
    {AttackKind::advicl, "advicl"},
    {AttackKind::swap_labels, "swap-labels"},
    {AttackKind::swap_labels_fix, "swap-labels-fix"},
    {AttackKind::irrelevant, "irrelevant"},
}};

constexpr std::array<std::pair<DefenseKind, std::string_view>, 4> kDefenses{{
    {DefenseKind::none, "none"},
    {DefenseKind::dard, "dard"},
    {DefenseKind::random_addition, "random-addition"},
    {DefenseKind::random_deletion, "random-deletion"},
}};

template <typename E, std::size_t N>
std::string_view name_of(const std::array<std::pair<E, std::string_view>, N>& table, E v) {
  for (const auto& [e, n] : table) {
    if (e == v) return n;
  }
  return "unknown";
}

template <typename E, std::size_t N>
std::string names_of(const std::array<std::pair<E, std::string_view>, N>& table) {
  std::string out;
  for (const auto& [e, n] : table) {
    if (!out.empty()) out += ", ";
    out += n;
  }
  return out;
}

template <typename E, std::size_t N>
E parse_name(const std::array<std::pair<E, std::string_view>, N>& table, std::string_view name,
             const char* what) {
  for (const auto& [e, n] : table) {
    if (n == name) return e;
  }
  throw ConfigError("evaluation", "unknown " + std::string(what) + " '" + std::string(name) +
                                      "' (valid: " + names_of(table) + ")");
}

bool is_retrieval(Method m) { return m == Method::ricl_bm25 || m == Method::ricl_embed; }

RetrievalMethod retrieval_of(Method m) {
  return m == Method::ricl_embed ? RetrievalMethod::embedding : RetrievalMethod::bm25;
}

double percent(std::size_t hits, std::size_t n) {
  return n == 0 ? 0.0 : 100.0 * static_cast<double>(hits) / static_cast<double>(n);
}

}  // namespace

std::string_view to_string(Method m) { return name_of(kMethods, m); }
std::string_view to_string(AttackKind a) { return name_of(kAttacks, a); }
std::string_view to_string(DefenseKind d) { return name_of(kDefenses, d); }
Method parse_method(std::string_view name) { return parse_name(kMethods, name, "method"); }
AttackKind parse_attack(std::string_view name) { return parse_name(kAttacks, name, "attack"); }
DefenseKind parse_defense(std::string_view name) { return parse_name(kDefenses, name, "defense"); }
std::string method_names() { return names_of(kMethods); }
std::string attack_names() { return names_of(kAttacks); }
std::string defense_names() { return names_of(kDefenses); }

void RunConfig::validate() const {
  if (!victim) throw ConfigError("evaluation", "no victim configured");
  if (train.empty()) throw ConfigError("evaluation", "training pool is empty");
  if (test.empty()) throw ConfigError("evaluation", "test set is empty");
  if (task.labels.size() == 0) throw ConfigError("evaluation", "task has no labels");
  task.tmpl.validate();
  test_budget.validate();
  demo_budget.validate();
  if (shots > train.size()) {
    throw ConfigError("evaluation", "shots=" + std::to_string(shots) + " exceeds the pool size");
  }
  if (is_retrieval(method) && shots == 0) throw ConfigError("evaluation", "retrieval methods need shots >= 1");
  if (!(knn_alpha >= 0.0 && knn_alpha <= 1.0)) throw ConfigError("evaluation", "knn alpha must lie in [0, 1]");
  if (attack == AttackKind::irrelevant && !(irrelevant_rate > 0.0 && irrelevant_rate <= 1.0)) {
    throw ConfigError("evaluation", "irrelevant rate must lie in (0, 1]");
  }
  if (defense == DefenseKind::dard) {
    if (!is_retrieval(method)) throw ConfigError("evaluation", "dard needs a retrieval method");
    if (dard_styles.empty()) throw ConfigError("evaluation", "dard needs at least one style");
    for (auto s : dard_styles) generators.get(s);
  }
  if ((defense == DefenseKind::random_addition || defense == DefenseKind::random_deletion) &&
      random_edits == 0) {
    throw ConfigError("evaluation", "random augmentation needs per_text_edits >= 1");
  }
  switch (attack) {
    case AttackKind::bugger: generators.get(TestAttackStyle::bugger); break;
    case AttackKind::fooler: generators.get(TestAttackStyle::fooler); break;
    case AttackKind::masked: generators.get(TestAttackStyle::masked); break;
    case AttackKind::advicl: generators.get(TestAttackStyle::bugger); break;
    default: break;
  }
}

Pipeline::Pipeline(const RunConfig& cfg, DemoPool pool) : cfg_(&cfg), pool_(std::move(pool)) {
  for (const auto& e : pool_.examples()) {
    if (e.origin_id) {
      dedup_ = true;
      break;
    }
  }
  if (cfg.method == Method::ricl_embed && !pool_.has_embeddings()) {
    auto embedder = cfg.embedder ? cfg.embedder : std::make_shared<const HashingEmbedder>();
    pool_ = embed_pool(pool_, std::move(embedder));
  }
  if (cfg.method == Method::knn_icl) {
    anchors_ = choose_anchors(pool_.examples(), cfg.task.labels, cfg.seed);
    const std::size_t m = cfg.knn_m > 0 ? cfg.knn_m : default_neighbors(cfg.shots);
    store_ = std::make_shared<const Datastore>(build_datastore(
        pool_.examples(), anchors_, cfg.task, *cfg.victim, m, cfg.knn_alpha, cfg.workers));
  }
}

Scenario Pipeline::scenario_for(const LabeledExample& test) const {
  const RunConfig& cfg = *cfg_;
  switch (cfg.method) {
    case Method::icl: {
      auto demos = sample_demos_random(pool_.examples(), cfg.shots, derive_seed(cfg.seed, test.id),
                                       cfg.balanced, cfg.task.labels.size());
      return {make_prompt(std::move(demos), test, cfg.task), nullptr};
    }
    case Method::knn_icl:
      return {make_prompt(anchors_, test, cfg.task), store_};
    case Method::ricl_bm25:
    case Method::ricl_embed: {
      RetrieveOptions opts;
      opts.k = cfg.shots;
      opts.method = retrieval_of(cfg.method);
      opts.dedup_by_origin = dedup_;
      const RetrievalResult r = retrieve_topk(pool_, test, opts);
      std::vector<LabeledExample> demos;
      demos.reserve(r.indices.size());
      for (std::size_t idx : r.indices) demos.push_back(pool_[idx]);
      if (cfg.order == DemoOrder::most_similar_last) std::reverse(demos.begin(), demos.end());
      return {make_prompt(std::move(demos), test, cfg.task), nullptr};
    }
  }
  throw ConfigError("evaluation", "unhandled method");
}

ScenarioBuilder Pipeline::builder() const {
  return [this](const LabeledExample& t) { return scenario_for(t); };
}

DemoPool defended_pool(const RunConfig& cfg, const DemoPool& base, AugmentedPool* dard_out) {
  switch (cfg.defense) {
    case DefenseKind::none:
      return base;
    case DefenseKind::dard: {
      DardConfig dc;
      dc.k = cfg.shots;
      dc.method = retrieval_of(cfg.method);
      dc.styles = cfg.dard_styles;
      dc.budget = cfg.test_budget;
      dc.seed = cfg.seed;
      dc.workers = cfg.workers;
      dc.checkpoint = cfg.dard_checkpoint;
      DemoPool pool = base;
      if (cfg.method == Method::ricl_embed && !pool.has_embeddings()) {
        pool = embed_pool(pool, cfg.embedder ? cfg.embedder : std::make_shared<const HashingEmbedder>());
      }
      const Victim& v = cfg.dard_victim ? *cfg.dard_victim : *cfg.victim;
      AugmentedPool ap = dard_build(pool, cfg.test, cfg.task, dc, cfg.generators, v);
      DemoPool merged = ap.merged;
      if (dard_out) *dard_out = std::move(ap);
      return merged;
    }
    case DefenseKind::random_addition:
    case DefenseKind::random_deletion: {
      const bool add = cfg.defense == DefenseKind::random_addition;
      const DemoPool aug = augment_random(base, add ? AugmentMode::addition : AugmentMode::deletion,
                                          cfg.random_edits, cfg.seed);
      std::vector<LabeledExample> variants = aug.examples();
      for (std::size_t i = 0; i < variants.size(); ++i) {
        variants[i].origin_id = base[i].lineage();
        variants[i].id = base[i].id + (add ? "~add" : "~del");
      }
      return base.merged(variants);
    }
  }
  return base;
}

namespace {

std::vector<Prediction> predict_all(const Pipeline& pipe, const RunConfig& cfg) {
  std::vector<Prediction> out(cfg.test.size());
  parallel_for(cfg.test.size(), cfg.workers, [&](std::size_t i) {
    try {
      out[i] = evaluate_scenario(pipe.scenario_for(cfg.test[i]), *cfg.victim);
    } catch (const RuntimeFailure& e) {
      throw RuntimeFailure("evaluation", "sample " + cfg.test[i].id + ": " + e.what());
    }
  });
  return out;
}

}  // namespace

CleanRun run_clean(const RunConfig& cfg) {
  cfg.validate();
  const Pipeline pipe(cfg, defended_pool(cfg, DemoPool(cfg.train, cfg.tokenizer)));
  const auto preds = predict_all(pipe, cfg);
  CleanRun out;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    out.predictions.push_back(preds[i].label);
    hits += preds[i].label == cfg.test[i].label ? 1 : 0;
  }
  out.accuracy = percent(hits, preds.size());
  return out;
}

std::optional<double> attack_success_rate(double clean_accuracy, double attack_accuracy) {
  if (clean_accuracy == 0.0) return std::nullopt;
  return 100.0 * (clean_accuracy - attack_accuracy) / clean_accuracy;
}

RobustnessReport run_attack(const RunConfig& cfg) {
  cfg.validate();
  RobustnessReport rep;
  rep.dataset = cfg.dataset;
  rep.method = std::string(to_string(cfg.method));
  rep.attack = std::string(to_string(cfg.attack));
  rep.defense = std::string(to_string(cfg.defense));
  rep.shots = cfg.shots;
  rep.seed = cfg.seed;
  rep.n_samples = cfg.test.size();

  const DemoPool pool = defended_pool(cfg, DemoPool(cfg.train, cfg.tokenizer));
  const Pipeline pipe(cfg, pool);
  const auto clean = predict_all(pipe, cfg);

  std::size_t clean_hits = 0;
  rep.samples.resize(cfg.test.size());
  for (std::size_t i = 0; i < cfg.test.size(); ++i) {
    SampleRecord& s = rep.samples[i];
    s.id = cfg.test[i].id;
    s.gold = cfg.test[i].label;
    s.clean_pred = clean[i].label;
    clean_hits += s.clean_pred == s.gold ? 1 : 0;
  }
  rep.clean_accuracy = percent(clean_hits, cfg.test.size());
  if (cfg.attack == AttackKind::none) return rep;

  std::size_t attack_hits = 0;
  if (cfg.attack == AttackKind::irrelevant) {
    const ContaminatedPool bad = attack_datastore_irrelevant(pool, cfg.ood_corpus, cfg.irrelevant_rate,
                                                             derive_seed(cfg.seed, "irrelevant"));
    const Pipeline attacked(cfg, bad.pool);
    const auto preds = predict_all(attacked, cfg);
    for (std::size_t i = 0; i < cfg.test.size(); ++i) {
      SampleRecord& s = rep.samples[i];
      s.attack_pred = preds[i].label;
      s.success = s.clean_pred == s.gold && preds[i].label != s.gold;
      s.edits = bad.replaced.size();
      attack_hits += preds[i].label == s.gold ? 1 : 0;
    }
  } else {
    rep.outcomes.resize(cfg.test.size());
    const ScenarioBuilder builder = pipe.builder();
    parallel_for(cfg.test.size(), cfg.workers, [&](std::size_t i) {
      SampleRecord& s = rep.samples[i];
      if (s.clean_pred != s.gold) {
        s.skipped = true;
        s.attack_pred = s.clean_pred;
        rep.outcomes[i].skipped = true;
        rep.outcomes[i].gold = s.gold;
        return;
      }
      const LabeledExample& test = cfg.test[i];
      const std::uint64_t seed = derive_seed(cfg.seed, test.id);
      AttackOutcome o;
      switch (cfg.attack) {
        case AttackKind::bugger:
        case AttackKind::fooler:
        case AttackKind::masked: {
          const auto style = cfg.attack == AttackKind::bugger   ? TestAttackStyle::bugger
                             : cfg.attack == AttackKind::fooler ? TestAttackStyle::fooler
                                                                : TestAttackStyle::masked;
          o = attack_test_sample(style, test, builder, cfg.generators, cfg.test_budget, *cfg.victim, seed);
          break;
        }
        case AttackKind::advicl:
          o = attack_demonstrations(pipe.scenario_for(test), cfg.demo_budget,
                                    cfg.generators.get(TestAttackStyle::bugger), *cfg.victim, seed);
          break;
        case AttackKind::swap_labels:
        case AttackKind::swap_labels_fix:
          o = attack_swap_labels(pipe.scenario_for(test), cfg.attack == AttackKind::swap_labels_fix,
                                 cfg.demo_budget, *cfg.victim, seed);
          break;
        default:
          throw ConfigError("evaluation", "unhandled attack");
      }
      if (o.aborted) throw RuntimeFailure("evaluation", "sample " + test.id + ": " + o.error);
      s.success = o.success;
      s.attack_pred = o.final_prediction;
      s.edits = o.edits.size();
      s.queries = o.queries_used;
      if (o.target == AttackTarget::test_sample && !o.edits.empty()) s.perturbed_test = o.perturbed.prompt.test;
      rep.outcomes[i] = std::move(o);
    });
    std::size_t attacked = 0, queries = 0;
    for (const auto& s : rep.samples) {
      if (s.skipped) continue;
      ++attacked;
      queries += s.queries;
    }
    rep.mean_queries = attacked == 0 ? 0.0 : static_cast<double>(queries) / static_cast<double>(attacked);
    for (const auto& s : rep.samples) attack_hits += (s.attack_pred && *s.attack_pred == s.gold) ? 1 : 0;
  }
  for (const auto& s : rep.samples) rep.n_skipped += s.skipped ? 1 : 0;
  rep.attack_accuracy = percent(attack_hits, cfg.test.size());
  rep.asr = attack_success_rate(rep.clean_accuracy, *rep.attack_accuracy);
  return rep;
}

}  // namespace iclr
