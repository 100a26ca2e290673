#include "iclr/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "iclr/error.hpp"

namespace iclr {

double round2(double x) {
  const double r = std::round(x * 100.0) / 100.0;
  return r == 0.0 ? 0.0 : r;
}

namespace {

nlohmann::ordered_json opt2(const std::optional<double>& v) {
  if (!v) return nullptr;
  return round2(*v);
}

std::string fmt2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", round2(v));
  return buf;
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// Sample standard deviation; 0 for a single value.
double stddev(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

struct Row {
  std::string dataset, method, defense, shots, seed;
  std::optional<double> clean;
  std::map<std::string, std::optional<double>> asr;  // attack -> value; absent = not run
  std::optional<double> avg;
};

std::optional<double> average(const std::map<std::string, std::optional<double>>& asr) {
  std::vector<double> defined;
  for (const auto& [a, v] : asr) {
    if (v) defined.push_back(*v);
  }
  if (defined.empty()) return std::nullopt;
  return mean(defined);
}

std::string cell(const std::optional<double>& v) { return v ? fmt2(*v) : "n/a"; }

}  // namespace

nlohmann::ordered_json report_row(const RobustnessReport& r) {
  nlohmann::ordered_json j;
  j["dataset"] = r.dataset;
  j["method"] = r.method;
  j["attack"] = r.attack;
  j["defense"] = r.defense;
  j["shots"] = r.shots;
  j["seed"] = r.seed;
  j["clean_acc"] = round2(r.clean_accuracy);
  j["attack_acc"] = opt2(r.attack_accuracy);
  j["asr"] = opt2(r.asr);
  j["n"] = r.n_samples;
  j["skipped"] = r.n_skipped;
  j["mean_queries"] = round2(r.mean_queries);
  return j;
}

RobustnessReport report_from_row(const nlohmann::json& row) {
  RobustnessReport r;
  try {
    r.dataset = row.at("dataset").get<std::string>();
    r.method = row.at("method").get<std::string>();
    r.attack = row.at("attack").get<std::string>();
    r.defense = row.at("defense").get<std::string>();
    r.shots = row.at("shots").get<std::size_t>();
    r.seed = row.at("seed").get<std::uint64_t>();
    r.clean_accuracy = row.at("clean_acc").get<double>();
    if (!row.at("attack_acc").is_null()) r.attack_accuracy = row.at("attack_acc").get<double>();
    if (!row.at("asr").is_null()) r.asr = row.at("asr").get<double>();
    r.n_samples = row.at("n").get<std::size_t>();
    r.n_skipped = row.at("skipped").get<std::size_t>();
    r.mean_queries = row.at("mean_queries").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("report", std::string("malformed report row: ") + e.what());
  }
  return r;
}

nlohmann::ordered_json sample_row(const SampleRecord& s) {
  nlohmann::ordered_json j;
  j["id"] = s.id;
  j["gold"] = s.gold;
  j["clean_pred"] = s.clean_pred;
  j["attack_pred"] = s.attack_pred ? nlohmann::ordered_json(*s.attack_pred) : nlohmann::ordered_json(nullptr);
  j["skipped"] = s.skipped;
  j["success"] = s.success;
  j["edits"] = s.edits;
  j["queries"] = s.queries;
  if (s.perturbed_test) j["perturbed"] = to_json(*s.perturbed_test);
  return j;
}

std::vector<RobustnessReport> load_report_rows(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("report", "cannot open " + path.string());
  std::vector<RobustnessReport> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(report_from_row(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("report", path.filename().string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

TableLayout parse_layout(std::string_view name) {
  if (name == "table1") return TableLayout::table1;
  if (name == "per-shot") return TableLayout::per_shot;
  throw ConfigError("report", "unknown layout '" + std::string(name) + "' (valid: table1, per-shot)");
}

RenderedReport render_report(std::span<const RobustnessReport> reports, TableLayout layout) {
  if (reports.empty()) throw ConfigError("report", "no reports to render");
  RenderedReport out;
  for (const auto& r : reports) out.jsonl += report_row(r).dump() + "\n";

  std::vector<std::string> attacks;
  for (const auto& r : reports) {
    if (r.attack == "none") continue;
    if (std::find(attacks.begin(), attacks.end(), r.attack) == attacks.end()) attacks.push_back(r.attack);
  }
  if (layout == TableLayout::per_shot) {
    for (const auto& r : reports) {
      if (r.dataset != reports.front().dataset) {
        throw ConfigError("report", "per-shot layout needs a single dataset, got " +
                                        reports.front().dataset + " and " + r.dataset);
      }
    }
  }

  // rows keyed by (dataset, method, defense, shots, seed) in first-seen order
  using Key = std::tuple<std::string, std::string, std::string, std::size_t, std::uint64_t>;
  std::vector<Key> order;
  std::map<Key, std::vector<const RobustnessReport*>> groups;
  for (const auto& r : reports) {
    Key k{r.dataset, r.method, r.defense, r.shots, r.seed};
    auto [it, fresh] = groups.try_emplace(k);
    if (fresh) order.push_back(k);
    it->second.push_back(&r);
  }
  const auto make_row = [&](const Key& k) {
    Row row;
    row.dataset = std::get<0>(k);
    row.method = std::get<1>(k);
    row.defense = std::get<2>(k);
    row.shots = std::to_string(std::get<3>(k));
    row.seed = std::to_string(std::get<4>(k));
    for (const auto* r : groups.at(k)) {
      if (!row.clean) row.clean = r->clean_accuracy;
      if (r->attack != "none") row.asr[r->attack] = r->asr;
    }
    row.avg = average(row.asr);
    return row;
  };

  // seed aggregation: (dataset, method, defense, shots) -> per-seed rows
  using Cfg = std::tuple<std::string, std::string, std::string, std::size_t>;
  std::vector<Cfg> cfg_order;
  std::map<Cfg, std::vector<Row>> per_cfg;
  for (const auto& k : order) {
    Cfg c{std::get<0>(k), std::get<1>(k), std::get<2>(k), std::get<3>(k)};
    auto [it, fresh] = per_cfg.try_emplace(c);
    if (fresh) cfg_order.push_back(c);
    it->second.push_back(make_row(k));
  }
  if (layout == TableLayout::per_shot) {
    std::stable_sort(cfg_order.begin(), cfg_order.end(), [](const Cfg& a, const Cfg& b) {
      return std::tie(std::get<1>(a), std::get<2>(a), std::get<3>(a)) <
             std::tie(std::get<1>(b), std::get<2>(b), std::get<3>(b));
    });
  }

  const auto aggregate = [&](const std::vector<Row>& rows, bool want_std) {
    Row agg = rows.front();
    agg.seed = want_std ? "std" : "mean";
    const auto reduce = [&](const std::vector<double>& v) -> std::optional<double> {
      if (v.empty()) return std::nullopt;
      return want_std ? stddev(v) : mean(v);
    };
    std::vector<double> cleans, avgs;
    for (const auto& r : rows) {
      if (r.clean) cleans.push_back(*r.clean);
      if (r.avg) avgs.push_back(*r.avg);
    }
    agg.clean = reduce(cleans);
    agg.asr.clear();
    for (const auto& a : attacks) {
      std::vector<double> v;
      bool present = false;
      for (const auto& r : rows) {
        auto it = r.asr.find(a);
        if (it == r.asr.end()) continue;
        present = true;
        if (it->second) v.push_back(*it->second);
      }
      if (present) agg.asr[a] = reduce(v);
    }
    agg.avg = want_std ? reduce(avgs) : average(agg.asr);
    return agg;
  };

  std::vector<Row> rows;
  for (const auto& c : cfg_order) {
    const auto& seeds = per_cfg.at(c);
    if (layout == TableLayout::table1) rows.insert(rows.end(), seeds.begin(), seeds.end());
    if (seeds.size() > 1) {
      rows.push_back(aggregate(seeds, false));
      rows.push_back(aggregate(seeds, true));
    } else if (layout == TableLayout::per_shot) {
      rows.push_back(seeds.front());
    }
  }

  std::vector<std::string> header{"dataset", "method", "defense", "shots", "seed", "clean"};
  header.insert(header.end(), attacks.begin(), attacks.end());
  header.push_back("avg");
  std::vector<std::vector<std::string>> cells{header};
  for (const auto& r : rows) {
    std::vector<std::string> line{r.dataset, r.method, r.defense, r.shots, r.seed, cell(r.clean)};
    for (const auto& a : attacks) {
      auto it = r.asr.find(a);
      line.push_back(it == r.asr.end() ? "-" : cell(it->second));
    }
    line.push_back(cell(r.avg));
    cells.push_back(std::move(line));
  }

  std::ostringstream csv, text;
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& line : cells) {
    for (std::size_t c = 0; c < line.size(); ++c) width[c] = std::max(width[c], line[c].size());
  }
  for (const auto& line : cells) {
    std::string t;
    for (std::size_t c = 0; c < line.size(); ++c) {
      csv << (c ? "," : "") << csv_escape(line[c]);
      // names left-aligned, numbers right-aligned
      const std::string pad(width[c] - line[c].size(), ' ');
      if (c) t += "  ";
      t += c < 5 ? line[c] + pad : pad + line[c];
    }
    csv << '\n';
    while (!t.empty() && t.back() == ' ') t.pop_back();
    text << t << '\n';
  }
  out.csv = csv.str();
  out.text = text.str();
  return out;
}

void write_report(const std::filesystem::path& dir, const RenderedReport& rendered) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw RuntimeFailure("report", "cannot create " + dir.string() + ": " + ec.message());
  const auto write = [&](const char* name, const std::string& body) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw RuntimeFailure("report", "cannot write " + (dir / name).string());
    out << body;
  };
  write("report.jsonl", rendered.jsonl);
  write("table.csv", rendered.csv);
  write("table.txt", rendered.text);
}

}  // namespace iclr
