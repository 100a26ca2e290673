#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "iclr/evaluation.hpp"

namespace iclr {

/// Round half away from zero to 2 decimals.
double round2(double x);

/// {dataset, method, attack, defense, shots, seed, clean_acc, attack_acc,
///  asr, n, skipped, mean_queries}; undefined values are null.
nlohmann::ordered_json report_row(const RobustnessReport& r);
RobustnessReport report_from_row(const nlohmann::json& row);
nlohmann::ordered_json sample_row(const SampleRecord& s);

std::vector<RobustnessReport> load_report_rows(const std::filesystem::path& path);

enum class TableLayout { table1, per_shot };
TableLayout parse_layout(std::string_view name);

struct RenderedReport {
  std::string jsonl;
  std::string csv;
  std::string text;
};

/// Columns: Clean | ASR per attack | Avg (mean of defined ASRs). Rows are
/// (dataset, method, defense, shots, seed); runs with several seeds get an
/// extra mean and std row. The per-shot layout groups by (method, defense,
/// shots) and requires a single dataset.
RenderedReport render_report(std::span<const RobustnessReport> reports, TableLayout layout);

/// Writes report.jsonl, table.csv and table.txt into `dir`.
void write_report(const std::filesystem::path& dir, const RenderedReport& rendered);

}  // namespace iclr
