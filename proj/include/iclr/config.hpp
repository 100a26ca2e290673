#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <boost/property_tree/ptree.hpp>

#include "iclr/evaluation.hpp"

namespace iclr {

/// Parsed INI configuration plus the directory relative paths resolve against.
struct ConfigFile {
  boost::property_tree::ptree tree;
  std::filesystem::path base_dir;

  static ConfigFile load(const std::filesystem::path& path);

  /// "section.key=value"; top-level keys have no section.
  void apply_override(std::string_view assignment);
  void set(const std::string& key, const std::string& value);

  std::string get(const std::string& key, const std::string& fallback) const;
  std::filesystem::path path(const std::string& key, const std::string& fallback) const;

  /// Effective configuration as INI text.
  std::string echo() const;
};

/// Builds a RunConfig: loads task, datasets, generators, victim and embedder.
RunConfig make_run_config(const ConfigFile& cfg);

std::shared_ptr<const Victim> make_victim(const ConfigFile& cfg, const Task& task);

}  // namespace iclr
