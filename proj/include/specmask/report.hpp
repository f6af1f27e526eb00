#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace specmask {

/// Collects a run's manifest (inputs with content hashes, seed, outputs) and
/// writes it plus a versioned JSON summary. Manifests list only files that
/// were actually written, and contain no timestamps, so reruns are
/// byte-identical.
class Report {
 public:
  Report(std::filesystem::path out_dir, std::string subcommand, uint64_t seed);

  const std::filesystem::path& dir() const { return dir_; }

  /// Registers an input file, recording its content hash.
  void add_input(const std::filesystem::path& path);

  /// Writes bytes to dir()/name (atomically) and registers the output.
  std::filesystem::path write_output(const std::string& name, std::string_view bytes);

  /// Registers an output produced by other writers (e.g. the PNG encoder).
  void note_output(const std::filesystem::path& path);

  /// Adds a key to the summary JSON (values serialized as-is when raw_json).
  void summary_set(const std::string& key, const std::string& value, bool raw_json = false);
  void summary_set(const std::string& key, double value);
  void summary_set(const std::string& key, int64_t value);

  /// Writes manifest.json and summary.json; call once, last.
  void finalize();

 private:
  std::filesystem::path dir_;
  std::string subcommand_;
  uint64_t seed_;
  std::vector<std::pair<std::string, std::string>> inputs_;  // path, hash
  std::vector<std::string> outputs_;
  std::map<std::string, std::string> summary_;  // key -> serialized JSON value
};

/// Resolved-config snapshot: sorted key=value lines.
std::string render_config_snapshot(const std::map<std::string, std::string>& kv);

/// Parses a plain-text config file (one key=value per line, '#' comments,
/// blank lines ignored) into ordered pairs; malformed lines throw with the
/// line number.
std::vector<std::pair<std::string, std::string>> parse_config_file(
    const std::filesystem::path& path);

}  // namespace specmask
