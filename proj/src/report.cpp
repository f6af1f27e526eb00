#include "specmask/report.hpp"

#include <fstream>
#include <json.hpp>
#include <stdexcept>

#include "specmask/fsio.hpp"

namespace specmask {

using json = nlohmann::json;

Report::Report(std::filesystem::path out_dir, std::string subcommand, uint64_t seed)
    : dir_(std::move(out_dir)), subcommand_(std::move(subcommand)), seed_(seed) {
  std::filesystem::create_directories(dir_);
}

void Report::add_input(const std::filesystem::path& path) {
  inputs_.emplace_back(path.string(), io::hash_hex(io::fnv1a(io::read_bytes(path))));
}

std::filesystem::path Report::write_output(const std::string& name, std::string_view bytes) {
  const std::filesystem::path path = dir_ / name;
  io::atomic_write(path, bytes);
  outputs_.push_back(name);
  return path;
}

void Report::note_output(const std::filesystem::path& path) {
  outputs_.push_back(std::filesystem::relative(path, dir_).string());
}

void Report::summary_set(const std::string& key, const std::string& value, bool raw_json) {
  summary_[key] = raw_json ? value : json(value).dump();
}

void Report::summary_set(const std::string& key, double value) {
  summary_[key] = json(value).dump();
}

void Report::summary_set(const std::string& key, int64_t value) {
  summary_[key] = json(value).dump();
}

void Report::finalize() {
  json summary;
  summary["schema_version"] = 1;
  summary["subcommand"] = subcommand_;
  summary["seed"] = seed_;
  for (const auto& [k, v] : summary_) summary[k] = json::parse(v);
  write_output("summary.json", summary.dump(2) + "\n");

  json manifest;
  manifest["schema_version"] = 1;
  manifest["subcommand"] = subcommand_;
  manifest["seed"] = seed_;
  manifest["tool_version"] = "0.1.0";
  json jin = json::array();
  for (const auto& [path, hash] : inputs_) {
    jin.push_back({{"path", path}, {"fnv1a", hash}});
  }
  manifest["inputs"] = jin;
  json jout = json::array();
  for (const std::string& name : outputs_) {
    if (!std::filesystem::exists(dir_ / name)) {
      throw std::logic_error("report: manifest references missing file: " + name);
    }
    jout.push_back(name);
  }
  jout.push_back("manifest.json");
  manifest["outputs"] = jout;
  io::atomic_write(dir_ / "manifest.json", manifest.dump(2) + "\n");
}

std::string render_config_snapshot(const std::map<std::string, std::string>& kv) {
  std::string out;
  for (const auto& [k, v] : kv) {
    out += k;
    out += '=';
    out += v;
    out += '\n';
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> parse_config_file(
    const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config file: " + path.string());
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    // trim
    const auto is_space = [](unsigned char c) { return std::isspace(c); };
    while (!line.empty() && is_space(line.front())) line.erase(line.begin());
    while (!line.empty() && is_space(line.back())) line.pop_back();
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw std::runtime_error("config file " + path.string() + " line " +
                               std::to_string(lineno) + ": expected key=value, got '" + line +
                               "'");
    }
    std::string key = line.substr(0, eq);
    std::string val = line.substr(eq + 1);
    while (!key.empty() && is_space(key.back())) key.pop_back();
    while (!val.empty() && is_space(val.front())) val.erase(val.begin());
    out.emplace_back(std::move(key), std::move(val));
  }
  return out;
}

}  // namespace specmask
