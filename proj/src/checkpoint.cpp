#include "storm/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace storm {

namespace {

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamVec& params) {
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("cannot write checkpoint: " + path);
  out << "storm-ckpt 1\n";
  for (const auto& p : params) {
    const auto& s = p.t.shape();
    out << p.name << ' ' << s.rank << ' ' << s.rows << ' ' << s.cols;
    for (double v : p.t.values()) out << ' ' << fmt_double(v);
    out << '\n';
  }
}

std::vector<CheckpointEntry> load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open checkpoint: " + path);
  std::string header;
  if (!std::getline(in, header) || header != "storm-ckpt 1")
    throw std::invalid_argument(path + ": not a storm checkpoint (bad header)");
  std::vector<CheckpointEntry> entries;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream is(line);
    CheckpointEntry e;
    if (!(is >> e.name >> e.shape.rank >> e.shape.rows >> e.shape.cols))
      throw std::invalid_argument(path + ": malformed checkpoint line");
    e.values.reserve(static_cast<std::size_t>(e.shape.size()));
    double v;
    while (is >> v) e.values.push_back(v);
    if (static_cast<int>(e.values.size()) != e.shape.size())
      throw std::invalid_argument(path + ": value count mismatch for " + e.name);
    entries.push_back(std::move(e));
  }
  return entries;
}

void restore_from_checkpoint(const std::string& path, ParamVec& params) {
  auto entries = load_checkpoint(path);
  if (entries.size() != params.size())
    throw std::invalid_argument(path + ": parameter count mismatch");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].name != params[i].name)
      throw std::invalid_argument(path + ": parameter name mismatch: expected " + params[i].name +
                                  ", found " + entries[i].name);
    if (!(entries[i].shape == params[i].t.shape()))
      throw std::invalid_argument(path + ": shape mismatch for " + entries[i].name);
    params[i].t.mutable_values() = entries[i].values;
  }
}

}  // namespace storm
