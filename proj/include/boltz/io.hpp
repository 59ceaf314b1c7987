#ifndef BOLTZ_IO_HPP
#define BOLTZ_IO_HPP

#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "equilibrium.hpp"

namespace boltz {

namespace fs = std::filesystem;

// temp file in the target directory, then rename
inline void atomic_write(const std::string& path, const std::string& content) {
  fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::string tmp = path + ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + tmp);
    out << content;
    out.flush();
    if (!out) throw Error(ErrorKind::Io, "write failed for " + tmp);
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw Error(ErrorKind::Io, "cannot rename into " + path + ": " + ec.message());
  }
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------- manifests ----------------

// key = value per line, '#' starts a comment, keys unique
class Manifest {
 public:
  Manifest() = default;
  static Manifest parse(const std::string& text, const std::string& dir = ".") {
    Manifest m;
    m.text_ = text;
    m.dir_ = dir;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      auto eq = line.find('=');
      if (eq == std::string::npos)
        throw Error(ErrorKind::Parse, "manifest line " + std::to_string(lineno) + ": expected key = value");
      std::string key = trim(line.substr(0, eq)), val = trim(line.substr(eq + 1));
      if (key.empty()) throw Error(ErrorKind::Parse, "manifest line " + std::to_string(lineno) + ": empty key");
      if (!m.kv_.emplace(key, val).second)
        throw Error(ErrorKind::Parse, "manifest line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    }
    return m;
  }
  static Manifest load(const std::string& path) {
    std::string text = read_file(path);
    fs::path p(path);
    return parse(text, p.has_parent_path() ? p.parent_path().string() : ".");
  }

  bool has(const std::string& k) const { return kv_.count(k) > 0; }
  std::string str(const std::string& k, const std::string& def) const {
    auto it = kv_.find(k);
    return it == kv_.end() ? def : it->second;
  }
  std::string str(const std::string& k) const {
    auto it = kv_.find(k);
    if (it == kv_.end()) throw Error(ErrorKind::Parse, "manifest is missing '" + k + "'");
    return it->second;
  }
  double num(const std::string& k, double def) const { return has(k) ? parse_double(str(k)) : def; }
  double num(const std::string& k) const { return parse_double(str(k)); }
  long integer(const std::string& k, long def) const { return has(k) ? parse_long(str(k)) : def; }
  bool flag(const std::string& k, bool def) const {
    if (!has(k)) return def;
    std::string v = str(k);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw Error(ErrorKind::Parse, "'" + k + "' must be true or false");
  }
  Vec nums(const std::string& k) const {
    Vec out;
    for (auto& t : split_ws(str(k))) out.push_back(parse_double(t));
    return out;
  }
  std::vector<int> ints(const std::string& k) const {
    std::vector<int> out;
    for (auto& t : split_ws(str(k))) out.push_back(static_cast<int>(parse_long(t)));
    return out;
  }
  // path relative to the manifest directory
  std::string path(const std::string& k) const {
    fs::path p(str(k));
    return p.is_absolute() ? p.string() : (fs::path(dir_) / p).string();
  }

  void allow_only(const std::set<std::string>& keys) const {
    for (const auto& [k, v] : kv_)
      if (!keys.count(k)) throw Error(ErrorKind::Parse, "unknown manifest key '" + k + "'");
  }
  std::string hash() const {
    Fnv1a h;
    for (const auto& [k, v] : kv_) h.str(k).str("=").str(v).str("\n");
    return h.hex();
  }
  const std::map<std::string, std::string>& entries() const { return kv_; }

 private:
  std::string text_, dir_;
  std::map<std::string, std::string> kv_;
};

// ---------------- snapshots ----------------

inline std::string grid_hash(const SpatialGrid& xg, const VelocityGrid& vg) {
  Fnv1a h;
  h.i64(xg.dim());
  for (double p : xg.torus().period) h.f64(p);
  for (int c : xg.counts()) h.i64(c);
  h.i64(vg.dim()).f64(vg.vmax()).i64(vg.n());
  return h.hex();
}

struct SnapshotMeta {
  double t = 0.0;
  std::string potential_hash;
  std::string grid_hash;
};

inline constexpr const char* kSnapshotSchema = "boltzlab/snapshot/1";

// header lines "key = value", a line "data", then one value per line
inline std::string snapshot_text(const DistributionField& f, const std::string& potential_hash, double t) {
  std::ostringstream os;
  os << "schema = " << kSnapshotSchema << "\n";
  os << "version = " << kVersion << "\n";
  os << "representation = " << to_string(f.rep) << "\n";
  os << "dimension = " << f.xg.dim() << "\n";
  os << "period =";
  for (double p : f.xg.torus().period) os << ' ' << fmt(p);
  os << "\nx_counts =";
  for (int c : f.xg.counts()) os << ' ' << c;
  os << "\nv_max = " << fmt(f.vg.vmax()) << "\n";
  os << "v_nodes = " << f.vg.n() << "\n";
  os << "t = " << fmt(t) << "\n";
  os << "grid_hash = " << grid_hash(f.xg, f.vg) << "\n";
  os << "potential_hash = " << potential_hash << "\n";
  os << "data\n";
  for (double v : f.values) os << fmt(v) << "\n";
  return os.str();
}

inline DistributionField parse_snapshot(const std::string& text, SnapshotMeta* meta = nullptr) {
  std::istringstream is(text);
  std::string line;
  std::map<std::string, std::string> kv;
  bool data = false;
  while (std::getline(is, line)) {
    line = trim(line);
    if (line.empty()) continue;
    if (line == "data") {
      data = true;
      break;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::Parse, "snapshot header line without '='");
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  if (!data) throw Error(ErrorKind::Parse, "snapshot has no data section");
  auto get = [&](const std::string& k) {
    auto it = kv.find(k);
    if (it == kv.end()) throw Error(ErrorKind::Parse, "snapshot header is missing '" + k + "'");
    return it->second;
  };
  if (get("schema") != kSnapshotSchema) throw Error(ErrorKind::Parse, "unsupported snapshot schema " + get("schema"));
  const int d = static_cast<int>(parse_long(get("dimension")));
  Vec period;
  for (auto& t : split_ws(get("period"))) period.push_back(parse_double(t));
  std::vector<int> counts;
  for (auto& t : split_ws(get("x_counts"))) counts.push_back(static_cast<int>(parse_long(t)));
  require(static_cast<int>(period.size()) == d && static_cast<int>(counts.size()) == d,
          "snapshot period/x_counts length must equal dimension");
  SpatialGrid xg(Torus(d, period), counts);
  VelocityGrid vg(d, parse_double(get("v_max")), static_cast<int>(parse_long(get("v_nodes"))));
  DistributionField f(xg, vg, parse_representation(get("representation")));
  if (grid_hash(xg, vg) != get("grid_hash")) throw Error(ErrorKind::Parse, "snapshot grid hash mismatch");
  std::size_t k = 0;
  while (std::getline(is, line)) {
    line = trim(line);
    if (line.empty()) continue;
    if (k >= f.values.size()) throw Error(ErrorKind::Parse, "snapshot has too many values");
    f.values[k++] = parse_double(line);
  }
  if (k != f.values.size())
    throw Error(ErrorKind::Parse, "snapshot has " + std::to_string(k) + " values, expected " +
                                      std::to_string(f.values.size()));
  if (meta) {
    meta->t = parse_double(get("t"));
    meta->potential_hash = get("potential_hash");
    meta->grid_hash = get("grid_hash");
  }
  return f;
}

// ---------------- CSV ----------------

// provenance comment lines, then a header row
class CsvWriter {
 public:
  CsvWriter(const std::string& schema, const std::map<std::string, std::string>& provenance,
            const std::vector<std::string>& columns)
      : ncol_(columns.size()) {
    os_ << "# schema=" << schema << "\n# version=" << kVersion << "\n";
    for (const auto& [k, v] : provenance) os_ << "# " << k << "=" << v << "\n";
    for (std::size_t i = 0; i < columns.size(); ++i) os_ << (i ? "," : "") << columns[i];
    os_ << "\n";
  }
  void row(const Vec& values) {
    require(values.size() == ncol_, "CSV row width mismatch");
    for (std::size_t i = 0; i < values.size(); ++i) os_ << (i ? "," : "") << fmt(values[i]);
    os_ << "\n";
  }
  std::string str() const { return os_.str(); }

 private:
  std::size_t ncol_;
  std::ostringstream os_;
};

// two numeric columns named t and norm (or the first two columns), '#' comments skipped
inline std::pair<Vec, Vec> read_series_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  Vec t, y;
  bool header = false;
  int it = 0, iy = 1;
  while (std::getline(is, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::string c;
    std::istringstream ls(line);
    while (std::getline(ls, c, ',')) cells.push_back(trim(c));
    if (!header) {
      header = true;
      bool numeric = true;
      try {
        parse_double(cells[0]);
      } catch (const Error&) {
        numeric = false;
      }
      if (!numeric) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
          if (cells[i] == "t") it = static_cast<int>(i);
          if (cells[i] == "norm") iy = static_cast<int>(i);
        }
        continue;
      }
    }
    if (static_cast<int>(cells.size()) <= std::max(it, iy)) throw Error(ErrorKind::Parse, "short CSV row: " + line);
    t.push_back(parse_double(cells[it]));
    y.push_back(parse_double(cells[iy]));
  }
  return {t, y};
}

}  // namespace boltz

#endif  // BOLTZ_IO_HPP
