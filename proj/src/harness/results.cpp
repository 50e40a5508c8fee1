#include "sfl/harness/results.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <tuple>

namespace sfl {

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string opt(const std::optional<double>& v, const char* f) { return v ? fmt(f, *v) : std::string(); }

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

double to_double(const std::string& s, const std::string& where) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || *end != '\0') throw FormatError(where + ": not a number: '" + s + "'");
  return v;
}

std::uint64_t to_u64(const std::string& s, const std::string& where) {
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
    throw FormatError(where + ": not a non-negative integer: '" + s + "'");
  }
  return std::stoull(s);
}

std::optional<double> to_opt(const std::string& s, const std::string& where) {
  if (s.empty()) return std::nullopt;
  return to_double(s, where);
}

std::string metric_format(const std::string& metric) {
  if (metric == "mi_mse") return "%.8f";
  if (metric == "queries_used") return "%.0f";
  return "%.4f";
}

std::optional<double> metric_of(const MetricsRecord& r, const std::string& m) {
  if (m == "accuracy") return r.accuracy;
  if (m == "fidelity") return r.fidelity;
  if (m == "queries_used") return static_cast<double>(r.queries_used);
  if (m == "mi_mse") return r.mi_mse;
  if (m == "asr_fgsm") return r.asr_fgsm;
  if (m == "asr_pgd") return r.asr_pgd;
  return std::nullopt;
}

std::string pad(const std::string& s, std::size_t w) { return s.size() >= w ? s : std::string(w - s.size(), ' ') + s; }

}  // namespace

std::string csv_header() {
  std::string h;
  for (std::size_t i = 0; i < kResultColumns.size(); ++i) h += (i ? "," : "") + std::string(kResultColumns[i]);
  return h;
}

std::string csv_row(const MetricsRecord& r) {
  std::ostringstream os;
  os << r.config_hash << ',' << r.seed << ',' << r.mode << ',' << r.N << ',' << r.attack << ',' << r.queries_used << ','
     << fmt("%.4f", r.accuracy) << ',' << fmt("%.4f", r.fidelity) << ',' << opt(r.mi_mse, "%.8f") << ','
     << opt(r.asr_fgsm, "%.4f") << ',' << opt(r.asr_pgd, "%.4f") << ',' << opt(r.wallclock_s, "%.3f");
  return os.str();
}

void write_results_csv(const std::string& path, const std::vector<MetricsRecord>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  out << csv_header() << '\n';
  for (const auto& r : rows) out << csv_row(r) << '\n';
  if (!out) throw Error("write failed: " + path);
}

std::vector<MetricsRecord> read_results_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != csv_header()) throw FormatError(path + ": unexpected header '" + line + "', expected '" + csv_header() + "'");
  std::vector<MetricsRecord> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto where = path + ":" + std::to_string(lineno);
    const auto f = split_csv(line);
    if (f.size() != kResultColumns.size()) {
      throw FormatError(where + ": expected " + std::to_string(kResultColumns.size()) + " fields, got " +
                        std::to_string(f.size()));
    }
    MetricsRecord r;
    r.config_hash = f[0];
    r.seed = to_u64(f[1], where);
    r.mode = f[2];
    r.N = static_cast<int>(to_u64(f[3], where));
    r.attack = f[4];
    r.queries_used = to_u64(f[5], where);
    r.accuracy = to_double(f[6], where);
    r.fidelity = to_double(f[7], where);
    r.mi_mse = to_opt(f[8], where);
    r.asr_fgsm = to_opt(f[9], where);
    r.asr_pgd = to_opt(f[10], where);
    r.wallclock_s = to_opt(f[11], where);
    try {
      r.validate();
    } catch (const Error& e) {
      throw FormatError(where + ": " + e.what());
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

double median(std::vector<double> v) {
  if (v.empty()) throw Error("median of an empty sample");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Report make_report(const std::vector<MetricsRecord>& rows) {
  using Group = std::tuple<std::string, std::string>;  // config_hash, mode
  std::map<Group, std::set<int>> ns;
  std::map<std::tuple<std::string, std::string, std::string, int>, std::vector<const MetricsRecord*>> cells;
  std::set<std::tuple<std::string, std::string, std::string, int, std::uint64_t>> seen;
  for (const auto& r : rows) {
    if (std::find(kReportAttacks.begin(), kReportAttacks.end(), r.attack) == kReportAttacks.end()) {
      throw FormatError("report: unknown attack '" + r.attack + "'");
    }
    if (!seen.insert({r.config_hash, r.mode, r.attack, r.N, r.seed}).second) {
      throw FormatError("report: duplicate row for " + r.attack + " N=" + std::to_string(r.N) + " seed " +
                        std::to_string(r.seed));
    }
    ns[{r.config_hash, r.mode}].insert(r.N);
    cells[{r.config_hash, r.mode, r.attack, r.N}].push_back(&r);
  }

  auto cell_median = [&](const std::string& h, const std::string& mode, const std::string& attack, int N,
                         const std::string& metric) -> std::optional<double> {
    const auto it = cells.find({h, mode, attack, N});
    if (it == cells.end()) return std::nullopt;
    std::vector<double> v;
    for (const auto* r : it->second) {
      if (auto x = metric_of(*r, metric)) v.push_back(*x);
    }
    if (v.empty()) return std::nullopt;
    return median(v);
  };

  Report rep;
  std::ostringstream sum, fid, txt;
  sum << "config_hash,mode,metric,N";
  for (const char* a : kReportAttacks) sum << ',' << a;
  sum << '\n';
  fid << "config_hash,mode,attack,N,median,min,max,seeds\n";

  for (const auto& [group, nset] : ns) {
    const auto& [h, mode] = group;
    for (const char* metric : kReportMetrics) {
      for (int N : nset) {
        sum << h << ',' << mode << ',' << metric << ',' << N;
        for (const char* a : kReportAttacks) {
          const auto m = cell_median(h, mode, a, N, metric);
          sum << ',' << (m ? fmt(metric_format(metric).c_str(), *m) : "");
        }
        sum << '\n';
      }
    }
    for (const char* a : kReportAttacks) {
      if (std::string(a) == "victim") continue;
      for (int N : nset) {
        const auto it = cells.find({h, mode, a, N});
        if (it == cells.end()) continue;
        std::vector<double> v;
        for (const auto* r : it->second) v.push_back(r->fidelity);
        const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
        fid << h << ',' << mode << ',' << a << ',' << N << ',' << fmt("%.4f", median(v)) << ',' << fmt("%.4f", *lo)
            << ',' << fmt("%.4f", *hi) << ',' << v.size() << '\n';
      }
    }
    for (const char* metric : {"accuracy", "fidelity"}) {
      txt << metric << " (median over seeds), config " << h << ", " << mode << '\n';
      txt << pad("N", 4);
      for (const char* a : kReportAttacks) txt << pad(a, 11);
      txt << '\n';
      for (int N : nset) {
        txt << pad(std::to_string(N), 4);
        for (const char* a : kReportAttacks) {
          const auto m = cell_median(h, mode, a, N, metric);
          txt << pad(m ? fmt("%.2f", *m) : "-", 11);
        }
        txt << '\n';
      }
      txt << '\n';
    }
  }
  rep.summary_csv = sum.str();
  rep.fidelity_vs_n_csv = fid.str();
  rep.text = txt.str();
  return rep;
}

Report write_report(const std::vector<std::string>& inputs, const std::string& out_dir) {
  if (inputs.empty()) throw Error("report: no inputs");
  std::vector<MetricsRecord> rows;
  for (const auto& in : inputs) {
    const auto path = std::filesystem::is_directory(in) ? (std::filesystem::path(in) / "results.csv").string() : in;
    auto part = read_results_csv(path);
    rows.insert(rows.end(), part.begin(), part.end());
  }
  auto rep = make_report(rows);
  std::filesystem::create_directories(out_dir);
  for (auto [name, body] : {std::pair{"summary.csv", &rep.summary_csv}, {"fidelity_vs_N.csv", &rep.fidelity_vs_n_csv}}) {
    std::ofstream out(std::filesystem::path(out_dir) / name, std::ios::trunc);
    if (!out) throw Error(std::string("cannot write ") + name);
    out << *body;
  }
  return rep;
}

}  // namespace sfl
