#pragma once

// Command-line front end. Everything lives in this header so the tests can
// drive the commands in-process; powermt.cpp only forwards argv.
//
//   powermt allocate --alpha A (--input F | --M N [--gamma-const G]) [--method M] [--out json|csv]
//   powermt decide   --procedure P (--q Q | --alpha A) --input F [--seed S] [--out json|csv] [--trace]
//   powermt simulate --config F [--reps R] [--seed S] [--out PATH]
//
// Exit codes: 0 success, 2 usage or validation, 3 numerical failure.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "powermt/powermt.hpp"

namespace powermt::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumerical = 3;
inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kThreadsEnv = "POWERMT_THREADS";

using json = nlohmann::ordered_json;

/// 12 significant digits.
inline std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

/// A JSON number carrying the same 12 significant digits as fmt().
inline json num(double v) {
  if (!std::isfinite(v)) return nullptr;
  return std::stod(fmt(v));
}

// ---------------------------------------------------------------------------
// CSV

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::optional<std::size_t> column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    return std::nullopt;
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

inline std::vector<std::string> split_csv_line(const std::string& line, std::size_t lineno) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) throw ValidationError("csv line " + std::to_string(lineno) + ": unterminated quote");
  out.push_back(trim(cur));
  return out;
}

inline double parse_double(const std::string& text, const std::string& what) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    throw ValidationError(what + ": not a number: '" + text + "'");
  }
  if (used != text.size()) throw ValidationError(what + ": not a number: '" + text + "'");
  return v;
}

}  // namespace detail

/// Header row required; blank lines and lines starting with '#' are skipped.
inline CsvTable parse_csv(std::istream& in) {
  CsvTable t;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    const auto trimmed = detail::trim(line);
    if (trimmed.empty() || trimmed[0] == '#') continue;
    auto fields = detail::split_csv_line(line, lineno);
    if (t.header.empty()) {
      t.header = std::move(fields);
      continue;
    }
    if (fields.size() != t.header.size())
      throw ValidationError("csv line " + std::to_string(lineno) + ": expected " + std::to_string(t.header.size()) +
                            " fields, got " + std::to_string(fields.size()));
    t.rows.push_back(std::move(fields));
  }
  if (t.header.empty()) throw ValidationError("csv: missing header row");
  return t;
}

inline CsvTable read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open input file: " + path);
  return parse_csv(in);
}

/// The per-hypothesis input columns shared by allocate and decide.
struct InputRecords {
  std::vector<std::string> ids;
  std::optional<std::vector<double>> gamma;
  std::optional<std::vector<double>> pvalue;
  std::optional<std::vector<std::string>> cluster;
  std::optional<std::vector<double>> x;
  std::vector<double> mu0;
  std::vector<double> sigma0;

  std::size_t size() const { return ids.size(); }
};

inline InputRecords read_records(const CsvTable& t) {
  InputRecords r;
  const auto numeric = [&](const char* name) -> std::optional<std::vector<double>> {
    const auto c = t.column(name);
    if (!c) return std::nullopt;
    std::vector<double> v;
    for (std::size_t i = 0; i < t.rows.size(); ++i)
      v.push_back(detail::parse_double(t.rows[i][*c], std::string(name) + " on data row " + std::to_string(i + 1)));
    return v;
  };
  const auto id = t.column("id");
  for (std::size_t i = 0; i < t.rows.size(); ++i) r.ids.push_back(id ? t.rows[i][*id] : std::to_string(i + 1));
  r.gamma = numeric("gamma");
  r.pvalue = numeric("pvalue");
  r.x = numeric("x");
  r.mu0 = numeric("mu0").value_or(std::vector<double>(r.size(), 0.0));
  r.sigma0 = numeric("sigma0").value_or(std::vector<double>(r.size(), 1.0));
  if (const auto c = t.column("cluster")) {
    r.cluster.emplace();
    for (const auto& row : t.rows) r.cluster->push_back(row[*c]);
  }
  if (r.size() == 0) throw ValidationError("input has no data rows");
  return r;
}

// ---------------------------------------------------------------------------
// allocate

struct AllocateArgs {
  double alpha = 0.0;
  std::string input;
  std::size_t M = 0;
  std::optional<double> gamma_const;
  std::string method = "optimal";
  std::string out = "json";
};

inline int cmd_allocate(const AllocateArgs& a, std::ostream& out) {
  if (!(a.alpha >= 0.0 && a.alpha < 1.0)) throw ValidationError("--alpha must lie in [0, 1)");
  std::vector<std::string> ids;
  std::optional<std::vector<double>> gammas;
  std::optional<std::vector<std::string>> clusters;
  if (!a.input.empty()) {
    if (a.M != 0) throw ValidationError("give either --input or --M, not both");
    auto rec = read_records(read_csv_file(a.input));
    ids = std::move(rec.ids);
    gammas = std::move(rec.gamma);
    clusters = std::move(rec.cluster);
    if (a.gamma_const) {
      if (gammas) throw ValidationError("--gamma-const conflicts with a gamma column");
      gammas.emplace(ids.size(), *a.gamma_const);
    }
  } else {
    if (a.M == 0) throw ValidationError("need --input or --M >= 1");
    for (std::size_t m = 0; m < a.M; ++m) ids.push_back(std::to_string(m + 1));
    if (a.gamma_const) gammas.emplace(a.M, *a.gamma_const);
  }
  const std::size_t M = ids.size();

  SizeAllocation alloc;
  if (a.method == "sidak") {
    alloc = sidak_sizes(M, a.alpha);
  } else if (a.method == "bonferroni") {
    alloc = bonferroni_sizes(M, a.alpha);
  } else if (a.method == "optimal") {
    if (!gammas) throw ValidationError("method optimal needs gamma (a gamma column or --gamma-const)");
    alloc = optimal_sizes(RocModel::from_gammas(*gammas), a.alpha);
  } else if (a.method == "clustered") {
    if (!gammas) throw ValidationError("method clustered needs gamma (a gamma column or --gamma-const)");
    // Without a cluster column every hypothesis is its own cluster.
    std::vector<std::string> labels = clusters ? *clusters : ids;
    ClusterSpec spec;
    std::map<std::string, std::size_t> index;
    std::vector<std::size_t> of(M);
    for (std::size_t m = 0; m < M; ++m) {
      auto [it, fresh] = index.emplace(labels[m], spec.cluster_gammas.size());
      if (fresh) {
        spec.cluster_gammas.push_back((*gammas)[m]);
        spec.cluster_counts.push_back(0);
      } else if (spec.cluster_gammas[it->second] != (*gammas)[m]) {
        throw ValidationError("cluster '" + labels[m] + "' mixes different gamma values");
      }
      ++spec.cluster_counts[it->second];
      of[m] = it->second;
    }
    const auto c = optimal_sizes_clustered(spec, a.alpha);
    alloc = c.per_cluster;
    alloc.sizes.resize(M);
    for (std::size_t m = 0; m < M; ++m) alloc.sizes[m] = c.per_cluster.sizes[of[m]];
  } else {
    throw ValidationError("unknown --method '" + a.method + "' (optimal, sidak, bonferroni, clustered)");
  }

  std::optional<double> efficiency;
  std::vector<double> power;
  if (gammas) {
    for (std::size_t m = 0; m < M; ++m) power.push_back(roc((*gammas)[m], alloc.sizes[m]));
    if (a.alpha > 0.0) {
      const double sid = sidak_sizes(M, a.alpha).sizes[0];
      double num_p = 0.0, den_p = 0.0;
      for (std::size_t m = 0; m < M; ++m) {
        num_p += power[m];
        den_p += roc((*gammas)[m], sid);
      }
      efficiency = 100.0 * num_p / den_p;
    }
  }

  if (a.out == "csv") {
    out << "id,gamma,size,power\n";
    for (std::size_t m = 0; m < M; ++m)
      out << ids[m] << ',' << (gammas ? fmt((*gammas)[m]) : "") << ',' << fmt(alloc.sizes[m]) << ','
          << (gammas ? fmt(power[m]) : "") << '\n';
    return kExitOk;
  }
  if (a.out != "json") throw ValidationError("--out must be json or csv");
  json doc;
  doc["schema_version"] = kSchemaVersion;
  doc["command"] = "allocate";
  doc["method"] = a.method;
  doc["alpha"] = num(a.alpha);
  doc["M"] = M;
  doc["lagrange"] = alloc.lagrange ? num(*alloc.lagrange) : json(nullptr);
  doc["constraint_residual"] = num(alloc.constraint_residual);
  doc["stationarity_residual"] = num(alloc.stationarity_residual);
  doc["efficiency_vs_sidak"] = efficiency ? num(*efficiency) : json(nullptr);
  json hyps = json::array();
  for (std::size_t m = 0; m < M; ++m) {
    json h;
    h["id"] = ids[m];
    h["gamma"] = gammas ? num((*gammas)[m]) : json(nullptr);
    h["size"] = num(alloc.sizes[m]);
    h["power"] = gammas ? num(power[m]) : json(nullptr);
    hyps.push_back(std::move(h));
  }
  doc["hypotheses"] = std::move(hyps);
  out << doc.dump(2) << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// decide

struct DecideArgs {
  std::string procedure;
  std::optional<double> q;
  std::optional<double> alpha;
  std::string input;
  std::uint64_t seed = 0;
  std::string out = "json";
  bool trace = false;
};

inline int cmd_decide(const DecideArgs& a, std::ostream& out) {
  const auto proc = parse_procedure(a.procedure);
  if (!proc) throw ValidationError("unknown --procedure '" + a.procedure + "'");
  if (a.q.has_value() == a.alpha.has_value()) throw ValidationError("give exactly one of --q or --alpha");
  const double level = a.q ? *a.q : *a.alpha;
  if (a.out != "json" && a.out != "csv") throw ValidationError("--out must be json or csv");

  const auto rec = read_records(read_csv_file(a.input));
  const std::size_t M = rec.size();
  if (uses_model(*proc) && !rec.gamma)
    throw ValidationError(std::string("procedure ") + to_string(*proc) + " needs a gamma column");

  std::vector<double> s;
  if (rec.pvalue) {
    s = *rec.pvalue;
  } else if (rec.x) {
    // Randomizers come from a dedicated stream; the Gaussian p-value does not
    // depend on them but they are drawn so the input-to-output map is fixed.
    StreamRng rng(a.seed, 0, 3);
    for (std::size_t m = 0; m < M; ++m) {
      const GaussianProcess process{{rec.mu0[m], rec.sigma0[m], rec.gamma ? (*rec.gamma)[m] : 0.0}};
      process.hypothesis.validate();
      s.push_back(randomized_pvalue(process, {(*rec.x)[m], rng.uniform()}));
    }
  } else {
    throw ValidationError("input needs a pvalue column (or x with optional mu0, sigma0)");
  }

  std::optional<RocModel> model;
  std::optional<PValuePanel> panel;
  if (rec.gamma) {
    model.emplace(RocModel::from_gammas(*rec.gamma));
    if (uses_model(*proc)) panel.emplace(generalized_pvalues(*model, s));
  }
  Decision d;
  switch (*proc) {
    case Procedure::strong_fwer_opt: d = decide_strong_fwer(*panel, level); break;
    case Procedure::fdr_opt:
      d = decide_fdr_opt(*panel, level);
      d.size_condition = check_size_condition(*model, default_condition_grid());
      break;
    default: d = decide(*proc, model ? &*model : nullptr, s, level);
  }

  std::vector<const TraceStep*> step_of(M, nullptr);
  for (const auto& st : d.trace.steps) step_of[st.index] = &st;

  if (a.out == "csv") {
    out << "id,pvalue,w,reject";
    if (a.trace) out << ",rank,statistic,threshold,passed";
    out << '\n';
    for (std::size_t m = 0; m < M; ++m) {
      out << rec.ids[m] << ',' << fmt(s[m]) << ',' << (panel ? fmt(panel->w[m]) : "") << ','
          << int(d.reject[m]);
      if (a.trace) {
        const auto* st = step_of[m];
        out << ',' << st->rank << ',' << fmt(st->statistic) << ',' << fmt(st->threshold) << ','
            << int(st->passed);
      }
      out << '\n';
    }
    return kExitOk;
  }

  json doc;
  doc["schema_version"] = kSchemaVersion;
  doc["command"] = "decide";
  doc["procedure"] = to_string(*proc);
  doc["level"] = num(level);
  doc["M"] = M;
  doc["rejections"] = d.rejections();
  doc["cutoff_index"] = d.cutoff_index;
  doc["alpha_threshold"] = num(d.alpha_threshold);
  if (d.size_condition) {
    json sc;
    sc["satisfied"] = d.size_condition->satisfied;
    sc["worst_alpha"] = num(d.size_condition->worst_alpha);
    sc["worst_ratio"] = num(d.size_condition->worst_ratio);
    doc["size_condition"] = std::move(sc);
  }
  json hyps = json::array();
  for (std::size_t m = 0; m < M; ++m) {
    json h;
    h["id"] = rec.ids[m];
    h["pvalue"] = num(s[m]);
    h["w"] = panel ? num(panel->w[m]) : json(nullptr);
    h["reject"] = d.reject[m] != 0;
    hyps.push_back(std::move(h));
  }
  doc["hypotheses"] = std::move(hyps);
  if (a.trace) {
    json steps = json::array();
    for (const auto& st : d.trace.steps) {
      json j;
      j["rank"] = st.rank;
      j["id"] = rec.ids[st.index];
      j["ordered_value"] = num(st.ordered_value);
      j["statistic"] = num(st.statistic);
      j["threshold"] = num(st.threshold);
      j["passed"] = st.passed;
      steps.push_back(std::move(j));
    }
    doc["trace"] = std::move(steps);
  }
  out << doc.dump(2) << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateArgs {
  std::string config;
  std::optional<std::size_t> reps;
  std::optional<std::uint64_t> seed;
  std::string out;  ///< path; empty writes to the given stream
};

/// Worker count from POWERMT_THREADS, defaulting to the hardware count.
inline unsigned thread_count() {
  if (const char* env = std::getenv(kThreadsEnv); env && *env) {
    const double v = detail::parse_double(env, kThreadsEnv);
    if (!(v >= 1.0 && v <= 4096.0 && v == std::floor(v)))
      throw ValidationError(std::string(kThreadsEnv) + " must be a positive integer");
    return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Grid keys: M, p, nu (numbers or arrays), qstar, reps, seed, procedures, k.
inline TableGrid parse_grid(const json& cfg) {
  if (!cfg.is_object()) throw ValidationError("config must be a JSON object");
  static const std::set<std::string> known{"M", "p", "nu", "qstar", "reps", "seed", "procedures", "k"};
  for (const auto& [key, _] : cfg.items())
    if (!known.count(key)) throw ValidationError("config: unknown key '" + key + "'");
  TableGrid g;
  const auto list = [&](const char* key, auto& dst) {
    if (!cfg.contains(key)) return;
    using T = typename std::decay_t<decltype(dst)>::value_type;
    const auto& v = cfg.at(key);
    dst.clear();
    if (v.is_array()) {
      for (const auto& e : v) dst.push_back(e.template get<T>());
    } else {
      dst.push_back(v.template get<T>());
    }
  };
  try {
    if (cfg.contains("M"))
      for (const auto& e : cfg.at("M").is_array() ? cfg.at("M") : json::array({cfg.at("M")}))
        if (!e.is_number_unsigned() || e.get<std::size_t>() == 0)
          throw ValidationError("config: M must be positive integers");
    list("M", g.Ms);
    list("p", g.ps);
    list("nu", g.nus);
    if (cfg.contains("qstar")) g.qstar = cfg.at("qstar").get<double>();
    if (cfg.contains("reps")) g.reps = cfg.at("reps").get<std::size_t>();
    if (cfg.contains("seed")) g.seed = cfg.at("seed").get<std::uint64_t>();
    if (cfg.contains("k")) g.kfwer_k = cfg.at("k").get<std::size_t>();
    if (cfg.contains("procedures")) {
      g.procedures.clear();
      for (const auto& e : cfg.at("procedures")) {
        const auto name = e.get<std::string>();
        const auto p = parse_procedure(name);
        if (!p) throw ValidationError("config: unknown procedure '" + name + "'");
        g.procedures.push_back(*p);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  return g;
}

inline void write_table_csv(const std::vector<TableRow>& rows, std::ostream& out) {
  out << "M,p,nu,qstar,procedure,reps,fdr,se_fdr,mdr_std,se_mdr,fwer,se_fwer,kfwer,se_kfwer,etp,se_etp,efp,se_efp\n";
  for (const auto& r : rows) {
    const auto& e = r.estimates;
    out << r.M << ',' << fmt(r.p) << ',' << fmt(r.nu) << ',' << fmt(r.qstar) << ',' << to_string(e.procedure) << ','
        << e.reps;
    for (double v : {e.fdr, e.se_fdr, e.mdr_std, e.se_mdr, e.fwer, e.se_fwer, e.kfwer, e.se_kfwer, e.etp, e.se_etp,
                     e.efp, e.se_efp})
      out << ',' << fmt(v);
    out << '\n';
  }
}

inline int cmd_simulate(const SimulateArgs& a, std::ostream& out) {
  std::ifstream in(a.config);
  if (!in) throw ValidationError("cannot open config file: " + a.config);
  json cfg;
  try {
    cfg = json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  auto grid = parse_grid(cfg);
  if (a.reps) grid.reps = *a.reps;
  if (a.seed) grid.seed = *a.seed;
  grid.threads = thread_count();
  const auto rows = run_table(grid);
  if (a.out.empty()) {
    write_table_csv(rows, out);
  } else {
    std::ofstream file(a.out);
    if (!file) throw ValidationError("cannot open output file: " + a.out);
    write_table_csv(rows, file);
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

/// Parses `args` (without the program name) and runs one command.
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Power-maximizing multiple hypothesis testing", "powermt"};
  app.require_subcommand(1);

  AllocateArgs aa;
  auto* allocate = app.add_subcommand("allocate", "Optimal or classical test sizes under a weak FWER budget");
  allocate->add_option("--alpha", aa.alpha, "FWER budget in [0, 1)")->required();
  allocate->add_option("--input", aa.input, "CSV with id, gamma and optional cluster columns");
  allocate->add_option("--M", aa.M, "number of hypotheses when no input file is given");
  allocate->add_option("--gamma-const", aa.gamma_const, "common effect size for every hypothesis");
  allocate->add_option("--method", aa.method, "optimal, sidak, bonferroni or clustered")->capture_default_str();
  allocate->add_option("--out", aa.out, "json or csv")->capture_default_str();

  DecideArgs da;
  auto* decide_cmd = app.add_subcommand("decide", "Apply a multiple testing procedure to p-values");
  decide_cmd->add_option("--procedure", da.procedure,
                         "weak-fwer-opt, strong-fwer-opt, fdr-opt, bh, stepdown-sidak or bonferroni")
      ->required();
  decide_cmd->add_option("--q", da.q, "FDR or strong FWER level");
  decide_cmd->add_option("--alpha", da.alpha, "weak FWER budget");
  decide_cmd->add_option("--input", da.input, "CSV with id, pvalue (or x, mu0, sigma0) and gamma columns")
      ->required();
  decide_cmd->add_option("--seed", da.seed, "seed for randomizers when p-values are computed from x");
  decide_cmd->add_option("--out", da.out, "json or csv")->capture_default_str();
  decide_cmd->add_flag("--trace", da.trace, "include the per-step trace");

  SimulateArgs sa;
  auto* simulate = app.add_subcommand("simulate", "Monte Carlo risk estimates over a scenario grid");
  simulate->add_option("--config", sa.config, "JSON grid specification")->required();
  simulate->add_option("--reps", sa.reps, "replicates per cell (overrides the config)");
  simulate->add_option("--seed", sa.seed, "seed (overrides the config)");
  simulate->add_option("--out", sa.out, "output CSV path (stdout when omitted)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (allocate->parsed()) return cmd_allocate(aa, out);
    if (decide_cmd->parsed()) return cmd_decide(da, out);
    return cmd_simulate(sa, out);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  }
}

}  // namespace powermt::cli
