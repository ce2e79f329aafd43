#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "vbb/agent/policy.hpp"
#include "vbb/grid/grid.hpp"
#include "vbb/harness/metrics.hpp"

namespace vbb::harness {

struct TableOutput {
  std::string markdown;
  std::vector<std::string> missing;
};

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
  std::size_t n = 0;
};

/// Mean and sample standard deviation; a single value has deviation 0.
/// Values are summed in sorted order so the result ignores input order.
inline MeanStd mean_std(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  MeanStd m;
  m.n = v.size();
  if (v.empty()) return m;
  for (double x : v) m.mean += x;
  m.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - m.mean) * (x - m.mean);
    m.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return m;
}

inline bool is_planner_run(const MetricsRecord& r) {
  return r.run_id.find("_planner_oracle_") != std::string::npos;
}

namespace detail {

inline std::string fmt(const char* f, double a, double b) {
  char buf[96];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

inline std::string fmt(const char* f, double a, double b, double c) {
  char buf[96];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

inline std::string percent(const MeanStd& m) { return fmt("%.1f%% ± %.1f%%", 100 * m.mean, 100 * m.std); }

inline int variant_rank(const std::string& v) {
  static const std::vector<std::string> order{"uvfa", "vib", "rag", "aic", "bernoulli_reinforce", "vbb"};
  auto it = std::find(order.begin(), order.end(), v);
  return static_cast<int>(it - order.begin());
}

inline std::string display_name(const std::string& v) {
  if (v == "vbb") return "VBB";
  if (v == "vib") return "InfoBot";
  if (v == "uvfa") return "UVFA";
  if (v == "rag") return "RAG";
  if (v == "aic") return "AIC";
  if (v == "bernoulli_reinforce") return "Bernoulli-Reinforce";
  return v;
}

struct Method {
  std::string variant;
  std::optional<double> beta;
  bool operator<(const Method& o) const {
    return std::make_tuple(variant_rank(variant), variant, beta.value_or(-1.0)) <
           std::make_tuple(variant_rank(o.variant), o.variant, o.beta.value_or(-1.0));
  }
  bool operator==(const Method& o) const { return variant == o.variant && beta == o.beta; }
};

// Labels carry beta only when a variant appears with more than one beta.
inline std::map<Method, std::string> method_labels(const std::vector<Method>& methods) {
  std::map<std::string, std::set<double>> betas;
  for (const auto& m : methods) betas[m.variant].insert(m.beta.value_or(-1.0));
  std::map<Method, std::string> out;
  for (const auto& m : methods) {
    std::string label = display_name(m.variant);
    if (betas[m.variant].size() > 1 && m.beta) {
      char buf[48];
      std::snprintf(buf, sizeof buf, " β=%g", *m.beta);
      label += buf;
    }
    out[m] = label;
  }
  return out;
}

inline std::vector<Method> methods_of(const std::vector<const MetricsRecord*>& rs) {
  std::vector<Method> out;
  for (const auto* r : rs) {
    Method m{r->variant, r->beta};
    if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline bool env_less(const std::string& a, const std::string& b) {
  try {
    const auto ea = grid::parse_env_name(a), eb = grid::parse_env_name(b);
    return std::make_tuple(static_cast<int>(ea.family), ea.rooms, ea.size, a) <
           std::make_tuple(static_cast<int>(eb.family), eb.rooms, eb.size, b);
  } catch (const ConfigError&) {
    return a < b;
  }
}

inline std::vector<std::string> sorted_unique(std::vector<std::string> v) {
  std::sort(v.begin(), v.end(), env_less);
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

inline std::string row(const std::vector<std::string>& cells) {
  std::string out = "|";
  for (const auto& c : cells) out += " " + c + " |";
  return out + "\n";
}

inline std::string rule(std::size_t n, bool first_left = true) {
  std::string out = "|";
  for (std::size_t i = 0; i < n; ++i) out += (i == 0 && first_left) ? " --- |" : " :---: |";
  return out + "\n";
}

}  // namespace detail

/// Evaluation success of agents trained on one environment.
inline TableOutput generalization_table(const std::vector<MetricsRecord>& records) {
  using namespace detail;
  TableOutput out;
  std::vector<std::string> train_envs;
  for (const auto& r : records)
    if (!is_planner_run(r)) train_envs.push_back(r.train_env);
  train_envs = sorted_unique(train_envs);
  if (train_envs.empty()) out.missing.push_back("no navigation records");
  for (const auto& train : train_envs) {
    std::vector<const MetricsRecord*> rs;
    std::vector<std::string> evals;
    for (const auto& r : records)
      if (!is_planner_run(r) && r.train_env == train) {
        rs.push_back(&r);
        if (r.eval_env != train) evals.push_back(r.eval_env);
      }
    evals = sorted_unique(evals);
    const auto methods = methods_of(rs);
    const auto labels = method_labels(methods);
    std::vector<std::string> header{"Train"};
    header.insert(header.end(), evals.begin(), evals.end());
    out.markdown += row(header) + rule(header.size());
    for (const auto& m : methods) {
      std::vector<std::string> cells{train + " (" + labels.at(m) + ")"};
      for (const auto& e : evals) {
        std::vector<double> v;
        for (const auto* r : rs)
          if (Method{r->variant, r->beta} == m && r->eval_env == e) v.push_back(r->eval_success);
        if (v.empty()) {
          cells.push_back("n/a");
          out.missing.push_back(train + " (" + labels.at(m) + ") / " + e);
        } else {
          cells.push_back(percent(mean_std(v)));
        }
      }
      out.markdown += row(cells);
    }
    out.markdown += "\n";
  }
  return out;
}

/// Share of goal accesses taken near junctions, per held-out environment.
inline TableOutput junction_table(const std::vector<MetricsRecord>& records) {
  using namespace detail;
  TableOutput out;
  std::vector<std::string> evals;
  for (const auto& r : records)
    if (!is_planner_run(r) && r.eval_env != r.train_env) evals.push_back(r.eval_env);
  evals = sorted_unique(evals);
  if (evals.empty()) out.missing.push_back("no held-out navigation records");
  for (const auto& e : evals) {
    std::vector<const MetricsRecord*> rs;
    for (const auto& r : records)
      if (!is_planner_run(r) && r.eval_env == e && r.eval_env != r.train_env) rs.push_back(&r);
    const auto methods = methods_of(rs);
    const auto labels = method_labels(methods);
    out.markdown += "Evaluation on " + e + "\n\n";
    out.markdown += row({"Method", "Percentage of times", "Enrichment", "Access rate"}) + rule(4);
    for (const auto& m : methods) {
      std::vector<double> frac, enrich, access;
      for (const auto* r : rs)
        if (Method{r->variant, r->beta} == m) {
          frac.push_back(r->junction_access_fraction);
          enrich.push_back(r->junction_enrichment);
          access.push_back(r->access_rate);
        }
      const MeanStd en = mean_std(enrich);
      out.markdown +=
          row({labels.at(m), percent(mean_std(frac)), fmt("%.2f ± %.2f", en.mean, en.std), percent(mean_std(access))});
    }
    out.markdown += "\n";
  }
  return out;
}

/// Where the planner-oracle agent runs the planner.
inline TableOutput planner_table(const std::vector<MetricsRecord>& records) {
  using namespace detail;
  TableOutput out;
  std::vector<const MetricsRecord*> rs;
  for (const auto& r : records)
    if (is_planner_run(r)) rs.push_back(&r);
  if (rs.empty()) out.missing.push_back("no planner-oracle records");
  const auto methods = methods_of(rs);
  const auto labels = method_labels(methods);
  for (const auto& m : methods) {
    std::vector<std::string> evals;
    for (const auto* r : rs)
      if (Method{r->variant, r->beta} == m) evals.push_back(r->eval_env);
    for (const auto& e : sorted_unique(evals)) {
      std::vector<double> near, hall;
      for (const auto* r : rs)
        if (Method{r->variant, r->beta} == m && r->eval_env == e) {
          near.push_back(r->junction_access_fraction);
          hall.push_back(1.0 - r->junction_access_fraction);
        }
      out.markdown += labels.at(m) + " with planner input, evaluated on " + e + "\n\n";
      out.markdown += row({"Expensive Inference algorithm", "% of times"}) + rule(2);
      out.markdown += row({"Near the junction", percent(mean_std(near))});
      out.markdown += row({"In the Hallway", percent(mean_std(hall))});
      out.markdown += "\n";
    }
  }
  return out;
}

/// Mean transmitted bits with access percentage in brackets.
inline TableOutput bits_table(const std::vector<MetricsRecord>& records) {
  using namespace detail;
  TableOutput out;
  std::vector<const MetricsRecord*> rs;
  std::vector<std::string> evals;
  for (const auto& r : records)
    if (!is_planner_run(r) &&
        (r.variant == "vib" || r.variant == "bernoulli_reinforce" || r.variant == "vbb")) {
      rs.push_back(&r);
      evals.push_back(r.eval_env);
    }
  evals = sorted_unique(evals);
  std::vector<Method> methods = methods_of(rs);
  for (const char* base : {"vib", "bernoulli_reinforce", "vbb"}) {
    const bool present = std::any_of(methods.begin(), methods.end(), [&](const Method& m) { return m.variant == base; });
    if (!present) methods.push_back({base, std::nullopt});
  }
  std::sort(methods.begin(), methods.end());
  std::vector<Method> columns;
  for (const char* base : {"vib", "bernoulli_reinforce", "vbb"})
    for (const auto& m : methods)
      if (m.variant == base) columns.push_back(m);
  const auto labels = method_labels(columns);

  std::vector<std::string> header{"Task"};
  for (const auto& m : columns) header.push_back(labels.at(m));
  out.markdown += row(header) + rule(header.size());
  if (evals.empty()) out.missing.push_back("no bits records");
  for (const auto& e : evals) {
    for (const bool floored : {false, true}) {
      const std::string task = "Navigation " + e + (floored ? " (floored bits)" : " (bits)");
      std::vector<std::string> cells{task};
      for (const auto& m : columns) {
        std::vector<double> bits, access;
        for (const auto* r : rs)
          if (Method{r->variant, r->beta} == m && r->eval_env == e) {
            const auto& b = floored ? r->mean_kl_bits_floored : r->mean_kl_bits;
            if (!b) continue;
            bits.push_back(*b);
            access.push_back(r->access_rate);
          }
        if (bits.empty()) {
          cells.push_back("n/a");
          out.missing.push_back(task + " / " + labels.at(m));
          continue;
        }
        const MeanStd b = mean_std(bits), a = mean_std(access);
        cells.push_back(fmt("%.2f (%.0f%%) ± %.2f", b.mean, 100 * a.mean, b.std));
      }
      out.markdown += row(cells);
    }
  }
  return out;
}

inline TableOutput analyze_table(const std::vector<MetricsRecord>& records, const std::string& table) {
  if (table == "generalization") return generalization_table(records);
  if (table == "junction") return junction_table(records);
  if (table == "planner") return planner_table(records);
  if (table == "bits") return bits_table(records);
  throw ConfigError("table", "unknown table '" + table + "' (generalization, junction, planner, bits)");
}

}  // namespace vbb::harness
