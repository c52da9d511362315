#pragma once

// Per-trial rows, typed loading from the normalized CSV schema, and the
// declarative exclusion filter.

#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "slab/corpus/recipe.hpp"
#include "slab/io/csv.hpp"

namespace slab::corpus {

struct TrialRow {
  std::string subject;
  std::string item;
  long long word_index = 0;
  double response = 0.0;
  std::map<std::string, double> covariates;
  std::map<std::string, std::string> factors;  ///< grouping factors besides subject/item
  std::map<std::string, double> flags;

  /// Grouping level by factor name; subject and item are always available.
  const std::string& factor(const std::string& name) const {
    if (name == "subject") return subject;
    if (name == "item") return item;
    auto it = factors.find(name);
    if (it == factors.end())
      throw ValidationError(fmt::format("trial row has no grouping factor '{}'", name));
    return it->second;
  }

  double covariate(const std::string& name) const {
    auto it = covariates.find(name);
    if (it == covariates.end())
      throw ValidationError(fmt::format("trial row has no covariate '{}'", name));
    return it->second;
  }
};

/// Which canonical columns to read, and the file header each maps to.
struct TrialSchema {
  std::vector<std::string> covariates;
  std::vector<std::string> factors;
  std::vector<std::string> flags;
  std::map<std::string, std::string> rename;  ///< canonical -> file column

  std::string file_column(const std::string& canonical) const {
    auto it = rename.find(canonical);
    return it == rename.end() ? canonical : it->second;
  }

  static TrialSchema for_recipe(const DatasetRecipe& recipe) {
    TrialSchema s;
    s.covariates = recipe.covariates();
    for (const auto& g : recipe.grouping_factors())
      if (g != "subject" && g != "item") s.factors.push_back(g);
    s.flags = recipe.flag_columns();
    // Flags that are also covariates (saccade_length) are read once.
    std::erase_if(s.flags, [&](const std::string& f) {
      return std::find(s.covariates.begin(), s.covariates.end(), f) != s.covariates.end();
    });
    return s;
  }
};

inline std::vector<TrialRow> parse_trials(const io::CsvTable& table, const TrialSchema& schema,
                                          std::string_view source) {
  auto col = [&](const std::string& canonical) {
    return table.require_column(schema.file_column(canonical), source);
  };
  const auto subject = col("subject");
  const auto item = col("item");
  const auto word_index = col("word_index");
  const auto response = col("response");
  std::vector<std::pair<std::string, std::size_t>> covs, facs, flags;
  for (const auto& c : schema.covariates) covs.emplace_back(c, col(c));
  for (const auto& f : schema.factors) facs.emplace_back(f, col(f));
  for (const auto& f : schema.flags) flags.emplace_back(f, col(f));

  std::vector<TrialRow> rows;
  rows.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& cells = table.rows[r];
    const std::size_t line = r + 2;  // 1-based, after the header
    TrialRow row;
    row.subject = cells[subject];
    row.item = cells[item];
    if (row.subject.empty() || row.item.empty())
      throw ValidationError(fmt::format("{}: row {}: empty subject or item", source, line));
    row.word_index = io::parse_int(cells[word_index], source, line, "word_index");
    row.response = io::parse_double(cells[response], source, line, "response");
    if (!std::isfinite(row.response))
      throw ValidationError(fmt::format("{}: row {}: response is not finite", source, line));
    for (const auto& [name, c] : covs) row.covariates[name] = io::parse_double(cells[c], source, line, name);
    for (const auto& [name, c] : facs) row.factors[name] = cells[c];
    for (const auto& [name, c] : flags) row.flags[name] = io::parse_double(cells[c], source, line, name);
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::vector<TrialRow> load_trials(const std::string& path, const TrialSchema& schema) {
  return parse_trials(io::read_csv(path), schema, path);
}

struct ExclusionReport {
  std::vector<std::pair<std::string, std::size_t>> per_rule;  ///< rows failing each rule
  std::size_t input_rows = 0;
  std::size_t excluded_rows = 0;
};

namespace detail {

inline double rule_value(const TrialRow& row, const std::string& column) {
  if (column == DatasetRecipe::kResponse) return row.response;
  if (auto it = row.flags.find(column); it != row.flags.end()) return it->second;
  if (auto it = row.covariates.find(column); it != row.covariates.end()) return it->second;
  throw ValidationError(fmt::format("exclusion rule references absent column '{}'", column));
}

}  // namespace detail

/// Keeps rows that fail no rule. Counts are per rule and overlap when a row
/// fails several rules.
inline std::vector<TrialRow> apply_exclusions(const std::vector<TrialRow>& rows,
                                              const DatasetRecipe& recipe,
                                              ExclusionReport* report = nullptr) {
  ExclusionReport local;
  local.input_rows = rows.size();
  for (const auto& rule : recipe.exclusions) local.per_rule.emplace_back(rule.describe(), 0);
  std::vector<TrialRow> kept;
  kept.reserve(rows.size());
  for (const auto& row : rows) {
    bool drop = false;
    for (std::size_t k = 0; k < recipe.exclusions.size(); ++k) {
      const auto& rule = recipe.exclusions[k];
      if (rule.excludes(detail::rule_value(row, rule.column))) {
        ++local.per_rule[k].second;
        drop = true;
      }
    }
    if (drop)
      ++local.excluded_rows;
    else
      kept.push_back(row);
  }
  if (report) *report = std::move(local);
  return kept;
}

struct TrialSummary {
  std::size_t trials = 0;
  std::size_t subjects = 0;
  std::size_t items = 0;
};

inline TrialSummary summarize(const std::vector<TrialRow>& rows) {
  std::set<std::string> subjects, items;
  for (const auto& r : rows) {
    subjects.insert(r.subject);
    items.insert(r.item);
  }
  return {rows.size(), subjects.size(), items.size()};
}

}  // namespace slab::corpus
