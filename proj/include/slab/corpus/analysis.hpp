#pragma once

// Joining trials with surprisal, response transforms, and conversion to a
// regression frame.

#include <cmath>
#include <map>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "slab/corpus/recipe.hpp"
#include "slab/corpus/stimuli.hpp"
#include "slab/corpus/trials.hpp"
#include "slab/lmm/design.hpp"
#include "slab/lmm/model_frame.hpp"

namespace slab::corpus {

struct AnalysisRow {
  TrialRow trial;
  double surprisal = 0.0;
};

struct AnalysisTable {
  std::vector<AnalysisRow> rows;
  DatasetRecipe recipe;
  std::string engine;
  std::string dataset_hash;
};

/// Exact-key join on (item, word_index) against the records of one engine.
inline AnalysisTable attach_surprisal(const std::vector<TrialRow>& rows,
                                      const std::vector<SurprisalRecord>& records,
                                      const DatasetRecipe& recipe, const std::string& engine,
                                      std::string dataset_hash = {}) {
  std::map<std::pair<std::string, long long>, double> index;
  for (const auto& r : records) {
    if (r.engine != engine) continue;
    auto [it, inserted] = index.emplace(std::pair{r.item_id, r.word_index}, r.surprisal);
    if (!inserted)
      throw ValidationError(fmt::format("duplicate surprisal for item '{}', word {} (engine '{}')",
                                        r.item_id, r.word_index, engine));
  }
  AnalysisTable table{{}, recipe, engine, std::move(dataset_hash)};
  table.rows.reserve(rows.size());
  std::vector<std::string> missing;
  std::set<std::pair<std::string, long long>> reported;
  for (const auto& row : rows) {
    auto key = std::pair{row.item, row.word_index};
    auto it = index.find(key);
    if (it == index.end()) {
      if (reported.insert(key).second)
        missing.push_back(fmt::format("({}, {})", row.item, row.word_index));
      continue;
    }
    table.rows.push_back({row, it->second});
  }
  if (!missing.empty())
    throw ValidationError(fmt::format("no surprisal from engine '{}' for {} key(s): {}", engine,
                                      missing.size(), fmt::join(missing, ", ")));
  return table;
}

inline double transform_value(double response, ResponseTransform t) {
  if (t == ResponseTransform::identity) return response;
  if (!(response > 0.0))
    throw NumericError(fmt::format("cannot log-transform non-positive response {}", response));
  return std::log(response);
}

inline AnalysisTable transform_response(AnalysisTable table, const DatasetRecipe& recipe) {
  for (auto& row : table.rows)
    row.trial.response = transform_value(row.trial.response, recipe.transform);
  return table;
}

/// Regression frame with every fixed effect as a numeric column and every
/// random-effect group as a factor.
inline lmm::ModelFrame to_model_frame(const AnalysisTable& table) {
  lmm::ModelFrame frame;
  const auto& recipe = table.recipe;
  for (const auto& f : recipe.fixed_effects) frame.numeric[f];
  for (const auto& g : recipe.grouping_factors()) frame.factors[g];
  for (const auto& row : table.rows) {
    frame.response.push_back(row.trial.response);
    for (const auto& f : recipe.fixed_effects)
      frame.numeric[f].push_back(f == DatasetRecipe::kSurprisal ? row.surprisal
                                                               : row.trial.covariate(f));
    for (const auto& g : recipe.grouping_factors()) frame.factors[g].push_back(row.trial.factor(g));
  }
  return frame;
}

inline lmm::FixedSpec fixed_spec(const DatasetRecipe& recipe) {
  return {recipe.fixed_effects, true};
}

inline std::vector<lmm::RandomTerm> random_terms(const DatasetRecipe& recipe) {
  std::vector<lmm::RandomTerm> terms;
  for (const auto& re : recipe.random_effects)
    terms.push_back({re.group, re.slopes, re.intercept, re.correlated});
  return terms;
}

}  // namespace slab::corpus
