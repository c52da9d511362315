#pragma once

// Declarative per-dataset analysis recipe and its text format.
//
//   # comment
//   dataset   = futrell2021
//   label     = Natural Stories SPR
//   metric    = SPR-RT
//   context   = passage-so-far
//   transform = log
//   fixed     = surprisal + word_length + log_freq + word_pos
//   random    = (1 + surprisal + word_length | subject)
//   random    = (1 | sentence)
//   exclude   = response < 100
//
// Random terms use the familiar bar notation: `(1 + a | g)` correlated
// intercept and slopes, `(1 + a || g)` independent, `(0 + a | g)` slopes only.
// `random` and `exclude` may repeat; every other key appears once.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "slab/error.hpp"
#include "slab/io/csv.hpp"

namespace slab::corpus {

enum class Metric { n400, spr_rt, spr_3w_rt, maze_rt, gpd };
enum class ContextPolicy { sentence_so_far, passage_so_far };
enum class ResponseTransform { identity, natural_log };
enum class CompareOp { lt, le, gt, ge, eq, ne };

inline std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::n400: return "N400";
    case Metric::spr_rt: return "SPR-RT";
    case Metric::spr_3w_rt: return "SPR-3W-RT";
    case Metric::maze_rt: return "Maze-RT";
    case Metric::gpd: return "GPD";
  }
  return "?";
}

inline std::string_view to_string(ContextPolicy p) {
  return p == ContextPolicy::sentence_so_far ? "sentence-so-far" : "passage-so-far";
}

inline std::string_view to_string(ResponseTransform t) {
  return t == ResponseTransform::identity ? "identity" : "log";
}

inline std::string_view to_string(CompareOp op) {
  switch (op) {
    case CompareOp::lt: return "<";
    case CompareOp::le: return "<=";
    case CompareOp::gt: return ">";
    case CompareOp::ge: return ">=";
    case CompareOp::eq: return "==";
    case CompareOp::ne: return "!=";
  }
  return "?";
}

/// True for the electrophysiological metric; everything else is a reading time.
inline bool is_n400(Metric m) { return m == Metric::n400; }

/// Excludes a row when `column op threshold` holds. Comparisons are strict
/// where the operator is strict: `response < 100` keeps a 100 ms row.
struct ExclusionRule {
  std::string column;
  CompareOp op = CompareOp::lt;
  double threshold = 0.0;

  bool excludes(double value) const {
    switch (op) {
      case CompareOp::lt: return value < threshold;
      case CompareOp::le: return value <= threshold;
      case CompareOp::gt: return value > threshold;
      case CompareOp::ge: return value >= threshold;
      case CompareOp::eq: return value == threshold;
      case CompareOp::ne: return value != threshold;
    }
    return false;
  }

  std::string describe() const {
    return fmt::format("{} {} {}", column, to_string(op), io::format_number(threshold));
  }
};

struct RandomEffect {
  std::string group;
  bool intercept = true;
  std::vector<std::string> slopes;
  bool correlated = true;

  std::size_t columns() const { return (intercept ? 1 : 0) + slopes.size(); }

  std::string describe() const {
    std::vector<std::string> parts;
    parts.push_back(intercept ? "1" : "0");
    parts.insert(parts.end(), slopes.begin(), slopes.end());
    bool show_bars = correlated || columns() < 2;
    return fmt::format("({} {} {})", fmt::join(parts, " + "), show_bars ? "|" : "||", group);
  }
};

struct DatasetRecipe {
  std::string dataset_id;
  std::string label;
  Metric metric = Metric::n400;
  ContextPolicy context = ContextPolicy::sentence_so_far;
  ResponseTransform transform = ResponseTransform::identity;
  std::vector<ExclusionRule> exclusions;
  std::vector<std::string> fixed_effects;  ///< surprisal first
  std::vector<RandomEffect> random_effects;

  static constexpr std::string_view kResponse = "response";
  static constexpr std::string_view kSurprisal = "surprisal";

  void validate() const {
    if (dataset_id.empty()) throw ValidationError("recipe: missing dataset id");
    if (fixed_effects.empty() || fixed_effects.front() != kSurprisal)
      throw ValidationError(
          fmt::format("recipe '{}': fixed effects must start with surprisal", dataset_id));
    std::set<std::string> seen;
    for (const auto& f : fixed_effects)
      if (!seen.insert(f).second)
        throw ValidationError(fmt::format("recipe '{}': duplicate fixed effect '{}'", dataset_id, f));
    for (const auto& re : random_effects) {
      if (re.group.empty() || re.columns() == 0)
        throw ValidationError(fmt::format("recipe '{}': empty random term", dataset_id));
      for (const auto& s : re.slopes)
        if (!seen.count(s))
          throw ValidationError(fmt::format(
              "recipe '{}': random slope '{}' is not a fixed effect", dataset_id, s));
    }
  }

  /// Numeric predictors read from the trial file (fixed effects minus surprisal).
  std::vector<std::string> covariates() const {
    return {fixed_effects.begin() + 1, fixed_effects.end()};
  }

  std::vector<std::string> grouping_factors() const {
    std::vector<std::string> g;
    for (const auto& re : random_effects)
      if (std::find(g.begin(), g.end(), re.group) == g.end()) g.push_back(re.group);
    return g;
  }

  /// Flag columns the exclusion rules inspect (the response is not a flag).
  std::vector<std::string> flag_columns() const {
    std::vector<std::string> f;
    for (const auto& r : exclusions)
      if (r.column != kResponse && std::find(f.begin(), f.end(), r.column) == f.end())
        f.push_back(r.column);
    return f;
  }

  std::string fixed_formula() const { return fmt::format("{}", fmt::join(fixed_effects, " + ")); }

  std::string random_formula() const {
    std::vector<std::string> terms;
    for (const auto& re : random_effects) terms.push_back(re.describe());
    return fmt::format("{}", fmt::join(terms, " + "));
  }

  /// Multi-line self-description used for the recipe manifest.
  std::string describe() const {
    std::vector<std::string> rules;
    for (const auto& r : exclusions) rules.push_back(r.describe());
    return fmt::format(
        "[{}] {}\n  metric: {}\n  context: {}\n  transform: {}\n  fixed: {}\n  random: {}\n"
        "  exclude: {}\n",
        dataset_id, label, to_string(metric), to_string(context), to_string(transform),
        fixed_formula(), random_formula(),
        rules.empty() ? std::string("none") : fmt::format("{}", fmt::join(rules, "; ")));
  }

  std::string serialize() const {
    std::string out;
    out += fmt::format("dataset = {}\n", dataset_id);
    if (!label.empty()) out += fmt::format("label = {}\n", label);
    out += fmt::format("metric = {}\n", to_string(metric));
    out += fmt::format("context = {}\n", to_string(context));
    out += fmt::format("transform = {}\n", to_string(transform));
    out += fmt::format("fixed = {}\n", fixed_formula());
    for (const auto& re : random_effects) out += fmt::format("random = {}\n", re.describe());
    for (const auto& r : exclusions) out += fmt::format("exclude = {}\n", r.describe());
    return out;
  }

  static DatasetRecipe parse(std::string_view text, std::string_view source = "<recipe>");
};

namespace detail {

inline std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_plus(std::string_view s) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    auto p = s.find('+', pos);
    if (p == std::string_view::npos) p = s.size();
    auto item = trim(s.substr(pos, p - pos));
    if (!item.empty()) out.push_back(item);
    pos = p + 1;
  }
  return out;
}

inline RandomEffect parse_random(std::string_view text, std::string_view source) {
  auto t = trim(text);
  if (t.size() < 2 || t.front() != '(' || t.back() != ')')
    throw ValidationError(fmt::format("{}: random term '{}' must be parenthesized", source, t));
  std::string_view inner(t.data() + 1, t.size() - 2);
  RandomEffect re;
  auto bar = inner.find("||");
  std::size_t bar_len = 2;
  if (bar == std::string_view::npos) {
    bar = inner.find('|');
    bar_len = 1;
  } else {
    re.correlated = false;
  }
  if (bar == std::string_view::npos)
    throw ValidationError(fmt::format("{}: random term '{}' has no grouping bar", source, t));
  re.group = trim(inner.substr(bar + bar_len));
  re.intercept = true;
  bool intercept_seen = false;
  for (auto& part : split_plus(inner.substr(0, bar))) {
    if (part == "1") {
      re.intercept = true;
      intercept_seen = true;
    } else if (part == "0") {
      re.intercept = false;
      intercept_seen = true;
    } else {
      re.slopes.push_back(part);
    }
  }
  if (!intercept_seen && re.slopes.empty())
    throw ValidationError(fmt::format("{}: random term '{}' is empty", source, t));
  if (re.group.empty())
    throw ValidationError(fmt::format("{}: random term '{}' has no group", source, t));
  auto identifier = [](std::string_view n) {
    return !n.empty() && std::all_of(n.begin(), n.end(), [](char c) {
      return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.';
    });
  };
  if (!identifier(re.group))
    throw ValidationError(fmt::format("{}: random term '{}': bad group name '{}'", source, t, re.group));
  for (const auto& s : re.slopes)
    if (!identifier(s))
      throw ValidationError(fmt::format("{}: random term '{}': bad slope name '{}'", source, t, s));
  return re;
}

/// Splits `(a | g) + (b | h)` into its parenthesized terms.
inline std::vector<RandomEffect> parse_random_list(std::string_view text, std::string_view source) {
  std::vector<RandomEffect> out;
  int depth = 0;
  std::size_t start = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '(') ++depth;
    if (text[i] == ')' && --depth < 0)
      throw ValidationError(fmt::format("{}: unbalanced parentheses in '{}'", source, text));
    if (depth == 0 && text[i] == '+') {
      out.push_back(parse_random(text.substr(start, i - start), source));
      start = i + 1;
    }
  }
  if (depth != 0) throw ValidationError(fmt::format("{}: unbalanced parentheses in '{}'", source, text));
  out.push_back(parse_random(text.substr(start), source));
  return out;
}

inline ExclusionRule parse_rule(std::string_view text, std::string_view source) {
  static const std::pair<std::string_view, CompareOp> ops[] = {
      {"<=", CompareOp::le}, {">=", CompareOp::ge}, {"==", CompareOp::eq},
      {"!=", CompareOp::ne}, {"<", CompareOp::lt},  {">", CompareOp::gt}};
  for (const auto& [sym, op] : ops) {
    auto p = text.find(sym);
    if (p == std::string_view::npos) continue;
    ExclusionRule r;
    r.column = trim(text.substr(0, p));
    r.op = op;
    auto value = trim(text.substr(p + sym.size()));
    r.threshold = io::parse_double(value, source, 0, "exclude");
    if (r.column.empty())
      throw ValidationError(fmt::format("{}: exclusion '{}' has no column", source, text));
    return r;
  }
  throw ValidationError(fmt::format("{}: exclusion '{}' has no comparison", source, text));
}

}  // namespace detail

inline DatasetRecipe DatasetRecipe::parse(std::string_view text, std::string_view source) {
  DatasetRecipe r;
  std::set<std::string> seen;
  bool have_metric = false, have_context = false, have_fixed = false;
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    auto line = detail::trim(text.substr(pos, nl - pos));
    pos = nl + 1;
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ValidationError(fmt::format("{}:{}: expected 'key = value'", source, line_no));
    auto key = detail::trim(std::string_view(line).substr(0, eq));
    auto value = detail::trim(std::string_view(line).substr(eq + 1));
    if (key != "random" && key != "exclude" && !seen.insert(key).second)
      throw ValidationError(fmt::format("{}:{}: duplicate key '{}'", source, line_no, key));
    if (key == "dataset") {
      r.dataset_id = value;
    } else if (key == "label") {
      r.label = value;
    } else if (key == "metric") {
      have_metric = true;
      static const std::map<std::string, Metric, std::less<>> metrics = {
          {"N400", Metric::n400},        {"SPR-RT", Metric::spr_rt},
          {"SPR-3W-RT", Metric::spr_3w_rt}, {"Maze-RT", Metric::maze_rt},
          {"GPD", Metric::gpd}};
      auto it = metrics.find(value);
      if (it == metrics.end())
        throw ValidationError(fmt::format("{}:{}: unknown metric '{}'", source, line_no, value));
      r.metric = it->second;
    } else if (key == "context") {
      have_context = true;
      if (value == "sentence-so-far")
        r.context = ContextPolicy::sentence_so_far;
      else if (value == "passage-so-far")
        r.context = ContextPolicy::passage_so_far;
      else
        throw ValidationError(
            fmt::format("{}:{}: unknown context policy '{}'", source, line_no, value));
    } else if (key == "transform") {
      if (value == "identity")
        r.transform = ResponseTransform::identity;
      else if (value == "log")
        r.transform = ResponseTransform::natural_log;
      else
        throw ValidationError(fmt::format("{}:{}: unknown transform '{}'", source, line_no, value));
    } else if (key == "fixed") {
      have_fixed = true;
      r.fixed_effects = detail::split_plus(value);
    } else if (key == "random") {
      for (auto& re : detail::parse_random_list(value, source)) r.random_effects.push_back(std::move(re));
    } else if (key == "exclude") {
      r.exclusions.push_back(detail::parse_rule(value, source));
    } else {
      throw ValidationError(fmt::format("{}:{}: unknown key '{}'", source, line_no, key));
    }
  }
  if (!have_metric || !have_context || !have_fixed)
    throw ValidationError(
        fmt::format("{}: recipe needs dataset, metric, context and fixed keys", source));
  r.validate();
  return r;
}

/// Applies a partial override document on top of a base recipe: keys present
/// in `overrides` replace the base value; a `random` or `exclude` key replaces
/// the whole list.
inline DatasetRecipe override_recipe(const DatasetRecipe& base, std::string_view overrides,
                                     std::string_view source = "<override>") {
  std::string merged;
  std::set<std::string> keys;
  std::size_t pos = 0;
  while (pos < overrides.size()) {
    auto nl = overrides.find('\n', pos);
    if (nl == std::string_view::npos) nl = overrides.size();
    auto line = detail::trim(overrides.substr(pos, nl - pos));
    pos = nl + 1;
    if (line.empty() || line.front() == '#') continue;
    auto eq = line.find('=');
    if (eq != std::string::npos) keys.insert(detail::trim(std::string_view(line).substr(0, eq)));
    merged += line + "\n";
  }
  std::string base_text = base.serialize();
  pos = 0;
  while (pos < base_text.size()) {
    auto nl = base_text.find('\n', pos);
    auto line = base_text.substr(pos, nl - pos);
    pos = nl + 1;
    auto key = detail::trim(std::string_view(line).substr(0, line.find('=')));
    if (!keys.count(key)) merged += line + "\n";
  }
  return DatasetRecipe::parse(merged, source);
}

}  // namespace slab::corpus
