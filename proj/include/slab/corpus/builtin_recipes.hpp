#pragma once

// The twelve shipped dataset recipes, stored in the same text format users
// write, so `slab recipes --export` reproduces them byte for byte.

#include <array>
#include <filesystem>
#include <fstream>
#include <string_view>

#include "slab/corpus/recipe.hpp"

namespace slab::corpus {

namespace detail {

inline constexpr std::string_view kN400Constructed = R"(metric = N400
context = sentence-so-far
transform = identity
fixed = surprisal + baseline + log_freq + word_pos + orth_neighborhood + concreteness
random = (1 + baseline + word_pos | subject)
random = (1 + baseline | item)
)";

struct BuiltinRecipe {
  std::string_view id;
  std::string_view label;
  std::string_view body;
};

inline constexpr std::string_view kMichaelov = R"(metric = N400
context = sentence-so-far
transform = identity
fixed = surprisal + log_freq + orth_neighborhood
random = (1 | subject)
random = (1 | sentence)
random = (1 | word)
random = (1 | electrode)
)";

inline constexpr std::string_view kBoyce = R"(metric = Maze-RT
context = passage-so-far
transform = log
fixed = surprisal + word_length + log_freq + word_pos
random = (0 + surprisal + word_length + word_pos | subject)
random = (1 | sentence)
exclude = response < 100
exclude = response > 5000
exclude = correct == 0
exclude = sentence_initial == 1
exclude = sentence_final == 1
exclude = comprehension_accuracy < 0.8
)";

inline constexpr std::string_view kBrothers = R"(metric = SPR-3W-RT
context = sentence-so-far
transform = identity
fixed = surprisal
random = (1 + surprisal | subject)
random = (1 + surprisal | item)
)";

inline constexpr std::string_view kNaturalStories = R"(metric = SPR-RT
context = passage-so-far
transform = log
fixed = surprisal + word_length + log_freq + word_pos
random = (1 + surprisal + word_length + log_freq + word_pos | subject)
random = (1 | sentence)
exclude = sentence_initial == 1
exclude = sentence_final == 1
exclude = response < 100
exclude = response > 3000
exclude = comprehension_score <= 3
)";

inline constexpr std::string_view kSmith = R"(metric = SPR-RT
context = passage-so-far
transform = log
fixed = surprisal + word_length + log_freq + word_pos
random = (1 + surprisal + word_length + log_freq + word_pos | subject)
random = (1 | sentence)
exclude = sentence_initial == 1
exclude = sentence_final == 1
exclude = response < 100
exclude = response > 3000
)";

inline constexpr std::string_view kProvo = R"(metric = GPD
context = passage-so-far
transform = log
fixed = surprisal + saccade_length + word_length + word_pos + log_freq + prev_fixated
random = (1 + surprisal + saccade_length + word_length + word_pos + log_freq + prev_fixated | subject)
random = (1 | sentence)
exclude = fixated == 0
exclude = saccade_length > 4
exclude = sentence_initial == 1
exclude = sentence_final == 1
exclude = doc_initial == 1
exclude = doc_final == 1
)";

inline constexpr std::string_view kDundee = R"(metric = GPD
context = passage-so-far
transform = log
fixed = surprisal + saccade_length + word_length + word_pos + log_freq + prev_fixated
random = (1 + surprisal + saccade_length + word_length + word_pos + log_freq + prev_fixated | subject)
random = (1 | sentence)
exclude = fixated == 0
exclude = saccade_length > 4
exclude = sentence_initial == 1
exclude = sentence_final == 1
exclude = doc_initial == 1
exclude = doc_final == 1
exclude = line_initial == 1
exclude = line_final == 1
exclude = screen_initial == 1
exclude = screen_final == 1
)";

inline constexpr std::array<BuiltinRecipe, 12> kBuiltins = {{
    {"federmeier2007", "Federmeier et al. (2007) N400", kN400Constructed},
    {"hubbard2019", "Hubbard et al. (2019) N400", kN400Constructed},
    {"michaelov2024", "Michaelov et al. (2024) N400", kMichaelov},
    {"szewczyk2022_context", "Szewczyk & Federmeier (2022) N400, context", kN400Constructed},
    {"szewczyk2022_power", "Szewczyk & Federmeier (2022) N400, power", kN400Constructed},
    {"wlotko2012", "Wlotko & Federmeier (2012) N400", kN400Constructed},
    {"boyce2023", "Boyce & Levy (2023) Maze", kBoyce},
    {"brothers2021", "Brothers & Kuperberg (2021) three-word SPR", kBrothers},
    {"futrell2021", "Natural Stories SPR (Futrell et al., 2021)", kNaturalStories},
    {"kennedy2003", "Dundee go-past (Kennedy et al., 2003)", kDundee},
    {"luke2018", "Provo go-past (Luke & Christianson, 2018)", kProvo},
    {"smith2013", "Brown SPR (Smith & Levy, 2013)", kSmith},
}};

}  // namespace detail

/// Recipe file text for a shipped dataset id.
inline std::string builtin_recipe_text(std::string_view id) {
  for (const auto& b : detail::kBuiltins)
    if (b.id == id) return fmt::format("dataset = {}\nlabel = {}\n{}", b.id, b.label, b.body);
  throw ValidationError(fmt::format("unknown dataset recipe '{}'", id));
}

inline std::vector<std::string> builtin_recipe_ids() {
  std::vector<std::string> ids;
  for (const auto& b : detail::kBuiltins) ids.emplace_back(b.id);
  return ids;
}

inline DatasetRecipe builtin_recipe(std::string_view id) {
  return DatasetRecipe::parse(builtin_recipe_text(id), id);
}

inline std::vector<DatasetRecipe> builtin_recipes() {
  std::vector<DatasetRecipe> out;
  for (const auto& id : builtin_recipe_ids()) out.push_back(builtin_recipe(id));
  return out;
}

/// Concatenated self-descriptions of every shipped recipe.
inline std::string recipe_manifest() {
  std::string out;
  for (const auto& r : builtin_recipes()) out += r.describe();
  return out;
}

/// Writes one `<id>.recipe` file per shipped recipe into `dir`.
inline void export_builtin_recipes(const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& id : builtin_recipe_ids()) {
    std::ofstream out(dir / (id + ".recipe"), std::ios::binary);
    if (!out) throw ValidationError(fmt::format("cannot write recipe into '{}'", dir.string()));
    out << builtin_recipe_text(id);
  }
}

/// Resolves a recipe reference: a shipped id, or a path to a recipe file.
/// A file whose `dataset` names a shipped recipe overrides only the keys it sets.
inline DatasetRecipe resolve_recipe(const std::string& ref) {
  for (const auto& b : detail::kBuiltins)
    if (b.id == ref) return builtin_recipe(ref);
  auto text = io::read_file(ref);
  auto probe = text.find("dataset");
  if (probe != std::string::npos) {
    auto eol = text.find('\n', probe);
    auto line = text.substr(probe, eol - probe);
    auto eq = line.find('=');
    if (eq != std::string::npos) {
      auto id = detail::trim(std::string_view(line).substr(eq + 1));
      for (const auto& b : detail::kBuiltins)
        if (b.id == id) return override_recipe(builtin_recipe(id), text, ref);
    }
  }
  return DatasetRecipe::parse(text, ref);
}

}  // namespace slab::corpus
