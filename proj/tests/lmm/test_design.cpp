#include <gtest/gtest.h>

#include "slab/corpus/analysis.hpp"
#include "slab/corpus/builtin_recipes.hpp"
#include "slab/lmm/fit.hpp"
#include "support/lmm_data.hpp"

using namespace slab;
using lmm::FixedSpec;
using lmm::RandomTerm;

TEST(Design, InterceptOnlyIsColumnOfOnes) {
  lmm::ModelFrame f;
  f.response = {1, 2, 3, 4, 5};
  auto d = lmm::build_design(f, FixedSpec{{}, true}, {});
  ASSERT_EQ(d.X.rows(), 5);
  ASSERT_EQ(d.X.cols(), 1);
  EXPECT_TRUE((d.X.array() == 1.0).all());
  EXPECT_EQ(d.q(), 0u);
}

TEST(Design, RandomInterceptIndicators) {
  lmm::ModelFrame f;
  f.response = {1, 2, 3, 4, 5, 6};
  f.factors["subject"] = {"b", "a", "c", "a", "b", "c"};
  auto d = lmm::build_design(f, FixedSpec{}, {RandomTerm{"subject"}});
  ASSERT_EQ(d.q(), 3u);
  Eigen::MatrixXd Z(d.Z);
  for (Eigen::Index i = 0; i < Z.rows(); ++i) {
    EXPECT_EQ((Z.row(i).array() != 0.0).count(), 1);
    EXPECT_EQ(Z.row(i).sum(), 1.0);
  }
  // levels sorted: a, b, c
  EXPECT_EQ(Z(1, 0), 1.0);
  EXPECT_EQ(Z(0, 1), 1.0);
  EXPECT_EQ(Z(2, 2), 1.0);
  EXPECT_EQ(d.theta_size(), 1u);
}

TEST(Design, CorrelatedSlopeCounts) {
  for (int g = 2; g <= 5; ++g) {
    lmm::ModelFrame f;
    for (int i = 0; i < 3 * g; ++i) {
      f.response.push_back(i);
      f.numeric["x"].push_back(0.5 * i);
      f.factors["g"].push_back("L" + std::to_string(i % g));
    }
    auto d = lmm::build_design(f, FixedSpec{{"x"}}, {RandomTerm{"g", {"x"}}});
    // enumerate: per level one intercept and one slope column
    EXPECT_EQ(d.q(), static_cast<std::size_t>(2 * g));
    // lower triangle of a 2x2 factor: (0,0), (1,0), (1,1)
    EXPECT_EQ(d.theta_size(), 3u);
    auto lb = d.lower_bounds();
    EXPECT_EQ(lb[0], 0.0);
    EXPECT_TRUE(std::isinf(lb[1]));
    EXPECT_EQ(lb[2], 0.0);
    auto un = lmm::build_design(f, FixedSpec{{"x"}}, {RandomTerm{"g", {"x"}, true, false}});
    EXPECT_EQ(un.theta_size(), 2u);
  }
}

TEST(Design, ErrorsOnUnresolvedNamesAndSingleLevel) {
  lmm::ModelFrame f;
  f.response = {1, 2, 3};
  f.numeric["x"] = {1, 2, 4};
  f.factors["g"] = {"a", "a", "a"};
  EXPECT_THROW(lmm::build_design(f, FixedSpec{{"nope"}}, {}), ValidationError);
  EXPECT_THROW(lmm::build_design(f, FixedSpec{{"x"}}, {RandomTerm{"h"}}), ValidationError);
  EXPECT_THROW(lmm::build_design(f, FixedSpec{{"x"}}, {RandomTerm{"g"}}), ValidationError);
}

TEST(Design, AliasedColumnIsDroppedWithWarning) {
  lmm::ModelFrame f;
  f.response = {1, 3, 2, 5, 4};
  f.numeric["a"] = {1, 2, 3, 4, 5};
  f.numeric["b"] = {2, 4, 6, 8, 10};
  f.numeric["c"] = {1, 0, 1, 0, 0};
  auto d = lmm::build_design(f, FixedSpec{{"a", "b", "c"}}, {});
  EXPECT_EQ(d.fixed_names, (std::vector<std::string>{"(Intercept)", "a", "c"}));
  EXPECT_EQ(d.aliased, std::vector<std::string>{"b"});
  ASSERT_EQ(d.warnings.size(), 1u);
  EXPECT_NE(d.warnings[0].find("'b'"), std::string::npos);
}

TEST(Design, FedermeierParameterCount) {
  auto recipe = corpus::builtin_recipe("federmeier2007");
  std::mt19937_64 rng(1);
  std::normal_distribution<double> z;
  lmm::ModelFrame f;
  for (int s = 0; s < 4; ++s)
    for (int i = 0; i < 6; ++i) {
      f.response.push_back(z(rng));
      for (const auto& name : recipe.fixed_effects) f.numeric[name].push_back(z(rng));
      f.factors["subject"].push_back("s" + std::to_string(s));
      f.factors["item"].push_back("i" + std::to_string(i));
    }
  auto d = lmm::build_design(f, corpus::fixed_spec(recipe), corpus::random_terms(recipe));
  // fixed: intercept + 6 predictors = 7
  // subject (1 + baseline + word_pos): 3x3 lower triangle = 6
  // item (1 + baseline): 2x2 lower triangle = 3
  // residual variance = 1
  EXPECT_EQ(d.p(), 7u);
  EXPECT_EQ(d.theta_size(), 9u);
  EXPECT_EQ(lmm::parameter_count(d), 17u);
  EXPECT_EQ(d.q(), 4u * 3u + 6u * 2u);
}

TEST(Aic, Arithmetic) {
  EXPECT_DOUBLE_EQ(lmm::aic(-100.0, 5), 210.0);
  // the k convention cancels in differences
  for (std::size_t k : {3u, 9u, 17u})
    EXPECT_DOUBLE_EQ(lmm::aic(-50.0, k) - lmm::aic(-47.5, k), 2.0 * (-47.5 - -50.0));
}
