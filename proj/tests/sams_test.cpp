// Copyright 2026 The promptseed Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "promptseed/errors.hpp"
#include "promptseed/oracle.hpp"
#include "promptseed/sams.hpp"
#include "promptseed/synth.hpp"
#include "support.hpp"

namespace promptseed {
namespace {

using testing::brute_force_seeds;
using testing::random_mask_set;
using testing::random_matrix;

BinaryMask rect(int h, int w, int y0, int x0, int y1, int x1) {
  BinaryMask m(h, w);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) m.at(y, x) = 1;
  return m;
}

CamStack stack_of(int h, int w, std::vector<int> ids, std::vector<Eigen::MatrixXd> maps) {
  CamStack s;
  s.height = h;
  s.width = w;
  s.class_ids = std::move(ids);
  s.maps = std::move(maps);
  s.refined = true;
  return s;
}

TEST(MaskEntryTest, ValidatesAreaAndConfidence) {
  const MaskEntry e = MaskEntry::make(rect(4, 4, 0, 0, 2, 3), MaskLevel::part, 0.9);
  EXPECT_EQ(e.area, 6u);
  EXPECT_THROW(MaskEntry::make(BinaryMask(4, 4), MaskLevel::whole, 0.9), DomainError);
  EXPECT_THROW(MaskEntry::make(rect(4, 4, 0, 0, 1, 1), MaskLevel::whole, 1.5), DomainError);
  EXPECT_EQ(parse_mask_level("subpart"), MaskLevel::subpart);
  EXPECT_EQ(to_string(MaskLevel::whole), "whole");
  EXPECT_THROW(parse_mask_level("object"), DomainError);
}

TEST(QuasiSuperpixelTest, ConfidenceGatesPerLevel) {
  const int n = 8;
  std::vector<MaskEntry> masks{
      MaskEntry::make(rect(n, n, 0, 0, 2, 2), MaskLevel::whole, 0.69),
      MaskEntry::make(rect(n, n, 0, 4, 2, 6), MaskLevel::whole, 0.70),
      MaskEntry::make(rect(n, n, 4, 0, 6, 2), MaskLevel::part, 0.87),
      MaskEntry::make(rect(n, n, 4, 4, 6, 6), MaskLevel::subpart, 0.88),
  };
  const auto qsp = generate_quasi_superpixels(masks, n, n);
  EXPECT_EQ(qsp.source_indices, (std::vector<std::size_t>{1, 3}));
  EXPECT_EQ(generate_quasi_superpixels({}, n, n).size(), 0u);
}

TEST(QuasiSuperpixelTest, ContainedPartIsRejected) {
  const int n = 10;
  std::vector<MaskEntry> masks{
      MaskEntry::make(rect(n, n, 2, 2, 5, 5), MaskLevel::part, 0.99),
      MaskEntry::make(rect(n, n, 0, 0, 8, 8), MaskLevel::whole, 0.8),
  };
  const auto qsp = generate_quasi_superpixels(masks, n, n);
  EXPECT_EQ(qsp.source_indices, std::vector<std::size_t>{1});
}

TEST(QuasiSuperpixelTest, WholeMaskSurvivesOverlappingConfidentPart) {
  const int n = 10;
  std::vector<MaskEntry> masks{
      MaskEntry::make(rect(n, n, 0, 0, 10, 9), MaskLevel::part, 1.0),
      MaskEntry::make(rect(n, n, 0, 0, 10, 10), MaskLevel::whole, 0.71),
  };
  const auto qsp = generate_quasi_superpixels(masks, n, n);
  ASSERT_EQ(qsp.size(), 1u);
  EXPECT_EQ(qsp.entries[0].level, MaskLevel::whole);
}

TEST(QuasiSuperpixelTest, PartialOverlapBelowRatioIsAdmitted) {
  const int n = 10;
  std::vector<MaskEntry> masks{
      MaskEntry::make(rect(n, n, 0, 0, 10, 5), MaskLevel::whole, 0.9),
      MaskEntry::make(rect(n, n, 0, 4, 10, 9), MaskLevel::part, 0.95),  // 20% inside
      MaskEntry::make(rect(n, n, 0, 3, 10, 8), MaskLevel::subpart, 0.95),  // 40% inside
  };
  const auto qsp = generate_quasi_superpixels(masks, n, n);
  EXPECT_EQ(qsp.source_indices, (std::vector<std::size_t>{0, 1}));
  EXPECT_THROW(generate_quasi_superpixels(masks, n, n + 1), DimensionError);
}

TEST(QuasiSuperpixelTest, MatchesBruteForceAndKeepsInvariants) {
  std::mt19937_64 rng(21);
  const QuasiSuperpixelConfig cfg;
  for (int trial = 0; trial < 100; ++trial) {
    const int h = std::uniform_int_distribution<int>(4, 24)(rng);
    const int w = std::uniform_int_distribution<int>(4, 24)(rng);
    const auto masks = random_mask_set(h, w, 8, rng);
    const auto qsp = generate_quasi_superpixels(masks, h, w, cfg);
    const auto ref = brute_force_seeds(masks, h, w, {}, {}, cfg, 0.6);
    EXPECT_EQ(qsp.source_indices, ref.admitted);

    // Replay the admission rule.
    BinaryMask seen(h, w);
    for (const auto& e : qsp.entries) {
      const double ratio = static_cast<double>(intersection_area(e.mask, seen)) / e.area;
      EXPECT_LT(ratio, cfg.t_r);
      for (std::size_t p = 0; p < seen.bits.size(); ++p) seen.bits[p] |= e.mask.bits[p];
    }
    // A gated whole mask only ever loses to another whole mask.
    std::set<std::size_t> admitted(qsp.source_indices.begin(), qsp.source_indices.end());
    for (std::size_t i = 0; i < masks.size(); ++i) {
      if (masks[i].level != MaskLevel::whole || masks[i].confidence < cfg.t_m_whole || admitted.count(i)) continue;
      bool explained = false;
      BinaryMask wholes(h, w);
      for (std::size_t j : qsp.source_indices)
        if (masks[j].level == MaskLevel::whole)
          for (std::size_t p = 0; p < wholes.bits.size(); ++p) wholes.bits[p] |= masks[j].mask.bits[p];
      explained = static_cast<double>(intersection_area(masks[i].mask, wholes)) / masks[i].area >= cfg.t_r;
      for (std::size_t j = 0; j < masks.size() && !explained; ++j) {
        explained = j != i && masks[j].level == MaskLevel::whole && masks[j].confidence >= cfg.t_m_whole &&
                    iou(masks[i].mask, masks[j].mask) >= cfg.nms_iou;
      }
      EXPECT_TRUE(explained) << "trial " << trial << " whole mask " << i;
    }
  }
}

QuasiSuperpixelSet three_strips() {
  const int n = 6;
  std::vector<MaskEntry> masks{
      MaskEntry::make(rect(n, n, 0, 0, 6, 2), MaskLevel::whole, 1.0),
      MaskEntry::make(rect(n, n, 0, 2, 6, 4), MaskLevel::whole, 1.0),
      MaskEntry::make(rect(n, n, 0, 4, 6, 6), MaskLevel::whole, 1.0),
  };
  return generate_quasi_superpixels(masks, n, n);
}

Eigen::MatrixXd strip_map(double a, double b, double c) {
  Eigen::MatrixXd m(6, 6);
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 6; ++x) m(y, x) = x < 2 ? a : (x < 4 ? b : c);
  return m;
}

TEST(ClassifySuperpixelsTest, BackgroundPowerScore) {
  const auto qsp = three_strips();
  // Normalized scores: 1, 0.5, 0.
  const auto lab = classify_superpixels(qsp, stack_of(6, 6, {4}, {strip_map(3.0, 2.0, 1.0)}), 0.6);
  EXPECT_EQ(lab.labels, (std::vector<int>{4, kBackgroundLabel, kBackgroundLabel}));
  EXPECT_DOUBLE_EQ(lab.bg_scores(0), 0.0);
  EXPECT_NEAR(lab.bg_scores(1), 0.6598, 1e-4);
  EXPECT_NEAR(lab.bg_scores(1), std::pow(0.5, 0.6), 1e-15);
  EXPECT_DOUBLE_EQ(lab.bg_scores(2), 1.0);
  EXPECT_DOUBLE_EQ(lab.fg_scores(0, 1), 0.5);
  EXPECT_THROW(classify_superpixels(qsp, stack_of(6, 6, {4}, {strip_map(1, 2, 3)}), 0.0), DomainError);
}

TEST(ClassifySuperpixelsTest, TiesGoToBackgroundThenLowestClass) {
  const auto qsp = three_strips();
  // With alpha = 1 a score of 0.5 ties the background score exactly.
  const auto tie_bg = classify_superpixels(qsp, stack_of(6, 6, {0}, {strip_map(1.0, 0.5, 0.0)}), 1.0);
  EXPECT_EQ(tie_bg.labels[1], kBackgroundLabel);
  const auto tie_cls = classify_superpixels(
      qsp, stack_of(6, 6, {5, 2}, {strip_map(1.0, 0.0, 0.0), strip_map(1.0, 0.0, 0.0)}), 0.6);
  EXPECT_EQ(tie_cls.labels[0], 2);
  EXPECT_EQ(tie_cls.classes, (std::vector<int>{2, 5}));
}

TEST(ClassifySuperpixelsTest, EmptyInputs) {
  const auto qsp = three_strips();
  const auto none = classify_superpixels(qsp, stack_of(6, 6, {}, {}), 0.6);
  EXPECT_EQ(none.labels, (std::vector<int>(3, kBackgroundLabel)));
  const auto empty = classify_superpixels(generate_quasi_superpixels({}, 6, 6),
                                          stack_of(6, 6, {0}, {strip_map(1, 2, 3)}), 0.6);
  EXPECT_TRUE(empty.labels.empty());
  EXPECT_EQ(seed_from_cams(generate_quasi_superpixels({}, 6, 6), stack_of(6, 6, {0}, {strip_map(1, 2, 3)}), 0.6),
            SeedMap(6, 6));
}

TEST(ClassifySuperpixelsTest, BackgroundScoreFallsAsForegroundRises) {
  const auto qsp = three_strips();
  double previous = 2.0;
  for (double s = 0.0; s <= 1.0; s += 0.05) {
    const auto lab = classify_superpixels(qsp, stack_of(6, 6, {0}, {strip_map(1.0, s, 0.0)}), 0.6);
    EXPECT_LT(lab.bg_scores(1), previous);
    previous = lab.bg_scores(1);
  }
}

TEST(SeedMapTest, LevelThenScoreResolvesOverlaps) {
  const int n = 6;
  QuasiSuperpixelSet qsp;
  qsp.height = qsp.width = n;
  qsp.entries = {
      MaskEntry::make(rect(n, n, 0, 0, 4, 4), MaskLevel::part, 1.0),
      MaskEntry::make(rect(n, n, 2, 2, 6, 6), MaskLevel::part, 1.0),
      MaskEntry::make(rect(n, n, 0, 3, 2, 6), MaskLevel::whole, 1.0),
  };
  LabeledSuperpixels lab;
  lab.labels = {0, 1, 2};
  lab.label_scores = Eigen::Vector3d(0.4, 0.9, 0.1);
  const SeedMap seed = generate_seed_map(qsp, lab);
  EXPECT_EQ(seed.at(0, 0), 1);
  EXPECT_EQ(seed.at(3, 3), 2);  // same level, 0.9 beats 0.4
  EXPECT_EQ(seed.at(1, 3), 3);  // whole beats part
  EXPECT_EQ(seed.at(5, 0), 0);  // uncovered
  lab.labels.pop_back();
  EXPECT_THROW(generate_seed_map(qsp, lab), DimensionError);
}

TEST(SeedMapTest, FullPipelineMatchesBruteForce) {
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 100; ++trial) {
    const int h = std::uniform_int_distribution<int>(4, 20)(rng);
    const int w = std::uniform_int_distribution<int>(4, 20)(rng);
    const auto masks = random_mask_set(h, w, 10, rng);
    const int np = std::uniform_int_distribution<int>(0, 3)(rng);
    std::vector<int> ids;
    std::vector<Eigen::MatrixXd> maps;
    for (int c = 0; c < np; ++c) {
      ids.push_back(3 * c + static_cast<int>(rng() % 3));
      // Coarse quantization makes score ties common.
      maps.push_back((random_matrix(h, w, rng, 0.0, 4.0).array().floor() / 4.0).matrix());
    }
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    maps.resize(ids.size());
    const double alpha = trial % 2 ? 0.6 : 1.0;
    const auto qsp = generate_quasi_superpixels(masks, h, w);
    const SeedMap seed = seed_from_cams(qsp, stack_of(h, w, ids, maps), alpha);
    const auto ref = brute_force_seeds(masks, h, w, ids, maps, {}, alpha);
    EXPECT_EQ(seed, ref.seed) << "trial " << trial;
    for (auto v : seed.labels) {
      EXPECT_TRUE(v == 0 || std::find(ids.begin(), ids.end(), v - 1) != ids.end());
    }
  }
}

ScoreMaps score_maps(int h, int w, std::vector<int> ids, std::vector<Eigen::MatrixXd> ch) {
  ScoreMaps s;
  s.height = h;
  s.width = w;
  s.class_ids = std::move(ids);
  s.channels = std::move(ch);
  return s;
}

TEST(RefineScoreMapTest, OneHotScoresReproduceArgmax) {
  const int n = 6;
  std::vector<MaskEntry> masks{
      MaskEntry::make(rect(n, n, 0, 0, 6, 2), MaskLevel::whole, 1.0),
      MaskEntry::make(rect(n, n, 0, 2, 6, 4), MaskLevel::whole, 1.0),
      MaskEntry::make(rect(n, n, 0, 4, 6, 6), MaskLevel::whole, 1.0),
  };
  const auto s = score_maps(n, n, {kBackgroundLabel, 0, 1},
                            {strip_map(1, 0, 0), strip_map(0, 1, 0), strip_map(0, 0, 1)});
  const SeedMap refined = refine_score_map(s, masks, 0.6);
  EXPECT_EQ(refined, argmax_seed(s));
  EXPECT_EQ(refined.at(0, 0), 0);
  EXPECT_EQ(refined.at(0, 2), 1);
  EXPECT_EQ(refined.at(0, 5), 2);
}

TEST(RefineScoreMapTest, UniformScoresGiveBackground) {
  const int n = 6;
  std::vector<MaskEntry> masks{MaskEntry::make(rect(n, n, 0, 0, 6, 3), MaskLevel::whole, 1.0),
                               MaskEntry::make(rect(n, n, 0, 3, 6, 6), MaskLevel::whole, 1.0)};
  const auto s = score_maps(n, n, {0, 1}, {Eigen::MatrixXd::Constant(n, n, 0.7), Eigen::MatrixXd::Constant(n, n, 0.7)});
  EXPECT_EQ(refine_score_map(s, masks, 0.6), SeedMap(n, n));
}

TEST(RefineScoreMapTest, RejectsBadScores) {
  const int n = 4;
  std::vector<MaskEntry> masks{MaskEntry::make(rect(n, n, 0, 0, 4, 4), MaskLevel::whole, 1.0)};
  EXPECT_THROW(refine_score_map(score_maps(n, n, {0}, {Eigen::MatrixXd::Zero(3, 4)}), masks, 0.6), DimensionError);
  Eigen::MatrixXd bad = Eigen::MatrixXd::Zero(n, n);
  bad(0, 0) = std::nan("");
  EXPECT_THROW(refine_score_map(score_maps(n, n, {0}, {bad}), masks, 0.6), DomainError);
  EXPECT_THROW(refine_score_map(score_maps(n, n, {0, 1}, {bad}), masks, 0.6), DimensionError);
}

TEST(RefineScoreMapTest, NoiselessOracleRecoversSyntheticGroundTruth) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SceneOptions opts;
    opts.seed = seed;
    opts.n_objects = 1 + static_cast<int>(seed % 3);
    const SyntheticScene scene = synth_scene(opts);
    const CamStack cams = oracle_cams(scene.ground_truth, scene.present, 0.0, seed);
    std::vector<MaskEntry> wholes;
    for (const auto& m : scene.masks)
      if (m.level == MaskLevel::whole) wholes.push_back(m);
    const auto s = score_maps(scene.ground_truth.height, scene.ground_truth.width, cams.class_ids, cams.maps);
    EXPECT_EQ(refine_score_map(s, wholes, 0.6), scene.ground_truth) << "seed " << seed;
    EXPECT_EQ(refine_score_map(s, scene.masks, 0.6), scene.ground_truth) << "seed " << seed;
  }
}

TEST(RefineScoreMapTest, NoisyScoresRefineAtLeastAsWellAsArgmax) {
  std::vector<SeedMap> refined, raw, gt;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SceneOptions opts;
    opts.seed = 100 + seed;
    opts.n_objects = 2;
    const SyntheticScene scene = synth_scene(opts);
    const CamStack cams = oracle_cams(scene.ground_truth, scene.present, 0.3, seed);
    const auto s = score_maps(scene.ground_truth.height, scene.ground_truth.width, cams.class_ids, cams.maps);
    refined.push_back(refine_score_map(s, scene.masks, 0.6));
    raw.push_back(argmax_seed(s));
    gt.push_back(scene.ground_truth);
  }
  const double r = testing::pixel_count_iou(refined, gt, 4).mean;
  const double a = testing::pixel_count_iou(raw, gt, 4).mean;
  EXPECT_GE(r, a);
}

TEST(ArgmaxSeedTest, ThresholdAndBackgroundChannel) {
  Eigen::MatrixXd a(1, 3), b(1, 3), bg(1, 3);
  a << 0.9, 0.4, 0.6;
  b << 0.2, 0.45, 0.6;
  bg << 0.5, 0.5, 0.7;
  const SeedMap thr = argmax_seed(score_maps(1, 3, {0, 1}, {a, b}), 0.5);
  EXPECT_EQ(thr.labels, (std::vector<std::uint8_t>{1, 0, 1}));
  const SeedMap with_bg = argmax_seed(score_maps(1, 3, {0, kBackgroundLabel, 1}, {a, bg, b}));
  EXPECT_EQ(with_bg.labels, (std::vector<std::uint8_t>{1, 0, 0}));
}

}  // namespace
}  // namespace promptseed
