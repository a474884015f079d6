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
#include <numbers>
#include <random>

#include "promptseed/backend.hpp"
#include "promptseed/errors.hpp"
#include "promptseed/oracle.hpp"
#include "promptseed/synth.hpp"
#include "support.hpp"

namespace promptseed {
namespace {

using testing::central_gradient;
using testing::random_matrix;
using testing::random_unit;
using testing::relative_error;

const ToyEncoder& encoder() {
  static const ToyEncoder enc;
  return enc;
}

Image scene_image(std::uint64_t seed) {
  SceneOptions opts;
  opts.seed = seed;
  return synth_scene(opts).image;
}

TEST(ToyEncoderTest, PatchGridAndAttentionShape) {
  const EncoderOutputs out = encoder().encode_image(scene_image(1), GradMode::none);
  EXPECT_EQ(out.grid_h, 8);
  EXPECT_EQ(out.grid_w, 8);
  EXPECT_EQ(out.feature_map.rows(), 32);
  EXPECT_EQ(out.feature_map.cols(), 64);
  EXPECT_EQ(out.attention.rows(), 64);
  EXPECT_EQ(out.attention.cols(), 64);
  EXPECT_EQ(out.image_embedding.size(), 32);
}

TEST(ToyEncoderTest, RejectsUntileableRaster) {
  EXPECT_THROW(encoder().encode_image(Image(120, 128, 3), GradMode::none), DimensionError);
  EXPECT_THROW(encoder().encode_image(Image(128, 128, 1), GradMode::none), DimensionError);
}

TEST(ToyEncoderTest, OutputsAreDeterministic) {
  const Image img = scene_image(2);
  const EncoderOutputs a = encoder().encode_image(img, GradMode::first_order);
  const EncoderOutputs b = encoder().encode_image(img, GradMode::first_order);
  EXPECT_EQ(a.feature_map, b.feature_map);
  EXPECT_EQ(a.attention, b.attention);
  EXPECT_EQ(a.image_embedding, b.image_embedding);
  EXPECT_EQ(a.embedding_jacobian, b.embedding_jacobian);
  EXPECT_EQ(ToyEncoder().weight_digest(), encoder().weight_digest());
}

TEST(ToyEncoderTest, AttentionRowsAreStochasticAndEmbeddingIsUnit) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const EncoderOutputs out = encoder().encode_image(scene_image(seed), GradMode::none);
    EXPECT_GE(out.attention.minCoeff(), 0.0);
    for (Eigen::Index r = 0; r < out.attention.rows(); ++r) EXPECT_NEAR(out.attention.row(r).sum(), 1.0, 1e-5);
    EXPECT_NEAR(out.image_embedding.norm(), 1.0, 1e-6);
  }
}

TEST(ToyEncoderTest, FeatureMapTangentMatchesPixelDifferences) {
  const Image img = scene_image(3);
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 3; ++trial) {
    Image dir(img.height, img.width, img.channels);
    const int y = std::uniform_int_distribution<int>(0, img.height - 1)(rng);
    const int x = std::uniform_int_distribution<int>(0, img.width - 1)(rng);
    const int c = std::uniform_int_distribution<int>(0, img.channels - 1)(rng);
    dir.at(y, x, c) = 1.0;
    const double h = 1e-4;
    Image up = img, down = img;
    up.at(y, x, c) += h;
    down.at(y, x, c) -= h;
    const Eigen::MatrixXd fd = (encoder().encode_image(up, GradMode::none).feature_map -
                                encoder().encode_image(down, GradMode::none).feature_map) /
                               (2.0 * h);
    EXPECT_LT(relative_error(encoder().feature_map_jvp(img, dir), fd), 1e-4);
  }
}

TEST(ToyEncoderTest, FeatureGradientOfEmbeddingScalarsMatchesDifferences) {
  std::mt19937_64 rng(6);
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const EncoderOutputs out = encoder().encode_image(scene_image(10 + seed), GradMode::first_order);
    const Eigen::VectorXd direction = random_unit(32, rng);
    const Eigen::MatrixXd analytic = out.feature_vjp(direction);
    const Eigen::MatrixXd numeric = central_gradient(
        [&](const Eigen::MatrixXd& f) { return direction.dot(encoder().embedding_from_features(f)); },
        out.feature_map, 1e-6);
    EXPECT_LT(relative_error(analytic, numeric), 1e-4);
  }
}

TEST(ToyEncoderTest, NoGradientPathWithoutTape) {
  const EncoderOutputs out = encoder().encode_image(scene_image(1), GradMode::none);
  EXPECT_FALSE(out.has_gradient_path());
  EXPECT_THROW(out.feature_vjp(Eigen::VectorXd::Ones(32)), GradientPathError);
  EXPECT_THROW(out.pooled_jacobian(), GradientPathError);
}

TEST(ToyEncoderTest, PromptEmbeddingsAreUnitAndDeterministic) {
  std::mt19937_64 rng(7);
  const Eigen::MatrixXd rows = random_matrix(10, 32, rng, -0.05, 0.05);
  const TextEmbedding a = encoder().encode_prompt(rows, 3);
  const TextEmbedding b = encoder().encode_prompt(rows, 3);
  EXPECT_EQ(a.vector, b.vector);
  EXPECT_EQ(a.class_id, 3);
  EXPECT_NEAR(a.vector.norm(), 1.0, 1e-6);

  Eigen::MatrixXd changed = rows;
  changed.row(4) += random_matrix(1, 32, rng, -0.05, 0.05);
  EXPECT_GT((encoder().encode_prompt(changed).vector - a.vector).norm(), 1e-9);
}

TEST(ToyEncoderTest, PromptOverflowIsRejected) {
  EXPECT_NO_THROW(encoder().encode_prompt(Eigen::MatrixXd::Zero(31, 32)));
  EXPECT_THROW(encoder().encode_prompt(Eigen::MatrixXd::Zero(32, 32)), OverflowError);
  EXPECT_THROW(encoder().encode_prompt(Eigen::MatrixXd::Zero(4, 16)), DimensionError);
}

TEST(ToyEncoderTest, CosineGradientWithRespectToContextMatchesDifferences) {
  std::mt19937_64 rng(8);
  const Eigen::VectorXd image = encoder().encode_image(scene_image(4), GradMode::none).image_embedding;
  for (int trial = 0; trial < 3; ++trial) {
    const Eigen::MatrixXd rows = random_matrix(12, 32, rng, -0.05, 0.05);
    ad::Tape tape;
    ad::Var leaf = tape.leaf(rows);
    ad::Var emb = encoder().encode_prompt(tape, leaf);
    tape.backward(ad::matmul(emb, tape.constant(image)));
    const Eigen::MatrixXd analytic = tape.grad(leaf);
    const Eigen::MatrixXd numeric = central_gradient(
        [&](const Eigen::MatrixXd& r) { return encoder().encode_prompt(r).vector.dot(image); }, rows, 1e-6);
    EXPECT_LT(relative_error(analytic, numeric), 1e-4);
  }
}

TEST(TokenizerTest, LowercasesAndAvoidsReservedId) {
  const Tokenizer tok(4096);
  const auto a = tok.encode("Red");
  const auto b = tok.encode("red");
  EXPECT_EQ(a, b);
  ASSERT_FALSE(a.empty());
  EXPECT_NE(tok.encode("red"), tok.encode("green"));
  for (int id : tok.encode("a fairly long phrase, extraordinarily")) {
    EXPECT_GT(id, Tokenizer::kEndOfText);
    EXPECT_LT(id, 4096);
  }
  EXPECT_EQ(tok.encode("extraordinarily").size(), 2u);
}

TEST(ComputeLogitTest, Examples) {
  Eigen::VectorXd e0 = Eigen::VectorXd::Zero(4), e1 = Eigen::VectorXd::Zero(4);
  e0(0) = 1.0;
  e1(1) = 1.0;
  EXPECT_DOUBLE_EQ(compute_logit(e0, e0, 0.01), 100.0);
  EXPECT_DOUBLE_EQ(compute_logit(e0, e1, 0.01), 0.0);
  EXPECT_THROW(compute_logit(e0, e0, 0.0), DomainError);
  EXPECT_THROW(compute_logit(e0, e0, -1.0), DomainError);

  std::mt19937_64 rng(9);
  for (int i = 0; i < 20; ++i) {
    const Eigen::VectorXd a = random_unit(32, rng), b = random_unit(32, rng);
    double dot = 0.0;
    for (int k = 0; k < 32; ++k) dot += a(k) * b(k);
    EXPECT_NEAR(compute_logit(a, b, 0.07), dot / 0.07, 1e-10);
  }
}

TEST(BackendKindTest, Parses) {
  EXPECT_EQ(parse_backend_kind("toy"), BackendKind::toy);
  EXPECT_EQ(parse_backend_kind("oracle"), BackendKind::oracle);
  EXPECT_EQ(parse_backend_kind("external"), BackendKind::external);
  EXPECT_THROW(parse_backend_kind("clip"), DomainError);
}

BinaryMask square(int n, int y0, int x0, int side) {
  BinaryMask m(n, n);
  for (int y = y0; y < y0 + side; ++y)
    for (int x = x0; x < x0 + side; ++x) m.at(y, x) = 1;
  return m;
}

TEST(OracleCamsTest, NoiselessIsIndicator) {
  const BinaryMask m = square(16, 3, 4, 6);
  const CamStack cams = oracle_cams({m}, {2}, 0.0, 1);
  ASSERT_EQ(cams.size(), 1u);
  EXPECT_EQ(cams.class_ids, std::vector<int>{2});
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) EXPECT_EQ(cams.maps[0](y, x), m.at(y, x) ? 1.0 : 0.0);
}

TEST(OracleCamsTest, SeededAndBounded) {
  const BinaryMask m = square(16, 2, 2, 8);
  const CamStack a = oracle_cams({m}, {0}, 0.2, 42);
  const CamStack b = oracle_cams({m}, {0}, 0.2, 42);
  const CamStack c = oracle_cams({m}, {0}, 0.2, 43);
  EXPECT_EQ(a.maps[0], b.maps[0]);
  EXPECT_NE(a.maps[0], c.maps[0]);
  EXPECT_GE(a.maps[0].minCoeff(), 0.0);
  EXPECT_LE(a.maps[0].maxCoeff(), 1.0);
}

// E[min(sigma * max(Z, 0), 1)] by midpoint quadrature of the normal density.
double quadrature_deviation(double sigma) {
  const int n = 200000;
  const double hi = 12.0, dz = hi / n;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = (i + 0.5) * dz;
    sum += std::min(sigma * z, 1.0) * std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi) * dz;
  }
  return sum;
}

TEST(OracleCamsTest, MeanAbsoluteDeviationMatchesClippedHalfNormal) {
  for (double sigma : {0.05, 0.2, 0.5, 2.0}) {
    EXPECT_NEAR(oracle_expected_deviation(sigma), quadrature_deviation(sigma), 1e-6);
  }
  // 1000 pixels, half inside the object.
  BinaryMask m(20, 50);
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 50; ++x) m.at(y, x) = 1;
  for (double sigma : {0.1, 0.2, 0.4}) {
    const CamStack cams = oracle_cams({m}, {0}, sigma, 2024);
    double dev = 0.0;
    for (int y = 0; y < 20; ++y)
      for (int x = 0; x < 50; ++x) dev += std::abs(cams.maps[0](y, x) - (m.at(y, x) ? 1.0 : 0.0));
    dev /= 1000.0;
    const double expected = quadrature_deviation(sigma);
    EXPECT_NEAR(dev, expected, 0.1 * expected) << "sigma " << sigma;
  }
}

TEST(OracleCamsTest, RejectsBadInput) {
  EXPECT_THROW(oracle_cams({square(8, 0, 0, 2)}, {0, 1}, 0.0, 1), DimensionError);
  EXPECT_THROW(oracle_cams({square(8, 0, 0, 2)}, {0}, -0.1, 1), DomainError);
  EXPECT_THROW(oracle_cams({square(8, 0, 0, 2), square(9, 0, 0, 2)}, {0, 1}, 0.0, 1), DimensionError);
}

}  // namespace
}  // namespace promptseed
