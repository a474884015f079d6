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

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptseed/autodiff.hpp"
#include "promptseed/backend.hpp"

namespace promptseed {

struct ForegroundClass {
  std::string name;
  std::vector<std::string> synonyms;
};

/// Foreground classes F (indices 0..|F|-1) followed by background classes B
/// (indices |F|..|F|+|B|-1).
class ClassRegistry {
 public:
  ClassRegistry(std::vector<ForegroundClass> foreground, std::vector<std::string> background);

  static ClassRegistry from_json(const nlohmann::json& doc);
  static ClassRegistry load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  int num_foreground() const { return static_cast<int>(foreground_.size()); }
  int num_background() const { return static_cast<int>(background_.size()); }
  int size() const { return num_foreground() + num_background(); }
  bool is_background(int id) const { return id >= num_foreground(); }

  const std::string& name(int id) const;
  /// Name followed by synonyms; background classes have just their name.
  std::vector<std::string> phrases(int id) const;
  std::vector<int> foreground_ids() const;
  std::vector<int> background_ids() const;
  const std::vector<ForegroundClass>& foreground() const { return foreground_; }
  const std::vector<std::string>& background() const { return background_; }

 private:
  std::vector<ForegroundClass> foreground_;
  std::vector<std::string> background_;
};

enum class ContextStrategy { unified, class_specific };
/// Where the class label sits relative to the learnable context.
enum class Placement { prepend, append };

struct PromptContext {
  ContextStrategy strategy = ContextStrategy::unified;
  Placement placement = Placement::append;
  bool background_has_label = false;
  /// One N x d matrix for the unified strategy, otherwise one per registry
  /// class.
  std::vector<Eigen::MatrixXd> groups;

  int length() const { return groups.empty() ? 0 : static_cast<int>(groups.front().rows()); }
  int width() const { return groups.empty() ? 0 : static_cast<int>(groups.front().cols()); }
  /// Context group used by a registry class.
  int group_for(int class_id) const { return strategy == ContextStrategy::unified ? 0 : class_id; }
};

/// Gaussian(0, 0.02^2) context vectors. `num_classes` sizes the class-specific
/// strategy; `encoder_width` must equal `width`.
PromptContext init_context(ContextStrategy strategy, int length, int width, std::uint64_t seed,
                           int num_classes, int encoder_width, Placement placement = Placement::append);

/// A prompt slot is either a learnable context vector or a fixed word token.
struct PromptSlot {
  int context_group = -1;
  int context_index = -1;
  int token = -1;

  bool is_context() const { return context_group >= 0; }
};

struct Prompt {
  int class_id = -1;
  std::vector<PromptSlot> slots;
  std::size_t length() const { return slots.size(); }
};

/// Every prompt for every class of F ∪ B (one per phrase, so synonyms add
/// prompts), grouped by class in registry order.
struct PromptSet {
  std::vector<Prompt> prompts;
  /// prompts for class c are [class_offsets[c], class_offsets[c+1]).
  std::vector<int> class_offsets;

  int num_classes() const { return static_cast<int>(class_offsets.size()) - 1; }
};

/// [V]_1..[V]_N[CLS] over a shared context.
PromptSet build_classification_prompts(const ClassRegistry& registry, const PromptContext& ctx,
                                       const Tokenizer& tokenizer);
/// [CLS][V]^c_1..[V]^c_N for foreground classes (context before the label
/// when the placement is append) and [V]^b_1..[V]^b_N for background classes.
PromptSet build_segmentation_prompts(const ClassRegistry& registry, const PromptContext& ctx,
                                     const Tokenizer& tokenizer);

/// Materializes prompt rows (length x width) on a tape. `groups` holds one
/// tape variable per context group.
ad::Var prompt_rows(ad::Tape& tape, const Prompt& prompt, const std::vector<ad::Var>& groups,
                    const ToyEncoder& encoder);
Eigen::MatrixXd prompt_rows(const Prompt& prompt, const PromptContext& ctx, const ToyEncoder& encoder);

enum class SynonymPooling { max, mean };

/// Text embeddings of every prompt in a set, recorded on one tape.
struct EncodedPrompts {
  std::vector<ad::Var> embeddings;  // 1 x d each, parallel to PromptSet::prompts
};

EncodedPrompts encode_prompts(ad::Tape& tape, const PromptSet& set, const std::vector<ad::Var>& groups,
                              const ToyEncoder& encoder);

/// One effective embedding row per requested class: the synonym whose logit
/// against `image_embedding` is largest (max pooling) or the synonym average
/// (mean pooling, renormalized to unit length). Rows follow `classes`.
ad::Var pooled_class_embeddings(const PromptSet& set, const EncodedPrompts& encoded,
                                const std::vector<int>& classes, const Eigen::VectorXd& image_embedding,
                                SynonymPooling pooling);

/// Value-only embeddings of every prompt, as rows.
Eigen::MatrixXd encode_prompt_values(const PromptSet& set, const PromptContext& ctx, const ToyEncoder& encoder);

}  // namespace promptseed
