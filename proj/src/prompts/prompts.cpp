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

#include "promptseed/prompts.hpp"

#include <fstream>
#include <random>
#include <set>

#include "promptseed/errors.hpp"

namespace promptseed {

ClassRegistry::ClassRegistry(std::vector<ForegroundClass> foreground, std::vector<std::string> background)
    : foreground_(std::move(foreground)), background_(std::move(background)) {
  if (foreground_.empty()) throw DomainError("class registry needs at least one foreground class");
  std::set<std::string> seen;
  for (const auto& f : foreground_) {
    if (f.name.empty()) throw DomainError("class registry: empty foreground name");
    if (!seen.insert(f.name).second) throw DomainError("class registry: duplicate name '" + f.name + "'");
  }
  for (const auto& b : background_) {
    if (b.empty()) throw DomainError("class registry: empty background name");
    if (!seen.insert(b).second) {
      throw DomainError("class registry: '" + b + "' is listed twice or in both foreground and background");
    }
  }
  if (foreground_.size() + background_.size() > 255) {
    throw DomainError("class registry: at most 255 classes fit an 8-bit seed map");
  }
}

ClassRegistry ClassRegistry::from_json(const nlohmann::json& doc) {
  if (!doc.is_object() || !doc.contains("foreground")) {
    throw MissingError("class registry: missing 'foreground'");
  }
  std::vector<ForegroundClass> fg;
  for (const auto& item : doc.at("foreground")) {
    ForegroundClass f;
    if (item.is_string()) {
      f.name = item.get<std::string>();
    } else {
      f.name = item.at("name").get<std::string>();
      if (item.contains("synonyms")) f.synonyms = item.at("synonyms").get<std::vector<std::string>>();
    }
    fg.push_back(std::move(f));
  }
  std::vector<std::string> bg;
  if (doc.contains("background")) bg = doc.at("background").get<std::vector<std::string>>();
  return ClassRegistry(std::move(fg), std::move(bg));
}

ClassRegistry ClassRegistry::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open registry file " + path.string());
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw Error("registry file " + path.string() + ": " + e.what());
  }
}

nlohmann::json ClassRegistry::to_json() const {
  nlohmann::json fg = nlohmann::json::array();
  for (const auto& f : foreground_) fg.push_back({{"name", f.name}, {"synonyms", f.synonyms}});
  return {{"foreground", fg}, {"background", background_}};
}

const std::string& ClassRegistry::name(int id) const {
  if (id < 0 || id >= size()) throw DomainError("class id " + std::to_string(id) + " out of range");
  return id < num_foreground() ? foreground_[static_cast<std::size_t>(id)].name
                               : background_[static_cast<std::size_t>(id - num_foreground())];
}

std::vector<std::string> ClassRegistry::phrases(int id) const {
  std::vector<std::string> out{name(id)};
  if (id < num_foreground()) {
    const auto& syn = foreground_[static_cast<std::size_t>(id)].synonyms;
    out.insert(out.end(), syn.begin(), syn.end());
  }
  return out;
}

std::vector<int> ClassRegistry::foreground_ids() const {
  std::vector<int> ids;
  for (int i = 0; i < num_foreground(); ++i) ids.push_back(i);
  return ids;
}

std::vector<int> ClassRegistry::background_ids() const {
  std::vector<int> ids;
  for (int i = num_foreground(); i < size(); ++i) ids.push_back(i);
  return ids;
}

PromptContext init_context(ContextStrategy strategy, int length, int width, std::uint64_t seed,
                           int num_classes, int encoder_width, Placement placement) {
  if (length < 1) throw DomainError("init_context: context length must be at least 1");
  if (width != encoder_width) {
    throw DimensionError("init_context: context width " + std::to_string(width) +
                         " differs from encoder width " + std::to_string(encoder_width));
  }
  if (strategy == ContextStrategy::class_specific && num_classes < 1) {
    throw DomainError("init_context: class-specific contexts need at least one class");
  }
  PromptContext ctx;
  ctx.strategy = strategy;
  ctx.placement = placement;
  const int groups = strategy == ContextStrategy::unified ? 1 : num_classes;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 0.02);
  for (int g = 0; g < groups; ++g) {
    Eigen::MatrixXd m(length, width);
    for (int i = 0; i < length; ++i)
      for (int j = 0; j < width; ++j) m(i, j) = dist(rng);
    ctx.groups.push_back(std::move(m));
  }
  return ctx;
}

namespace {

void append_context(std::vector<PromptSlot>& slots, int group, int length) {
  for (int n = 0; n < length; ++n) slots.push_back({group, n, -1});
}

void append_tokens(std::vector<PromptSlot>& slots, const std::vector<int>& ids) {
  for (int id : ids) slots.push_back({-1, -1, id});
}

}  // namespace

PromptSet build_classification_prompts(const ClassRegistry& registry, const PromptContext& ctx,
                                       const Tokenizer& tokenizer) {
  if (ctx.strategy != ContextStrategy::unified) {
    throw StrategyError("classification prompts require a unified context");
  }
  PromptSet set;
  for (int c = 0; c < registry.size(); ++c) {
    set.class_offsets.push_back(static_cast<int>(set.prompts.size()));
    for (const auto& phrase : registry.phrases(c)) {
      Prompt p;
      p.class_id = c;
      const auto ids = tokenizer.encode(phrase);
      if (ctx.placement == Placement::prepend) append_tokens(p.slots, ids);
      append_context(p.slots, 0, ctx.length());
      if (ctx.placement == Placement::append) append_tokens(p.slots, ids);
      set.prompts.push_back(std::move(p));
    }
  }
  set.class_offsets.push_back(static_cast<int>(set.prompts.size()));
  return set;
}

PromptSet build_segmentation_prompts(const ClassRegistry& registry, const PromptContext& ctx,
                                     const Tokenizer& tokenizer) {
  if (ctx.strategy != ContextStrategy::class_specific) {
    throw StrategyError("segmentation prompts require class-specific contexts");
  }
  if (static_cast<int>(ctx.groups.size()) != registry.size()) {
    throw DimensionError("segmentation prompts: one context group per class required");
  }
  PromptSet set;
  for (int c = 0; c < registry.size(); ++c) {
    set.class_offsets.push_back(static_cast<int>(set.prompts.size()));
    const bool labeled = !registry.is_background(c) || ctx.background_has_label;
    for (const auto& phrase : registry.phrases(c)) {
      Prompt p;
      p.class_id = c;
      const auto ids = labeled ? tokenizer.encode(phrase) : std::vector<int>{};
      if (ctx.placement == Placement::prepend) append_tokens(p.slots, ids);
      append_context(p.slots, c, ctx.length());
      if (ctx.placement == Placement::append) append_tokens(p.slots, ids);
      set.prompts.push_back(std::move(p));
    }
  }
  set.class_offsets.push_back(static_cast<int>(set.prompts.size()));
  return set;
}

ad::Var prompt_rows(ad::Tape& tape, const Prompt& prompt, const std::vector<ad::Var>& groups,
                    const ToyEncoder& encoder) {
  std::vector<ad::Var> parts;
  std::vector<int> pending_tokens;
  auto flush = [&] {
    if (pending_tokens.empty()) return;
    parts.push_back(tape.constant(encoder.token_embeddings(pending_tokens)));
    pending_tokens.clear();
  };
  for (std::size_t i = 0; i < prompt.slots.size();) {
    const PromptSlot& s = prompt.slots[i];
    if (!s.is_context()) {
      pending_tokens.push_back(s.token);
      ++i;
      continue;
    }
    flush();
    if (s.context_group >= static_cast<int>(groups.size())) {
      throw DimensionError("prompt references a missing context group");
    }
    // Consecutive context slots of one group become a single row slice.
    std::size_t j = i;
    while (j < prompt.slots.size() && prompt.slots[j].context_group == s.context_group &&
           prompt.slots[j].context_index == s.context_index + static_cast<int>(j - i)) {
      ++j;
    }
    parts.push_back(ad::slice_rows(groups[static_cast<std::size_t>(s.context_group)], s.context_index,
                                   static_cast<Eigen::Index>(j - i)));
    i = j;
  }
  flush();
  if (parts.empty()) throw DimensionError("prompt has no slots");
  return parts.size() == 1 ? parts.front() : ad::concat_rows(parts);
}

Eigen::MatrixXd prompt_rows(const Prompt& prompt, const PromptContext& ctx, const ToyEncoder& encoder) {
  ad::Tape tape;
  std::vector<ad::Var> groups;
  for (const auto& g : ctx.groups) groups.push_back(tape.constant(g));
  return prompt_rows(tape, prompt, groups, encoder).value();
}

EncodedPrompts encode_prompts(ad::Tape& tape, const PromptSet& set, const std::vector<ad::Var>& groups,
                              const ToyEncoder& encoder) {
  EncodedPrompts out;
  for (const auto& p : set.prompts) {
    out.embeddings.push_back(encoder.encode_prompt(tape, prompt_rows(tape, p, groups, encoder)));
  }
  return out;
}

ad::Var pooled_class_embeddings(const PromptSet& set, const EncodedPrompts& encoded,
                                const std::vector<int>& classes, const Eigen::VectorXd& image_embedding,
                                SynonymPooling pooling) {
  std::vector<ad::Var> rows;
  for (int c : classes) {
    if (c < 0 || c >= set.num_classes()) throw MissingError("no prompts for class " + std::to_string(c));
    const int begin = set.class_offsets[static_cast<std::size_t>(c)];
    const int end = set.class_offsets[static_cast<std::size_t>(c) + 1];
    if (end - begin == 1) {
      rows.push_back(encoded.embeddings[static_cast<std::size_t>(begin)]);
      continue;
    }
    if (pooling == SynonymPooling::max) {
      int best = begin;
      double best_logit = -std::numeric_limits<double>::infinity();
      for (int k = begin; k < end; ++k) {
        const double logit = encoded.embeddings[static_cast<std::size_t>(k)].value().row(0).dot(
            image_embedding.transpose());
        if (logit > best_logit) {
          best_logit = logit;
          best = k;
        }
      }
      rows.push_back(encoded.embeddings[static_cast<std::size_t>(best)]);
    } else {
      ad::Var acc = encoded.embeddings[static_cast<std::size_t>(begin)];
      for (int k = begin + 1; k < end; ++k) acc = ad::add(acc, encoded.embeddings[static_cast<std::size_t>(k)]);
      rows.push_back(ad::l2_normalize(ad::scale(acc, 1.0 / (end - begin))));
    }
  }
  if (rows.empty()) throw DimensionError("pooled_class_embeddings: no classes requested");
  return ad::concat_rows(rows);
}

Eigen::MatrixXd encode_prompt_values(const PromptSet& set, const PromptContext& ctx, const ToyEncoder& encoder) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(set.prompts.size()), encoder.config().embed_dim);
  for (std::size_t i = 0; i < set.prompts.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) =
        encoder.encode_prompt(prompt_rows(set.prompts[i], ctx, encoder)).vector.transpose();
  }
  return out;
}

}  // namespace promptseed
