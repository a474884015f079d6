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

#include "promptseed/config.hpp"

#include <functional>
#include <map>

#include "promptseed/errors.hpp"

namespace promptseed {

namespace {

std::string placement_name(Placement p) { return p == Placement::prepend ? "prepend" : "append"; }

Placement parse_placement(std::string_view name) {
  if (name == "prepend") return Placement::prepend;
  if (name == "append") return Placement::append;
  throw DomainError("unknown placement '" + std::string(name) + "'");
}

std::string pooling_name(SynonymPooling p) { return p == SynonymPooling::max ? "max" : "mean"; }

SynonymPooling parse_pooling(std::string_view name) {
  if (name == "max") return SynonymPooling::max;
  if (name == "mean") return SynonymPooling::mean;
  throw DomainError("unknown synonym pooling '" + std::string(name) + "'");
}

std::string affinity_name(AffinityNormalization n) { return n == AffinityNormalization::row ? "row" : "sinkhorn"; }

AffinityNormalization parse_affinity(std::string_view name) {
  if (name == "row") return AffinityNormalization::row;
  if (name == "sinkhorn") return AffinityNormalization::sinkhorn;
  throw DomainError("unknown affinity normalization '" + std::string(name) + "'");
}

std::string backend_name(BackendKind b) {
  switch (b) {
    case BackendKind::toy: return "toy";
    case BackendKind::oracle: return "oracle";
    case BackendKind::external: return "external";
  }
  return "toy";
}

nlohmann::json scaling_json(const LinearScaling& s) {
  if (s.learnable) return {{"mode", "auto"}, {"a", s.a}, {"b", s.b}};
  if (s.a == 1.0 && s.b == 0.0) return {{"mode", "none"}};
  return {{"mode", "manual"}, {"a", s.a}, {"b", s.b}};
}

LinearScaling parse_scaling(const nlohmann::json& j) {
  const std::string mode = j.value("mode", "none");
  const double a = j.value("a", 1.0);
  const double b = j.value("b", 0.0);
  if (mode == "none") return LinearScaling::none();
  if (mode == "manual") return LinearScaling::manual(a, b);
  if (mode == "auto") return LinearScaling::automatic(a, b);
  throw DomainError("unknown scaling mode '" + mode + "'");
}

nlohmann::json encoder_json(const ToyEncoderConfig& e) {
  return {{"patch", e.patch},
          {"image_channels", e.image_channels},
          {"feature_width", e.feature_width},
          {"text_width", e.text_width},
          {"embed_dim", e.embed_dim},
          {"mlp_ratio", e.mlp_ratio},
          {"context_length", e.context_length},
          {"vocab_size", e.vocab_size},
          {"init_std", e.init_std},
          {"image_attention_scale", e.image_attention_scale},
          {"text_attention_scale", e.text_attention_scale},
          {"position_scale", e.position_scale},
          {"text_mean_pooling", e.text_mean_pooling},
          {"embedding_offset", e.embedding_offset},
          {"seed", e.seed}};
}

ToyEncoderConfig parse_encoder(const nlohmann::json& j, ToyEncoderConfig e) {
  using Setter = std::function<void(const nlohmann::json&)>;
  const std::map<std::string, Setter> setters{
      {"patch", [&](const nlohmann::json& v) { e.patch = v.get<int>(); }},
      {"image_channels", [&](const nlohmann::json& v) { e.image_channels = v.get<int>(); }},
      {"feature_width", [&](const nlohmann::json& v) { e.feature_width = v.get<int>(); }},
      {"text_width", [&](const nlohmann::json& v) { e.text_width = v.get<int>(); }},
      {"embed_dim", [&](const nlohmann::json& v) { e.embed_dim = v.get<int>(); }},
      {"mlp_ratio", [&](const nlohmann::json& v) { e.mlp_ratio = v.get<int>(); }},
      {"context_length", [&](const nlohmann::json& v) { e.context_length = v.get<int>(); }},
      {"vocab_size", [&](const nlohmann::json& v) { e.vocab_size = v.get<int>(); }},
      {"init_std", [&](const nlohmann::json& v) { e.init_std = v.get<double>(); }},
      {"image_attention_scale", [&](const nlohmann::json& v) { e.image_attention_scale = v.get<double>(); }},
      {"text_mean_pooling", [&](const nlohmann::json& v) { e.text_mean_pooling = v.get<bool>(); }},
      {"text_attention_scale", [&](const nlohmann::json& v) { e.text_attention_scale = v.get<double>(); }},
      {"position_scale", [&](const nlohmann::json& v) { e.position_scale = v.get<double>(); }},
      {"embedding_offset", [&](const nlohmann::json& v) { e.embedding_offset = v.get<double>(); }},
      {"seed", [&](const nlohmann::json& v) { e.seed = v.get<std::uint64_t>(); }},
  };
  for (const auto& [key, value] : j.items()) {
    auto it = setters.find(key);
    if (it == setters.end()) throw DomainError("config: unknown encoder key '" + key + "'");
    it->second(value);
  }
  return e;
}

void check(bool ok, const std::string& message) {
  if (!ok) throw DomainError("config: " + message);
}

}  // namespace

CoarseRefresh parse_coarse_refresh(std::string_view name) {
  if (name == "per_step") return CoarseRefresh::per_step;
  if (name == "per_epoch") return CoarseRefresh::per_epoch;
  throw DomainError("unknown coarse refresh '" + std::string(name) + "'");
}

SegLossKind parse_seg_loss_kind(std::string_view name) {
  if (name == "cal") return SegLossKind::cal;
  if (name == "sigmoid_ce") return SegLossKind::sigmoid_ce;
  throw DomainError("unknown segmentation loss '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
  check(batch_size >= 1, "batch_size must be at least 1");
  check(epochs >= 1, "epochs must be at least 1");
  check(learning_rate > 0.0, "learning_rate must be positive");
  check(optimizer.momentum >= 0.0 && optimizer.momentum < 1.0, "momentum must be in [0, 1)");
  check(optimizer.weight_decay >= 0.0, "weight_decay must be nonnegative");
  check(optimizer.warmup_epochs >= 0, "warmup_epochs must be nonnegative");
  check(optimizer.warmup_lr >= 0.0, "warmup_lr must be nonnegative");
  check(max_steps >= 0, "max_steps must be nonnegative");
  check(temperature > 0.0, "temperature must be positive");
  check(caa_iterations >= 0, "caa_iterations must be nonnegative");
  check(box_threshold >= 0.0 && box_threshold < 1.0, "box_threshold must be in [0, 1)");
  check(affinity.sinkhorn_iterations >= 1, "sinkhorn_iterations must be at least 1");
  check(sams.t_m_whole >= 0.0 && sams.t_m_whole <= 1.0, "t_m_whole must be in [0, 1]");
  check(sams.t_m_other >= 0.0 && sams.t_m_other <= 1.0, "t_m_other must be in [0, 1]");
  check(sams.nms_iou > 0.0 && sams.nms_iou <= 1.0, "nms_iou must be in (0, 1]");
  check(sams.t_r > 0.0 && sams.t_r <= 1.0, "t_r must be in (0, 1]");
  check(alpha > 0.0, "alpha must be positive");
  check(context_length >= 1, "context_length must be at least 1");
  check(oracle_noise >= 0.0, "oracle_noise must be nonnegative");
  check(encoder.patch >= 1 && encoder.feature_width >= 1 && encoder.embed_dim >= 1, "encoder sizes must be positive");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"batch_size", batch_size},
          {"epochs", epochs},
          {"learning_rate", learning_rate},
          {"momentum", optimizer.momentum},
          {"weight_decay", optimizer.weight_decay},
          {"warmup_epochs", optimizer.warmup_epochs},
          {"warmup_lr", optimizer.warmup_lr},
          {"max_steps", max_steps},
          {"temperature", temperature},
          {"caa_iterations", caa_iterations},
          {"box_threshold", box_threshold},
          {"affinity_normalization", affinity_name(affinity.normalization)},
          {"sinkhorn_iterations", affinity.sinkhorn_iterations},
          {"t_m_whole", sams.t_m_whole},
          {"t_m_other", sams.t_m_other},
          {"nms_iou", sams.nms_iou},
          {"t_r", sams.t_r},
          {"alpha", alpha},
          {"context_length", context_length},
          {"seg_placement", placement_name(seg_placement)},
          {"background_has_label", background_has_label},
          {"synonym_pooling", pooling_name(synonym_pooling)},
          {"coarse_refresh", coarse_refresh == CoarseRefresh::per_step ? "per_step" : "per_epoch"},
          {"detach_weights", detach_weights},
          {"seg_loss", seg_loss == SegLossKind::cal ? "cal" : "sigmoid_ce"},
          {"seg_scaling", scaling_json(seg_scaling)},
          {"backend", backend_name(backend)},
          {"oracle_noise", oracle_noise},
          {"encoder", encoder_json(encoder)},
          {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& doc, const TrainConfig& base) {
  if (!doc.is_object()) throw DomainError("config: expected a JSON object");
  TrainConfig c = base;
  using Setter = std::function<void(const nlohmann::json&)>;
  const std::map<std::string, Setter> setters{
      {"batch_size", [&](const nlohmann::json& v) { c.batch_size = v.get<int>(); }},
      {"epochs", [&](const nlohmann::json& v) { c.epochs = v.get<int>(); }},
      {"learning_rate", [&](const nlohmann::json& v) { c.learning_rate = v.get<double>(); }},
      {"momentum", [&](const nlohmann::json& v) { c.optimizer.momentum = v.get<double>(); }},
      {"weight_decay", [&](const nlohmann::json& v) { c.optimizer.weight_decay = v.get<double>(); }},
      {"warmup_epochs", [&](const nlohmann::json& v) { c.optimizer.warmup_epochs = v.get<int>(); }},
      {"warmup_lr", [&](const nlohmann::json& v) { c.optimizer.warmup_lr = v.get<double>(); }},
      {"max_steps", [&](const nlohmann::json& v) { c.max_steps = v.get<int>(); }},
      {"temperature", [&](const nlohmann::json& v) { c.temperature = v.get<double>(); }},
      {"caa_iterations", [&](const nlohmann::json& v) { c.caa_iterations = v.get<int>(); }},
      {"box_threshold", [&](const nlohmann::json& v) { c.box_threshold = v.get<double>(); }},
      {"affinity_normalization",
       [&](const nlohmann::json& v) { c.affinity.normalization = parse_affinity(v.get<std::string>()); }},
      {"sinkhorn_iterations", [&](const nlohmann::json& v) { c.affinity.sinkhorn_iterations = v.get<int>(); }},
      {"t_m_whole", [&](const nlohmann::json& v) { c.sams.t_m_whole = v.get<double>(); }},
      {"t_m_other", [&](const nlohmann::json& v) { c.sams.t_m_other = v.get<double>(); }},
      {"nms_iou", [&](const nlohmann::json& v) { c.sams.nms_iou = v.get<double>(); }},
      {"t_r", [&](const nlohmann::json& v) { c.sams.t_r = v.get<double>(); }},
      {"alpha", [&](const nlohmann::json& v) { c.alpha = v.get<double>(); }},
      {"context_length", [&](const nlohmann::json& v) { c.context_length = v.get<int>(); }},
      {"seg_placement", [&](const nlohmann::json& v) { c.seg_placement = parse_placement(v.get<std::string>()); }},
      {"background_has_label", [&](const nlohmann::json& v) { c.background_has_label = v.get<bool>(); }},
      {"synonym_pooling", [&](const nlohmann::json& v) { c.synonym_pooling = parse_pooling(v.get<std::string>()); }},
      {"coarse_refresh",
       [&](const nlohmann::json& v) { c.coarse_refresh = parse_coarse_refresh(v.get<std::string>()); }},
      {"detach_weights", [&](const nlohmann::json& v) { c.detach_weights = v.get<bool>(); }},
      {"seg_loss", [&](const nlohmann::json& v) { c.seg_loss = parse_seg_loss_kind(v.get<std::string>()); }},
      {"seg_scaling", [&](const nlohmann::json& v) { c.seg_scaling = parse_scaling(v); }},
      {"backend", [&](const nlohmann::json& v) { c.backend = parse_backend_kind(v.get<std::string>()); }},
      {"oracle_noise", [&](const nlohmann::json& v) { c.oracle_noise = v.get<double>(); }},
      {"encoder", [&](const nlohmann::json& v) { c.encoder = parse_encoder(v, c.encoder); }},
      {"seed", [&](const nlohmann::json& v) { c.seed = v.get<std::uint64_t>(); }},
  };
  for (const auto& [key, value] : doc.items()) {
    auto it = setters.find(key);
    if (it == setters.end()) throw DomainError("config: unknown key '" + key + "'");
    try {
      it->second(value);
    } catch (const nlohmann::json::exception& e) {
      throw DomainError("config: bad value for '" + key + "': " + e.what());
    }
  }
  c.validate();
  return c;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& doc) { return from_json(doc, TrainConfig{}); }

std::uint64_t TrainConfig::hash() const {
  const std::string text = to_json().dump();
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace promptseed
