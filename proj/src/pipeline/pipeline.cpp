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

#include "promptseed/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "promptseed/codecs.hpp"
#include "promptseed/errors.hpp"
#include "promptseed/oracle.hpp"

namespace promptseed {

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

std::vector<int> concat(const std::vector<int>& a, const std::vector<int>& b) {
  std::vector<int> out = a;
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

std::vector<std::string> foreground_names(const ClassRegistry& registry) {
  std::vector<std::string> names;
  for (const auto& f : registry.foreground()) names.push_back(f.name);
  return names;
}

/// Value-only pooled embeddings (one row per class in `classes`).
Eigen::MatrixXd pooled_values(const PromptSet& set, const Eigen::MatrixXd& prompt_values,
                              const std::vector<int>& classes, const Eigen::VectorXd& image_embedding,
                              SynonymPooling pooling) {
  ad::Tape tape;
  EncodedPrompts enc;
  for (Eigen::Index i = 0; i < prompt_values.rows(); ++i) enc.embeddings.push_back(tape.constant(prompt_values.row(i)));
  return pooled_class_embeddings(set, enc, classes, image_embedding, pooling).value();
}

double max_abs(const std::vector<Eigen::MatrixXd>& grads) {
  double m = 0.0;
  for (const auto& g : grads) m = std::max(m, g.cwiseAbs().maxCoeff());
  return m;
}

}  // namespace

SeedMode parse_seed_mode(std::string_view name) {
  if (name == "coarse") return SeedMode::coarse;
  if (name == "fine") return SeedMode::fine;
  throw DomainError("unknown seed mode '" + std::string(name) + "'");
}

struct Pipeline::Cached {
  const Sample* sample = nullptr;
  EncoderOutputs outputs;
  QuasiSuperpixelSet qsp;
};

struct Pipeline::Objective {
  std::vector<ad::Var> cls_leaves;
  std::vector<ad::Var> seg_leaves;
  ad::Var mcl;    // batch mean
  ad::Var seg;    // batch mean of the segmentation loss
  ad::Var total;
  LossBreakdown parts;
  int counted = 0;
};

Pipeline::Pipeline(ClassRegistry registry, TrainConfig config)
    : registry_(std::move(registry)), config_(std::move(config)), encoder_(config_.encoder) {
  config_.validate();
}

void Pipeline::log(const std::string& message) const {
  if (logger_) logger_(message);
}

TrainState Pipeline::init_state() const {
  TrainState s;
  const int width = encoder_.config().text_width;
  s.classification = init_context(ContextStrategy::unified, config_.context_length, width, config_.seed,
                                  registry_.size(), width, Placement::append);
  s.segmentation = init_context(ContextStrategy::class_specific, config_.context_length, width,
                                config_.seed + 1, registry_.size(), width, config_.seg_placement);
  s.segmentation.background_has_label = config_.background_has_label;
  return s;
}

EncoderOutputs Pipeline::encode(const Image& image, GradMode mode) const {
  switch (config_.backend) {
    case BackendKind::toy:
      return encoder_.encode_image(image, mode);
    case BackendKind::external:
      if (!external_) throw StrategyError("external backend selected but no image encoder adapter is attached");
      return external_(image, mode);
    case BackendKind::oracle:
      break;
  }
  throw StrategyError("the oracle backend produces maps from ground truth and has no image encoder");
}

std::pair<CamStack, SeedMap> Pipeline::seed_from_raw_cams(const CamStack& raw, const Eigen::MatrixXd& attention,
                                                          const Sample& sample) const {
  const auto qsp = generate_quasi_superpixels(sample.masks, sample.image.height, sample.image.width, config_.sams);
  CamStack refined = raw.maps.empty() ? raw
                                      : caa_refine(raw, attention, config_.caa_iterations, config_.box_threshold,
                                                   config_.affinity);
  refined = upsample_cams(normalize_cams(refined), sample.image.height, sample.image.width);
  SeedMap seed = refined.maps.empty() ? SeedMap(sample.image.height, sample.image.width)
                                      : seed_from_cams(qsp, refined, config_.alpha);
  return {std::move(refined), std::move(seed)};
}

StreamResult Pipeline::run_stream(const Sample& sample, const PromptContext& ctx, bool segmentation) const {
  StreamResult r;
  const auto& P = sample.present;
  if (config_.backend == BackendKind::oracle) {
    if (!sample.ground_truth) throw MissingError(sample.id + ": the oracle backend needs ground truth");
    r.cams = oracle_cams(*sample.ground_truth, P, config_.oracle_noise, config_.seed ^ fnv1a(sample.id));
    r.refined = normalize_cams(r.cams);
    const auto qsp =
        generate_quasi_superpixels(sample.masks, sample.image.height, sample.image.width, config_.sams);
    r.seed = r.refined.maps.empty() ? SeedMap(sample.image.height, sample.image.width)
                                    : seed_from_cams(qsp, r.refined, config_.alpha);
    return r;
  }
  const EncoderOutputs out = encode(sample.image, GradMode::first_order);
  const PromptSet set = segmentation ? build_segmentation_prompts(registry_, ctx, encoder_.tokenizer())
                                     : build_classification_prompts(registry_, ctx, encoder_.tokenizer());
  const Eigen::MatrixXd values = encode_prompt_values(set, ctx, encoder_);
  const Eigen::MatrixXd fg =
      pooled_values(set, values, registry_.foreground_ids(), out.image_embedding, config_.synonym_pooling);
  r.fg_logits = fg * out.image_embedding / config_.temperature;
  if (P.empty()) {
    r.cams.height = out.grid_h;
    r.cams.width = out.grid_w;
    r.refined.height = sample.image.height;
    r.refined.width = sample.image.width;
    r.seed = SeedMap(sample.image.height, sample.image.width);
    return r;
  }
  const Eigen::MatrixXd text = pooled_values(set, values, concat(P, registry_.background_ids()),
                                             out.image_embedding, config_.synonym_pooling);
  r.cams = softmax_gradcam(out, text, P, config_.temperature);
  auto [refined, seed] = seed_from_raw_cams(r.cams, out.attention, sample);
  r.refined = std::move(refined);
  r.seed = std::move(seed);
  return r;
}

StreamResult Pipeline::coarse_stream(const Sample& sample, const TrainState& state) const {
  return run_stream(sample, state.classification, false);
}

StreamResult Pipeline::fine_stream(const Sample& sample, const TrainState& state) const {
  return run_stream(sample, state.segmentation, true);
}

Pipeline::Objective Pipeline::objective(ad::Tape& tape, const std::vector<const Cached*>& batch,
                                        const TrainState& state,
                                        const std::vector<const SeedMap*>& fixed_coarse) const {
  Objective o;
  for (const auto& g : state.classification.groups) o.cls_leaves.push_back(tape.leaf(g));
  for (const auto& g : state.segmentation.groups) o.seg_leaves.push_back(tape.leaf(g));
  const PromptSet cls_set = build_classification_prompts(registry_, state.classification, encoder_.tokenizer());
  const PromptSet seg_set = build_segmentation_prompts(registry_, state.segmentation, encoder_.tokenizer());
  const EncodedPrompts cls_enc = encode_prompts(tape, cls_set, o.cls_leaves, encoder_);
  const EncodedPrompts seg_enc = encode_prompts(tape, seg_set, o.seg_leaves, encoder_);
  const auto fg_ids = registry_.foreground_ids();
  const auto bg_ids = registry_.background_ids();
  const double tau = config_.temperature;

  std::vector<ad::Var> mcl_terms, seg_terms;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Cached& item = *batch[i];
    const Sample& s = *item.sample;
    const auto& P = s.present;
    if (P.empty()) continue;
    const EncoderOutputs& out = item.outputs;
    const Eigen::MatrixXd f_img = out.image_embedding;
    const auto classes = concat(P, bg_ids);

    ad::Var fg_rows = pooled_class_embeddings(cls_set, cls_enc, fg_ids, out.image_embedding, config_.synonym_pooling);
    ad::Var logits = ad::scale(ad::transpose(ad::matmul(fg_rows, tape.constant(f_img))), 1.0 / tau);
    ad::Var mcl = mcl_loss(logits, P);
    mcl_terms.push_back(mcl);
    o.parts.mcl += mcl.value()(0, 0);

    SeedMap coarse;
    if (i < fixed_coarse.size() && fixed_coarse[i] != nullptr) {
      coarse = *fixed_coarse[i];
    } else {
      const Eigen::MatrixXd text =
          pooled_class_embeddings(cls_set, cls_enc, classes, out.image_embedding, config_.synonym_pooling).value();
      const CamStack raw = softmax_gradcam(out, text, P, tau);
      CamStack refined = caa_refine(raw, out.attention, config_.caa_iterations, config_.box_threshold,
                                    config_.affinity);
      refined = upsample_cams(normalize_cams(refined), s.image.height, s.image.width);
      coarse = seed_from_cams(item.qsp, refined, config_.alpha);
    }

    ad::Var seg_rows = pooled_class_embeddings(seg_set, seg_enc, classes, out.image_embedding, config_.synonym_pooling);
    ad::Var maps = softmax_gradcam_on_tape(tape, out, seg_rows, static_cast<int>(P.size()), tau,
                                           config_.detach_weights);
    ad::Var up = upsample_rows_on_tape(maps, out.grid_h, out.grid_w, s.image.height, s.image.width);
    if (config_.seg_loss == SegLossKind::cal) {
      seg_terms.push_back(cal_loss(coarse, up, P));
      std::vector<Eigen::MatrixXd> grids;
      for (Eigen::Index r = 0; r < up.rows(); ++r) {
        Eigen::VectorXd row = up.value().row(r).transpose();
        grids.push_back(unflatten_row_major(row, s.image.height, s.image.width));
      }
      const CalTerms t = cal_loss(coarse, grids, P);
      o.parts.cal_fg += t.fg;
      o.parts.cal_bg += t.bg;
      o.parts.cal += t.cal;
    } else {
      ad::Var ce = baseline_loss(BaselineKind::sigmoid_ce, up, seed_targets(coarse, P), config_.seg_scaling);
      seg_terms.push_back(ce);
      o.parts.baseline += ce.value()(0, 0);
    }
    ++o.counted;
  }
  if (o.counted == 0) throw DomainError("training batch has no sample with a present class");
  auto mean = [&](const std::vector<ad::Var>& terms) {
    ad::Var acc = terms.front();
    for (std::size_t k = 1; k < terms.size(); ++k) acc = ad::add(acc, terms[k]);
    return ad::scale(acc, 1.0 / o.counted);
  };
  o.mcl = mean(mcl_terms);
  o.seg = mean(seg_terms);
  o.total = ad::add(o.mcl, o.seg);
  const double n = o.counted;
  o.parts.mcl /= n;
  o.parts.cal_fg /= n;
  o.parts.cal_bg /= n;
  o.parts.cal /= n;
  o.parts.baseline /= n;
  o.parts.total = o.total.value()(0, 0);
  return o;
}

TrainState Pipeline::train(const std::vector<Sample>& samples, TrainState state) const {
  if (config_.backend == BackendKind::oracle) {
    throw StrategyError("training needs an image encoder; the oracle backend has none");
  }
  if (config_.seg_scaling.learnable) {
    throw StrategyError("automatic scaling is not supported in the training loop; use manual scaling");
  }
  if (samples.empty()) throw DomainError("train: empty dataset");
  std::vector<Cached> cache;
  cache.reserve(samples.size());
  for (const auto& s : samples) {
    if (s.present.empty()) {
      log("skipping " + s.id + ": no present class");
      continue;
    }
    cache.push_back({&s, encode(s.image, GradMode::second_order),
                     generate_quasi_superpixels(s.masks, s.image.height, s.image.width, config_.sams)});
  }
  if (cache.empty()) throw DomainError("train: no sample has a present class");

  const std::size_t batch_size = static_cast<std::size_t>(config_.batch_size);
  const std::size_t batches = (cache.size() + batch_size - 1) / batch_size;
  std::vector<Eigen::MatrixXd> cls_momentum, seg_momentum;
  for (const auto& g : state.classification.groups) cls_momentum.push_back(Eigen::MatrixXd::Zero(g.rows(), g.cols()));
  for (const auto& g : state.segmentation.groups) seg_momentum.push_back(Eigen::MatrixXd::Zero(g.rows(), g.cols()));

  auto sgd = [&](std::vector<Eigen::MatrixXd>& params, std::vector<Eigen::MatrixXd>& momentum,
                 const std::vector<ad::Var>& leaves, const ad::Tape& tape, double lr) {
    for (std::size_t k = 0; k < params.size(); ++k) {
      Eigen::MatrixXd g = tape.grad(leaves[k]) + config_.optimizer.weight_decay * params[k];
      momentum[k] = config_.optimizer.momentum * momentum[k] + g;
      params[k] -= lr * momentum[k];
      if (!params[k].allFinite()) {
        throw DivergenceError("training diverged at step " + std::to_string(state.step) +
                              ": non-finite context values");
      }
    }
  };

  // Once the contexts have moved, a numeric failure downstream means the
  // updates blew them up.
  bool updated = false;
  auto diverging = [&](auto&& evaluate) {
    try {
      return evaluate();
    } catch (const DomainError& e) {
      throw DivergenceError("training diverged after step " + std::to_string(state.step) + ": " + e.what());
    }
  };

  for (int epoch = 0; epoch < config_.epochs; ++epoch) {
    const double lr = epoch < config_.optimizer.warmup_epochs
                          ? config_.optimizer.warmup_lr
                          : 0.5 * config_.learning_rate *
                                (1.0 + std::cos(std::numbers::pi * epoch / static_cast<double>(config_.epochs)));
    std::vector<std::size_t> order(cache.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(config_.seed * 1000003ULL + static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<SeedMap> epoch_coarse;
    if (config_.coarse_refresh == CoarseRefresh::per_epoch) {
      for (const auto& item : cache) {
        epoch_coarse.push_back(updated ? diverging([&] { return coarse_stream(*item.sample, state).seed; })
                                       : coarse_stream(*item.sample, state).seed);
      }
    }

    for (std::size_t b = 0; b < batches; ++b) {
      if (config_.max_steps > 0 && state.step >= config_.max_steps) return state;
      std::vector<const Cached*> batch;
      std::vector<const SeedMap*> fixed;
      for (std::size_t k = b * batch_size; k < std::min(cache.size(), (b + 1) * batch_size); ++k) {
        batch.push_back(&cache[order[k]]);
        fixed.push_back(epoch_coarse.empty() ? nullptr : &epoch_coarse[order[k]]);
      }
      ad::Tape tape;
      Objective o = updated ? diverging([&] { return objective(tape, batch, state, fixed); })
                            : objective(tape, batch, state, fixed);
      if (!std::isfinite(o.parts.total)) {
        throw DivergenceError("training diverged at step " + std::to_string(state.step) +
                              ": total loss is not finite");
      }
      state.loss_history.push_back(o.parts);
      tape.backward(o.total);
      sgd(state.classification.groups, cls_momentum, o.cls_leaves, tape, lr);
      sgd(state.segmentation.groups, seg_momentum, o.seg_leaves, tape, lr);
      ++state.step;
      updated = true;
      log("step " + std::to_string(state.step) + " epoch " + std::to_string(epoch) + " lr " + std::to_string(lr) +
          " mcl " + std::to_string(o.parts.mcl) + " cal " + std::to_string(o.parts.cal) + " total " +
          std::to_string(o.parts.total));
    }
  }
  return state;
}

LossBreakdown Pipeline::evaluate_loss(const std::vector<Sample>& samples, const TrainState& state) const {
  std::vector<Cached> cache;
  for (const auto& s : samples) {
    if (s.present.empty()) continue;
    cache.push_back({&s, encode(s.image, GradMode::second_order),
                     generate_quasi_superpixels(s.masks, s.image.height, s.image.width, config_.sams)});
  }
  if (cache.empty()) throw DomainError("evaluate_loss: no sample has a present class");
  std::vector<const Cached*> batch;
  for (const auto& c : cache) batch.push_back(&c);
  ad::Tape tape;
  return objective(tape, batch, state, {}).parts;
}

CrossStreamGradients Pipeline::cross_stream_gradients(const std::vector<Sample>& samples,
                                                      const TrainState& state) const {
  std::vector<Cached> cache;
  for (const auto& s : samples) {
    if (s.present.empty()) continue;
    cache.push_back({&s, encode(s.image, GradMode::second_order),
                     generate_quasi_superpixels(s.masks, s.image.height, s.image.width, config_.sams)});
  }
  if (cache.empty()) throw DomainError("cross_stream_gradients: no sample has a present class");
  std::vector<const Cached*> batch;
  for (const auto& c : cache) batch.push_back(&c);
  ad::Tape tape;
  Objective o = objective(tape, batch, state, {});
  CrossStreamGradients out;
  std::vector<Eigen::MatrixXd> grads;
  tape.backward(o.mcl);
  for (const auto& leaf : o.seg_leaves) grads.push_back(tape.grad(leaf));
  out.mcl_wrt_segmentation = max_abs(grads);
  tape.zero_grad();
  grads.clear();
  tape.backward(o.seg);
  for (const auto& leaf : o.cls_leaves) grads.push_back(tape.grad(leaf));
  out.cal_wrt_classification = max_abs(grads);
  return out;
}

std::vector<std::filesystem::path> Pipeline::generate_seeds(const std::vector<Sample>& samples,
                                                            const TrainState& state, SeedMode mode,
                                                            const std::filesystem::path& out) const {
  try {
    std::filesystem::create_directories(out);
  } catch (const std::filesystem::filesystem_error& e) {
    throw IoError("cannot create output directory " + out.string() + ": " + e.what());
  }
  const auto names = foreground_names(registry_);
  std::vector<std::filesystem::path> written;
  for (const auto& s : samples) {
    const StreamResult r = mode == SeedMode::fine ? fine_stream(s, state) : coarse_stream(s, state);
    const auto path = out / (s.id + ".png");
    write_seed_with_sidecar(path, r.seed, names);
    written.push_back(path);
  }
  return written;
}

namespace {

const char* strategy_name(ContextStrategy s) { return s == ContextStrategy::unified ? "unified" : "class_specific"; }

CamTensor context_record(const PromptContext& ctx, const std::string& name) {
  CamTensor t;
  t.shape = {static_cast<int>(ctx.groups.size()), ctx.length(), ctx.width()};
  for (int g = 0; g < t.shape[0]; ++g) t.class_ids.push_back(g);
  for (const auto& m : ctx.groups)
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) t.data.push_back(static_cast<float>(m(r, c)));
  t.extras = {{"name", name},
              {"strategy", strategy_name(ctx.strategy)},
              {"placement", ctx.placement == Placement::prepend ? "prepend" : "append"},
              {"background_has_label", ctx.background_has_label}};
  return t;
}

PromptContext context_from_record(const CamTensor& t, const std::string& expected_name) {
  if (t.extras.value("name", "") != expected_name) {
    throw FormatError("state file: expected a '" + expected_name + "' record", 0);
  }
  PromptContext ctx;
  ctx.strategy = t.extras.value("strategy", "") == "unified" ? ContextStrategy::unified
                                                              : ContextStrategy::class_specific;
  ctx.placement = t.extras.value("placement", "append") == "prepend" ? Placement::prepend : Placement::append;
  ctx.background_has_label = t.extras.value("background_has_label", false);
  std::size_t k = 0;
  for (int g = 0; g < t.shape[0]; ++g) {
    Eigen::MatrixXd m(t.shape[1], t.shape[2]);
    for (int r = 0; r < t.shape[1]; ++r)
      for (int c = 0; c < t.shape[2]; ++c) m(r, c) = t.data[k++];
    ctx.groups.push_back(std::move(m));
  }
  return ctx;
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

std::string encode_state(const TrainState& state, const TrainConfig& config, const ClassRegistry& registry,
                         const std::string& data_dir) {
  CamTensor cls = context_record(state.classification, "classification");
  nlohmann::json history = nlohmann::json::array();
  for (const auto& l : state.loss_history) {
    history.push_back(
        {{"mcl", l.mcl}, {"cal_fg", l.cal_fg}, {"cal_bg", l.cal_bg}, {"cal", l.cal}, {"baseline", l.baseline},
         {"total", l.total}});
  }
  cls.extras["config"] = config.to_json();
  cls.extras["config_hash"] = hex(config.hash());
  cls.extras["registry"] = registry.to_json();
  cls.extras["step"] = state.step;
  cls.extras["loss_history"] = history;
  if (!data_dir.empty()) cls.extras["data_dir"] = data_dir;
  return encode_cam_tensor(cls) + encode_cam_tensor(context_record(state.segmentation, "segmentation"));
}

StoredState decode_state(const std::string& bytes) {
  std::size_t offset = 0;
  const CamTensor cls = decode_cam_tensor(bytes, offset);
  const CamTensor seg = decode_cam_tensor(bytes, offset);
  if (offset != bytes.size()) throw FormatError("state file: trailing bytes", offset);
  for (const char* key : {"config", "config_hash", "registry", "step", "loss_history"}) {
    if (!cls.extras.contains(key)) throw FormatError(std::string("state file: header lacks '") + key + "'", 0);
  }
  TrainConfig config;
  try {
    config = TrainConfig::from_json(cls.extras.at("config"));
  } catch (const DomainError& e) {
    throw FormatError(std::string("state file: ") + e.what(), 0);
  }
  if (cls.extras.at("config_hash").get<std::string>() != hex(config.hash())) {
    throw FormatError("state file: config hash does not match the stored config", 0);
  }
  StoredState out{TrainState{}, config, ClassRegistry::from_json(cls.extras.at("registry")), {}};
  out.state.classification = context_from_record(cls, "classification");
  out.state.segmentation = context_from_record(seg, "segmentation");
  out.state.step = cls.extras.at("step").get<int>();
  out.data_dir = cls.extras.value("data_dir", "");
  for (const auto& l : cls.extras.at("loss_history")) {
    LossBreakdown b;
    b.mcl = l.value("mcl", 0.0);
    b.cal_fg = l.value("cal_fg", 0.0);
    b.cal_bg = l.value("cal_bg", 0.0);
    b.cal = l.value("cal", 0.0);
    b.baseline = l.value("baseline", 0.0);
    b.total = l.value("total", 0.0);
    out.state.loss_history.push_back(b);
  }
  return out;
}

void save_state(const std::filesystem::path& path, const TrainState& state, const TrainConfig& config,
                const ClassRegistry& registry, const std::string& data_dir) {
  write_file(path, encode_state(state, config, registry, data_dir));
}

StoredState load_state(const std::filesystem::path& path) {
  try {
    return decode_state(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what(), e.offset());
  }
}

}  // namespace promptseed
