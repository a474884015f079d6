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


// Command-line front end: synthetic data, prompt training, seed generation,
// score-map refinement and evaluation.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptseed/codecs.hpp"
#include "promptseed/errors.hpp"
#include "promptseed/metrics.hpp"
#include "promptseed/pipeline.hpp"
#include "promptseed/sams.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace promptseed {
namespace {

std::vector<fs::path> files_with_extension(const fs::path& dir, const std::string& ext) {
  if (!fs::is_directory(dir)) throw IoError(dir.string() + " is not a directory");
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ext) out.push_back(entry.path());
  std::sort(out.begin(), out.end());
  return out;
}

// Parses `text` as JSON, falling back to a plain string.
json loose_value(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error&) {
    return text;
  }
}

// Applies "a.b=value" to a JSON document.
void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw DomainError("--set expects key=value, got '" + assignment + "'");
  json* node = &doc;
  std::string key = assignment.substr(0, eq);
  for (std::size_t dot; (dot = key.find('.')) != std::string::npos; key = key.substr(dot + 1)) {
    node = &(*node)[key.substr(0, dot)];
    if (!node->is_object()) *node = json::object();
  }
  (*node)[key] = loose_value(assignment.substr(eq + 1));
}

std::vector<std::string> foreground_names(const ClassRegistry& registry) {
  std::vector<std::string> names;
  for (const auto& f : registry.foreground()) names.push_back(f.name);
  return names;
}

struct TrainArgs {
  std::string config, data, out;
  std::optional<int> epochs, batch_size, max_steps;
  std::optional<double> learning_rate, temperature;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> backend, seg_loss;
  std::vector<std::string> sets;
  bool quiet = false;
};

int train_prompts(const TrainArgs& a) {
  json doc = json::object();
  if (!a.config.empty()) {
    try {
      doc = json::parse(read_file(a.config));
    } catch (const json::parse_error& e) {
      throw FormatError(a.config + ": " + e.what(), e.byte);
    }
  }
  if (a.epochs) doc["epochs"] = *a.epochs;
  if (a.batch_size) doc["batch_size"] = *a.batch_size;
  if (a.max_steps) doc["max_steps"] = *a.max_steps;
  if (a.learning_rate) doc["learning_rate"] = *a.learning_rate;
  if (a.temperature) doc["temperature"] = *a.temperature;
  if (a.seed) doc["seed"] = *a.seed;
  if (a.backend) doc["backend"] = *a.backend;
  if (a.seg_loss) doc["seg_loss"] = *a.seg_loss;
  for (const auto& s : a.sets) apply_override(doc, s);
  const TrainConfig config = TrainConfig::from_json(doc);

  const Dataset data = read_dataset(a.data);
  Pipeline pipe(data.registry, config);
  if (!a.quiet) pipe.set_logger([](const std::string& line) { std::cerr << line << "\n"; });
  const TrainState state = pipe.train(data.samples);
  save_state(a.out, state, config, data.registry, fs::absolute(a.data).string());
  const LossBreakdown& first = state.loss_history.front();
  const LossBreakdown& last = state.loss_history.back();
  std::cout << json{{"steps", state.step},
                    {"first_total", first.total},
                    {"last_total", last.total},
                    {"config_hash", config.hash()},
                    {"state", a.out}}
                   .dump()
            << "\n";
  return 0;
}

int gen_seeds(const std::string& state_path, const std::string& mode, std::string data_dir, const std::string& out) {
  const StoredState stored = load_state(state_path);
  if (data_dir.empty()) data_dir = stored.data_dir;
  if (data_dir.empty()) throw MissingError("the state records no dataset; pass --data");
  const Dataset data = read_dataset(data_dir);
  if (data.registry.to_json() != stored.registry.to_json()) {
    throw DomainError("the dataset registry differs from the one the state was trained with");
  }
  const Pipeline pipe(stored.registry, stored.config);
  const auto written = pipe.generate_seeds(data.samples, stored.state, parse_seed_mode(mode), out);
  std::cout << json{{"written", written.size()}, {"mode", mode}, {"out", out}}.dump() << "\n";
  return 0;
}

struct RefineArgs {
  std::string scores, masks, out, registry;
  double alpha = 0.6;
  QuasiSuperpixelConfig sams;
};

int refine(const RefineArgs& a) {
  std::optional<ClassRegistry> registry;
  if (!a.registry.empty()) registry = ClassRegistry::load(a.registry);
  const auto inputs = files_with_extension(a.scores, ".cam");
  std::vector<std::pair<std::string, SeedMap>> seeds;
  int max_class = -1;
  for (const auto& path : inputs) {
    const std::string id = path.stem().string();
    const CamTensor t = read_cam_tensor(path);
    ScoreMaps s;
    s.height = t.shape[1];
    s.width = t.shape[2];
    s.class_ids = t.class_ids;
    const std::size_t plane = static_cast<std::size_t>(s.height) * s.width;
    for (int c = 0; c < t.shape[0]; ++c) {
      Eigen::MatrixXd m(s.height, s.width);
      for (std::size_t p = 0; p < plane; ++p) m(p / s.width, p % s.width) = t.data[c * plane + p];
      s.channels.push_back(std::move(m));
    }
    for (int id_value : s.class_ids) {
      if (registry && id_value >= registry->num_foreground()) {
        throw DomainError(path.string() + ": class " + std::to_string(id_value) + " is not in the registry");
      }
      max_class = std::max(max_class, id_value);
    }
    const fs::path mask_path = fs::path(a.masks) / (id + ".json");
    if (!fs::exists(mask_path)) throw MissingError("no mask file " + mask_path.string() + " for " + path.string());
    const MaskFile mf = read_mask_file(mask_path);
    if (mf.height != s.height || mf.width != s.width) {
      throw DimensionError(mask_path.string() + ": mask size differs from the score maps");
    }
    seeds.emplace_back(id, refine_score_map(s, mf.masks, a.alpha, a.sams));
  }
  std::vector<std::string> names;
  if (registry) {
    names = foreground_names(*registry);
  } else {
    for (int k = 0; k <= max_class; ++k) names.push_back("class" + std::to_string(k));
  }
  fs::create_directories(a.out);
  for (const auto& [id, seed] : seeds) write_seed_with_sidecar(fs::path(a.out) / (id + ".png"), seed, names);
  std::cout << json{{"written", seeds.size()}, {"out", a.out}}.dump() << "\n";
  return 0;
}

// Label names from a seed sidecar: index 0 is background.
std::optional<std::vector<std::string>> sidecar_names(const fs::path& png) {
  fs::path side = png;
  side.replace_extension(".json");
  if (!fs::exists(side)) return std::nullopt;
  json j;
  try {
    j = json::parse(read_file(side));
  } catch (const json::parse_error& e) {
    throw FormatError(side.string() + ": " + e.what(), e.byte);
  }
  std::map<int, std::string> by_value;
  for (const auto& [key, value] : j.items()) by_value[std::stoi(key)] = value.get<std::string>();
  std::vector<std::string> names;
  for (int v = 0; by_value.count(v); ++v) names.push_back(by_value[v]);
  return names;
}

int evaluate(const std::string& pred_dir, const std::string& gt_dir, const std::string& out) {
  std::vector<SeedMap> pred, gt;
  std::optional<std::vector<std::string>> names;
  int max_label = 0;
  for (const auto& gt_path : files_with_extension(gt_dir, ".png")) {
    const fs::path pred_path = fs::path(pred_dir) / gt_path.filename();
    if (!fs::exists(pred_path)) throw MissingError("no prediction for " + gt_path.filename().string());
    gt.push_back(read_seed_png(gt_path));
    pred.push_back(read_seed_png(pred_path));
    for (const SeedMap* m : {&gt.back(), &pred.back()})
      for (auto v : m->labels) max_label = std::max<int>(max_label, v);
    if (!names) names = sidecar_names(gt_path);
    if (!names) names = sidecar_names(pred_path);
  }
  if (gt.empty()) throw MissingError("no ground-truth PNG files in " + gt_dir);
  std::vector<std::string> labels = names.value_or(std::vector<std::string>{});
  const int num_labels = std::max<int>(static_cast<int>(labels.size()), max_label + 1);
  const json report = miou(pred, gt, num_labels).to_json(labels);
  if (!out.empty()) write_file(out, report.dump(2) + "\n");
  std::cout << report.dump(2) << "\n";
  return 0;
}

int synth_data(std::uint64_t seed, int n, const std::string& out, int classes, int size, int min_objects,
               int max_objects) {
  if (n < 0) throw DomainError("--n must be nonnegative");
  if (min_objects < 0 || max_objects < min_objects) throw DomainError("need 0 <= --min-objects <= --max-objects");
  SceneOptions base;
  base.height = base.width = size;
  base.num_classes = classes;
  const Dataset d{toy_registry(classes), synth_samples(seed, n, base, min_objects, max_objects)};
  write_dataset(out, d);
  std::cout << json{{"scenes", n}, {"out", out}}.dump() << "\n";
  return 0;
}

}  // namespace
}  // namespace promptseed

int main(int argc, char** argv) {
  using namespace promptseed;
  CLI::App app{"Seed generation for weakly supervised segmentation with learned prompts and superpixel masks"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* t = app.add_subcommand("train-prompts", "Learn the classification and segmentation prompt contexts");
  t->add_option("--config", train.config, "JSON config; flags below override its keys")->check(CLI::ExistingFile);
  t->add_option("--data", train.data, "Dataset directory")->required();
  t->add_option("--out", train.out, "Output state file")->required();
  t->add_option("--epochs", train.epochs);
  t->add_option("--batch-size", train.batch_size);
  t->add_option("--max-steps", train.max_steps);
  t->add_option("--learning-rate", train.learning_rate);
  t->add_option("--temperature", train.temperature);
  t->add_option("--seed", train.seed);
  t->add_option("--backend", train.backend, "toy, oracle or external");
  t->add_option("--seg-loss", train.seg_loss, "cal or sigmoid_ce");
  t->add_option("--set", train.sets, "Override any config key: key=value, dots for nested keys");
  t->add_flag("--quiet", train.quiet, "No per-step log on stderr");

  std::string state_path, mode = "fine", data_dir, seeds_out;
  auto* g = app.add_subcommand("gen-seeds", "Write seed maps for every image of a dataset");
  g->add_option("--state", state_path, "State file from train-prompts")->required()->check(CLI::ExistingFile);
  g->add_option("--mode", mode, "coarse or fine")->check(CLI::IsMember({"coarse", "fine"}));
  g->add_option("--data", data_dir, "Dataset directory; defaults to the one the state was trained on");
  g->add_option("--out", seeds_out, "Output directory")->required();

  RefineArgs ref;
  auto* r = app.add_subcommand("refine", "Turn per-class score maps into seeds using region masks");
  r->add_option("--scores", ref.scores, "Directory of <id>.cam score tensors")->required();
  r->add_option("--masks", ref.masks, "Directory of <id>.json mask files")->required();
  r->add_option("--out", ref.out, "Output directory")->required();
  r->add_option("--registry", ref.registry, "Class registry JSON for label names")->check(CLI::ExistingFile);
  r->add_option("--alpha", ref.alpha, "Background score exponent");
  r->add_option("--t-m-whole", ref.sams.t_m_whole, "Confidence threshold for whole masks");
  r->add_option("--t-m-other", ref.sams.t_m_other, "Confidence threshold for part and subpart masks");
  r->add_option("--nms-iou", ref.sams.nms_iou, "Suppression IoU");
  r->add_option("--t-r", ref.sams.t_r, "Occupation ratio limit");

  std::string pred_dir, gt_dir, eval_out;
  auto* e = app.add_subcommand("eval", "Mean IoU of predicted seed maps against ground truth");
  e->add_option("--pred", pred_dir, "Directory of predicted PNG label maps")->required();
  e->add_option("--gt", gt_dir, "Directory of ground-truth PNG label maps")->required();
  e->add_option("--out", eval_out, "Also write the report to this file");

  std::uint64_t synth_seed = 7;
  int synth_n = 20, synth_classes = 3, synth_size = 128, min_objects = 1, max_objects = 2;
  std::string synth_out;
  auto* s = app.add_subcommand("synth-data", "Generate a synthetic dataset with masks and ground truth");
  s->add_option("--seed", synth_seed);
  s->add_option("--n", synth_n, "Number of scenes");
  s->add_option("--out", synth_out, "Output directory")->required();
  s->add_option("--classes", synth_classes)->check(CLI::Range(1, 255));
  s->add_option("--size", synth_size, "Image side in pixels")->check(CLI::Range(16, 4096));
  s->add_option("--min-objects", min_objects);
  s->add_option("--max-objects", max_objects);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*t) return train_prompts(train);
    if (*g) return gen_seeds(state_path, mode, data_dir, seeds_out);
    if (*r) return refine(ref);
    if (*e) return evaluate(pred_dir, gt_dir, eval_out);
    if (*s) return synth_data(synth_seed, synth_n, synth_out, synth_classes, synth_size, min_objects, max_objects);
  } catch (const promptseed::Error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return 0;
}
