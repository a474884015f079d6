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

#include "promptseed/sams.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "promptseed/errors.hpp"

namespace promptseed {

namespace {

bool passes_confidence(const MaskEntry& e, const QuasiSuperpixelConfig& cfg) {
  return e.level == MaskLevel::whole ? e.confidence >= cfg.t_m_whole : e.confidence >= cfg.t_m_other;
}

double mask_mean(const BinaryMask& mask, const Eigen::MatrixXd& map) {
  double sum = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      if (mask.at(y, x)) {
        sum += map(y, x);
        ++n;
      }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

// Per-row min-max across superpixels; constant rows become zeros.
void normalize_rows(Eigen::MatrixXd& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    if (m.cols() == 0) continue;
    const double lo = m.row(r).minCoeff();
    const double hi = m.row(r).maxCoeff();
    if (hi > lo) {
      m.row(r) = (m.row(r).array() - lo) / (hi - lo);
    } else {
      m.row(r).setZero();
    }
  }
}

struct ClassifyInput {
  std::vector<int> classes;                // ascending registry ids
  std::vector<const Eigen::MatrixXd*> maps;  // parallel to classes
  const Eigen::MatrixXd* background = nullptr;
};

LabeledSuperpixels classify(const QuasiSuperpixelSet& qsp, const ClassifyInput& in, double alpha) {
  if (!(alpha > 0.0)) throw DomainError("classify_superpixels: alpha must be positive");
  const Eigen::Index n = static_cast<Eigen::Index>(qsp.size());
  const Eigen::Index np = static_cast<Eigen::Index>(in.classes.size());
  LabeledSuperpixels out;
  out.classes = in.classes;
  out.fg_scores = Eigen::MatrixXd::Zero(np, n);
  for (Eigen::Index c = 0; c < np; ++c)
    for (Eigen::Index i = 0; i < n; ++i) out.fg_scores(c, i) = mask_mean(qsp.entries[i].mask, *in.maps[c]);
  normalize_rows(out.fg_scores);

  out.bg_scores.resize(n);
  if (in.background) {
    Eigen::MatrixXd bg(1, n);
    for (Eigen::Index i = 0; i < n; ++i) bg(0, i) = mask_mean(qsp.entries[i].mask, *in.background);
    normalize_rows(bg);
    out.bg_scores = bg.row(0).transpose();
  } else {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double best = np > 0 ? out.fg_scores.col(i).maxCoeff() : 0.0;
      out.bg_scores(i) = std::pow(std::max(0.0, 1.0 - best), alpha);
    }
  }

  out.labels.assign(static_cast<std::size_t>(n), kBackgroundLabel);
  out.label_scores.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    int label = kBackgroundLabel;
    double best = out.bg_scores(i);
    // Strict comparison keeps ties on background, then on the lowest class.
    for (Eigen::Index c = 0; c < np; ++c) {
      if (out.fg_scores(c, i) > best) {
        best = out.fg_scores(c, i);
        label = in.classes[static_cast<std::size_t>(c)];
      }
    }
    out.labels[static_cast<std::size_t>(i)] = label;
    out.label_scores(i) = best;
  }
  return out;
}

void check_map_shape(const Eigen::MatrixXd& m, int height, int width, const char* what) {
  if (m.rows() != height || m.cols() != width) {
    throw DimensionError(std::string(what) + ": map is " + std::to_string(m.rows()) + "x" +
                         std::to_string(m.cols()) + ", masks are " + std::to_string(height) + "x" +
                         std::to_string(width));
  }
}

}  // namespace

QuasiSuperpixelSet generate_quasi_superpixels(const std::vector<MaskEntry>& masks, int height, int width,
                                              const QuasiSuperpixelConfig& config) {
  QuasiSuperpixelSet out;
  out.height = height;
  out.width = width;
  for (const auto& m : masks) {
    if (m.mask.height != height || m.mask.width != width || m.mask.bits.size() != std::size_t(height) * width) {
      throw DimensionError("generate_quasi_superpixels: mask is " + std::to_string(m.mask.height) + "x" +
                           std::to_string(m.mask.width) + ", expected " + std::to_string(height) + "x" +
                           std::to_string(width));
    }
  }

  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < masks.size(); ++i)
    if (passes_confidence(masks[i], config)) order.push_back(i);
  // Whole masks sort ahead of every part/subpart mask, so a lower level can
  // never suppress them.
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (masks[a].level != masks[b].level) return masks[a].level > masks[b].level;
    return masks[a].confidence > masks[b].confidence;
  });

  std::vector<std::size_t> kept;
  for (std::size_t idx : order) {
    bool suppressed = false;
    for (std::size_t k : kept) {
      if (iou(masks[idx].mask, masks[k].mask) >= config.nms_iou) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(idx);
  }

  // `kept` is already in whole -> part -> subpart order.
  BinaryMask selected(height, width);
  for (std::size_t idx : kept) {
    const MaskEntry& m = masks[idx];
    const double ratio =
        static_cast<double>(intersection_area(m.mask, selected)) / static_cast<double>(m.mask.area());
    if (ratio < config.t_r) {
      for (std::size_t p = 0; p < selected.bits.size(); ++p) selected.bits[p] |= m.mask.bits[p];
      out.entries.push_back(m);
      out.source_indices.push_back(idx);
    }
  }
  return out;
}

LabeledSuperpixels classify_superpixels(const QuasiSuperpixelSet& qsp, const CamStack& cams, double alpha) {
  ClassifyInput in;
  std::vector<std::size_t> perm(cams.class_ids.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::sort(perm.begin(), perm.end(), [&](std::size_t a, std::size_t b) { return cams.class_ids[a] < cams.class_ids[b]; });
  if (cams.maps.size() != cams.class_ids.size()) {
    throw DimensionError("classify_superpixels: cam stack has mismatched class ids");
  }
  for (std::size_t k : perm) {
    check_map_shape(cams.maps[k], qsp.height, qsp.width, "classify_superpixels");
    in.classes.push_back(cams.class_ids[k]);
    in.maps.push_back(&cams.maps[k]);
  }
  return classify(qsp, in, alpha);
}

SeedMap generate_seed_map(const QuasiSuperpixelSet& qsp, const LabeledSuperpixels& labeled) {
  if (labeled.labels.size() != qsp.size()) {
    throw DimensionError("generate_seed_map: labels do not align with superpixels");
  }
  SeedMap seed(qsp.height, qsp.width);
  std::vector<int> owner(seed.labels.size(), -1);
  for (std::size_t i = 0; i < qsp.size(); ++i) {
    const MaskEntry& e = qsp.entries[i];
    for (std::size_t p = 0; p < owner.size(); ++p) {
      if (!e.mask.bits[p]) continue;
      const int cur = owner[p];
      if (cur >= 0) {
        const MaskEntry& o = qsp.entries[static_cast<std::size_t>(cur)];
        if (o.level > e.level) continue;
        if (o.level == e.level &&
            labeled.label_scores(cur) >= labeled.label_scores(static_cast<Eigen::Index>(i))) {
          continue;
        }
      }
      owner[p] = static_cast<int>(i);
    }
  }
  for (std::size_t p = 0; p < owner.size(); ++p) {
    if (owner[p] < 0) continue;
    const int label = labeled.labels[static_cast<std::size_t>(owner[p])];
    seed.labels[p] = label == kBackgroundLabel ? 0 : seed_value(label);
  }
  return seed;
}

SeedMap seed_from_cams(const QuasiSuperpixelSet& qsp, const CamStack& cams, double alpha) {
  return generate_seed_map(qsp, classify_superpixels(qsp, cams, alpha));
}

std::optional<std::size_t> ScoreMaps::background_channel() const {
  for (std::size_t i = 0; i < class_ids.size(); ++i)
    if (class_ids[i] == kBackgroundLabel) return i;
  return std::nullopt;
}

SeedMap refine_score_map(const ScoreMaps& scores, const std::vector<MaskEntry>& masks, double alpha,
                         const QuasiSuperpixelConfig& config) {
  if (scores.channels.size() != scores.class_ids.size()) {
    throw DimensionError("refine_score_map: channel count differs from class id count");
  }
  ClassifyInput in;
  std::vector<std::size_t> perm;
  for (std::size_t i = 0; i < scores.channels.size(); ++i) {
    check_map_shape(scores.channels[i], scores.height, scores.width, "refine_score_map");
    if (!scores.channels[i].allFinite()) throw DomainError("refine_score_map: non-finite score");
    if (scores.class_ids[i] == kBackgroundLabel) {
      if (in.background) throw DimensionError("refine_score_map: more than one background channel");
      in.background = &scores.channels[i];
    } else {
      perm.push_back(i);
    }
  }
  std::sort(perm.begin(), perm.end(),
            [&](std::size_t a, std::size_t b) { return scores.class_ids[a] < scores.class_ids[b]; });
  for (std::size_t k : perm) {
    in.classes.push_back(scores.class_ids[k]);
    in.maps.push_back(&scores.channels[k]);
  }
  QuasiSuperpixelSet qsp = generate_quasi_superpixels(masks, scores.height, scores.width, config);
  return generate_seed_map(qsp, classify(qsp, in, alpha));
}

SeedMap argmax_seed(const ScoreMaps& scores, double bg_threshold) {
  SeedMap seed(scores.height, scores.width);
  const auto bg = scores.background_channel();
  for (int y = 0; y < scores.height; ++y)
    for (int x = 0; x < scores.width; ++x) {
      int label = kBackgroundLabel;
      double best = bg ? scores.channels[*bg](y, x) : bg_threshold;
      for (std::size_t c = 0; c < scores.channels.size(); ++c) {
        if (bg && c == *bg) continue;
        const double v = scores.channels[c](y, x);
        if (v > best || (v == best && label != kBackgroundLabel && scores.class_ids[c] < label)) {
          best = v;
          label = scores.class_ids[c];
        }
      }
      seed.at(y, x) = label == kBackgroundLabel ? 0 : seed_value(label);
    }
  return seed;
}

SeedMap argmax_seed(const CamStack& cams, double bg_threshold) {
  ScoreMaps s;
  s.height = cams.height;
  s.width = cams.width;
  s.channels = cams.maps;
  s.class_ids = cams.class_ids;
  return argmax_seed(s, bg_threshold);
}

}  // namespace promptseed
