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

#include "promptseed/metrics.hpp"

#include "promptseed/errors.hpp"

namespace promptseed {

ConfusionMatrix::ConfusionMatrix(int num_labels) : num_labels_(num_labels) {
  if (num_labels < 1 || num_labels > 256) throw DomainError("confusion matrix: label count must be in [1, 256]");
  counts_.assign(std::size_t(num_labels) * num_labels, 0);
}

void ConfusionMatrix::add(const SeedMap& pred, const SeedMap& gt) {
  if (pred.height != gt.height || pred.width != gt.width) {
    throw DimensionError("miou: prediction is " + std::to_string(pred.height) + "x" + std::to_string(pred.width) +
                         " but ground truth is " + std::to_string(gt.height) + "x" + std::to_string(gt.width));
  }
  for (std::size_t i = 0; i < pred.labels.size(); ++i) {
    const int p = pred.labels[i];
    const int g = gt.labels[i];
    if (p >= num_labels_ || g >= num_labels_) {
      throw DomainError("miou: label " + std::to_string(std::max(p, g)) + " outside the " +
                        std::to_string(num_labels_) + "-label space");
    }
    ++counts_[std::size_t(p) * num_labels_ + g];
  }
}

IoUReport IoUReport::from_confusion(const ConfusionMatrix& confusion) {
  const int n = confusion.num_labels();
  IoUReport r;
  r.true_positive.assign(n, 0);
  r.false_positive.assign(n, 0);
  r.false_negative.assign(n, 0);
  for (int p = 0; p < n; ++p)
    for (int g = 0; g < n; ++g) {
      const auto c = confusion.count(p, g);
      if (p == g) {
        r.true_positive[p] += c;
      } else {
        r.false_positive[p] += c;
        r.false_negative[g] += c;
      }
    }
  double sum = 0.0;
  int counted = 0;
  r.per_class_iou.resize(n);
  for (int k = 0; k < n; ++k) {
    const auto uni = r.true_positive[k] + r.false_positive[k] + r.false_negative[k];
    if (uni == 0) continue;
    const double iou = static_cast<double>(r.true_positive[k]) / static_cast<double>(uni);
    r.per_class_iou[k] = iou;
    sum += iou;
    ++counted;
  }
  r.mean_iou = counted > 0 ? sum / counted : 0.0;
  return r;
}

nlohmann::json IoUReport::to_json(const std::vector<std::string>& label_names) const {
  nlohmann::json per_class = nlohmann::json::object();
  for (std::size_t k = 0; k < per_class_iou.size(); ++k) {
    if (!per_class_iou[k]) continue;
    const std::string key = k < label_names.size() ? label_names[k] : std::to_string(k);
    per_class[key] = *per_class_iou[k];
  }
  return {{"per_class", per_class}, {"mean_iou", mean_iou}};
}

IoUReport miou(const std::vector<SeedMap>& pred, const std::vector<SeedMap>& gt, int num_labels) {
  if (pred.size() != gt.size()) {
    throw DimensionError("miou: " + std::to_string(pred.size()) + " predictions for " + std::to_string(gt.size()) +
                         " ground-truth maps");
  }
  ConfusionMatrix confusion(num_labels);
  for (std::size_t i = 0; i < pred.size(); ++i) confusion.add(pred[i], gt[i]);
  return IoUReport::from_confusion(confusion);
}

}  // namespace promptseed
