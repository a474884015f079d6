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

#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

namespace promptseed::testing {

Eigen::MatrixXd random_matrix(int rows, int cols, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = u(rng);
  return m;
}

Eigen::VectorXd random_unit(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = g(rng);
  return v.normalized();
}

Eigen::MatrixXd central_gradient(const std::function<double(const Eigen::MatrixXd&)>& f, const Eigen::MatrixXd& x,
                                 double h) {
  Eigen::MatrixXd g(x.rows(), x.cols());
  Eigen::MatrixXd probe = x;
  for (Eigen::Index r = 0; r < x.rows(); ++r)
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      probe(r, c) = x(r, c) + h;
      const double up = f(probe);
      probe(r, c) = x(r, c) - h;
      const double down = f(probe);
      probe(r, c) = x(r, c);
      g(r, c) = (up - down) / (2.0 * h);
    }
  return g;
}

double relative_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const double scale = std::max(a.norm(), b.norm());
  return scale == 0.0 ? 0.0 : (a - b).norm() / scale;
}

Eigen::MatrixXd random_attention(int n, std::mt19937_64& rng) {
  Eigen::MatrixXd a = random_matrix(n, n, rng, 0.0, 1.0);
  for (int r = 0; r < n; ++r) a.row(r) /= a.row(r).sum();
  return a;
}

Eigen::VectorXd direct_softmax(const Eigen::VectorXd& f, const Eigen::MatrixXd& text, double tau) {
  Eigen::VectorXd e(text.rows());
  for (Eigen::Index j = 0; j < text.rows(); ++j) e(j) = std::exp(text.row(j).dot(f) / tau);
  return e / e.sum();
}

double softmax_rest(const Eigen::VectorXd& f, const Eigen::MatrixXd& text, double tau, int c) {
  const double zc = text.row(c).dot(f) / tau;
  double rest = 0.0;
  for (Eigen::Index j = 0; j < text.rows(); ++j)
    if (j != c) rest += std::exp(text.row(j).dot(f) / tau - zc);
  return rest / (1.0 + rest);
}

Eigen::MatrixXd dense_refine(const Eigen::MatrixXd& map, const Eigen::MatrixXd& att, int t, const Eigen::MatrixXd& box) {
  const int n = static_cast<int>(att.rows());
  Eigen::MatrixXd a(n, n);
  for (int i = 0; i < n; ++i) {
    double row = 0.0;
    for (int j = 0; j < n; ++j) row += 0.5 * (att(i, j) + att(j, i));
    for (int j = 0; j < n; ++j) a(i, j) = 0.5 * (att(i, j) + att(j, i)) / row;
  }
  std::vector<double> v(n);
  for (int p = 0; p < n; ++p) v[p] = map(p / map.cols(), p % map.cols());
  for (int step = 0; step < t; ++step) {
    std::vector<double> next(n, 0.0);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) next[i] += a(i, j) * v[j];
    v = next;
  }
  Eigen::MatrixXd out(map.rows(), map.cols());
  for (int p = 0; p < n; ++p) out(p / map.cols(), p % map.cols()) = box(p / map.cols(), p % map.cols()) * v[p];
  return out;
}

double mcl_reference(const Eigen::VectorXd& y, const std::vector<int>& present) {
  double total = 0.0;
  for (int c : present) {
    double denom = std::exp(y(c));
    for (int n = 0; n < y.size(); ++n)
      if (std::find(present.begin(), present.end(), n) == present.end()) denom += std::exp(y(n));
    total += -std::log(std::exp(y(c)) / denom);
  }
  return total / static_cast<double>(present.size());
}

double cal_reference(const SeedMap& coarse, const std::vector<Eigen::MatrixXd>& maps, const std::vector<int>& present,
                     const std::vector<double>& maxima) {
  double total = 0.0;
  for (std::size_t k = 0; k < present.size(); ++k) {
    const int value = present[k] + 1;
    bool any = false;
    for (auto v : coarse.labels) any = any || v == value;
    for (int y = 0; y < coarse.height; ++y)
      for (int x = 0; x < coarse.width; ++x) {
        if (coarse.at(y, x) == value) {
          if (any) total += std::abs(maxima[k] - maps[k](y, x));
        } else {
          total += std::abs(maps[k](y, x));
        }
      }
  }
  return total / (present.size() * coarse.height * coarse.width);
}

std::vector<double> fg_maxima(const SeedMap& coarse, const std::vector<Eigen::MatrixXd>& maps,
                              const std::vector<int>& present) {
  std::vector<double> out;
  for (std::size_t k = 0; k < present.size(); ++k) {
    double best = 0.0;
    for (int y = 0; y < coarse.height; ++y)
      for (int x = 0; x < coarse.width; ++x)
        best = std::max(best, coarse.at(y, x) == present[k] + 1 ? maps[k](y, x) : 0.0);
    out.push_back(best);
  }
  return out;
}

SeedMap random_seed(int h, int w, int labels, std::mt19937_64& rng) {
  SeedMap s(h, w);
  std::uniform_int_distribution<int> d(0, labels);
  for (auto& v : s.labels) v = static_cast<std::uint8_t>(d(rng));
  return s;
}

BinaryMask random_shape(int height, int width, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> ys(0, height - 1), xs(0, width - 1);
  BinaryMask m(height, width);
  int y0 = ys(rng), y1 = ys(rng), x0 = xs(rng), x1 = xs(rng);
  if (y0 > y1) std::swap(y0, y1);
  if (x0 > x1) std::swap(x0, x1);
  const bool ellipse = std::uniform_int_distribution<int>(0, 1)(rng) == 1;
  const double cy = 0.5 * (y0 + y1), cx = 0.5 * (x0 + x1);
  const double ry = 0.5 * (y1 - y0) + 0.5, rx = 0.5 * (x1 - x0) + 0.5;
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      if (ellipse) {
        const double dy = (y - cy) / ry, dx = (x - cx) / rx;
        if (dy * dy + dx * dx > 1.0) continue;
      }
      m.at(y, x) = 1;
    }
  m.at(ys(rng) % (y1 - y0 + 1) + y0, xs(rng) % (x1 - x0 + 1) + x0) = 1;
  return m;
}

std::vector<MaskEntry> random_mask_set(int height, int width, int max_masks, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> count(0, max_masks);
  std::uniform_int_distribution<int> kind(0, 9);
  std::uniform_int_distribution<int> level(0, 2);
  std::uniform_real_distribution<double> conf(0.6, 1.0);
  const double boundary[] = {0.70, 0.88, 1.0, 0.95};
  const int n = count(rng);
  std::vector<MaskEntry> out;
  for (int i = 0; i < n; ++i) {
    BinaryMask m;
    const int k = kind(rng);
    if (out.empty() || k < 4) {
      m = random_shape(height, width, rng);
    } else if (k < 7) {
      // Near duplicate: an earlier mask shifted by at most one pixel.
      const BinaryMask& src = out[std::uniform_int_distribution<std::size_t>(0, out.size() - 1)(rng)].mask;
      const int dy = std::uniform_int_distribution<int>(-1, 1)(rng);
      const int dx = std::uniform_int_distribution<int>(-1, 1)(rng);
      m = BinaryMask(height, width);
      for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
          const int sy = y - dy, sx = x - dx;
          if (sy >= 0 && sy < height && sx >= 0 && sx < width) m.at(y, x) = src.at(sy, sx);
        }
    } else {
      // Sub-region: an earlier mask cut by a random box.
      const BinaryMask& src = out[std::uniform_int_distribution<std::size_t>(0, out.size() - 1)(rng)].mask;
      const BinaryMask box = random_shape(height, width, rng);
      m = BinaryMask(height, width);
      for (std::size_t p = 0; p < m.bits.size(); ++p) m.bits[p] = src.bits[p] & box.bits[p];
    }
    if (m.area() == 0) m = random_shape(height, width, rng);
    const double c = kind(rng) < 2 ? boundary[kind(rng) % 4] : conf(rng);
    out.push_back(MaskEntry::make(std::move(m), static_cast<MaskLevel>(level(rng)), c));
  }
  return out;
}

namespace {

std::size_t count_pixels(const BinaryMask& m) {
  std::size_t n = 0;
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) n += m.at(y, x) ? 1 : 0;
  return n;
}

double pixel_iou(const BinaryMask& a, const BinaryMask& b) {
  std::size_t inter = 0, uni = 0;
  for (int y = 0; y < a.height; ++y)
    for (int x = 0; x < a.width; ++x) {
      inter += (a.at(y, x) && b.at(y, x)) ? 1 : 0;
      uni += (a.at(y, x) || b.at(y, x)) ? 1 : 0;
    }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace

BruteForceSeeds brute_force_seeds(const std::vector<MaskEntry>& masks, int height, int width,
                                  const std::vector<int>& class_ids, const std::vector<Eigen::MatrixXd>& maps,
                                  const QuasiSuperpixelConfig& config, double alpha) {
  BruteForceSeeds out;
  std::vector<std::size_t> gated;
  for (std::size_t i = 0; i < masks.size(); ++i) {
    const double floor = masks[i].level == MaskLevel::whole ? config.t_m_whole : config.t_m_other;
    if (masks[i].confidence >= floor) gated.push_back(i);
  }
  std::sort(gated.begin(), gated.end(), [&](std::size_t a, std::size_t b) {
    return std::make_tuple(-static_cast<int>(masks[a].level), -masks[a].confidence, a) <
           std::make_tuple(-static_cast<int>(masks[b].level), -masks[b].confidence, b);
  });

  std::vector<std::size_t> survivors;
  for (std::size_t i : gated) {
    bool drop = false;
    for (std::size_t j : survivors) drop = drop || pixel_iou(masks[i].mask, masks[j].mask) >= config.nms_iou;
    if (!drop) survivors.push_back(i);
  }

  for (std::size_t i : survivors) {
    std::size_t covered = 0;
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        if (!masks[i].mask.at(y, x)) continue;
        bool hit = false;
        for (std::size_t j : out.admitted) hit = hit || masks[j].mask.at(y, x);
        covered += hit ? 1 : 0;
      }
    const double ratio = static_cast<double>(covered) / static_cast<double>(count_pixels(masks[i].mask));
    if (ratio < config.t_r) out.admitted.push_back(i);
  }

  // Superpixel means per class, then min-max across superpixels.
  const std::size_t n = out.admitted.size();
  std::vector<int> order(class_ids.size());
  for (std::size_t c = 0; c < order.size(); ++c) order[c] = static_cast<int>(c);
  std::sort(order.begin(), order.end(), [&](int a, int b) { return class_ids[a] < class_ids[b]; });
  std::vector<std::vector<double>> norm(order.size(), std::vector<double>(n, 0.0));
  for (std::size_t k = 0; k < order.size(); ++k) {
    const Eigen::MatrixXd& map = maps[order[k]];
    std::vector<double> raw(n);
    for (std::size_t i = 0; i < n; ++i) {
      const BinaryMask& m = masks[out.admitted[i]].mask;
      double sum = 0.0;
      std::size_t cnt = 0;
      for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
          if (m.at(y, x)) {
            sum += map(y, x);
            ++cnt;
          }
      raw[i] = sum / static_cast<double>(cnt);
    }
    if (n == 0) continue;
    const double lo = *std::min_element(raw.begin(), raw.end());
    const double hi = *std::max_element(raw.begin(), raw.end());
    for (std::size_t i = 0; i < n; ++i) norm[k][i] = hi > lo ? (raw[i] - lo) / (hi - lo) : 0.0;
  }
  for (std::size_t i = 0; i < n; ++i) {
    double best_fg = 0.0;
    for (std::size_t k = 0; k < order.size(); ++k) best_fg = std::max(best_fg, norm[k][i]);
    int label = kBackgroundLabel;
    double score = std::pow(1.0 - best_fg, alpha);
    for (std::size_t k = 0; k < order.size(); ++k)
      if (norm[k][i] > score) {
        score = norm[k][i];
        label = class_ids[order[k]];
      }
    out.labels.push_back(label);
    out.scores.push_back(score);
  }

  out.seed = SeedMap(height, width);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      int winner = -1;
      for (std::size_t i = 0; i < n; ++i) {
        if (!masks[out.admitted[i]].mask.at(y, x)) continue;
        if (winner < 0) {
          winner = static_cast<int>(i);
          continue;
        }
        const auto li = masks[out.admitted[i]].level, lw = masks[out.admitted[winner]].level;
        if (li > lw || (li == lw && out.scores[i] > out.scores[winner])) winner = static_cast<int>(i);
      }
      if (winner >= 0 && out.labels[winner] != kBackgroundLabel) {
        out.seed.at(y, x) = static_cast<std::uint8_t>(out.labels[winner] + 1);
      }
    }
  return out;
}

PixelIoU pixel_count_iou(const std::vector<SeedMap>& pred, const std::vector<SeedMap>& gt, int num_labels) {
  PixelIoU out;
  double sum = 0.0;
  int counted = 0;
  for (int label = 0; label < num_labels; ++label) {
    std::uint64_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < pred.size(); ++i)
      for (int y = 0; y < gt[i].height; ++y)
        for (int x = 0; x < gt[i].width; ++x) {
          const bool p = pred[i].at(y, x) == label, g = gt[i].at(y, x) == label;
          inter += (p && g) ? 1 : 0;
          uni += (p || g) ? 1 : 0;
        }
    if (uni == 0) {
      out.per_class.push_back(std::nullopt);
      continue;
    }
    const double v = static_cast<double>(inter) / static_cast<double>(uni);
    out.per_class.push_back(v);
    sum += v;
    ++counted;
  }
  out.mean = counted == 0 ? 0.0 : sum / counted;
  return out;
}

double seed_miou(const std::vector<SeedMap>& pred, const std::vector<Sample>& samples, int num_labels) {
  std::vector<SeedMap> gt;
  for (const auto& s : samples) gt.push_back(*s.ground_truth);
  return pixel_count_iou(pred, gt, num_labels).mean;
}

TrainConfig toy_task_config() {
  TrainConfig cfg;
  cfg.epochs = 15;
  return cfg;
}

std::vector<Sample> toy_task_train() { return synth_samples(11, 24); }

std::vector<Sample> toy_task_heldout() { return synth_samples(99, 20); }

}  // namespace promptseed::testing
