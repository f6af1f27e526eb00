#include "specmask/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "specmask/rng.hpp"

namespace specmask {

Grid mask_diff_centered(const Mask& a, const Mask& b) {
  if (a.d != b.d) {
    throw std::invalid_argument("mask_diff_centered: sides differ: " + std::to_string(a.d) +
                                " vs " + std::to_string(b.d));
  }
  Grid diff(a.d);
  for (size_t i = 0; i < diff.v.size(); ++i) diff.v[i] = a.values[i] - b.values[i];
  return spectral::fftshift(diff);
}

namespace {

Grid mask_grid(const Mask& m) {
  Grid g(m.d);
  g.v = m.values;
  return g;
}

}  // namespace

std::vector<double> energy_difference(const Mask& m_i, const Mask& m_n,
                                      const spectral::BandSpec& bands) {
  if (m_i.d != m_n.d) {
    throw std::invalid_argument("energy_difference: sides differ: " + std::to_string(m_i.d) +
                                " vs " + std::to_string(m_n.d));
  }
  const std::vector<double> ei = spectral::band_energy(mask_grid(m_i), bands);
  const std::vector<double> en = spectral::band_energy(mask_grid(m_n), bands);
  std::vector<double> out(ei.size());
  for (size_t k = 0; k < ei.size(); ++k) out[k] = ei[k] - en[k];
  return out;
}

std::vector<double> exceed_fraction(const MaskSet& set_a, const MaskSet& set_b,
                                    const spectral::BandSpec& bands) {
  std::map<std::string, const MaskSetEntry*> by_id_b;
  for (const MaskSetEntry& e : set_b) by_id_b[e.image_id] = &e;

  std::string unpaired;
  std::vector<std::pair<const MaskSetEntry*, const MaskSetEntry*>> pairs;
  for (const MaskSetEntry& e : set_a) {
    auto it = by_id_b.find(e.image_id);
    if (it == by_id_b.end()) {
      unpaired += (unpaired.empty() ? "" : ", ") + ("a:" + e.image_id);
    } else {
      pairs.emplace_back(&e, it->second);
      by_id_b.erase(it);
    }
  }
  for (const auto& [id, entry] : by_id_b) {
    unpaired += (unpaired.empty() ? "" : ", ") + ("b:" + id);
  }
  if (!unpaired.empty()) {
    throw std::invalid_argument("exceed_fraction: unpaired image ids: " + unpaired);
  }
  if (pairs.empty()) throw std::invalid_argument("exceed_fraction: empty mask sets");

  std::vector<double> exceed(static_cast<size_t>(bands.K), 0.0);
  for (const auto& [ea, eb] : pairs) {
    const std::vector<double> xa = spectral::band_energy(mask_grid(ea->mask), bands);
    const std::vector<double> xb = spectral::band_energy(mask_grid(eb->mask), bands);
    for (size_t k = 0; k < exceed.size(); ++k) {
      if (xa[k] > xb[k]) exceed[k] += 1.0;  // strict: ties do not exceed
    }
  }
  for (double& f : exceed) f /= static_cast<double>(pairs.size());
  return exceed;
}

// ---- linear probe -------------------------------------------------------------

namespace {

struct ProbeModel {
  int C = 0;
  int D = 0;
  std::vector<double> W;  // C x D
  std::vector<double> b;  // C
  int iterations = 0;

  std::vector<double> scores(const std::vector<double>& x) const {
    std::vector<double> s(static_cast<size_t>(C));
    for (int c = 0; c < C; ++c) {
      double acc = b[static_cast<size_t>(c)];
      const double* wr = W.data() + static_cast<size_t>(c) * D;
      for (int f = 0; f < D; ++f) acc += wr[f] * x[static_cast<size_t>(f)];
      s[static_cast<size_t>(c)] = acc;
    }
    return s;
  }

  int predict(const std::vector<double>& x) const {
    const std::vector<double> s = scores(x);
    return static_cast<int>(std::max_element(s.begin(), s.end()) - s.begin());
  }
};

constexpr double kProbeReg = 1e-4;

/// Full-batch gradient descent on softmax cross entropy with l2 weight decay.
/// The step size is set from a Lipschitz bound of the loss, so it adapts to
/// a global rescaling of the features.
ProbeModel train_probe(const std::vector<const std::vector<double>*>& xs,
                       const std::vector<int>& ys, int C) {
  ProbeModel m;
  m.C = C;
  m.D = static_cast<int>(xs[0]->size());
  m.W.assign(static_cast<size_t>(C) * m.D, 0.0);
  m.b.assign(static_cast<size_t>(C), 0.0);
  const size_t N = xs.size();

  double max_norm2 = 0.0;
  for (const auto* x : xs) {
    double n2 = 0.0;
    for (double v : *x) n2 += v * v;
    max_norm2 = std::max(max_norm2, n2);
  }
  const double lipschitz = 0.5 * (max_norm2 + 1.0) + kProbeReg;
  const double lr = 1.0 / lipschitz;

  std::vector<double> gw(m.W.size());
  std::vector<double> gb(m.b.size());
  std::vector<double> p(static_cast<size_t>(C));
  double prev_loss = std::numeric_limits<double>::infinity();
  const int max_iters = 3000;
  for (int it = 0; it < max_iters; ++it) {
    std::fill(gw.begin(), gw.end(), 0.0);
    std::fill(gb.begin(), gb.end(), 0.0);
    double loss = 0.0;
    for (size_t n = 0; n < N; ++n) {
      const std::vector<double>& x = *xs[n];
      std::vector<double> s = m.scores(x);
      const double mx = *std::max_element(s.begin(), s.end());
      double denom = 0.0;
      for (int c = 0; c < C; ++c) denom += std::exp(s[static_cast<size_t>(c)] - mx);
      loss += std::log(denom) - (s[static_cast<size_t>(ys[n])] - mx);
      for (int c = 0; c < C; ++c) {
        p[static_cast<size_t>(c)] = std::exp(s[static_cast<size_t>(c)] - mx) / denom -
                                    (c == ys[n] ? 1.0 : 0.0);
      }
      for (int c = 0; c < C; ++c) {
        const double pc = p[static_cast<size_t>(c)];
        gb[static_cast<size_t>(c)] += pc;
        double* gwr = gw.data() + static_cast<size_t>(c) * m.D;
        for (int f = 0; f < m.D; ++f) gwr[f] += pc * x[static_cast<size_t>(f)];
      }
    }
    loss /= static_cast<double>(N);
    double reg_term = 0.0;
    for (double w : m.W) reg_term += w * w;
    loss += 0.5 * kProbeReg * reg_term;

    for (size_t i = 0; i < m.W.size(); ++i) {
      m.W[i] -= lr * (gw[i] / static_cast<double>(N) + kProbeReg * m.W[i]);
    }
    for (size_t i = 0; i < m.b.size(); ++i) m.b[i] -= lr * gb[i] / static_cast<double>(N);

    m.iterations = it + 1;
    if (std::abs(prev_loss - loss) < 1e-9 * std::max(1.0, std::abs(loss))) break;
    prev_loss = loss;
  }
  return m;
}

}  // namespace

ProbeResult linear_probe(const MaskSet& masks, bool shuffle_labels, uint64_t seed) {
  if (masks.size() < 5) throw std::invalid_argument("linear_probe: need at least 5 masks");
  int max_label = -1;
  for (const MaskSetEntry& e : masks) max_label = std::max(max_label, e.label);
  const int C = max_label + 1;
  std::vector<int> labels;
  labels.reserve(masks.size());
  for (const MaskSetEntry& e : masks) {
    if (e.label < 0) throw std::invalid_argument("linear_probe: mask without a class label");
    labels.push_back(e.label);
  }
  {
    std::vector<bool> present(static_cast<size_t>(C), false);
    for (int l : labels) present[static_cast<size_t>(l)] = true;
    int distinct = 0;
    for (bool b : present) distinct += b ? 1 : 0;
    if (distinct < 2) throw std::invalid_argument("linear_probe: needs at least 2 classes");
  }
  if (shuffle_labels) {
    Rng rng(derive_seed(seed, 0x54FFull));
    rng.shuffle(labels);
  }

  std::vector<size_t> order(masks.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng split_rng(derive_seed(seed, 0x5917ull));
  split_rng.shuffle(order);
  const size_t n_train = std::max<size_t>(1, masks.size() * 8 / 10);

  std::vector<const std::vector<double>*> train_x, test_x;
  std::vector<int> train_y, test_y;
  for (size_t i = 0; i < order.size(); ++i) {
    const size_t idx = order[i];
    if (i < n_train) {
      train_x.push_back(&masks[idx].mask.values);
      train_y.push_back(labels[idx]);
    } else {
      test_x.push_back(&masks[idx].mask.values);
      test_y.push_back(labels[idx]);
    }
  }
  if (test_x.empty()) throw std::invalid_argument("linear_probe: test split is empty");

  const ProbeModel model = train_probe(train_x, train_y, C);

  ProbeResult res;
  res.iterations = model.iterations;
  size_t hits = 0;
  for (size_t i = 0; i < train_x.size(); ++i) {
    if (model.predict(*train_x[i]) == train_y[i]) ++hits;
  }
  res.train_accuracy = double(hits) / double(train_x.size());

  std::vector<int> class_hits(static_cast<size_t>(C), 0), class_total(static_cast<size_t>(C), 0);
  hits = 0;
  for (size_t i = 0; i < test_x.size(); ++i) {
    const int pred = model.predict(*test_x[i]);
    class_total[static_cast<size_t>(test_y[i])]++;
    if (pred == test_y[i]) {
      ++hits;
      class_hits[static_cast<size_t>(test_y[i])]++;
    }
  }
  res.accuracy = double(hits) / double(test_x.size());
  res.per_class.resize(static_cast<size_t>(C), 0.0);
  for (int c = 0; c < C; ++c) {
    res.per_class[static_cast<size_t>(c)] =
        class_total[static_cast<size_t>(c)] > 0
            ? double(class_hits[static_cast<size_t>(c)]) / class_total[static_cast<size_t>(c)]
            : 0.0;
  }
  return res;
}

std::vector<ScatterPoint> pca_scatter(const MaskSet& masks, uint64_t seed) {
  if (masks.size() < 3) throw std::invalid_argument("pca_scatter: need at least 3 masks");
  int max_label = -1;
  for (const MaskSetEntry& e : masks) max_label = std::max(max_label, e.label);
  const int C = std::max(2, max_label + 1);

  std::vector<const std::vector<double>*> xs;
  std::vector<int> ys;
  for (const MaskSetEntry& e : masks) {
    xs.push_back(&e.mask.values);
    ys.push_back(std::max(0, e.label));
  }
  const ProbeModel model = train_probe(xs, ys, C);

  // Class-score vectors, centered.
  const size_t N = masks.size();
  std::vector<std::vector<double>> scores(N);
  std::vector<double> mean(static_cast<size_t>(C), 0.0);
  for (size_t n = 0; n < N; ++n) {
    scores[n] = model.scores(*xs[n]);
    for (int c = 0; c < C; ++c) mean[static_cast<size_t>(c)] += scores[n][static_cast<size_t>(c)];
  }
  for (double& v : mean) v /= static_cast<double>(N);
  for (auto& s : scores) {
    for (int c = 0; c < C; ++c) s[static_cast<size_t>(c)] -= mean[static_cast<size_t>(c)];
  }

  std::vector<double> cov(static_cast<size_t>(C) * C, 0.0);
  for (const auto& s : scores) {
    for (int i = 0; i < C; ++i) {
      for (int j = 0; j < C; ++j) {
        cov[static_cast<size_t>(i) * C + j] += s[static_cast<size_t>(i)] * s[static_cast<size_t>(j)];
      }
    }
  }
  for (double& v : cov) v /= static_cast<double>(N);

  Rng rng(derive_seed(seed, 0x9CA2ull));
  auto power_iter = [&](const std::vector<double>& a) {
    std::vector<double> v(static_cast<size_t>(C));
    for (double& x : v) x = rng.normal();
    for (int it = 0; it < 1000; ++it) {
      std::vector<double> next(static_cast<size_t>(C), 0.0);
      for (int i = 0; i < C; ++i) {
        for (int j = 0; j < C; ++j) {
          next[static_cast<size_t>(i)] += a[static_cast<size_t>(i) * C + j] * v[static_cast<size_t>(j)];
        }
      }
      double norm = 0.0;
      for (double x : next) norm += x * x;
      norm = std::sqrt(norm);
      if (norm < 1e-300) break;
      for (double& x : next) x /= norm;
      double delta = 0.0;
      for (int i = 0; i < C; ++i) delta += std::abs(next[static_cast<size_t>(i)] - v[static_cast<size_t>(i)]);
      v = next;
      if (delta < 1e-13) break;
    }
    // Deterministic sign: largest-magnitude component positive.
    int arg = 0;
    for (int i = 1; i < C; ++i) {
      if (std::abs(v[static_cast<size_t>(i)]) > std::abs(v[static_cast<size_t>(arg)])) arg = i;
    }
    if (v[static_cast<size_t>(arg)] < 0.0) {
      for (double& x : v) x = -x;
    }
    return v;
  };

  const std::vector<double> v1 = power_iter(cov);
  double lambda1 = 0.0;
  {
    std::vector<double> av(static_cast<size_t>(C), 0.0);
    for (int i = 0; i < C; ++i) {
      for (int j = 0; j < C; ++j) {
        av[static_cast<size_t>(i)] += cov[static_cast<size_t>(i) * C + j] * v1[static_cast<size_t>(j)];
      }
    }
    for (int i = 0; i < C; ++i) lambda1 += av[static_cast<size_t>(i)] * v1[static_cast<size_t>(i)];
  }
  std::vector<double> deflated = cov;
  for (int i = 0; i < C; ++i) {
    for (int j = 0; j < C; ++j) {
      deflated[static_cast<size_t>(i) * C + j] -=
          lambda1 * v1[static_cast<size_t>(i)] * v1[static_cast<size_t>(j)];
    }
  }
  const std::vector<double> v2 = power_iter(deflated);

  std::vector<ScatterPoint> points;
  points.reserve(N);
  for (size_t n = 0; n < N; ++n) {
    ScatterPoint pt;
    pt.label = masks[n].label;
    for (int c = 0; c < C; ++c) {
      pt.x += scores[n][static_cast<size_t>(c)] * v1[static_cast<size_t>(c)];
      pt.y += scores[n][static_cast<size_t>(c)] * v2[static_cast<size_t>(c)];
    }
    points.push_back(pt);
  }
  return points;
}

}  // namespace specmask
