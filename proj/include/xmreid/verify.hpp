// Copyright 2026 The xmreid Authors
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

// Self-verification suites: gradient checks against central finite
// differences, loss values against enumeration oracles, mined-comparison
// counters against closed forms, and retrieval metrics against a brute-force
// reference. Everything runs in 64-bit mode off a fixed seed, so a suite that
// passes once passes always for the same binary.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "xmreid/errors.hpp"
#include "xmreid/evaluation.hpp"
#include "xmreid/losses.hpp"
#include "xmreid/oracles.hpp"
#include "xmreid/rng.hpp"
#include "xmreid/tensor.hpp"

namespace xmreid {

enum class VerifySuite { grad, loss_oracle, counts, metrics, all };

inline std::string verify_suite_name(VerifySuite s) {
  switch (s) {
    case VerifySuite::grad: return "grad";
    case VerifySuite::loss_oracle: return "loss-oracle";
    case VerifySuite::counts: return "counts";
    case VerifySuite::metrics: return "metrics";
    default: return "all";
  }
}

inline VerifySuite parse_verify_suite(const std::string& s) {
  if (s == "grad") return VerifySuite::grad;
  if (s == "loss-oracle") return VerifySuite::loss_oracle;
  if (s == "counts") return VerifySuite::counts;
  if (s == "metrics") return VerifySuite::metrics;
  if (s == "all") return VerifySuite::all;
  throw ConfigError("unknown verify suite '" + s +
                    "' (expected grad, loss-oracle, counts, metrics or all)");
}

struct VerifyOptions {
  // Self-test fixture: shifts the hinge margin fed to the production triplet
  // losses away from the margin the oracles use, so the loss-oracle suite
  // must report mismatches. Zero disables the fixture.
  double hinge_margin_shift = 0.0;
  std::uint64_t seed = 20260819;
};

struct SuiteCheck {
  std::string line;
  bool passed = false;
};

struct SuiteReport {
  std::string name;
  std::vector<SuiteCheck> checks;

  int failures() const {
    int n = 0;
    for (const SuiteCheck& c : checks) n += c.passed ? 0 : 1;
    return n;
  }
  bool passed() const { return failures() == 0; }
};

namespace detail {

inline std::string fmt_g(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// gradient probe: finite differences vs tape backward on one random instance

/// Builds a scalar from the leaves via `body` plus a fixed random projection,
/// then compares the tape gradient of every leaf against central finite
/// differences over the concatenation of all leaf values.
class GradProbe {
 public:
  using Body =
      std::function<Tensor<double>(Tape<double>&, const std::vector<Tensor<double>>&)>;

  GradProbe(std::vector<Shape> shapes, Body body)
      : shapes_(std::move(shapes)), body_(std::move(body)) {}

  double max_rel_err(const std::vector<double>& x0, Rng& projection_rng) {
    projection_.reset();
    projection_rng_ = &projection_rng;
    std::vector<double> analytic;
    run(x0, &analytic);
    auto f = [this](const std::vector<double>& x) { return run(x, nullptr); };
    return oracles::max_grad_rel_err(f, x0, analytic);
  }

  Eigen::Index total_size() const {
    Eigen::Index n = 0;
    for (const Shape& s : shapes_) n += shape_size(s);
    return n;
  }

 private:
  double run(const std::vector<double>& x, std::vector<double>* grad_out) {
    Tape<double> tape;
    std::vector<Tensor<double>> leaves;
    Eigen::Index offset = 0;
    for (const Shape& s : shapes_) {
      const Eigen::Index n = shape_size(s);
      ArrayX<double> v(n);
      for (Eigen::Index i = 0; i < n; ++i) v[i] = x[static_cast<std::size_t>(offset + i)];
      leaves.push_back(tape.leaf(s, std::move(v), grad_out != nullptr));
      offset += n;
    }
    Tensor<double> out = body_(tape, leaves);
    if (!projection_) {
      projection_.emplace(out.size());
      for (Eigen::Index i = 0; i < out.size(); ++i)
        (*projection_)[i] = projection_rng_->normal();
    }
    Tensor<double> w = tape.constant({out.rows(), out.cols()}, *projection_);
    Tensor<double> scalar = reduce_sum(mul(out, w));
    if (grad_out) {
      tape.backward(scalar);
      grad_out->clear();
      for (const Tensor<double>& leaf : leaves) {
        const ArrayX<double> g = leaf.grad();
        grad_out->insert(grad_out->end(), g.data(), g.data() + g.size());
      }
    }
    return scalar.item();
  }

  std::vector<Shape> shapes_;
  Body body_;
  std::optional<ArrayX<double>> projection_;
  Rng* projection_rng_ = nullptr;
};

struct GradCase {
  std::string name;
  // Returns the instance's worst gradient relative error.
  std::function<double(Rng&)> instance;
};

inline std::vector<double> sample_vec(Rng& rng, std::size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

/// Signed values kept away from zero, so kinked ops (relu, clamp floors)
/// never sit within a finite-difference step of their switch point.
inline std::vector<double> sample_vec_off_zero(Rng& rng, std::size_t n, double margin) {
  std::vector<double> v(n);
  for (double& x : v) {
    const double m = rng.uniform(margin, 1.5);
    x = rng.uniform() < 0.5 ? -m : m;
  }
  return v;
}

/// Values whose pairwise gaps exceed `gap`, so max-type ops cannot change
/// their argmax under a finite-difference step.
inline std::vector<double> sample_vec_distinct(Rng& rng, std::size_t n, double gap) {
  for (int attempt = 0; attempt < 200; ++attempt) {
    std::vector<double> v = sample_vec(rng, n, -1.0, 1.0);
    std::vector<double> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    bool ok = true;
    for (std::size_t i = 1; i < sorted.size(); ++i)
      if (sorted[i] - sorted[i - 1] < gap) ok = false;
    if (ok) return v;
  }
  throw NumericError("sample_vec_distinct: could not separate values");
}

// ---------------------------------------------------------------------------
// random 2PK batches and mining-stability guards

struct BatchDraw {
  oracles::MatD features;
  std::vector<int> labels;
  std::vector<Modality> modalities;
};

inline BatchDraw draw_batch(Rng& rng, int P, int K, Eigen::Index dim) {
  BatchDraw b;
  b.features.resize(2 * P * K, dim);
  for (Eigen::Index r = 0; r < b.features.rows(); ++r)
    for (Eigen::Index c = 0; c < dim; ++c) b.features(r, c) = rng.normal();
  for (int i = 0; i < P; ++i)
    for (int m = 0; m < 2; ++m)
      for (int k = 0; k < K; ++k) {
        b.labels.push_back(i * 3 + 1);
        b.modalities.push_back(static_cast<Modality>(m));
      }
  return b;
}

/// True when every anchor's mined extreme is separated from the runner-up
/// and every hinge sits away from its clamp, so finite differences cannot
/// cross a mining or clamp switch.
inline bool bh_grad_is_stable(const oracles::MatD& f, const std::vector<int>& labels,
                              double rho, double gap) {
  const Eigen::Index B = f.rows();
  for (Eigen::Index a = 0; a < B; ++a) {
    std::vector<double> pos, neg;
    for (Eigen::Index b = 0; b < B; ++b) {
      if (b == a) continue;
      const double d = oracles::euclid(f, a, b);
      (labels[static_cast<std::size_t>(b)] == labels[static_cast<std::size_t>(a)] ? pos : neg)
          .push_back(d);
    }
    std::sort(pos.begin(), pos.end());
    std::sort(neg.begin(), neg.end());
    if (pos.size() >= 2 && pos[pos.size() - 1] - pos[pos.size() - 2] < gap) return false;
    if (neg.size() >= 2 && neg[1] - neg[0] < gap) return false;
    if (std::abs(pos.back() - neg.front() + rho) < gap) return false;
  }
  return true;
}

inline void center_rows(const BatchDraw& b, oracles::MatD& all) {
  std::vector<int> ids;
  oracles::MatD vis, th;
  oracles::brute_modality_centers(b.features, b.labels, b.modalities, ids, vis, th);
  const Eigen::Index P = vis.rows();
  all.resize(2 * P, vis.cols());
  for (Eigen::Index i = 0; i < P; ++i) {
    all.row(2 * i) = vis.row(i);
    all.row(2 * i + 1) = th.row(i);
  }
}

inline bool hc_grad_is_stable(const BatchDraw& b, double rho, double gap) {
  oracles::MatD all;
  center_rows(b, all);
  const Eigen::Index rows = all.rows();
  for (Eigen::Index a = 0; a < rows; ++a) {
    std::vector<double> neg;
    for (Eigen::Index c = 0; c < rows; ++c)
      if (c / 2 != a / 2) neg.push_back((all.row(a) - all.row(c)).norm());
    std::sort(neg.begin(), neg.end());
    if (neg.size() >= 2 && neg[1] - neg[0] < gap) return false;
    const double dpos = (all.row(a) - all.row(a ^ 1)).norm();
    if (std::abs(dpos - neg.front() + rho) < gap) return false;
  }
  return true;
}

inline std::vector<double> flatten(const oracles::MatD& m) {
  std::vector<double> x(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      x[static_cast<std::size_t>(r * m.cols() + c)] = m(r, c);
  return x;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// suite: gradient checks

inline SuiteReport run_gradient_suite(const VerifyOptions& options = {}) {
  using detail::GradProbe;
  const int instances = 20;
  const double tol = 1e-5;
  std::vector<detail::GradCase> cases;

  auto simple = [](std::vector<Shape> shapes, GradProbe::Body body, double lo, double hi) {
    return [shapes = std::move(shapes), body = std::move(body), lo,
            hi](Rng& rng) mutable -> double {
      GradProbe probe(shapes, body);
      const std::vector<double> x0 =
          detail::sample_vec(rng, static_cast<std::size_t>(probe.total_size()), lo, hi);
      return probe.max_rel_err(x0, rng);
    };
  };

  cases.push_back({"add", simple({{3, 4}, {3, 4}},
                                 [](Tape<double>&, const std::vector<Tensor<double>>& l) {
                                   return add(l[0], l[1]);
                                 },
                                 -1, 1)});
  cases.push_back({"sub", simple({{3, 4}, {3, 4}},
                                 [](Tape<double>&, const std::vector<Tensor<double>>& l) {
                                   return sub(l[0], l[1]);
                                 },
                                 -1, 1)});
  cases.push_back({"mul", simple({{3, 4}, {3, 4}},
                                 [](Tape<double>&, const std::vector<Tensor<double>>& l) {
                                   return mul(l[0], l[1]);
                                 },
                                 -1, 1)});
  cases.push_back({"scale", simple({{3, 4}},
                                   [](Tape<double>&, const std::vector<Tensor<double>>& l) {
                                     return scale(l[0], 1.7);
                                   },
                                   -1, 1)});
  cases.push_back({"matmul", simple({{3, 4}, {4, 2}},
                                    [](Tape<double>&, const std::vector<Tensor<double>>& l) {
                                      return matmul(l[0], l[1]);
                                    },
                                    -1, 1)});
  cases.push_back({"exp", simple({{3, 4}},
                                 [](Tape<double>&, const std::vector<Tensor<double>>& l) {
                                   return exp(l[0]);
                                 },
                                 -1, 1)});
  cases.push_back({"log", simple({{3, 4}},
                                 [](Tape<double>&, const std::vector<Tensor<double>>& l) {
                                   return log(l[0]);
                                 },
                                 0.3, 2)});
  cases.push_back(
      {"pow_scalar", simple({{3, 4}},
                            [](Tape<double>&, const std::vector<Tensor<double>>& l) {
                              return pow_scalar(l[0], 1.7);
                            },
                            0.3, 2)});
  cases.push_back(
      {"log_softmax", simple({{3, 5}},
                             [](Tape<double>&, const std::vector<Tensor<double>>& l) {
                               return log_softmax(l[0]);
                             },
                             -2, 2)});
  cases.push_back(
      {"reduce_sum", simple({{3, 4}},
                            [](Tape<double>&, const std::vector<Tensor<double>>& l) {
                              return reduce_sum(l[0], Axis::cols);
                            },
                            -1, 1)});
  cases.push_back(
      {"reduce_mean", simple({{3, 4}},
                             [](Tape<double>&, const std::vector<Tensor<double>>& l) {
                               return reduce_mean(l[0], Axis::rows);
                             },
                             -1, 1)});
  cases.push_back(
      {"segment_mean", simple({{6, 3}},
                              [](Tape<double>&, const std::vector<Tensor<double>>& l) {
                                return segment_mean(l[0], {2, 3, 1});
                              },
                              -1, 1)});
  cases.push_back(
      {"gather_rows", simple({{5, 3}},
                             [](Tape<double>&, const std::vector<Tensor<double>>& l) {
                               return gather_rows(l[0], {4, 0, 2, 0});
                             },
                             -1, 1)});
  cases.push_back(
      {"concat_rows", simple({{2, 3}, {3, 3}},
                             [](Tape<double>&, const std::vector<Tensor<double>>& l) {
                               return concat_rows<double>({l[0], l[1]});
                             },
                             -1, 1)});
  cases.push_back(
      {"concat_cols", simple({{3, 2}, {3, 3}},
                             [](Tape<double>&, const std::vector<Tensor<double>>& l) {
                               return concat_cols<double>({l[0], l[1]});
                             },
                             -1, 1)});

  cases.push_back({"relu", [](Rng& rng) {
                     GradProbe probe({{3, 4}},
                                     [](Tape<double>&, const std::vector<Tensor<double>>& l) {
                                       return relu(l[0]);
                                     });
                     return probe.max_rel_err(detail::sample_vec_off_zero(rng, 12, 0.05), rng);
                   }});
  cases.push_back({"clamp_min", [](Rng& rng) {
                     GradProbe probe({{3, 4}},
                                     [](Tape<double>&, const std::vector<Tensor<double>>& l) {
                                       return clamp_min(l[0], 0.1);
                                     });
                     std::vector<double> x = detail::sample_vec_off_zero(rng, 12, 0.05);
                     for (double& v : x) v += 0.1;
                     return probe.max_rel_err(x, rng);
                   }});
  cases.push_back({"reduce_max", [](Rng& rng) {
                     GradProbe probe({{3, 4}},
                                     [](Tape<double>&, const std::vector<Tensor<double>>& l) {
                                       return reduce_max(l[0], Axis::cols);
                                     });
                     return probe.max_rel_err(detail::sample_vec_distinct(rng, 12, 5e-3), rng);
                   }});
  cases.push_back({"segment_max", [](Rng& rng) {
                     GradProbe probe({{6, 3}},
                                     [](Tape<double>&, const std::vector<Tensor<double>>& l) {
                                       return segment_max(l[0], {3, 3});
                                     });
                     return probe.max_rel_err(detail::sample_vec_distinct(rng, 18, 5e-3), rng);
                   }});
  cases.push_back(
      {"batch_norm", [](Rng& rng) {
         GradProbe probe({{6, 3}, {1, 3}, {1, 3}},
                         [](Tape<double>&, const std::vector<Tensor<double>>& l) {
                           BatchNormState<double> state = BatchNormState<double>::identity(3);
                           return batch_norm(l[0], l[1], l[2], state, RunMode::train);
                         });
         std::vector<double> x = detail::sample_vec(rng, 24, -1, 1);
         for (std::size_t i = 18; i < 21; ++i) x[i] = rng.uniform(0.5, 1.5);  // gamma
         return probe.max_rel_err(x, rng);
       }});
  cases.push_back({"gem_segments", [](Rng& rng) {
                     GradProbe probe({{6, 3}, {1, 1}},
                                     [](Tape<double>&, const std::vector<Tensor<double>>& l) {
                                       return gem_segments(l[0], l[1], 3);
                                     });
                     std::vector<double> x = detail::sample_vec(rng, 19, 0.2, 2.0);
                     x[18] = rng.uniform(1.5, 4.0);  // exponent
                     return probe.max_rel_err(x, rng);
                   }});

  const double rho = 0.3;
  cases.push_back({"batch_hard_triplet", [rho](Rng& rng) {
                     detail::BatchDraw b;
                     do {
                       b = detail::draw_batch(rng, 3, 2, 3);
                     } while (!detail::bh_grad_is_stable(b.features, b.labels, rho, 5e-3));
                     GradProbe probe(
                         {{b.features.rows(), b.features.cols()}},
                         [&b, rho](Tape<double>&, const std::vector<Tensor<double>>& l) {
                           return batch_hard_triplet(l[0], b.labels, rho);
                         });
                     return probe.max_rel_err(detail::flatten(b.features), rng);
                   }});
  cases.push_back({"hetero_center_triplet", [rho](Rng& rng) {
                     detail::BatchDraw b;
                     do {
                       b = detail::draw_batch(rng, 3, 2, 3);
                     } while (!detail::hc_grad_is_stable(b, rho, 5e-3));
                     GradProbe probe(
                         {{b.features.rows(), b.features.cols()}},
                         [&b, rho](Tape<double>&, const std::vector<Tensor<double>>& l) {
                           return hetero_center_triplet(
                               modality_centers(l[0], b.labels, b.modalities), rho);
                         });
                     return probe.max_rel_err(detail::flatten(b.features), rng);
                   }});
  cases.push_back({"hetero_center_loss", [](Rng& rng) {
                     detail::BatchDraw b = detail::draw_batch(rng, 3, 2, 3);
                     GradProbe probe(
                         {{b.features.rows(), b.features.cols()}},
                         [&b](Tape<double>&, const std::vector<Tensor<double>>& l) {
                           return hetero_center_loss(
                               modality_centers(l[0], b.labels, b.modalities));
                         });
                     return probe.max_rel_err(detail::flatten(b.features), rng);
                   }});
  cases.push_back({"learned_center_loss", [](Rng& rng) {
                     detail::BatchDraw b = detail::draw_batch(rng, 3, 2, 3);
                     const std::vector<int> center_labels = {1, 4, 7};
                     GradProbe probe(
                         {{b.features.rows(), b.features.cols()}, {3, 3}},
                         [&b, &center_labels](Tape<double>&,
                                              const std::vector<Tensor<double>>& l) {
                           return learned_center_loss(l[0], b.labels, b.modalities, l[1],
                                                      center_labels);
                         });
                     std::vector<double> x = detail::flatten(b.features);
                     const std::vector<double> c = detail::sample_vec(rng, 9, -1, 1);
                     x.insert(x.end(), c.begin(), c.end());
                     return probe.max_rel_err(x, rng);
                   }});
  cases.push_back({"id_loss_label_smooth", [](Rng& rng) {
                     const std::vector<int> labels = {0, 3, 1, 2};
                     GradProbe probe({{4, 4}},
                                     [&labels](Tape<double>&,
                                               const std::vector<Tensor<double>>& l) {
                                       return id_loss_label_smooth(l[0], labels, 0.1);
                                     });
                     return probe.max_rel_err(detail::sample_vec(rng, 16, -2, 2), rng);
                   }});
  cases.push_back(
      {"overall_loss", [rho](Rng& rng) {
         detail::BatchDraw b;
         LossConfig<double> cfg;
         cfg.num_classes = 4;
         auto parts_stable = [&](const detail::BatchDraw& d) {
           detail::BatchDraw half = d;
           const Eigen::Index D = d.features.cols() / 2;
           half.features = d.features.leftCols(D);
           if (!detail::hc_grad_is_stable(half, rho, 5e-3)) return false;
           half.features = d.features.rightCols(D);
           return detail::hc_grad_is_stable(half, rho, 5e-3) &&
                  detail::hc_grad_is_stable(d, rho, 5e-3);
         };
         do {
           b = detail::draw_batch(rng, 3, 2, 4);
         } while (!parts_stable(b));
         std::vector<int> labels01;
         for (int l : b.labels) labels01.push_back(l / 3);  // draw_batch labels are 3i+1
         const Eigen::Index B = b.features.rows();
         GradProbe probe(
             {{B, 2}, {B, 2}, {B, 4}, {B, 4}},
             [&](Tape<double>&, const std::vector<Tensor<double>>& l) {
               Tensor<double> concatenated = concat_cols<double>({l[0], l[1]});
               return overall_loss<double>({l[2], l[3]}, {l[0], l[1]}, concatenated,
                                           labels01, b.modalities, cfg);
             });
         std::vector<double> x = detail::flatten(b.features.leftCols(2));
         const std::vector<double> right = detail::flatten(b.features.rightCols(2));
         x.insert(x.end(), right.begin(), right.end());
         const std::vector<double> logits = detail::sample_vec(rng, 2 * 4 * std::size_t(B), -2, 2);
         x.insert(x.end(), logits.begin(), logits.end());
         return probe.max_rel_err(x, rng);
       }});

  SuiteReport report{"grad", {}};
  Rng rng(derive_seed(options.seed, 0x67726164ull));
  for (detail::GradCase& c : cases) {
    double worst = 0.0;
    for (int i = 0; i < instances; ++i) worst = std::max(worst, c.instance(rng));
    SuiteCheck check;
    check.passed = worst <= tol;
    check.line = c.name + ": worst grad rel err " + detail::fmt_g(worst) + " over " +
                 std::to_string(instances) + " instances (tol " + detail::fmt_g(tol) + ")";
    report.checks.push_back(std::move(check));
  }
  return report;
}

// ---------------------------------------------------------------------------
// suite: loss values vs enumeration oracles

inline SuiteReport run_loss_oracle_suite(const VerifyOptions& options = {}) {
  SuiteReport report{"loss-oracle", {}};
  Rng rng(derive_seed(options.seed, 0x6f7261636cull));
  const double rho = 0.3;
  const double rho_prod = rho + options.hinge_margin_shift;
  const double tol = 1e-5;
  const int batches = 100;

  int bh_ok = 0, hc_ok = 0;
  double bh_worst = 0.0, hc_worst = 0.0;
  for (int i = 0; i < batches; ++i) {
    const int P = 2 + static_cast<int>(rng.below(7));  // 2..8
    const int K = 2 + static_cast<int>(rng.below(5));  // 2..6
    detail::BatchDraw b = detail::draw_batch(rng, P, K, 4);

    Tape<double> tape;
    Tensor<double> f = tape.constant({b.features.rows(), b.features.cols()},
                                     Eigen::Map<const ArrayX<double>>(
                                         b.features.data(), b.features.size()));
    const double bh = batch_hard_triplet(f, b.labels, rho_prod).item();
    const double bh_ref = oracles::brute_batch_hard_triplet(b.features, b.labels, rho);
    bh_worst = std::max(bh_worst, std::abs(bh - bh_ref));
    bh_ok += std::abs(bh - bh_ref) <= tol ? 1 : 0;

    const double hc =
        hetero_center_triplet(modality_centers(f, b.labels, b.modalities), rho_prod).item();
    oracles::MatD all;
    detail::center_rows(b, all);
    oracles::MatD vis(all.rows() / 2, all.cols()), th(all.rows() / 2, all.cols());
    for (Eigen::Index r = 0; r < all.rows() / 2; ++r) {
      vis.row(r) = all.row(2 * r);
      th.row(r) = all.row(2 * r + 1);
    }
    const double hc_ref = oracles::brute_hetero_center_triplet(vis, th, rho);
    hc_worst = std::max(hc_worst, std::abs(hc - hc_ref));
    hc_ok += std::abs(hc - hc_ref) <= tol ? 1 : 0;
  }
  report.checks.push_back(
      {"batch-hard triplet vs enumeration: " + std::to_string(bh_ok) + "/" +
           std::to_string(batches) + " batches within " + detail::fmt_g(tol) + " (worst " +
           detail::fmt_g(bh_worst) + ")",
       bh_ok == batches});
  report.checks.push_back(
      {"hetero-center triplet vs enumeration: " + std::to_string(hc_ok) + "/" +
           std::to_string(batches) + " batches within " + detail::fmt_g(tol) + " (worst " +
           detail::fmt_g(hc_worst) + ")",
       hc_ok == batches});

  // Hand instance: 1-d centers 0 / 0.4 (identity 1) and 0.5 / 0.9 (identity
  // 2) at margin 0.3 sum to 1.6 across the four center anchors.
  {
    Tape<double> tape;
    ArrayX<double> vals(4);
    vals << 0.0, 0.4, 0.5, 0.9;
    Tensor<double> f = tape.constant({4, 1}, vals);
    const double loss =
        hetero_center_triplet(
            modality_centers(f, {1, 1, 2, 2},
                             {Modality::visible, Modality::thermal, Modality::visible,
                              Modality::thermal}),
            rho_prod)
            .item();
    report.checks.push_back(
        {"hand instance (centers 0, 0.4 | 0.5, 0.9; margin 0.3) = " + detail::fmt_g(loss) +
             ", expected 1.6",
         std::abs(loss - 1.6) <= 1e-9});
  }
  return report;
}

// ---------------------------------------------------------------------------
// suite: mined-comparison counters vs closed forms vs enumeration

inline SuiteReport run_counts_suite(const VerifyOptions& options = {}) {
  SuiteReport report{"counts", {}};
  Rng rng(derive_seed(options.seed, 0x636f756e7473ull));

  bool all_match = true;
  for (int P = 2; P <= 8; ++P)
    for (int K = 1; K <= 6; ++K) {
      const ComparisonCounts formula = comparison_counts(P, K);
      const oracles::PairCounts pairs = oracles::enumerate_pair_counts(P, K);
      detail::BatchDraw b = detail::draw_batch(rng, P, K, 2);
      DistanceCounter bh_counter, hc_counter;
      Tape<double> tape;
      Tensor<double> f = tape.constant({b.features.rows(), b.features.cols()},
                                       Eigen::Map<const ArrayX<double>>(
                                           b.features.data(), b.features.size()));
      batch_hard_triplet(f, b.labels, 0.3, &bh_counter);
      hetero_center_triplet(modality_centers(f, b.labels, b.modalities), 0.3, &hc_counter);
      const bool bh_match = formula.bh_positive == pairs.bh_positive &&
                            formula.bh_negative == pairs.bh_negative &&
                            formula.bh_positive == bh_counter.positive &&
                            formula.bh_negative == bh_counter.negative;
      const bool hc_match = formula.hc_positive == pairs.hc_positive &&
                            formula.hc_negative == pairs.hc_negative &&
                            formula.hc_positive == hc_counter.positive &&
                            formula.hc_negative == hc_counter.negative;
      all_match = all_match && bh_match && hc_match;
    }
  report.checks.push_back(
      {"closed forms == pair enumeration == instrumented mining counters for P in 2..8, K in "
       "1..6",
       all_match});

  const ComparisonCounts row = comparison_counts(8, 4);
  char buf[96];
  std::snprintf(buf, sizeof(buf), "P=8 K=4: %lld/%lld vs %lld/%lld", row.bh_positive,
                row.bh_negative, row.hc_positive, row.hc_negative);
  report.checks.push_back({buf, row.bh_positive == 448 && row.bh_negative == 3584 &&
                                    row.hc_positive == 16 && row.hc_negative == 224});
  return report;
}

// ---------------------------------------------------------------------------
// suite: retrieval metrics vs brute-force reference

inline SuiteReport run_metrics_suite(const VerifyOptions& options = {}) {
  SuiteReport report{"metrics", {}};
  Rng rng(derive_seed(options.seed, 0x6d657472ull));
  const int instances = 50;
  const double tol = 1e-9;

  int ok = 0;
  double worst = 0.0;
  for (int i = 0; i < instances; ++i) {
    const int ids = 2 + static_cast<int>(rng.below(4));
    const int per_id = 2 + static_cast<int>(rng.below(3));
    const Eigen::Index dim = 3;
    EmbeddingSet gallery;
    gallery.vectors.resize(ids * per_id, dim);
    for (int id = 0; id < ids; ++id)
      for (int j = 0; j < per_id; ++j) {
        const Eigen::Index r = id * per_id + j;
        for (Eigen::Index c = 0; c < dim; ++c)
          gallery.vectors(r, c) = static_cast<float>(rng.normal());
        gallery.labels.push_back(id);
        gallery.modalities.push_back(Modality::visible);
      }
    EmbeddingSet query;
    const int Q = 1 + static_cast<int>(rng.below(5));
    query.vectors.resize(Q, dim);
    for (int q = 0; q < Q; ++q) {
      for (Eigen::Index c = 0; c < dim; ++c) query.vectors(q, c) = static_cast<float>(rng.normal());
      query.labels.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(ids))));
      query.modalities.push_back(Modality::thermal);
    }

    EvalReport produced = compute_metrics(query, gallery);
    oracles::MatD qd = query.vectors.cast<double>();
    oracles::MatD gd = gallery.vectors.cast<double>();
    oracles::BruteMetrics ref = oracles::brute_metrics(qd, query.labels, gd, gallery.labels);
    double err = std::max(std::abs(produced.map - ref.map), std::abs(produced.minp - ref.minp));
    for (std::size_t r = 0; r < ref.cmc.size(); ++r)
      err = std::max(err, std::abs(produced.cmc[r] - ref.cmc[r]));
    worst = std::max(worst, err);
    ok += err <= tol ? 1 : 0;
  }
  report.checks.push_back({"cmc/map/minp vs brute force: " + std::to_string(ok) + "/" +
                               std::to_string(instances) + " instances within " +
                               detail::fmt_g(tol) + " (worst " + detail::fmt_g(worst) + ")",
                           ok == instances});

  // Alternating gallery A,B,A,B against an A query: ap (1 + 2/3)/2, inp 2/3.
  {
    EmbeddingSet gallery;
    gallery.vectors.resize(4, 1);
    gallery.vectors << 1.0f, 2.0f, 3.0f, 4.0f;
    gallery.labels = {0, 1, 0, 1};
    gallery.modalities = {Modality::visible, Modality::visible, Modality::visible,
                          Modality::visible};
    EmbeddingSet query;
    query.vectors.resize(1, 1);
    query.vectors << 0.0f;
    query.labels = {0};
    query.modalities = {Modality::thermal};
    EvalReport r = compute_metrics(query, gallery);
    const bool pass = std::abs(r.map - 5.0 / 6.0) <= 1e-4 && std::abs(r.minp - 2.0 / 3.0) <= 1e-4;
    report.checks.push_back({"alternating-gallery instance: ap " + detail::fmt_g(r.map) +
                                 " (expected 0.8333), inp " + detail::fmt_g(r.minp) +
                                 " (expected 0.6667)",
                             pass});
  }
  return report;
}

inline std::vector<SuiteReport> run_verify(VerifySuite suite, const VerifyOptions& options = {}) {
  std::vector<SuiteReport> reports;
  if (suite == VerifySuite::grad || suite == VerifySuite::all)
    reports.push_back(run_gradient_suite(options));
  if (suite == VerifySuite::loss_oracle || suite == VerifySuite::all)
    reports.push_back(run_loss_oracle_suite(options));
  if (suite == VerifySuite::counts || suite == VerifySuite::all)
    reports.push_back(run_counts_suite(options));
  if (suite == VerifySuite::metrics || suite == VerifySuite::all)
    reports.push_back(run_metrics_suite(options));
  return reports;
}

}  // namespace xmreid
