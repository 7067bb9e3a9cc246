// Copyright 2026 The tssaudit Authors
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

// Acceptance checks P1-P11. Prints one PASS/FAIL line per criterion and
// exits non-zero if any fails.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "support.hpp"
#include "tssaudit/commands.hpp"
#include "tssaudit/embstore.hpp"
#include "tssaudit/geometry.hpp"
#include "tssaudit/image.hpp"
#include "tssaudit/probes.hpp"
#include "tssaudit/rng.hpp"
#include "tssaudit/splitter.hpp"
#include "tssaudit/stainproc.hpp"
#include "tssaudit/synthgen.hpp"

using namespace tssaudit;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool ok = true;
  std::ostringstream detail;
  void require(bool cond, const std::string& what) {
    if (!cond && ok) detail << "first failure: " << what << "; ";
    ok = ok && cond;
  }
};

int failures = 0;

void criterion(const char* id, const char* title, double limit_s, const std::function<void(Outcome&)>& body) {
  Outcome out;
  const auto start = std::chrono::steady_clock::now();
  try {
    body(out);
  } catch (const std::exception& e) {
    out.ok = false;
    out.detail << "exception: " << e.what() << "; ";
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (secs >= limit_s) {
    out.ok = false;
    out.detail << "runtime " << secs << " s exceeds " << limit_s << " s; ";
  }
  if (!out.ok) ++failures;
  std::printf("%s %s: %s [%.2f s / %.0f s] %s\n", id, out.ok ? "PASS" : "FAIL", title, secs, limit_s,
              out.detail.str().c_str());
  std::fflush(stdout);
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Random tables for the bias split property: two sites, 7-10 slides per
// (site, class) with random sizes, plus some mixed and undersized slides.
EmbeddingTable random_bias_table(std::mt19937_64& rng, std::size_t pps) {
  std::uniform_int_distribution<std::size_t> slides_per_cell(7, 10);
  std::uniform_int_distribution<std::size_t> extra(0, pps);
  std::vector<PatchMeta> meta;
  std::size_t patient = 0;
  auto add_slide = [&](int site, std::size_t normal, std::size_t tumor, std::size_t shared_patient) {
    const std::string slide = "site" + std::to_string(site) + "_slide" + std::to_string(meta.size());
    for (std::size_t i = 0; i < normal + tumor; ++i) {
      PatchMeta m;
      m.slide_id = slide;
      m.patient_id = "pt" + std::to_string(shared_patient);
      m.patch_id = slide + "_" + std::to_string(i);
      m.site_label = site;
      m.class_label = i < normal ? kNormal : kTumor;
      meta.push_back(std::move(m));
    }
  };
  for (int site = 0; site < 2; ++site) {
    for (int cls = 0; cls < 2; ++cls) {
      const auto n = slides_per_cell(rng);
      for (std::size_t k = 0; k < n; ++k) {
        const std::size_t size = pps + extra(rng);
        if (cls == kTumor) {
          add_slide(site, extra(rng) / 2, size, patient++);
        } else {
          add_slide(site, size, 0, patient++);
        }
      }
    }
    add_slide(site, pps / 2, 0, patient++);  // too small to be eligible
  }
  FeatureMatrix f = FeatureMatrix::Zero(static_cast<Eigen::Index>(meta.size()), 1);
  return EmbeddingTable(std::move(f), std::move(meta));
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(TSSAUDIT_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  return std::system(cmd.c_str());
}

std::map<std::string, std::string> tree_contents(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), dir).string();
    if (rel == "report.json") continue;
    out[rel] = testsupport::read_file(e.path());
  }
  return out;
}

}  // namespace

int main() {
  std::cout << "tssaudit acceptance" << std::endl;

  criterion("P1", "bias splits reproduce the four training compositions", 10.0, [](Outcome& o) {
    const auto t = generate(testsupport::bias_table_config(7, 2500, 4, 1));
    const auto splits = build_bias_splits(t, 2024);
    // expected training patches: site0 normal, site0 tumor, site1 normal, site1 tumor
    const std::size_t expected[4][4] = {{7500, 7500, 7500, 7500},
                                      {5000, 10000, 10000, 5000},
                                      {2500, 12500, 12500, 2500},
                                      {0, 15000, 15000, 0}};
    const char* ratios[4] = {"0.5/0.5", "0.67/0.33", "0.83/0.17", "1/0"};
    o.require(splits.size() == 4, "four splits");
    for (std::size_t i = 0; i < splits.size(); ++i) {
      CellCounts train{}, val{}, test{};
      for (auto r : splits[i].split.train) ++train[static_cast<std::size_t>(*t.meta(r).site_label)][static_cast<std::size_t>(*t.meta(r).class_label)];
      for (auto r : splits[i].split.val) ++val[static_cast<std::size_t>(*t.meta(r).site_label)][static_cast<std::size_t>(*t.meta(r).class_label)];
      for (auto r : splits[i].split.test) ++test[static_cast<std::size_t>(*t.meta(r).site_label)][static_cast<std::size_t>(*t.meta(r).class_label)];
      const std::string tag = "split " + std::to_string(i + 1);
      o.require(splits[i].spec.ratio_label == ratios[i], tag + " ratio label");
      o.require(train[0][0] == expected[i][0] && train[0][1] == expected[i][1] && train[1][0] == expected[i][2] &&
                    train[1][1] == expected[i][3],
                tag + " training cells");
      o.require(splits[i].split.train.size() == 30000, tag + " training total 30,000");
      o.require(test[0][0] == 5000 && test[1][1] == 5000 && test[0][1] == 0 && test[1][0] == 0,
                tag + " test 5,000 + 5,000");
      o.require(splits[i].split.test == splits[0].split.test, tag + " identical test rows");
      o.require(splits[i].split.val.size() == 5000, tag + " validation 5,000");
      for (std::size_t s = 0; s < 2; ++s) {
        for (std::size_t c = 0; c < 2; ++c) {
          const double want = 5000.0 * static_cast<double>(train[s][c]) / 30000.0;
          o.require(std::abs(static_cast<double>(val[s][c]) - want) < 1.0, tag + " validation composition");
        }
      }
    }
    o.detail << "train/test/val = 30000/10000/5000 in all 4 splits";
  });

  criterion("P2", "split integrity over 200 random tables", 30.0, [](Outcome& o) {
    std::mt19937_64 rng(2);
    std::size_t violations = 0;
    std::size_t splits = 0;
    for (int i = 0; i < 200; ++i) {
      const auto t = testsupport::uneven_table(rng, 1 + i % 4, 4 + static_cast<std::size_t>(i % 20));
      const auto s = patient_split(t, {0.6, 0.1, 0.3}, rng());
      violations += testsupport::brute_force_violations(t, s, false);
      ++splits;
      const std::size_t pps = 5 + rng() % 20;
      BiasConfig cfg;
      cfg.patches_per_slide = pps;
      const auto bt = random_bias_table(rng, pps);
      for (const auto& b : build_bias_splits(bt, rng(), cfg)) {
        violations += testsupport::brute_force_violations(bt, b.split, true);
        violations += testsupport::brute_force_violations(bt, b.split, false);
        ++splits;
      }
    }
    o.require(violations == 0, "zero group violations");
    o.detail << splits << " splits, " << violations << " violations";
  });

  criterion("P3", "one-vs-one AUROC equals pair counting", 10.0, [](Outcome& o) {
    std::mt19937_64 rng(3);
    double worst = 0.0;
    double lowest = 1.0;
    int checked = 0;
    while (checked < 500) {
      const std::size_t n = 2 + rng() % 199;
      const int classes = 2 + static_cast<int>(rng() % 5);
      std::vector<double> s(n);
      std::vector<int> l(n);
      const bool ties = rng() % 2 == 0;
      std::normal_distribution<double> normal;
      for (std::size_t i = 0; i < n; ++i) {
        l[i] = static_cast<int>(rng() % static_cast<std::uint64_t>(classes));
        s[i] = ties ? static_cast<double>(rng() % 10) : normal(rng) + 0.3 * l[i];
      }
      if (std::set<int>(l.begin(), l.end()).size() < 2) continue;
      const double got = ovo_auroc_oriented(s, l);
      worst = std::max(worst, std::abs(got - testsupport::pair_count_ovo(s, l)));
      lowest = std::min(lowest, got);
      ++checked;
    }
    o.require(worst <= 1e-12, "within 1e-12 of pair counting");
    o.require(lowest >= 0.5, "always >= 0.5");
    o.detail << "max |diff| " << worst << ", min value " << lowest;
  });

  criterion("P4", "PCA matches a covariance eigendecomposition", 30.0, [](Outcome& o) {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> normal;
    double vec_err = 0.0, val_err = 0.0, evr_err = 0.0, rec_err = 0.0;
    for (int i = 0; i < 100; ++i) {
      const Eigen::Index n = 2 + static_cast<Eigen::Index>(rng() % 199);
      const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng() % 32);
      RowMatrix x(n, d);
      for (Eigen::Index k = 0; k < x.size(); ++k) x.data()[k] = normal(rng);
      for (Eigen::Index j = 0; j < d; ++j) x.col(j) *= 1.0 + 0.7 * static_cast<double>(j);
      const auto m = fit_pca(x);
      std::vector<double> values;
      std::vector<std::vector<double>> vectors;
      testsupport::jacobi_eigen(testsupport::naive_covariance(x), values, vectors);
      for (Eigen::Index j = 0; j < d; ++j) {
        const double ref = std::max(0.0, values[static_cast<std::size_t>(j)]);
        val_err = std::max(val_err, std::abs(m.eigenvalues(j) - ref) / std::max(1.0, ref));
        if (static_cast<std::size_t>(j) >= m.rank) continue;  // null-space vectors are arbitrary
        double dot = 0.0;
        for (Eigen::Index k = 0; k < d; ++k) dot += m.components(k, j) * vectors[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)];
        const double sign = dot < 0 ? -1.0 : 1.0;
        for (Eigen::Index k = 0; k < d; ++k) {
          vec_err = std::max(vec_err, std::abs(m.components(k, j) - sign * vectors[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)]));
        }
      }
      evr_err = std::max(evr_err, std::abs(m.evr.sum() - 1.0));
      rec_err = std::max(rec_err, (reconstruct(project(x, m, static_cast<std::size_t>(d)), m) - x).cwiseAbs().maxCoeff());
    }
    o.require(vec_err <= 1e-8 && val_err <= 1e-8, "components and eigenvalues within 1e-8");
    o.require(evr_err <= 1e-9, "evr sums to 1 within 1e-9");
    o.require(rec_err < 1e-8, "full-rank reconstruction < 1e-8");
    o.detail << "vector err " << vec_err << ", eigenvalue err " << val_err << ", evr err " << evr_err
             << ", reconstruction err " << rec_err;
  });

  criterion("P5", "cross-entropy gradients match central differences", 10.0, [](Outcome& o) {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> normal;
    double worst = 0.0;
    for (int rep = 0; rep < 20; ++rep) {
      const int c = 2 + static_cast<int>(rng() % 4);
      const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng() % 16);
      const Eigen::Index n = 1 + static_cast<Eigen::Index>(rng() % 30);
      RowMatrix x(n, d);
      for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = normal(rng);
      std::vector<int> y(static_cast<std::size_t>(n));
      for (auto& v : y) v = static_cast<int>(rng() % static_cast<std::uint64_t>(c));
      Eigen::MatrixXd w(c, d);
      for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = normal(rng);
      Eigen::VectorXd b(c);
      for (Eigen::Index i = 0; i < c; ++i) b(i) = normal(rng);
      const auto g = cross_entropy_gradient(w, b, x, y);
      const double h = 1e-5;
      auto rel = [](double fd, double an) { return std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-8}); };
      auto abs_ok = [](double fd, double an) { return std::abs(fd - an) < 1e-10; };
      for (Eigen::Index i = 0; i < w.size(); ++i) {
        Eigen::MatrixXd wp = w, wm = w;
        wp.data()[i] += h;
        wm.data()[i] -= h;
        const double fd = (cross_entropy_gradient(wp, b, x, y).loss - cross_entropy_gradient(wm, b, x, y).loss) / (2 * h);
        if (!abs_ok(fd, g.grad_weights.data()[i])) worst = std::max(worst, rel(fd, g.grad_weights.data()[i]));
      }
      for (Eigen::Index i = 0; i < c; ++i) {
        Eigen::VectorXd bp = b, bm = b;
        bp(i) += h;
        bm(i) -= h;
        const double fd = (cross_entropy_gradient(w, bp, x, y).loss - cross_entropy_gradient(w, bm, x, y).loss) / (2 * h);
        if (!abs_ok(fd, g.grad_bias(i))) worst = std::max(worst, rel(fd, g.grad_bias(i)));
      }
    }
    o.require(worst <= 1e-4, "relative error <= 1e-4");
    o.detail << "max relative error " << worst;
  });

  criterion("P6", "site prediction: chance at kappa 0, >= 0.95 at kappa 4, monotone", 300.0, [](Outcome& o) {
    std::map<Classifier, std::vector<double>> acc;
    for (double kappa : {0.0, 1.0, 4.0}) {
      SynthConfig cfg;
      cfg.dims = 64;
      cfg.n_sites = 5;
      cfg.n_classes = 1;
      cfg.patients_per_site = 20;
      cfg.patches_per_slide = 250;
      cfg.site_strength = kappa;
      cfg.slide_strength = 0.5;
      cfg.noise = 1.0;
      cfg.seed = 6;
      const auto res = run_site_prediction(generate(cfg), 7);
      for (const auto& [clf, rep] : res.reports) acc[clf].push_back(rep.accuracy);
    }
    for (const auto& [clf, a] : acc) {
      const std::string name(to_string(clf));
      o.require(std::abs(a[0] - 0.2) <= 0.05, name + " within 0.05 of chance at kappa 0");
      o.require(a[2] >= 0.95, name + " >= 0.95 at kappa 4");
      o.require(a[0] <= a[1] && a[1] <= a[2], name + " non-decreasing in kappa");
      o.detail << name << " " << fmt(a[0]) << "/" << fmt(a[1]) << "/" << fmt(a[2]) << "; ";
    }
  });

  criterion("P7", "biased splits: > 0.9 on split 1, < 0.5 on split 4, non-increasing", 300.0, [](Outcome& o) {
    auto cfg = testsupport::bias_table_config(7, 2500, 64, 7);
    cfg.site_strength = 4.0;
    cfg.class_strength = 1.0;
    cfg.noise = 0.4;
    const auto out = run_bias_experiment(generate(cfg), 3);
    o.require(out.size() == 4, "four splits");
    o.require(out[0].mean > 0.9, "split 1 mean > 0.9");
    o.require(out[3].mean < 0.5, "split 4 mean < 0.5");
    for (std::size_t i = 0; i + 1 < out.size(); ++i) o.require(out[i + 1].mean <= out[i].mean, "non-increasing");
    for (const auto& b : out) {
      o.require(b.accuracies.size() == 5, "5 repetitions");
      o.detail << "split " << b.spec.index << " " << fmt(b.mean) << "+-" << fmt(b.stddev) << "; ";
    }
  });

  criterion("P8", "same-slide distances all below other-site distances", 60.0, [](Outcome& o) {
    SynthConfig cfg;
    cfg.dims = 64;
    cfg.n_sites = 2;
    cfg.n_classes = 2;
    cfg.class_layout = ClassLayout::per_patch;
    cfg.patients_per_site = 6;
    cfg.patches_per_slide = 1200;
    cfg.site_strength = 4.0;
    cfg.slide_strength = 1.0;
    cfg.class_strength = 1.0;
    cfg.noise = 0.25;
    cfg.seed = 8;
    const auto t = generate(cfg);
    double worst_gap = 1e300;
    for (std::uint64_t r = 0; r < 10; ++r) {
      const auto ref = choose_reference(t, derive_seed(8, r));
      const auto p = distance_profiles(t, ref, derive_seed(9, r));
      const double gap = p[2].entries.front().distance - p[0].entries.back().distance;
      worst_gap = std::min(worst_gap, gap);
      o.require(gap > 0.0, "max(ss) < min(osoh) for reference " + ref);
    }
    o.detail << "smallest min(osoh) - max(ss) over 10 references " << fmt(worst_gap);
  });

  criterion("P9", "top-variance signature: reduced KNN at ell 1 and separability", 120.0, [](Outcome& o) {
    SynthConfig cfg;
    cfg.dims = 64;
    cfg.n_sites = 2;
    cfg.patients_per_site = 20;
    cfg.patches_per_slide = 250;
    cfg.site_strength = 4.0;
    cfg.noise = 1.0;
    cfg.placement = SignaturePlacement::top_variance;
    cfg.seed = 9;
    const auto t = generate(cfg);
    SitePredictionConfig sp;
    const auto sub = subsample_per_site(t, sp.budget_per_site, derive_seed(10, "site/subsample"));
    const auto split = patient_split(t, sp.fractions, derive_seed(10, "site/split"), sub.rows);
    const auto model = fit_pca(t);
    const auto curve = reduced_knn_curve(t, split, model);
    const double diff = std::abs(curve.points[0].accuracy - curve.baseline);
    o.require(curve.points[0].ell == 1 && diff <= 0.02, "ell = 1 within 0.02 of non-reduced");
    const auto prof = separability_profile(t, model, 50);
    o.require(prof.components[0].ovo_auroc > 0.95, "auroc[0] > 0.95");
    double worst_tail = 0.5;
    for (std::size_t j = 5; j < prof.components.size(); ++j) worst_tail = std::max(worst_tail, prof.components[j].ovo_auroc);
    o.require(worst_tail < 0.6, "auroc[j] < 0.6 for j >= 5");
    o.detail << "ell=1 " << fmt(curve.points[0].accuracy) << " vs full " << fmt(curve.baseline) << ", auroc[0] "
             << fmt(prof.components[0].ovo_auroc) << ", max auroc[j>=5] " << fmt(worst_tail);
  });

  criterion("P10", "stain oracles: Otsu, Macenko, Reinhard", 60.0, [](Outcome& o) {
    std::mt19937_64 rng(10);
    int otsu_mismatch = 0;
    for (int rep = 0; rep < 100; ++rep) {
      std::array<std::uint64_t, 256> h{};
      const int modes = 2 + static_cast<int>(rng() % 3);
      for (int m = 0; m < modes; ++m) {
        std::normal_distribution<double> g(static_cast<double>(rng() % 256), 1.0 + static_cast<double>(rng() % 30));
        const int count = 50 + static_cast<int>(rng() % 4000);
        for (int i = 0; i < count; ++i) h[static_cast<std::size_t>(std::clamp(std::lround(g(rng)), 0L, 255L))]++;
      }
      std::size_t nonzero = 0;
      for (auto v : h) nonzero += v ? 1 : 0;
      if (nonzero < 2) h[(rng() % 255) + (h[0] ? 1 : 0)] += 1;
      if (otsu_threshold(h).threshold != testsupport::exhaustive_otsu(h)) ++otsu_mismatch;
    }
    o.require(otsu_mismatch == 0, "Otsu equals exhaustive scan");

    const auto stains = testsupport::reference_stains();
    double worst_self = 0.0;
    for (int rep = 0; rep < 20; ++rep) {
      const auto patch = testsupport::synthetic_he_patch(stains, 64, rng, 0.01);
      const std::vector<RgbImage> pool = {patch};
      const auto out = macenko_apply(patch, macenko_fit(pool));
      double s = 0.0;
      for (std::size_t i = 0; i < patch.pixels.size(); ++i) s += std::abs(int(out.image.pixels[i]) - int(patch.pixels[i]));
      worst_self = std::max(worst_self, s / static_cast<double>(patch.pixels.size()));
    }
    o.require(worst_self <= 2.0, "Macenko self-normalisation <= 2 levels");

    const auto planted = testsupport::synthetic_he_patch(stains, 128, rng, 0.0);
    const auto est = macenko_estimate(planted);
    double worst_angle = 180.0;
    if (est) {
      worst_angle = 0.0;
      for (int k = 0; k < 2; ++k) {
        const double c = std::clamp(est->stain_matrix.col(k).dot(stains.col(k)), -1.0, 1.0);
        worst_angle = std::max(worst_angle, std::acos(c) * 180.0 / 3.14159265358979323846);
      }
    }
    o.require(worst_angle < 1.0, "planted stain vectors within 1 degree");

    double worst_stat = 0.0;
    for (int rep = 0; rep < 10; ++rep) {
      const auto src = testsupport::synthetic_he_patch(stains, 48, rng, 0.02);
      const auto ref = testsupport::synthetic_he_patch(testsupport::reference_stains() * 1.0, 48, rng, 0.05);
      const std::vector<RgbImage> pool = {ref};
      const auto target = reinhard_fit(pool);
      const auto stats = lab_statistics(reinhard_transfer(image_to_lab(src), target));
      for (std::size_t c = 0; c < 3; ++c) {
        worst_stat = std::max({worst_stat, std::abs(stats.means[c] - target.means[c]), std::abs(stats.stds[c] - target.stds[c])});
      }
    }
    o.require(worst_stat < 1e-6, "Reinhard statistics within 1e-6");
    o.detail << "Otsu mismatches " << otsu_mismatch << ", Macenko self error " << fmt(worst_self)
             << " levels, planted angle " << fmt(worst_angle) << " deg, Reinhard stat error " << worst_stat;
  });

  criterion("P11", "EMB1 round-trip and byte-reproducible CLI commands", 60.0, [](Outcome& o) {
    testsupport::TempDir dir;
    std::mt19937_64 rng(11);
    int mismatched = 0;
    for (int i = 0; i < 100; ++i) {
      const auto n = std::uniform_int_distribution<std::size_t>(0, 60)(rng);
      const auto d = std::uniform_int_distribution<std::size_t>(1, 64)(rng);
      const auto t = testsupport::random_table(rng, n, d, i % 5 != 0);
      save_table(t, dir / "r.emb");
      const auto u = load_table(dir / "r.emb");
      if (!(u == t) || u.meta() != t.meta() || u.model_tag() != t.model_tag()) ++mismatched;
    }
    o.require(mismatched == 0, "EMB1 save/load identity");

    const auto log = dir / "cli.log";
    const std::string mixed = (dir / "mixed.emb").string();
    const std::string slides = (dir / "slides.emb").string();
    o.require(run_cli("synth --out " + mixed + " --seed 1 -p n_sites=2 -p n_classes=2 -p class_layout=per_patch"
                      " -p patients_per_site=6 -p patches_per_slide=120 -p dims=16 -p site_strength=3 -p class_strength=1",
                      log) == 0, "synth (mixed slides)");
    o.require(run_cli("synth --out " + slides + " --seed 2 -p n_sites=2 -p n_classes=2 -p patients_per_site=14"
                      " -p patches_per_slide=40 -p dims=8 -p site_strength=3 -p class_strength=1",
                      log) == 0, "synth (single-class slides)");
    fs::create_directories(dir / "wsi");
    write_png(dir / "wsi" / "slideA.png", testsupport::synthetic_he_patch(testsupport::reference_stains(), 512, rng, 0.02));

    struct Cmd {
      std::string name;
      std::string args;
    };
    const std::vector<Cmd> cmds = {
        {"synth", "synth --seed 3 -p dims=12 -p n_sites=3"},
        {"site-predict", "site-predict -i " + mixed + " --seed 4"},
        {"bias", "bias -i " + slides + " --seed 5 -p patches_per_slide=40 -p repetitions=2 -p lp.epochs=4"},
        {"distances", "distances -i " + mixed + " --seed 6 -p n_per_group=50"},
        {"reduced", "reduced -i " + mixed + " --seed 7"},
        {"separability", "separability -i " + mixed + " --seed 8 -p n_components=10"},
        {"stain", "stain -i " + (dir / "wsi").string() + " --seed 9"},
    };
    int reproduced = 0;
    for (const auto& c : cmds) {
      const bool synth = c.name == "synth";
      const fs::path first = dir / ("first_" + c.name);
      const fs::path second = dir / ("second_" + c.name);
      const fs::path out1 = synth ? fs::path(first.string() + ".emb") : first;
      const fs::path out2 = synth ? fs::path(second.string() + ".emb") : second;
      if (run_cli(c.args + " --out " + out1.string(), log) != 0) {
        o.require(false, c.name + " run: " + testsupport::read_file(log));
        continue;
      }
      const fs::path report1 = synth ? fs::path(out1.string() + ".report.json") : out1 / "report.json";
      const fs::path report2 = synth ? fs::path(out2.string() + ".report.json") : out2 / "report.json";
      if (run_cli(c.name + " --config " + report1.string() + " --out " + out2.string(), log) != 0) {
        o.require(false, c.name + " replay: " + testsupport::read_file(log));
        continue;
      }
      const auto j1 = nlohmann::json::parse(testsupport::read_file(report1));
      const auto j2 = nlohmann::json::parse(testsupport::read_file(report2));
      bool same = j1["payload"].dump() == j2["payload"].dump() && j1["config"]["params"] == j2["config"]["params"] &&
                  j1["config"]["seed"] == j2["config"]["seed"];
      if (synth) {
        same = same && testsupport::read_file(out1) == testsupport::read_file(out2) &&
               testsupport::read_file(meta_path_for(out1)) == testsupport::read_file(meta_path_for(out2));
      } else {
        same = same && tree_contents(out1) == tree_contents(out2);
      }
      o.require(same, c.name + " byte-identical replay");
      reproduced += same ? 1 : 0;
    }
    o.detail << "100 tables round-tripped, " << mismatched << " mismatches; " << reproduced << "/" << cmds.size()
             << " commands reproduced from their config echo";
  });

  std::printf("%d of 11 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
