#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "gradcheck.hpp"
#include "msm/core/error.hpp"
#include "msm/eval/metrics.hpp"
#include "msm/eval/tmr.hpp"
#include "msm/motion/features.hpp"
#include "msm/motion/procedural.hpp"
#include "oracles.hpp"

using namespace msm;
using namespace msm::eval;

namespace {

Matrix gaussian(Eigen::Index n, Eigen::Index d, Rng& rng, double shift = 0.0) {
  Matrix m(n, d);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal() + shift;
  return m;
}

TmrConfig mini_tmr() {
  TmrConfig c;
  c.layers = 1;
  c.latent = 8;
  c.heads = 2;
  c.ff = 12;
  c.dropout = 0.0;
  c.motion_dim = 6;
  c.text_dim = 4;
  c.lambda_kl = 0.3;
  c.lambda_e = 0.2;
  c.lambda_nce = 0.5;
  return c;
}

}  // namespace

TEST(Fid, IdentityAndSymmetry) {
  Rng rng(1);
  const Matrix x = gaussian(60, 6, rng), y = gaussian(50, 6, rng, 0.3);
  EXPECT_LT(fid(x, x), 1e-6);
  EXPECT_NEAR(fid(x, y), fid(y, x), 1e-9);
  Matrix shuffled = x;
  shuffled.row(0).swap(shuffled.row(59));
  shuffled.row(10).swap(shuffled.row(20));
  EXPECT_NEAR(fid(shuffled, y), fid(x, y), 1e-9);
  EXPECT_GE(fid(y, x), 0.0);
}

TEST(Fid, ClosedFormForShiftedGaussians) {
  Rng rng(2);
  const int d = 16;
  Matrix a = gaussian(10000, d, rng), b = gaussian(10000, d, rng);
  RowVector mu(d);
  for (int i = 0; i < d; ++i) mu(i) = 0.5 * std::cos(i);
  b.rowwise() += mu;
  const double want = mu.squaredNorm();
  EXPECT_NEAR(fid(a, b), want, 0.05 * want);
}

TEST(Fid, MatchesEigenOracle) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const int d = 2 + static_cast<int>(rng.below(6));
    const Matrix a = gaussian(8 + rng.below(30), d, rng);
    Matrix b = gaussian(8 + rng.below(30), d, rng, 0.2);
    b.col(0) *= 2.0;
    EXPECT_NEAR(fid(a, b), oracle::reference_fid(a, b), 1e-6);
  }
}

TEST(Fid, RejectsBadInput) {
  Rng rng(4);
  Matrix a = gaussian(5, 3, rng);
  EXPECT_THROW(fid(a.topRows(1), a), Error);
  Matrix bad = a;
  bad(2, 1) = std::nan("");
  try {
    fid(a, bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::numeric);
  }
}

TEST(RPrecision, PerfectPairsAndOrdering) {
  Rng rng(5);
  const Matrix e = gaussian(120, 8, rng);
  const auto r = r_precision(e, e, 100, 3, 11);
  ASSERT_EQ(r.size(), 3u);
  for (const auto& m : r) {
    EXPECT_EQ(m.value, 1.0);
    EXPECT_EQ(m.n_repeats, 20);
  }
  const Matrix t = gaussian(120, 8, rng);
  const auto q = r_precision(e, t, 32, 3, 12);
  EXPECT_LE(q[0].value, q[1].value);
  EXPECT_LE(q[1].value, q[2].value);
  const auto again = r_precision(e, t, 32, 3, 12);
  EXPECT_EQ(again[0].value, q[0].value);
  EXPECT_EQ(again[2].ci95, q[2].ci95);
}

TEST(RPrecision, RandomEmbeddingsHitChance) {
  Rng rng(6);
  const Matrix m = gaussian(2000, 8, rng), t = gaussian(2000, 8, rng);
  const auto r = r_precision(m, t, 100, 1, 13);
  // 40000 Bernoulli(0.01) trials: sd of the mean is 5e-4
  EXPECT_NEAR(r[0].value, 0.01, 0.002);
  EXPECT_GT(r[0].ci95, 0.0);
  EXPECT_THROW(r_precision(m.topRows(50), t.topRows(50), 100, 1, 1), Error);
}

TEST(PairMetrics, IdentitiesAndScaling) {
  Rng rng(7);
  const Matrix a = gaussian(30, 5, rng);
  EXPECT_EQ(mm_dist(a, a), 0.0);
  EXPECT_NEAR(clip_score(a, a), 1.0, 1e-12);
  Matrix x(2, 2), y(2, 2);
  x << 1, 0, 0, 2;
  y << 0, 3, -1, 0;
  EXPECT_NEAR(clip_score(x, y), 0.0, 1e-15);
  const Matrix b = gaussian(30, 5, rng);
  EXPECT_NEAR(clip_score(3.0 * a, 0.5 * b), clip_score(a, b), 1e-12);
  EXPECT_GT(std::abs(mm_dist(3.0 * a, 3.0 * b) - mm_dist(a, b)), 1e-3);
  EXPECT_NEAR(mm_dist(3.0 * a, 3.0 * b), 3.0 * mm_dist(a, b), 1e-12);
}

TEST(PairMetrics, MModality) {
  Rng rng(8);
  std::vector<Matrix> same(3, Matrix::Ones(20, 4));
  EXPECT_EQ(mmodality(same, 10, rng), 0.0);
  Matrix g1(2, 2), g2(2, 2);
  g1 << 0, 0, 3, 4;  // one pair at distance 5
  g2 << 1, 1, 1, 2;  // one pair at distance 1
  EXPECT_NEAR(mmodality({g1, g2}, 1, rng), 3.0, 1e-15);
  EXPECT_THROW(mmodality({g1}, 2, rng), Error);
}

TEST(PairMetrics, Diversity) {
  Rng rng(9);
  Matrix two(2, 2);
  two << 0, 0, 3, 4;
  EXPECT_EQ(diversity(two, 50, rng), 5.0);
  // Vertices of a regular simplex: every distinct pair is sqrt(2) apart.
  const Matrix simplex = Matrix::Identity(6, 6);
  EXPECT_NEAR(diversity(simplex, 200, rng), std::sqrt(2.0), 1e-12);
  EXPECT_THROW(diversity(Matrix::Ones(1, 3), 5, rng), Error);
  EXPECT_THROW(diversity(two, 0, rng), Error);
}

TEST(JointError, IdentityOffsetAndOracle) {
  const auto& skel = motion::default_skeleton();
  Rng rng(9);
  const auto style = motion::random_style(rng);
  const auto gt = motion::synthesize_action(motion::Action::walk_forward, 40, style);
  EXPECT_EQ(joint_position_error(gt, gt, skel), 0.0);
  auto lifted = gt;
  for (int t = 0; t < lifted.frames(); ++t) lifted.root(t).y() += 0.01;
  EXPECT_NEAR(joint_position_error(gt, lifted, skel), 0.01, 1e-12);

  // a perturbed recovery stands in for a reconstruction
  auto feat = motion::extract_features(gt, skel);
  for (Eigen::Index i = 0; i < feat.data.size(); ++i) feat.data.data()[i] += 0.01 * rng.normal();
  const auto rec = motion::recover_pose(feat, skel, 0.4, {0.3, -0.2});
  const auto trimmed = gt.slice(0, rec.frames());
  const double err = joint_position_error(trimmed, rec, skel);
  EXPECT_GT(err, 1e-3);
  EXPECT_NEAR(err, oracle::scripted_joint_error(trimmed, rec, skel), 1e-6);
  // global placement of either sequence does not matter
  const auto moved = motion::transform_globally(rec, 1.1, 2.0, -3.0);
  EXPECT_NEAR(joint_position_error(trimmed, moved, skel), err, 1e-9);
}

TEST(Report, SchemaValidation) {
  nlohmann::json ok = {{"metrics", {MetricValue{"fid", 1.5, 0.0, 3, 1}.to_json(),
                                    MetricValue{"r_precision_top1", 0.8, 0.01, 3, 20}.to_json()}}};
  EXPECT_NO_THROW(validate_report(ok));
  auto missing = ok;
  missing["metrics"][0].erase("ci95");
  EXPECT_THROW(validate_report(missing), Error);
  auto bad = ok;
  bad["metrics"][1]["n_repeats"] = 0;
  EXPECT_THROW(validate_report(bad), Error);
  EXPECT_THROW(validate_report(nlohmann::json::object()), Error);
}

TEST(Tmr, WidthCheckAndDeterminism) {
  TmrConfig c;
  c.layers = 1;
  c.latent = 16;
  c.ff = 16;
  c.text_dim = 4;
  TmrModel m(c, 1);
  Rng rng(10);
  const Matrix full = gaussian(12, 296, rng);
  EXPECT_THROW(m.embed_motion(full), Error);
  const Matrix ess = gaussian(12, 148, rng);
  const auto a = m.embed_motion(ess), b = m.embed_motion(ess);
  EXPECT_EQ(a.mean, b.mean);
  EXPECT_EQ(a.log_var, b.log_var);
  EXPECT_EQ(a.mean.size(), 16);
  const auto batched = m.embed_motions({ess, gaussian(12, 148, rng)});
  EXPECT_LT((batched[0].mean - a.mean).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Tmr, SingleModalityIsVaeObjective) {
  Rng rng(11);
  TmrModel m(mini_tmr(), 2);
  const Matrix a = gaussian(7, 6, rng), b = gaussian(7, 6, rng);
  const auto l = m.loss({&a, &b}, {});
  EXPECT_NEAR(l.total.item(), l.reconstruction + 0.3 * l.kl, 1e-12);
  EXPECT_EQ(l.nce, 0.0);
  const Matrix t = gaussian(3, 4, rng);
  EXPECT_THROW(m.loss({&a}, {&t}), Error);
}

TEST(Tmr, ContrastiveTermNearLogBatchAtInit) {
  Rng rng(12);
  TmrConfig c = mini_tmr();
  c.latent = 32;
  c.heads = 4;
  TmrModel m(c, 3);
  std::vector<Matrix> motions, texts;
  std::vector<const Matrix*> mp, tp;
  for (int i = 0; i < 16; ++i) {
    motions.push_back(gaussian(10, 6, rng));
    texts.push_back(gaussian(4, 4, rng));
  }
  for (int i = 0; i < 16; ++i) {
    mp.push_back(&motions[i]);
    tp.push_back(&texts[i]);
  }
  EXPECT_NEAR(m.loss(mp, tp).nce, std::log(16.0), 0.3);
}

TEST(Tmr, GradientsMatchFiniteDifferences) {
  Rng rng(13);
  TmrModel m(mini_tmr(), 4);
  const Matrix a = gaussian(5, 6, rng), b = gaussian(5, 6, rng), c = gaussian(5, 6, rng);
  const Matrix ta = gaussian(3, 4, rng), tb = gaussian(2, 4, rng), tc = gaussian(3, 4, rng);
  const auto report = oracle::check_param_gradients(
      [&] {
        Rng eps(77);  // same latent noise on every evaluation
        return m.loss({&a, &b, &c}, {&ta, &tb, &tc}, {0, 1, 0}, nn::Context{true, &eps}).total;
      },
      m.parameters(), 6);
  EXPECT_LT(report.max_rel_error, 1e-3) << report.worst;
  EXPECT_GT(report.checked, 100u);
}

TEST(Tmr, LearnsToPairSmallSet) {
  Rng rng(14);
  TmrConfig c = mini_tmr();
  c.latent = 32;
  c.heads = 4;
  c.ff = 64;
  c.lambda_kl = 1e-5;
  c.lambda_e = 1e-5;
  c.lambda_nce = 0.1;
  TmrModel m(c, 5);
  std::vector<TmrExample> data;
  for (int i = 0; i < 16; ++i) data.push_back({gaussian(8, 6, rng), gaussian(3, 4, rng), i});
  TmrTrainConfig tc;
  tc.epochs = 150;
  tc.batch_size = 8;
  tc.lr = 2e-3;
  const auto report = train_tmr(m, data, tc);
  EXPECT_LT(report.epochs.back().nce, report.epochs.front().nce);
  Matrix me(16, 32), te(16, 32);
  for (int i = 0; i < 16; ++i) {
    me.row(i) = m.embed_motion(data[i].motion).mean;
    te.row(i) = m.embed_text(data[i].text).mean;
  }
  EXPECT_EQ(r_precision(me, te, 10, 1, 1)[0].value, 1.0);

  const auto dir = std::filesystem::temp_directory_path() / "msm_tmr_ckpt";
  std::filesystem::remove_all(dir);
  m.save(dir, nullptr);
  auto back = TmrModel::load(dir);
  EXPECT_LT((back->embed_text(data[0].text).mean - te.row(0)).cwiseAbs().maxCoeff(), 1e-4);
}
