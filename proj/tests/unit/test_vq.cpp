#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "gradcheck.hpp"
#include "msm/core/error.hpp"
#include "msm/vq/train.hpp"
#include "oracles.hpp"

using namespace msm;
using namespace msm::vq;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double scale = 1.0) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

Codebook random_codebook(int K, int d, Rng& rng) {
  Codebook cb(K, d);
  cb.set_codes(random_matrix(K, d, rng));
  return cb;
}

VqConfig tiny_config() {
  VqConfig c;
  c.input_dim = 6;
  c.width = 4;
  c.latent_dim = 3;
  c.codebook_size = 5;
  c.extra_layers = 1;
  c.downscale = 2;
  c.res_blocks = 1;
  c.essential_dim = 4;
  c.beta = 0.3;
  c.lambda_ess = 2.0;
  return c;
}

}  // namespace

TEST(Interpolate, IdentityAndConstant) {
  Rng rng(1);
  const Matrix x = random_matrix(7, 3, rng);
  EXPECT_EQ(interpolate(x, 7), x);
  EXPECT_EQ(interpolation_matrix(5, 5), Matrix::Identity(5, 5));
  const Matrix c = Matrix::Constant(4, 2, 1.25);
  for (int len : {1, 2, 3, 9, 31}) EXPECT_LT((interpolate(c, len).array() - 1.25).abs().maxCoeff(), 1e-15);
  const Matrix one = random_matrix(1, 3, rng);
  const Matrix rep = interpolate(one, 6);
  for (int i = 0; i < 6; ++i) EXPECT_EQ(rep.row(i), one.row(0));
}

TEST(Interpolate, TwoToFourClosedForm) {
  Matrix ab(2, 2);
  ab << 1.0, -2.0, 4.0, 7.0;
  const Matrix out = interpolate(ab, 4);
  Matrix expect(4, 2);
  expect << 1.0, -2.0, 2.0, 1.0, 3.0, 4.0, 4.0, 7.0;
  EXPECT_LT((out - expect).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Interpolate, MatchesHandOracle) {
  Rng rng(2);
  for (int src : {2, 3, 5, 10}) {
    for (int dst : {2, 4, 7, 16, 80}) {
      const Matrix x = random_matrix(src, 4, rng);
      EXPECT_LT((interpolate(x, dst) - oracle::hand_interpolate(x, dst)).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

TEST(Schedule, TenScaleListAndTokenCount) {
  ScaleSchedule s{{2, 5, 7, 10, 15, 20, 26, 40, 60, 80}};
  EXPECT_NO_THROW(s.validate(80));
  EXPECT_EQ(s.total_tokens(), 265);
  Rng rng(3);
  Codebook cb = random_codebook(16, 4, rng);
  const auto q = quantize(random_matrix(80, 4, rng), s, cb);
  ASSERT_EQ(q.tokens.token_seqs.size(), 10u);
  for (int v = 0; v < 10; ++v) EXPECT_EQ(static_cast<int>(q.tokens.token_seqs[v].size()), s.lengths[v]);
}

TEST(Schedule, BuildersAndValidation) {
  EXPECT_EQ(ScaleSchedule::halving(80, 3).lengths, (std::vector<int>{10, 20, 40, 80}));
  EXPECT_EQ(ScaleSchedule::halving(16, 1).lengths, (std::vector<int>{8, 16}));
  EXPECT_EQ(ScaleSchedule::from_ratios(16, {0.125, 1.0}).lengths, (std::vector<int>{2, 16}));
  EXPECT_EQ(ScaleSchedule::full_scale(16, 1).total_tokens(), 32);
  EXPECT_THROW(ScaleSchedule::from_ratios(4, {0.1, 0.2, 1.0}), Error);  // 0,1 -> clamped 1,1
  EXPECT_THROW((ScaleSchedule{{2, 8}}).validate(16), Error);
  EXPECT_THROW((ScaleSchedule{{4, 4, 16}}).validate(16), Error);
}

TEST(Quantize, ZeroInputWithZeroCode) {
  Codebook cb(4, 3);
  Matrix codes(4, 3);
  codes << 1, 1, 1, 0, 0, 0, -1, 2, 0, 3, 3, 3;
  cb.set_codes(codes);
  const auto q = quantize(Matrix::Zero(8, 3), ScaleSchedule{{2, 4, 8}}, cb);
  for (const auto& seq : q.tokens.token_seqs)
    for (int t : seq) EXPECT_EQ(t, 1);
  EXPECT_EQ(q.reconstruction, Matrix::Zero(8, 3));
  EXPECT_EQ(q.final_residual, Matrix::Zero(8, 3));
}

TEST(Quantize, SingleLayerIsPlainVq) {
  Rng rng(4);
  const Codebook cb = random_codebook(4, 2, rng);
  const Matrix f = random_matrix(4, 2, rng);
  const auto q = quantize(f, ScaleSchedule{{4}}, cb);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(q.tokens.token_seqs[0][i], oracle::brute_force_nearest(cb.codes(), f.row(i)));
  EXPECT_LT((q.reconstruction - cb.lookup(q.tokens.token_seqs[0])).cwiseAbs().maxCoeff(), 0.0 + 1e-300);
}

TEST(Quantize, NearestMatchesBruteForce) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const int K = 2 + static_cast<int>(rng.below(63));
    const int d = 1 + static_cast<int>(rng.below(16));
    const Codebook cb = random_codebook(K, d, rng);
    const Matrix x = random_matrix(50, d, rng);
    const auto idx = cb.nearest_rows(x);
    for (int i = 0; i < 50; ++i) EXPECT_EQ(idx[i], oracle::brute_force_nearest(cb.codes(), x.row(i)));
  }
}

TEST(Quantize, TiesPickLowestIndex) {
  Codebook cb(3, 1);
  Matrix codes(3, 1);
  codes << 2.0, 0.0, 2.0;
  cb.set_codes(codes);
  RowVector x(1);
  x << 1.0;
  EXPECT_EQ(cb.nearest(x), 0);
}

TEST(Quantize, TelescopingIdentity) {
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(64));
    const int d = 1 + static_cast<int>(rng.below(32));
    const Codebook cb = random_codebook(2 + static_cast<int>(rng.below(255)), d, rng);
    const int V = std::min<int>(static_cast<int>(rng.below(4)), n - 1);
    std::vector<double> ratios;
    for (int v = V; v >= 0; --v) ratios.push_back(std::ldexp(1.0, -v));
    ScaleSchedule s;
    try {
      s = ScaleSchedule::from_ratios(n, ratios);
    } catch (const Error&) {
      s = ScaleSchedule{{n}};
    }
    const Matrix f = random_matrix(n, d, rng);
    const auto q = quantize(f, s, cb);
    EXPECT_LT((f - q.reconstruction - q.final_residual).cwiseAbs().maxCoeff(), 1e-5);
    EXPECT_LT((dequantize(q.tokens, cb) + q.final_residual - f).cwiseAbs().maxCoeff(), 1e-5);
  }
}

TEST(Quantize, DequantizeChecksRange) {
  Rng rng(7);
  const Codebook cb = random_codebook(4, 2, rng);
  QuantizedMotion q;
  q.schedule = ScaleSchedule{{2, 4}};
  q.token_seqs = {{0, 1}, {2, 4, 1, 0}};
  EXPECT_THROW(dequantize(q, cb), Error);
  q.token_seqs[1][1] = 3;
  const Matrix single = dequantize(q, cb, 0);
  EXPECT_EQ(single, interpolate(cb.lookup({0, 1}), 4));
  EXPECT_THROW(Codebook(1, 2), Error);
}

TEST(Quantize, TokenJsonAndFlatten) {
  QuantizedMotion q;
  q.schedule = ScaleSchedule{{1, 3}};
  q.token_seqs = {{5}, {1, 2, 3}};
  EXPECT_EQ(q.flatten(), (std::vector<int>{5, 1, 2, 3}));
  EXPECT_EQ(QuantizedMotion::unflatten(q.flatten(), q.schedule).token_seqs, q.token_seqs);
  const auto back = QuantizedMotion::from_json(q.to_json());
  EXPECT_EQ(back.token_seqs, q.token_seqs);
  EXPECT_EQ(back.schedule.lengths, q.schedule.lengths);
  auto bad = q.to_json();
  bad["token_seqs"][1].push_back(0);
  EXPECT_THROW(QuantizedMotion::from_json(bad), Error);
}

TEST(Ema, ConvergesToRepeatedVector) {
  Codebook cb(3, 2, 0.9);
  cb.set_codes(Matrix::Zero(3, 2));
  Matrix x(1, 2);
  x << 3.0, -1.0;
  double prev = 1e9;
  for (int i = 0; i < 200; ++i) {
    cb.ema_update({1}, x);
    const double err = (cb.codes().row(1) - x.row(0)).norm();
    EXPECT_LE(err, prev + 1e-15);
    prev = err;
  }
  EXPECT_LT(prev, 1e-4);
  EXPECT_EQ(cb.codes().row(0), RowVector::Zero(2));
}

TEST(Ema, OneStepMatchesRecursion) {
  Codebook cb(2, 2, 0.8);
  Matrix codes(2, 2);
  codes << 1, 2, 3, 4;
  cb.set_codes(codes);
  Matrix v(3, 2);
  v << 1, 1, 2, 0, 5, 5;
  cb.ema_update({0, 0, 1}, v);
  // counts0 = 0.8*1 + 0.2*2 = 1.2; sums0 = 0.8*(1,2) + 0.2*(3,1) = (1.4, 1.8)
  EXPECT_NEAR(cb.ema_counts()(0), 1.2, 1e-15);
  EXPECT_NEAR(cb.codes()(0, 0), 1.4 / (1.2 + Codebook::kEps), 1e-15);
  EXPECT_NEAR(cb.codes()(0, 1), 1.8 / (1.2 + Codebook::kEps), 1e-15);
  // counts1 = 0.8 + 0.2 = 1.0; sums1 = 0.8*(3,4) + 0.2*(5,5) = (3.4, 4.2)
  EXPECT_NEAR(cb.codes()(1, 0), 3.4 / (1.0 + Codebook::kEps), 1e-15);
  EXPECT_NEAR(cb.codes()(1, 1), 4.2 / (1.0 + Codebook::kEps), 1e-15);
}

TEST(Ema, KMeansStationarity) {
  // Two well separated clusters and frozen inputs: codes settle on the means.
  Rng rng(8);
  Matrix data(200, 2);
  for (int i = 0; i < 200; ++i) {
    const double cx = i < 100 ? -5.0 : 5.0;
    data(i, 0) = cx + 0.3 * rng.normal();
    data(i, 1) = 0.3 * rng.normal();
  }
  Codebook cb(2, 2, 0.9);
  Matrix init(2, 2);
  init << -1, 0, 1, 0;
  cb.set_codes(init);
  for (int it = 0; it < 300; ++it) cb.ema_update(cb.nearest_rows(data), data);
  const RowVector m0 = data.topRows(100).colwise().mean();
  const RowVector m1 = data.bottomRows(100).colwise().mean();
  EXPECT_LT((cb.codes().row(0) - m0).norm(), 1e-3);
  EXPECT_LT((cb.codes().row(1) - m1).norm(), 1e-3);
}

TEST(Ema, DeadCodeReset) {
  Rng rng(9);
  Codebook cb(4, 2);
  cb.set_codes(Matrix::Zero(4, 2));
  cb.ema_update({0, 0, 2}, Matrix::Ones(3, 2));
  const Matrix pool = Matrix::Constant(5, 2, 7.0);
  EXPECT_EQ(cb.reset_dead_codes(pool, rng), 2);
  EXPECT_EQ(cb.codes().row(1), RowVector::Constant(2, 7.0));
  EXPECT_EQ(cb.codes().row(3), RowVector::Constant(2, 7.0));
  EXPECT_EQ(cb.usage(), (std::vector<std::int64_t>{0, 0, 0, 0}));
}

TEST(Model, LatentLengthsAndShortClips) {
  VqConfig c = tiny_config();
  c.downscale = 4;
  VqModel m(c, 1);
  Rng rng(10);
  m.initialize_codebooks({random_matrix(16, 6, rng)}, rng);
  EXPECT_EQ(m.encode(random_matrix(320, 6, rng)).rows(), 80);
  EXPECT_EQ(m.encode(random_matrix(8, 6, rng)).rows(), 2);
  EXPECT_EQ(m.encode(random_matrix(10, 6, rng)).rows(), 3);
  try {
    m.encode(random_matrix(3, 6, rng));
    FAIL();
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "clip too short");
  }
  EXPECT_EQ(m.decode(Matrix::Zero(5, 3)).rows(), 20);
  EXPECT_EQ(m.decode(Matrix::Zero(5, 3), 18).rows(), 18);
  EXPECT_EQ(m.reconstruct(random_matrix(10, 6, rng)).rows(), 10);
  EXPECT_THROW(m.decode(Matrix::Zero(5, 4)), Error);
}

TEST(Model, DeterministicForFixedSeed) {
  Rng rng(11);
  const Matrix x = random_matrix(24, 6, rng);
  VqModel a(tiny_config(), 42), b(tiny_config(), 42);
  const Matrix la = a.encode(x), lb = b.encode(x);
  EXPECT_EQ(la, lb);
  EXPECT_EQ(a.decode(la), b.decode(lb));
}

TEST(Model, ScheduleAndBaselineTokens) {
  VqConfig c = tiny_config();
  c.extra_layers = 2;
  EXPECT_EQ(c.schedule(16).lengths, (std::vector<int>{4, 8, 16}));
  c.mode = VqMode::full_scale_baseline;
  EXPECT_EQ(c.schedule(16).total_tokens(), 48);
  VqModel m(c, 3);
  EXPECT_EQ(m.codebook_count(), 3);
  Rng rng(12);
  m.initialize_codebooks({random_matrix(32, 6, rng)}, rng);
  EXPECT_EQ(m.tokenize(random_matrix(32, 6, rng)).total_tokens(), 48);
}

TEST(Loss, WeightsSwitchTermsOff) {
  Rng rng(13);
  const Matrix x = random_matrix(8, 6, rng);
  VqConfig c = tiny_config();
  c.beta = 0;
  c.lambda_ess = 0;
  VqModel m(c, 5);
  m.initialize_codebooks({x}, rng);
  const auto l = m.loss(x);
  EXPECT_DOUBLE_EQ(l.total.item(), l.reconstruction);
  c.beta = 0.02;
  VqModel m2(c, 5);
  m2.initialize_codebooks({x}, rng);
  const auto l2 = m2.loss(x);
  EXPECT_NEAR(l2.total.item(), l2.reconstruction + 0.02 * l2.commitment, 1e-15);
}

TEST(Loss, BatchEqualsMeanOfClips) {
  Rng rng(14);
  const Matrix a = random_matrix(8, 6, rng), b = random_matrix(8, 6, rng);
  VqModel m(tiny_config(), 6);
  m.initialize_codebooks({a, b}, rng);
  const double la = m.loss(a).total.item(), lb = m.loss(b).total.item();
  EXPECT_NEAR(m.loss(std::vector<Matrix>{a, b}).total.item(), 0.5 * (la + lb), 1e-12);
}

TEST(Loss, GradientsMatchFiniteDifferences) {
  Rng rng(15);
  std::vector<Matrix> clips{random_matrix(8, 6, rng), random_matrix(8, 6, rng)};
  for (VqMode mode : {VqMode::multi_scale, VqMode::full_scale_baseline}) {
    VqConfig c = tiny_config();
    c.mode = mode;
    c.straight_through = false;  // the surrogate gradient is not a derivative
    VqModel m(c, 7);
    m.initialize_codebooks(clips, rng);
    auto params = m.parameters();
    const auto report = oracle::check_param_gradients([&] { return m.loss(clips).total; }, params, 6);
    EXPECT_LT(report.max_rel_error, 1e-3) << report.worst;
    EXPECT_GT(report.checked, 50u);
  }
}

TEST(Loss, StraightThroughReachesEncoder) {
  Rng rng(16);
  const Matrix x = random_matrix(8, 6, rng);
  VqConfig c = tiny_config();
  c.beta = 0;
  VqModel with(c, 8);
  with.initialize_codebooks({x}, rng);
  nn::backward(with.loss(x).total);
  double enc_grad = 0;
  for (auto* p : with.parameters())
    if (p->name.rfind("enc.", 0) == 0 && p->grad.size()) enc_grad += p->grad.norm();
  EXPECT_GT(enc_grad, 0.0);
}

TEST(Train, ShortRunReducesLossAndCheckpointsRoundTrip) {
  Rng rng(17);
  std::vector<Matrix> corpus;
  for (int i = 0; i < 6; ++i) {
    Matrix m(16, 6);
    for (int t = 0; t < 16; ++t)
      for (int c = 0; c < 6; ++c) m(t, c) = std::sin(0.3 * t * (c + 1) + i);
    corpus.push_back(m);
  }
  VqConfig c = tiny_config();
  c.width = 8;
  c.codebook_size = 8;
  c.reset_window = 5;
  VqModel m(c, 9);
  VqTrainConfig tc;
  tc.epochs = 40;
  tc.batch_size = 3;
  tc.window = 16;
  tc.lr = 3e-3;
  const auto report = train_vq(m, corpus, tc);
  ASSERT_EQ(report.epochs.size(), 40u);
  EXPECT_LT(report.epochs.back().loss, report.epochs.front().loss);

  const auto curve = capacity_probe(m, corpus);
  ASSERT_EQ(curve.size(), 2u);
  EXPECT_NEAR(curve.back(), reconstruction_mse(m, corpus), 1e-12);
  EXPECT_NE(capacity_probe_csv(curve, c.schedule(8)).find("layer,scale_length,cumulative_tokens,mse"),
            std::string::npos);

  const auto dir = std::filesystem::temp_directory_path() / "msm_vq_ckpt";
  std::filesystem::remove_all(dir);
  motion::NormalizationStats norm;
  norm.mean = RowVector::Zero(6);
  norm.std = RowVector::Ones(6);
  m.save(dir, &norm, report.to_json());
  motion::NormalizationStats back_norm;
  auto loaded = VqModel::load(dir, &back_norm);
  EXPECT_EQ(back_norm.std, norm.std);
  // tensors are stored as float32: one save rounds, a second is lossless
  const auto dir2 = dir.string() + "_again";
  loaded->save(dir2, &back_norm);
  auto reloaded = VqModel::load(dir2);
  for (const auto& clip : corpus) {
    EXPECT_EQ(loaded->tokenize(clip).token_seqs, m.tokenize(clip).token_seqs);
    EXPECT_LT((loaded->reconstruct(clip) - m.reconstruct(clip)).cwiseAbs().maxCoeff(), 1e-5);
    EXPECT_EQ(reloaded->reconstruct(clip), loaded->reconstruct(clip));
  }
  std::filesystem::remove_all(dir2);
  EXPECT_THROW(VqModel::load(dir / "missing"), Error);
}

TEST(Config, RejectsUnknownKeys) {
  nlohmann::json j = tiny_config().to_json();
  EXPECT_NO_THROW(VqConfig::from_json(j));
  j["codebok_size"] = 3;
  try {
    VqConfig::from_json(j);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::config);
    EXPECT_NE(std::string(e.what()).find("vq.codebok_size"), std::string::npos);
  }
  nlohmann::json bad = tiny_config().to_json();
  bad["mode"] = "coarse";
  EXPECT_THROW(VqConfig::from_json(bad), Error);
}
