#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "gradcheck.hpp"
#include "msm/core/error.hpp"
#include "msm/core/log.hpp"
#include "msm/t2m/train.hpp"
#include "oracles.hpp"

using namespace msm;
using namespace msm::t2m;

namespace {

T2mConfig mini_config(Conditioning mode, int K = 8) {
  T2mConfig c;
  c.layers = 2;
  c.ff = 12;
  c.dim = 8;
  c.heads = 2;
  c.dropout = 0.0;
  c.conditioning = mode;
  c.codebook_size = K;
  c.text_dim = 5;
  c.max_positions = 16;
  c.max_scales = 4;
  return c;
}

FlatTokenSequence random_tokens(const vq::ScaleSchedule& s, int K, Rng& rng) {
  auto f = FlatTokenSequence::layout(s, 0);
  for (auto& t : f.tokens) t = static_cast<int>(rng.below(static_cast<std::uint64_t>(K)));
  return f;
}

Matrix random_text(int rows, int cols, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

}  // namespace

TEST(MaskSchedule, EndpointsMidpointAndMonotone) {
  EXPECT_EQ(mask_schedule(0.0), 1.0);
  EXPECT_EQ(mask_schedule(1.0), 0.0);
  EXPECT_NEAR(mask_schedule(0.5), std::sqrt(2.0) / 2.0, 1e-15);
  for (int i = 1; i <= 1000; ++i) EXPECT_LT(mask_schedule(i / 1000.0), mask_schedule((i - 1) / 1000.0));
  EXPECT_THROW(mask_schedule(-0.01), Error);
  EXPECT_THROW(mask_schedule(1.01), Error);
}

TEST(MaskSchedule, CountsMatchOracleOnGrid) {
  for (int L = 1; L <= 24; ++L)
    for (int n = 0; n <= 300; n += (n < 40 ? 1 : 13))
      for (int l = 0; l <= L; ++l)
        ASSERT_EQ(masked_count(static_cast<double>(l) / L, n), oracle::reference_masked_count(l, L, n))
            << "l=" << l << " L=" << L << " n=" << n;
  // cos(pi/3) rounds above one half; the count must not gain a token
  EXPECT_EQ(masked_count(2.0 / 3.0, 10), 5);
}

TEST(Corrupt, SelectsExactCeilCount) {
  Rng rng(1);
  const auto seq = random_tokens(vq::ScaleSchedule{{2, 5, 20}}, 16, rng);
  for (int draw = 0; draw < 10000; ++draw) {
    const double tau = rng.uniform();
    const auto c = corrupt_for_training(seq, tau, 16, rng);
    const int want = static_cast<int>(std::ceil(mask_schedule(tau) * seq.size() - 1e-9));
    ASSERT_EQ(c.selected, want);
    int targets = 0;
    for (int i = 0; i < seq.size(); ++i) {
      if (c.targets[i] >= 0) {
        ++targets;
        ASSERT_EQ(c.targets[i], seq.tokens[i]);
      } else {
        ASSERT_EQ(c.input.tokens[i], seq.tokens[i]);
      }
    }
    ASSERT_EQ(targets, c.selected);
  }
  EXPECT_EQ(corrupt_for_training(seq, 1.0 - 1e-9, 16, rng).selected, 1);
  EXPECT_EQ(corrupt_for_training(seq, 1e-9, 16, rng).selected, seq.size());
}

TEST(Corrupt, ReplacementRatios) {
  Rng rng(2);
  const int K = 1000;
  const auto seq = random_tokens(vq::ScaleSchedule{{50}}, K, rng);
  long masked = 0, changed = 0, same = 0;
  for (int draw = 0; draw < 4000; ++draw) {
    const auto c = corrupt_for_training(seq, 0.0, K, rng);
    for (int i = 0; i < seq.size(); ++i) {
      if (c.input.tokens[i] == mask_token(K)) ++masked;
      else if (c.input.tokens[i] != seq.tokens[i]) ++changed;
      else ++same;
    }
  }
  const double total = static_cast<double>(masked + changed + same);
  // 2e5 draws: three-sigma bands are below 0.003
  EXPECT_NEAR(masked / total, 0.8, 0.005);
  EXPECT_NEAR(changed / total, 0.1 * (1.0 - 1.0 / K), 0.005);
  EXPECT_NEAR(same / total, 0.1 + 0.1 / K, 0.005);
}

TEST(Corrupt, DeterministicPerSeed) {
  Rng a(3), b(3), src(4);
  const auto seq = random_tokens(vq::ScaleSchedule{{3, 12}}, 8, src);
  const auto ca = corrupt_for_training(seq, 0.4, 8, a);
  const auto cb = corrupt_for_training(seq, 0.4, 8, b);
  EXPECT_EQ(ca.input.tokens, cb.input.tokens);
  EXPECT_EQ(ca.targets, cb.targets);
}

TEST(Cfg, IdentitiesAreBitwise) {
  Rng rng(5);
  Matrix cond = random_text(6, 9, rng), uncond = random_text(6, 9, rng);
  cond(0, 0) = -0.0;
  uncond(0, 0) = 0.0;
  cond(1, 1) = -std::numeric_limits<double>::infinity();
  const Matrix s0 = cfg_logits(cond, uncond, 0.0);
  EXPECT_EQ(std::memcmp(s0.data(), cond.data(), sizeof(double) * cond.size()), 0);
  for (double s : {0.5, 4.0, 5.0, -2.0, 1e6}) {
    const Matrix same = cfg_logits(cond, cond, s);
    EXPECT_EQ(std::memcmp(same.data(), cond.data(), sizeof(double) * cond.size()), 0) << s;
  }
}

TEST(Cfg, HandExample) {
  Matrix cond(1, 3), uncond(1, 3);
  cond << 1.0, 2.0, -3.0;
  uncond << 0.5, 2.0, 1.0;
  Matrix expect(1, 3);
  expect << 3.0, 2.0, -19.0;  // (1+4)c - 4u
  EXPECT_EQ(cfg_logits(cond, uncond, 4.0), expect);
  EXPECT_THROW(cfg_logits(cond, Matrix::Zero(2, 3), 1.0), Error);
}

TEST(Tokens, FlattenLayout) {
  vq::QuantizedMotion q;
  q.schedule = vq::ScaleSchedule{{2, 4}};
  q.token_seqs = {{7, 1}, {0, 3, 3, 5}};
  const auto f = FlatTokenSequence::from_quantized(q);
  EXPECT_EQ(f.tokens, (std::vector<int>{7, 1, 0, 3, 3, 5}));
  EXPECT_EQ(f.scale_ids, (std::vector<int>{0, 0, 1, 1, 1, 1}));
  EXPECT_EQ(f.positions, (std::vector<int>{0, 1, 0, 1, 2, 3}));
  EXPECT_EQ(f.to_quantized(q.schedule).token_seqs, q.token_seqs);
}

TEST(Forward, ShapesDeterminismAndWidthCheck) {
  for (auto mode : {Conditioning::in_context, Conditioning::cross_attention}) {
    Rng rng(6);
    T2mModel a(mini_config(mode), 11), b(mini_config(mode), 11);
    const auto seq = random_tokens(vq::ScaleSchedule{{2, 8}}, 8, rng);
    const Matrix text = random_text(4, 5, rng);
    const Matrix la = a.logits(seq, &text);
    EXPECT_EQ(la.rows(), 10);
    EXPECT_EQ(la.cols(), 8);
    EXPECT_EQ(la, a.logits(seq, &text));
    EXPECT_EQ(la, b.logits(seq, &text));
    EXPECT_NE(la, a.logits(seq, nullptr));
    const Matrix wrong = random_text(4, 6, rng);
    EXPECT_THROW(a.logits(seq, &wrong), Error);
  }
}

TEST(Forward, PaddingDoesNotLeak) {
  for (auto mode : {Conditioning::in_context, Conditioning::cross_attention}) {
    Rng rng(7);
    T2mModel m(mini_config(mode), 12);
    const auto shorter = random_tokens(vq::ScaleSchedule{{2, 4}}, 8, rng);
    const auto longer1 = random_tokens(vq::ScaleSchedule{{3, 12}}, 8, rng);
    const auto longer2 = random_tokens(vq::ScaleSchedule{{3, 12}}, 8, rng);
    const Matrix t1 = random_text(2, 5, rng), t2 = random_text(7, 5, rng), t3 = random_text(7, 5, rng);
    // the short sequence is padded to 15 tokens and its text to 7 rows
    const Matrix alone = m.logits(shorter, &t1);
    const Matrix with1 = m.forward({{&shorter, &t1}, {&longer1, &t2}}).value().topRows(6);
    const Matrix with2 = m.forward({{&shorter, &t1}, {&longer2, &t3}}).value().topRows(6);
    EXPECT_EQ(with1, with2);
    EXPECT_LT((with1 - alone).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Loss, InitialLossNearLogK) {
  Rng rng(8);
  const int K = 64;
  T2mConfig c = mini_config(Conditioning::in_context, K);
  c.dim = 16;
  c.heads = 4;
  T2mModel m(c, 13);
  std::vector<Corruption> batch;
  std::vector<Matrix> texts;
  std::vector<const Matrix*> ptrs;
  for (int b = 0; b < 16; ++b) {
    batch.push_back(corrupt_for_training(random_tokens(vq::ScaleSchedule{{4, 16}}, K, rng), 0.3, K, rng));
    texts.push_back(random_text(3, 5, rng));
  }
  for (auto& t : texts) ptrs.push_back(&t);
  EXPECT_NEAR(m.masked_loss(batch, ptrs).item(), std::log(static_cast<double>(K)), 0.35);
}

TEST(Loss, GradientsMatchFiniteDifferences) {
  for (auto mode : {Conditioning::in_context, Conditioning::cross_attention}) {
    Rng rng(9);
    T2mModel m(mini_config(mode), 14);
    std::vector<Corruption> batch;
    batch.push_back(corrupt_for_training(random_tokens(vq::ScaleSchedule{{2, 6}}, 8, rng), 0.2, 8, rng));
    batch.push_back(corrupt_for_training(random_tokens(vq::ScaleSchedule{{1, 3}}, 8, rng), 0.5, 8, rng));
    batch.push_back(corrupt_for_training(random_tokens(vq::ScaleSchedule{{2, 6}}, 8, rng), 0.1, 8, rng));
    const Matrix t0 = random_text(3, 5, rng), t1 = random_text(1, 5, rng);
    const std::vector<const Matrix*> texts{&t0, &t1, nullptr};
    const auto report =
        oracle::check_param_gradients([&] { return m.masked_loss(batch, texts); }, m.parameters(), 6);
    EXPECT_LT(report.max_rel_error, 1e-3) << report.worst;
    EXPECT_GT(report.checked, 100u);
  }
}

TEST(Sampler, RemaskLawAndKeptSetMonotone) {
  Rng rng(10);
  T2mModel m(mini_config(Conditioning::in_context), 15);
  const Matrix text = random_text(3, 5, rng);
  for (int L : {1, 2, 3, 5, 10, 18}) {
    for (const auto& sched : {vq::ScaleSchedule{{1}}, vq::ScaleSchedule{{2, 8}}, vq::ScaleSchedule{{2, 5, 9, 15}}}) {
      SamplerOptions opt{L, 5.0, 1.0, true};
      const auto res = sample_tokens(m, &text, sched, opt, rng);
      const int N = sched.total_tokens();
      ASSERT_EQ(static_cast<int>(res.trace.masked_after.size()), L);
      for (int l = 1; l <= L; ++l) {
        EXPECT_EQ(res.trace.masked_after[l - 1], oracle::reference_masked_count(l, L, N)) << l << "/" << L;
        const auto& now = res.trace.history[l - 1];
        EXPECT_EQ(std::count(now.begin(), now.end(), mask_token(8)), res.trace.masked_after[l - 1]);
        if (l > 1) {
          const auto& before = res.trace.history[l - 2];
          for (int i = 0; i < N; ++i)
            if (before[i] != mask_token(8)) EXPECT_EQ(now[i], before[i]);
        }
      }
      EXPECT_EQ(res.trace.masked_after.back(), 0);
      for (int t : res.tokens.tokens) EXPECT_TRUE(t >= 0 && t < 8);
    }
  }
}

TEST(Sampler, SeedDeterminesTokens) {
  Rng src(11);
  T2mModel m(mini_config(Conditioning::cross_attention), 16);
  const Matrix text = random_text(3, 5, src);
  const vq::ScaleSchedule sched{{2, 5, 16}};
  Rng a(99), b(99), c(100);
  const auto ra = sample_tokens(m, &text, sched, {}, a);
  const auto rb = sample_tokens(m, &text, sched, {}, b);
  const auto rc = sample_tokens(m, &text, sched, {}, c);
  EXPECT_EQ(ra.tokens.tokens, rb.tokens.tokens);
  EXPECT_NE(ra.tokens.tokens, rc.tokens.tokens);
  EXPECT_EQ(ra.quantized.total_tokens(), 23);
}

TEST(Train, OverfitsSmallCorpus) {
  Rng rng(12);
  const int K = 16;
  T2mConfig c = mini_config(Conditioning::in_context, K);
  c.dim = 32;
  c.heads = 4;
  c.ff = 64;
  c.cfg_dropout = 0.0;
  T2mModel m(c, 17);
  std::vector<T2mExample> data;
  for (int i = 0; i < 32; ++i)
    data.push_back({random_tokens(vq::ScaleSchedule{{2, 8}}, K, rng), random_text(3, 5, rng), std::to_string(i)});
  T2mTrainConfig tc;
  tc.epochs = 150;
  tc.batch_size = 8;
  tc.lr = 3e-3;
  tc.seed = 3;
  const auto report = train_t2m(m, data, tc);
  EXPECT_GT(report.epochs.front().loss, 2.0);
  EXPECT_LT(report.epochs.back().loss, report.epochs.front().loss);

  // held-out corruption draws on the training pairs
  Rng eval(4);
  double total = 0;
  int batches = 0;
  for (int r = 0; r < 8; ++r) {
    std::vector<Corruption> batch;
    std::vector<const Matrix*> texts;
    for (const auto& ex : data) {
      batch.push_back(corrupt_for_training(ex.tokens, eval.uniform(), K, eval));
      texts.push_back(&ex.text);
    }
    total += m.masked_loss(batch, texts).item();
    ++batches;
  }
  EXPECT_LT(total / batches, 0.1);
  EXPECT_EQ(report.latent_range.min, 8);
  EXPECT_EQ(report.latent_range.max, 8);
}

TEST(Checkpoint, RoundTripAndModeGuard) {
  Rng rng(13);
  const auto dir = std::filesystem::temp_directory_path() / "msm_t2m_ckpt";
  std::filesystem::remove_all(dir);
  T2mModel m(mini_config(Conditioning::cross_attention), 18);
  ToyTextEmbedder emb({"a person waves", "a person jumps high"}, 5, 1);
  m.save(dir, &emb, {{"latent_min", 4}});
  ToyTextEmbedder back_emb;
  nlohmann::json stats;
  auto back = T2mModel::load(dir, &back_emb, &stats, Conditioning::cross_attention);
  EXPECT_EQ(stats["latent_min"], 4);
  EXPECT_EQ(back_emb.vocabulary(), emb.vocabulary());
  const auto seq = random_tokens(vq::ScaleSchedule{{2, 8}}, 8, rng);
  const Matrix text = back_emb.embed("a person waves").tokens;
  EXPECT_LT((back->logits(seq, &text) - m.logits(seq, &text)).cwiseAbs().maxCoeff(), 1e-4);
  try {
    T2mModel::load(dir, nullptr, nullptr, Conditioning::in_context);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::config);
  }
  EXPECT_THROW(T2mModel::load(dir / "nope"), Error);
}

TEST(Config, UnknownKeysAndRanges) {
  auto j = mini_config(Conditioning::in_context).to_json();
  EXPECT_EQ(T2mConfig::from_json(j).conditioning, Conditioning::in_context);
  j["cfg_dropout"] = 1.5;
  EXPECT_THROW(T2mConfig::from_json(j), Error);
  auto k = mini_config(Conditioning::in_context).to_json();
  k["layer"] = 3;
  try {
    T2mConfig::from_json(k);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("t2m.layer"), std::string::npos);
  }
  const T2mConfig d;
  EXPECT_EQ(d.layers, 8);
  EXPECT_EQ(d.ff, 1024);
  EXPECT_EQ(d.cfg_dropout, 0.1);
}

TEST(Text, ToyEmbedderVocabularyAndCollisions) {
  ToyTextEmbedder emb({"A person waves the right hand.", "someone jumps; a person kicks"}, 16, 3);
  EXPECT_EQ(emb.vocabulary(), (std::vector<std::string>{"a", "hand", "jumps", "kicks", "person", "right",
                                                         "someone", "the", "waves"}));
  const Matrix& t = emb.table();
  for (Eigen::Index i = 0; i < t.rows(); ++i)
    for (Eigen::Index j = i + 1; j < t.rows(); ++j) EXPECT_GT((t.row(i) - t.row(j)).norm(), 0.1);
  const auto e = emb.embed("The person waves");
  EXPECT_EQ(e.length(), 3);
  EXPECT_EQ(e.tokens.row(0), t.row(7));
  const auto before = log::warning_count();
  emb.embed("a person dances");
  EXPECT_EQ(log::warning_count(), before + 1);
  EXPECT_THROW(emb.embed(" ,. "), Error);
}

TEST(Text, StoreRoundTripAndLookupErrors) {
  const auto dir = std::filesystem::temp_directory_path() / "msm_text_store";
  std::filesystem::remove_all(dir);
  auto store = TextStore::create(dir, 4);
  Rng rng(14);
  Matrix a = random_text(3, 4, rng).cast<float>().cast<double>();
  Matrix b = random_text(5, 4, rng).cast<float>().cast<double>();
  store.put("clip_001#0", a);
  store.put("clip_002#0", b);
  EXPECT_THROW(store.put("clip_003#0", random_text(2, 3, rng)), Error);
  const auto reopened = TextStore::open(dir);
  EXPECT_EQ(reopened.size(), 2u);
  EXPECT_EQ(reopened.get("clip_001#0").tokens, a);
  EXPECT_EQ(reopened.get("clip_002#0").tokens, b);
  EXPECT_EQ(reopened.get("clip_002#0").source, "precomputed_file");
  try {
    reopened.get("clip_001#1");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::missing_artifact);
    EXPECT_NE(std::string(e.what()).find("clip_001#0"), std::string::npos);
  }
  EXPECT_THROW(TextStore::open(dir / "missing"), Error);
}
