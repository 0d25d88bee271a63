#include "msm/t2m/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "msm/core/error.hpp"
#include "msm/core/log.hpp"

namespace msm::t2m {

nlohmann::json SampleTrace::to_json() const { return {{"tokens", tokens}, {"masked_after", masked_after}}; }

SampleResult sample_tokens(T2mModel& model, const Matrix* text, const vq::ScaleSchedule& schedule,
                           const SamplerOptions& opt, Rng& rng) {
  require(opt.iterations >= 1, "sampler needs at least one iteration");
  require(opt.temperature >= 0, "sampler temperature must be >= 0");
  const int K = model.config().codebook_size;
  const int MASK = mask_token(K);
  SampleResult res;
  res.tokens = FlatTokenSequence::layout(schedule, MASK);
  const int N = res.tokens.size();
  res.trace.tokens = N;
  std::vector<char> masked(static_cast<std::size_t>(N), 1);

  for (int l = 1; l <= opt.iterations; ++l) {
    Matrix logits;
    if (text) {
      auto [cond, uncond] = model.guided_pair(res.tokens, *text);
      logits = cfg_logits(cond, uncond, opt.cfg_scale);
    } else {
      logits = model.logits(res.tokens, nullptr);
    }
    const double noise = opt.temperature * (1.0 - static_cast<double>(l) / opt.iterations);
    std::vector<double> confidence(static_cast<std::size_t>(N), std::numeric_limits<double>::infinity());
    std::vector<int> sampled(static_cast<std::size_t>(N), -1);
    std::vector<int> open;
    for (int i = 0; i < N; ++i) {
      if (!masked[i]) continue;
      open.push_back(i);
      const RowVector row = logits.row(i);
      const double mx = row.maxCoeff();
      const RowVector p = (row.array() - mx).exp();
      const double z = p.sum();
      const double u = rng.uniform() * z;
      double acc = 0.0;
      int tok = K - 1;
      for (int k = 0; k < K; ++k) {
        acc += p(k);
        if (u < acc) {
          tok = k;
          break;
        }
      }
      sampled[i] = tok;
      confidence[i] = (row(tok) - mx - std::log(z)) + noise * rng.gumbel();
    }
    const int remask = masked_count(static_cast<double>(l) / opt.iterations, N);
    std::stable_sort(open.begin(), open.end(), [&](int a, int b) { return confidence[a] < confidence[b]; });
    for (std::size_t j = 0; j < open.size(); ++j) {
      const int i = open[j];
      if (static_cast<int>(j) < remask) continue;
      res.tokens.tokens[i] = sampled[i];
      masked[i] = 0;
    }
    res.trace.masked_after.push_back(static_cast<int>(std::count(masked.begin(), masked.end(), 1)));
    if (opt.record_history) res.trace.history.push_back(res.tokens.tokens);
  }
  res.quantized = res.tokens.to_quantized(schedule);
  return res;
}

GenerateResult generate(T2mModel& model, vq::VqModel& vq_model, const motion::NormalizationStats& norm,
                        const Matrix& text, int target_frames, const SamplerOptions& opt, Rng& rng,
                        const LatentRange& range, double fps) {
  require(target_frames >= 1, "target frame count must be positive");
  const auto& vc = vq_model.config();
  require(model.config().codebook_size == vc.codebook_size, "generator and tokenizer codebook sizes differ",
          ErrorKind::config);
  int frames = target_frames;
  int n = vc.latent_length(frames);
  if (n < range.min || n > range.max) {
    const int clamped = std::clamp(n, range.min, range.max);
    log::warn("target of " + std::to_string(target_frames) + " frames is outside the trained range; using " +
              std::to_string(clamped * vc.downscale));
    n = clamped;
    frames = n * vc.downscale;
  }
  GenerateResult out;
  out.sample = sample_tokens(model, &text, vc.schedule(n), opt, rng);
  out.frames = frames;
  out.features.data = motion::denormalize_rows(vq_model.decode_tokens(out.sample.quantized, frames), norm);
  out.features.layout = motion::FeatureLayout::for_width(static_cast<int>(out.features.data.cols()));
  out.features.normalized = false;
  out.features.fps = fps;
  return out;
}

}  // namespace msm::t2m
