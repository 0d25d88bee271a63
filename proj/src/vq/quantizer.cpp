#include "msm/vq/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "msm/core/error.hpp"

namespace msm::vq {

Matrix interpolation_matrix(int src_len, int dst_len) {
  require(src_len >= 1 && dst_len >= 1, "interpolation lengths must be positive");
  Matrix w = Matrix::Zero(dst_len, src_len);
  if (src_len == dst_len) return Matrix::Identity(dst_len, src_len);
  if (src_len == 1 || dst_len == 1) {
    // A single source sample replicates; a single target takes the start.
    if (src_len == 1) w.col(0).setOnes();
    else w(0, 0) = 1.0;
    return w;
  }
  for (int i = 0; i < dst_len; ++i) {
    const double pos = static_cast<double>(i) * (src_len - 1) / (dst_len - 1);
    int lo = static_cast<int>(std::floor(pos));
    if (lo >= src_len - 1) lo = src_len - 2;
    const double frac = pos - lo;
    w(i, lo) += 1.0 - frac;
    w(i, lo + 1) += frac;
  }
  return w;
}

Matrix interpolate(const Matrix& seq, int target_len) {
  if (seq.rows() == target_len) return seq;
  return interpolation_matrix(static_cast<int>(seq.rows()), target_len) * seq;
}

int ScaleSchedule::total_tokens() const {
  int total = 0;
  for (int h : lengths) total += h;
  return total;
}

void ScaleSchedule::validate(int n) const {
  require(!lengths.empty(), "scale schedule is empty");
  // a schedule of repeated full-length layers is the residual baseline
  const bool full = std::all_of(lengths.begin(), lengths.end(), [&](int l) { return l == n; });
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    require(lengths[i] >= 1, "scale lengths must be >= 1");
    if (i > 0 && !full) require(lengths[i] > lengths[i - 1], "scale lengths must be strictly increasing");
  }
  require(lengths.back() == n, "last scale length " + std::to_string(lengths.back()) +
                                   " does not match latent length " + std::to_string(n));
}

ScaleSchedule ScaleSchedule::from_ratios(int n, const std::vector<double>& ratios) {
  require(!ratios.empty(), "scale ratios are empty");
  ScaleSchedule s;
  for (double r : ratios) s.lengths.push_back(std::max(1, static_cast<int>(std::lround(r * n))));
  s.validate(n);
  return s;
}

ScaleSchedule ScaleSchedule::halving(int n, int extra_layers) {
  std::vector<double> ratios;
  for (int v = extra_layers; v >= 0; --v) ratios.push_back(std::ldexp(1.0, -v));
  return from_ratios(n, ratios);
}

ScaleSchedule ScaleSchedule::full_scale(int n, int extra_layers) {
  ScaleSchedule s;
  s.lengths.assign(static_cast<std::size_t>(extra_layers + 1), n);
  return s;
}

Codebook::Codebook(int size, int dim, double decay)
    : codes_(Matrix::Zero(size, dim)),
      ema_counts_(Vector::Ones(size)),
      ema_sums_(Matrix::Zero(size, dim)),
      usage_(static_cast<std::size_t>(size), 0),
      decay_(decay) {
  require(size >= 2, "codebook needs at least 2 entries");
  require(dim > 0, "codebook dimension must be positive");
  require(decay > 0 && decay < 1, "codebook decay must lie in (0, 1)");
}

void Codebook::set_codes(const Matrix& codes) {
  require(codes.rows() == size() && codes.cols() == dim(), "codebook shape mismatch");
  require(codes.allFinite(), "codebook entries must be finite", ErrorKind::numeric);
  codes_ = codes;
  ema_counts_ = Vector::Ones(size());
  ema_sums_ = codes;
  initialized_ = true;
}

void Codebook::set_state(const Matrix& codes, const Vector& counts, const Matrix& sums) {
  require(codes.rows() == size() && codes.cols() == dim() && counts.size() == size() && sums.rows() == size() &&
              sums.cols() == dim(),
          "codebook state shape mismatch", ErrorKind::data_validation);
  codes_ = codes;
  ema_counts_ = counts;
  ema_sums_ = sums;
  initialized_ = true;
}

void Codebook::initialize_from(const Matrix& vectors, Rng& rng) {
  require(vectors.rows() >= 1 && vectors.cols() == dim(), "codebook init vectors have the wrong shape");
  std::vector<int> order(static_cast<std::size_t>(vectors.rows()));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  rng.shuffle(order);
  Matrix codes(size(), dim());
  for (int k = 0; k < size(); ++k) {
    const int src = k < static_cast<int>(order.size()) ? order[k] : static_cast<int>(rng.below(order.size()));
    codes.row(k) = vectors.row(src);
    if (k >= static_cast<int>(order.size())) {
      for (int c = 0; c < dim(); ++c) codes(k, c) += 1e-3 * rng.normal();
    }
  }
  set_codes(codes);
}

int Codebook::nearest(const Eigen::Ref<const RowVector>& x) const {
  require(size() > 0, "codebook is empty");
  require(x.size() == dim(), "vector width does not match codebook");
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  const int K = size(), D = dim();
  for (int k = 0; k < K; ++k) {
    double d = 0;
    for (int c = 0; c < D; ++c) {
      const double diff = x(c) - codes_(k, c);
      d += diff * diff;
    }
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

std::vector<int> Codebook::nearest_rows(const Matrix& x) const {
  std::vector<int> out(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index r = 0; r < x.rows(); ++r) out[r] = nearest(x.row(r));
  return out;
}

Matrix Codebook::lookup(const std::vector<int>& indices) const {
  Matrix out(static_cast<Eigen::Index>(indices.size()), dim());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= size()) {
      fail(ErrorKind::invalid_argument, "token " + std::to_string(indices[i]) + " out of range for codebook of size " +
                                            std::to_string(size()));
    }
    out.row(static_cast<Eigen::Index>(i)) = codes_.row(indices[i]);
  }
  return out;
}

void Codebook::ema_update(const std::vector<int>& indices, const Matrix& vectors) {
  require(static_cast<Eigen::Index>(indices.size()) == vectors.rows(), "assignment count mismatch");
  require(vectors.rows() == 0 || vectors.cols() == dim(), "assignment vectors have the wrong width");
  Vector counts = Vector::Zero(size());
  Matrix sums = Matrix::Zero(size(), dim());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const int k = indices[i];
    require(k >= 0 && k < size(), "assignment index out of range");
    counts(k) += 1.0;
    sums.row(k) += vectors.row(static_cast<Eigen::Index>(i));
    ++usage_[k];
  }
  ema_counts_ = decay_ * ema_counts_ + (1.0 - decay_) * counts;
  ema_sums_ = decay_ * ema_sums_ + (1.0 - decay_) * sums;
  for (int k = 0; k < size(); ++k) {
    if (counts(k) > 0) codes_.row(k) = ema_sums_.row(k) / (ema_counts_(k) + kEps);
  }
}

int Codebook::reset_dead_codes(const Matrix& pool, Rng& rng) {
  int reset = 0;
  if (pool.rows() > 0) {
    for (int k = 0; k < size(); ++k) {
      if (usage_[k] != 0) continue;
      const auto src = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(pool.rows())));
      codes_.row(k) = pool.row(src);
      ema_sums_.row(k) = pool.row(src);
      ema_counts_(k) = 1.0;
      ++reset;
    }
  }
  clear_usage();
  return reset;
}

double Codebook::perplexity() const {
  double total = 0;
  for (auto u : usage_) total += static_cast<double>(u);
  if (total <= 0) return 0.0;
  double h = 0;
  for (auto u : usage_) {
    if (u == 0) continue;
    const double p = static_cast<double>(u) / total;
    h -= p * std::log(p);
  }
  return std::exp(h);
}

void Codebook::clear_usage() { std::fill(usage_.begin(), usage_.end(), 0); }

int QuantizedMotion::total_tokens() const {
  int total = 0;
  for (const auto& s : token_seqs) total += static_cast<int>(s.size());
  return total;
}

std::vector<int> QuantizedMotion::flatten() const {
  std::vector<int> out;
  for (const auto& s : token_seqs) out.insert(out.end(), s.begin(), s.end());
  return out;
}

QuantizedMotion QuantizedMotion::unflatten(const std::vector<int>& flat, const ScaleSchedule& schedule) {
  require(static_cast<int>(flat.size()) == schedule.total_tokens(), "token count does not match schedule");
  QuantizedMotion q;
  q.schedule = schedule;
  std::size_t at = 0;
  for (int h : schedule.lengths) {
    q.token_seqs.emplace_back(flat.begin() + static_cast<std::ptrdiff_t>(at),
                              flat.begin() + static_cast<std::ptrdiff_t>(at + h));
    at += static_cast<std::size_t>(h);
  }
  return q;
}

nlohmann::json QuantizedMotion::to_json() const {
  return {{"schedule", schedule.lengths}, {"token_seqs", token_seqs}};
}

QuantizedMotion QuantizedMotion::from_json(const nlohmann::json& j) {
  QuantizedMotion q;
  try {
    q.schedule.lengths = j.at("schedule").get<std::vector<int>>();
    q.token_seqs = j.at("token_seqs").get<std::vector<std::vector<int>>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::data_validation, std::string("malformed token dump: ") + e.what());
  }
  require(q.schedule.layers() == static_cast<int>(q.token_seqs.size()), "token layers do not match schedule",
          ErrorKind::data_validation);
  for (int v = 0; v < q.schedule.layers(); ++v) {
    require(static_cast<int>(q.token_seqs[v].size()) == q.schedule.lengths[v], "token layer length mismatch",
            ErrorKind::data_validation);
  }
  return q;
}

QuantizeResult quantize(const Matrix& f, const ScaleSchedule& schedule, const CodebookFor& codebook) {
  const int n = static_cast<int>(f.rows());
  schedule.validate(n);
  QuantizeResult out;
  out.tokens.schedule = schedule;
  out.reconstruction = Matrix::Zero(f.rows(), f.cols());
  Matrix residual = f;
  for (int v = 0; v < schedule.layers(); ++v) {
    const Codebook& cb = codebook(v);
    require(cb.size() > 0, "codebook is empty");
    const int h = schedule.lengths[v];
    Matrix at_scale = interpolate(residual, h);
    std::vector<int> idx = cb.nearest_rows(at_scale);
    Matrix codes = cb.lookup(idx);
    const Matrix up = interpolate(codes, n);
    residual -= up;
    out.reconstruction += up;
    out.tokens.token_seqs.push_back(std::move(idx));
    out.layer_inputs.push_back(std::move(at_scale));
    out.layer_codes.push_back(std::move(codes));
  }
  out.final_residual = std::move(residual);
  return out;
}

QuantizeResult quantize(const Matrix& f, const ScaleSchedule& schedule, const Codebook& shared) {
  return quantize(f, schedule, [&](int) -> const Codebook& { return shared; });
}

Matrix dequantize(const QuantizedMotion& q, const CodebookFor& codebook, int upto) {
  const int layers = static_cast<int>(q.token_seqs.size());
  require(layers == q.schedule.layers(), "token layers do not match schedule");
  if (upto < 0) upto = layers - 1;
  require(upto < layers, "prefix layer out of range");
  const int n = q.schedule.full_length();
  Matrix out;
  for (int v = 0; v <= upto; ++v) {
    require(static_cast<int>(q.token_seqs[v].size()) == q.schedule.lengths[v], "token layer length mismatch");
    const Matrix up = interpolate(codebook(v).lookup(q.token_seqs[v]), n);
    if (v == 0) out = up;
    else out += up;
  }
  return out;
}

Matrix dequantize(const QuantizedMotion& q, const Codebook& shared, int upto) {
  return dequantize(q, [&](int) -> const Codebook& { return shared; }, upto);
}

}  // namespace msm::vq
