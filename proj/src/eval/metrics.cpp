#include "msm/eval/metrics.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "msm/core/error.hpp"
#include "msm/motion/rotation.hpp"

namespace msm::eval {

namespace {

void fit_gaussian(const Matrix& x, double eps, RowVector& mu, Matrix& cov) {
  mu = x.colwise().mean();
  const Matrix c = x.rowwise() - mu;
  cov = (c.transpose() * c) / static_cast<double>(x.rows() - 1);
  cov.diagonal().array() += eps;
}

}  // namespace

Matrix sqrtm_psd(const Matrix& m) {
  const Matrix sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
  require(es.info() == Eigen::Success, "eigendecomposition failed", ErrorKind::numeric);
  const Vector root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

double fid(const Matrix& real, const Matrix& gen, double eps) {
  require(real.rows() >= 2 && gen.rows() >= 2, "FID needs at least two samples per set");
  require(real.cols() == gen.cols(), "FID sets differ in width");
  require(real.allFinite() && gen.allFinite(), "FID input is not finite", ErrorKind::numeric);
  RowVector mr, mg;
  Matrix cr, cg;
  fit_gaussian(real, eps, mr, cr);
  fit_gaussian(gen, eps, mg, cg);
  // Tr sqrt(Cr Cg) = Tr sqrt(Cr^1/2 Cg Cr^1/2), whose argument is symmetric.
  const Matrix rh = sqrtm_psd(cr);
  const Matrix inner = rh * cg * rh;
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (inner + inner.transpose()), Eigen::EigenvaluesOnly);
  require(es.info() == Eigen::Success, "eigendecomposition failed", ErrorKind::numeric);
  const double tr_sqrt = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double d = (mr - mg).squaredNorm() + cr.trace() + cg.trace() - 2.0 * tr_sqrt;
  return std::max(0.0, d);
}

std::vector<double> r_precision_once(const Matrix& motion, const Matrix& text, int pool_size, int top_k, Rng& rng) {
  const auto n = motion.rows();
  require(text.rows() == n && text.cols() == motion.cols(), "R-precision needs paired embeddings of equal width");
  require(pool_size >= 1 && n >= pool_size, "R-precision needs at least pool_size pairs");
  require(top_k >= 1, "R-precision top_k must be >= 1");
  std::vector<double> hits(static_cast<std::size_t>(top_k), 0.0);
  std::vector<Eigen::Index> others(static_cast<std::size_t>(n - 1));
  for (Eigen::Index i = 0; i < n; ++i) {
    std::iota(others.begin(), others.begin() + i, Eigen::Index{0});
    std::iota(others.begin() + i, others.end(), i + 1);
    const double d_true = (motion.row(i) - text.row(i)).norm();
    int closer = 0;
    for (int j = 0; j < pool_size - 1; ++j) {
      const std::size_t pick = j + static_cast<std::size_t>(rng.below(others.size() - j));
      std::swap(others[j], others[pick]);
      if ((motion.row(i) - text.row(others[j])).norm() < d_true) ++closer;
    }
    for (int k = 0; k < top_k; ++k)
      if (closer <= k) hits[k] += 1.0;
  }
  for (auto& h : hits) h /= static_cast<double>(n);
  return hits;
}

nlohmann::json MetricValue::to_json() const {
  return {{"metric", metric}, {"value", value}, {"ci95", ci95}, {"seed", seed}, {"n_repeats", n_repeats}};
}

std::pair<double, double> mean_ci95(const std::vector<double>& xs) {
  require(!xs.empty(), "no samples");
  const double n = static_cast<double>(xs.size());
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, 1.96 * std::sqrt(ss / (n - 1)) / std::sqrt(n)};
}

std::vector<MetricValue> r_precision(const Matrix& motion, const Matrix& text, int pool_size, int top_k,
                                     std::uint64_t seed, int repeats) {
  require(repeats >= 1, "R-precision needs at least one repeat");
  Rng rng(seed);
  std::vector<std::vector<double>> per_k(static_cast<std::size_t>(top_k));
  for (int r = 0; r < repeats; ++r) {
    const auto hits = r_precision_once(motion, text, pool_size, top_k, rng);
    for (int k = 0; k < top_k; ++k) per_k[k].push_back(hits[k]);
  }
  std::vector<MetricValue> out;
  for (int k = 0; k < top_k; ++k) {
    const auto [m, ci] = mean_ci95(per_k[k]);
    out.push_back({"r_precision_top" + std::to_string(k + 1), m, ci, seed, repeats});
  }
  return out;
}

double mm_dist(const Matrix& motion, const Matrix& text) {
  require(motion.rows() == text.rows() && motion.cols() == text.cols() && motion.rows() >= 1,
          "MM-Dist needs paired embeddings");
  return (motion - text).rowwise().norm().mean();
}

double clip_score(const Matrix& motion, const Matrix& text) {
  require(motion.rows() == text.rows() && motion.cols() == text.cols() && motion.rows() >= 1,
          "CLIP score needs paired embeddings");
  double total = 0;
  for (Eigen::Index i = 0; i < motion.rows(); ++i) {
    const double denom = motion.row(i).norm() * text.row(i).norm();
    require(denom > 0, "CLIP score is undefined for zero embeddings", ErrorKind::numeric);
    total += motion.row(i).dot(text.row(i)) / denom;
  }
  return total / static_cast<double>(motion.rows());
}

double mmodality(const std::vector<Matrix>& per_caption, int pairs, Rng& rng) {
  require(!per_caption.empty(), "MModality needs at least one caption");
  require(pairs >= 1, "MModality needs at least one pair");
  double total = 0;
  for (const auto& g : per_caption) {
    require(g.rows() >= 2 * pairs, "MModality needs 2 x pairs generations per caption");
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(g.rows()));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    rng.shuffle(idx);
    double sum = 0;
    for (int p = 0; p < pairs; ++p) sum += (g.row(idx[2 * p]) - g.row(idx[2 * p + 1])).norm();
    total += sum / pairs;
  }
  return total / static_cast<double>(per_caption.size());
}

double diversity(const Matrix& emb, int pairs, Rng& rng) {
  require(emb.rows() >= 2, "diversity needs at least two samples");
  require(pairs >= 1, "diversity needs at least one pair");
  const auto n = static_cast<std::uint64_t>(emb.rows());
  double sum = 0;
  for (int p = 0; p < pairs; ++p) {
    const auto i = rng.below(n);
    auto j = rng.below(n - 1);
    if (j >= i) ++j;
    sum += (emb.row(static_cast<Eigen::Index>(i)) - emb.row(static_cast<Eigen::Index>(j))).norm();
  }
  return sum / pairs;
}

double joint_position_error(const std::vector<std::vector<motion::Vec3>>& gt,
                            const std::vector<std::vector<motion::Vec3>>& rec) {
  require(!gt.empty() && gt.size() == rec.size(), "joint error needs sequences of equal length");
  double total = 0;
  std::size_t count = 0;
  for (std::size_t t = 0; t < gt.size(); ++t) {
    require(gt[t].size() == rec[t].size(), "joint error needs equal joint counts");
    for (std::size_t j = 0; j < gt[t].size(); ++j) {
      total += (gt[t][j] - rec[t][j]).norm();
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

namespace {

std::vector<std::vector<motion::Vec3>> aligned_positions(const motion::PoseSequence& p,
                                                         const motion::SkeletonSpec& skel) {
  auto pos = motion::forward_kinematics(p, skel);
  const motion::Vec3 origin(p.root(0).x(), 0.0, p.root(0).z());
  const motion::Quat undo = motion::yaw_quat(-motion::yaw_of(p.rotation(0, 0)));
  for (auto& frame : pos)
    for (auto& v : frame) v = undo * (v - origin);
  return pos;
}

}  // namespace

double joint_position_error(const motion::PoseSequence& gt, const motion::PoseSequence& rec,
                            const motion::SkeletonSpec& skel) {
  require(gt.frames() == rec.frames(), "joint error needs sequences of equal length");
  return joint_position_error(aligned_positions(gt, skel), aligned_positions(rec, skel));
}

void validate_report(const nlohmann::json& report) {
  auto bad = [](const std::string& what) { fail(ErrorKind::data_validation, "metrics report: " + what); };
  if (!report.is_object() || !report.contains("metrics") || !report["metrics"].is_array())
    bad("missing metrics array");
  for (const auto& m : report["metrics"]) {
    if (!m.is_object()) bad("entry is not an object");
    for (const char* k : {"metric", "value", "ci95", "seed", "n_repeats"})
      if (!m.contains(k)) bad(std::string("entry lacks '") + k + "'");
    if (!m["metric"].is_string()) bad("metric name is not a string");
    if (!m["value"].is_number() || !m["ci95"].is_number()) bad("value and ci95 must be numbers");
    if (!m["seed"].is_number_unsigned() && !m["seed"].is_number_integer()) bad("seed must be an integer");
    if (!m["n_repeats"].is_number_integer() || m["n_repeats"].get<int>() < 1) bad("n_repeats must be >= 1");
    if (m["ci95"].get<double>() < 0) bad("ci95 must be >= 0");
  }
}

}  // namespace msm::eval
