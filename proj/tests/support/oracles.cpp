#include "oracles.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

namespace msm::oracle {

namespace {

using motion::Mat3;
using motion::Vec3;

Mat3 rot_y(double a) {
  Mat3 m;
  m << std::cos(a), 0, std::sin(a), 0, 1, 0, -std::sin(a), 0, std::cos(a);
  return m;
}

struct Frame {
  std::vector<Mat3> world_rot;
  std::vector<Vec3> world_pos;
};

Frame fk(const motion::PoseSequence& p, int t, const motion::SkeletonSpec& s) {
  Frame f;
  const int J = s.joint_count();
  f.world_rot.resize(J);
  f.world_pos.resize(J);
  for (int j = 0; j < J; ++j) {
    const Mat3 local = p.rotation(t, j).toRotationMatrix();
    if (s.parents[j] < 0) {
      f.world_rot[j] = local;
      f.world_pos[j] = p.root(t);
    } else {
      const int q = s.parents[j];
      f.world_rot[j] = f.world_rot[q] * local;
      f.world_pos[j] = f.world_pos[q] + f.world_rot[q] * s.offsets[j];
    }
  }
  return f;
}

}  // namespace

Matrix scripted_features(const motion::PoseSequence& pose, const motion::SkeletonSpec& skel) {
  const int J = skel.joint_count();
  const int N = pose.frames();
  Matrix out = Matrix::Zero(N - 1, 4 + 12 * J + 4);
  for (int t = 0; t + 1 < N; ++t) {
    const Frame a = fk(pose, t, skel);
    const Frame b = fk(pose, t + 1, skel);
    // Facing direction = world image of +Z, projected onto the ground.
    const double ha = std::atan2(a.world_rot[0](0, 2), a.world_rot[0](2, 2));
    const double hb = std::atan2(b.world_rot[0](0, 2), b.world_rot[0](2, 2));
    const Mat3 undo = rot_y(-ha);
    int c = 0;
    out(t, c++) = std::atan2(std::sin(hb - ha), std::cos(hb - ha));
    const Vec3 d = undo * Vec3(b.world_pos[0].x() - a.world_pos[0].x(), 0, b.world_pos[0].z() - a.world_pos[0].z());
    out(t, c++) = d.x();
    out(t, c++) = d.z();
    out(t, c++) = a.world_pos[0].y();
    for (int j = 0; j < J; ++j) {
      const Mat3 r = j == 0 ? Mat3(undo * a.world_rot[0]) : Mat3(pose.rotation(t, j).toRotationMatrix());
      for (int col = 0; col < 2; ++col)
        for (int row = 0; row < 3; ++row) out(t, c++) = r(row, col);
    }
    const Vec3 origin(a.world_pos[0].x(), 0, a.world_pos[0].z());
    for (int j = 0; j < J; ++j) {
      const Vec3 v = undo * (a.world_pos[j] - origin);
      for (int k = 0; k < 3; ++k) out(t, c++) = v(k);
    }
    for (int j = 0; j < J; ++j) {
      const Vec3 v = undo * (b.world_pos[j] - a.world_pos[j]);
      for (int k = 0; k < 3; ++k) out(t, c++) = v(k);
    }
    for (int j : skel.contact_joints) out(t, c++) = (b.world_pos[j] - a.world_pos[j]).norm() < 0.02 ? 1.0 : 0.0;
  }
  return out;
}

std::vector<int> brute_force_minima(const std::vector<double>& x) {
  std::vector<int> out;
  for (std::size_t i = 1; i + 1 < x.size(); ++i) {
    if (x[i - 1] > x[i] && x[i] < x[i + 1]) out.push_back(static_cast<int>(i));
  }
  return out;
}

void two_pass_stats(const std::vector<Matrix>& corpus, RowVector& mean, RowVector& stddev) {
  const auto D = corpus.front().cols();
  mean = RowVector::Zero(D);
  stddev = RowVector::Zero(D);
  double n = 0;
  for (const auto& m : corpus)
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < D; ++c) mean(c) += m(r, c);
      n += 1;
    }
  mean /= n;
  for (const auto& m : corpus)
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < D; ++c) stddev(c) += (m(r, c) - mean(c)) * (m(r, c) - mean(c));
  for (Eigen::Index c = 0; c < D; ++c) stddev(c) = std::sqrt(stddev(c) / n);
}

int brute_force_nearest(const Matrix& codes, const RowVector& x) {
  int best = -1;
  long double best_d = 0;
  for (Eigen::Index k = 0; k < codes.rows(); ++k) {
    long double d = 0;
    for (Eigen::Index c = 0; c < codes.cols(); ++c) {
      const long double diff = static_cast<long double>(x(c)) - codes(k, c);
      d += diff * diff;
    }
    if (best < 0 || d < best_d) {
      best = static_cast<int>(k);
      best_d = d;
    }
  }
  return best;
}

Matrix hand_interpolate(const Matrix& src, int target_len) {
  const auto L = src.rows();
  Matrix out(target_len, src.cols());
  for (int i = 0; i < target_len; ++i) {
    if (L == 1) {
      out.row(i) = src.row(0);
      continue;
    }
    const double pos = target_len == 1 ? 0.0 : static_cast<double>(i) * (L - 1) / (target_len - 1);
    const auto a = std::min<Eigen::Index>(static_cast<Eigen::Index>(pos), L - 2);
    const double w = pos - static_cast<double>(a);
    out.row(i) = (1 - w) * src.row(a) + w * src.row(a + 1);
  }
  return out;
}

int reference_masked_count(int l, int L, int n) {
  const long double pi = 3.141592653589793238462643383279502884L;
  long double g = std::cos(pi * static_cast<long double>(l) / (2.0L * static_cast<long double>(L)));
  if (l == 0) g = 1.0L;
  if (l == L) g = 0.0L;
  const long double x = g * static_cast<long double>(n);
  const long double r = std::round(x);
  return static_cast<int>(std::fabs(x - r) < 1e-12L ? r : std::ceil(x));
}

double reference_fid(const Matrix& a, const Matrix& b, double eps) {
  auto moments = [eps](const Matrix& x, RowVector& mu, Matrix& cov) {
    mu = RowVector::Zero(x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) mu += x.row(i);
    mu /= static_cast<double>(x.rows());
    cov = Matrix::Zero(x.cols(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const RowVector d = x.row(i) - mu;
      cov += d.transpose() * d;
    }
    cov /= static_cast<double>(x.rows() - 1);
    cov += eps * Matrix::Identity(x.cols(), x.cols());
  };
  RowVector ma, mb;
  Matrix ca, cb;
  moments(a, ma, ca);
  moments(b, mb, cb);
  // Tr sqrt(A B) is the sum of square roots of the eigenvalues of A B, which
  // are real and non-negative for symmetric positive definite A and B.
  Eigen::EigenSolver<Matrix> es(ca * cb);
  double tr_sqrt = 0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) tr_sqrt += std::sqrt(std::max(0.0, es.eigenvalues()(i).real()));
  return (ma - mb).squaredNorm() + ca.trace() + cb.trace() - 2.0 * tr_sqrt;
}

double scripted_joint_error(const motion::PoseSequence& gt, const motion::PoseSequence& rec,
                            const motion::SkeletonSpec& skel) {
  auto aligned = [&](const motion::PoseSequence& p, int t) {
    const Frame f0 = fk(p, 0, skel);
    const Frame f = fk(p, t, skel);
    const double h = std::atan2(f0.world_rot[0](0, 2), f0.world_rot[0](2, 2));
    const Mat3 undo = rot_y(-h);
    const Vec3 origin(f0.world_pos[0].x(), 0, f0.world_pos[0].z());
    std::vector<Vec3> out;
    for (const auto& v : f.world_pos) out.push_back(undo * (v - origin));
    return out;
  };
  long double total = 0;
  long count = 0;
  for (int t = 0; t < gt.frames(); ++t) {
    const auto a = aligned(gt, t), b = aligned(rec, t);
    for (std::size_t j = 0; j < a.size(); ++j, ++count) total += (a[j] - b[j]).norm();
  }
  return static_cast<double>(total / count);
}

}  // namespace msm::oracle
