#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "msm/core/error.hpp"
#include "msm/core/log.hpp"
#include "msm/core/rng.hpp"
#include "msm/motion/bvh.hpp"
#include "msm/motion/features.hpp"
#include "msm/motion/mirror.hpp"
#include "msm/motion/normalization.hpp"
#include "msm/motion/procedural.hpp"
#include "oracles.hpp"

using namespace msm;
using namespace msm::motion;

namespace {

const SkeletonSpec& skel() { return default_skeleton(); }

// Smooth random motion: every joint follows low-frequency sinusoids.
PoseSequence smooth_motion(std::uint64_t seed, int frames, double amp = 0.8) {
  Rng rng(seed);
  const int J = skel().joint_count();
  PoseSequence p(frames, J, 30.0);
  std::vector<Vec3> a(J), f(J), ph(J);
  for (int j = 0; j < J; ++j)
    for (int k = 0; k < 3; ++k) {
      a[j](k) = rng.uniform(-amp, amp);
      f[j](k) = rng.uniform(0.2, 1.5);
      ph[j](k) = rng.uniform(0, 6.28);
    }
  const double vx = rng.uniform(-1, 1), vz = rng.uniform(-1, 1), yaw0 = rng.uniform(-3, 3);
  for (int t = 0; t < frames; ++t) {
    const double s = t / 30.0;
    p.root(t) = Vec3(vx * s + 0.1 * std::sin(s), 0.9 + 0.05 * std::sin(2 * s), vz * s);
    for (int j = 0; j < J; ++j) {
      Vec3 e;
      for (int k = 0; k < 3; ++k) e(k) = a[j](k) * std::sin(f[j](k) * s + ph[j](k));
      Quat q(Eigen::AngleAxisd(e.z(), Vec3::UnitZ()) * Eigen::AngleAxisd(e.y(), Vec3::UnitY()) *
             Eigen::AngleAxisd(e.x(), Vec3::UnitX()));
      if (j == 0) q = yaw_quat(yaw0 + 0.7 * std::sin(0.5 * s)) * q;
      p.rotation(t, j) = q.normalized();
    }
  }
  return p;
}

double max_position_error(const PoseSequence& a, const PoseSequence& b, int frames) {
  double worst = 0;
  for (int t = 0; t < frames; ++t) {
    const auto pa = forward_kinematics(a, t, skel());
    const auto pb = forward_kinematics(b, t, skel());
    for (std::size_t j = 0; j < pa.size(); ++j) worst = std::max(worst, (pa[j] - pb[j]).norm());
  }
  return worst;
}

std::string error_message(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(FeatureLayout, WidthsAndTags) {
  FeatureLayout full;
  EXPECT_EQ(full.width(), 296);
  EXPECT_EQ(full.contacts() + 4, 296);
  EXPECT_EQ(full.local_velocity(0) - full.local_position(0), 3 * 24);
  FeatureLayout ess{24, true};
  EXPECT_EQ(ess.width(), 148);
  EXPECT_EQ(FeatureLayout::from_tag(full.tag()).width(), 296);
  EXPECT_TRUE(FeatureLayout::from_tag("essential148").essential);
  EXPECT_THROW(FeatureLayout::from_tag("full297"), Error);
  EXPECT_EQ(FeatureLayout::for_width(148).essential, true);
  EXPECT_THROW(FeatureLayout::for_width(150), Error);
}

TEST(Features, StaticTPose) {
  const auto f = extract_features(rest_pose(skel(), 5, 0.9), skel());
  ASSERT_EQ(f.frames(), 4);
  ASSERT_EQ(f.data.cols(), 296);
  const auto& L = f.layout;
  for (int t = 0; t < 4; ++t) {
    EXPECT_EQ(f.data(t, 0), 0.0);
    EXPECT_EQ(f.data(t, 1), 0.0);
    EXPECT_EQ(f.data(t, 2), 0.0);
    EXPECT_DOUBLE_EQ(f.data(t, 3), 0.9);
    for (int j = 0; j < 24; ++j) {
      const double expect[6] = {1, 0, 0, 0, 1, 0};
      for (int k = 0; k < 6; ++k) EXPECT_NEAR(f.data(t, L.rotation(j) + k), expect[k], 1e-15);
      for (int k = 0; k < 3; ++k) EXPECT_EQ(f.data(t, L.local_velocity(j) + k), 0.0);
    }
    for (int c = 0; c < 4; ++c) EXPECT_EQ(f.data(t, L.contacts() + c), 1.0);
  }
}

TEST(Features, Errors) {
  EXPECT_EQ(error_message([] { extract_features(rest_pose(skel(), 1, 0.9), skel()); }), "sequence too short");
  auto p = rest_pose(skel(), 3, 0.9);
  p.rotation(1, 4) = Quat(1.1, 0, 0, 0);
  EXPECT_THROW(extract_features(p, skel()), Error);
}

TEST(Features, HeadingAndTranslationInvariance) {
  const auto p = smooth_motion(11, 40);
  const auto base = extract_features(p, skel());
  const auto shifted = extract_features(transform_globally(p, 0.0, 5.0, -2.5), skel());
  EXPECT_LT((base.data - shifted.data).cwiseAbs().maxCoeff(), 1e-12);
  const auto turned = extract_features(transform_globally(p, M_PI / 2, 5.0, 0.0), skel());
  EXPECT_LT((base.data - turned.data).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Features, MatchScriptedOracleOnArmSwing) {
  PoseSequence p = rest_pose(skel(), 60, 0.93);
  const int l_arm = skel().find("LeftArm");
  const int r_arm = skel().find("RightArm");
  for (int t = 0; t < 60; ++t) {
    const double s = std::sin(2 * M_PI * t / 30.0);
    p.rotation(t, l_arm) = Quat(Eigen::AngleAxisd(0.9 * s, Vec3::UnitX()) * Eigen::AngleAxisd(-1.2, Vec3::UnitZ()));
    p.rotation(t, r_arm) = Quat(Eigen::AngleAxisd(-0.9 * s, Vec3::UnitX()) * Eigen::AngleAxisd(1.2, Vec3::UnitZ()));
    p.rotation(t, 0) = yaw_quat(0.3 + 0.01 * t);
    p.root(t) = Vec3(0.02 * t, 0.93, 0.01 * t);
  }
  const auto f = extract_features(p, skel());
  const Matrix expect = oracle::scripted_features(p, skel());
  ASSERT_EQ(f.data.rows(), expect.rows());
  EXPECT_LT((f.data - expect).cwiseAbs().maxCoeff(), 1e-5);
}

TEST(Features, ScriptedOracleOnRandomMotion) {
  const auto p = smooth_motion(5, 30);
  EXPECT_LT((extract_features(p, skel()).data - oracle::scripted_features(p, skel())).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Recover, ZeroVelocitiesGiveStaticPose) {
  FeatureSequence f;
  f.data = Matrix::Zero(10, 296);
  for (int t = 0; t < 10; ++t)
    for (int j = 0; j < 24; ++j) {
      f.data(t, f.layout.rotation(j)) = 1;
      f.data(t, f.layout.rotation(j) + 4) = 1;
    }
  f.data.col(3).setConstant(1.1);
  const auto p = recover_pose(f, skel(), 0.4, Eigen::Vector2d(2, -3));
  ASSERT_EQ(p.frames(), 10);
  for (int t = 0; t < 10; ++t) {
    EXPECT_NEAR((p.root(t) - Vec3(2, 1.1, -3)).norm(), 0, 1e-12);
    EXPECT_NEAR(yaw_of(p.rotation(t, 0)), 0.4, 1e-12);
  }
}

TEST(Recover, ConstantAngularVelocityIntegrates) {
  FeatureSequence f;
  f.layout = {24, true};
  const int N = 50;
  const double w = 0.05;
  f.data = Matrix::Zero(N, 148);
  for (int t = 0; t < N; ++t)
    for (int j = 0; j < 24; ++j) {
      f.data(t, f.layout.rotation(j)) = 1;
      f.data(t, f.layout.rotation(j) + 4) = 1;
    }
  f.data.col(0).setConstant(w);
  const auto traj = integrate_root(f, 0.2);
  EXPECT_NEAR(wrap_angle(traj.heading.back() - (0.2 + N * w)), 0, 1e-12);
  const auto p = recover_pose(f, skel(), 0.2);
  EXPECT_NEAR(wrap_angle(yaw_of(p.rotation(N - 1, 0)) - (0.2 + (N - 1) * w)), 0, 1e-9);
}

TEST(Recover, RoundTripOnRandomSmoothMotion) {
  for (std::uint64_t seed : {1u, 2u, 3u, 4u}) {
    const auto p = smooth_motion(seed, 90);
    const auto f = extract_features(p, skel());
    const auto q = recover_pose(f, skel(), yaw_of(p.rotation(0, 0)), Eigen::Vector2d(p.root(0).x(), p.root(0).z()));
    EXPECT_LT(max_position_error(p, q, f.frames()), 1e-3) << "seed " << seed;
    const auto e = recover_pose(f.essential(), skel(), yaw_of(p.rotation(0, 0)),
                                Eigen::Vector2d(p.root(0).x(), p.root(0).z()));
    EXPECT_LT(max_position_error(p, e, f.frames()), 1e-3);
  }
}

TEST(Recover, RejectsNormalizedAndDegenerate) {
  auto f = extract_features(rest_pose(skel(), 3, 0.9), skel());
  auto bad = f;
  bad.normalized = true;
  EXPECT_THROW(recover_pose(bad, skel()), Error);
  f.data.block(0, f.layout.rotation(3), 1, 6) << 1, 0, 0, 2, 0, 0;
  EXPECT_EQ(error_message([&] { recover_pose(f, skel()); }), "invalid 6D rotation");
}

TEST(Rotation, GramSchmidtIsOrthonormal) {
  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    double v[6];
    for (double& x : v) x = rng.uniform(-2, 2);
    const Mat3 r = from_6d(std::span<const double, 6>(v));
    EXPECT_LT((r * r.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_NEAR(r.determinant(), 1.0, 1e-9);
  }
}

TEST(Rotation, EulerZyxRoundTrip) {
  Rng rng(8);
  for (int i = 0; i < 200; ++i) {
    const Vec3 e(rng.uniform(-179, 179), rng.uniform(-89, 89), rng.uniform(-179, 179));
    const Mat3 r = from_euler_zyx_deg(e);
    EXPECT_LT((from_euler_zyx_deg(to_euler_zyx_deg(r)) - r).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((r - axis_rotation('Z', e(0)) * axis_rotation('Y', e(1)) * axis_rotation('X', e(2))).norm(), 1e-12);
  }
  const Mat3 gimbal = from_euler_zyx_deg(Vec3(30, 90, 10));
  EXPECT_LT((from_euler_zyx_deg(to_euler_zyx_deg(gimbal)) - gimbal).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Mirror, IsAnExactInvolution) {
  const auto p = smooth_motion(21, 20);
  const auto back = mirror(mirror(p, skel()), skel());
  for (int t = 0; t < p.frames(); ++t) {
    EXPECT_EQ(back.root(t), p.root(t));
    for (int j = 0; j < p.joints(); ++j) EXPECT_EQ(back.rotation(t, j).coeffs(), p.rotation(t, j).coeffs());
  }
}

TEST(Mirror, SymmetricPoseIsFixed) {
  const auto p = synthesize_action(Action::idle, 20, ActionStyle{});
  const auto m = mirror(p, skel());
  for (int t = 0; t < p.frames(); ++t) {
    EXPECT_LT((m.root(t) - p.root(t)).norm(), 1e-6);
    for (int j = 0; j < p.joints(); ++j) EXPECT_LT(angle_between(m.rotation(t, j), p.rotation(t, j)), 1e-6);
  }
}

TEST(Mirror, WaveRightBecomesWaveLeft) {
  const auto p = synthesize_action(Action::wave_right, 30, ActionStyle{});
  const auto m = mirror(p, skel());
  // Hand-built swap table for the arm chain.
  const std::pair<const char*, const char*> swaps[] = {
      {"LeftShoulder", "RightShoulder"}, {"LeftArm", "RightArm"}, {"LeftForeArm", "RightForeArm"}, {"LeftHand", "RightHand"}};
  for (int t = 0; t < p.frames(); ++t) {
    for (auto [l, r] : swaps) {
      const Quat& src = p.rotation(t, skel().find(r));
      const Quat& dst = m.rotation(t, skel().find(l));
      EXPECT_EQ(dst.w(), src.w());
      EXPECT_EQ(dst.x(), src.x());
      EXPECT_EQ(dst.y(), -src.y());
      EXPECT_EQ(dst.z(), -src.z());
    }
  }
  // World-space: the mirrored left hand traces the reflected right hand path.
  const int lh = skel().find("LeftHand"), rh = skel().find("RightHand");
  for (int t = 0; t < p.frames(); ++t) {
    const auto a = forward_kinematics(p, t, skel());
    const auto b = forward_kinematics(m, t, skel());
    EXPECT_LT((b[lh] - Vec3(-a[rh].x(), a[rh].y(), a[rh].z())).norm(), 1e-9);
  }
}

TEST(Mirror, MissingPairIsAnError) {
  SkeletonSpec s = skel();
  s.left_right_pairs.pop_back();
  EXPECT_THROW(mirror(rest_pose(s, 2, 0.9), s), Error);
}

TEST(Normalization, ConstantSequenceClampsToEpsilon) {
  FeatureSequence f;
  f.data = Matrix::Constant(7, 296, 0.25);
  const auto before = log::warning_count();
  const auto s = fit_normalization({f});
  EXPECT_GT(log::warning_count(), before);
  EXPECT_LT((s.mean.array() - 0.25).abs().maxCoeff(), 1e-15);
  EXPECT_TRUE((s.std.array() == s.epsilon).all());
}

TEST(Normalization, ZeroAndTwo) {
  FeatureSequence a, b;
  a.data = Matrix::Zero(5, 296);
  b.data = Matrix::Constant(5, 296, 2.0);
  const auto s = fit_normalization({a, b});
  EXPECT_TRUE((s.mean.array() == 1.0).all());
  EXPECT_TRUE((s.std.array() == 1.0).all());
}

TEST(Normalization, MatchesTwoPassOracleAndRoundTrips) {
  Rng rng(17);
  std::vector<FeatureSequence> corpus;
  std::vector<Matrix> raw;
  for (int i = 0; i < 4; ++i) {
    FeatureSequence f;
    f.data = Matrix(10 + 3 * i, 296);
    for (Eigen::Index k = 0; k < f.data.size(); ++k) f.data.data()[k] = rng.normal() * 3 + 1.5;
    corpus.push_back(f);
    raw.push_back(f.data);
  }
  const auto s = fit_normalization(corpus);
  RowVector mean, sd;
  oracle::two_pass_stats(raw, mean, sd);
  EXPECT_LT((s.mean - mean).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LT((s.std - sd).cwiseAbs().maxCoeff(), 1e-6);
  const auto n = normalize(corpus[2], s);
  EXPECT_TRUE(n.normalized);
  EXPECT_LT((denormalize(n, s).data - corpus[2].data).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_THROW(normalize(n, s), Error);

  const auto path = std::filesystem::temp_directory_path() / "msm_norm_stats.json";
  s.save(path);
  const auto l = NormalizationStats::load(path);
  EXPECT_EQ(l.mean, s.mean);
  EXPECT_EQ(l.std, s.std);
  EXPECT_EQ(l.layout_tag, "full296");
}

TEST(Bvh, OneFrameTPose) {
  const std::string text = write_bvh(rest_pose(skel(), 1, 0.9), skel());
  EXPECT_NE(text.find("\nFrames: 1\n"), std::string::npos);
  EXPECT_NE(text.find("\nFrame Time: 0.033333\n"), std::string::npos);
  EXPECT_NE(text.find("HIERARCHY\nROOT Hips\n{\n  OFFSET 0.000000 0.000000 0.000000\n"), std::string::npos);
  EXPECT_NE(text.find("  JOINT Spine\n  {\n    OFFSET 0.000000 0.100000 0.000000\n    CHANNELS 3 Zrotation Yrotation Xrotation\n"),
            std::string::npos);
  const auto last = text.substr(text.rfind("\n", text.size() - 2) + 1);
  std::istringstream row(last);
  std::vector<double> v;
  double x;
  while (row >> x) v.push_back(x);
  ASSERT_EQ(v.size(), 3u + 3u * 24u);
  EXPECT_EQ(v[1], 0.9);
  for (std::size_t i = 3; i < v.size(); ++i) EXPECT_EQ(v[i], 0.0);
}

TEST(Bvh, RoundTripAngles) {
  const auto p = smooth_motion(9, 25, 1.4);
  const auto path = std::filesystem::temp_directory_path() / "msm_roundtrip.bvh";
  export_bvh(p, skel(), path);
  const auto d = import_bvh(path);
  ASSERT_EQ(d.skeleton.joint_count(), 24);
  EXPECT_EQ(d.skeleton.joint_names, skel().joint_names);
  EXPECT_EQ(d.skeleton.parents, skel().parents);
  EXPECT_EQ(d.skeleton.left_right_pairs.size(), skel().left_right_pairs.size());
  EXPECT_EQ(d.skeleton.end_effectors, skel().end_effectors);
  EXPECT_EQ(d.skeleton.contact_joints, skel().contact_joints);
  EXPECT_EQ(d.pose.fps(), 30.0);
  double worst = 0;
  for (int t = 0; t < p.frames(); ++t) {
    EXPECT_LT((d.pose.root(t) - p.root(t)).norm(), 1e-5);
    for (int j = 0; j < 24; ++j) worst = std::max(worst, angle_between(d.pose.rotation(t, j), p.rotation(t, j)));
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(Bvh, ThirdPartyFixture) {
  // Expected values were read from the file with an independent BVH parser.
  const auto d = import_bvh(std::filesystem::path(MSM_FIXTURE_DIR) / "cmu_style.bvh");
  const auto& s = d.skeleton;
  ASSERT_EQ(s.joint_count(), 25);
  EXPECT_EQ(d.pose.frames(), 4);
  EXPECT_EQ(d.pose.fps(), 120.0);
  EXPECT_EQ(s.offsets[s.find("LeftUpLeg")], Vec3(1.36306, -1.79463, 0.83929));
  EXPECT_EQ(s.offsets[s.find("RightToeBase")], Vec3(-0.16473, -0.45259, 2.36315));
  EXPECT_EQ(s.offsets[s.find("Head")], Vec3(0.10407, 1.76136, -0.12397));
  EXPECT_EQ(s.offsets[s.find("RightArm")], Vec3(-3.1366, 1.37405, -0.40465));
  EXPECT_EQ(s.parents[s.find("LeftShoulder")], s.find("Spine1"));
  EXPECT_EQ(s.parents[s.find("RHipJoint")], 0);
  EXPECT_EQ(d.pose.root(2), Vec3(3.5554, 15.3386, -1.6329));
  // LeftLeg channels are Z X Y = -25.3131 -17.7126 24.5781 in frame 2.
  const Mat3 expect = axis_rotation('Z', -25.3131) * axis_rotation('X', -17.7126) * axis_rotation('Y', 24.5781);
  EXPECT_LT((d.pose.rotation(2, s.find("LeftLeg")).toRotationMatrix() - expect).cwiseAbs().maxCoeff(), 1e-12);
  // LHipJoint/RHipJoint do not follow the Left*/Right* naming.
  EXPECT_EQ(s.left_right_pairs.size(), 8u);
  EXPECT_EQ(s.end_effectors.size(), 5u);
}

TEST(Bvh, ParseErrorsCarryLineNumbers) {
  const std::string good = write_bvh(rest_pose(skel(), 2, 0.9), skel());
  auto line_of = [](const std::string& text) -> std::size_t {
    try {
      parse_bvh(text);
    } catch (const ParseError& e) {
      return e.line();
    }
    return 0;
  };
  // Non-numeric motion value on the last row.
  std::string bad = good;
  const auto last_row = bad.rfind("\n", bad.size() - 2) + 1;
  bad.replace(last_row, 8, "abc 0.0");
  const std::size_t lines = static_cast<std::size_t>(std::count(good.begin(), good.end(), '\n'));
  EXPECT_EQ(line_of(bad), lines);
  // Missing value in the first motion row.
  std::string short_row = good;
  const auto first_row = short_row.find("Frame Time:");
  const auto row_start = short_row.find('\n', first_row) + 1;
  short_row.erase(row_start, short_row.find(' ', row_start) - row_start + 1);
  EXPECT_EQ(line_of(short_row), lines - 1);
  // Malformed hierarchy: drop an OFFSET keyword.
  std::string hier = good;
  hier.replace(hier.find("OFFSET", hier.find("JOINT Spine")), 6, "OFFSTE");
  EXPECT_EQ(line_of(hier), 8u);
  EXPECT_EQ(line_of("HIERARCHY\nROOT Hips\n{\n  OFFSET 0 0 0\n  CHANNELS 2 Zrotation Foo\n"), 5u);
}

TEST(Procedural, ActionsProduceValidClips) {
  for (int a = 0; a < kActionCount; ++a) {
    Rng rng(a);
    const auto p = synthesize_action(static_cast<Action>(a), 65, random_style(rng));
    EXPECT_NO_THROW(p.validate());
    EXPECT_EQ(extract_features(p, skel()).frames(), 64);
    for (int v = 0; v < kCaptionVariations; ++v) EXPECT_FALSE(action_caption(static_cast<Action>(a), v).empty());
  }
  EXPECT_EQ(action_caption(Action::wave_right, 0), "a person waves the right hand.");
}

TEST(Procedural, LongTakeHasStillPauses) {
  Rng rng(2);
  const auto take = synthesize_long_take(40.0, rng);
  EXPECT_EQ(take.pose.frames(), 1200);
  ASSERT_FALSE(take.pause_centers.empty());
  for (int c : take.pause_centers) {
    if (c + 1 >= take.pose.frames()) continue;
    EXPECT_EQ(take.pose.root(c), take.pose.root(c + 1));
  }
}
