#include "msm/motion/procedural.hpp"

#include <array>
#include <cmath>

#include "msm/core/error.hpp"

namespace msm::motion {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kStandHeight = 0.94;

struct ActionInfo {
  const char* name;
  std::array<const char*, 2> verbs;  // combined with subjects below
};

// Indexed by Action.
const std::array<ActionInfo, kActionCount> kActions = {{
    {"wave_right", {"waves the right hand", "raises the right hand and waves it"}},
    {"wave_left", {"waves the left hand", "raises the left hand and waves it"}},
    {"walk_forward", {"walks forward", "takes several steps forward"}},
    {"walk_backward", {"walks backward", "steps backward slowly"}},
    {"turn_left", {"turns to the left", "rotates the body toward the left"}},
    {"turn_right", {"turns to the right", "rotates the body toward the right"}},
    {"jump", {"jumps in place", "hops up and down"}},
    {"squat", {"squats down and stands up", "does a deep squat"}},
    {"raise_arms", {"raises both arms overhead", "lifts both arms up high"}},
    {"clap", {"claps the hands in front of the chest", "claps repeatedly"}},
    {"kick_right", {"kicks forward with the right leg", "does a right leg kick"}},
    {"kick_left", {"kicks forward with the left leg", "does a left leg kick"}},
    {"bow", {"bows forward", "bends at the waist in a bow"}},
    {"side_step_left", {"side steps to the left", "shuffles sideways to the left"}},
    {"side_step_right", {"side steps to the right", "shuffles sideways to the right"}},
    {"punch_right", {"punches forward with the right fist", "throws a right punch"}},
    {"punch_left", {"punches forward with the left fist", "throws a left punch"}},
    {"idle", {"stands still", "stands idle and breathes"}},
    {"spin", {"spins around in a full circle", "turns around quickly on the spot"}},
    {"run", {"runs forward", "jogs forward quickly"}},
}};

const std::array<const char*, 5> kSubjects = {"a person", "someone", "the man", "a woman", "the character"};

Quat euler(double x, double y, double z) {
  return Quat(Eigen::AngleAxisd(z, Vec3::UnitZ()) * Eigen::AngleAxisd(y, Vec3::UnitY()) *
              Eigen::AngleAxisd(x, Vec3::UnitX()));
}

struct Rig {
  const SkeletonSpec& s = default_skeleton();
  int spine = s.find("Spine"), spine1 = s.find("Spine1"), neck = s.find("Neck");
  int l_shoulder = s.find("LeftShoulder"), r_shoulder = s.find("RightShoulder");
  int l_arm = s.find("LeftArm"), r_arm = s.find("RightArm");
  int l_fore = s.find("LeftForeArm"), r_fore = s.find("RightForeArm");
  int l_upleg = s.find("LeftUpLeg"), r_upleg = s.find("RightUpLeg");
  int l_leg = s.find("LeftLeg"), r_leg = s.find("RightLeg");
  int l_foot = s.find("LeftFoot"), r_foot = s.find("RightFoot");
};

}  // namespace

std::string action_name(Action a) { return kActions.at(static_cast<std::size_t>(a)).name; }

std::string action_caption(Action a, int variation) {
  require(variation >= 0 && variation < kCaptionVariations, "caption variation out of range");
  const auto& info = kActions.at(static_cast<std::size_t>(a));
  const std::string subject = kSubjects[static_cast<std::size_t>(variation % 5)];
  return subject + " " + info.verbs[static_cast<std::size_t>(variation / 5)] + ".";
}

ActionStyle random_style(Rng& rng) {
  ActionStyle s;
  s.amplitude = rng.uniform(0.8, 1.2);
  s.tempo = rng.uniform(0.85, 1.15);
  s.phase = rng.uniform(0.0, 2 * kPi);
  s.heading = rng.uniform(-kPi, kPi);
  return s;
}

PoseSequence synthesize_action(Action a, int frames, const ActionStyle& style, double fps) {
  require(frames >= 1 && fps > 0, "invalid clip length");
  static const Rig rig;
  const int J = rig.s.joint_count();
  PoseSequence pose(frames, J, fps);
  const double A = style.amplitude;
  double yaw = style.heading;
  Vec3 pos(0, kStandHeight, 0);
  for (int t = 0; t < frames; ++t) {
    const double sec = t / fps;
    const double w = 2 * kPi * style.tempo;  // one cycle per second at tempo 1
    const double ph = w * sec + style.phase;
    const double s = std::sin(ph);
    const double c = std::cos(ph);
    std::vector<Quat> q(static_cast<std::size_t>(J), Quat::Identity());
    // Relaxed arms hang down by default.
    q[rig.l_arm] = euler(0, 0, -1.2);
    q[rig.r_arm] = euler(0, 0, 1.2);
    double height = kStandHeight;
    Vec3 local_vel(0, 0, 0);  // m/s in the character frame
    double yaw_rate = 0.0;     // rad/s

    auto gait = [&](double stride, double bounce) {
      q[rig.l_upleg] = euler(-stride * s, 0, 0);
      q[rig.r_upleg] = euler(stride * s, 0, 0);
      q[rig.l_leg] = euler(stride * 0.8 * std::max(0.0, c), 0, 0);
      q[rig.r_leg] = euler(stride * 0.8 * std::max(0.0, -c), 0, 0);
      q[rig.l_arm] = euler(stride * 0.7 * s, 0, -1.2);
      q[rig.r_arm] = euler(-stride * 0.7 * s, 0, 1.2);
      height = kStandHeight - bounce * (1 - std::abs(c));
    };

    switch (a) {
      case Action::wave_right:
        q[rig.r_arm] = euler(0, 0, -1.3 * A);
        q[rig.r_fore] = euler(0, 0, -0.8 - 0.5 * A * s);
        break;
      case Action::wave_left:
        q[rig.l_arm] = euler(0, 0, 1.3 * A);
        q[rig.l_fore] = euler(0, 0, 0.8 + 0.5 * A * s);
        break;
      case Action::walk_forward:
        gait(0.5 * A, 0.03);
        local_vel = Vec3(0, 0, 1.1 * style.tempo);
        break;
      case Action::walk_backward:
        gait(0.35 * A, 0.02);
        local_vel = Vec3(0, 0, -0.6 * style.tempo);
        break;
      case Action::turn_left:
        gait(0.2 * A, 0.01);
        yaw_rate = 1.2 * A;
        break;
      case Action::turn_right:
        gait(0.2 * A, 0.01);
        yaw_rate = -1.2 * A;
        break;
      case Action::jump: {
        const double hop = std::max(0.0, s);
        height = kStandHeight + 0.25 * A * hop * hop - 0.1 * std::max(0.0, -s);
        q[rig.l_upleg] = q[rig.r_upleg] = euler(-0.6 * std::max(0.0, -s), 0, 0);
        q[rig.l_leg] = q[rig.r_leg] = euler(1.1 * std::max(0.0, -s), 0, 0);
        q[rig.l_arm] = euler(-0.8 * hop, 0, -1.2);
        q[rig.r_arm] = euler(-0.8 * hop, 0, 1.2);
        break;
      }
      case Action::squat: {
        const double d = 0.5 * (1 - std::cos(0.5 * ph)) * A;
        height = kStandHeight - 0.35 * d;
        q[rig.l_upleg] = q[rig.r_upleg] = euler(-1.2 * d, 0, 0);
        q[rig.l_leg] = q[rig.r_leg] = euler(1.9 * d, 0, 0);
        q[rig.l_foot] = q[rig.r_foot] = euler(-0.6 * d, 0, 0);
        q[rig.spine] = euler(0.5 * d, 0, 0);
        q[rig.l_arm] = euler(-1.2 * d, 0, -1.2 * (1 - d));
        q[rig.r_arm] = euler(-1.2 * d, 0, 1.2 * (1 - d));
        break;
      }
      case Action::raise_arms: {
        const double d = 0.5 * (1 - std::cos(0.5 * ph)) * A;
        q[rig.l_arm] = euler(0, 0, -1.2 + 2.6 * d);
        q[rig.r_arm] = euler(0, 0, 1.2 - 2.6 * d);
        break;
      }
      case Action::clap: {
        const double open = 0.5 + 0.5 * s;
        q[rig.l_arm] = euler(0, -1.3 + 0.6 * open * A, -0.3);
        q[rig.r_arm] = euler(0, 1.3 - 0.6 * open * A, 0.3);
        q[rig.l_fore] = euler(0, -0.4, 0);
        q[rig.r_fore] = euler(0, 0.4, 0);
        break;
      }
      case Action::kick_right:
        q[rig.r_upleg] = euler(-1.2 * A * std::max(0.0, s), 0, 0);
        q[rig.r_leg] = euler(0.6 * std::max(0.0, c), 0, 0);
        q[rig.spine] = euler(-0.15 * std::max(0.0, s), 0, 0);
        break;
      case Action::kick_left:
        q[rig.l_upleg] = euler(-1.2 * A * std::max(0.0, s), 0, 0);
        q[rig.l_leg] = euler(0.6 * std::max(0.0, c), 0, 0);
        q[rig.spine] = euler(-0.15 * std::max(0.0, s), 0, 0);
        break;
      case Action::bow: {
        const double d = 0.5 * (1 - std::cos(0.5 * ph)) * A;
        q[rig.spine] = euler(0.7 * d, 0, 0);
        q[rig.spine1] = euler(0.4 * d, 0, 0);
        q[rig.neck] = euler(0.3 * d, 0, 0);
        break;
      }
      case Action::side_step_left:
      case Action::side_step_right: {
        const double dir = a == Action::side_step_left ? 1.0 : -1.0;
        q[rig.l_upleg] = euler(0, 0, 0.25 * A * std::max(0.0, dir * s));
        q[rig.r_upleg] = euler(0, 0, -0.25 * A * std::max(0.0, -dir * s));
        local_vel = Vec3(dir * 0.5 * style.tempo, 0, 0);
        height = kStandHeight - 0.02 * std::abs(s);
        break;
      }
      case Action::punch_right: {
        const double ext = std::max(0.0, s) * A;
        q[rig.r_arm] = euler(0, 1.4 * ext, 0.4 * (1 - ext));
        q[rig.r_fore] = euler(0, 1.2 * (1 - ext), 0);
        q[rig.l_arm] = euler(0, -1.3, 0.2);
        q[rig.l_fore] = euler(0, -1.6, 0);
        q[rig.spine1] = euler(0, -0.3 * ext, 0);
        break;
      }
      case Action::punch_left: {
        const double ext = std::max(0.0, s) * A;
        q[rig.l_arm] = euler(0, -1.4 * ext, -0.4 * (1 - ext));
        q[rig.l_fore] = euler(0, -1.2 * (1 - ext), 0);
        q[rig.r_arm] = euler(0, 1.3, -0.2);
        q[rig.r_fore] = euler(0, 1.6, 0);
        q[rig.spine1] = euler(0, 0.3 * ext, 0);
        break;
      }
      case Action::idle:
        q[rig.spine] = euler(0.02 * s, 0, 0);
        height = kStandHeight + 0.003 * s;
        break;
      case Action::spin:
        gait(0.15 * A, 0.01);
        yaw_rate = 2 * kPi / 2.0 * style.tempo;
        break;
      case Action::run:
        gait(0.9 * A, 0.08);
        q[rig.l_fore] = euler(-1.3, 0, 0);
        q[rig.r_fore] = euler(-1.3, 0, 0);
        local_vel = Vec3(0, 0, 2.8 * style.tempo);
        break;
    }

    pose.root(t) = Vec3(pos.x(), height, pos.z());
    q[0] = yaw_quat(yaw);
    for (int j = 0; j < J; ++j) pose.rotation(t, j) = q[j].normalized();
    pos += yaw_quat(yaw) * local_vel / fps;
    yaw += yaw_rate / fps;
  }
  return pose;
}

LongTake synthesize_long_take(double seconds, Rng& rng, double fps) {
  require(seconds > 0 && fps > 0, "invalid long take duration");
  const int total = static_cast<int>(std::lround(seconds * fps));
  LongTake out;
  out.pose = PoseSequence(total, default_skeleton().joint_count(), fps);
  const Action active[] = {Action::walk_forward, Action::wave_right, Action::jump,   Action::clap,
                           Action::squat,        Action::run,        Action::turn_left, Action::punch_left};
  int t = 0;
  Vec3 offset(0, 0, 0);
  double heading = rng.uniform(-kPi, kPi);
  while (t < total) {
    const int active_len = static_cast<int>(rng.uniform(1.5, 4.0) * fps);
    const int pause_len = static_cast<int>(rng.uniform(0.8, 1.6) * fps);
    ActionStyle style = random_style(rng);
    style.heading = heading;
    // Start and end each action in a neutral stance by windowing the motion.
    const Action a = active[rng.below(std::size(active))];
    PoseSequence seg = synthesize_action(a, active_len, style, fps);
    const PoseSequence neutral = synthesize_action(Action::idle, 1, style, fps);
    for (int i = 0; i < active_len && t < total; ++i, ++t) {
      const double w = std::sin(kPi * (i + 0.5) / active_len);
      const double blend = w * w;
      Vec3 r = seg.root(i);
      out.pose.root(t) = Vec3(r.x() + offset.x(), neutral.root(0).y() + blend * (r.y() - neutral.root(0).y()),
                              r.z() + offset.z());
      out.pose.rotation(t, 0) = seg.rotation(i, 0);
      for (int j = 1; j < out.pose.joints(); ++j) {
        out.pose.rotation(t, j) = neutral.rotation(0, j).slerp(blend, seg.rotation(i, j));
      }
    }
    const int last = std::max(0, t - 1);
    offset = out.pose.root(last);
    offset.y() = 0;
    heading = yaw_of(out.pose.rotation(last, 0));
    const int pause_start = t;
    for (int i = 0; i < pause_len && t < total; ++i, ++t) {
      out.pose.root(t) = out.pose.root(last);
      for (int j = 0; j < out.pose.joints(); ++j) out.pose.rotation(t, j) = out.pose.rotation(last, j);
    }
    out.pause_centers.push_back(pause_start + pause_len / 2);
  }
  return out;
}

}  // namespace msm::motion
