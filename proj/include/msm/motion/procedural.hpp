#pragma once

#include <string>
#include <vector>

#include "msm/core/rng.hpp"
#include "msm/motion/pose.hpp"

namespace msm::motion {

/// Scripted actions for the synthetic corpus. Each has a caption family with
/// several phrasings; lateral actions come in left/right pairs so mirrored
/// captions stay truthful.
enum class Action {
  wave_right,
  wave_left,
  walk_forward,
  walk_backward,
  turn_left,
  turn_right,
  jump,
  squat,
  raise_arms,
  clap,
  kick_right,
  kick_left,
  bow,
  side_step_left,
  side_step_right,
  punch_right,
  punch_left,
  idle,
  spin,
  run,
};

inline constexpr int kActionCount = 20;
inline constexpr int kCaptionVariations = 10;

std::string action_name(Action a);
/// Phrasing `variation` (0..kCaptionVariations-1) of the action's caption.
std::string action_caption(Action a, int variation);

struct ActionStyle {
  double amplitude = 1.0;  // scales joint excursions
  double tempo = 1.0;      // scales oscillation frequency
  double phase = 0.0;      // radians
  double heading = 0.0;    // initial facing
};

ActionStyle random_style(Rng& rng);

/// A clip of `frames` frames for one action on the default skeleton.
PoseSequence synthesize_action(Action a, int frames, const ActionStyle& style, double fps = 30.0);

/// Long take alternating active segments and still pauses. The still frames
/// produce clear velocity troughs. Returned alongside the frames where each
/// pause is centered.
struct LongTake {
  PoseSequence pose;
  std::vector<int> pause_centers;
};
LongTake synthesize_long_take(double seconds, Rng& rng, double fps = 30.0);

}  // namespace msm::motion
