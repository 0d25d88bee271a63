#include "msm/motion/bvh.hpp"

#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <sstream>

#include "msm/core/error.hpp"
#include "msm/core/io.hpp"

namespace msm::motion {

namespace {

std::string fmt(double v) {
  char buf[64];
  if (std::abs(v) < 5e-7) v = 0.0;  // avoid "-0.000000"
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

void write_joint(std::ostringstream& os, const SkeletonSpec& skel, const std::vector<std::vector<int>>& children, int j,
                 int depth) {
  const std::string pad(static_cast<std::size_t>(2 * depth), ' ');
  const Vec3& off = skel.offsets[j];
  if (j == skel.hip_index) {
    os << pad << "ROOT " << skel.joint_names[j] << "\n";
  } else {
    os << pad << "JOINT " << skel.joint_names[j] << "\n";
  }
  os << pad << "{\n";
  os << pad << "  OFFSET " << fmt(off.x()) << " " << fmt(off.y()) << " " << fmt(off.z()) << "\n";
  if (j == skel.hip_index) {
    os << pad << "  CHANNELS 6 Xposition Yposition Zposition Zrotation Yrotation Xrotation\n";
  } else {
    os << pad << "  CHANNELS 3 Zrotation Yrotation Xrotation\n";
  }
  if (children[j].empty()) {
    os << pad << "  End Site\n" << pad << "  {\n";
    os << pad << "    OFFSET 0.000000 0.000000 0.000000\n";
    os << pad << "  }\n";
  }
  for (int c : children[j]) write_joint(os, skel, children, c, depth + 1);
  os << pad << "}\n";
}

// Token stream over the file that remembers source lines.
class Lexer {
 public:
  explicit Lexer(const std::string& text) {
    std::size_t line = 1;
    std::size_t i = 0;
    while (i < text.size()) {
      const char c = text[i];
      if (c == '\n') {
        ++line;
        ++i;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++i;
      } else {
        std::size_t j = i;
        while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
        tokens_.push_back({text.substr(i, j - i), line});
        i = j;
      }
    }
    last_line_ = line;
  }

  bool done() const { return pos_ >= tokens_.size(); }
  std::size_t line() const { return done() ? last_line_ : tokens_[pos_].line; }
  const std::string& peek() const {
    static const std::string empty;
    return done() ? empty : tokens_[pos_].text;
  }
  std::string next(const char* what) {
    if (done()) throw ParseError(last_line_, std::string("unexpected end of file, expected ") + what);
    return tokens_[pos_++].text;
  }
  void expect(const std::string& word) {
    const std::size_t ln = line();
    const std::string got = next(word.c_str());
    if (got != word) throw ParseError(ln, "expected '" + word + "', found '" + got + "'");
  }
  double number(const char* what) {
    const std::size_t ln = line();
    const std::string tok = next(what);
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(tok.c_str(), &end);
    if (end == tok.c_str() || *end != '\0' || errno == ERANGE || !std::isfinite(v)) {
      throw ParseError(ln, std::string("non-numeric ") + what + " '" + tok + "'");
    }
    return v;
  }
  int integer(const char* what) {
    const std::size_t ln = line();
    const double v = number(what);
    if (v != std::floor(v) || v < 0) throw ParseError(ln, std::string("expected a non-negative integer ") + what);
    return static_cast<int>(v);
  }

 private:
  struct Token {
    std::string text;
    std::size_t line;
  };
  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
  std::size_t last_line_ = 1;
};

struct ChannelSpec {
  int joint;
  int kind;  // 0..2 position x/y/z, 3..5 rotation x/y/z
};

struct Parser {
  Lexer lex;
  SkeletonSpec skel;
  std::vector<ChannelSpec> channels;

  explicit Parser(const std::string& text) : lex(text) {}

  void joint(int parent) {
    const int index = skel.joint_count();
    const std::size_t name_line = lex.line();
    const std::string name = lex.next("joint name");
    if (name == "{") throw ParseError(name_line, "missing joint name");
    skel.joint_names.push_back(name);
    skel.parents.push_back(parent);
    skel.offsets.emplace_back(0, 0, 0);
    lex.expect("{");
    lex.expect("OFFSET");
    Vec3 off;
    for (int k = 0; k < 3; ++k) off(k) = lex.number("offset");
    skel.offsets[index] = off;
    const std::size_t ch_line = lex.line();
    lex.expect("CHANNELS");
    const int n = lex.integer("channel count");
    if (n > 6) throw ParseError(ch_line, "too many channels");
    for (int c = 0; c < n; ++c) {
      const std::size_t ln = lex.line();
      const std::string ch = lex.next("channel name");
      static const char* names[] = {"Xposition", "Yposition", "Zposition", "Xrotation", "Yrotation", "Zrotation"};
      int kind = -1;
      for (int k = 0; k < 6; ++k) {
        if (ch == names[k]) kind = k;
      }
      if (kind < 0) throw ParseError(ln, "unknown channel '" + ch + "'");
      channels.push_back({index, kind});
    }
    while (true) {
      const std::size_t ln = lex.line();
      const std::string tok = lex.next("'}'");
      if (tok == "}") break;
      if (tok == "JOINT") {
        joint(index);
      } else if (tok == "End") {
        lex.expect("Site");
        lex.expect("{");
        lex.expect("OFFSET");
        for (int k = 0; k < 3; ++k) lex.number("offset");
        lex.expect("}");
      } else {
        throw ParseError(ln, "unexpected token '" + tok + "' in joint " + name);
      }
    }
  }
};

void infer_roles(SkeletonSpec& s) {
  auto swap_side = [](const std::string& name) -> std::string {
    for (auto [a, b] : {std::pair{"Left", "Right"}, std::pair{"Right", "Left"}, std::pair{"left", "right"},
                        std::pair{"right", "left"}}) {
      const auto at = name.find(a);
      if (at != std::string::npos) return name.substr(0, at) + b + name.substr(at + std::string(a).size());
    }
    return {};
  };
  for (int j = 0; j < s.joint_count(); ++j) {
    const std::string other = swap_side(s.joint_names[j]);
    if (other.empty()) continue;
    const int k = s.find(other);
    if (k > j) s.left_right_pairs.emplace_back(j, k);
  }
  auto ends_with = [](const std::string& name, const std::string& suffix) {
    return name.size() >= suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  for (const char* side : {"Left", "Right"}) {
    const int hand = s.find(std::string(side) + "Hand");
    if (hand >= 0) s.end_effectors.push_back(hand);
  }
  for (const char* side : {"Left", "Right"}) {
    const int foot = s.find(std::string(side) + "Foot");
    if (foot >= 0) s.end_effectors.push_back(foot);
  }
  for (int j = 0; j < s.joint_count(); ++j) {
    if (ends_with(s.joint_names[j], "Head")) {
      s.end_effectors.push_back(j);
      break;
    }
  }
  for (const char* side : {"Left", "Right"}) {
    const int foot = s.find(std::string(side) + "Foot");
    const int toe = s.find(std::string(side) + "ToeBase");
    if (foot >= 0 && toe >= 0) {
      s.contact_joints.push_back(foot);
      s.contact_joints.push_back(toe);
    }
  }
}

}  // namespace

std::string write_bvh(const PoseSequence& pose, const SkeletonSpec& skel) {
  skel.validate();
  pose.validate();
  require(pose.joints() == skel.joint_count(), "pose joint count does not match skeleton");
  std::vector<std::vector<int>> children(static_cast<std::size_t>(skel.joint_count()));
  for (int j = 0; j < skel.joint_count(); ++j) {
    if (skel.parents[j] >= 0) children[skel.parents[j]].push_back(j);
  }
  // Channel order in the MOTION block follows the depth-first hierarchy order.
  std::vector<int> order;
  std::vector<int> stack{skel.hip_index};
  while (!stack.empty()) {
    const int j = stack.back();
    stack.pop_back();
    order.push_back(j);
    for (auto it = children[j].rbegin(); it != children[j].rend(); ++it) stack.push_back(*it);
  }

  std::ostringstream os;
  os << "HIERARCHY\n";
  write_joint(os, skel, children, skel.hip_index, 0);
  os << "MOTION\n";
  os << "Frames: " << pose.frames() << "\n";
  os << "Frame Time: " << fmt(1.0 / pose.fps()) << "\n";
  for (int t = 0; t < pose.frames(); ++t) {
    std::string line;
    const Vec3& r = pose.root(t);
    line += fmt(r.x()) + " " + fmt(r.y()) + " " + fmt(r.z());
    for (int j : order) {
      const Vec3 e = to_euler_zyx_deg(pose.rotation(t, j).toRotationMatrix());
      line += " " + fmt(e(0)) + " " + fmt(e(1)) + " " + fmt(e(2));
    }
    os << line << "\n";
  }
  return os.str();
}

void export_bvh(const PoseSequence& pose, const SkeletonSpec& skel, const std::filesystem::path& path) {
  io::write_file_atomic(path, write_bvh(pose, skel));
}

BvhData parse_bvh(const std::string& text) {
  Parser p(text);
  p.lex.expect("HIERARCHY");
  p.lex.expect("ROOT");
  p.joint(-1);
  p.lex.expect("MOTION");
  p.lex.expect("Frames:");
  const int frames = p.lex.integer("frame count");
  const std::size_t ft_line = p.lex.line();
  p.lex.expect("Frame");
  p.lex.expect("Time:");
  const double frame_time = p.lex.number("frame time");
  if (frame_time <= 0) throw ParseError(ft_line, "frame time must be positive");
  if (frames < 1) throw ParseError(ft_line, "no motion frames");

  BvhData out;
  out.skeleton = std::move(p.skel);
  infer_roles(out.skeleton);
  const int J = out.skeleton.joint_count();
  // Frame times are printed with six decimals; snap to the integer rate they
  // came from when it is that close.
  double fps = 1.0 / frame_time;
  if (std::abs(fps - std::round(fps)) < 1e-3 * fps) fps = std::round(fps);
  out.pose = PoseSequence(frames, J, fps);
  std::vector<double> values(p.channels.size());
  for (int t = 0; t < frames; ++t) {
    const std::size_t row_line = p.lex.line();
    for (std::size_t c = 0; c < values.size(); ++c) {
      if (p.lex.done() || p.lex.line() != row_line) {
        throw ParseError(row_line, "channel-count mismatch: expected " + std::to_string(values.size()) + " values");
      }
      values[c] = p.lex.number("motion value");
    }
    if (!p.lex.done() && p.lex.line() == row_line) {
      throw ParseError(row_line, "channel-count mismatch: extra values in motion row");
    }
    std::vector<Mat3> rot(static_cast<std::size_t>(J), Mat3::Identity());
    Vec3 root = out.skeleton.offsets[0];
    bool root_has_position = false;
    for (std::size_t c = 0; c < values.size(); ++c) {
      const auto [j, kind] = p.channels[c];
      if (kind < 3) {
        if (j == 0) {
          if (!root_has_position) root = Vec3::Zero();
          root_has_position = true;
          root(kind) = values[c];
        }
      } else {
        rot[j] = rot[j] * axis_rotation(static_cast<char>('X' + (kind - 3)), values[c]);
      }
    }
    out.pose.root(t) = root;
    for (int j = 0; j < J; ++j) out.pose.rotation(t, j) = Quat(rot[j]).normalized();
  }
  if (!p.lex.done()) throw ParseError(p.lex.line(), "unexpected trailing data after motion block");
  return out;
}

BvhData import_bvh(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(ErrorKind::missing_artifact, "BVH file not found: " + path.string());
  return parse_bvh(io::read_file(path));
}

}  // namespace msm::motion
