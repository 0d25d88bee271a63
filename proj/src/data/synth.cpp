#include "msm/data/synth.hpp"

#include <cstdio>

#include "msm/core/error.hpp"
#include "msm/core/io.hpp"
#include "msm/motion/bvh.hpp"
#include "msm/motion/procedural.hpp"

namespace msm::data {

void write_toy_corpus(const std::filesystem::path& root, const ToyCorpusOptions& opt) {
  require(opt.clips_per_action >= 1 && opt.frames >= 2 && opt.fps > 0, "invalid toy corpus options");
  const auto& skel = motion::default_skeleton();
  std::vector<std::string> ids;
  std::map<std::string, std::string> scenario;
  std::string tags;
  for (int a = 0; a < motion::kActionCount; ++a) {
    const auto action = static_cast<motion::Action>(a);
    for (int k = 0; k < opt.clips_per_action; ++k) {
      char id[64];
      std::snprintf(id, sizeof id, "%s_%02d", motion::action_name(action).c_str(), k);
      Rng rng(opt.seed * 1000003ULL + static_cast<std::uint64_t>(a * 1000 + k));
      const auto pose = motion::synthesize_action(action, opt.frames, motion::random_style(rng), opt.fps);
      motion::export_bvh(pose, skel, root / "motions" / (std::string(id) + ".bvh"));
      io::write_file_atomic(root / "texts" / (std::string(id) + ".txt"), motion::action_caption(action, 0) + "\n");
      ids.push_back(id);
      scenario[id] = motion::action_name(action);
      tags += std::string(id) + "\t" + motion::action_name(action) + "\n";
    }
  }
  io::write_file_atomic(root / "scenarios.tsv", tags);
  const auto splits = make_splits(ids, scenario, opt.ratios, opt.seed);
  for (const auto& [s, list] : splits) write_id_list(root / "splits" / (split_name(s) + ".txt"), list);

  Rng take_rng(opt.seed ^ 0x7a6bULL);
  for (int t = 0; t < opt.long_takes; ++t) {
    char name[32];
    std::snprintf(name, sizeof name, "take_%02d.bvh", t);
    const auto take = motion::synthesize_long_take(opt.take_seconds, take_rng, opt.fps);
    motion::export_bvh(take.pose, skel, root / "takes" / name);
  }
}

}  // namespace msm::data
