#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "tsn/model.hpp"
#include "tsn/synth.hpp"

namespace tsn {

struct InferOpts {
  bool dense = false;  // dense read instead of top-k
  int topk = 20;
  bool dump_routing = false;
};

struct InferStats {
  int frames = 0;
  double seconds = 0;
  double fps = 0;
};

struct InferOutput {
  std::vector<std::vector<uint8_t>> labels;       // per frame label maps
  std::map<int, std::vector<Tensor>> routing;     // per object, frames 1..T-1, [HW x 1]
  InferStats stats;
  int gh = 0, gw = 0;
};

// Sequential semi-supervised protocol: the annotated first frame seeds both
// memories, every later frame is segmented per object and aggregated, and
// every cfg.write_every-th segmented frame is written back as a reference
// with its predicted mask binarized at 0.5.
inline InferOutput run_inference(const Network<float>& net, const VideoSample& video,
                                 const InferOpts& opts) {
  if (video.t < 1 || video.labels.empty())
    throw InputError("run_inference: video has no annotated first frame");
  const ModelConfig& cfg = net.cfg;

  InferOutput out;
  out.labels.push_back(video.labels[0]);  // the given annotation is echoed

  VideoState<float> state;
  const Tensor frame0 = frame_to_tensor(video.frames[0]);
  std::map<int, Tensor> masks0;
  for (int id : video.object_ids)
    masks0[id] = mask_to_tensor(video.labels[0], video.h, video.w, id);
  write_reference(net, state, frame0, masks0, 0);
  out.gh = video.h / cfg.s;
  out.gw = video.w / cfg.s;

  const auto start = std::chrono::steady_clock::now();
  for (int t = 1; t < video.t; ++t) {
    const Tensor frame = frame_to_tensor(video.frames[static_cast<size_t>(t)]);
    Tape<float> tp;
    const ParamVars pv = push_params(tp, net.params);
    const int frame_id = tp.leaf(frame);

    std::vector<int> ids;
    std::vector<Tensor> probs;
    for (int id : video.object_ids) {
      ForwardOpts<float> fo;
      fo.use_topk = !opts.dense;
      fo.k = opts.topk;
      MemRefs<float> mem = mem_to_tape(tp, pv, cfg, state.objects.at(id), out.gh, out.gw);
      QueryOut<float> q = forward_query_obj(tp, pv, cfg, frame_id, mem, fo);
      ids.push_back(id);
      probs.push_back(tp.val(q.prob));
      if (q.routing_w >= 0) out.routing[id].push_back(tp.val(q.routing_w));
    }
    std::vector<const Tensor*> prob_ptrs;
    for (const Tensor& p : probs) prob_ptrs.push_back(&p);
    std::vector<uint8_t> label = aggregate_objects(ids, prob_ptrs, video.h, video.w);

    if (t % cfg.write_every == 0) {
      std::map<int, Tensor> masks;
      for (int id : video.object_ids)
        masks[id] = mask_to_tensor(label, video.h, video.w, id);
      write_reference(net, state, frame, masks, t);
    }
    out.labels.push_back(std::move(label));
  }
  const auto end = std::chrono::steady_clock::now();
  out.stats.frames = video.t - 1;
  out.stats.seconds = std::chrono::duration<double>(end - start).count();
  out.stats.fps = out.stats.seconds > 0 ? out.stats.frames / out.stats.seconds : 0.0;
  return out;
}

inline void write_inference(const InferOutput& out, const VideoSample& video,
                            const std::string& dir, bool dump_routing) {
  std::filesystem::create_directories(dir);
  char buf[64];
  for (int t = 0; t < static_cast<int>(out.labels.size()); ++t) {
    std::snprintf(buf, sizeof(buf), "%s/label_%04d.pgm", dir.c_str(), t);
    write_pgm(buf, ImageU8{video.h, video.w, 1, out.labels[static_cast<size_t>(t)]});
  }
  if (dump_routing) {
    for (const auto& [id, maps] : out.routing) {
      for (size_t i = 0; i < maps.size(); ++i) {
        ImageU8 img{out.gh, out.gw, 1, {}};
        img.data.resize(maps[i].data.size());
        for (size_t p = 0; p < img.data.size(); ++p)
          img.data[p] = static_cast<uint8_t>(255.0f * maps[i].data[p]);
        std::snprintf(buf, sizeof(buf), "%s/routing_%d_%04zu.pgm", dir.c_str(), id, i + 1);
        write_pgm(buf, img);
      }
    }
  }
  // timing varies run to run, so it is reported beside the artifacts
  std::ofstream tf(dir + "/timing.txt");
  tf << "frames " << out.stats.frames << "\nseconds " << out.stats.seconds << "\nfps "
     << out.stats.fps << "\n";
}

}  // namespace tsn
