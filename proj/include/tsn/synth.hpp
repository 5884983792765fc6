#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "tsn/image_io.hpp"
#include "tsn/rng.hpp"
#include "tsn/tensor.hpp"

namespace tsn {

enum class EmergenceMode { none, occluder_reveal, border_entry, articulation };

const char* to_string(EmergenceMode m);
EmergenceMode emergence_mode_from(const std::string& s);

struct VideoCfg {
  int frames = 8;  // T >= 3
  int size = 64;   // square frames, 32 or 64
  int objects = 1; // 1 or 2
  EmergenceMode mode = EmergenceMode::occluder_reveal;
  int t_reveal = -1;  // occluder-reveal frame; -1 picks frames/2
};

// One synthetic video: textured objects over a textured static background,
// label maps per frame, and per-pixel emergent flags marking foreground
// pixels whose object part was occluded or out of frame in all prior frames.
struct VideoSample {
  uint64_t seed = 0;
  VideoCfg cfg;
  int t = 0, h = 0, w = 0;
  std::vector<int> object_ids;
  std::vector<ImageU8> frames;                 // 3-channel
  std::vector<std::vector<uint8_t>> labels;    // 0 = background, else object id
  std::vector<std::vector<uint8_t>> emergent;  // 0/1
};

VideoSample gen_video(uint64_t seed, const VideoCfg& cfg);

void save_video(const VideoSample& v, const std::string& dir);
VideoSample load_video(const std::string& dir);

// Temporal-interval curriculum: the maximum frame gap ramps 1 -> 25 over the
// first 5% of iterations, holds, then anneals 25 -> 5 over the last 25%.
int max_gap_schedule(int iteration, int total_iterations);

struct Clip {
  int object_id = 0;
  std::array<Tensor, 3> frames;  // [H x W x 3] in [0,1]
  std::array<Tensor, 3> masks;   // [H x W x 1] binary
};

// Three ordered frames with curriculum-limited gaps, binarized to one object,
// each frame independently augmented by a small random rotation and scale.
Clip sample_training_clip(const std::vector<VideoSample>& corpus, int iteration,
                          int total_iterations, Rng& rng);

Tensor frame_to_tensor(const ImageU8& img);
Tensor mask_to_tensor(const std::vector<uint8_t>& label, int h, int w, int object_id);

}  // namespace tsn
