#pragma once

#include <cstdint>
#include <string>

#include "tsn/common.hpp"

namespace tsn {

enum class FusionMode { routing, pixel_only, equal, instance_only };
enum class InstanceMode { per_frame_heads, single_pooled_head, gap_predictor };
enum class PositionMode { rel_coord, sine, none };

// Segmentation-head layout: three 1x1 conv layers, 8 channels each, applied
// to 8 reduced feature channels plus a 2-channel position map.
constexpr int kHeadChannels = 8;
constexpr int kHeadInputChannels = kHeadChannels + 2;
constexpr int kThetaLen = (kHeadInputChannels * kHeadChannels + kHeadChannels) +
                          (kHeadChannels * kHeadChannels + kHeadChannels) + (kHeadChannels + 1);

struct ModelConfig {
  int s = 4;        // backbone stride; the fixed encoder layout requires 4
  int c_k = 16;     // key channels
  int c_v = 32;     // value / feature channels
  int enc_c1 = 16;  // trunk width after the first stride-2 conv
  int enc_tap = 8;  // stride-1 skip tap channels
  int k_topk = 20;
  int n_max = 8;
  FusionMode fusion = FusionMode::routing;
  InstanceMode instance = InstanceMode::per_frame_heads;
  PositionMode position = PositionMode::rel_coord;

  double lr = 4e-4;
  double poly_power = 0.9;
  int iterations = 2000;
  int batch = 4;
  double bootstrap_final = 0.25;  // hardest-pixel fraction after annealing
  double bootstrap_warm = 0.2;    // fraction of iterations at frac = 1
  uint64_t seed = 0;
  int write_every = 5;  // inference memory cadence
};

const char* to_string(FusionMode m);
const char* to_string(InstanceMode m);
const char* to_string(PositionMode m);
FusionMode fusion_mode_from(const std::string& s);
InstanceMode instance_mode_from(const std::string& s);
PositionMode position_mode_from(const std::string& s);

// Line-oriented `key = value` text; '#' starts a comment.
ModelConfig parse_config_text(const std::string& text);
ModelConfig load_config(const std::string& path);
std::string config_to_text(const ModelConfig& cfg);
void validate(const ModelConfig& cfg);

std::string config_to_json(const ModelConfig& cfg);
ModelConfig config_from_json(const std::string& json_text);

}  // namespace tsn
