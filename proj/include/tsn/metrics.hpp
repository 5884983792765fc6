#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tsn/common.hpp"

namespace tsn {

// Region similarity |P n G| / |P u G| on binary masks; both empty -> 1.
double region_j(const std::vector<uint8_t>& p, const std::vector<uint8_t>& g);

// 4-connected boundary pixels: foreground with a background (or out-of-image)
// 4-neighbor.
std::vector<uint8_t> mask_boundary(const std::vector<uint8_t>& m, int h, int w);

// Boundary F-measure with Chebyshev tolerance tol_px. Both boundaries empty
// -> 1, exactly one empty -> 0.
double boundary_f(const std::vector<uint8_t>& p, const std::vector<uint8_t>& g, int h, int w,
                  int tol_px);

// DAVIS-toolkit style tolerance: ceil(0.008 * image diagonal).
int boundary_tolerance(int h, int w);

// Mean over objects of (J_i + F_i) / 2; lists must be nonempty and aligned.
double jf_mean(const std::vector<double>& j, const std::vector<double>& f);

struct FrameEval {
  std::string video;
  int object_id = 0;
  int frame = 0;
  double j = 0, f = 0;
  double j_emergent = -1;  // -1 when the frame has no emergent pixels
};

struct ObjectEval {
  std::string video;
  int object_id = 0;
  double j = 0, f = 0, jf = 0;
  double j_emergent = -1;  // -1 when the object has no emergent pixels
};

struct EvalResult {
  std::vector<FrameEval> per_frame;
  std::vector<ObjectEval> per_object;
  double mean_j = 0, mean_f = 0, mean_jf = 0;
  double j_emergent = -1;  // corpus-level emergent-pixel recall-style J
  int videos = 0;
};

// Compare per-video prediction directories against a generated corpus.
// Frame 0 is the given annotation and is excluded from the scores.
EvalResult evaluate_dirs(const std::string& pred_dir, const std::string& gt_dir);

void write_metrics_csv(const EvalResult& res, const std::string& path);

}  // namespace tsn
