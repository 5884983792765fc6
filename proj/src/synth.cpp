#include "tsn/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

namespace fs = std::filesystem;

namespace tsn {

const char* to_string(EmergenceMode m) {
  switch (m) {
    case EmergenceMode::none: return "none";
    case EmergenceMode::occluder_reveal: return "occlusion";
    case EmergenceMode::border_entry: return "border";
    case EmergenceMode::articulation: return "articulation";
  }
  return "?";
}

EmergenceMode emergence_mode_from(const std::string& s) {
  if (s == "none") return EmergenceMode::none;
  if (s == "occlusion") return EmergenceMode::occluder_reveal;
  if (s == "border") return EmergenceMode::border_entry;
  if (s == "articulation") return EmergenceMode::articulation;
  throw ConfigError("unknown emergence mode: " + s);
}

namespace {

// per-texel speckle in [-1,1]
double speckle(uint64_t seed, int tx, int ty, int ch) {
  const uint64_t h = splitmix64(seed ^ (static_cast<uint64_t>(tx + 4096) * 0x9e3779b1u) ^
                                (static_cast<uint64_t>(ty + 4096) * 0x85ebca6bu) ^
                                (static_cast<uint64_t>(ch) << 48));
  return static_cast<double>(h >> 11) * 0x1.0p-53 * 2.0 - 1.0;
}

struct ObjectSpec {
  int id = 1;
  // geometry in object-local integer coordinates
  double ax = 8, ay = 8;          // body ellipse half-axes
  double alen = 8, awid = 3;      // appendage rectangle
  int adir = 0;                   // 0:+x 1:-x 2:+y 3:-y
  double body_color[3];
  double app_color[3];
  uint64_t tex_seed = 0;
  // integer motion: position of the local origin per frame
  std::vector<int> cx, cy;
  // articulation growth per frame (fraction of alen)
  std::vector<double> agrow;
  int t_reveal = 0;  // occluder mode
};

struct LocalGrid {
  int half = 0;  // texel coords in [-half, half]
  std::vector<uint8_t> seen;
  uint8_t& at(int tx, int ty) {
    return seen[static_cast<size_t>(ty + half) * (2 * half + 1) + (tx + half)];
  }
};

// Is local texel (lx, ly) part of the object at frame t, and which part?
// 0 = outside, 1 = body, 2 = appendage.
int object_part(const ObjectSpec& o, const VideoCfg& cfg, int t, int lx, int ly) {
  const double ex = lx / o.ax, ey = ly / o.ay;
  if (ex * ex + ey * ey <= 1.0) return 1;

  if (cfg.mode == EmergenceMode::occluder_reveal && t < o.t_reveal) return 0;
  double along = 0, across = 0, start = 0;
  switch (o.adir) {
    case 0: along = lx; across = ly; start = 0.55 * o.ax; break;
    case 1: along = -lx; across = ly; start = 0.55 * o.ax; break;
    case 2: along = ly; across = lx; start = 0.55 * o.ay; break;
    default: along = -ly; across = lx; start = 0.55 * o.ay; break;
  }
  double len = o.alen;
  if (cfg.mode == EmergenceMode::articulation) len *= o.agrow[static_cast<size_t>(t)];
  if (along >= start && along <= start + len && std::fabs(across) <= o.awid) return 2;
  return 0;
}

double clamp01(double v) { return v < 0 ? 0 : (v > 1 ? 1 : v); }

}  // namespace

VideoSample gen_video(uint64_t seed, const VideoCfg& cfg) {
  if (cfg.frames < 3) throw ConfigError("gen_video: need at least 3 frames");
  if (cfg.size != 32 && cfg.size != 64) throw ConfigError("gen_video: size must be 32 or 64");
  if (cfg.objects != 1 && cfg.objects != 2) throw ConfigError("gen_video: objects must be 1 or 2");

  Rng rng(seed);
  const int sz = cfg.size, T = cfg.frames;

  VideoSample v;
  v.seed = seed;
  v.cfg = cfg;
  v.t = T;
  v.h = sz;
  v.w = sz;

  // static low-frequency background plus faint pixel noise
  const int bg_grid = 4;
  std::vector<double> bg_cells(bg_grid * bg_grid * 3);
  for (auto& c : bg_cells) c = rng.uniform(0.3, 0.7);
  const uint64_t bg_seed = rng.next_u64();
  std::vector<double> background(static_cast<size_t>(sz) * sz * 3);
  double bg_mean[3] = {0, 0, 0};
  for (int y = 0; y < sz; ++y)
    for (int x = 0; x < sz; ++x) {
      const double gy = (y + 0.5) / sz * (bg_grid - 1);
      const double gx = (x + 0.5) / sz * (bg_grid - 1);
      const int y0 = std::min(static_cast<int>(gy), bg_grid - 2);
      const int x0 = std::min(static_cast<int>(gx), bg_grid - 2);
      const double fy = gy - y0, fx = gx - x0;
      for (int c = 0; c < 3; ++c) {
        auto cell = [&](int yy, int xx) { return bg_cells[(static_cast<size_t>(yy) * bg_grid + xx) * 3 + c]; };
        double val = (1 - fy) * ((1 - fx) * cell(y0, x0) + fx * cell(y0, x0 + 1)) +
                     fy * ((1 - fx) * cell(y0 + 1, x0) + fx * cell(y0 + 1, x0 + 1));
        val += 0.03 * speckle(bg_seed, x, y, c);
        background[(static_cast<size_t>(y) * sz + x) * 3 + c] = clamp01(val);
        bg_mean[c] += val;
      }
    }
  for (double& c : bg_mean) c /= sz * sz;

  // speckled distractor patches: background regions with object-like texture,
  // so local appearance alone cannot separate foreground from background
  {
    const int n_distract = std::max(5, sz * sz / 140);
    for (int d = 0; d < n_distract; ++d) {
      const double rx = rng.uniform(0.045, 0.11) * sz;
      const double ry = rng.uniform(0.045, 0.11) * sz;
      const int cx = rng.uniform_int(0, sz - 1);
      const int cy = rng.uniform_int(0, sz - 1);
      double col[3];
      for (int c = 0; c < 3; ++c) col[c] = rng.uniform(0.05, 0.95);
      const uint64_t dseed = rng.next_u64();
      const int x0 = std::max(0, cx - static_cast<int>(rx) - 1);
      const int x1 = std::min(sz - 1, cx + static_cast<int>(rx) + 1);
      const int y0 = std::max(0, cy - static_cast<int>(ry) - 1);
      const int y1 = std::min(sz - 1, cy + static_cast<int>(ry) + 1);
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
          const double ex = (x - cx) / rx, ey = (y - cy) / ry;
          if (ex * ex + ey * ey > 1.0) continue;
          for (int c = 0; c < 3; ++c)
            background[(static_cast<size_t>(y) * sz + x) * 3 + c] =
                clamp01(col[c] + 0.22 * speckle(dseed, x, y, c));
        }
    }
  }

  auto draw_color = [&](double* out) {
    // redraw until clearly separated from the background mean
    for (int tries = 0; tries < 16; ++tries) {
      double dist = 0;
      for (int c = 0; c < 3; ++c) {
        out[c] = rng.uniform(0.05, 0.95);
        dist += std::fabs(out[c] - bg_mean[c]);
      }
      if (dist > 0.8) return;
    }
  };

  const double base = sz * 0.21;
  std::vector<ObjectSpec> objs;
  for (int i = 0; i < cfg.objects; ++i) {
    ObjectSpec o;
    o.id = i + 1;
    o.ax = base * rng.uniform(0.8, 1.15);
    o.ay = base * rng.uniform(0.8, 1.15);
    o.alen = base * rng.uniform(0.9, 1.3);
    o.awid = base * rng.uniform(0.35, 0.5);
    o.adir = rng.uniform_int(0, 3);
    draw_color(o.body_color);
    draw_color(o.app_color);
    o.tex_seed = rng.next_u64();
    o.t_reveal = cfg.t_reveal >= 0 ? cfg.t_reveal : T / 2;

    // integer per-frame positions
    const int margin = static_cast<int>(std::ceil(std::max({o.ax, o.ay, 0.55 * o.ax + o.alen})));
    int x0, y0;
    if (cfg.mode == EmergenceMode::border_entry) {
      // start with roughly a third of the object outside, slide fully in
      const int side = rng.uniform_int(0, 3);
      const int inset = margin + 2;
      const int along = rng.uniform_int(inset, sz - 1 - inset);
      const int out0 = static_cast<int>(margin * rng.uniform(0.1, 0.45));
      x0 = side == 0 ? -out0 : (side == 1 ? sz - 1 + out0 : along);
      y0 = side <= 1 ? along : (side == 2 ? -out0 : sz - 1 + out0);
      const double total_travel = out0 + margin * 0.35;
      for (int t = 0; t < T; ++t) {
        // slightly accelerating approach so fresh strips keep growing
        const double u = T == 1 ? 0.0 : static_cast<double>(t) / (T - 1);
        const int d = static_cast<int>(std::lround(total_travel * (0.55 * u + 0.45 * u * u)));
        o.cx.push_back(x0 + (side == 0 ? d : (side == 1 ? -d : 0)));
        o.cy.push_back(y0 + (side == 2 ? d : (side == 3 ? -d : 0)));
      }
    } else {
      const int inset = std::min(margin + 1, sz / 2 - 2);
      if (cfg.objects == 2) {
        // spawn in opposite halves to keep overlap rare
        const int lo = inset, hi = sz - 1 - inset;
        const int mid = sz / 2;
        x0 = i == 0 ? rng.uniform_int(lo, std::max(lo, mid - 4))
                    : rng.uniform_int(std::min(hi, mid + 4), hi);
        y0 = rng.uniform_int(lo, hi);
      } else {
        x0 = rng.uniform_int(inset, sz - 1 - inset);
        y0 = rng.uniform_int(inset, sz - 1 - inset);
      }
      const int vx = rng.uniform_int(-2, 2), vy = rng.uniform_int(-2, 2);
      for (int t = 0; t < T; ++t) {
        int cx = x0 + vx * t, cy = y0 + vy * t;
        if (cfg.mode == EmergenceMode::none) {
          // keep every part strictly on-screen so nothing ever emerges
          cx = std::clamp(cx, inset, sz - 1 - inset);
          cy = std::clamp(cy, inset, sz - 1 - inset);
        }
        o.cx.push_back(cx);
        o.cy.push_back(cy);
      }
    }
    for (int t = 0; t < T; ++t) {
      const double u = T == 1 ? 1.0 : static_cast<double>(t) / (T - 1);
      o.agrow.push_back(0.25 + 0.75 * u * u);  // accelerating growth
    }
    objs.push_back(o);
  }

  // visibility bookkeeping in local texel space
  std::vector<LocalGrid> seen(objs.size());
  for (size_t i = 0; i < objs.size(); ++i) {
    const auto& o = objs[i];
    seen[i].half = static_cast<int>(std::ceil(std::max({o.ax, o.ay, 0.55 * std::max(o.ax, o.ay) +
                                                        o.alen}))) + 2;
    seen[i].seen.assign(static_cast<size_t>(2 * seen[i].half + 1) * (2 * seen[i].half + 1), 0);
  }

  for (int t = 0; t < T; ++t) {
    ImageU8 img;
    img.h = sz;
    img.w = sz;
    img.channels = 3;
    img.data.resize(static_cast<size_t>(sz) * sz * 3);
    std::vector<uint8_t> label(static_cast<size_t>(sz) * sz, 0);
    std::vector<uint8_t> emg(static_cast<size_t>(sz) * sz, 0);
    std::vector<std::vector<std::pair<int, int>>> visible_now(objs.size());

    for (int y = 0; y < sz; ++y)
      for (int x = 0; x < sz; ++x) {
        double px[3];
        const size_t pi = static_cast<size_t>(y) * sz + x;
        for (int c = 0; c < 3; ++c) px[c] = background[pi * 3 + c];
        int top = -1, top_part = 0, top_lx = 0, top_ly = 0;
        for (size_t i = 0; i < objs.size(); ++i) {  // later objects draw on top
          const auto& o = objs[i];
          const int lx = x - o.cx[static_cast<size_t>(t)];
          const int ly = y - o.cy[static_cast<size_t>(t)];
          if (std::abs(lx) > seen[i].half || std::abs(ly) > seen[i].half) continue;
          const int part = object_part(o, cfg, t, lx, ly);
          if (part != 0) {
            top = static_cast<int>(i);
            top_part = part;
            top_lx = lx;
            top_ly = ly;
          }
        }
        if (top >= 0) {
          const auto& o = objs[static_cast<size_t>(top)];
          const double* bc = top_part == 1 ? o.body_color : o.app_color;
          for (int c = 0; c < 3; ++c)
            px[c] = clamp01(bc[c] + 0.22 * speckle(o.tex_seed + static_cast<uint64_t>(top_part),
                                                   top_lx, top_ly, c));
          label[pi] = static_cast<uint8_t>(o.id);
          visible_now[static_cast<size_t>(top)].push_back({top_lx, top_ly});
          if (t > 0 && !seen[static_cast<size_t>(top)].at(top_lx, top_ly)) emg[pi] = 1;
        }
        for (int c = 0; c < 3; ++c)
          img.data[pi * 3 + c] = static_cast<uint8_t>(std::lround(px[c] * 255.0));
      }

    for (size_t i = 0; i < objs.size(); ++i)
      for (const auto& [lx, ly] : visible_now[i]) seen[i].at(lx, ly) = 1;

    v.frames.push_back(std::move(img));
    v.labels.push_back(std::move(label));
    v.emergent.push_back(std::move(emg));
  }
  for (const auto& o : objs) v.object_ids.push_back(o.id);
  return v;
}

namespace {

std::string frame_name(const char* prefix, int t, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s_%04d.%s", prefix, t, ext);
  return buf;
}

}  // namespace

void save_video(const VideoSample& v, const std::string& dir) {
  fs::create_directories(dir);
  nlohmann::json manifest;
  manifest["seed"] = v.seed;
  manifest["cfg"] = {{"frames", v.cfg.frames},
                     {"size", v.cfg.size},
                     {"objects", v.cfg.objects},
                     {"mode", to_string(v.cfg.mode)},
                     {"t_reveal", v.cfg.t_reveal}};
  manifest["T"] = v.t;
  manifest["objects"] = v.object_ids;
  std::ofstream mf(dir + "/manifest.json");
  if (!mf) throw InputError("cannot write manifest in " + dir);
  mf << manifest.dump(2) << "\n";

  for (int t = 0; t < v.t; ++t) {
    write_ppm(dir + "/" + frame_name("frame", t, "ppm"), v.frames[static_cast<size_t>(t)]);
    ImageU8 lab{v.h, v.w, 1, v.labels[static_cast<size_t>(t)]};
    write_pgm(dir + "/" + frame_name("gt", t, "pgm"), lab);
    ImageU8 emg{v.h, v.w, 1, {}};
    emg.data.resize(v.emergent[static_cast<size_t>(t)].size());
    for (size_t i = 0; i < emg.data.size(); ++i)
      emg.data[i] = v.emergent[static_cast<size_t>(t)][i] ? 255 : 0;
    write_pgm(dir + "/" + frame_name("emergent", t, "pgm"), emg);
  }
}

VideoSample load_video(const std::string& dir) {
  std::ifstream mf(dir + "/manifest.json");
  if (!mf) throw InputError("missing manifest.json in " + dir);
  nlohmann::json manifest;
  mf >> manifest;

  VideoSample v;
  v.seed = manifest.at("seed").get<uint64_t>();
  const auto& c = manifest.at("cfg");
  v.cfg.frames = c.at("frames").get<int>();
  v.cfg.size = c.at("size").get<int>();
  v.cfg.objects = c.at("objects").get<int>();
  v.cfg.mode = emergence_mode_from(c.at("mode").get<std::string>());
  v.cfg.t_reveal = c.at("t_reveal").get<int>();
  v.t = manifest.at("T").get<int>();
  v.object_ids = manifest.at("objects").get<std::vector<int>>();

  for (int t = 0; t < v.t; ++t) {
    ImageU8 img = read_ppm(dir + "/" + frame_name("frame", t, "ppm"));
    v.h = img.h;
    v.w = img.w;
    v.frames.push_back(std::move(img));
    ImageU8 lab = read_pgm(dir + "/" + frame_name("gt", t, "pgm"));
    v.labels.push_back(std::move(lab.data));
    ImageU8 emg = read_pgm(dir + "/" + frame_name("emergent", t, "pgm"));
    std::vector<uint8_t> e(emg.data.size());
    for (size_t i = 0; i < e.size(); ++i) e[i] = emg.data[i] ? 1 : 0;
    v.emergent.push_back(std::move(e));
  }
  return v;
}

int max_gap_schedule(int iteration, int total_iterations) {
  const int total = std::max(1, total_iterations);
  const int ramp = std::max(1, total * 5 / 100);
  const int tail = std::max(1, total * 25 / 100);
  if (iteration < ramp)
    return static_cast<int>(std::lround(1.0 + 24.0 * iteration / ramp));
  if (iteration >= total - tail) {
    const double u = static_cast<double>(iteration - (total - tail)) / tail;
    return static_cast<int>(std::lround(25.0 - 20.0 * u));
  }
  return 25;
}

Tensor frame_to_tensor(const ImageU8& img) {
  Tensor t({img.h, img.w, img.channels});
  for (size_t i = 0; i < img.data.size(); ++i)
    t.data[i] = static_cast<float>(img.data[i]) / 255.0f;
  return t;
}

Tensor mask_to_tensor(const std::vector<uint8_t>& label, int h, int w, int object_id) {
  Tensor t({h, w, 1});
  for (size_t i = 0; i < label.size(); ++i)
    t.data[i] = label[i] == static_cast<uint8_t>(object_id) ? 1.0f : 0.0f;
  return t;
}

namespace {

// rotation + scale about the image center; bilinear for frames, nearest for
// masks so they stay binary
void warp_affine(const Tensor& src, Tensor& dst, double angle, double scl, bool nearest) {
  const int h = src.shape[0], w = src.shape[1], c = src.shape[2];
  const double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
  const double ca = std::cos(angle), sa = std::sin(angle);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double dy = y - cy, dx = x - cx;
      double sx = cx + (ca * dx + sa * dy) / scl;
      double sy = cy + (-sa * dx + ca * dy) / scl;
      sx = std::clamp(sx, 0.0, static_cast<double>(w - 1));
      sy = std::clamp(sy, 0.0, static_cast<double>(h - 1));
      if (nearest) {
        const int iy = static_cast<int>(std::lround(sy));
        const int ix = static_cast<int>(std::lround(sx));
        for (int cc = 0; cc < c; ++cc) dst(y, x, cc) = src(iy, ix, cc);
      } else {
        const int y0 = static_cast<int>(sy), x0 = static_cast<int>(sx);
        const int y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
        const double fy = sy - y0, fx = sx - x0;
        for (int cc = 0; cc < c; ++cc) {
          const double v = (1 - fy) * ((1 - fx) * src(y0, x0, cc) + fx * src(y0, x1, cc)) +
                           fy * ((1 - fx) * src(y1, x0, cc) + fx * src(y1, x1, cc));
          dst(y, x, cc) = static_cast<float>(v);
        }
      }
    }
}

}  // namespace

Clip sample_training_clip(const std::vector<VideoSample>& corpus, int iteration,
                          int total_iterations, Rng& rng) {
  if (corpus.empty()) throw InputError("sample_training_clip: empty corpus");
  const VideoSample& v = corpus[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(corpus.size()) - 1))];
  const int T = v.t;
  const int gap = std::min(max_gap_schedule(iteration, total_iterations), T - 1);

  const int t1 = rng.uniform_int(0, T - 3);
  const int t2 = rng.uniform_int(t1 + 1, std::min(t1 + gap, T - 2));
  const int t3 = rng.uniform_int(t2 + 1, std::min(t2 + gap, T - 1));

  Clip clip;
  clip.object_id =
      v.object_ids[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(v.object_ids.size()) - 1))];
  const int idx[3] = {t1, t2, t3};
  for (int i = 0; i < 3; ++i) {
    const Tensor frame = frame_to_tensor(v.frames[static_cast<size_t>(idx[i])]);
    const Tensor mask =
        mask_to_tensor(v.labels[static_cast<size_t>(idx[i])], v.h, v.w, clip.object_id);
    const double angle = rng.uniform(-15.0, 15.0) * 3.14159265358979323846 / 180.0;
    const double scl = rng.uniform(0.9, 1.1);
    clip.frames[static_cast<size_t>(i)] = Tensor({v.h, v.w, 3});
    clip.masks[static_cast<size_t>(i)] = Tensor({v.h, v.w, 1});
    warp_affine(frame, clip.frames[static_cast<size_t>(i)], angle, scl, false);
    warp_affine(mask, clip.masks[static_cast<size_t>(i)], angle, scl, true);
  }
  return clip;
}

}  // namespace tsn
