#include "tsn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>

#include "tsn/image_io.hpp"

namespace fs = std::filesystem;

namespace tsn {

double region_j(const std::vector<uint8_t>& p, const std::vector<uint8_t>& g) {
  if (p.size() != g.size()) throw DimensionError("region_j: mask size mismatch");
  size_t inter = 0, uni = 0;
  for (size_t i = 0; i < p.size(); ++i) {
    const bool a = p[i] != 0, b = g[i] != 0;
    inter += a && b;
    uni += a || b;
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<uint8_t> mask_boundary(const std::vector<uint8_t>& m, int h, int w) {
  std::vector<uint8_t> b(m.size(), 0);
  auto bg = [&](int y, int x) {
    if (y < 0 || y >= h || x < 0 || x >= w) return true;  // outside counts as background
    return m[static_cast<size_t>(y) * w + x] == 0;
  };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const size_t i = static_cast<size_t>(y) * w + x;
      if (m[i] == 0) continue;
      if (bg(y - 1, x) || bg(y + 1, x) || bg(y, x - 1) || bg(y, x + 1)) b[i] = 1;
    }
  return b;
}

namespace {

std::vector<uint8_t> dilate_chebyshev(const std::vector<uint8_t>& m, int h, int w, int r) {
  std::vector<uint8_t> out(m.size(), 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!m[static_cast<size_t>(y) * w + x]) continue;
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
          const int yy = y + dy, xx = x + dx;
          if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
          out[static_cast<size_t>(yy) * w + xx] = 1;
        }
    }
  return out;
}

double matched_fraction(const std::vector<uint8_t>& b, const std::vector<uint8_t>& other_dilated) {
  size_t total = 0, hit = 0;
  for (size_t i = 0; i < b.size(); ++i) {
    if (!b[i]) continue;
    ++total;
    hit += other_dilated[i] != 0;
  }
  return total == 0 ? 0.0 : static_cast<double>(hit) / static_cast<double>(total);
}

}  // namespace

double boundary_f(const std::vector<uint8_t>& p, const std::vector<uint8_t>& g, int h, int w,
                  int tol_px) {
  const std::vector<uint8_t> pb = mask_boundary(p, h, w);
  const std::vector<uint8_t> gb = mask_boundary(g, h, w);
  const bool p_empty = std::all_of(pb.begin(), pb.end(), [](uint8_t v) { return v == 0; });
  const bool g_empty = std::all_of(gb.begin(), gb.end(), [](uint8_t v) { return v == 0; });
  if (p_empty && g_empty) return 1.0;
  if (p_empty || g_empty) return 0.0;

  const std::vector<uint8_t> gd = dilate_chebyshev(gb, h, w, tol_px);
  const std::vector<uint8_t> pd = dilate_chebyshev(pb, h, w, tol_px);
  const double precision = matched_fraction(pb, gd);
  const double recall = matched_fraction(gb, pd);
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

int boundary_tolerance(int h, int w) {
  return static_cast<int>(std::ceil(0.008 * std::sqrt(static_cast<double>(h) * h + static_cast<double>(w) * w)));
}

double jf_mean(const std::vector<double>& j, const std::vector<double>& f) {
  if (j.empty() || j.size() != f.size()) throw Error("jf_mean: empty or mismatched score lists");
  double acc = 0.0;
  for (size_t i = 0; i < j.size(); ++i) acc += 0.5 * (j[i] + f[i]);
  return acc / static_cast<double>(j.size());
}

namespace {

std::string frame_file(const std::string& dir, const char* prefix, int t) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "/%s_%04d.pgm", prefix, t);
  return dir + buf;
}

std::vector<uint8_t> binarize_id(const std::vector<uint8_t>& label, int id) {
  std::vector<uint8_t> out(label.size());
  for (size_t i = 0; i < label.size(); ++i) out[i] = label[i] == static_cast<uint8_t>(id);
  return out;
}

}  // namespace

EvalResult evaluate_dirs(const std::string& pred_dir, const std::string& gt_dir) {
  std::vector<std::string> videos;
  if (!fs::is_directory(gt_dir)) throw InputError("not a directory: " + gt_dir);
  for (const auto& e : fs::directory_iterator(gt_dir))
    if (e.is_directory()) videos.push_back(e.path().filename().string());
  std::sort(videos.begin(), videos.end());
  if (videos.empty()) throw InputError("no video directories under " + gt_dir);

  EvalResult res;
  double sum_j = 0, sum_f = 0, sum_jf = 0;
  size_t n_obj = 0;
  size_t em_inter = 0, em_total = 0;

  for (const auto& name : videos) {
    const std::string gt_video = gt_dir + "/" + name;
    const std::string pred_video = pred_dir + "/" + name;
    if (!fs::is_directory(pred_video))
      throw InputError("prediction missing for video " + name + " under " + pred_dir);

    std::ifstream mf(gt_video + "/manifest.json");
    if (!mf) throw InputError("missing manifest.json in " + gt_video);
    nlohmann::json manifest;
    mf >> manifest;
    const int T = manifest.at("T").get<int>();
    const std::vector<int> ids = manifest.at("objects").get<std::vector<int>>();

    struct Acc {
      std::vector<double> j, f;
      size_t em_inter = 0, em_total = 0;
    };
    std::map<int, Acc> acc;

    const int tol = [&] {
      const ImageU8 first = read_pgm(frame_file(gt_video, "gt", 0));
      return boundary_tolerance(first.h, first.w);
    }();

    for (int t = 1; t < T; ++t) {
      const ImageU8 gt = read_pgm(frame_file(gt_video, "gt", t));
      const ImageU8 pred = read_pgm(frame_file(pred_video, "label", t));
      if (pred.h != gt.h || pred.w != gt.w)
        throw InputError("prediction size mismatch on " + name);
      const ImageU8 emg = read_pgm(frame_file(gt_video, "emergent", t));

      for (int id : ids) {
        const std::vector<uint8_t> gm = binarize_id(gt.data, id);
        const std::vector<uint8_t> pm = binarize_id(pred.data, id);
        FrameEval fe;
        fe.video = name;
        fe.object_id = id;
        fe.frame = t;
        fe.j = region_j(pm, gm);
        fe.f = boundary_f(pm, gm, gt.h, gt.w, tol);

        size_t fi = 0, ft = 0;
        for (size_t i = 0; i < gm.size(); ++i) {
          if (gm[i] && emg.data[i]) {
            ++ft;
            fi += pm[i] != 0;
          }
        }
        if (ft > 0) fe.j_emergent = static_cast<double>(fi) / static_cast<double>(ft);
        acc[id].j.push_back(fe.j);
        acc[id].f.push_back(fe.f);
        acc[id].em_inter += fi;
        acc[id].em_total += ft;
        res.per_frame.push_back(fe);
      }
    }

    for (const auto& [id, a] : acc) {
      ObjectEval oe;
      oe.video = name;
      oe.object_id = id;
      for (double v : a.j) oe.j += v;
      for (double v : a.f) oe.f += v;
      oe.j /= static_cast<double>(a.j.size());
      oe.f /= static_cast<double>(a.f.size());
      oe.jf = 0.5 * (oe.j + oe.f);
      if (a.em_total > 0)
        oe.j_emergent = static_cast<double>(a.em_inter) / static_cast<double>(a.em_total);
      res.per_object.push_back(oe);
      sum_j += oe.j;
      sum_f += oe.f;
      sum_jf += oe.jf;
      ++n_obj;
      em_inter += a.em_inter;
      em_total += a.em_total;
    }
    ++res.videos;
  }

  res.mean_j = sum_j / static_cast<double>(n_obj);
  res.mean_f = sum_f / static_cast<double>(n_obj);
  res.mean_jf = sum_jf / static_cast<double>(n_obj);
  if (em_total > 0) res.j_emergent = static_cast<double>(em_inter) / static_cast<double>(em_total);
  return res;
}

void write_metrics_csv(const EvalResult& res, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw InputError("cannot open for write: " + path);
  f << "video_id,object_id,frame,J,F,J_emergent\n";
  char buf[64];
  auto num = [&](double v) {
    if (v < 0) return std::string();
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return std::string(buf);
  };
  for (const auto& fe : res.per_frame)
    f << fe.video << "," << fe.object_id << "," << fe.frame << "," << num(fe.j) << "," << num(fe.f)
      << "," << num(fe.j_emergent) << "\n";
  for (const auto& oe : res.per_object)
    f << oe.video << "," << oe.object_id << ",mean," << num(oe.j) << "," << num(oe.f) << ","
      << num(oe.j_emergent) << "\n";
  f << "ALL,,mean," << num(res.mean_j) << "," << num(res.mean_f) << "," << num(res.j_emergent)
    << "\n";
  if (!f) throw InputError("write failed: " + path);
}

}  // namespace tsn
