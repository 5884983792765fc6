#include "tsn/cli.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <iostream>

#include "tsn/bench.hpp"
#include "tsn/harness.hpp"
#include "tsn/infer.hpp"
#include "tsn/metrics.hpp"
#include "tsn/train.hpp"

namespace fs = std::filesystem;

namespace tsn {

namespace {

std::vector<VideoSample> load_corpus(const std::string& dir) {
  if (!fs::is_directory(dir)) throw InputError("not a directory: " + dir);
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory()) names.push_back(e.path().string());
  std::sort(names.begin(), names.end());
  if (names.empty()) throw InputError("no videos under " + dir);
  std::vector<VideoSample> corpus;
  corpus.reserve(names.size());
  for (const auto& n : names) corpus.push_back(load_video(n));
  return corpus;
}

int cmd_gen(const std::string& out, int videos, int size, uint64_t seed, const std::string& mode,
            int frames, int objects) {
  VideoCfg cfg;
  cfg.size = size;
  cfg.frames = frames;
  cfg.objects = objects;
  cfg.mode = emergence_mode_from(mode);
  Rng rng(seed);
  fs::create_directories(out);
  for (int i = 0; i < videos; ++i) {
    const uint64_t vseed = rng.next_u64();
    char name[32];
    std::snprintf(name, sizeof(name), "video_%04d", i);
    save_video(gen_video(vseed, cfg), out + "/" + name);
  }
  std::cout << "generated " << videos << " videos under " << out << "\n";
  return 0;
}

int cmd_train(const std::string& corpus_dir, const std::string& config_path,
              const std::string& out) {
  const ModelConfig cfg = load_config(config_path);
  const std::vector<VideoSample> corpus = load_corpus(corpus_dir);
  std::vector<TrainStats> curve;
  Network<float> net = train(corpus, cfg, &curve, &std::cout);
  save_checkpoint(out, to_checkpoint(net));
  write_loss_csv(curve, out + ".loss.csv");
  std::cout << "saved checkpoint " << out << "\n";
  return 0;
}

int cmd_infer(const std::string& ckpt, const std::string& video_dir, const std::string& out,
              bool dump_routing, int topk, bool dense) {
  Network<float> net = network_from_checkpoint(load_checkpoint(ckpt));
  const VideoSample video = load_video(video_dir);
  InferOpts opts;
  opts.dense = dense;
  opts.topk = topk > 0 ? topk : net.cfg.k_topk;
  opts.dump_routing = dump_routing;
  const InferOutput result = run_inference(net, video, opts);
  write_inference(result, video, out, dump_routing);
  std::cout << "segmented " << result.stats.frames << " frames at " << result.stats.fps
            << " fps\n";
  return 0;
}

int cmd_eval(const std::string& pred, const std::string& gt, const std::string& out) {
  const EvalResult res = evaluate_dirs(pred, gt);
  write_metrics_csv(res, out);
  std::printf("videos %d  J %.4f  F %.4f  J&F %.4f", res.videos, res.mean_j, res.mean_f,
              res.mean_jf);
  if (res.j_emergent >= 0) std::printf("  J_emergent %.4f", res.j_emergent);
  std::printf("\n");
  return 0;
}

int cmd_gradcheck() {
  const GradReport report = gradcheck_all();
  for (const auto& e : report.entries)
    std::printf("%-28s %12.3e  (tol %.0e)  %s\n", e.name.c_str(), e.err, e.tol,
                e.ok ? "ok" : "FAIL");
  if (!report.all_ok) throw NumericalError("gradient check failed");
  return 0;
}

int cmd_bench(int mem_frames, int hw) {
  for (const auto& row : run_bench(mem_frames, hw))
    std::printf("%-16s %10.3f ms\n", row.name.c_str(), row.ms);
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"two-stream video object segmentation, desk scale"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen", "generate a synthetic video corpus");
  std::string gen_out, gen_mode = "occlusion";
  int gen_videos = 20, gen_size = 64, gen_frames = 8, gen_objects = 1;
  uint64_t gen_seed = 0;
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--videos", gen_videos, "number of videos");
  gen->add_option("--size", gen_size, "frame size")->check(CLI::IsMember({32, 64}));
  gen->add_option("--seed", gen_seed, "corpus seed");
  gen->add_option("--mode", gen_mode, "emergence mode")
      ->check(CLI::IsMember({"occlusion", "border", "articulation"}));
  gen->add_option("--frames", gen_frames, "frames per video");
  gen->add_option("--objects", gen_objects, "objects per video")->check(CLI::IsMember({1, 2}));

  auto* train_cmd = app.add_subcommand("train", "train a model on a corpus");
  std::string train_corpus, train_config, train_out;
  train_cmd->add_option("--corpus", train_corpus, "corpus directory")->required();
  train_cmd->add_option("--config", train_config, "config file")->required();
  train_cmd->add_option("--out", train_out, "checkpoint path")->required();

  auto* infer_cmd = app.add_subcommand("infer", "segment one video with a checkpoint");
  std::string infer_ckpt, infer_video, infer_out;
  bool infer_dump_routing = false, infer_dense = false;
  int infer_topk = 0;
  infer_cmd->add_option("--ckpt", infer_ckpt, "checkpoint path")->required();
  infer_cmd->add_option("--video", infer_video, "video directory")->required();
  infer_cmd->add_option("--out", infer_out, "output directory")->required();
  infer_cmd->add_flag("--dump-routing", infer_dump_routing, "write routing-map PGMs");
  auto* topk_opt = infer_cmd->add_option("--topk", infer_topk, "top-k memory entries");
  auto* dense_opt = infer_cmd->add_flag("--dense", infer_dense, "dense memory read");
  topk_opt->excludes(dense_opt);
  dense_opt->excludes(topk_opt);

  auto* eval_cmd = app.add_subcommand("eval", "score predictions against ground truth");
  std::string eval_pred, eval_gt, eval_out;
  eval_cmd->add_option("--pred", eval_pred, "prediction directory")->required();
  eval_cmd->add_option("--gt", eval_gt, "ground-truth corpus directory")->required();
  eval_cmd->add_option("--out", eval_out, "metrics CSV path")->required();

  auto* gradcheck_cmd = app.add_subcommand("gradcheck", "finite-difference gradient audit");

  auto* bench_cmd = app.add_subcommand("bench", "kernel throughput table");
  int bench_mem = 2, bench_hw = 256;
  bench_cmd->add_option("--mem-frames", bench_mem, "memory frames");
  bench_cmd->add_option("--hw", bench_hw, "query grid size (pixels)");

  try {
    app.parse(argc, argv);
    if (gen->parsed())
      return cmd_gen(gen_out, gen_videos, gen_size, gen_seed, gen_mode, gen_frames, gen_objects);
    if (train_cmd->parsed()) return cmd_train(train_corpus, train_config, train_out);
    if (infer_cmd->parsed())
      return cmd_infer(infer_ckpt, infer_video, infer_out, infer_dump_routing, infer_topk,
                       infer_dense);
    if (eval_cmd->parsed()) return cmd_eval(eval_pred, eval_gt, eval_out);
    if (gradcheck_cmd->parsed()) return cmd_gradcheck();
    if (bench_cmd->parsed()) return cmd_bench(bench_mem, bench_hw);
    return 2;
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace tsn
