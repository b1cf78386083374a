#pragma once

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "s2a/config.hpp"
#include "s2a/datapipe.hpp"
#include "s2a/metrics.hpp"
#include "s2a/mosaic.hpp"
#include "s2a/png.hpp"
#include "s2a/train.hpp"

namespace s2a::cli {

using njson = nlohmann::json;

namespace detail {

inline int resolve_threads(int flag_value) {
  if (flag_value > 0) return flag_value;
  if (const char* env = std::getenv("S2A_THREADS")) {
    int v = std::atoi(env);
    if (v > 0) return v;
  }
  return 1;
}

inline void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  require(!ec, Err::IoFailure, "cannot create directory: " + dir);
}

inline njson loss_json(const TrainRecord& rec) {
  njson j{{"phase", rec.phase}, {"step", rec.step}};
  if (rec.phase == "adv") {
    j["d_real"] = rec.losses.d_real;
    j["d_fake"] = rec.losses.d_fake;
    j["gp"] = rec.losses.gp;
    j["sa"] = rec.losses.sa;
    j["da"] = rec.losses.da;
    j["d_total"] = rec.losses.d_total;
    j["g_adv"] = rec.losses.g_adv;
    j["g_total"] = rec.losses.g_total;
    j["critic_grad_norm"] = rec.losses.critic_grad_norm;
  }
  j["pixel"] = rec.losses.pixel;
  if (rec.val_pixel >= 0) {
    j["val_pixel"] = rec.val_pixel;
    j["val_sre"] = rec.val_sre;
  }
  return j;
}

inline njson report_json(const MetricReport& r) {
  njson j{{"rmse", r.rmse},
          {"ssim_percent", r.ssim_percent},
          {"sre_db", r.sre_db},
          {"psnr_db", std::isinf(r.psnr_db) ? njson("inf") : njson(r.psnr_db)},
          {"sam_deg", r.sam_deg},
          {"sam_skipped", r.sam_skipped},
          {"scale_peak", r.scale_peak}};
  if (r.mndwi_iou >= 0) j["mndwi_iou"] = r.mndwi_iou;
  return j;
}

// Loads every distinct scene referenced by a manifest once and slices crops
// at the listed offsets.
inline CropDataset load_crops_from_manifest(const std::string& manifest_path) {
  Manifest m = read_manifest(manifest_path);
  require(!m.entries.empty(), Err::EmptyDataset, "manifest lists no crops");
  std::filesystem::path base = std::filesystem::path(manifest_path).parent_path();
  CropDataset ds;
  ds.size = m.size;
  std::string loaded_path;
  MultiBandRaster source, target;
  int scene_index = -1;
  for (const auto& e : m.entries) {
    if (e.scene_path != loaded_path) {
      MultiBandRaster packed = read_mbr((base / e.scene_path).string());
      unpack_scene(packed, source, target);
      loaded_path = e.scene_path;
      ++scene_index;
    }
    ds.crops.push_back(crop_at(source, target, e.row, e.col, m.size, m.factor, scene_index));
  }
  return ds;
}

inline std::vector<float> plane_copy(const MultiBandRaster& r, const std::string& band) {
  const float* p = r.plane(r.band_or_throw(band));
  return std::vector<float>(p, p + r.plane_size());
}

// Single-band rasters pass as SWIR regardless of label; multi-band ones must
// name it.
inline std::vector<float> swir_of(const MultiBandRaster& r) {
  const float* p = r.bands == 1 ? r.plane(0) : r.plane(r.band_or_throw("SWIR"));
  return std::vector<float>(p, p + r.plane_size());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

struct DatagenOpts {
  std::uint64_t seed = 0;
  int scenes = 4;
  int size = 256;
  int width = 0;  // 0 -> square
  int crop_size = kDefaultCropSize;
  int stride = kDefaultCropStride;
  int factor = kDefaultCoarseFactor;
  std::string out;
};

inline int cmd_datagen(const DatagenOpts& o, bool json) {
  detail::ensure_dir(o.out);
  int width = o.width > 0 ? o.width : o.size;
  Manifest manifest;
  manifest.size = o.crop_size;
  manifest.stride = o.stride;
  manifest.factor = o.factor;
  for (int i = 0; i < o.scenes; ++i) {
    SynthScene scene = synth_scene(splitmix64(o.seed ^ (static_cast<std::uint64_t>(i) *
                                                        0x9e3779b97f4a7c15ULL)),
                                   o.size, width, o.factor);
    char name[64];
    std::snprintf(name, sizeof(name), "scene_%04d.mbr", i);
    write_mbr(pack_scene(scene), o.out + "/" + name);
    auto rows = window_origins(o.size, o.crop_size, o.stride);
    auto cols = window_origins(width, o.crop_size, o.stride);
    for (int r : rows)
      for (int c : cols) manifest.entries.push_back({name, r, c});
  }
  write_manifest(manifest, o.out + "/manifest.txt");
  if (json)
    std::cout << njson{{"scenes", o.scenes}, {"crops", manifest.entries.size()},
                       {"manifest", o.out + "/manifest.txt"}}
                     .dump()
              << "\n";
  else
    std::cout << "wrote " << o.scenes << " scenes, " << manifest.entries.size() << " crops -> "
              << o.out << "\n";
  return 0;
}

struct TrainOpts {
  std::string data;
  std::string out = "runs";
  std::string config_file;
  std::vector<std::string> sets;
  std::string resume;
};

inline int cmd_train(const TrainOpts& o, bool json) {
  TrainConfig cfg;
  SplitConfig split;
  if (!o.config_file.empty()) apply_config_file(cfg, split, o.config_file);
  for (const auto& kv : o.sets) apply_config_assignment(cfg, split, kv);
  cfg.out_dir = o.out;
  cfg.validate();
  detail::ensure_dir(o.out);

  CropDataset all = detail::load_crops_from_manifest(o.data);
  auto parts = split_dataset(all, split.train(), split.val, split.test, cfg.seed);
  std::ofstream log_file(o.out + "/train_log.jsonl");
  require(static_cast<bool>(log_file), Err::IoFailure, "cannot open training log");

  TrainLogger logger = [&](const TrainRecord& rec) {
    njson j = detail::loss_json(rec);
    log_file << j.dump() << "\n";
    if (json)
      std::cout << j.dump() << "\n";
    else if (rec.val_pixel >= 0)
      std::printf("%s step %llu  pixel %.6f  val_pixel %.6f  val_sre %.3f dB\n",
                  rec.phase.c_str(), static_cast<unsigned long long>(rec.step), rec.losses.pixel,
                  rec.val_pixel, rec.val_sre);
  };

  TrainState state;
  TrainState* resume_ptr = nullptr;
  if (!o.resume.empty()) {
    state = load_checkpoint(o.resume, &cfg.net);
    resume_ptr = &state;
  }
  TrainState final_state = train(cfg, parts[0], parts[1], logger, resume_ptr);
  auto v = evaluate_validation(final_state, parts[1], cfg.batch);
  if (json)
    std::cout << njson{{"final_val_pixel", v.pixel_mse},
                       {"final_val_sre", v.sre_db},
                       {"best_val_sre", final_state.best_val_sre},
                       {"checkpoint", checkpoint_path(o.out, "final")}}
                     .dump()
              << "\n";
  else
    std::printf("done: val_pixel %.6f  val_sre %.3f dB  best %.3f dB -> %s\n", v.pixel_mse,
                v.sre_db, final_state.best_val_sre, checkpoint_path(o.out, "final").c_str());
  return 0;
}

struct SynthOpts {
  std::string scene;
  std::string ckpt;
  std::string out;
  std::string attention_from = "coarse";
  std::string coarse_file;
  std::string png;
  int patch = kDefaultCropSize;
  int stride = kDefaultCropStride;
  double sigma = 0.0;
  int threads = 0;
};

inline int cmd_synthesize(const SynthOpts& o, bool json) {
  TrainState state = load_checkpoint(o.ckpt);
  MultiBandRaster scene = read_mbr(o.scene);
  MultiBandRaster coarse;
  bool have_coarse = !o.coarse_file.empty();
  if (have_coarse) coarse = read_mbr(o.coarse_file);
  AttentionSourceMode mode = parse_attention_source(o.attention_from);
  Plane att = attention_source_select(scene, have_coarse ? &coarse : nullptr, state.factor, mode);

  TilePlan plan = plan_tiles(scene.height, scene.width, o.patch, o.stride);
  FeatherWeights feather(o.patch, o.sigma);
  TileFn fn = make_model_tile_fn(state.gen, state.disc, state.net, state.attention);
  MultiBandRaster pred =
      synthesize_scene(fn, scene, att, plan, feather, detail::resolve_threads(o.threads));
  clamp01(pred);
  write_mbr(pred, o.out);
  if (!o.png.empty()) {
    MultiBandRaster composite(3, scene.height, scene.width, {"SWIR", "NIR", "R"});
    std::copy_n(pred.plane(0), pred.plane_size(), composite.plane(0));
    std::copy_n(scene.plane(scene.band_or_throw("NIR")), scene.plane_size(), composite.plane(1));
    std::copy_n(scene.plane(scene.band_or_throw("R")), scene.plane_size(), composite.plane(2));
    export_png(composite, {"SWIR", "NIR", "R"}, Stretch::percentile(), o.png);
  }
  if (json)
    std::cout << njson{{"out", o.out}, {"tiles", plan.origins.size()}}.dump() << "\n";
  else
    std::cout << "synthesized " << o.out << " from " << plan.origins.size() << " tiles\n";
  return 0;
}

struct EvalOpts {
  std::string pred;
  std::string gt;
  std::string scene;  // optional source of G/R/NIR when gt lacks them
  double peak = 1.0;
  double mndwi_threshold = 0.0;
};

inline int cmd_evaluate(const EvalOpts& o, bool json) {
  MultiBandRaster pred = read_mbr(o.pred);
  MultiBandRaster gt = read_mbr(o.gt);
  require(pred.height == gt.height && pred.width == gt.width, Err::DimensionMismatch,
          "prediction and ground truth dims differ");
  const MultiBandRaster* source = &gt;
  MultiBandRaster scene;
  if (!o.scene.empty()) {
    scene = read_mbr(o.scene);
    source = &scene;
  }
  MetricReport r = evaluate_report(detail::swir_of(pred), detail::swir_of(gt), *source, gt.height,
                                   gt.width, o.peak, o.mndwi_threshold);
  if (json)
    std::cout << detail::report_json(r).dump() << "\n";
  else
    std::cout << metric_table({{std::filesystem::path(o.pred).filename().string(), r}});
  return 0;
}

struct MndwiOpts {
  std::string scene;
  std::string pred;  // optional predicted SWIR override
  std::string out;   // optional output directory
  double threshold = 0.0;
};

inline int cmd_mndwi(const MndwiOpts& o, bool json) {
  MultiBandRaster scene = read_mbr(o.scene);
  std::vector<float> g = detail::plane_copy(scene, "G");
  std::vector<float> swir;
  if (!o.pred.empty())
    swir = detail::swir_of(read_mbr(o.pred));
  else
    swir = detail::plane_copy(scene, "SWIR");
  require(swir.size() == g.size(), Err::DimensionMismatch, "SWIR dims differ from scene");

  std::vector<float> index = mndwi(g, swir);
  BinaryMask mask = threshold_mask(index, scene.height, scene.width,
                                   static_cast<float>(o.threshold));
  double iou_vs_truth = -1.0;
  if (scene.find_band("WATER") >= 0) {
    BinaryMask truth(scene.height, scene.width);
    const float* w = scene.plane(scene.band_or_throw("WATER"));
    for (std::size_t i = 0; i < truth.values.size(); ++i) truth.values[i] = w[i] > 0.5f ? 1 : 0;
    iou_vs_truth = iou(mask, truth);
  }
  if (!o.out.empty()) {
    detail::ensure_dir(o.out);
    MultiBandRaster mr(1, scene.height, scene.width, {"MNDWI"});
    std::copy(index.begin(), index.end(), mr.plane(0));
    write_mbr(mr, o.out + "/mndwi.mbr");
    MultiBandRaster mm(1, scene.height, scene.width, {"WATER"});
    for (std::size_t i = 0; i < mask.values.size(); ++i)
      mm.plane(0)[i] = static_cast<float>(mask.values[i]);
    write_mbr(mm, o.out + "/mask.mbr");
    export_png(mm, {"WATER"}, Stretch::none(), o.out + "/mask.png");
  }
  njson j{{"threshold", o.threshold},
          {"water_pixels", mask.count()},
          {"water_fraction",
           static_cast<double>(mask.count()) / static_cast<double>(mask.values.size())}};
  if (iou_vs_truth >= 0) j["iou_vs_truth"] = iou_vs_truth;
  if (json)
    std::cout << j.dump() << "\n";
  else {
    std::printf("water pixels %zu (%.2f%%)\n", mask.count(),
                100.0 * static_cast<double>(mask.count()) / static_cast<double>(mask.values.size()));
    if (iou_vs_truth >= 0) std::printf("IoU vs generating mask: %.4f\n", iou_vs_truth);
  }
  return 0;
}

struct AblateOpts {
  std::string data;
  std::string out = "ablation";
  std::string config_file;
  std::vector<std::string> sets;
  int steps = 300;
};

inline int cmd_ablate(const AblateOpts& o, bool json) {
  TrainConfig base;
  SplitConfig split;
  // compact sweep defaults; config file / --set can override
  base.net.rdb_count = 1;
  base.net.rdb_channels = 16;
  base.net.rdb_layers = 2;
  base.net.rdb_growth = 8;
  base.net.ca_reduction = 8;
  base.net.encoder_mid = 16;
  base.net.decoder_mid = 16;
  base.net.mlp_hidden1 = 16;
  base.net.mlp_hidden2 = 8;
  base.batch = 4;
  base.pretrain_epochs = 1;
  base.eval_every = 0;
  base.checkpoint_every = 0;
  if (!o.config_file.empty()) apply_config_file(base, split, o.config_file);
  for (const auto& kv : o.sets) apply_config_assignment(base, split, kv);
  base.adv_steps = o.steps;
  detail::ensure_dir(o.out);

  CropDataset all = detail::load_crops_from_manifest(o.data);
  auto parts = split_dataset(all, split.train(), split.val, split.test, base.seed);
  require(!parts[1].crops.empty(), Err::EmptyDataset, "ablation needs a validation split");
  const PairedCrop& probe = parts[1].crops.front();
  Tensor probe_ytil(1, 1, probe.size, probe.size);
  std::copy(probe.y_tilde.begin(), probe.y_tilde.end(), probe_ytil.d.begin());

  struct Row {
    std::string variant, conditioning;
    double val_pixel, val_sre;
  };
  std::vector<Row> rows;
  for (AttentionVariant v : {AttentionVariant::V1, AttentionVariant::V2, AttentionVariant::V3})
    for (Conditioning c : {Conditioning::Concat, Conditioning::Multiply}) {
      TrainConfig cfg = base;
      cfg.attention = v;
      cfg.net.conditioning = c;
      std::string tag = std::string(to_string(v)) + "_" + to_string(c);
      cfg.out_dir = "";  // sweep runs keep no checkpoints
      TrainState st = train(cfg, parts[0], parts[1]);
      auto score = evaluate_validation(st, parts[1], cfg.batch);
      rows.push_back({to_string(v), to_string(c), score.pixel_mse, score.sre_db});

      auto taps = discriminator_forward(st.disc, st.net, ad::constant(probe_ytil)).taps;
      auto amap = spatial_attention(taps, v);
      MultiBandRaster ar(1, probe.size, probe.size, {"ATTN"});
      for (std::size_t i = 0; i < ar.plane_size(); ++i) ar.plane(0)[i] = amap->v.d[i];
      export_png(ar, {"ATTN"}, Stretch::none(), o.out + "/attn_" + tag + ".png");
      if (!json)
        std::printf("finished %s: val_pixel %.6f  val_sre %.3f dB\n", tag.c_str(),
                    score.pixel_mse, score.sre_db);
    }

  std::string table = "variant  conditioning  val_pixel   val_sre(dB)\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%-8s %-13s %-11.6f %-11.3f\n", r.variant.c_str(),
                  r.conditioning.c_str(), r.val_pixel, r.val_sre);
    table += buf;
  }
  auto sre_of = [&](const std::string& v, const std::string& c) {
    for (const auto& r : rows)
      if (r.variant == v && r.conditioning == c) return r.val_sre;
    return 0.0;
  };
  bool concat_wins = true;
  for (const char* v : {"v1", "v2", "v3"})
    if (sre_of(v, "concat") < sre_of(v, "multiply")) concat_wins = false;
  table += std::string("expected-direction concat_sre >= multiply_sre: ") +
           (concat_wins ? "yes" : "no") + "\n";
  std::ofstream tf(o.out + "/ablation.txt");
  tf << table;
  if (json) {
    njson j = njson::array();
    for (const auto& r : rows)
      j.push_back({{"variant", r.variant},
                   {"conditioning", r.conditioning},
                   {"val_pixel", r.val_pixel},
                   {"val_sre", r.val_sre}});
    std::cout << njson{{"runs", j}, {"concat_ge_multiply", concat_wins}}.dump() << "\n";
  } else {
    std::cout << table;
  }
  return 0;
}

struct ExportOpts {
  std::string in;
  std::string out;
  std::vector<std::string> bands;
  std::string stretch = "percentile";
  double lo = 2.0, hi = 98.0;
};

inline int cmd_export(const ExportOpts& o) {
  MultiBandRaster r = read_mbr(o.in);
  std::vector<std::string> bands = o.bands;
  if (bands.empty()) {
    if (r.bands >= 3 && r.find_band("SWIR") >= 0 && r.find_band("NIR") >= 0 && r.find_band("R") >= 0)
      bands = {"SWIR", "NIR", "R"};
    else
      bands = {r.labels.at(0)};
  }
  Stretch s = o.stretch == "none" ? Stretch::none() : Stretch::percentile(o.lo, o.hi);
  require(o.stretch == "none" || o.stretch == "percentile", Err::BadConfig,
          "stretch must be 'none' or 'percentile'");
  export_png(r, bands, s, o.out);
  return 0;
}

// ---------------------------------------------------------------------------
// Top level
// ---------------------------------------------------------------------------

inline int run(int argc, const char* const* argv) {
  CLI::App app{"spatio-spectral attention band synthesis toolkit"};
  app.require_subcommand(1);
  bool json = false;
  app.add_flag("--json", json, "emit machine-readable JSON on stdout");

  DatagenOpts dg;
  auto* c_dg = app.add_subcommand("datagen", "generate synthetic scene pairs and a crop manifest");
  c_dg->add_option("--seed", dg.seed, "master seed");
  c_dg->add_option("--scenes", dg.scenes, "number of scenes")->check(CLI::PositiveNumber);
  c_dg->add_option("--size", dg.size, "scene height (and width unless --width)");
  c_dg->add_option("--width", dg.width, "scene width");
  c_dg->add_option("--crop-size", dg.crop_size, "crop window size");
  c_dg->add_option("--stride", dg.stride, "crop stride");
  c_dg->add_option("--factor", dg.factor, "coarse resolution factor");
  c_dg->add_option("--out", dg.out, "output directory")->required();

  TrainOpts tr;
  auto* c_tr = app.add_subcommand("train", "pretrain and adversarially train on a crop manifest");
  c_tr->add_option("--data", tr.data, "dataset manifest path")->required();
  c_tr->add_option("--out", tr.out, "run directory for logs and checkpoints");
  c_tr->add_option("--config", tr.config_file, "key = value config file");
  c_tr->add_option("--set", tr.sets, "override config key=value (repeatable)");
  c_tr->add_option("--resume", tr.resume, "checkpoint to resume from");

  SynthOpts sy;
  auto* c_sy = app.add_subcommand("synthesize", "tile-and-feather full-scene band synthesis");
  c_sy->add_option("--scene", sy.scene, "input scene (needs G,R,NIR bands)")->required();
  c_sy->add_option("--ckpt", sy.ckpt, "trained checkpoint")->required();
  c_sy->add_option("--out", sy.out, "output MBR path")->required();
  c_sy->add_option("--attention-from", sy.attention_from,
                   "conditioning source: 'coarse' or 'band:<NAME>'");
  c_sy->add_option("--coarse", sy.coarse_file, "real coarse SWIR raster (otherwise simulated)");
  c_sy->add_option("--png", sy.png, "also write a SWIR/NIR/R composite PNG");
  c_sy->add_option("--patch", sy.patch, "tile size");
  c_sy->add_option("--stride", sy.stride, "tile stride");
  c_sy->add_option("--sigma", sy.sigma, "feather sigma (0 = patch/4)");
  c_sy->add_option("--threads", sy.threads, "tile worker threads (or S2A_THREADS)");

  EvalOpts ev;
  auto* c_ev = app.add_subcommand("evaluate", "quality metrics of a prediction vs ground truth");
  c_ev->add_option("--pred", ev.pred, "predicted SWIR raster")->required();
  c_ev->add_option("--gt", ev.gt, "ground-truth raster or packed scene")->required();
  c_ev->add_option("--scene", ev.scene, "scene supplying G/R/NIR when --gt lacks them");
  c_ev->add_option("--peak", ev.peak, "radiometric peak for PSNR/SSIM");
  c_ev->add_option("--mndwi-threshold", ev.mndwi_threshold, "water threshold");

  MndwiOpts mn;
  auto* c_mn = app.add_subcommand("mndwi", "water index map, mask and IoU");
  c_mn->add_option("--scene", mn.scene, "scene with G (and SWIR unless --pred)")->required();
  c_mn->add_option("--pred", mn.pred, "predicted SWIR raster to use instead of the scene's");
  c_mn->add_option("--out", mn.out, "directory for mndwi.mbr / mask.mbr / mask.png");
  c_mn->add_option("--threshold", mn.threshold, "water threshold");

  AblateOpts ab;
  auto* c_ab = app.add_subcommand("ablate", "attention-variant and conditioning sweep");
  c_ab->add_option("--data", ab.data, "dataset manifest path")->required();
  c_ab->add_option("--out", ab.out, "output directory");
  c_ab->add_option("--steps", ab.steps, "adversarial steps per run")->check(CLI::PositiveNumber);
  c_ab->add_option("--config", ab.config_file, "base config file");
  c_ab->add_option("--set", ab.sets, "override config key=value (repeatable)");

  ExportOpts ex;
  auto* c_ex = app.add_subcommand("export", "render an MBR raster to PNG");
  c_ex->add_option("--in", ex.in, "input MBR")->required();
  c_ex->add_option("--out", ex.out, "output PNG")->required();
  c_ex->add_option("--bands", ex.bands, "1 or 3 band labels (default: composite or first band)");
  c_ex->add_option("--stretch", ex.stretch, "'percentile' (default) or 'none'");
  c_ex->add_option("--lo", ex.lo, "low percentile");
  c_ex->add_option("--hi", ex.hi, "high percentile");

  for (auto* sub : app.get_subcommands([](CLI::App*) { return true; })) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n" << app.help() << std::flush;
    return 1;
  }

  try {
    if (c_dg->parsed()) return cmd_datagen(dg, json);
    if (c_tr->parsed()) return cmd_train(tr, json);
    if (c_sy->parsed()) return cmd_synthesize(sy, json);
    if (c_ev->parsed()) return cmd_evaluate(ev, json);
    if (c_mn->parsed()) return cmd_mndwi(mn, json);
    if (c_ab->parsed()) return cmd_ablate(ab, json);
    if (c_ex->parsed()) return cmd_export(ex);
  } catch (const Error& e) {
    std::cerr << "error [" << err_name(e.code) << "]: " << e.what() << "\n";
    bool usage = e.code == Err::BadConfig || e.code == Err::BadFractions ||
                 e.code == Err::UnknownConditioningMode;
    return usage ? 1 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace s2a::cli
