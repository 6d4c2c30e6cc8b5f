// Command-line driver: dataset generation, training, fitting, animation,
// evaluation, the rigid re-posing baseline and the gradient suite.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "pop/dataio/config.hpp"
#include "pop/dataio/formats.hpp"
#include "pop/dataio/synthetic.hpp"
#include "pop/numkit/archive.hpp"
#include "pop/numkit/gradcheck.hpp"
#include "pop/trainer/trainer.hpp"

namespace fs = std::filesystem;
using namespace pop;

namespace {

io::RunConfig load_config(const std::string& path) {
  return path.empty() ? io::RunConfig{} : io::parse_run_config(io::read_text(path));
}

std::unique_ptr<train::Model> load_model(const std::string& path) {
  return train::Model::load(nk::TensorArchive::load(path));
}

// A geometry tensor from a fit archive (first G/ entry unless named) or from
// the checkpoint's own bank.
nk::Tensor<float> load_geometry(train::Model& model, const std::string& archive_path, const std::string& name) {
  if (archive_path.empty()) {
    if (name.empty()) throw std::invalid_argument("need --geometry or --outfit");
    return model.geometry(name);
  }
  const nk::TensorArchive a = nk::TensorArchive::load(archive_path);
  for (const auto& e : a.entries()) {
    if (e.name.rfind("G/", 0) == 0 && (name.empty() || e.name == "G/" + name)) {
      auto g = a.tensor<float>(e.name);
      model.check_geometry(g);
      return g;
    }
  }
  throw std::invalid_argument("no geometry entry" + (name.empty() ? "" : " G/" + name) + " in " + archive_path);
}

void require_file(const std::string& path) {
  if (!fs::exists(path)) throw std::invalid_argument("file not found: " + path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Point-based model of pose-dependent clothing"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic multi-outfit dataset");
  std::string gen_out, suite = "default";
  std::uint64_t gen_seed = 1;
  io::GenOptions gen_opts;
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--seed", gen_seed, "Dataset seed");
  gen->add_option("--suite", suite, "Outfit suite")->check(CLI::IsMember({"default", "unseen"}));
  gen->add_option("--poses", gen_opts.poses_per_outfit, "Poses per outfit");
  gen->add_option("--points", gen_opts.points, "GT points per example");
  gen->add_option("--normal-resolution", gen_opts.normal_resolution, "Texel grid of the GT normal stencil");

  // train
  auto* trn = app.add_subcommand("train", "Train on the train split of a manifest");
  std::string trn_manifest, trn_config, trn_out, trn_log;
  int trn_epochs = 0;
  trn->add_option("--manifest", trn_manifest, "Dataset manifest")->required();
  trn->add_option("--config", trn_config, "Run config (key = value)");
  trn->add_option("--out", trn_out, "Checkpoint path")->required();
  trn->add_option("--log", trn_log, "Training log path (default: stdout)");
  trn->add_option("--epochs", trn_epochs, "Override the configured epoch count");

  // fit
  auto* fit = app.add_subcommand("fit", "Fit a geometry tensor to one scan with the network frozen");
  std::string fit_ckpt, fit_scan, fit_pose, fit_config, fit_out, fit_name = "fitted";
  fit->add_option("--checkpoint", fit_ckpt, "Trained checkpoint")->required();
  fit->add_option("--scan", fit_scan, "Scan PLY (world space)")->required();
  fit->add_option("--pose", fit_pose, "Pose file of the scan")->required();
  fit->add_option("--config", fit_config, "Run config (key = value)");
  fit->add_option("--name", fit_name, "Entry name in the output archive");
  fit->add_option("--out", fit_out, "Output geometry archive")->required();

  // animate
  auto* anim = app.add_subcommand("animate", "Generate one PLY per pose");
  std::string anim_ckpt, anim_geom, anim_outfit, anim_dir;
  std::vector<std::string> anim_poses;
  int anim_factor = 0;
  anim->add_option("--checkpoint", anim_ckpt, "Trained checkpoint")->required();
  anim->add_option("--geometry", anim_geom, "Geometry archive from fit");
  anim->add_option("--outfit", anim_outfit, "Outfit id (in the checkpoint or the geometry archive)");
  anim->add_option("--poses", anim_poses, "Pose files")->required();
  anim->add_option("--out-dir", anim_dir, "Output directory")->required();
  anim->add_option("--factor", anim_factor, "Query factor (default: model's)");

  // eval
  auto* ev = app.add_subcommand("eval", "Score a checkpoint on a manifest split");
  std::string ev_ckpt, ev_manifest, ev_out, ev_split = "test";
  int ev_factor = 0;
  ev->add_option("--checkpoint", ev_ckpt, "Trained checkpoint")->required();
  ev->add_option("--manifest", ev_manifest, "Dataset manifest")->required();
  ev->add_option("--split", ev_split, "Split")->check(CLI::IsMember({"train", "test"}));
  ev->add_option("--out", ev_out, "Report path (default: stdout)");
  ev->add_option("--factor", ev_factor, "Query factor (default: model's)");

  // repose-lbs
  auto* lbs = app.add_subcommand("repose-lbs", "Rigidly re-pose a scan by nearest body part");
  std::string lbs_scan, lbs_src, lbs_dst, lbs_out;
  int lbs_res = 128;
  lbs->add_option("--scan", lbs_scan, "Scan PLY")->required();
  lbs->add_option("--src-pose", lbs_src, "Pose of the scan")->required();
  lbs->add_option("--dst-pose", lbs_dst, "Target pose")->required();
  lbs->add_option("--out", lbs_out, "Output PLY")->required();
  lbs->add_option("--resolution", lbs_res, "Body texel grid used for part lookup");

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every differentiable op");
  nk::GradcheckOptions gc_opts;
  gc->add_option("--instances", gc_opts.instances, "Random instances per op");
  gc->add_option("--seed", gc_opts.seed, "Seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    const train::BodyContext body = train::BodyContext::proxy();
    const body::Skeleton& skeleton = *body.skeleton;

    if (*gen) {
      const auto specs = suite == "default" ? io::default_suite() : std::vector{io::unseen_outfit()};
      const auto m = io::gen_dataset(specs, gen_seed, gen_out, gen_opts);
      std::printf("wrote %zu examples to %s\n", m.entries.size(), (fs::path(gen_out) / "manifest.txt").c_str());
    } else if (*trn) {
      require_file(trn_manifest);
      io::RunConfig cfg = load_config(trn_config);
      if (trn_epochs > 0) cfg.train.epochs = trn_epochs;
      cfg.train.checkpoint_path = trn_out;
      const auto data = io::load_examples(trn_manifest, skeleton, true);
      train::Model model(train::model_config(cfg.train.preset, cfg.train.seed));
      std::ofstream log_file;
      if (!trn_log.empty()) log_file.open(trn_log);
      train::TrainHooks hooks;
      hooks.log = trn_log.empty() ? &std::cout : &log_file;
      train::train(model, body, data, cfg.train, hooks);
    } else if (*fit) {
      for (const auto& f : {fit_ckpt, fit_scan, fit_pose}) require_file(f);
      const io::RunConfig cfg = load_config(fit_config);
      auto model = load_model(fit_ckpt);
      const auto scan = train::normalize_example(io::read_ply(fit_scan), io::read_pose(fit_pose, skeleton), skeleton);
      const train::FitResult r = train::fit_unseen(*model, body, scan, cfg.fit);
      nk::TensorArchive out;
      out.put("G/" + fit_name, r.geometry);
      out.save(fit_out);
      std::printf("fit loss %.9e -> %.9e (chamfer %.9e)\n", r.losses.front(), r.final_loss, r.final_components.chamfer);
    } else if (*anim) {
      require_file(anim_ckpt);
      auto model = load_model(anim_ckpt);
      const auto g = load_geometry(*model, anim_geom, anim_outfit);
      std::vector<body::Pose> poses;
      for (const auto& p : anim_poses) {
        require_file(p);
        poses.push_back(io::read_pose(p, skeleton));
      }
      const auto clouds = train::animate(*model, body, g, poses, anim_factor);
      fs::create_directories(anim_dir);
      for (std::size_t i = 0; i < clouds.size(); ++i) {
        io::write_ply(clouds[i], fs::path(anim_dir) / (fs::path(anim_poses[i]).stem().string() + ".ply"));
      }
      std::printf("wrote %zu clouds to %s\n", clouds.size(), anim_dir.c_str());
    } else if (*ev) {
      for (const auto& f : {ev_ckpt, ev_manifest}) require_file(f);
      auto model = load_model(ev_ckpt);
      const auto data = io::load_examples(ev_manifest, skeleton, ev_split == "train");
      if (data.empty()) throw std::invalid_argument("manifest has no " + ev_split + " examples");
      const auto records = train::evaluate(*model, body, data, ev_factor);
      const auto stats = obj::eval_stats(records);
      if (ev_out.empty()) {
        obj::write_report(std::cout, records, stats);
      } else {
        std::ofstream out(ev_out);
        obj::write_report(out, records, stats);
        if (!out) throw std::runtime_error("cannot write " + ev_out);
      }
    } else if (*lbs) {
      for (const auto& f : {lbs_scan, lbs_src, lbs_dst}) require_file(f);
      const auto src = body.posed(io::read_pose(lbs_src, skeleton));
      const auto dst = body.posed(io::read_pose(lbs_dst, skeleton));
      io::write_ply(body::rigid_repose(io::read_ply(lbs_scan), src, dst, lbs_res), lbs_out);
    } else if (*gc) {
      bool ok = true;
      for (const auto& r : nk::run_gradcheck_suite(gc_opts)) {
        std::printf("%-22s instances %2zu max_rel_err %.3e %s\n", r.op.c_str(), r.instances, r.max_rel_error,
                    r.passed ? "ok" : "FAIL");
        ok = ok && r.passed;
      }
      return ok ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
