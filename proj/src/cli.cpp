// SPDX-License-Identifier: Apache-2.0

#include "gsdf/cli.hpp"

#include "gsdf/dataset_io.hpp"
#include "gsdf/extraction.hpp"
#include "gsdf/fusion.hpp"
#include "gsdf/photometric_ba.hpp"
#include "gsdf/ply.hpp"
#include "gsdf/synthetic.hpp"
#include "gsdf/tracking.hpp"
#include "gsdf/volume.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <map>
#include <iostream>
#include <optional>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace gsdf::cli {

namespace {

// Failure of a pipeline stage, reported as "error: <kind>: <message>".
struct CliFailure : std::runtime_error {
  CliFailure(std::string k, const std::string& msg) : std::runtime_error(msg), kind(std::move(k)) {}
  std::string kind;
};

struct SequenceOptions {
  std::string dir;
  std::string camera;
  double max_gap = 0.02;
  int max_frames = 0;  // 0 = all
};

void add_sequence_options(CLI::App* app, SequenceOptions& o) {
  app->add_option("sequence", o.dir, "TUM-format sequence directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  app->add_option("--camera", o.camera, "Camera config (key=value: fx fy cx cy width height depth_scale)")
      ->check(CLI::ExistingFile);
  app->add_option("--max-gap", o.max_gap, "Depth/color association gap in seconds")
      ->capture_default_str();
  app->add_option("--max-frames", o.max_frames, "Process at most this many frames (0 = all)")
      ->capture_default_str();
}

void add_normal_options(CLI::App* app, FusionParams& p) {
  static const std::map<std::string, DistanceModel> models = {
      {"projective", DistanceModel::kProjective}, {"point-to-plane", DistanceModel::kPointToPlane}};
  app->add_option("--normal-radius", p.normal_radius, "Pixel offset of normal differences")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  app->add_option("--distance-model", p.distance_model, "projective or point-to-plane")
      ->transform(CLI::CheckedTransformer(models, CLI::ignore_case));
}

void add_fusion_options(CLI::App* app, FusionParams& p) {
  app->add_option("--voxel-size", p.voxel_size, "Voxel size in meters")->capture_default_str();
  app->add_option("--trunc", p.trunc_factor, "Truncation in voxel sizes")->capture_default_str();
  app->add_option("--depth-cutoff", p.depth_cutoff, "Ignore depth beyond this (m)")
      ->capture_default_str();
  app->add_option("--normal-angle", p.normal_angle_max_deg,
                  "Reject pixels viewed more obliquely than this (deg)")
      ->capture_default_str();
  add_normal_options(app, p);
}

void add_tracking_options(CLI::App* app, TrackingParams& p) {
  app->add_option("--track-iterations", p.max_iterations, "Gauss-Newton iterations per frame")
      ->capture_default_str();
  app->add_option("--huber", p.huber_delta, "Huber threshold for tracking residuals (m)")
      ->capture_default_str();
  app->add_option("--stride", p.subsample_stride, "Pixel subsampling for tracking")
      ->capture_default_str();
}

TumSequence open_sequence(const SequenceOptions& o) {
  std::optional<std::filesystem::path> cam;
  if (!o.camera.empty()) cam = o.camera;
  return TumSequence::open(o.dir, o.max_gap, cam);
}

std::size_t frame_limit(const TumSequence& seq, const SequenceOptions& o) {
  return o.max_frames > 0 ? std::min<std::size_t>(seq.size(), static_cast<std::size_t>(o.max_frames))
                          : seq.size();
}

// Pose of every depth frame associated with the trajectory, by timestamp.
std::vector<std::optional<Pose>> poses_for(const TumSequence& seq, std::size_t n,
                                           const Trajectory& traj, double max_gap) {
  std::vector<double> td, tt;
  for (std::size_t i = 0; i < n; ++i) td.push_back(seq.entry(i).depth_timestamp);
  for (const auto& p : traj) tt.push_back(p.timestamp);
  std::vector<std::optional<Pose>> out(n);
  for (const auto& [i, j] : associate_timestamps(td, tt, max_gap)) out[i] = traj[j].pose;
  return out;
}

int cmd_fuse(const SequenceOptions& so, const FusionParams& fp, const TrackingParams& tp,
             const std::string& traj_path, const std::string& out) {
  fp.validate();
  const TumSequence seq = open_sequence(so);
  const std::size_t n = frame_limit(seq, so);
  std::vector<std::optional<Pose>> given;
  if (!traj_path.empty()) given = poses_for(seq, n, read_trajectory(traj_path), so.max_gap);

  GradientSdfVolume vol(fp.voxel_size, fp.truncation());
  Pose pose = Pose::Identity();
  std::size_t fused = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto frame = seq.load(i);
    if (!frame) continue;
    if (!traj_path.empty()) {
      if (!given[i]) continue;
      pose = *given[i];
    } else if (fused > 0) {
      try {
        pose = track_frame(vol, frame->depth, pose, tp).pose;
      } catch (const TrackingError& e) {
        std::cerr << "warning: frame " << i << " not tracked: " << e.what() << '\n';
        continue;
      }
    }
    integrate_frame(vol, frame->depth, pose, fp);
    ++fused;
  }
  if (fused == 0) throw CliFailure("pipeline", "no frame could be fused");
  save_snapshot(vol, out);
  std::cout << "fused " << fused << " frames, " << vol.size() << " voxels -> " << out << '\n';
  return 0;
}

int cmd_track(const SequenceOptions& so, const FusionParams& fp, const TrackingParams& tp,
              const std::string& out, const std::string& volume_out) {
  fp.validate();
  const TumSequence seq = open_sequence(so);
  const std::size_t n = frame_limit(seq, so);
  GradientSdfVolume vol(fp.voxel_size, fp.truncation());
  Trajectory traj;
  Pose pose = Pose::Identity();
  for (std::size_t i = 0; i < n; ++i) {
    const auto frame = seq.load(i);
    if (!frame) continue;
    bool tracked = traj.empty();
    if (!traj.empty()) {
      try {
        pose = track_frame(vol, frame->depth, pose, tp).pose;
        tracked = true;
      } catch (const TrackingError& e) {
        std::cerr << "warning: frame " << i << " keeps the previous pose: " << e.what() << '\n';
      }
    }
    if (tracked) integrate_frame(vol, frame->depth, pose, fp);
    traj.push_back({seq.entry(i).depth_timestamp, pose});
  }
  if (traj.empty()) throw CliFailure("pipeline", "no frame could be loaded");
  write_trajectory(traj, std::filesystem::path(out));
  if (!volume_out.empty()) save_snapshot(vol, volume_out);
  std::cout << "tracked " << traj.size() << " frames -> " << out << '\n';
  return 0;
}

int cmd_ba(const SequenceOptions& so, const BaParams& bp, const std::string& volume_in,
           const std::string& traj_path, const std::string& out, const std::string& volume_out,
           const std::string& cloud_out) {
  bp.validate();
  GradientSdfVolume vol = load_snapshot(volume_in);
  const TumSequence seq = open_sequence(so);
  const std::size_t n = frame_limit(seq, so);
  const auto poses = poses_for(seq, n, read_trajectory(traj_path), so.max_gap);

  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < n; ++i) {
    if (poses[i] && seq.entry(i).color_path) usable.push_back(i);
  }
  std::vector<Keyframe> keyframes;
  std::vector<double> stamps;
  for (std::size_t k : select_keyframes(usable.size(), bp.keyframe_ratio)) {
    const std::size_t i = usable[k];
    auto frame = seq.load(i);
    if (!frame || !frame->color) continue;
    keyframes.push_back({i, std::move(*frame->color), *poses[i], std::move(frame->depth)});
    stamps.push_back(seq.entry(i).depth_timestamp);
  }
  if (keyframes.size() < 2) throw CliFailure("pipeline", "bundle adjustment needs two keyframes");

  const BaReport report = run_bundle_adjustment(vol, keyframes, bp);
  Trajectory traj;
  for (std::size_t k = 0; k < keyframes.size(); ++k) traj.push_back({stamps[k], keyframes[k].pose});
  write_trajectory(traj, std::filesystem::path(out));
  if (!volume_out.empty()) save_snapshot(vol, volume_out);
  if (!cloud_out.empty()) {
    const VoxelColorMap colors = mean_voxel_color(vol, keyframes, bp);
    write_ply(cloud_out, extract_surfels(vol, &colors));
  }
  std::printf("ba: %zu keyframes, energy %.6g -> %.6g\n", keyframes.size(), report.initial_energy,
              report.final_energy);
  return 0;
}

int cmd_extract(const std::string& volume_in, const std::string& out, bool upsample, bool mesh,
                double weight_min) {
  if (upsample && mesh) throw CliFailure("usage", "--upsample and --mesh are exclusive");
  const GradientSdfVolume vol = load_snapshot(volume_in);
  if (mesh) {
    const TriangleMesh m = layered_marching_cubes(vol, weight_min);
    write_ply(out, m);
    std::cout << m.vertices.size() << " vertices, " << m.triangles.size() << " triangles -> " << out
              << '\n';
  } else {
    const SurfelCloud cloud = upsample ? extract_surfels_upsampled(vol) : extract_surfels(vol);
    write_ply(out, cloud);
    std::cout << cloud.size() << " surfels -> " << out << '\n';
  }
  return 0;
}

int cmd_eval_gradients(const GradientStudyConfig& cfg, const std::string& out_dir, int slice_z) {
  const std::filesystem::path dir(out_dir);
  std::filesystem::create_directories(dir);
  const GradientStudy study = run_gradient_study(cfg);
  {
    std::ofstream csv(dir / "gradient_stats.csv");
    write_stats_csv(study.stats, csv);
    std::ofstream dat(dir / "gradient_stats.dat");
    write_stats_plot_data(study.stats, dat);
    if (!csv || !dat) throw CliFailure("io", "cannot write statistics to " + dir.string());
  }
  write_gradient_slices(study.volume, study.scene, slice_z, dir / "slices");
  write_stats_csv(study.stats, std::cout);
  return 0;
}

int cmd_eval_ate(const std::string& est, const std::string& gt, double max_gap) {
  const double rmse = ate_rmse_cm(read_trajectory(std::filesystem::path(est)),
                                  read_trajectory(std::filesystem::path(gt)), max_gap);
  std::printf("%.2f\n", rmse);
  return 0;
}

void fail_line(const std::string& kind, const std::string& message) {
  std::string flat = message;
  for (char& c : flat) {
    if (c == '\n') c = ' ';
  }
  std::cerr << "error: " << kind << ": " << flat << '\n';
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"Gradient-SDF reconstruction toolkit"};
  app.require_subcommand(1);
  app.set_config("--config", "", "key=value file setting any option ([subcommand] sections)");
  int threads = 1;
  app.add_option("--threads", threads, "Worker threads (1 gives bit-identical output)")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);

  SequenceOptions seq_opts;
  FusionParams fusion;
  TrackingParams tracking;
  BaParams ba;
  std::string out, traj_path, volume_in, volume_out, cloud_out;

  auto* fuse = app.add_subcommand("fuse", "Fuse a sequence into a volume snapshot");
  add_sequence_options(fuse, seq_opts);
  add_fusion_options(fuse, fusion);
  add_tracking_options(fuse, tracking);
  fuse->add_option("--trajectory", traj_path, "Camera poses (TUM format); tracks when omitted")
      ->check(CLI::ExistingFile);
  fuse->add_option("--out", out, "Output volume snapshot")->required();

  auto* track = app.add_subcommand("track", "Frame-to-model tracking of a sequence");
  add_sequence_options(track, seq_opts);
  add_fusion_options(track, fusion);
  add_tracking_options(track, tracking);
  track->add_option("--out", out, "Output trajectory (TUM format)")->required();
  track->add_option("--volume-out", volume_out, "Also save the fused volume");

  auto* bundle = app.add_subcommand("ba", "Photometric bundle adjustment of keyframes");
  add_sequence_options(bundle, seq_opts);
  bundle->add_option("--volume", volume_in, "Input volume snapshot")->required()->check(CLI::ExistingFile);
  bundle->add_option("--trajectory", traj_path, "Initial poses (TUM format)")
      ->required()
      ->check(CLI::ExistingFile);
  bundle->add_option("--out", out, "Optimized keyframe trajectory")->required();
  bundle->add_option("--volume-out", volume_out, "Save the volume with refined distances");
  bundle->add_option("--cloud", cloud_out, "Colored surfel PLY");
  bundle->add_option("--keyframe-ratio", ba.keyframe_ratio, "Fraction of frames used as keyframes")
      ->capture_default_str();
  bundle->add_option("--lambda", ba.regularizer_weight, "Distance regularizer weight (cm^-2)")
      ->capture_default_str();
  bundle->add_option("--robust-delta", ba.robust_delta, "Huber threshold on intensities")
      ->capture_default_str();
  bundle->add_option("--iterations", ba.max_outer_iterations, "Outer iterations")
      ->capture_default_str();
  std::string scope = "full", coupling = "decoupled";
  bundle->add_option("--mode", scope, "full or pose-only")
      ->check(CLI::IsMember({"full", "pose-only"}))
      ->capture_default_str();
  bundle->add_option("--coupling", coupling, "decoupled or coupled")
      ->check(CLI::IsMember({"decoupled", "coupled"}))
      ->capture_default_str();

  bool upsample = false, mesh = false;
  double weight_min = kDefaultMcWeightMin;
  auto* extract = app.add_subcommand("extract", "Surfel cloud or mesh from a volume snapshot");
  extract->add_option("volume", volume_in, "Volume snapshot")->required()->check(CLI::ExistingFile);
  extract->add_option("--out", out, "Output PLY")->required();
  extract->add_flag("--upsample", upsample, "Double the surfel resolution");
  extract->add_flag("--mesh", mesh, "Marching cubes mesh instead of surfels");
  extract->add_option("--weight-min", weight_min, "Minimum corner weight for marching cubes")
      ->capture_default_str();

  GradientStudyConfig study;
  std::string out_dir = "gradient_eval";
  int slice_z = 0;
  bool no_noise = false;
  auto* evalg = app.add_subcommand("eval-gradients", "Gradient accuracy study on random spheres");
  evalg->add_option("--seed", study.seed, "Scene seed")->capture_default_str();
  evalg->add_option("--voxel-size", study.voxel_size, "Voxel size in meters")->capture_default_str();
  evalg->add_option("--trunc", study.trunc_factor, "Truncation in voxel sizes")->capture_default_str();
  evalg->add_option("--spheres", study.sphere_count, "Number of spheres")->capture_default_str();
  evalg->add_option("--poses", study.pose_count, "Number of camera poses")->capture_default_str();
  evalg->add_option("--max-band", study.max_band, "Largest band threshold in voxels")
      ->capture_default_str();
  add_normal_options(evalg, study.fusion);
  evalg->add_flag("--no-noise", no_noise, "Disable depth noise");
  evalg->add_option("--out-dir", out_dir, "Directory for CSV, plot data and slices")
      ->capture_default_str();
  evalg->add_option("--slice-z", slice_z, "Voxel z index of the exported slice")->capture_default_str();

  std::string est_path, gt_path;
  double ate_gap = 0.02;
  auto* evala = app.add_subcommand("eval-ate", "ATE RMSE (cm) between two trajectories");
  evala->add_option("estimated", est_path, "Estimated trajectory")->required()->check(CLI::ExistingFile);
  evala->add_option("groundtruth", gt_path, "Ground-truth trajectory")->required()->check(CLI::ExistingFile);
  evala->add_option("--max-gap", ate_gap, "Association gap in seconds")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    fail_line("usage", e.what());
    return 2;
  }

#ifdef _OPENMP
  omp_set_num_threads(threads);
#endif

  try {
    if (*fuse) return cmd_fuse(seq_opts, fusion, tracking, traj_path, out);
    if (*track) return cmd_track(seq_opts, fusion, tracking, out, volume_out);
    if (*bundle) {
      ba.scope = scope == "full" ? BaScope::kFull : BaScope::kPoseOnly;
      ba.coupling = coupling == "coupled" ? PoseCoupling::kCoupled : PoseCoupling::kDecoupled;
      return cmd_ba(seq_opts, ba, volume_in, traj_path, out, volume_out, cloud_out);
    }
    if (*extract) return cmd_extract(volume_in, out, upsample, mesh, weight_min);
    if (*evalg) {
      study.noise_enabled = !no_noise;
      return cmd_eval_gradients(study, out_dir, slice_z);
    }
    if (*evala) return cmd_eval_ate(est_path, gt_path, ate_gap);
  } catch (const CliFailure& e) {
    fail_line(e.kind, e.what());
    return e.kind == "usage" ? 2 : 1;
  } catch (const std::invalid_argument& e) {
    fail_line("invalid-argument", e.what());
    return 2;
  } catch (const std::exception& e) {
    fail_line("pipeline", e.what());
    return 1;
  }
  return 2;
}

}  // namespace gsdf::cli
