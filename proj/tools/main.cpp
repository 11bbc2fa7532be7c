#include "depthdeblur/blur_operator.hpp"
#include "depthdeblur/energy.hpp"
#include "depthdeblur/geometry.hpp"
#include "depthdeblur/io.hpp"
#include "depthdeblur/metrics.hpp"
#include "depthdeblur/pipeline.hpp"
#include "depthdeblur/synth.hpp"

#include <CLI11.hpp>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fnmatch.h>
#include <fstream>
#include <future>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace deblur;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitSolverFailure = 1;
constexpr int kExitMissingInput = 2;
constexpr int kExitValidation = 3;

struct ParamFlags {
  std::string paramsFile;
  std::optional<double> mu1, mu2, mu3, mu4, sigmaB, sigmaD, eta, gamma, scale;
  std::optional<double> rotationBound, translationBound, cgTolerance;
  std::optional<int> N, levels, lmIters, outerIters, cgIters, alternations, multiStart;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--params", paramsFile, "JSON parameter file (flags take precedence)");
    cmd->add_option("--mu1", mu1, "motion reward weight (must stay negative)");
    cmd->add_option("--mu2", mu2, "image-edge smoothness weight");
    cmd->add_option("--mu3", mu3, "depth-edge smoothness weight");
    cmd->add_option("--mu4", mu4, "total-variation weight");
    cmd->add_option("--sigma-b", sigmaB, "image edge sensitivity");
    cmd->add_option("--sigma-d", sigmaD, "depth edge sensitivity");
    cmd->add_option("--n", N, "half sample count (2N+1 exposure samples)");
    cmd->add_option("--eta", eta, "primal step size");
    cmd->add_option("--gamma", gamma, "dual step size");
    cmd->add_option("--levels", levels, "pyramid levels");
    cmd->add_option("--scale", scale, "pyramid scale factor");
    cmd->add_option("--rotation-bound", rotationBound, "pose box |theta_i| bound");
    cmd->add_option("--translation-bound", translationBound, "pose box |v_i| bound");
    cmd->add_option("--lm-iters", lmIters, "max pose solver iterations");
    cmd->add_option("--outer-iters", outerIters, "latent solver outer iterations");
    cmd->add_option("--cg-iters", cgIters, "max CG iterations");
    cmd->add_option("--cg-tol", cgTolerance, "CG relative residual tolerance");
    cmd->add_option("--alternations", alternations, "pose/latent alternations per level");
    cmd->add_option("--multi-start", multiStart, "pose initialization candidates");
  }

  EnergyParams resolve() const {
    EnergyParams p = paramsFile.empty() ? EnergyParams{} : io::load_params(paramsFile);
    if (mu1) p.mu1 = *mu1;
    if (mu2) p.mu2 = *mu2;
    if (mu3) p.mu3 = *mu3;
    if (mu4) p.mu4 = *mu4;
    if (sigmaB) p.sigmaB = *sigmaB;
    if (sigmaD) p.sigmaD = *sigmaD;
    if (N) p.N = *N;
    if (eta) p.eta = *eta;
    if (gamma) p.gamma = *gamma;
    if (levels) p.pyramidLevels = *levels;
    if (scale) p.pyramidScale = *scale;
    if (rotationBound) p.rotationBound = *rotationBound;
    if (translationBound) p.translationBound = *translationBound;
    if (lmIters) p.lmMaxIterations = *lmIters;
    if (outerIters) p.latentOuterIterations = *outerIters;
    if (cgIters) p.cgMaxIterations = *cgIters;
    if (cgTolerance) p.cgTolerance = *cgTolerance;
    if (alternations) p.alternationsPerLevel = *alternations;
    if (multiStart) p.multiStartCount = *multiStart;
    p.validate();
    return p;
  }
};

struct SynthOptions {
  bool procedural = false;
  std::string imagePath, depthPath, intrinsicsPath, outDir;
  std::uint64_t seed = 1;
  double sigmaA = 0.05;
  double sigmaT = 0.05;
  double noiseSigma = 0.01;
  int N = 10;
  int width = 96, height = 96, channels = 1;
  bool noTruth = false;
};

int run_synth(const SynthOptions& opt) {
  if (!(opt.sigmaA > 0.0 && opt.sigmaT > 0.0)) {
    throw ValidationError("--sigma-a and --sigma-t must be positive");
  }
  SynthInstance inst;
  io::BundleManifest manifest;
  manifest.seed = opt.seed;
  manifest.N = opt.N;
  manifest.noiseSigma = opt.noiseSigma;
  manifest.sigmaA = opt.sigmaA;
  manifest.sigmaT = opt.sigmaT;
  manifest.channels = opt.channels;
  manifest.hasTruth = !opt.noTruth;

  if (opt.procedural) {
    inst = make_procedural_instance(opt.height, opt.width, opt.seed, opt.sigmaA,
                                    opt.sigmaT, opt.N, opt.noiseSigma, opt.channels);
    manifest.procedural = true;
  } else {
    if (opt.imagePath.empty() || opt.depthPath.empty() || opt.intrinsicsPath.empty()) {
      throw ValidationError("either --procedural or --image/--depth/--intrinsics is required");
    }
    const Image clean = io::read_png(opt.imagePath);
    const DepthMap depth = io::read_depth_pfm(opt.depthPath);
    const Intrinsics K = io::read_intrinsics(opt.intrinsicsPath);
    const Pose6 p = sample_motion(opt.sigmaA, opt.sigmaT, opt.seed);
    inst = synthesize(clean, depth, K, p, opt.N, opt.noiseSigma, opt.seed);
    manifest.procedural = false;
    manifest.sourceImage = opt.imagePath;
    manifest.sourceDepth = opt.depthPath;
    manifest.channels = clean.channels();
  }
  manifest.width = inst.blurry.width();
  manifest.height = inst.blurry.height();
  manifest.intrinsics = inst.intrinsics;

  io::write_bundle(opt.outDir, inst, manifest);

  const Vec6 p = inst.truePose.to_vector();
  std::printf("pose: %.9g %.9g %.9g %.9g %.9g %.9g\n", p[0], p[1], p[2], p[3], p[4], p[5]);
  double maxFlow = 0.0, meanFlow = 0.0;
  std::size_t nf = 0;
  for (std::size_t i = 0; i < inst.trueFlow.pixels(); ++i) {
    if (!inst.trueFlow.valid[i]) continue;
    const double m = std::hypot(inst.trueFlow.du[i], inst.trueFlow.dv[i]);
    maxFlow = std::max(maxFlow, m);
    meanFlow += m;
    ++nf;
  }
  if (nf > 0) meanFlow /= static_cast<double>(nf);
  std::printf("blur extent: mean %.3f px, max %.3f px\n", meanFlow, maxFlow);
  if (manifest.hasTruth) {
    std::printf("psnr blurry vs clean: %.3f dB\n", psnr(inst.blurry, inst.clean));
  }
  std::printf("bundle written to %s\n", opt.outDir.c_str());
  return kExitOk;
}

struct DeblurOptions {
  std::string bundleDir, imagePath, depthPath, intrinsicsPath, outDir, globPattern;
  ParamFlags params;
};

int deblur_one(const Image& blurry, const DepthMap& depth, const Intrinsics& K,
               const EnergyParams& params, const std::string& outDir) {
  fs::create_directories(outDir);
  const fs::path out(outDir);
  const DeblurResult result = deblur::deblur(blurry, depth, K, params);

  io::write_png16((out / "latent.png").string(), result.latent);
  io::write_pose((out / "pose.txt").string(), result.pose);
  io::write_flow_pfm((out / "flow.pfm").string(), result.flow);
  io::write_trace_csv((out / "trace.csv").string(), result.levels);

  nlohmann::ordered_json status;
  status["converged"] = result.converged;
  status["seconds"] = result.seconds;
  status["levels"] = result.levels.size();
  std::ofstream sf(out / "status.json");
  sf << status.dump(2) << "\n";

  const Vec6 p = result.pose.to_vector();
  std::printf("pose: %.9g %.9g %.9g %.9g %.9g %.9g\n", p[0], p[1], p[2], p[3], p[4], p[5]);
  std::printf("%s in %.1f s, results in %s\n",
              result.converged ? "converged" : "finished with solver failure",
              result.seconds, outDir.c_str());
  return result.converged ? kExitOk : kExitSolverFailure;
}

int run_deblur(const DeblurOptions& opt) {
  const EnergyParams params = opt.params.resolve();

  if (!opt.globPattern.empty()) {
    // Batch mode: every matching directory with a manifest is a bundle.
    const fs::path pattern(opt.globPattern);
    const fs::path parent = pattern.parent_path().empty() ? "." : pattern.parent_path();
    const std::string leaf = pattern.filename().string();
    std::vector<fs::path> dirs;
    if (fs::exists(parent)) {
      for (const auto& e : fs::directory_iterator(parent)) {
        if (e.is_directory() &&
            fnmatch(leaf.c_str(), e.path().filename().string().c_str(), 0) == 0 &&
            fs::exists(e.path() / "manifest.json")) {
          dirs.push_back(e.path());
        }
      }
    }
    std::sort(dirs.begin(), dirs.end());
    if (dirs.empty()) {
      throw MissingInput("no bundles match " + opt.globPattern);
    }
    auto runOne = [&](const fs::path& dir) {
      const io::LoadedBundle b = io::load_bundle(dir.string());
      const fs::path out = fs::path(opt.outDir) / dir.filename();
      return deblur_one(b.blurry, b.depth, b.intrinsics, params, out.string());
    };
    const int workers = std::min<int>(thread_count(), static_cast<int>(dirs.size()));
    int worst = kExitOk;
    if (workers > 1) {
      std::vector<std::future<int>> futs;
      futs.reserve(dirs.size());
      for (const auto& dir : dirs) {
        futs.push_back(std::async(std::launch::async, runOne, dir));
      }
      for (auto& f : futs) {
        worst = std::max(worst, f.get());
      }
    } else {
      for (const auto& dir : dirs) {
        worst = std::max(worst, runOne(dir));
      }
    }
    return worst;
  }

  if (!opt.bundleDir.empty()) {
    const io::LoadedBundle b = io::load_bundle(opt.bundleDir);
    return deblur_one(b.blurry, b.depth, b.intrinsics, params, opt.outDir);
  }

  if (opt.imagePath.empty() || opt.depthPath.empty() || opt.intrinsicsPath.empty()) {
    throw ValidationError("either --bundle, --glob, or --image/--depth/--intrinsics is required");
  }
  if (!fs::exists(opt.depthPath)) {
    throw MissingInput("depth map not found: " + opt.depthPath);
  }
  const Image blurry = io::read_png(opt.imagePath);
  const DepthMap depth = io::read_depth_pfm(opt.depthPath);
  const Intrinsics K = io::read_intrinsics(opt.intrinsicsPath);
  return deblur_one(blurry, depth, K, params, opt.outDir);
}

struct EvalOptions {
  std::string resultDir, bundleDir, outFile;
};

int run_eval(const EvalOptions& opt) {
  const fs::path res(opt.resultDir);
  if (!fs::exists(res / "latent.png")) {
    throw MissingInput("deblur result not found: " + (res / "latent.png").string());
  }
  const io::LoadedBundle b = io::load_bundle(opt.bundleDir);
  if (!b.clean || !b.trueFlow) {
    throw MissingInput("bundle has no ground truth (clean.png / flow_true.pfm); "
                       "re-run synth without --no-truth");
  }
  const Image latent = io::read_png((res / "latent.png").string());
  const FlowField flow = io::read_flow_pfm((res / "flow.pfm").string());

  const EvalReport report = evaluate(latent, *b.clean, flow, *b.trueFlow);
  std::fputs(report.to_kv_text().c_str(), stdout);

  const std::string outFile =
      opt.outFile.empty() ? (res / "report.txt").string() : opt.outFile;
  std::ofstream f(outFile);
  if (!f) {
    throw deblur::Error("cannot open for writing: " + outFile);
  }
  f << report.to_kv_text();
  return kExitOk;
}

struct RenderOptions {
  std::string resultDir, bundleDir, outDir;
  int frames = 21;
};

int run_render(const RenderOptions& opt) {
  if (opt.frames < 2) {
    throw ValidationError("--frames must be at least 2");
  }
  const fs::path res(opt.resultDir);
  if (!fs::exists(res / "latent.png") || !fs::exists(res / "pose.txt")) {
    throw MissingInput("deblur result not found in " + opt.resultDir);
  }
  const io::LoadedBundle b = io::load_bundle(opt.bundleDir);

  DeblurResult result;
  result.latent = io::read_png((res / "latent.png").string());
  result.pose = io::read_pose((res / "pose.txt").string());

  fs::create_directories(opt.outDir);
  const std::vector<Image> frames = render_sequence(result, b.depth, b.intrinsics, opt.frames);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%03zu.png", i);
    io::write_png16((fs::path(opt.outDir) / name).string(), frames[i]);
  }
  std::printf("%zu frames written to %s\n", frames.size(), opt.outDir.c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint 6-DoF camera-shake estimation and image deblurring with a depth map"};
  app.require_subcommand(1);

  SynthOptions synthOpt;
  CLI::App* synth = app.add_subcommand("synth", "synthesize a blurry benchmark bundle");
  synth->add_flag("--procedural", synthOpt.procedural, "generate the bundled procedural scene");
  synth->add_option("--image", synthOpt.imagePath, "clean image (16-bit PNG)");
  synth->add_option("--depth", synthOpt.depthPath, "depth map (PFM, meters)");
  synth->add_option("--intrinsics", synthOpt.intrinsicsPath, "intrinsics file (fx fy cx cy)");
  synth->add_option("--out", synthOpt.outDir, "output bundle directory")->required();
  synth->add_option("--seed", synthOpt.seed, "RNG seed");
  synth->add_option("--sigma-a", synthOpt.sigmaA, "rotation sampling std dev (rad)");
  synth->add_option("--sigma-t", synthOpt.sigmaT, "translation sampling std dev (m)");
  synth->add_option("--noise", synthOpt.noiseSigma, "Gaussian noise std dev");
  synth->add_option("--n", synthOpt.N, "half sample count (2N+1 frames averaged)");
  synth->add_option("--width", synthOpt.width, "procedural scene width");
  synth->add_option("--height", synthOpt.height, "procedural scene height");
  synth->add_option("--channels", synthOpt.channels, "procedural scene channels (1 or 3)");
  synth->add_flag("--no-truth", synthOpt.noTruth, "omit ground truth from the bundle");

  DeblurOptions deblurOpt;
  CLI::App* dbl = app.add_subcommand("deblur", "estimate camera motion and recover the sharp image");
  dbl->add_option("--bundle", deblurOpt.bundleDir, "input bundle directory");
  dbl->add_option("--glob", deblurOpt.globPattern, "batch mode: glob of bundle directories");
  dbl->add_option("--image", deblurOpt.imagePath, "blurry image (PNG)");
  dbl->add_option("--depth", deblurOpt.depthPath, "depth map (PFM, meters)");
  dbl->add_option("--intrinsics", deblurOpt.intrinsicsPath, "intrinsics file (fx fy cx cy)");
  dbl->add_option("--out", deblurOpt.outDir, "output directory")->required();
  deblurOpt.params.add_to(dbl);

  EvalOptions evalOpt;
  CLI::App* ev = app.add_subcommand("eval", "score a deblur result against ground truth");
  ev->add_option("--result", evalOpt.resultDir, "deblur output directory")->required();
  ev->add_option("--bundle", evalOpt.bundleDir, "bundle with ground truth")->required();
  ev->add_option("--out", evalOpt.outFile, "report file (default <result>/report.txt)");

  RenderOptions renderOpt;
  CLI::App* rs = app.add_subcommand("render-seq", "render the sharp exposure sequence");
  rs->add_option("--result", renderOpt.resultDir, "deblur output directory")->required();
  rs->add_option("--bundle", renderOpt.bundleDir, "bundle providing depth and intrinsics")->required();
  rs->add_option("--frames", renderOpt.frames, "number of frames (>= 2)")->required();
  rs->add_option("--out", renderOpt.outDir, "frame output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (app.got_subcommand(synth)) {
      return run_synth(synthOpt);
    }
    if (app.got_subcommand(dbl)) {
      return run_deblur(deblurOpt);
    }
    if (app.got_subcommand(ev)) {
      return run_eval(evalOpt);
    }
    if (app.got_subcommand(rs)) {
      return run_render(renderOpt);
    }
  } catch (const MissingInput& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitMissingInput;
  } catch (const SolverFailure& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitSolverFailure;
  } catch (const DimensionMismatch& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitValidation;
  } catch (const NonPositiveDepth& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitValidation;
  } catch (const AngleTooLarge& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitValidation;
  } catch (const ImageTooSmall& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitValidation;
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitValidation;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitSolverFailure;
  }
  return kExitOk;
}
