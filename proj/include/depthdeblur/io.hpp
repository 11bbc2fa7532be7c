#pragma once

#include "depthdeblur/core_types.hpp"
#include "depthdeblur/pipeline.hpp"
#include "depthdeblur/synth.hpp"

#include <optional>
#include <string>

namespace deblur::io {

// Images travel as 16-bit PNG so sub-1e-4 differences survive the disk
// round trip; depth and flow travel as little-endian PFM (scale -1.0).

Image read_png(const std::string& path);  // 8- or 16-bit gray/RGB, mapped to [0,1]
void write_png16(const std::string& path, const Image& img);

struct PfmData {
  int height = 0;
  int width = 0;
  int channels = 0;  // 1 or 3
  std::vector<float> data;  // row-major top-to-bottom, channel-interleaved
};
PfmData read_pfm(const std::string& path);
void write_pfm(const std::string& path, const PfmData& pfm);

DepthMap read_depth_pfm(const std::string& path);  // values <= 0 mark invalid pixels
void write_depth_pfm(const std::string& path, const DepthMap& depth);

FlowField read_flow_pfm(const std::string& path);  // channels: du, dv, validity
void write_flow_pfm(const std::string& path, const FlowField& flow);

Pose6 read_pose(const std::string& path);  // one line: tx ty tz vx vy vz
void write_pose(const std::string& path, const Pose6& p);

Intrinsics read_intrinsics(const std::string& path);  // one line: fx fy cx cy
void write_intrinsics(const std::string& path, const Intrinsics& K);

void write_trace_csv(const std::string& path, const std::vector<LevelReport>& levels);

/// Everything needed to regenerate a synthetic bundle bit-exactly.
struct BundleManifest {
  std::uint64_t seed = 0;
  int width = 0;
  int height = 0;
  int channels = 1;
  int N = 10;
  double noiseSigma = 0.01;
  double sigmaA = 0.05;
  double sigmaT = 0.05;
  bool procedural = true;
  std::string sourceImage;  // non-procedural inputs
  std::string sourceDepth;
  Intrinsics intrinsics;
  bool hasTruth = true;
};

void write_manifest(const std::string& path, const BundleManifest& manifest);
BundleManifest read_manifest(const std::string& path);

void write_bundle(const std::string& dir, const SynthInstance& inst,
                  const BundleManifest& manifest);

struct LoadedBundle {
  Image blurry;
  DepthMap depth;
  Intrinsics intrinsics;
  BundleManifest manifest;
  std::optional<Image> clean;
  std::optional<Pose6> truePose;
  std::optional<FlowField> trueFlow;
};
LoadedBundle load_bundle(const std::string& dir);

/// JSON parameter file mirroring the EnergyParams field names; unknown keys
/// are rejected. Returns defaults overlaid with the file contents.
EnergyParams load_params(const std::string& path);

}  // namespace deblur::io
