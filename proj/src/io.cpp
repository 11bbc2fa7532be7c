#include "depthdeblur/io.hpp"

#include <png.h>

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace deblur::io {

namespace {

namespace fs = std::filesystem;

struct FileCloser {
  std::FILE* f = nullptr;
  ~FileCloser() {
    if (f) {
      std::fclose(f);
    }
  }
};

[[noreturn]] void missing(const std::string& path, const std::string& what) {
  throw MissingInput(what + " not found: " + path);
}

}  // namespace

Image read_png(const std::string& path) {
  FileCloser fc;
  fc.f = std::fopen(path.c_str(), "rb");
  if (!fc.f) {
    missing(path, "image");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ValidationError("failed to decode PNG: " + path);
  }
  png_init_io(png, fc.f);
  png_read_info(png, info);

  const png_byte color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) {
    png_set_palette_to_rgb(png);
  }
  if (color & PNG_COLOR_MASK_ALPHA) {
    png_set_strip_alpha(png);
  }
  png_set_expand_16(png);  // normalize 8-bit input to 16-bit samples
  if (std::endian::native == std::endian::little) {
    png_set_swap(png);
  }
  png_read_update_info(png, info);

  const int h = static_cast<int>(png_get_image_height(png, info));
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int ch = png_get_channels(png, info);
  if (ch != 1 && ch != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ValidationError("PNG must be grayscale or RGB: " + path);
  }

  std::vector<std::uint16_t> raw(static_cast<std::size_t>(h) * w * ch);
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y) {
    rows[y] = reinterpret_cast<png_bytep>(raw.data() + static_cast<std::size_t>(y) * w * ch);
  }
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  // Interleaved uint16 -> planar double in [0,1].
  std::vector<double> data(raw.size());
  const std::size_t n = static_cast<std::size_t>(h) * w;
  for (std::size_t i = 0; i < n; ++i) {
    for (int c = 0; c < ch; ++c) {
      data[static_cast<std::size_t>(c) * n + i] = raw[i * ch + c] / 65535.0;
    }
  }
  return Image::clamped(h, w, ch, std::move(data));
}

void write_png16(const std::string& path, const Image& img) {
  FileCloser fc;
  fc.f = std::fopen(path.c_str(), "wb");
  if (!fc.f) {
    throw Error("cannot open for writing: " + path);
  }
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw Error("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("failed to encode PNG: " + path);
  }
  png_init_io(png, fc.f);

  const int h = img.height();
  const int w = img.width();
  const int ch = img.channels();
  png_set_IHDR(png, info, w, h, 16,
               ch == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if (std::endian::native == std::endian::little) {
    png_set_swap(png);
  }

  const std::size_t n = static_cast<std::size_t>(h) * w;
  std::vector<std::uint16_t> raw(n * ch);
  for (std::size_t i = 0; i < n; ++i) {
    for (int c = 0; c < ch; ++c) {
      const double v = std::clamp(img.data()[static_cast<std::size_t>(c) * n + i], 0.0, 1.0);
      raw[i * ch + c] = static_cast<std::uint16_t>(std::lround(v * 65535.0));
    }
  }
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y) {
    rows[y] = reinterpret_cast<png_bytep>(raw.data() + static_cast<std::size_t>(y) * w * ch);
  }
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

PfmData read_pfm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) {
    missing(path, "PFM file");
  }
  std::string magic;
  f >> magic;
  if (magic != "PF" && magic != "Pf") {
    throw ValidationError("not a PFM file: " + path);
  }
  PfmData pfm;
  pfm.channels = magic == "PF" ? 3 : 1;
  double scale = 0.0;
  f >> pfm.width >> pfm.height >> scale;
  if (!f || pfm.width <= 0 || pfm.height <= 0 || scale == 0.0) {
    throw ValidationError("bad PFM header: " + path);
  }
  f.get();  // single whitespace after the header

  const std::size_t rowFloats = static_cast<std::size_t>(pfm.width) * pfm.channels;
  pfm.data.resize(static_cast<std::size_t>(pfm.height) * rowFloats);
  std::vector<float> row(rowFloats);
  // PFM rasters are stored bottom-to-top.
  for (int y = pfm.height - 1; y >= 0; --y) {
    f.read(reinterpret_cast<char*>(row.data()), rowFloats * sizeof(float));
    if (!f) {
      throw ValidationError("truncated PFM: " + path);
    }
    if (scale > 0.0) {  // big-endian payload
      for (float& v : row) {
        std::uint32_t u;
        std::memcpy(&u, &v, 4);
        u = __builtin_bswap32(u);
        std::memcpy(&v, &u, 4);
      }
    }
    std::copy(row.begin(), row.end(), pfm.data.begin() + static_cast<std::size_t>(y) * rowFloats);
  }
  return pfm;
}

void write_pfm(const std::string& path, const PfmData& pfm) {
  if (pfm.channels != 1 && pfm.channels != 3) {
    throw ValidationError("PFM supports 1 or 3 channels");
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) {
    throw Error("cannot open for writing: " + path);
  }
  f << (pfm.channels == 3 ? "PF" : "Pf") << "\n"
    << pfm.width << " " << pfm.height << "\n"
    << "-1.0\n";
  const std::size_t rowFloats = static_cast<std::size_t>(pfm.width) * pfm.channels;
  for (int y = pfm.height - 1; y >= 0; --y) {
    f.write(reinterpret_cast<const char*>(pfm.data.data() + static_cast<std::size_t>(y) * rowFloats),
            rowFloats * sizeof(float));
  }
  if (!f) {
    throw Error("failed writing PFM: " + path);
  }
}

DepthMap read_depth_pfm(const std::string& path) {
  const PfmData pfm = read_pfm(path);
  if (pfm.channels != 1) {
    throw ValidationError("depth PFM must be single channel: " + path);
  }
  const std::size_t n = static_cast<std::size_t>(pfm.height) * pfm.width;
  std::vector<double> depth(n, 0.0);
  std::vector<std::uint8_t> valid(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const float v = pfm.data[i];
    if (std::isfinite(v) && v > 0.0f) {
      depth[i] = v;
      valid[i] = 1;
    }
  }
  return DepthMap(pfm.height, pfm.width, std::move(depth), std::move(valid));
}

void write_depth_pfm(const std::string& path, const DepthMap& depth) {
  PfmData pfm;
  pfm.height = depth.height();
  pfm.width = depth.width();
  pfm.channels = 1;
  pfm.data.resize(depth.pixels());
  for (std::size_t i = 0; i < pfm.data.size(); ++i) {
    pfm.data[i] = depth.validity()[i] ? static_cast<float>(depth.values()[i]) : 0.0f;
  }
  write_pfm(path, pfm);
}

FlowField read_flow_pfm(const std::string& path) {
  const PfmData pfm = read_pfm(path);
  if (pfm.channels != 3) {
    throw ValidationError("flow PFM must have 3 channels (du, dv, validity): " + path);
  }
  FlowField flow(pfm.height, pfm.width);
  for (std::size_t i = 0; i < flow.pixels(); ++i) {
    flow.du[i] = pfm.data[3 * i + 0];
    flow.dv[i] = pfm.data[3 * i + 1];
    flow.valid[i] = pfm.data[3 * i + 2] > 0.5f ? 1 : 0;
  }
  return flow;
}

void write_flow_pfm(const std::string& path, const FlowField& flow) {
  PfmData pfm;
  pfm.height = flow.height;
  pfm.width = flow.width;
  pfm.channels = 3;
  pfm.data.resize(flow.pixels() * 3);
  for (std::size_t i = 0; i < flow.pixels(); ++i) {
    pfm.data[3 * i + 0] = static_cast<float>(flow.du[i]);
    pfm.data[3 * i + 1] = static_cast<float>(flow.dv[i]);
    pfm.data[3 * i + 2] = flow.valid[i] ? 1.0f : 0.0f;
  }
  write_pfm(path, pfm);
}

Pose6 read_pose(const std::string& path) {
  std::ifstream f(path);
  if (!f) {
    missing(path, "pose file");
  }
  Vec6 p;
  for (int i = 0; i < 6; ++i) {
    if (!(f >> p[i])) {
      throw ValidationError("pose file must contain six numbers: " + path);
    }
  }
  return Pose6::from_vector(p);
}

void write_pose(const std::string& path, const Pose6& p) {
  std::ofstream f(path);
  if (!f) {
    throw Error("cannot open for writing: " + path);
  }
  const Vec6 v = p.to_vector();
  std::ostringstream os;
  os.precision(17);
  for (int i = 0; i < 6; ++i) {
    os << v[i] << (i + 1 < 6 ? " " : "\n");
  }
  f << os.str();
}

Intrinsics read_intrinsics(const std::string& path) {
  std::ifstream f(path);
  if (!f) {
    missing(path, "intrinsics file");
  }
  double fx, fy, cx, cy;
  if (!(f >> fx >> fy >> cx >> cy)) {
    throw ValidationError("intrinsics file must contain fx fy cx cy: " + path);
  }
  return Intrinsics(fx, fy, cx, cy);
}

void write_intrinsics(const std::string& path, const Intrinsics& K) {
  std::ofstream f(path);
  if (!f) {
    throw Error("cannot open for writing: " + path);
  }
  std::ostringstream os;
  os.precision(17);
  os << K.fx << " " << K.fy << " " << K.cx << " " << K.cy << "\n";
  f << os.str();
}

void write_trace_csv(const std::string& path, const std::vector<LevelReport>& levels) {
  std::ofstream f(path);
  if (!f) {
    throw Error("cannot open for writing: " + path);
  }
  f << "level,iteration,energy\n";
  std::ostringstream os;
  os.precision(17);
  for (const LevelReport& lv : levels) {
    for (std::size_t i = 0; i < lv.energyTrace.size(); ++i) {
      os << lv.level << "," << i << "," << lv.energyTrace[i] << "\n";
    }
  }
  f << os.str();
}

void write_manifest(const std::string& path, const BundleManifest& m) {
  nlohmann::ordered_json j;
  j["format"] = "depthdeblur-bundle-v1";
  j["seed"] = m.seed;
  j["width"] = m.width;
  j["height"] = m.height;
  j["channels"] = m.channels;
  j["N"] = m.N;
  j["noiseSigma"] = m.noiseSigma;
  j["sigmaA"] = m.sigmaA;
  j["sigmaT"] = m.sigmaT;
  j["procedural"] = m.procedural;
  j["sourceImage"] = m.sourceImage;
  j["sourceDepth"] = m.sourceDepth;
  j["intrinsics"] = {{"fx", m.intrinsics.fx}, {"fy", m.intrinsics.fy},
                     {"cx", m.intrinsics.cx}, {"cy", m.intrinsics.cy}};
  j["hasTruth"] = m.hasTruth;
  std::ofstream f(path);
  if (!f) {
    throw Error("cannot open for writing: " + path);
  }
  f << j.dump(2) << "\n";
}

BundleManifest read_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) {
    missing(path, "manifest");
  }
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad manifest JSON: ") + e.what());
  }
  BundleManifest m;
  try {
    m.seed = j.at("seed").get<std::uint64_t>();
    m.width = j.at("width").get<int>();
    m.height = j.at("height").get<int>();
    m.channels = j.at("channels").get<int>();
    m.N = j.at("N").get<int>();
    m.noiseSigma = j.at("noiseSigma").get<double>();
    m.sigmaA = j.at("sigmaA").get<double>();
    m.sigmaT = j.at("sigmaT").get<double>();
    m.procedural = j.at("procedural").get<bool>();
    m.sourceImage = j.value("sourceImage", std::string());
    m.sourceDepth = j.value("sourceDepth", std::string());
    const auto& k = j.at("intrinsics");
    m.intrinsics = Intrinsics(k.at("fx").get<double>(), k.at("fy").get<double>(),
                              k.at("cx").get<double>(), k.at("cy").get<double>());
    m.hasTruth = j.value("hasTruth", false);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("incomplete manifest: ") + e.what());
  }
  return m;
}

void write_bundle(const std::string& dir, const SynthInstance& inst,
                  const BundleManifest& manifest) {
  fs::create_directories(dir);
  const fs::path p(dir);
  write_png16((p / "blurry.png").string(), inst.blurry);
  write_depth_pfm((p / "depth.pfm").string(), inst.depth);
  write_intrinsics((p / "intrinsics.txt").string(), inst.intrinsics);
  write_manifest((p / "manifest.json").string(), manifest);
  if (manifest.hasTruth) {
    write_png16((p / "clean.png").string(), inst.clean);
    write_pose((p / "pose_true.txt").string(), inst.truePose);
    write_flow_pfm((p / "flow_true.pfm").string(), inst.trueFlow);
  }
}

LoadedBundle load_bundle(const std::string& dir) {
  const fs::path p(dir);
  if (!fs::exists(p / "manifest.json")) {
    missing((p / "manifest.json").string(), "manifest");
  }
  LoadedBundle b;
  b.manifest = read_manifest((p / "manifest.json").string());
  b.blurry = read_png((p / "blurry.png").string());
  if (!fs::exists(p / "depth.pfm")) {
    throw MissingInput("depth map not found: " + (p / "depth.pfm").string());
  }
  b.depth = read_depth_pfm((p / "depth.pfm").string());
  b.intrinsics = read_intrinsics((p / "intrinsics.txt").string());
  if (fs::exists(p / "clean.png")) {
    b.clean = read_png((p / "clean.png").string());
  }
  if (fs::exists(p / "pose_true.txt")) {
    b.truePose = read_pose((p / "pose_true.txt").string());
  }
  if (fs::exists(p / "flow_true.pfm")) {
    b.trueFlow = read_flow_pfm((p / "flow_true.pfm").string());
  }
  return b;
}

EnergyParams load_params(const std::string& path) {
  std::ifstream f(path);
  if (!f) {
    missing(path, "parameter file");
  }
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad parameter JSON: ") + e.what());
  }
  EnergyParams p;
  for (const auto& [key, value] : j.items()) {
    if (key == "mu1") p.mu1 = value.get<double>();
    else if (key == "mu2") p.mu2 = value.get<double>();
    else if (key == "mu3") p.mu3 = value.get<double>();
    else if (key == "mu4") p.mu4 = value.get<double>();
    else if (key == "sigmaB") p.sigmaB = value.get<double>();
    else if (key == "sigmaD") p.sigmaD = value.get<double>();
    else if (key == "N") p.N = value.get<int>();
    else if (key == "eta") p.eta = value.get<double>();
    else if (key == "gamma") p.gamma = value.get<double>();
    else if (key == "pyramidLevels") p.pyramidLevels = value.get<int>();
    else if (key == "pyramidScale") p.pyramidScale = value.get<double>();
    else if (key == "rotationBound") p.rotationBound = value.get<double>();
    else if (key == "translationBound") p.translationBound = value.get<double>();
    else if (key == "lmMaxIterations") p.lmMaxIterations = value.get<int>();
    else if (key == "latentOuterIterations") p.latentOuterIterations = value.get<int>();
    else if (key == "cgMaxIterations") p.cgMaxIterations = value.get<int>();
    else if (key == "cgTolerance") p.cgTolerance = value.get<double>();
    else if (key == "alternationsPerLevel") p.alternationsPerLevel = value.get<int>();
    else if (key == "multiStartCount") p.multiStartCount = value.get<int>();
    else throw ValidationError("unknown parameter key: " + key);
  }
  p.validate();
  return p;
}

}  // namespace deblur::io
