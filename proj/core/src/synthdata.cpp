#include "mcdet/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>

#include "mcdet/config_file.hpp"
#include "mcdet/error.hpp"

namespace fs = std::filesystem;

namespace mcdet {
namespace {

constexpr double kVisibleLevel = 110.0;
constexpr double kMwirLevel = 50.0;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) { return splitmix64(seed ^ splitmix64(index + 1)); }

struct Target {
  std::size_t w = 0, h = 0;
  double x0 = 0, y0 = 0, vx = 0, vy = 0;
  double visible_offset = 0;  // signed, in intensity levels
  double thermal_offset = 0;

  long x_at(std::size_t frame) const { return std::lround(x0 + vx * static_cast<double>(frame)); }
  long y_at(std::size_t frame) const { return std::lround(y0 + vy * static_cast<double>(frame)); }
};

std::vector<double> make_background(const SceneSpec& spec, double level, double texture_sigma, double gradient,
                                    std::mt19937_64& rng) {
  std::vector<double> bg(spec.width * spec.height, level);
  switch (spec.background) {
    case BackgroundTexture::flat:
      break;
    case BackgroundTexture::noise: {
      std::normal_distribution<double> n(0.0, texture_sigma);
      std::vector<double> raw(bg.size());
      for (auto& v : raw) v = n(rng);
      // 3x3 box smoothing gives a grainy, spatially correlated texture.
      for (std::size_t y = 0; y < spec.height; ++y) {
        for (std::size_t x = 0; x < spec.width; ++x) {
          double sum = 0.0;
          int count = 0;
          for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
              const long yy = static_cast<long>(y) + dy, xx = static_cast<long>(x) + dx;
              if (yy < 0 || xx < 0 || yy >= static_cast<long>(spec.height) || xx >= static_cast<long>(spec.width)) {
                continue;
              }
              sum += raw[static_cast<std::size_t>(yy) * spec.width + static_cast<std::size_t>(xx)];
              ++count;
            }
          }
          bg[y * spec.width + x] += 2.0 * sum / count;
        }
      }
      break;
    }
    case BackgroundTexture::terrain_gradient: {
      std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
      const double p1 = phase(rng), p2 = phase(rng);
      for (std::size_t y = 0; y < spec.height; ++y) {
        for (std::size_t x = 0; x < spec.width; ++x) {
          const double fx = static_cast<double>(x), fy = static_cast<double>(y);
          bg[y * spec.width + x] += gradient * (fy / static_cast<double>(spec.height) - 0.5) +
                                    texture_sigma * std::sin(2.0 * std::numbers::pi * fx / 97.0 + p1) *
                                        std::cos(2.0 * std::numbers::pi * fy / 71.0 + p2);
        }
      }
      break;
    }
  }
  return bg;
}

ImagePlane quantize(const std::vector<double>& values, std::size_t w, std::size_t h) {
  ImagePlane p(w, h);
  for (std::size_t i = 0; i < values.size(); ++i) {
    p.values[i] = static_cast<std::uint8_t>(std::clamp(std::lround(values[i]), 0L, 255L));
  }
  return p;
}

double edge_alpha(long dx, long dy, std::size_t w, std::size_t h, double blur) {
  if (blur <= 0.0) return 1.0;
  const long d = std::min({dx, dy, static_cast<long>(w) - 1 - dx, static_cast<long>(h) - 1 - dy});
  return std::min(1.0, (static_cast<double>(d) + 1.0) / (blur + 1.0));
}

}  // namespace

std::string_view to_string(BackgroundTexture texture) {
  switch (texture) {
    case BackgroundTexture::flat: return "flat";
    case BackgroundTexture::noise: return "noise";
    case BackgroundTexture::terrain_gradient: return "terrain-gradient";
  }
  return "?";
}

BackgroundTexture parse_background_texture(std::string_view text) {
  if (text == "flat") return BackgroundTexture::flat;
  if (text == "noise") return BackgroundTexture::noise;
  if (text == "terrain-gradient" || text == "terrain_gradient") return BackgroundTexture::terrain_gradient;
  throw ConfigError("unknown background texture '" + std::string(text) + "'");
}

void SceneSpec::validate() const {
  if (width == 0 || height == 0) throw InputError("scene dimensions must be positive");
  if (min_target_size == 0 || min_target_size > max_target_size) throw InputError("invalid target size range");
  if (max_target_size > width || max_target_size > height) {
    throw InputError("target size " + std::to_string(max_target_size) + " does not fit a " + std::to_string(width) +
                     "x" + std::to_string(height) + " frame");
  }
  if (visible_contrast < 0.0 || visible_contrast > 1.0 || thermal_contrast < 0.0 || thermal_contrast > 1.0) {
    throw InputError("contrasts must lie in [0, 1]");
  }
  if (min_speed < 0.0 || min_speed > max_speed) throw InputError("invalid speed range");
  if (frames == 0) throw InputError("a sequence needs at least one frame");
  if (noise_sigma < 0.0 || edge_blur < 0.0) throw InputError("noise and blur must be non-negative");
}

SyntheticSequence generate(const SceneSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  SyntheticSequence seq;
  seq.spec = spec;
  seq.visible.modality = Modality::visible;
  seq.mwir.modality = Modality::mwir;

  const auto vis_bg = make_background(spec, kVisibleLevel, 10.0, 60.0, rng);
  const auto mwir_bg = make_background(spec, kMwirLevel, 4.0, 20.0, rng);
  seq.visible_background = quantize(vis_bg, spec.width, spec.height);
  seq.mwir_background = quantize(mwir_bg, spec.width, spec.height);

  std::vector<Target> targets;
  std::uniform_int_distribution<std::size_t> size_dist(spec.min_target_size, spec.max_target_size);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double span = static_cast<double>(spec.frames > 1 ? spec.frames - 1 : 1);
  for (std::size_t t = 0; t < spec.target_count; ++t) {
    Target tg;
    tg.w = size_dist(rng);
    const std::size_t h_lo = std::max(spec.min_target_size, static_cast<std::size_t>(std::ceil(0.6 * tg.w)));
    tg.h = std::uniform_int_distribution<std::size_t>(std::min(h_lo, tg.w), tg.w)(rng);
    if (spec.velocity) {
      tg.vx = spec.velocity->first;
      tg.vy = spec.velocity->second;
    } else {
      const double speed = spec.min_speed + (spec.max_speed - spec.min_speed) * unit(rng);
      const double angle = 2.0 * std::numbers::pi * unit(rng);
      tg.vx = speed * std::cos(angle);
      tg.vy = speed * std::sin(angle);
    }
    const double room_x = static_cast<double>(spec.width - tg.w);
    const double room_y = static_cast<double>(spec.height - tg.h);
    if (std::abs(tg.vx) * span > room_x) tg.vx = std::copysign(room_x / span, tg.vx);
    if (std::abs(tg.vy) * span > room_y) tg.vy = std::copysign(room_y / span, tg.vy);
    const double free_x = room_x - std::abs(tg.vx) * span;
    const double free_y = room_y - std::abs(tg.vy) * span;
    tg.x0 = std::floor(unit(rng) * free_x) + (tg.vx < 0 ? std::abs(tg.vx) * span : 0.0);
    tg.y0 = std::floor(unit(rng) * free_y) + (tg.vy < 0 ? std::abs(tg.vy) * span : 0.0);
    tg.visible_offset = (unit(rng) < 0.5 ? -1.0 : 1.0) * spec.visible_contrast * 255.0;
    tg.thermal_offset = spec.thermal_contrast * 255.0;
    targets.push_back(tg);
  }

  std::normal_distribution<double> noise(0.0, spec.noise_sigma > 0.0 ? spec.noise_sigma : 1.0);
  for (std::size_t f = 0; f < spec.frames; ++f) {
    std::vector<double> vis = vis_bg, mwir = mwir_bg;
    std::vector<GroundTruthBox> boxes;
    for (const auto& tg : targets) {
      const long x0 = std::clamp(tg.x_at(f), 0L, static_cast<long>(spec.width - tg.w));
      const long y0 = std::clamp(tg.y_at(f), 0L, static_cast<long>(spec.height - tg.h));
      const double vis_tex = 0.15 * std::abs(tg.visible_offset);
      const double mwir_tex = 0.1 * tg.thermal_offset;
      for (long dy = 0; dy < static_cast<long>(tg.h); ++dy) {
        for (long dx = 0; dx < static_cast<long>(tg.w); ++dx) {
          const std::size_t idx = static_cast<std::size_t>(y0 + dy) * spec.width + static_cast<std::size_t>(x0 + dx);
          const double a = edge_alpha(dx, dy, tg.w, tg.h, spec.edge_blur);
          const double checker = ((dx / 4 + dy / 4) % 2 == 0) ? 1.0 : -1.0;
          vis[idx] += a * (tg.visible_offset + checker * vis_tex);
          mwir[idx] += a * (tg.thermal_offset + checker * mwir_tex);
        }
      }
      GroundTruthBox gt;
      gt.box = {static_cast<double>(x0), static_cast<double>(y0), static_cast<double>(tg.w),
                static_cast<double>(tg.h)};
      gt.image_id = make_image_id("seq", f);
      boxes.push_back(gt);
    }
    if (spec.noise_sigma > 0.0) {
      for (auto& v : vis) v += noise(rng);
      for (auto& v : mwir) v += noise(rng);
    }
    seq.visible.frames.push_back(quantize(vis, spec.width, spec.height));
    seq.mwir.frames.push_back(quantize(mwir, spec.width, spec.height));
    seq.gt.push_back(std::move(boxes));
  }
  return seq;
}

SuiteProfile builtin_profile(std::string_view name) {
  SuiteProfile p;
  p.name = std::string(name);
  SceneSpec base;
  std::vector<SceneSpec> textured;
  for (auto tex : {BackgroundTexture::noise, BackgroundTexture::terrain_gradient, BackgroundTexture::flat}) {
    SceneSpec s = base;
    s.background = tex;
    textured.push_back(s);
  }
  auto with = [&](auto&& mutate) {
    std::vector<SceneSpec> out = textured;
    for (auto& s : out) mutate(s);
    return out;
  };
  const auto easy = with([](SceneSpec&) {});
  const auto camouflage = with([](SceneSpec& s) {
    s.visible_contrast = 0.04;
    s.thermal_contrast = 0.55;
  });
  const auto small = with([](SceneSpec& s) {
    s.min_target_size = 8;
    s.max_target_size = 16;
  });
  if (name == "easy") {
    p.variants = easy;
  } else if (name == "camouflage") {
    p.variants = camouflage;
  } else if (name == "small-target" || name == "small_target") {
    p.name = "small-target";
    p.variants = small;
  } else if (name == "mixed") {
    for (std::size_t i = 0; i < easy.size(); ++i) {
      p.variants.push_back(easy[i]);
      p.variants.push_back(camouflage[(i + 1) % camouflage.size()]);
      p.variants.push_back(small[(i + 2) % small.size()]);
    }
  } else {
    throw InputError("unknown synthetic profile '" + std::string(name) +
                     "' (expected easy, camouflage, small-target or mixed)");
  }
  return p;
}

SuiteProfile load_profile(const std::string& path) {
  const auto cfg = KeyValueConfig::load(path);
  SuiteProfile p = builtin_profile(cfg.get_string("base", "easy"));
  p.name = cfg.get_string("name", p.name);
  p.sequences = cfg.get_size("sequences", p.sequences);
  p.frames = cfg.get_size("frames", p.frames);
  p.test_fraction = cfg.get_double("test_fraction", p.test_fraction);
  for (auto& s : p.variants) {
    s.width = cfg.get_size("width", s.width);
    s.height = cfg.get_size("height", s.height);
    if (cfg.has("background")) s.background = parse_background_texture(cfg.get_string("background", ""));
    s.target_count = cfg.get_size("target_count", s.target_count);
    s.min_target_size = cfg.get_size("min_target_size", s.min_target_size);
    s.max_target_size = cfg.get_size("max_target_size", s.max_target_size);
    s.visible_contrast = cfg.get_double("visible_contrast", s.visible_contrast);
    s.thermal_contrast = cfg.get_double("thermal_contrast", s.thermal_contrast);
    s.min_speed = cfg.get_double("min_speed", s.min_speed);
    s.max_speed = cfg.get_double("max_speed", s.max_speed);
    s.noise_sigma = cfg.get_double("noise_sigma", s.noise_sigma);
    s.edge_blur = cfg.get_double("edge_blur", s.edge_blur);
  }
  cfg.reject_unused();
  if (p.test_fraction < 0.0 || p.test_fraction >= 1.0) throw ConfigError("test_fraction must lie in [0, 1)");
  return p;
}

void write_profile(const std::string& path, const SuiteProfile& profile) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write profile '" + path + "'");
  out << "# resolved generator profile\n";
  out << "name = " << profile.name << "\nsequences = " << profile.sequences << "\nframes = " << profile.frames
      << "\ntest_fraction = " << profile.test_fraction << "\n";
  for (std::size_t i = 0; i < profile.variants.size(); ++i) {
    const auto& s = profile.variants[i];
    out << "# variant " << i << ": " << s.width << "x" << s.height << " background=" << to_string(s.background)
        << " targets=" << s.target_count << " size=" << s.min_target_size << "-" << s.max_target_size
        << " visible_contrast=" << s.visible_contrast << " thermal_contrast=" << s.thermal_contrast
        << " speed=" << s.min_speed << "-" << s.max_speed << " noise_sigma=" << s.noise_sigma
        << " edge_blur=" << s.edge_blur << "\n";
  }
}

SuiteSummary generate_suite(const SuiteProfile& profile, const std::string& out_dir, std::uint64_t seed) {
  if (profile.variants.empty()) throw ConfigError("profile '" + profile.name + "' has no scene variants");
  SuiteSummary summary;
  summary.root = out_dir;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw InputError("cannot create dataset directory '" + out_dir + "': " + ec.message());

  const auto n_test = static_cast<std::size_t>(std::round(profile.test_fraction * static_cast<double>(profile.sequences)));
  for (std::size_t i = 0; i < profile.sequences; ++i) {
    SceneSpec spec = profile.variants[i % profile.variants.size()];
    spec.frames = profile.frames;
    spec.seed = derive_seed(seed, i);
    const auto seq = generate(spec);

    std::ostringstream name;
    name << "seq_" << std::setw(3) << std::setfill('0') << i;
    const fs::path dir = fs::path(out_dir) / name.str();
    fs::create_directories(dir / "visible");
    fs::create_directories(dir / "mwir");
    std::ofstream gt(dir / "gt.csv");
    if (!gt) throw InputError("cannot write '" + (dir / "gt.csv").string() + "'");
    gt << "frame_index,x,y,w,h,class\n";
    for (std::size_t f = 0; f < spec.frames; ++f) {
      std::ostringstream file;
      file << std::setw(6) << std::setfill('0') << f << ".png";
      write_png_gray((dir / "visible" / file.str()).string(), seq.visible.frames[f]);
      write_png_gray((dir / "mwir" / file.str()).string(), seq.mwir.frames[f]);
      for (const auto& b : seq.gt[f]) {
        gt << f << ',' << b.box.x << ',' << b.box.y << ',' << b.box.w << ',' << b.box.h << ',' << b.class_id << '\n';
      }
      ++summary.frames_written;
    }
    summary.manifest.push_back({name.str(), i + n_test >= profile.sequences ? Split::test : Split::train, 5});
  }
  write_manifest((fs::path(out_dir) / "manifest.txt").string(), summary.manifest);
  write_profile((fs::path(out_dir) / "profile.cfg").string(), profile);
  return summary;
}

}  // namespace mcdet
