#include "mcdet/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "mcdet/error.hpp"

namespace fs = std::filesystem;

namespace mcdet {
namespace {

std::vector<fs::path> list_pngs(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) throw InputError("missing frame directory '" + dir.string() + "'");
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::size_t frame_number(const fs::path& p) {
  const std::string stem = p.stem().string();
  try {
    std::size_t used = 0;
    const unsigned long v = std::stoul(stem, &used);
    if (used != stem.size()) throw std::invalid_argument(stem);
    return v;
  } catch (const std::exception&) {
    throw InputError("frame file name is not a frame number: '" + p.string() + "'");
  }
}

}  // namespace

std::string_view to_string(Split split) { return split == Split::train ? "train" : "test"; }

Split parse_split(std::string_view text) {
  if (text == "train") return Split::train;
  if (text == "test") return Split::test;
  throw InputError("unknown split '" + std::string(text) + "' (expected train or test)");
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open manifest '" + path + "'");
  std::vector<ManifestEntry> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream row(line);
    ManifestEntry e;
    std::string split;
    if (!(row >> e.sequence)) continue;
    if (!(row >> split)) throw InputError("manifest '" + path + "' line " + std::to_string(line_no) + ": missing split");
    e.split = parse_split(split);
    if (std::string stride; row >> stride) {
      try {
        e.frame_stride = std::stoul(stride);
      } catch (const std::exception&) {
        throw InputError("manifest '" + path + "' line " + std::to_string(line_no) + ": bad frame stride");
      }
      if (e.frame_stride == 0) throw InputError("manifest '" + path + "': frame stride must be at least 1");
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write manifest '" + path + "'");
  out << "# sequence split frame_stride\n";
  for (const auto& e : entries) out << e.sequence << ' ' << to_string(e.split) << ' ' << e.frame_stride << '\n';
}

std::string make_image_id(const std::string& sequence, std::size_t frame_index) {
  std::ostringstream os;
  os << sequence << '/' << std::setw(6) << std::setfill('0') << frame_index;
  return os.str();
}

FusedImage Sample::input(FusionMode mode) const { return fuse(&visible, &mwir, &motion, mode, frame_index); }

std::vector<std::pair<std::size_t, GroundTruthBox>> read_gt_csv(const std::string& path, const std::string& sequence) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open ground truth '" + path + "'");
  std::vector<std::pair<std::size_t, GroundTruthBox>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.rfind("frame_index", 0) == 0) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream row(line);
    std::size_t frame = 0;
    GroundTruthBox gt;
    if (!(row >> frame >> gt.box.x >> gt.box.y >> gt.box.w >> gt.box.h >> gt.class_id)) {
      throw InputError("ground truth '" + path + "' line " + std::to_string(line_no) + " is malformed");
    }
    if (!gt.box.valid()) {
      throw InputError("ground truth '" + path + "' line " + std::to_string(line_no) + " has a non-positive extent");
    }
    gt.image_id = make_image_id(sequence, frame);
    rows.emplace_back(frame, std::move(gt));
  }
  return rows;
}

std::vector<Sample> ingest_dataset(const std::string& root, const std::vector<ManifestEntry>& manifest,
                                   std::optional<Split> split) {
  std::vector<Sample> samples;
  for (const auto& entry : manifest) {
    if (split && entry.split != *split) continue;
    const fs::path seq_dir = fs::path(root) / entry.sequence;
    const auto visible = list_pngs(seq_dir / "visible");
    const auto mwir = list_pngs(seq_dir / "mwir");
    if (visible.size() != mwir.size()) {
      throw InputError("sequence '" + entry.sequence + "' is misaligned: " + std::to_string(visible.size()) +
                       " visible frames vs " + std::to_string(mwir.size()) + " MWIR frames");
    }
    std::map<std::size_t, std::vector<GroundTruthBox>> gts;
    for (auto& [frame, gt] : read_gt_csv((seq_dir / "gt.csv").string(), entry.sequence)) {
      gts[frame].push_back(std::move(gt));
    }
    ImagePlane previous;
    for (std::size_t i = 0; i < visible.size(); ++i) {
      const std::size_t frame = frame_number(visible[i]);
      if (frame_number(mwir[i]) != frame) {
        throw InputError("sequence '" + entry.sequence + "' is misaligned at '" + visible[i].filename().string() +
                         "' / '" + mwir[i].filename().string() + "'");
      }
      ImagePlane vis = read_png_gray(visible[i].string());
      if (i == 0) {
        previous = std::move(vis);
        continue;
      }
      Sample s;
      s.sequence = entry.sequence;
      s.frame_index = frame;
      s.image_id = make_image_id(entry.sequence, frame);
      s.mwir = read_png_gray(mwir[i].string());
      if (!vis.same_size(s.mwir)) {
        throw InputError("visible and MWIR frames differ in size at '" + visible[i].string() + "'");
      }
      s.motion = compute_motion(vis, previous, i - 1, i).base;
      previous = vis;
      s.visible = std::move(vis);
      if (const auto it = gts.find(frame); it != gts.end()) s.gts = it->second;
      samples.push_back(std::move(s));
    }
  }
  return samples;
}

std::vector<Sample> ingest_dataset(const std::string& root, std::optional<Split> split) {
  return ingest_dataset(root, read_manifest((fs::path(root) / "manifest.txt").string()), split);
}

}  // namespace mcdet
