#include "mcdet/weights_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>

#include "mcdet/error.hpp"
#include "mcdet/log.hpp"

namespace mcdet {
namespace {

constexpr char kMagic[] = {'I', 'F', 'O', 'D', 'W', '1'};
constexpr std::uint32_t kMaxRank = 8;

static_assert(sizeof(float) == 4);

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

void put_f32(std::string& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

class Reader {
 public:
  Reader(const std::string& bytes, const std::string& path) : bytes_(bytes), path_(path) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw FormatError("weights file '" + path_ + "' is truncated");
  }
  const std::string& bytes_;
  const std::string& path_;
  std::size_t pos_ = 0;
};

}  // namespace

void write_weights_file(const std::string& path, const std::vector<WeightRecord>& records) {
  std::string out(kMagic, sizeof(kMagic));
  put_u32(out, static_cast<std::uint32_t>(records.size()));
  for (const auto& r : records) {
    put_u32(out, static_cast<std::uint32_t>(r.name.size()));
    out += r.name;
    put_u32(out, static_cast<std::uint32_t>(r.tensor.rank()));
    for (auto d : r.tensor.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    for (float v : r.tensor.data()) put_f32(out, v);
  }
  const std::filesystem::path target(path);
  if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw InputError("cannot write weights file '" + path + "'");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw InputError("failed writing weights file '" + path + "'");
  }
  std::filesystem::rename(tmp, target);
}

std::vector<WeightRecord> read_weights_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot open weights file '" + path + "'");
  const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw FormatError("weights file '" + path + "' has a bad magic or version");
  }
  Reader in(bytes, path);
  in.str(sizeof(kMagic));
  const std::uint32_t count = in.u32();
  std::vector<WeightRecord> records;
  for (std::uint32_t i = 0; i < count; ++i) {
    WeightRecord r;
    r.name = in.str(in.u32());
    const std::uint32_t rank = in.u32();
    if (rank == 0 || rank > kMaxRank) throw FormatError("weights file '" + path + "': bad rank for " + r.name);
    Shape shape;
    std::uint64_t numel = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      shape.push_back(in.u32());
      numel *= shape.back();
    }
    if (numel * 4 > in.remaining()) throw FormatError("weights file '" + path + "' is truncated");
    std::vector<float> values(numel);
    for (auto& v : values) v = in.f32();
    r.tensor = Tensor<float>(std::move(shape), std::move(values));
    records.push_back(std::move(r));
  }
  if (!in.done()) throw FormatError("weights file '" + path + "' has trailing bytes");
  return records;
}

template <typename T>
void save_weights(const Network<T>& network, const std::string& path) {
  std::vector<WeightRecord> records;
  for (const auto& p : network.parameters()) records.push_back({p.name, p.tensor->template cast<float>()});
  write_weights_file(path, records);
}

template <typename T>
LoadReport load_weights(Network<T>& network, const std::string& path, bool strict) {
  const auto records = read_weights_file(path);
  std::map<std::string, Tensor<T>*> params;
  for (auto& p : network.parameters()) params.emplace(p.name, p.tensor);

  LoadReport report;
  std::vector<std::pair<Tensor<T>*, const Tensor<float>*>> plan;
  for (const auto& r : records) {
    const auto it = params.find(r.name);
    std::string problem;
    if (it == params.end()) {
      problem = "tensor '" + r.name + "' has no counterpart in the network";
    } else if (it->second->shape() != r.tensor.shape()) {
      problem = "tensor '" + r.name + "' has shape " + shape_string(r.tensor.shape()) + " but the network expects " +
                shape_string(it->second->shape());
    }
    if (!problem.empty()) {
      if (strict) throw ConfigError("weights file '" + path + "': " + problem);
      log_warn("skipping " + problem);
      report.skipped.push_back(r.name);
      continue;
    }
    plan.emplace_back(it->second, &r.tensor);
  }
  for (auto [dst, src] : plan) {
    for (std::size_t i = 0; i < dst->numel(); ++i) (*dst)[i] = static_cast<T>((*src)[i]);
  }
  report.loaded = plan.size();
  return report;
}

template void save_weights(const Network<float>&, const std::string&);
template void save_weights(const Network<double>&, const std::string&);
template LoadReport load_weights(Network<float>&, const std::string&, bool);
template LoadReport load_weights(Network<double>&, const std::string&, bool);

}  // namespace mcdet
