#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace mcdet {

enum class LayerKind { conv, lrn, maxpool, relu, fc, dropout, roipool, softmax };

std::string_view to_string(LayerKind kind);
LayerKind parse_layer_kind(std::string_view text);

/// Cross-channel local response normalisation parameters.
struct LrnParams {
  std::size_t local_size = 5;
  double alpha = 1e-4;
  double beta = 0.75;
  double k = 2.0;
};

enum class Activation { none, relu };

/// One row of a layer table. Fields that do not apply to `kind` are ignored.
struct LayerSpec {
  std::string name;
  LayerKind kind = LayerKind::conv;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel_h = 0;
  std::size_t kernel_w = 0;
  std::size_t stride = 1;
  std::size_t pad = 0;
  Activation activation = Activation::none;
  double dropout_rate = 0.0;
  LrnParams lrn{};
};

struct RoiPoolSpec {
  std::size_t bins_h = 6;
  std::size_t bins_w = 6;
  double spatial_scale = 1.0 / 16.0;
};

/// Layer table of the VGG-M based detector: five conv layers with two
/// LRN/max-pool stages, 6x6 ROI pooling, FC6 and FC7, and the two heads.
std::vector<LayerSpec> vggm_table();

/// Same topology as vggm_table() with narrow channel counts, sized for CPU
/// training at desk scale.
std::vector<LayerSpec> desk_table();

/// Parses a whitespace-separated layer table. Columns:
/// `name kind in out kernel stride pad activation dropout`, `-` for blanks,
/// `#` starts a comment. Throws ConfigError with the line number on bad rows.
std::vector<LayerSpec> parse_layer_table(std::istream& in);
std::vector<LayerSpec> load_layer_table(const std::string& path);
void write_layer_table(std::ostream& out, const std::vector<LayerSpec>& table);

}  // namespace mcdet
