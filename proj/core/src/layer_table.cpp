#include <fstream>
#include <iomanip>
#include <sstream>

#include "mcdet/error.hpp"
#include "mcdet/layer_spec.hpp"

namespace mcdet {

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv: return "conv";
    case LayerKind::lrn: return "lrn";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::relu: return "relu";
    case LayerKind::fc: return "fc";
    case LayerKind::dropout: return "dropout";
    case LayerKind::roipool: return "roipool";
    case LayerKind::softmax: return "softmax";
  }
  return "?";
}

LayerKind parse_layer_kind(std::string_view text) {
  for (auto kind : {LayerKind::conv, LayerKind::lrn, LayerKind::maxpool, LayerKind::relu, LayerKind::fc,
                    LayerKind::dropout, LayerKind::roipool, LayerKind::softmax}) {
    if (text == to_string(kind)) return kind;
  }
  if (text == "max-pool") return LayerKind::maxpool;
  if (text == "roi-pool") return LayerKind::roipool;
  throw ConfigError("unknown layer kind '" + std::string(text) + "'");
}

namespace {

LayerSpec conv(std::string name, std::size_t in, std::size_t out, std::size_t k, std::size_t stride, std::size_t pad) {
  LayerSpec s;
  s.name = std::move(name);
  s.kind = LayerKind::conv;
  s.in_channels = in;
  s.out_channels = out;
  s.kernel_h = s.kernel_w = k;
  s.stride = stride;
  s.pad = pad;
  s.activation = Activation::relu;
  return s;
}

LayerSpec lrn(std::string name, std::size_t channels) {
  LayerSpec s;
  s.name = std::move(name);
  s.kind = LayerKind::lrn;
  s.in_channels = s.out_channels = channels;
  return s;
}

LayerSpec pool(std::string name, std::size_t channels, std::size_t k, std::size_t stride) {
  LayerSpec s;
  s.name = std::move(name);
  s.kind = LayerKind::maxpool;
  s.in_channels = s.out_channels = channels;
  s.kernel_h = s.kernel_w = k;
  s.stride = stride;
  return s;
}

LayerSpec roi(std::size_t channels) {
  LayerSpec s;
  s.name = "roi_pool";
  s.kind = LayerKind::roipool;
  s.in_channels = channels;
  s.out_channels = 36;
  s.kernel_h = s.kernel_w = 6;
  return s;
}

LayerSpec fc(std::string name, std::size_t in, std::size_t out, bool hidden) {
  LayerSpec s;
  s.name = std::move(name);
  s.kind = LayerKind::fc;
  s.in_channels = in;
  s.out_channels = out;
  if (hidden) {
    s.activation = Activation::relu;
    s.dropout_rate = 0.5;
  }
  return s;
}

std::vector<LayerSpec> make_table(std::size_t c1, std::size_t c2, std::size_t c3, std::size_t f6, std::size_t f7) {
  return {
      conv("conv1", 3, c1, 7, 2, 0),   lrn("norm1", c1),         pool("pool1", c1, 3, 2),
      conv("conv2", c1, c2, 5, 2, 1),  lrn("norm2", c2),         pool("pool2", c2, 3, 2),
      conv("conv3", c2, c3, 3, 1, 1),  conv("conv4", c3, c3, 3, 1, 1), conv("conv5", c3, c3, 3, 1, 1),
      roi(c3),                         fc("fc6", c3 * 36, f6, true), fc("fc7", f6, f7, true),
      fc("cls", f7, 2, false),         fc("bbox", f7, 8, false),
  };
}

std::size_t parse_count(const std::string& field, std::size_t line, const char* what) {
  if (field == "-") return 0;
  try {
    std::size_t used = 0;
    const long v = std::stol(field, &used);
    if (used != field.size() || v < 0) throw std::invalid_argument(field);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw ConfigError("layer table line " + std::to_string(line) + ": bad " + what + " '" + field + "'");
  }
}

}  // namespace

std::vector<LayerSpec> vggm_table() { return make_table(96, 256, 512, 4096, 1024); }

std::vector<LayerSpec> desk_table() { return make_table(16, 32, 64, 256, 128); }

std::vector<LayerSpec> parse_layer_table(std::istream& in) {
  std::vector<LayerSpec> table;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    if (const auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    std::istringstream row(raw);
    std::vector<std::string> fields;
    for (std::string f; row >> f;) fields.push_back(f);
    if (fields.empty()) continue;
    if (fields.size() < 2 || fields.size() > 9) {
      throw ConfigError("layer table line " + std::to_string(line_no) + ": expected 2 to 9 columns");
    }
    fields.resize(9, "-");
    LayerSpec s;
    s.name = fields[0];
    try {
      s.kind = parse_layer_kind(fields[1]);
    } catch (const ConfigError& e) {
      throw ConfigError("layer table line " + std::to_string(line_no) + ": " + e.what());
    }
    s.in_channels = parse_count(fields[2], line_no, "input channels");
    s.out_channels = parse_count(fields[3], line_no, "output channels");
    if (fields[4] != "-") {
      const auto x = fields[4].find('x');
      if (x == std::string::npos) {
        s.kernel_h = s.kernel_w = parse_count(fields[4], line_no, "kernel");
      } else {
        s.kernel_h = parse_count(fields[4].substr(0, x), line_no, "kernel");
        s.kernel_w = parse_count(fields[4].substr(x + 1), line_no, "kernel");
      }
    }
    s.stride = fields[5] == "-" ? 1 : parse_count(fields[5], line_no, "stride");
    s.pad = parse_count(fields[6], line_no, "pad");
    if (fields[7] == "relu") {
      s.activation = Activation::relu;
    } else if (fields[7] != "-" && fields[7] != "none") {
      throw ConfigError("layer table line " + std::to_string(line_no) + ": unknown activation '" + fields[7] + "'");
    }
    if (fields[8] != "-") {
      try {
        s.dropout_rate = std::stod(fields[8]);
      } catch (const std::exception&) {
        throw ConfigError("layer table line " + std::to_string(line_no) + ": bad dropout '" + fields[8] + "'");
      }
      if (s.dropout_rate < 0.0 || s.dropout_rate >= 1.0) {
        throw ConfigError("layer table line " + std::to_string(line_no) + ": dropout must lie in [0, 1)");
      }
    }
    table.push_back(std::move(s));
  }
  return table;
}

std::vector<LayerSpec> load_layer_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open layer table '" + path + "'");
  return parse_layer_table(in);
}

void write_layer_table(std::ostream& out, const std::vector<LayerSpec>& table) {
  out << "# name kind in out kernel stride pad activation dropout\n";
  auto blank = [](std::size_t v) { return v == 0 ? std::string("-") : std::to_string(v); };
  for (const auto& s : table) {
    const bool spatial = s.kind == LayerKind::conv || s.kind == LayerKind::maxpool || s.kind == LayerKind::roipool;
    out << std::left << std::setw(10) << s.name << ' ' << std::setw(8) << to_string(s.kind) << ' '
        << std::setw(6) << blank(s.in_channels) << ' ' << std::setw(6) << blank(s.out_channels) << ' '
        << std::setw(6)
        << (spatial ? std::to_string(s.kernel_h) + "x" + std::to_string(s.kernel_w) : std::string("-")) << ' '
        << std::setw(3) << (s.kind == LayerKind::conv || s.kind == LayerKind::maxpool ? std::to_string(s.stride) : "-")
        << ' ' << std::setw(3) << (s.kind == LayerKind::conv ? std::to_string(s.pad) : "-") << ' ' << std::setw(5)
        << (s.activation == Activation::relu ? "relu" : "-") << ' '
        << (s.dropout_rate > 0.0 ? std::to_string(s.dropout_rate) : "-") << '\n';
  }
}

}  // namespace mcdet
