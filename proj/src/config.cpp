#include "derm/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "derm/error.hpp"

namespace derm {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_line(std::size_t line_no, const std::string& why) {
  throw ConfigError("config line " + std::to_string(line_no) + ": " + why);
}

double parse_double(const std::string& v, std::size_t line_no) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) bad_line(line_no, "trailing characters in number '" + v + "'");
    return d;
  } catch (const ConfigError&) {
    throw;
  } catch (...) {
    bad_line(line_no, "invalid number '" + v + "'");
  }
}

std::size_t parse_size(const std::string& v, std::size_t line_no) {
  const double d = parse_double(v, line_no);
  if (d < 0 || d != std::floor(d)) bad_line(line_no, "expected nonnegative integer, got '" + v + "'");
  return static_cast<std::size_t>(d);
}

bool parse_bool(const std::string& v, std::size_t line_no) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_line(line_no, "expected true/false, got '" + v + "'");
}

std::pair<double, double> parse_interval(const std::string& v, std::size_t line_no) {
  const auto comma = v.find(',');
  if (comma == std::string::npos) bad_line(line_no, "expected 'lo,hi' interval, got '" + v + "'");
  return {parse_double(trim(v.substr(0, comma)), line_no),
          parse_double(trim(v.substr(comma + 1)), line_no)};
}

std::vector<std::size_t> parse_size_list(const std::string& v, std::size_t line_no) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_size(trim(item), line_no));
  if (out.empty()) bad_line(line_no, "expected comma-separated integer list");
  return out;
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t.front() == '[') {
      if (t.back() != ']') bad_line(line_no, "unterminated section header");
      section = t.substr(1, t.size() - 2);
      if (section != "data" && section != "model" && section != "train" && section != "augment")
        bad_line(line_no, "unknown section [" + section + "]");
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) bad_line(line_no, "expected 'key = value'");
    const std::string key = trim(t.substr(0, eq));
    const std::string val = trim(t.substr(eq + 1));
    if (section.empty()) bad_line(line_no, "key '" + key + "' outside any section");

    if (section == "data") {
      if (key == "data_root") cfg.data_root = val;
      else if (key == "manifest") cfg.manifest = val;
      else if (key == "split_dir") cfg.split_dir = val;
      else if (key == "image_size") cfg.image_size = parse_size(val, line_no);
      else bad_line(line_no, "unknown key '" + key + "' in [data]");
    } else if (section == "model") {
      if (key == "kind") {
        if (val == "sequential") cfg.model_kind = ModelKind::Sequential;
        else if (val == "parallel") cfg.model_kind = ModelKind::Parallel;
        else bad_line(line_no, "model kind must be sequential|parallel, got '" + val + "'");
      } else if (key == "stage_channels") cfg.stage_channels = parse_size_list(val, line_no);
      else if (key == "d_model") cfg.d_model = parse_size(val, line_no);
      else if (key == "n_heads") cfg.n_heads = parse_size(val, line_no);
      else if (key == "n_layers") cfg.n_layers = parse_size(val, line_no);
      else if (key == "ffn_dim") cfg.ffn_dim = parse_size(val, line_no);
      else if (key == "dropout") cfg.dropout = parse_double(val, line_no);
      else if (key == "patch_size") cfg.patch_size = parse_size(val, line_no);
      else if (key == "fusion") {
        if (val == "perceptron") cfg.fusion = FusionKind::Perceptron;
        else if (val == "spline") cfg.fusion = FusionKind::Spline;
        else bad_line(line_no, "fusion must be perceptron|spline, got '" + val + "'");
      } else if (key == "fusion_hidden") cfg.fusion_hidden = parse_size(val, line_no);
      else if (key == "fusion_out") cfg.fusion_out = parse_size(val, line_no);
      else if (key == "spline_grid_size") cfg.spline_grid_size = parse_size(val, line_no);
      else if (key == "spline_order") cfg.spline_order = parse_size(val, line_no);
      else if (key == "spline_range") {
        auto [lo, hi] = parse_interval(val, line_no);
        cfg.spline_lo = lo;
        cfg.spline_hi = hi;
      } else bad_line(line_no, "unknown key '" + key + "' in [model]");
    } else if (section == "train") {
      if (key == "epochs") cfg.epochs = parse_size(val, line_no);
      else if (key == "batch_size") cfg.batch_size = parse_size(val, line_no);
      else if (key == "lr") cfg.lr = parse_double(val, line_no);
      else if (key == "weight_decay") cfg.weight_decay = parse_double(val, line_no);
      else if (key == "lr_step") cfg.lr_step = parse_size(val, line_no);
      else if (key == "lr_gamma") cfg.lr_gamma = parse_double(val, line_no);
      else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(parse_size(val, line_no));
      else if (key == "deterministic") cfg.deterministic = parse_bool(val, line_no);
      else if (key == "select_f1") {
        if (val == "weighted") cfg.select_f1_weighted = true;
        else if (val == "positive") cfg.select_f1_weighted = false;
        else bad_line(line_no, "select_f1 must be weighted|positive");
      } else bad_line(line_no, "unknown key '" + key + "' in [train]");
    } else {  // augment
      auto& a = cfg.augment;
      if (key == "crop_scale") std::tie(a.crop_scale_lo, a.crop_scale_hi) = parse_interval(val, line_no);
      else if (key == "crop_aspect") std::tie(a.crop_aspect_lo, a.crop_aspect_hi) = parse_interval(val, line_no);
      else if (key == "rotation_degrees") a.rotation_degrees = parse_double(val, line_no);
      else if (key == "hflip_prob") a.hflip_prob = parse_double(val, line_no);
      else if (key == "vflip_prob") a.vflip_prob = parse_double(val, line_no);
      else if (key == "jitter_factor") std::tie(a.jitter_lo, a.jitter_hi) = parse_interval(val, line_no);
      else if (key == "grayscale_prob") a.grayscale_prob = parse_double(val, line_no);
      else if (key == "blur_prob") a.blur_prob = parse_double(val, line_no);
      else if (key == "blur_sigma") std::tie(a.blur_sigma_lo, a.blur_sigma_hi) = parse_interval(val, line_no);
      else if (key == "blur_kernel") a.blur_kernel = parse_size(val, line_no);
      else if (key == "output_size") {
        a.output_size = parse_size(val, line_no);
        cfg.augment_output_size_set = true;
      } else bad_line(line_no, "unknown key '" + key + "' in [augment]");
    }
  }
  cfg.validate();
  return cfg;
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config file: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

void RunConfig::validate() const {
  if (image_size == 0) throw ConfigError("config: image_size must be positive");
  if (batch_size == 0) throw ConfigError("config: batch_size must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("config: lr must be positive");
  if (lr_step == 0) throw ConfigError("config: lr_step must be positive");
  if (weight_decay < 0.0) throw ConfigError("config: weight_decay must be nonnegative");
  model_config();            // shape/divisibility checks
  augment_config().validate();
}

ModelConfig RunConfig::model_config() const {
  ModelConfig m;
  m.kind = model_kind;
  m.backbone.stage_channels = stage_channels;
  m.encoder.d_model = d_model;
  m.encoder.n_heads = n_heads;
  m.encoder.n_layers = n_layers;
  m.encoder.ffn_dim = ffn_dim;
  m.encoder.dropout_prob = dropout;
  m.encoder.validate();
  m.image_size = image_size;
  m.patch_size = patch_size;
  m.fusion = fusion;
  m.fusion_hidden = fusion_hidden;
  m.fusion_out = fusion_out;
  m.spline_grid_size = spline_grid_size;
  m.spline_order = spline_order;
  m.spline_lo = spline_lo;
  m.spline_hi = spline_hi;
  (void)m.backbone_grid();
  if (m.kind == ModelKind::Parallel) (void)m.patch_tokens();
  return m;
}

AugmentationConfig RunConfig::augment_config() const {
  AugmentationConfig a = augment;
  if (!augment_output_size_set) a.output_size = image_size;
  return a;
}

std::string serialize_config(const RunConfig& cfg) {
  std::ostringstream os;
  os << "[data]\n";
  os << "data_root = " << cfg.data_root << "\n";
  if (!cfg.manifest.empty()) os << "manifest = " << cfg.manifest << "\n";
  if (!cfg.split_dir.empty()) os << "split_dir = " << cfg.split_dir << "\n";
  os << "image_size = " << cfg.image_size << "\n";
  os << "\n[model]\n";
  os << "kind = " << (cfg.model_kind == ModelKind::Sequential ? "sequential" : "parallel") << "\n";
  os << "stage_channels = ";
  for (std::size_t i = 0; i < cfg.stage_channels.size(); ++i)
    os << (i ? "," : "") << cfg.stage_channels[i];
  os << "\n";
  os << "d_model = " << cfg.d_model << "\n";
  os << "n_heads = " << cfg.n_heads << "\n";
  os << "n_layers = " << cfg.n_layers << "\n";
  os << "ffn_dim = " << cfg.ffn_dim << "\n";
  os << "dropout = " << fmt_double(cfg.dropout) << "\n";
  os << "patch_size = " << cfg.patch_size << "\n";
  os << "fusion = " << (cfg.fusion == FusionKind::Perceptron ? "perceptron" : "spline") << "\n";
  os << "fusion_hidden = " << cfg.fusion_hidden << "\n";
  os << "fusion_out = " << cfg.fusion_out << "\n";
  os << "spline_grid_size = " << cfg.spline_grid_size << "\n";
  os << "spline_order = " << cfg.spline_order << "\n";
  os << "spline_range = " << fmt_double(cfg.spline_lo) << "," << fmt_double(cfg.spline_hi) << "\n";
  os << "\n[train]\n";
  os << "epochs = " << cfg.epochs << "\n";
  os << "batch_size = " << cfg.batch_size << "\n";
  os << "lr = " << fmt_double(cfg.lr) << "\n";
  os << "weight_decay = " << fmt_double(cfg.weight_decay) << "\n";
  os << "lr_step = " << cfg.lr_step << "\n";
  os << "lr_gamma = " << fmt_double(cfg.lr_gamma) << "\n";
  os << "seed = " << cfg.seed << "\n";
  os << "deterministic = " << (cfg.deterministic ? "true" : "false") << "\n";
  os << "select_f1 = " << (cfg.select_f1_weighted ? "weighted" : "positive") << "\n";
  const auto& a = cfg.augment;
  os << "\n[augment]\n";
  os << "crop_scale = " << fmt_double(a.crop_scale_lo) << "," << fmt_double(a.crop_scale_hi) << "\n";
  os << "crop_aspect = " << fmt_double(a.crop_aspect_lo) << "," << fmt_double(a.crop_aspect_hi)
     << "\n";
  os << "rotation_degrees = " << fmt_double(a.rotation_degrees) << "\n";
  os << "hflip_prob = " << fmt_double(a.hflip_prob) << "\n";
  os << "vflip_prob = " << fmt_double(a.vflip_prob) << "\n";
  os << "jitter_factor = " << fmt_double(a.jitter_lo) << "," << fmt_double(a.jitter_hi) << "\n";
  os << "grayscale_prob = " << fmt_double(a.grayscale_prob) << "\n";
  os << "blur_prob = " << fmt_double(a.blur_prob) << "\n";
  os << "blur_sigma = " << fmt_double(a.blur_sigma_lo) << "," << fmt_double(a.blur_sigma_hi) << "\n";
  os << "blur_kernel = " << a.blur_kernel << "\n";
  if (cfg.augment_output_size_set) os << "output_size = " << a.output_size << "\n";
  return os.str();
}

}  // namespace derm
