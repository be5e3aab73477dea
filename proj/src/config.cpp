#include "mtt/config.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace mtt {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

/// Shortest decimal form that parses back to the same double.
std::string format_double(double v) {
  char buf[64];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    if (std::stod(buf) == v) return buf;
  }
  return buf;
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("");
    return v;
  } catch (...) {
    throw std::invalid_argument("config: bad number '" + value + "' for " + key);
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    std::uint64_t v = std::stoull(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("");
    return v;
  } catch (...) {
    throw std::invalid_argument("config: bad integer '" + value + "' for " + key);
  }
}

bool parse_on_off(const std::string& key, const std::string& value) {
  if (value == "on" || value == "true" || value == "1") return true;
  if (value == "off" || value == "false" || value == "0") return false;
  throw std::invalid_argument("config: expected on/off for " + key + ", got '" + value + "'");
}

// "32x32x3"
void parse_input_size(EncoderConfig& e, const std::string& value) {
  std::size_t h, w, c;
  char x1, x2;
  std::istringstream is(value);
  if (!(is >> h >> x1 >> w >> x2 >> c) || x1 != 'x' || x2 != 'x' || !is.eof())
    throw std::invalid_argument("config: expected HxWxC for encoder.input, got '" + value + "'");
  e.input_h = h;
  e.input_w = w;
  e.input_c = c;
}

// "8:2,16:2,32:2"
std::vector<BackboneStage> parse_backbone(const std::string& value) {
  std::vector<BackboneStage> stages;
  std::istringstream is(value);
  std::string item;
  while (std::getline(is, item, ',')) {
    item = trim(item);
    std::size_t colon = item.find(':');
    if (colon == std::string::npos)
      throw std::invalid_argument("config: expected channels:stride entries for "
                                  "encoder.backbone, got '" + value + "'");
    stages.push_back(BackboneStage{parse_u64("encoder.backbone", trim(item.substr(0, colon))),
                                   parse_u64("encoder.backbone", trim(item.substr(colon + 1)))});
  }
  return stages;
}

std::string backbone_str(const std::vector<BackboneStage>& stages) {
  std::ostringstream os;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    if (i) os << ',';
    os << stages[i].channels << ':' << stages[i].stride;
  }
  return os.str();
}

}  // namespace

std::size_t EncoderConfig::patches_h() const {
  std::size_t h = input_h;
  for (const BackboneStage& s : backbone) h = (h + 2 * (kernel / 2) - kernel) / s.stride + 1;
  return h;
}

std::size_t EncoderConfig::patches_w() const {
  std::size_t w = input_w;
  for (const BackboneStage& s : backbone) w = (w + 2 * (kernel / 2) - kernel) / s.stride + 1;
  return w;
}

void EncoderConfig::validate() const {
  if (d == 0 || d % 2 != 0)
    throw std::invalid_argument("encoder.d must be positive and even, got " + std::to_string(d));
  if (heads == 0 || d % heads != 0)
    throw std::invalid_argument("encoder.d=" + std::to_string(d) +
                                " must be divisible by encoder.heads=" + std::to_string(heads));
  if (kernel % 2 != 1) throw std::invalid_argument("encoder.kernel must be odd");
  if (input_h == 0 || input_w == 0 || input_c == 0)
    throw std::invalid_argument("encoder.input dimensions must be positive");
  std::size_t total_stride = 1;
  for (const BackboneStage& s : backbone) {
    if (s.channels == 0 || s.stride == 0)
      throw std::invalid_argument("encoder.backbone stages need positive channels and stride");
    total_stride *= s.stride;
  }
  if (input_h % total_stride != 0 || input_w % total_stride != 0)
    throw std::invalid_argument("encoder.input " + std::to_string(input_h) + "x" +
                                std::to_string(input_w) +
                                " not divisible by total backbone stride " +
                                std::to_string(total_stride));
}

void HeadConfig::validate() const {
  if (n_t == 0) throw std::invalid_argument("head.n_t must be >= 1");
  if (n_d == 0) throw std::invalid_argument("head.n_d must be >= 1");
  if (heads == 0) throw std::invalid_argument("head.heads must be >= 1");
  if (t_au <= 0.0 || t_expr <= 0.0 || sigma2_va <= 0.0)
    throw std::invalid_argument("head temperatures and sigma2_va must be positive");
}

void TrainConfig::validate() const {
  encoder.validate();
  head.validate();
  if (opt.lr <= 0.0) throw std::invalid_argument("optimizer.lr must be positive");
  if (steps == 0) throw std::invalid_argument("train.steps must be >= 1");
  if (batch == 0) throw std::invalid_argument("train.batch must be >= 1");
  if (mixup_alpha < 0.0) throw std::invalid_argument("train.mixup alpha must be positive");
}

TrainConfig desk_config() { return TrainConfig{}; }

TrainConfig paper_config() {
  TrainConfig c;
  c.preset = "paper";
  c.encoder.input_h = 224;
  c.encoder.input_w = 224;
  c.encoder.input_c = 3;
  c.encoder.d = 768;
  c.encoder.n_x = 2;
  c.encoder.heads = 12;
  c.encoder.backbone = {{64, 2}, {256, 2}, {512, 2}, {1024, 2}, {2048, 2}};
  c.head.n_t = 2;
  c.head.n_d = 4;
  c.head.heads = 12;
  return c;
}

TrainConfig gradcheck_config() {
  TrainConfig c;
  c.preset = "gradcheck";
  c.encoder.input_h = 8;
  c.encoder.input_w = 8;
  c.encoder.input_c = 1;
  c.encoder.d = 8;
  c.encoder.n_x = 1;
  c.encoder.heads = 2;
  c.encoder.backbone = {{4, 2}, {6, 2}};
  c.head.n_t = 1;
  c.head.n_d = 2;
  c.head.heads = 2;
  c.batch = 3;
  return c;
}

std::vector<std::pair<std::string, std::string>> parse_kv_text(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  ": expected 'key = value', got '" + line + "'");
    out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> parse_kv_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config file: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_kv_text(ss.str());
}

void apply_config_kv(TrainConfig& c, const std::string& key, const std::string& value) {
  if (key == "preset") {
    if (value == "desk")
      c = desk_config();
    else if (value == "paper")
      c = paper_config();
    else if (value == "gradcheck")
      c = gradcheck_config();
    else
      throw std::invalid_argument("config: unknown preset '" + value + "'");
  } else if (key == "seed")
    c.seed = parse_u64(key, value);
  else if (key == "encoder.input")
    parse_input_size(c.encoder, value);
  else if (key == "encoder.d")
    c.encoder.d = parse_u64(key, value);
  else if (key == "encoder.n_x")
    c.encoder.n_x = parse_u64(key, value);
  else if (key == "encoder.heads")
    c.encoder.heads = parse_u64(key, value);
  else if (key == "encoder.kernel")
    c.encoder.kernel = parse_u64(key, value);
  else if (key == "encoder.backbone")
    c.encoder.backbone = parse_backbone(value);
  else if (key == "head.n_t")
    c.head.n_t = parse_u64(key, value);
  else if (key == "head.n_d")
    c.head.n_d = parse_u64(key, value);
  else if (key == "head.heads")
    c.head.heads = parse_u64(key, value);
  else if (key == "head.t_au")
    c.head.t_au = parse_double(key, value);
  else if (key == "head.t_expr")
    c.head.t_expr = parse_double(key, value);
  else if (key == "head.sigma2_va")
    c.head.sigma2_va = parse_double(key, value);
  else if (key == "loss.reweight") {
    if (value == "per_example")
      c.reweight = ReweightMode::PerExample;
    else if (value == "per_task")
      c.reweight = ReweightMode::PerTask;
    else
      throw std::invalid_argument("config: loss.reweight must be per_example or per_task");
  } else if (key == "optimizer.kind") {
    if (value == "adam")
      c.opt.kind = OptimizerKind::Adam;
    else if (value == "sgd")
      c.opt.kind = OptimizerKind::Sgd;
    else
      throw std::invalid_argument("config: optimizer.kind must be adam or sgd");
  } else if (key == "optimizer.lr")
    c.opt.lr = parse_double(key, value);
  else if (key == "optimizer.beta1")
    c.opt.beta1 = parse_double(key, value);
  else if (key == "optimizer.beta2")
    c.opt.beta2 = parse_double(key, value);
  else if (key == "optimizer.eps")
    c.opt.eps = parse_double(key, value);
  else if (key == "train.batch")
    c.batch = parse_u64(key, value);
  else if (key == "train.steps")
    c.steps = parse_u64(key, value);
  else if (key == "train.log_every")
    c.log_every = parse_u64(key, value);
  else if (key == "train.mixup")
    c.mixup_alpha = (value == "off") ? 0.0 : parse_double(key, value);
  else if (key == "train.augment")
    c.augment = parse_on_off(key, value);
  else
    throw std::invalid_argument("config: unknown key '" + key + "'");
}

TrainConfig load_train_config(const std::string& path) {
  TrainConfig c = desk_config();
  for (const auto& [key, value] : parse_kv_file(path)) apply_config_kv(c, key, value);
  c.validate();
  return c;
}

std::string serialize_config(const TrainConfig& c) {
  std::ostringstream os;
  os << "preset = " << c.preset << '\n';
  os << "seed = " << c.seed << '\n';
  os << "encoder.input = " << c.encoder.input_h << 'x' << c.encoder.input_w << 'x'
     << c.encoder.input_c << '\n';
  os << "encoder.d = " << c.encoder.d << '\n';
  os << "encoder.n_x = " << c.encoder.n_x << '\n';
  os << "encoder.heads = " << c.encoder.heads << '\n';
  os << "encoder.kernel = " << c.encoder.kernel << '\n';
  os << "encoder.backbone = " << backbone_str(c.encoder.backbone) << '\n';
  os << "head.n_t = " << c.head.n_t << '\n';
  os << "head.n_d = " << c.head.n_d << '\n';
  os << "head.heads = " << c.head.heads << '\n';
  os << "head.t_au = " << format_double(c.head.t_au) << '\n';
  os << "head.t_expr = " << format_double(c.head.t_expr) << '\n';
  os << "head.sigma2_va = " << format_double(c.head.sigma2_va) << '\n';
  os << "loss.reweight = "
     << (c.reweight == ReweightMode::PerExample ? "per_example" : "per_task") << '\n';
  os << "optimizer.kind = " << (c.opt.kind == OptimizerKind::Adam ? "adam" : "sgd") << '\n';
  os << "optimizer.lr = " << format_double(c.opt.lr) << '\n';
  os << "optimizer.beta1 = " << format_double(c.opt.beta1) << '\n';
  os << "optimizer.beta2 = " << format_double(c.opt.beta2) << '\n';
  os << "optimizer.eps = " << format_double(c.opt.eps) << '\n';
  os << "train.batch = " << c.batch << '\n';
  os << "train.steps = " << c.steps << '\n';
  os << "train.log_every = " << c.log_every << '\n';
  os << "train.mixup = " << (c.mixup_alpha == 0.0 ? std::string("off") : format_double(c.mixup_alpha))
     << '\n';
  os << "train.augment = " << (c.augment ? "on" : "off") << '\n';
  return os.str();
}

}  // namespace mtt
