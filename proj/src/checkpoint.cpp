#include "mtt/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <vector>

#include "mtt/rng.hpp"

namespace mtt {

namespace {

constexpr char kMagic[8] = {'M', 'T', 'T', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ofstream& f, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  f.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ofstream& f, std::uint64_t v) {
  put_u32(f, static_cast<std::uint32_t>(v));
  put_u32(f, static_cast<std::uint32_t>(v >> 32));
}

std::uint32_t get_u32(std::ifstream& f) {
  unsigned char b[4];
  f.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint64_t get_u64(std::ifstream& f) {
  std::uint64_t lo = get_u32(f);
  std::uint64_t hi = get_u32(f);
  return lo | (hi << 32);
}

}  // namespace

void save_checkpoint(const std::string& path, const Model& model, const TrainConfig& config) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write checkpoint: " + path);
  f.write(kMagic, 8);
  put_u32(f, kVersion);
  const std::string cfg = serialize_config(config);
  put_u64(f, cfg.size());
  f.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));

  std::size_t count = 0;
  visit_params(model, [&count](const std::string&, const Tensor&) { ++count; });
  put_u64(f, count);
  visit_params(model, [&f](const std::string& name, const Tensor& t) {
    put_u32(f, static_cast<std::uint32_t>(name.size()));
    f.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(f, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put_u64(f, d);
    for (double v : t.data()) {
      float x = static_cast<float>(v);
      std::uint32_t bits;
      std::memcpy(&bits, &x, 4);
      put_u32(f, bits);
    }
  });
  if (!f) throw std::runtime_error("failed writing checkpoint: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("not a checkpoint file: " + path);
  const std::uint32_t version = get_u32(f);
  if (version != kVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  const std::uint64_t cfg_len = get_u64(f);
  std::string cfg_text(cfg_len, '\0');
  f.read(cfg_text.data(), static_cast<std::streamsize>(cfg_len));

  LoadedCheckpoint out;
  out.config = desk_config();
  for (const auto& [key, value] : parse_kv_text(cfg_text))
    apply_config_kv(out.config, key, value);
  out.config.validate();

  // Materialize the parameter structure, then overwrite every tensor.
  Rng rng(0);
  out.model = init_model(out.config.encoder, out.config.head, rng);

  std::map<std::string, Tensor*> by_name;
  visit_params(out.model,
               [&by_name](const std::string& name, Tensor& t) { by_name[name] = &t; });

  const std::uint64_t count = get_u64(f);
  if (count != by_name.size())
    throw std::runtime_error("checkpoint has " + std::to_string(count) +
                             " parameters, model needs " + std::to_string(by_name.size()));
  std::size_t loaded = 0;
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = get_u32(f);
    std::string name(name_len, '\0');
    f.read(name.data(), name_len);
    const std::uint32_t rank = get_u32(f);
    Shape shape(rank);
    for (std::uint32_t k = 0; k < rank; ++k) shape[k] = get_u64(f);
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw std::runtime_error("checkpoint parameter '" + name + "' unknown to this model");
    if (it->second->shape() != shape)
      throw std::runtime_error("checkpoint parameter '" + name + "' has shape " +
                               shape_str(shape) + ", model expects " +
                               shape_str(it->second->shape()));
    std::vector<double>& dst = it->second->mutable_data();
    for (double& v : dst) {
      std::uint32_t bits = get_u32(f);
      float x;
      std::memcpy(&x, &bits, 4);
      v = x;
    }
    ++loaded;
  }
  if (!f) throw std::runtime_error("truncated checkpoint: " + path);
  if (loaded != by_name.size())
    throw std::runtime_error("checkpoint is missing parameters");
  return out;
}

}  // namespace mtt
