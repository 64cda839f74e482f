#include "vts/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace vts::train {

namespace {

constexpr char kMagic[4] = {'V', 'T', 'S', 'C'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ofstream& o, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  o.write(reinterpret_cast<char*>(b), 4);
}

void write_u64(std::ofstream& o, std::uint64_t v) {
  write_u32(o, static_cast<std::uint32_t>(v));
  write_u32(o, static_cast<std::uint32_t>(v >> 32));
}

void write_doubles(std::ofstream& o, const std::vector<double>& v) {
  for (double x : v) {
    std::uint64_t bits;
    std::memcpy(&bits, &x, 8);
    write_u64(o, bits);
  }
}

std::uint32_t read_u32(std::ifstream& i) {
  unsigned char b[4];
  i.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint64_t read_u64(std::ifstream& i) {
  std::uint64_t lo = read_u32(i);
  std::uint64_t hi = read_u32(i);
  return lo | (hi << 32);
}

void read_doubles(std::ifstream& i, std::vector<double>& v) {
  for (double& x : v) {
    std::uint64_t bits = read_u64(i);
    std::memcpy(&x, &bits, 8);
  }
}

void write_tensor(std::ofstream& o, const Tensor& t) {
  write_u32(o, static_cast<std::uint32_t>(t.shape.size()));
  for (int d : t.shape) write_u32(o, static_cast<std::uint32_t>(d));
  write_doubles(o, t.data);
}

Tensor read_tensor(std::ifstream& i) {
  std::uint32_t nd = read_u32(i);
  std::vector<int> shape(nd);
  for (auto& d : shape) d = static_cast<int>(read_u32(i));
  Tensor t(shape);
  read_doubles(i, t.data);
  return t;
}

}  // namespace

void save_checkpoint(const std::string& path, const VtssiConfig& cfg,
                     const ParamStore& params, std::int64_t global_step, const Adam* opt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
  out.write(kMagic, 4);
  write_u32(out, kVersion);
  write_u64(out, static_cast<std::uint64_t>(global_step));
  std::string cfg_json = cfg.to_json();
  write_u32(out, static_cast<std::uint32_t>(cfg_json.size()));
  out.write(cfg_json.data(), static_cast<std::streamsize>(cfg_json.size()));
  write_u32(out, static_cast<std::uint32_t>(params.count()));
  for (std::size_t i = 0; i < params.count(); ++i) {
    const Param& p = params.at(i);
    write_u32(out, static_cast<std::uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    write_tensor(out, p.value);
  }
  out.put(opt != nullptr ? 1 : 0);
  if (opt != nullptr) {
    auto* m = const_cast<Adam*>(opt);
    write_u64(out, static_cast<std::uint64_t>(m->steps_taken()));
    for (std::size_t i = 0; i < params.count(); ++i) {
      write_tensor(out, m->m()[i]);
      write_tensor(out, m->v()[i]);
    }
  }
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path, Adam* opt) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  std::uint32_t version = read_u32(in);
  if (version != kVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  LoadedCheckpoint ck;
  ck.global_step = static_cast<std::int64_t>(read_u64(in));
  std::uint32_t cfg_len = read_u32(in);
  std::string cfg_json(cfg_len, '\0');
  in.read(cfg_json.data(), cfg_len);
  VtssiConfig cfg = VtssiConfig::from_json(cfg_json);
  ck.model = std::make_unique<model::VtssiModel>(cfg, 0);

  std::uint32_t n = read_u32(in);
  ParamStore& store = ck.model->params();
  if (n != store.count())
    throw std::runtime_error("checkpoint: parameter count mismatch");
  for (std::uint32_t i = 0; i < n; ++i) {
    std::uint32_t name_len = read_u32(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    Tensor t = read_tensor(in);
    Param* p = store.find(name);
    if (p == nullptr) throw std::runtime_error("checkpoint: unknown parameter " + name);
    if (p->value.shape != t.shape)
      throw std::runtime_error("checkpoint: shape mismatch for " + name);
    p->value = std::move(t);
  }
  int has_opt = in.get();
  ck.has_optimizer = has_opt == 1;
  if (ck.has_optimizer && opt != nullptr) {
    *opt = Adam(store, AdamConfig{cfg.trainer.adam_beta1, cfg.trainer.adam_beta2,
                                  cfg.trainer.adam_eps});
    opt->set_steps_taken(static_cast<std::int64_t>(read_u64(in)));
    for (std::uint32_t i = 0; i < n; ++i) {
      opt->m()[i] = read_tensor(in);
      opt->v()[i] = read_tensor(in);
    }
  }
  if (!in) throw std::runtime_error("checkpoint: truncated file " + path);
  return ck;
}

}  // namespace vts::train
