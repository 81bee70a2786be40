#include "mixedseg/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <json.hpp>
#include <map>

#include "mixedseg/json_config.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian; big-endian hosts need swaps");

namespace mixedseg {

namespace {

void write_bytes(std::ostream& os, const void* p, std::size_t n) {
  os.write(reinterpret_cast<const char*>(p), std::streamsize(n));
}

template <typename T>
void write_pod(std::ostream& os, T v) {
  write_bytes(os, &v, sizeof(T));
}

void write_string(std::ostream& os, const std::string& s) {
  write_pod<std::uint32_t>(os, std::uint32_t(s.size()));
  write_bytes(os, s.data(), s.size());
}

void read_bytes(std::istream& is, void* p, std::size_t n, const char* what) {
  is.read(reinterpret_cast<char*>(p), std::streamsize(n));
  if (!is) throw DataError(std::string("truncated checkpoint while reading ") + what);
}

template <typename T>
T read_pod(std::istream& is, const char* what) {
  T v;
  read_bytes(is, &v, sizeof(T), what);
  return v;
}

std::string read_string(std::istream& is, const char* what) {
  const auto len = read_pod<std::uint32_t>(is, what);
  std::string s(len, '\0');
  read_bytes(is, s.data(), len, what);
  return s;
}

void write_entry(std::ostream& os, const std::string& name, const Tensor& t) {
  write_string(os, name);
  write_pod<std::uint32_t>(os, std::uint32_t(t.ndim()));
  for (std::size_t d : t.shape()) write_pod<std::uint64_t>(os, d);
  for (Real v : t.values()) write_pod<double>(os, double(v));
}

struct Entry {
  Shape dims;
  std::vector<double> values;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, Model& model,
                     const Optimizer* optimizer) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  os.write("MSUP", 4);
  write_pod<std::uint32_t>(os, 1);

  nlohmann::json config_json = model.config;
  write_string(os, config_json.dump());

  nlohmann::json meta;
  if (optimizer) {
    meta["iterations"] = optimizer->iterations();
    meta["optimizer"] = optimizer->config();
  } else {
    meta["iterations"] = 0;
    meta["optimizer"] = nullptr;
  }
  write_string(os, meta.dump());

  const auto params = model.named_parameters();
  const auto stats = model.named_stats();
  std::uint32_t count = std::uint32_t(params.size() + stats.size());
  if (optimizer) count += std::uint32_t(params.size());
  write_pod<std::uint32_t>(os, count);

  for (const auto& [name, t] : params) write_entry(os, "param/" + name, t);
  for (const auto& [name, t] : stats) write_entry(os, "stats/" + name, t);
  if (optimizer) {
    const auto& vel = const_cast<Optimizer*>(optimizer)->velocity();
    for (std::size_t i = 0; i < params.size(); ++i) {
      write_entry(os, "opt/velocity/" + params[i].first, vel[i]);
    }
  }
  if (!os) throw DataError("failed writing " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  char magic[4];
  read_bytes(is, magic, 4, "magic");
  if (std::string(magic, 4) != "MSUP") {
    throw DataError(path.string() + " is not an MSUP checkpoint");
  }
  const auto version = read_pod<std::uint32_t>(is, "version");
  if (version != 1) throw DataError("unsupported checkpoint version");

  ModelConfig config;
  nlohmann::json meta;
  try {
    config = nlohmann::json::parse(read_string(is, "model config")).get<ModelConfig>();
    meta = nlohmann::json::parse(read_string(is, "meta"));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("corrupt checkpoint header: " + std::string(e.what()));
  }

  std::map<std::string, Entry> entries;
  const auto count = read_pod<std::uint32_t>(is, "entry count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = read_string(is, "entry name");
    const auto ndim = read_pod<std::uint32_t>(is, "ndim");
    Entry e;
    e.dims.resize(ndim);
    for (auto& d : e.dims) d = std::size_t(read_pod<std::uint64_t>(is, "dims"));
    e.values.resize(shape_numel(e.dims));
    for (double& v : e.values) v = read_pod<double>(is, "values");
    entries.emplace(name, std::move(e));
  }

  LoadedCheckpoint out;
  out.model = build_model(config, 0);
  out.iterations = meta.value("iterations", std::uint64_t(0));

  auto fill = [&entries](const std::string& name, Tensor t) {
    auto it = entries.find(name);
    if (it == entries.end()) throw DataError("checkpoint is missing entry " + name);
    if (it->second.dims != t.shape()) {
      throw DataError("checkpoint entry " + name + " has shape " +
                      shape_str(it->second.dims) + ", expected " + shape_str(t.shape()));
    }
    for (std::size_t i = 0; i < t.numel(); ++i) t.values()[i] = Real(it->second.values[i]);
  };
  for (auto& [name, t] : out.model.named_parameters()) fill("param/" + name, t);
  for (auto& [name, t] : out.model.named_stats()) fill("stats/" + name, t);

  if (!meta.at("optimizer").is_null()) {
    out.has_optimizer = true;
    out.optimizer_config = meta.at("optimizer").get<OptimizerConfig>();
    for (auto& [name, t] : out.model.named_parameters()) {
      auto it = entries.find("opt/velocity/" + name);
      if (it == entries.end()) throw DataError("checkpoint is missing velocity for " + name);
      out.velocity.emplace_back(it->second.values.begin(), it->second.values.end());
    }
  }
  return out;
}

Optimizer make_optimizer(const LoadedCheckpoint& ckpt, Model& model) {
  Optimizer opt(model.parameters(), ckpt.has_optimizer ? ckpt.optimizer_config
                                                       : OptimizerConfig{});
  if (ckpt.has_optimizer) {
    auto& vel = opt.velocity();
    if (vel.size() != ckpt.velocity.size()) {
      throw DataError("velocity entries do not match the parameter list");
    }
    for (std::size_t i = 0; i < vel.size(); ++i) {
      if (vel[i].numel() != ckpt.velocity[i].size()) {
        throw DataError("velocity shape mismatch at parameter " + std::to_string(i));
      }
      for (std::size_t j = 0; j < ckpt.velocity[i].size(); ++j) {
        vel[i].values()[j] = Real(ckpt.velocity[i][j]);
      }
    }
    opt.set_iterations(ckpt.iterations);
  }
  return opt;
}

}  // namespace mixedseg
