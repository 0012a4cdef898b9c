#include "ipgdn/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>

namespace ipgdn {

namespace {

constexpr char kMagic[8] = {'I', 'P', 'G', 'D', 'N', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint serialization assumes a little-endian host");

template <typename T>
void write_pod(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T read_pod(std::ifstream& in, const std::string& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw IoError("truncated checkpoint: " + path);
  return v;
}

void write_string(std::ofstream& out, const std::string& s) {
  write_pod<std::uint64_t>(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::ifstream& in, const std::string& path) {
  const auto len = read_pod<std::uint64_t>(in, path);
  std::string s(len, '\0');
  in.read(s.data(), static_cast<std::streamsize>(len));
  if (!in) throw IoError("truncated checkpoint: " + path);
  return s;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg,
                     const IpgdnModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(kMagic, sizeof kMagic);
  write_pod(out, kVersion);
  write_string(out, cfg.to_json_text());
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(model.input_dim));
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(model.num_classes));

  const auto named = model.named_parameters();
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(named.size()));
  for (const auto& [name, t] : named) {
    write_string(out, name);
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(t.rows()));
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(t.cols()));
    out.write(reinterpret_cast<const char*>(t.value().data()),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!out) throw IoError("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[sizeof kMagic];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw ValidationError("not a checkpoint file: " + path.string());
  }
  const auto version = read_pod<std::uint32_t>(in, path.string());
  if (version != kVersion) {
    throw ValidationError("unsupported checkpoint version " + std::to_string(version));
  }

  Checkpoint ckpt;
  ckpt.config = ModelConfig::from_json_text(read_string(in, path.string()));
  const int input_dim = static_cast<int>(read_pod<std::uint32_t>(in, path.string()));
  const int num_classes = static_cast<int>(read_pod<std::uint32_t>(in, path.string()));

  Rng rng(ckpt.config.seed);
  ckpt.model = IpgdnModel::init(input_dim, num_classes, ckpt.config, rng);

  std::map<std::string, ad::Tensor> by_name;
  for (const auto& [name, t] : ckpt.model.named_parameters()) by_name.emplace(name, t);

  const auto count = read_pod<std::uint32_t>(in, path.string());
  if (count != by_name.size()) {
    throw ValidationError("checkpoint holds " + std::to_string(count) +
                          " parameters but the config implies " + std::to_string(by_name.size()));
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = read_string(in, path.string());
    const int rows = static_cast<int>(read_pod<std::uint32_t>(in, path.string()));
    const int cols = static_cast<int>(read_pod<std::uint32_t>(in, path.string()));
    auto it = by_name.find(name);
    if (it == by_name.end()) throw ValidationError("unexpected parameter '" + name + "' in checkpoint");
    ad::Tensor t = it->second;
    if (t.rows() != rows || t.cols() != cols) {
      throw ValidationError("parameter '" + name + "' has shape " + std::to_string(rows) + "x" +
                            std::to_string(cols) + " in the checkpoint but " +
                            ad::shape_string(t) + " in the model");
    }
    in.read(reinterpret_cast<char*>(t.mutable_value().data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!in) throw IoError("truncated checkpoint: " + path.string());
  }
  return ckpt;
}

}  // namespace ipgdn
