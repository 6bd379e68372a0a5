#include <bit>
#include <cstring>
#include <fstream>

#include "ream/errors.hpp"
#include "ream/training.hpp"

namespace ream::model {
namespace {

constexpr char kMagic[8] = {'R', 'E', 'A', 'M', 'C', 'K', 'P', 'T'};

void put_u32(std::ostream& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::ostream& out, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_le(std::istream& in, int bytes) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), bytes)) throw ParseError("truncated checkpoint");
  std::uint64_t v = 0;
  for (int i = bytes - 1; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

double get_f64(std::istream& in) { return std::bit_cast<double>(get_le(in, 8)); }

std::filesystem::path sidecar(const std::filesystem::path& p) {
  return std::filesystem::path(p.string() + ".json");
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const ModelParams& p = ckpt.params;
  p.validate();
  {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(kMagic, 8);
    put_u32(out, kCheckpointVersion);
    put_u32(out, static_cast<std::uint32_t>(p.input_dim()));
    put_u32(out, static_cast<std::uint32_t>(p.hidden_dim()));
    for (Eigen::Index i = 0; i < p.w_gat.rows(); ++i)
      for (Eigen::Index j = 0; j < p.w_gat.cols(); ++j) put_f64(out, p.w_gat(i, j));
    for (Eigen::Index i = 0; i < p.a_attn.size(); ++i) put_f64(out, p.a_attn(i));
    for (Eigen::Index i = 0; i < p.w_head.size(); ++i) put_f64(out, p.w_head(i));
    put_f64(out, p.b_head);
  }
  std::ofstream meta(sidecar(path), std::ios::binary);
  if (!meta) throw std::runtime_error("cannot write " + sidecar(path).string());
  meta << ckpt.meta.dump(2) << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open checkpoint " + path.string());
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
    throw ParseError("not a checkpoint file: " + path.string());
  const auto version = static_cast<std::uint32_t>(get_le(in, 4));
  if (version != kCheckpointVersion)
    throw ParseError("unsupported checkpoint version " + std::to_string(version));
  const auto d = static_cast<std::size_t>(get_le(in, 4));
  const auto h = static_cast<std::size_t>(get_le(in, 4));
  if (d == 0 || h == 0) throw ParseError("checkpoint declares a zero dimension");

  Checkpoint ckpt;
  ckpt.params = ModelParams::zeros(d, h);
  auto& p = ckpt.params;
  for (Eigen::Index i = 0; i < p.w_gat.rows(); ++i)
    for (Eigen::Index j = 0; j < p.w_gat.cols(); ++j) p.w_gat(i, j) = get_f64(in);
  for (Eigen::Index i = 0; i < p.a_attn.size(); ++i) p.a_attn(i) = get_f64(in);
  for (Eigen::Index i = 0; i < p.w_head.size(); ++i) p.w_head(i) = get_f64(in);
  p.b_head = get_f64(in);
  if (in.peek() != std::char_traits<char>::eof()) throw ParseError("trailing bytes in checkpoint");
  p.validate();

  std::ifstream meta(sidecar(path));
  if (meta) {
    try {
      ckpt.meta = nlohmann::json::parse(meta);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("bad checkpoint sidecar: ") + e.what());
    }
  } else {
    ckpt.meta = nlohmann::json::object();
  }
  return ckpt;
}

}  // namespace ream::model
