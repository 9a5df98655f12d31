#include "ocpi/checkpoint.hpp"

#include <sstream>

#include "ocpi/errors.hpp"
#include "ocpi/io.hpp"

namespace ocpi::nn {

namespace {

constexpr std::uint32_t kVersion = 1;

std::string first_line(const std::string& s) { return s.substr(0, s.find('\n')); }

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  io::BinaryWriter w;
  w.magic("OCWT");
  w.u32(kVersion);
  w.str(ck.header);
  w.u32(static_cast<std::uint32_t>(ck.params.size()));
  for (const auto& p : ck.params) {
    w.str(p.name);
    const auto& s = p.value.shape();
    for (int d : {s.n, s.c, s.h, s.w}) w.u32(static_cast<std::uint32_t>(d));
    for (double v : p.value.data()) w.f32(static_cast<float>(v));
  }
  w.save(path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  io::BinaryReader r(path);
  r.expect_magic("OCWT");
  const auto version = r.u32();
  if (version != kVersion) throw IoError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  ck.header = r.str();
  const auto count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    auto name = r.str();
    Shape s;
    s.n = static_cast<int>(r.u32());
    s.c = static_cast<int>(r.u32());
    s.h = static_cast<int>(r.u32());
    s.w = static_cast<int>(r.u32());
    if (s.size() > (std::size_t{1} << 28)) throw IoError(path.string() + ": implausible tensor size for " + name);
    Tensor t(s);
    for (auto& v : t.data()) v = static_cast<double>(r.f32());
    ck.params.add(std::move(name), std::move(t));
  }
  return ck;
}

void save_unet(const std::filesystem::path& path, const UNet& net, const std::string& extra) {
  Checkpoint ck{net.config().describe() + "\n" + extra, net.params()};
  save_checkpoint(path, ck);
}

UNet load_unet(const std::filesystem::path& path) {
  auto ck = load_checkpoint(path);
  return UNet(UNetConfig::parse(first_line(ck.header)), std::move(ck.params));
}

void save_lossnet(const std::filesystem::path& path, const LossNet& net) {
  if (!net.frozen()) throw StateError("only a frozen loss network can be saved");
  save_checkpoint(path, Checkpoint{net.config().describe() + "\nfrozen=1\n", net.params()});
}

LossNet load_lossnet(const std::filesystem::path& path) {
  auto ck = load_checkpoint(path);
  return LossNet(LossNetConfig::parse(first_line(ck.header)), std::move(ck.params), true);
}

}  // namespace ocpi::nn
