#pragma once

#include <filesystem>
#include <string>

#include "ocpi/networks.hpp"

namespace ocpi::nn {

// Weight file: "OCWT", version, text header, then (name, shape, f32 data)
// per parameter.
struct Checkpoint {
  std::string header;  // network description and free-form key=value lines
  ParamSet params;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

void save_unet(const std::filesystem::path& path, const UNet& net, const std::string& extra = {});
UNet load_unet(const std::filesystem::path& path);
void save_lossnet(const std::filesystem::path& path, const LossNet& net);
LossNet load_lossnet(const std::filesystem::path& path);

}  // namespace ocpi::nn
