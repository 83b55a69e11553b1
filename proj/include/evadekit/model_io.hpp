#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "evadekit/model.hpp"

namespace evadekit {

inline constexpr std::uint32_t kModelFormatVersion = 1;

// Binary model file; byte layout in docs/model_format.md.
void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

void write_model(const Model& model, std::ostream& os);
Model read_model(std::istream& is);

}  // namespace evadekit
