#pragma once

#include <array>
#include <cstddef>
#include <cstdint>

namespace mvgw::viz::detail {

constexpr std::size_t kGlyphWidth = 6;
constexpr std::size_t kGlyphHeight = 11;

extern const std::array<std::array<std::uint8_t, kGlyphHeight>, 95> kGlyphs;

}  // namespace mvgw::viz::detail
