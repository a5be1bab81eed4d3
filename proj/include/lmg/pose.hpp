#pragma once

#include <array>
#include <cstdint>
#include <string>

namespace lmg {

enum class Heading : std::uint8_t { North = 0, East = 1, South = 2, West = 3 };

inline constexpr Heading turn_right(Heading h) {
  return static_cast<Heading>((static_cast<int>(h) + 1) % 4);
}

inline constexpr Heading turn_left(Heading h) {
  return static_cast<Heading>((static_cast<int>(h) + 3) % 4);
}

inline const char* heading_name(Heading h) {
  static constexpr std::array<const char*, 4> names{"N", "E", "S", "W"};
  return names[static_cast<int>(h)];
}

/// Grid position plus facing. Orientation drives simulation only and is
/// never part of a score.
struct Pose {
  int x = 0;
  int y = 0;
  int z = 0;
  Heading heading = Heading::North;

  friend bool operator==(const Pose&, const Pose&) = default;
};

using GridPoint = std::array<int, 3>;

}  // namespace lmg
