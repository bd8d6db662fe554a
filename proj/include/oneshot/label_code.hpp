#pragma once

#include <cmath>

namespace oneshot {

// A point in the plane that encodes a vocabulary index by its angle.
struct LabelCode {
  double x = 0.0;
  double y = 0.0;

  double magnitude() const { return std::hypot(x, y); }

  friend bool operator==(const LabelCode&, const LabelCode&) = default;
};

}  // namespace oneshot
