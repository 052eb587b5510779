#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace phgr::verify {

struct PropertyResult {
  std::string name;
  double max_err = 0.0;
  double tol = 0.0;
  bool pass = true;
};

// Randomized property battery over the ball operations at curvature c,
// dimensions {2, 8, 64}, point norms in [1e-3, 0.98]/sqrt(c). `samples` is the
// number of random pairs per dimension. Checks, per pair:
//   - projected inner equals the product of origin distances times cos(angle)
//   - geodesic inner <= projected inner, with equality on collinear pairs
//   - pair distance dominates the tangent-difference norm
//   - exp and log maps invert each other at random base points
//   - Mobius left identity and left cancellation
std::vector<PropertyResult> geometry_battery(int samples, double c, std::uint64_t seed);

}  // namespace phgr::verify
