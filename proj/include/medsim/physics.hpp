#ifndef MEDSIM_PHYSICS_HPP_
#define MEDSIM_PHYSICS_HPP_

// Coupling between two misaligned circular coils and the resulting
// resonant-link transfer efficiency.
//
// The mutual inductance uses the inclined-axis filament formula
//
//   M = N1 N2 (mu0 / pi) sqrt(R1 R2) * int_0^pi [cos t - (d/R2) cos p] Psi(k) / V^(3/2) dp
//
// with Psi(k) = (2/k - k) K(k) - (2/k) E(k). K and E come from an
// arithmetic-geometric mean iteration; the integral is a composite
// Gauss-Legendre rule. Coil 1 is the disseminator (MED) side, coil 2 the EV.

#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "medsim/error.hpp"

namespace medsim::physics {

inline constexpr double kFreeSpacePermeability = 4.0e-7 * std::numbers::pi;

struct CoilSpec {
  double radius = 0.3;  // m
  int turns = 10;
  double permeability = kFreeSpacePermeability;  // H/m

  void validate(const std::string& name = "coil") const {
    if (!(radius > 0.0) || !std::isfinite(radius)) {
      throw DomainError(name + ".radius must be > 0");
    }
    if (turns < 1) throw DomainError(name + ".turns must be >= 1");
    if (!(permeability > 0.0)) {
      throw DomainError(name + ".permeability must be > 0");
    }
  }
};

struct MisalignmentState {
  double horizontal_d = 0.0;   // m
  double angular_theta = 0.0;  // rad
  double lateral_c = 0.25;     // m, separation between the coil planes

  void validate() const {
    if (!std::isfinite(horizontal_d)) {
      throw DomainError("horizontal_d must be finite");
    }
    if (!(lateral_c > 0.0) || !std::isfinite(lateral_c)) {
      throw DomainError("lateral_c must be > 0");
    }
    if (!(angular_theta >= 0.0 && angular_theta < std::numbers::pi / 2)) {
      throw DomainError("angular_theta must lie in [0, pi/2)");
    }
  }
};

struct CircuitParams {
  double load_impedance = 10.0;  // ohm
  double parasite_r_med = 0.1;   // ohm
  double parasite_r_ev = 0.1;    // ohm
  double resonant_freq = 2.0 * std::numbers::pi * 85.0e3;  // rad/s

  void validate() const {
    if (!(load_impedance > 0.0) || !(parasite_r_med > 0.0) ||
        !(parasite_r_ev > 0.0) || !(resonant_freq > 0.0)) {
      throw DomainError("circuit parameters must all be > 0");
    }
  }

  // Supremum of the efficiency as the coupling grows without bound.
  double efficiency_ceiling() const {
    return load_impedance / (parasite_r_med + load_impedance);
  }
};

struct QuadratureConfig {
  // Rounded up to a whole number of 16-point panels.
  int nodes = 128;

  void validate() const {
    if (nodes < 16) throw DomainError("quadrature nodes must be >= 16");
  }
};

struct EllipticPair {
  double K;
  double E;
};

namespace detail {

struct AgmResult {
  double K;
  // sum_{n>=1} 2^(n-1) c_n^2; E = K (1 - k^2/2 - tail).
  double tail;
};

inline AgmResult agm(double k) {
  const double kp = std::sqrt((1.0 - k) * (1.0 + k));
  double a = 1.0;
  double b = kp;
  // c_1 = (1 - k')/2 written without cancellation.
  double c = k * k / (2.0 * (1.0 + kp));
  double tail = 0.0;
  double weight = 1.0;
  for (int n = 0; n < 64; ++n) {
    tail += weight * c * c;
    // c_n = (a_{n-1} - b_{n-1}) / 2, so a has converged once c is negligible.
    if (c <= 1e-17 * a) break;
    const double a_next = 0.5 * (a + b);
    const double b_next = std::sqrt(a * b);
    // c_{n+1} = c_n^2 / (4 a_{n+1})
    c = c * c / (2.0 * (a_next + b_next));
    a = a_next;
    b = b_next;
    weight *= 2.0;
  }
  return {std::numbers::pi / (2.0 * a), tail};
}

inline constexpr int kPanelOrder = 16;

struct GaussRule {
  std::array<double, kPanelOrder> x{};
  std::array<double, kPanelOrder> w{};
};

// 16-point Gauss-Legendre nodes on [-1, 1] via Newton iteration on P_n.
inline GaussRule make_gauss_rule() {
  GaussRule rule;
  constexpr int n = kPanelOrder;
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0;
      double p1 = 0.0;
      for (int j = 1; j <= n; ++j) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j - 1.0) * z * p1 - (j - 1.0) * p2) / j;
      }
      dp = n * (z * p0 - p1) / (z * z - 1.0);
      const double dz = p0 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    const double w = 2.0 / ((1.0 - z * z) * dp * dp);
    rule.x[i] = -z;
    rule.x[n - 1 - i] = z;
    rule.w[i] = w;
    rule.w[n - 1 - i] = w;
  }
  return rule;
}

inline const GaussRule& gauss_rule() {
  static const GaussRule rule = make_gauss_rule();
  return rule;
}

}  // namespace detail

// Complete elliptic integrals of the first and second kind, modulus k.
inline EllipticPair complete_elliptic(double k) {
  if (!(k >= 0.0 && k < 1.0)) {
    throw DomainError("elliptic modulus must lie in [0, 1)");
  }
  const auto r = detail::agm(k);
  return {r.K, r.K * (1.0 - 0.5 * k * k - r.tail)};
}

// Psi(k) = (2/k - k) K(k) - (2/k) E(k), evaluated as (2K/k) * tail to avoid
// the catastrophic cancellation of the textbook form at small k.
inline double psi(double k) {
  if (!(k > 0.0)) throw DomainError("psi requires k > 0");
  if (!(k < 1.0)) throw DomainError("psi requires k < 1");
  const auto r = detail::agm(k);
  return 2.0 * r.K * r.tail / k;
}

inline double mutual_inductance(const CoilSpec& med, const CoilSpec& ev,
                                const MisalignmentState& mis,
                                const QuadratureConfig& quad = {}) {
  med.validate("med_coil");
  ev.validate("ev_coil");
  mis.validate();
  quad.validate();

  const double alpha = ev.radius / med.radius;
  const double beta = mis.lateral_c / med.radius;
  const double d_rel = mis.horizontal_d / ev.radius;
  const double sin_t = std::sin(mis.angular_theta);
  const double cos_t = std::cos(mis.angular_theta);

  const auto& rule = detail::gauss_rule();
  const int panels = (quad.nodes + detail::kPanelOrder - 1) / detail::kPanelOrder;
  const double h = std::numbers::pi / panels;

  double integral = 0.0;
  for (int p = 0; p < panels; ++p) {
    const double mid = (p + 0.5) * h;
    double panel_sum = 0.0;
    for (int i = 0; i < detail::kPanelOrder; ++i) {
      const double phi = mid + 0.5 * h * rule.x[i];
      const double cos_p = std::cos(phi);
      const double v2 = 1.0 - cos_p * cos_p * sin_t * sin_t -
                        2.0 * d_rel * cos_p * cos_t + d_rel * d_rel;
      if (!(v2 > 0.0)) {
        throw SingularGeometryError("V <= 0 at a quadrature node (coils intersect)");
      }
      const double v = std::sqrt(v2);
      const double xi = beta - alpha * cos_p * sin_t;
      const double k2 = 4.0 * alpha * v / ((1.0 + alpha * v) * (1.0 + alpha * v) + xi * xi);
      if (!(k2 > 0.0 && k2 < 1.0)) {
        throw SingularGeometryError("modulus outside (0, 1) at a quadrature node (coils intersect)");
      }
      const double k = std::sqrt(k2);
      panel_sum += rule.w[i] * (cos_t - d_rel * cos_p) * psi(k) / (v * std::sqrt(v));
    }
    integral += 0.5 * h * panel_sum;
  }

  const double single_turn = med.permeability / std::numbers::pi *
                             std::sqrt(med.radius * ev.radius) * integral;
  return static_cast<double>(med.turns) * static_cast<double>(ev.turns) * single_turn;
}

inline double transfer_efficiency(double m, const CircuitParams& circuit) {
  circuit.validate();
  if (!(m >= 0.0)) throw DomainError("mutual inductance must be >= 0");
  if (m == 0.0) return 0.0;
  const double coupling = circuit.resonant_freq * m;
  const double loss = circuit.parasite_r_med *
                      (circuit.parasite_r_ev + circuit.load_impedance) /
                      (coupling * coupling);
  return circuit.load_impedance /
         ((circuit.parasite_r_med + circuit.load_impedance) * (1.0 + loss));
}

}  // namespace medsim::physics

#endif  // MEDSIM_PHYSICS_HPP_
