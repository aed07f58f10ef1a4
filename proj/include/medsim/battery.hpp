#ifndef MEDSIM_BATTERY_HPP_
#define MEDSIM_BATTERY_HPP_

// Tractive power and battery bookkeeping for EVs and the MED dissemination pack.

#include <algorithm>
#include <cmath>

#include "medsim/error.hpp"

namespace medsim::battery {

struct VehicleBodyParams {
  double mass = 1500.0;             // kg
  double rolling_coeff = 0.01;      // C_RR
  double drag_coeff = 0.3;          // C_D
  double frontal_area = 2.2;        // m^2
  double rotate_compensation = 0.0; // rotating-mass factor applied to m dv/dt

  void validate() const {
    if (!(mass > 0.0)) throw DomainError("body.mass must be > 0");
    if (!(frontal_area > 0.0)) throw DomainError("body.frontal_area must be > 0");
    if (rolling_coeff < 0.0 || drag_coeff < 0.0 || rotate_compensation < 0.0) {
      throw DomainError("body coefficients must be >= 0");
    }
  }
};

struct AmbientParams {
  double air_density = 1.2;  // kg/m^3
  double gravity = 9.81;     // m/s^2
  double slope = 0.0;        // rad

  void validate() const {
    if (!(air_density > 0.0)) throw DomainError("ambient.air_density must be > 0");
    if (!(gravity > 0.0)) throw DomainError("ambient.gravity must be > 0");
  }
};

struct BatteryState {
  double capacity = 0.0;  // J
  double charge = 0.0;    // J
  bool depleted = false;

  double soc() const { return capacity > 0.0 ? charge / capacity : 0.0; }

  static BatteryState from_soc(double capacity, double soc) {
    return {capacity, std::clamp(soc, 0.0, 1.0) * capacity, false};
  }
};

// Raw single-interval tractive power, signed. Positive when the drivetrain
// has to supply energy.
inline double tractive_power_signed(double v_prev, double v_curr, double t_inc,
                                    const VehicleBodyParams& body,
                                    const AmbientParams& ambient) {
  if (!(t_inc > 0.0)) throw DomainError("t_inc must be > 0");
  const double v_mean = 0.5 * (v_prev + v_curr);
  const double mg = body.mass * ambient.gravity;
  const double force = mg * body.rolling_coeff +
                       0.5 * ambient.air_density * body.drag_coeff *
                           body.frontal_area * v_mean * v_mean +
                       body.mass * body.rotate_compensation * (v_curr - v_prev) / t_inc +
                       mg * std::sin(ambient.slope);
  return force * v_mean;
}

// Tractive power with negative values clamped to zero (no regeneration).
inline double tractive_power(double v_prev, double v_curr, double t_inc,
                             const VehicleBodyParams& body,
                             const AmbientParams& ambient) {
  if (!(v_prev >= 0.0) || !(v_curr >= 0.0)) throw DomainError("speeds must be >= 0");
  return std::max(0.0, tractive_power_signed(v_prev, v_curr, t_inc, body, ambient));
}

// Drain power * t_inc joules, saturating at empty.
inline BatteryState consume(BatteryState b, double power, double t_inc) {
  if (!(t_inc > 0.0)) throw DomainError("t_inc must be > 0");
  if (!(power >= 0.0)) throw DomainError("power must be >= 0");
  if (power == 0.0) return b;
  b.charge -= power * t_inc;
  if (b.charge <= 0.0) {
    b.charge = 0.0;
    b.depleted = true;
  }
  return b;
}

// Credit eta * delivered_power * t_inc joules, saturating at capacity.
inline BatteryState charge(BatteryState b, double delivered_power, double eta, double t_inc) {
  if (!(eta >= 0.0 && eta < 1.0)) throw DomainError("eta must lie in [0, 1)");
  if (!(delivered_power >= 0.0)) throw DomainError("delivered power must be >= 0");
  if (!(t_inc > 0.0)) throw DomainError("t_inc must be > 0");
  b.charge = std::min(b.capacity, b.charge + eta * delivered_power * t_inc);
  return b;
}

}  // namespace medsim::battery

#endif  // MEDSIM_BATTERY_HPP_
