//! Combined-slip tire force model.
//!
//! The normalized resultant shear saturates exponentially in the combined
//! slip `phi`; longitudinal and lateral forces are projections of that shear
//! onto the slip direction. A lateral post-peak decay gives `|Fy|(alpha)` a
//! unique interior maximum, which is what separates the rising and declining
//! operating regions of the axle curves.
//!
//! Sign conventions: positive slip angle produces negative lateral force,
//! positive slip ratio produces positive (traction) longitudinal force.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::golden_max;
use crate::vehicle::{ChassisState, VehicleParams};

/// Shape and stiffness parameters of one axle's tire curve.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TireParams {
    /// Longitudinal stiffness, N per unit slip ratio.
    pub kx: f64,
    /// Lateral (cornering) stiffness, N/rad.
    pub ky: f64,
    /// Curvature factor of the shear transition region.
    pub curvature: f64,
    /// Direction factor weighting longitudinal vs lateral slip.
    pub lambda_d: f64,
    /// Multiplier on the road friction coefficient, longitudinal.
    pub mu_x_scale: f64,
    /// Multiplier on the road friction coefficient, lateral.
    pub mu_y_scale: f64,
    /// Post-peak lateral decay rate (dimensionless, >= 0).
    pub decay: f64,
    /// Combined slip at which the post-peak decay begins.
    pub decay_onset: f64,
    /// Softening width of the decay onset (combined-slip units).
    pub decay_width: f64,
    /// Asymptotic depth of the decay exponent; exp(-decay * decay_depth) is
    /// the residual force fraction retained in deep slides.
    pub decay_depth: f64,
    /// Combined-slip scale over which the decay approaches its depth.
    pub decay_halfwidth: f64,
}

impl Default for TireParams {
    fn default() -> Self {
        TireParams {
            kx: 1.2e5,
            ky: 1.6e5,
            curvature: 0.1,
            lambda_d: 1.0,
            mu_x_scale: 1.0,
            mu_y_scale: 1.0,
            decay: 0.15,
            decay_onset: 2.6,
            decay_width: 0.5,
            decay_depth: 0.7,
            decay_halfwidth: 2.0,
        }
    }
}

impl TireParams {
    pub fn validate(&self) -> Result<()> {
        if self.kx <= 0.0 || self.ky <= 0.0 {
            return Err(Error::domain("tire stiffnesses must be positive"));
        }
        if self.lambda_d <= 0.0 {
            return Err(Error::domain("direction factor must be positive"));
        }
        if self.mu_x_scale <= 0.0
            || self.mu_x_scale > 1.2
            || self.mu_y_scale <= 0.0
            || self.mu_y_scale > 1.2
        {
            return Err(Error::domain("friction scales must lie in (0, 1.2]"));
        }
        if self.curvature < 0.0 || self.decay < 0.0 {
            return Err(Error::domain("curvature and decay must be nonnegative"));
        }
        if self.decay_onset <= 0.0
            || self.decay_width <= 0.0
            || self.decay_depth <= 0.0
            || self.decay_halfwidth <= 0.0
        {
            return Err(Error::domain("decay shape parameters must be positive"));
        }
        Ok(())
    }
}

/// Instantaneous slip state of one tire.
#[derive(Clone, Copy, Debug)]
pub struct TireState {
    /// Slip angle, rad.
    pub slip_angle: f64,
    /// Longitudinal slip ratio.
    pub slip_ratio: f64,
    /// Vertical load, N.
    pub vertical_load: f64,
    /// Road friction coefficient.
    pub road_mu: f64,
}

impl TireState {
    pub fn pure_lateral(slip_angle: f64, vertical_load: f64, road_mu: f64) -> Self {
        TireState {
            slip_angle,
            slip_ratio: 0.0,
            vertical_load,
            road_mu,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.vertical_load <= 0.0 {
            return Err(Error::domain("vertical load must be positive"));
        }
        if self.road_mu <= 0.0 || self.road_mu > 1.2 {
            return Err(Error::domain("road friction must lie in (0, 1.2]"));
        }
        if self.slip_angle.abs() >= std::f64::consts::FRAC_PI_2 {
            return Err(Error::domain("slip angle magnitude must be below pi/2"));
        }
        if !self.slip_ratio.is_finite() {
            return Err(Error::domain("slip ratio must be finite"));
        }
        Ok(())
    }
}

/// Force output of the combined-slip evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TireForces {
    pub fx: f64,
    pub fy: f64,
    /// Normalized resultant shear in [0, 1).
    pub normalized_shear: f64,
}

/// Normalized resultant shear as a function of combined slip.
///
/// Strictly increasing from 0 with limit 1.
pub fn normalized_shear(phi: f64, curvature: f64) -> Result<f64> {
    if phi < 0.0 {
        return Err(Error::domain("combined slip must be nonnegative"));
    }
    let e = curvature;
    let exponent = phi + e * phi * phi + (e * e + 1.0 / 12.0) * phi.powi(3);
    // Large slips round 1 - exp(-x) up to 1.0; keep the open upper bound.
    Ok((-(-exponent).exp_m1()).min(1.0 - f64::EPSILON / 2.0))
}

/// Post-peak lateral decay factor: 1 below the onset, strictly decreasing
/// beyond it, approaching the residual fraction exp(-decay * decay_depth)
/// in deep slides. The quadratic softening keeps the force peak C1.
fn lateral_decay(phi: f64, params: &TireParams) -> f64 {
    let x = phi - params.decay_onset;
    if x <= 0.0 {
        1.0
    } else {
        let q = x * x / (x + params.decay_width);
        let exponent = params.decay_depth * q / (q + params.decay_halfwidth);
        (-params.decay * exponent).exp()
    }
}

/// Combined-slip force evaluation.
pub fn combined_forces(state: &TireState, params: &TireParams) -> Result<TireForces> {
    state.validate()?;
    let mu_x = params.mu_x_scale * state.road_mu;
    let mu_y = params.mu_y_scale * state.road_mu;
    let fz = state.vertical_load;
    let phi_x = params.kx * state.slip_ratio / (mu_x * fz);
    let phi_y = params.ky * state.slip_angle.tan() / (mu_y * fz);
    let phi = (params.lambda_d * phi_x).hypot(phi_y);
    if phi == 0.0 {
        return Ok(TireForces {
            fx: 0.0,
            fy: 0.0,
            normalized_shear: 0.0,
        });
    }
    let shear = normalized_shear(phi, params.curvature)?;
    let fx = mu_x * fz * shear * (params.lambda_d * phi_x) / phi;
    let fy = -mu_y * fz * shear * lateral_decay(phi, params) * phi_y / phi;
    Ok(TireForces {
        fx,
        fy,
        normalized_shear: shear,
    })
}

/// Lateral force at zero slip ratio.
pub fn lateral_force(alpha: f64, fz: f64, mu: f64, params: &TireParams) -> Result<f64> {
    combined_forces(&TireState::pure_lateral(alpha, fz, mu), params).map(|f| f.fy)
}

/// Front and rear slip angles from the chassis state and steering angle.
pub fn slip_angles(
    chassis: &ChassisState,
    delta: f64,
    params: &VehicleParams,
) -> Result<(f64, f64)> {
    if chassis.vx <= crate::vehicle::VX_FLOOR {
        return Err(Error::domain(format!(
            "longitudinal speed {} below kinematic floor",
            chassis.vx
        )));
    }
    let alpha_f = chassis.beta + params.lf * chassis.r / chassis.vx - delta;
    let alpha_r = chassis.beta - params.lr * chassis.r / chassis.vx;
    Ok((alpha_f, alpha_r))
}

/// Slip angle at which the pure-lateral force magnitude peaks.
///
/// Located by golden-section search to 1e-5 rad.
pub fn saturation_angle(mu: f64, fz: f64, params: &TireParams) -> Result<f64> {
    if mu <= 0.0 || mu > 1.2 {
        return Err(Error::domain("road friction must lie in (0, 1.2]"));
    }
    if fz <= 0.0 {
        return Err(Error::domain("vertical load must be positive"));
    }
    let objective = |alpha: f64| {
        lateral_force(alpha, fz, mu, params)
            .map(f64::abs)
            .unwrap_or(f64::NEG_INFINITY)
    };
    let (alpha, _) = golden_max(objective, 1e-7, 0.8, 1e-5);
    Ok(alpha)
}

/// Peak pure-lateral force magnitude at the given load and friction.
pub fn peak_lateral_force(mu: f64, fz: f64, params: &TireParams) -> Result<f64> {
    let alpha_sat = saturation_angle(mu, fz, params)?;
    lateral_force(alpha_sat, fz, mu, params).map(f64::abs)
}

/// Local slope dFy/dalpha by central finite difference (step 1e-5 rad).
///
/// Negative in the rising region of `|Fy|`, positive in the declining region.
pub fn tangent_stiffness(alpha_star: f64, state: &TireState, params: &TireParams) -> Result<f64> {
    const STEP: f64 = 1e-5;
    if alpha_star.abs() + STEP >= std::f64::consts::FRAC_PI_2 {
        return Err(Error::domain("slip angle too close to the domain edge"));
    }
    let eval = |alpha: f64| -> Result<f64> {
        let s = TireState {
            slip_angle: alpha,
            ..*state
        };
        combined_forces(&s, params).map(|f| f.fy)
    };
    Ok((eval(alpha_star + STEP)? - eval(alpha_star - STEP)?) / (2.0 * STEP))
}

/// Slip ratio that realises a commanded longitudinal force at a fixed slip
/// angle. Safeguarded secant iteration inside a bracketing interval,
/// converging far inside the 1 N tolerance so the inversion stays smooth
/// along integrated trajectories. Commands beyond the range reachable with
/// |s| <= `S_MAX` are clamped.
pub fn slip_ratio_for_force(
    fx_target: f64,
    alpha: f64,
    fz: f64,
    mu: f64,
    params: &TireParams,
) -> Result<f64> {
    const S_MAX: f64 = 3.0;
    if fx_target == 0.0 {
        return Ok(0.0);
    }
    let eval = |s: f64| -> Result<f64> {
        combined_forces(
            &TireState {
                slip_angle: alpha,
                slip_ratio: s,
                vertical_load: fz,
                road_mu: mu,
            },
            params,
        )
        .map(|f| f.fx)
    };
    let sign = fx_target.signum();
    let reach = eval(sign * S_MAX)?;
    let target = if fx_target.abs() >= reach.abs() {
        reach * (1.0 - 1e-9)
    } else {
        fx_target
    };
    let tol = 1e-9 * target.abs().max(1.0);
    let mut lo = 0.0;
    let mut hi = sign * S_MAX;
    let mut f_lo = -target;
    let mut f_hi = reach - target;
    let mut s = lo;
    let mut fs = f_lo;
    for _ in 0..100 {
        // Secant proposal, falling back to the midpoint when it leaves the
        // bracket or stalls.
        let secant = if (f_hi - f_lo).abs() > 0.0 {
            lo - f_lo * (hi - lo) / (f_hi - f_lo)
        } else {
            0.5 * (lo + hi)
        };
        let inside = (secant - lo) * (secant - hi) < 0.0;
        let next = if inside { secant } else { 0.5 * (lo + hi) };
        s = next;
        fs = eval(s)? - target;
        if fs.abs() <= tol || (hi - lo).abs() <= 1e-15 {
            return Ok(s);
        }
        if fs.signum() == f_lo.signum() {
            lo = s;
            f_lo = fs;
        } else {
            hi = s;
            f_hi = fs;
        }
    }
    let _ = fs;
    Ok(s)
}
