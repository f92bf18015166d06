//! Vehicle models: the 3DOF single-track body with an additional yaw moment,
//! the Frenet path-tracking kinematics, the 2DOF analysis model, static axle
//! loads and fixed-step integration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tire::{self, TireParams, TireState};

/// Speeds below this are outside the kinematic validity of the slip relations.
pub const VX_FLOOR: f64 = 0.5;

/// Static vehicle geometry and inertia.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct VehicleParams {
    /// Mass, kg.
    pub m: f64,
    /// Yaw inertia, kg m^2.
    pub iz: f64,
    /// CG to front axle, m.
    pub lf: f64,
    /// CG to rear axle, m.
    pub lr: f64,
    /// Track width, m.
    pub d: f64,
    /// Effective tire radius, m.
    pub re: f64,
    /// Gravitational acceleration, m/s^2.
    pub g: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        VehicleParams {
            m: 1720.0,
            iz: 1343.1,
            lf: 1.345,
            lr: 1.358,
            d: 1.660,
            re: 0.32,
            g: 9.81,
        }
    }
}

impl VehicleParams {
    /// Wheelbase, m.
    pub fn wheelbase(&self) -> f64 {
        self.lf + self.lr
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.m, self.iz, self.lf, self.lr, self.d, self.re, self.g];
        if positive.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::domain("vehicle parameters must be positive"));
        }
        Ok(())
    }
}

/// Chassis motion state.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ChassisState {
    /// Longitudinal speed, m/s.
    pub vx: f64,
    /// Sideslip angle, rad.
    pub beta: f64,
    /// Yaw rate, rad/s.
    pub r: f64,
}

impl ChassisState {
    /// Lateral speed under the `Vy = Vx tan(beta)` closure.
    pub fn vy(&self) -> f64 {
        self.vx * self.beta.tan()
    }

    fn validate(&self) -> Result<()> {
        if self.vx < VX_FLOOR {
            return Err(Error::domain(format!(
                "longitudinal speed {} below kinematic floor {VX_FLOOR}",
                self.vx
            )));
        }
        if self.beta.abs() >= std::f64::consts::FRAC_PI_2 {
            return Err(Error::domain("sideslip magnitude must be below pi/2"));
        }
        Ok(())
    }
}

/// Path-relative (Frenet) state.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PathState {
    /// Signed lateral error, m.
    pub e: f64,
    /// Heading error, rad.
    pub dpsi: f64,
    /// Arc length along the reference, m.
    pub s: f64,
    /// Local path curvature, 1/m.
    pub kappa: f64,
}

/// Control input: steering, rear longitudinal force, additional yaw moment.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    /// Front steering angle, rad.
    pub delta: f64,
    /// Rear axle longitudinal force command, N.
    pub fxr: f64,
    /// Additional yaw moment, N m.
    pub dmz: f64,
}

impl ControlInput {
    pub fn validate(&self) -> Result<()> {
        if ![self.delta, self.fxr, self.dmz].iter().all(|v| v.is_finite()) {
            return Err(Error::domain("control input must be finite"));
        }
        Ok(())
    }
}

/// The five-state vector `[e, dpsi, vx, beta, r]` tracked in closed loop.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FullState {
    pub e: f64,
    pub dpsi: f64,
    pub vx: f64,
    pub beta: f64,
    pub r: f64,
}

impl FullState {
    pub fn to_array(self) -> [f64; 5] {
        [self.e, self.dpsi, self.vx, self.beta, self.r]
    }

    pub fn from_array(x: [f64; 5]) -> Self {
        FullState {
            e: x[0],
            dpsi: x[1],
            vx: x[2],
            beta: x[3],
            r: x[4],
        }
    }

    pub fn chassis(&self) -> ChassisState {
        ChassisState {
            vx: self.vx,
            beta: self.beta,
            r: self.r,
        }
    }
}

/// Static vertical loads `(front, rear)` from the lever rule; they sum to
/// `m g` exactly.
pub fn static_loads(params: &VehicleParams) -> Result<(f64, f64)> {
    params.validate()?;
    let w = params.m * params.g;
    let l = params.wheelbase();
    Ok((w * params.lr / l, w * params.lf / l))
}

/// Chassis accelerations `(dVx, dBeta, dR)` of the 3DOF model.
///
/// The front axle runs at zero slip ratio; the rear axle inverts the tire
/// model to find the slip ratio realising the commanded `fxr` at the current
/// rear slip angle, so the rear lateral force feels longitudinal saturation.
pub fn derivatives_3dof(
    chassis: &ChassisState,
    u: &ControlInput,
    mu: f64,
    params: &VehicleParams,
    tire_params: &TireParams,
) -> Result<(f64, f64, f64)> {
    chassis.validate()?;
    u.validate()?;
    let (fzf, fzr) = static_loads(params)?;
    let (alpha_f, alpha_r) = tire::slip_angles(chassis, u.delta, params)?;
    let fyf = tire::lateral_force(alpha_f, fzf, mu, tire_params)?;
    let s_rear = tire::slip_ratio_for_force(u.fxr, alpha_r, fzr, mu, tire_params)?;
    let rear = tire::combined_forces(
        &TireState {
            slip_angle: alpha_r,
            slip_ratio: s_rear,
            vertical_load: fzr,
            road_mu: mu,
        },
        tire_params,
    )?;
    let vy = chassis.vy();
    let dvx = (rear.fx - fyf * u.delta.sin()) / params.m + chassis.r * vy;
    let dbeta = (rear.fy + fyf * u.delta.cos()) / (params.m * chassis.vx) - chassis.r;
    let dr = (params.lf * fyf * u.delta.cos() - params.lr * rear.fy + u.dmz) / params.iz;
    Ok((dvx, dbeta, dr))
}

/// Frenet path kinematics `(de, dDpsi, ds)`.
pub fn derivatives_path(path: &PathState, chassis: &ChassisState) -> Result<(f64, f64, f64)> {
    let denom = 1.0 - path.kappa * path.e;
    if denom.abs() <= 1e-9 || path.kappa * path.e >= 1.0 {
        return Err(Error::domain("Frenet singularity: kappa * e must stay below 1"));
    }
    let vy = chassis.vy();
    let de = vy * path.dpsi.cos() + chassis.vx * path.dpsi.sin();
    let ds = (chassis.vx * path.dpsi.cos() - vy * path.dpsi.sin()) / denom;
    let ddpsi = chassis.r - path.kappa * ds;
    Ok((de, ddpsi, ds))
}

/// Planar 2DOF field `(dBeta, dR)` with both tires at zero slip ratio.
pub fn derivatives_2dof(
    beta: f64,
    r: f64,
    vx: f64,
    delta: f64,
    mu: f64,
    dmz: f64,
    params: &VehicleParams,
    tire_params: &TireParams,
) -> Result<(f64, f64)> {
    let chassis = ChassisState { vx, beta, r };
    chassis.validate()?;
    let (fzf, fzr) = static_loads(params)?;
    let (alpha_f, alpha_r) = tire::slip_angles(&chassis, delta, params)?;
    let fyf = tire::lateral_force(alpha_f, fzf, mu, tire_params)?;
    let fyr = tire::lateral_force(alpha_r, fzr, mu, tire_params)?;
    let dbeta = (fyf + fyr) / (params.m * vx) - r;
    let dr = (fyf * params.lf - fyr * params.lr + dmz) / params.iz;
    Ok((dbeta, dr))
}

fn full_derivatives(
    x: &FullState,
    u: &ControlInput,
    mu: f64,
    kappa: f64,
    params: &VehicleParams,
    tire_params: &TireParams,
) -> Result<[f64; 5]> {
    let chassis = x.chassis();
    let (dvx, dbeta, dr) = derivatives_3dof(&chassis, u, mu, params, tire_params)?;
    let path = PathState {
        e: x.e,
        dpsi: x.dpsi,
        s: 0.0,
        kappa,
    };
    let (de, ddpsi, _) = derivatives_path(&path, &chassis)?;
    Ok([de, ddpsi, dvx, dbeta, dr])
}

/// Classical fourth-order Runge-Kutta step of the combined body + path field
/// with the input held constant over the step.
pub fn rk4_step(
    x: &FullState,
    u: &ControlInput,
    dt: f64,
    mu: f64,
    kappa: f64,
    params: &VehicleParams,
    tire_params: &TireParams,
) -> Result<FullState> {
    if dt <= 0.0 {
        return Err(Error::domain("time step must be positive"));
    }
    let advance = |x0: &[f64; 5], k: &[f64; 5], h: f64| {
        let mut out = [0.0; 5];
        for i in 0..5 {
            out[i] = x0[i] + h * k[i];
        }
        FullState::from_array(out)
    };
    let x0 = x.to_array();
    let k1 = full_derivatives(x, u, mu, kappa, params, tire_params)?;
    let k2 = full_derivatives(&advance(&x0, &k1, 0.5 * dt), u, mu, kappa, params, tire_params)?;
    let k3 = full_derivatives(&advance(&x0, &k2, 0.5 * dt), u, mu, kappa, params, tire_params)?;
    let k4 = full_derivatives(&advance(&x0, &k3, dt), u, mu, kappa, params, tire_params)?;
    let mut out = [0.0; 5];
    for i in 0..5 {
        out[i] = x0[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    Ok(FullState::from_array(out))
}
