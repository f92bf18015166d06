//! Handling-diagram construction: normalized lateral acceleration versus the
//! front/rear slip-angle difference, with the steering operating line whose
//! intersections with the case-labelled branches are the steady-state
//! equilibria.

use serde::{Deserialize, Serialize};

use crate::equilibrium::{CaseId, Conditions};
use crate::error::{Error, Result};
use crate::numeric::bisect;
use crate::tire::{self, TireParams};
use crate::vehicle::{static_loads, VehicleParams};

/// One point of a handling branch.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct HandlingPoint {
    /// Normalized lateral acceleration a_y/g.
    pub ay_g: f64,
    pub alpha_f: f64,
    pub alpha_r: f64,
}

impl HandlingPoint {
    pub fn alpha_diff(&self) -> f64 {
        self.alpha_f - self.alpha_r
    }
}

/// A case-labelled branch of the diagram.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HandlingBranch {
    pub case_id: CaseId,
    pub points: Vec<HandlingPoint>,
}

/// An intersection of a branch with the operating line: a steady-state
/// equilibrium candidate in phase-plane coordinates.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct HandlingIntersection {
    pub case_id: CaseId,
    pub ay_g: f64,
    pub beta: f64,
    pub r: f64,
}

/// The assembled diagram.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HandlingDiagram {
    pub conditions: Conditions,
    /// Slope of the operating line: a_y/g = slope * (delta + alpha_diff).
    pub line_slope: f64,
    pub branches: Vec<HandlingBranch>,
    pub intersections: Vec<HandlingIntersection>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Region {
    Rising,
    Declining,
}

/// Invert |Fy|(alpha) = target on one monotone branch of the axle curve.
/// Returns the (positive) slip-angle magnitude.
fn invert_branch(
    target: f64,
    fz: f64,
    mu: f64,
    region: Region,
    alpha_sat: f64,
    tire_params: &TireParams,
) -> Option<f64> {
    const ALPHA_CAP: f64 = 1.0;
    if target <= 0.0 {
        return None;
    }
    let mag = |a: f64| {
        tire::lateral_force(a, fz, mu, tire_params)
            .map(f64::abs)
            .unwrap_or(f64::NAN)
    };
    let peak = mag(alpha_sat);
    let (lo, hi) = match region {
        Region::Rising => (0.0, alpha_sat),
        Region::Declining => (alpha_sat, ALPHA_CAP),
    };
    let (f_lo, f_hi) = (mag(lo), mag(hi));
    if target > peak {
        return None;
    }
    match region {
        Region::Rising if target > f_hi => return None,
        Region::Declining if target < f_hi || target > f_lo => return None,
        _ => {}
    }
    bisect(|a| mag(a) - target, lo, hi, 1e-10, 0.0).or({
        // Exactly at the peak the bracket may lose its sign change.
        if (target - peak).abs() < 1e-9 * peak.max(1.0) {
            Some(alpha_sat)
        } else {
            None
        }
    })
}

fn case_of(front: Region, rear: Region) -> CaseId {
    match (front, rear) {
        (Region::Rising, Region::Rising) => CaseId::Case1,
        (Region::Declining, Region::Rising) => CaseId::Case2,
        (Region::Rising, Region::Declining) => CaseId::Case3,
        (Region::Declining, Region::Declining) => CaseId::Case4,
    }
}

/// Build the handling diagram for the given conditions.
///
/// Sweeps a_y/g over (0, mu]; each level needs front force
/// `N Fzf - dMz/L` and rear force `N Fzr + dMz/L` (the yaw-moment shift),
/// inverted on the rising and declining branches of each axle curve. The
/// four branch combinations are labelled Case1..Case4 and intersected with
/// the operating line.
pub fn handling_diagram(
    cond: &Conditions,
    params: &VehicleParams,
    tire_params: &TireParams,
) -> Result<HandlingDiagram> {
    const LEVELS: usize = 400;
    if cond.mu <= 0.0 || cond.mu > 1.2 {
        return Err(Error::domain("road friction must lie in (0, 1.2]"));
    }
    let (fzf, fzr) = static_loads(params)?;
    let l = params.wheelbase();
    let sat_f = tire::saturation_angle(cond.mu, fzf, tire_params)?;
    let sat_r = tire::saturation_angle(cond.mu, fzr, tire_params)?;
    let line_slope = cond.vx * cond.vx / (params.g * l);

    let point_at = |n: f64, front: Region, rear: Region| -> Option<HandlingPoint> {
        let pf = n * fzf - cond.dmz / l;
        let pr = n * fzr + cond.dmz / l;
        let af = invert_branch(pf, fzf, cond.mu, front, sat_f, tire_params)?;
        let ar = invert_branch(pr, fzr, cond.mu, rear, sat_r, tire_params)?;
        Some(HandlingPoint {
            ay_g: n,
            alpha_f: -af,
            alpha_r: -ar,
        })
    };

    let combos = [
        (Region::Rising, Region::Rising),
        (Region::Declining, Region::Rising),
        (Region::Rising, Region::Declining),
        (Region::Declining, Region::Declining),
    ];

    let mut branches = Vec::new();
    let mut intersections = Vec::new();
    for (front, rear) in combos {
        let mut points = Vec::new();
        let mut residuals: Vec<(f64, f64)> = Vec::new();
        for i in 1..=LEVELS {
            let n = cond.mu * i as f64 / LEVELS as f64;
            if let Some(p) = point_at(n, front, rear) {
                let res = n - line_slope * (cond.delta + p.alpha_diff());
                residuals.push((n, res));
                points.push(p);
            }
        }
        // Operating-line intersections: bracketed sign changes in the
        // level residual, polished by bisection.
        for w in residuals.windows(2) {
            let ((n0, r0), (n1, r1)) = (w[0], w[1]);
            if r0 == 0.0 || r0.signum() == r1.signum() {
                continue;
            }
            let root = bisect(
                |n| match point_at(n, front, rear) {
                    Some(p) => n - line_slope * (cond.delta + p.alpha_diff()),
                    None => f64::NAN,
                },
                n0,
                n1,
                1e-12,
                0.0,
            );
            let _ = r1;
            if let Some(n_star) = root {
                if let Some(p) = point_at(n_star, front, rear) {
                    let r = n_star * params.g / cond.vx;
                    let beta = p.alpha_r + params.lr * r / cond.vx;
                    intersections.push(HandlingIntersection {
                        case_id: case_of(front, rear),
                        ay_g: n_star,
                        beta,
                        r,
                    });
                }
            }
        }
        if !points.is_empty() {
            branches.push(HandlingBranch {
                case_id: case_of(front, rear),
                points,
            });
        }
    }
    Ok(HandlingDiagram {
        conditions: *cond,
        line_slope,
        branches,
        intersections,
    })
}
