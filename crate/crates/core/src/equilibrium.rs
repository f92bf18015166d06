//! Equilibria of the planar (beta, r) field: damped-Newton multi-start root
//! search, analytic Jacobian assembly from axle tangent stiffnesses, and
//! eigenvalue classification into the four front/rear operating-region cases.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tire::{self, TireParams, TireState};
use crate::vehicle::{derivatives_2dof, static_loads, ChassisState, VehicleParams};

/// Operating conditions a phase-plane analysis is run under.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Conditions {
    /// Longitudinal speed, m/s.
    pub vx: f64,
    /// Road friction coefficient.
    pub mu: f64,
    /// Front steering angle, rad.
    pub delta: f64,
    /// Additional yaw moment, N m.
    pub dmz: f64,
}

/// Stability class from the eigenvalues of the planar Jacobian.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StabilityClass {
    StableNode,
    StableFocus,
    Saddle,
    Unstable,
}

/// Which regions of the axle curves the front/rear tires operate in.
///
/// Case1: both rising. Case2: front declining, rear rising. Case3: front
/// rising, rear declining (the drift saddle). Case4: both declining.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CaseId {
    Case1,
    Case2,
    Case3,
    Case4,
}

/// One eigenvalue as a (re, im) pair.
pub type Eigenvalue = (f64, f64);

/// A root of the planar field together with its local analysis.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Equilibrium {
    pub beta: f64,
    pub r: f64,
    pub conditions: Conditions,
    pub jacobian: [[f64; 2]; 2],
    pub eigenvalues: [Eigenvalue; 2],
    pub class: StabilityClass,
    pub case_id: CaseId,
    /// Front/rear lateral tangent stiffnesses at the equilibrium, N/rad.
    pub cyf: f64,
    pub cyr: f64,
}

/// Outcome of classifying a planar Jacobian.
#[derive(Clone, Copy, Debug)]
pub struct Classification {
    pub class: StabilityClass,
    pub case_id: CaseId,
    /// Critical speed of the oversteer (Case 1) / declining-front (Case 2)
    /// stability condition, where defined.
    pub critical_speed: Option<f64>,
}

/// Assemble the planar Jacobian from axle tangent stiffnesses.
pub fn jacobian_2dof(cyf: f64, cyr: f64, vx: f64, params: &VehicleParams) -> [[f64; 2]; 2] {
    let m = params.m;
    let iz = params.iz;
    let (lf, lr) = (params.lf, params.lr);
    [
        [
            (cyf + cyr) / (m * vx),
            (cyf * lf - cyr * lr) / (m * vx * vx) - 1.0,
        ],
        [
            (cyf * lf - cyr * lr) / iz,
            (cyf * lf * lf + cyr * lr * lr) / (iz * vx),
        ],
    ]
}

/// Numeric planar Jacobian by central differences of the field.
pub fn numeric_jacobian_2dof(
    beta: f64,
    r: f64,
    cond: &Conditions,
    params: &VehicleParams,
    tire_params: &TireParams,
) -> Result<[[f64; 2]; 2]> {
    const H: f64 = 1e-6;
    let f = |b: f64, yr: f64| -> Result<(f64, f64)> {
        derivatives_2dof(b, yr, cond.vx, cond.delta, cond.mu, cond.dmz, params, tire_params)
    };
    let (db_p, dr_p) = f(beta + H, r)?;
    let (db_m, dr_m) = f(beta - H, r)?;
    let (db_rp, dr_rp) = f(beta, r + H)?;
    let (db_rm, dr_rm) = f(beta, r - H)?;
    Ok([
        [(db_p - db_m) / (2.0 * H), (db_rp - db_rm) / (2.0 * H)],
        [(dr_p - dr_m) / (2.0 * H), (dr_rp - dr_rm) / (2.0 * H)],
    ])
}

fn eigenvalues_2x2(j: &[[f64; 2]; 2]) -> [Eigenvalue; 2] {
    let tr = j[0][0] + j[1][1];
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    let disc = tr * tr - 4.0 * det;
    if disc >= 0.0 {
        let s = disc.sqrt();
        [((tr + s) / 2.0, 0.0), ((tr - s) / 2.0, 0.0)]
    } else {
        let s = (-disc).sqrt() / 2.0;
        [(tr / 2.0, s), (tr / 2.0, -s)]
    }
}

/// Critical speed of the single-track stability condition, where the radicand
/// is positive.
pub fn critical_speed(cyf: f64, cyr: f64, params: &VehicleParams) -> Option<f64> {
    let l = params.wheelbase();
    let denom = params.m * (cyr * params.lr - cyf * params.lf);
    if denom == 0.0 {
        return None;
    }
    let radicand = cyf * cyr * l * l / denom;
    (radicand > 0.0).then(|| radicand.sqrt())
}

/// Classify a planar Jacobian and the tire operating regions.
///
/// The class comes from the eigenvalues; the case from the stiffness signs.
/// Near-singular Jacobians are reported as an error rather than misclassified.
pub fn classify(
    j: &[[f64; 2]; 2],
    cyf: f64,
    cyr: f64,
    _vx: f64,
    params: &VehicleParams,
) -> Result<Classification> {
    if !j.iter().flatten().all(|v| v.is_finite()) {
        return Err(Error::domain("Jacobian entries must be finite"));
    }
    let tr = j[0][0] + j[1][1];
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    let scale = j.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
    if det.abs() <= 1e-10 * scale * scale {
        return Err(Error::domain(
            "Jacobian is numerically singular at this point",
        ));
    }
    let case_id = match (cyf < 0.0, cyr < 0.0) {
        (true, true) => CaseId::Case1,
        (false, true) => CaseId::Case2,
        (true, false) => CaseId::Case3,
        (false, false) => CaseId::Case4,
    };
    let class = if det < 0.0 {
        StabilityClass::Saddle
    } else if tr < 0.0 {
        if tr * tr - 4.0 * det >= 0.0 {
            StabilityClass::StableNode
        } else {
            StabilityClass::StableFocus
        }
    } else {
        StabilityClass::Unstable
    };
    Ok(Classification {
        class,
        case_id,
        critical_speed: critical_speed(cyf, cyr, params),
    })
}

/// Residual tolerance a converged equilibrium must satisfy (infinity norm).
pub const RESIDUAL_TOL: f64 = 1e-8;

fn field(
    beta: f64,
    r: f64,
    cond: &Conditions,
    params: &VehicleParams,
    tire_params: &TireParams,
) -> Result<(f64, f64)> {
    derivatives_2dof(beta, r, cond.vx, cond.delta, cond.mu, cond.dmz, params, tire_params)
}

/// Damped Newton iteration from one starting point. Returns a root when the
/// residual drops below `RESIDUAL_TOL`.
fn newton_root(
    mut beta: f64,
    mut r: f64,
    cond: &Conditions,
    params: &VehicleParams,
    tire_params: &TireParams,
) -> Option<(f64, f64)> {
    const MAX_ITER: usize = 60;
    let norm = |f: (f64, f64)| f.0.abs().max(f.1.abs());
    let mut fval = field(beta, r, cond, params, tire_params).ok()?;
    for _ in 0..MAX_ITER {
        if norm(fval) <= RESIDUAL_TOL {
            return Some((beta, r));
        }
        let j = numeric_jacobian_2dof(beta, r, cond, params, tire_params).ok()?;
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det.abs() < 1e-14 {
            return None;
        }
        let step_beta = -(j[1][1] * fval.0 - j[0][1] * fval.1) / det;
        let step_r = -(-j[1][0] * fval.0 + j[0][0] * fval.1) / det;
        // Backtrack on the residual norm, halving up to 30 times.
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let (nb, nr) = (beta + t * step_beta, r + t * step_r);
            if let Ok(fnew) = field(nb, nr, cond, params, tire_params) {
                if norm(fnew) < norm(fval) {
                    beta = nb;
                    r = nr;
                    fval = fnew;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            return None;
        }
        if t * step_beta.hypot(step_r) < 1e-10 {
            break;
        }
    }
    let f = field(beta, r, cond, params, tire_params).ok()?;
    (norm(f) <= RESIDUAL_TOL).then_some((beta, r))
}

fn analyze_root(
    beta: f64,
    r: f64,
    cond: &Conditions,
    params: &VehicleParams,
    tire_params: &TireParams,
) -> Result<Equilibrium> {
    let (fzf, fzr) = static_loads(params)?;
    let chassis = ChassisState {
        vx: cond.vx,
        beta,
        r,
    };
    let (alpha_f, alpha_r) = tire::slip_angles(&chassis, cond.delta, params)?;
    let front = TireState::pure_lateral(alpha_f, fzf, cond.mu);
    let rear = TireState::pure_lateral(alpha_r, fzr, cond.mu);
    let cyf = tire::tangent_stiffness(alpha_f, &front, tire_params)?;
    let cyr = tire::tangent_stiffness(alpha_r, &rear, tire_params)?;
    let jacobian = jacobian_2dof(cyf, cyr, cond.vx, params);
    let classification = classify(&jacobian, cyf, cyr, cond.vx, params)?;
    Ok(Equilibrium {
        beta,
        r,
        conditions: *cond,
        jacobian,
        eigenvalues: eigenvalues_2x2(&jacobian),
        class: classification.class,
        case_id: classification.case_id,
        cyf,
        cyr,
    })
}

/// Find all equilibria of the planar field under the given conditions.
///
/// Damped Newton from a 25x25 start grid over beta in [-0.6, 0.6] rad and
/// r in [-1.2, 1.2] rad/s; roots deduplicated within (1e-4, 1e-4) and sorted
/// by (beta, r). An empty list is a valid outcome near coalescence.
pub fn find_equilibria(
    cond: &Conditions,
    params: &VehicleParams,
    tire_params: &TireParams,
) -> Result<Vec<Equilibrium>> {
    const GRID: usize = 25;
    const DEDUP: f64 = 1e-4;
    let mut roots: Vec<(f64, f64)> = Vec::new();
    for i in 0..GRID {
        let beta0 = -0.6 + 1.2 * i as f64 / (GRID - 1) as f64;
        for k in 0..GRID {
            let r0 = -1.2 + 2.4 * k as f64 / (GRID - 1) as f64;
            if let Some((beta, r)) = newton_root(beta0, r0, cond, params, tire_params) {
                // Discard runaways far outside the physical window.
                if beta.abs() > 1.4 || r.abs() > 3.0 {
                    continue;
                }
                if !roots
                    .iter()
                    .any(|(b, y)| (b - beta).abs() < DEDUP && (y - r).abs() < DEDUP)
                {
                    roots.push((beta, r));
                }
            }
        }
    }
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut out = Vec::with_capacity(roots.len());
    for (beta, r) in roots {
        match analyze_root(beta, r, cond, params, tire_params) {
            Ok(eq) => out.push(eq),
            // Singular/edge roots (e.g. exactly at a stiffness zero) are
            // skipped rather than misclassified.
            Err(_) => continue,
        }
    }
    Ok(out)
}

/// Newton-polish a single starting guess to an equilibrium, if one is nearby.
pub fn refine_equilibrium(
    beta0: f64,
    r0: f64,
    cond: &Conditions,
    params: &VehicleParams,
    tire_params: &TireParams,
) -> Option<Equilibrium> {
    let (beta, r) = newton_root(beta0, r0, cond, params, tire_params)?;
    analyze_root(beta, r, cond, params, tire_params).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use crate::tire::TireParams;

    fn setup() -> (VehicleParams, TireParams) {
        (VehicleParams::default(), TireParams::default())
    }

    #[test]
    fn analytic_jacobian_matches_numeric_on_equilibria() {
        let (p, t) = setup();
        let cond = Conditions {
            vx: 60.0 / 3.6,
            mu: 0.9,
            delta: 0.0,
            dmz: 0.0,
        };
        let eqs = find_equilibria(&cond, &p, &t).unwrap();
        assert!(!eqs.is_empty());
        for eq in &eqs {
            let numeric = numeric_jacobian_2dof(eq.beta, eq.r, &cond, &p, &t).unwrap();
            for i in 0..2 {
                for k in 0..2 {
                    let a = eq.jacobian[i][k];
                    let n = numeric[i][k];
                    let denom = a.abs().max(n.abs()).max(1e-6);
                    assert!(
                        (a - n).abs() / denom < 1e-3,
                        "entry ({i},{k}): analytic {a} vs numeric {n}"
                    );
                }
            }
        }
    }

    #[test]
    fn origin_is_stable_at_low_speed() {
        let (p, t) = setup();
        let cond = Conditions {
            vx: 10.0,
            mu: 0.9,
            delta: 0.0,
            dmz: 0.0,
        };
        let eqs = find_equilibria(&cond, &p, &t).unwrap();
        let origin = eqs
            .iter()
            .find(|e| e.beta.abs() < 1e-6 && e.r.abs() < 1e-6)
            .expect("origin root");
        let tr = origin.jacobian[0][0] + origin.jacobian[1][1];
        let det = origin.jacobian[0][0] * origin.jacobian[1][1]
            - origin.jacobian[0][1] * origin.jacobian[1][0];
        assert!(tr < 0.0 && det > 0.0);
        assert_eq!(origin.case_id, CaseId::Case1);
    }

    #[test]
    fn case3_has_negative_determinant() {
        let (p, t) = setup();
        let cond = Conditions {
            vx: 60.0 / 3.6,
            mu: 0.9,
            delta: 0.0,
            dmz: 0.0,
        };
        let eqs = find_equilibria(&cond, &p, &t).unwrap();
        let saddles: Vec<_> = eqs.iter().filter(|e| e.case_id == CaseId::Case3).collect();
        assert!(!saddles.is_empty(), "expected a drift saddle");
        for s in saddles {
            let det = s.jacobian[0][0] * s.jacobian[1][1] - s.jacobian[0][1] * s.jacobian[1][0];
            assert!(det < 0.0);
            assert_eq!(s.class, StabilityClass::Saddle);
        }
    }

    #[test]
    fn classify_by_stiffness_signs() {
        let p = VehicleParams::default();
        // Front rising, rear declining: saddle.
        let j = jacobian_2dof(-1.0e5, 4.0e4, 16.67, &p);
        let c = classify(&j, -1.0e5, 4.0e4, 16.67, &p).unwrap();
        assert_eq!(c.case_id, CaseId::Case3);
        assert_eq!(c.class, StabilityClass::Saddle);

        // Both declining: unstable.
        let j = jacobian_2dof(5.0e4, 4.0e4, 16.67, &p);
        let c = classify(&j, 5.0e4, 4.0e4, 16.67, &p).unwrap();
        assert_eq!(c.case_id, CaseId::Case4);
        assert_eq!(c.class, StabilityClass::Unstable);
    }

    #[test]
    fn oversteer_critical_speed_separates_stability() {
        let p = VehicleParams::default();
        let (cyf, cyr) = (-1.2e5, -1.0e5);
        // Oversteer: cyf*lf - cyr*lr < 0 for these values.
        assert!(cyf * p.lf - cyr * p.lr < 0.0);
        let vcrit = critical_speed(cyf, cyr, &p).expect("defined");
        let below = classify(&jacobian_2dof(cyf, cyr, vcrit * 0.8, &p), cyf, cyr, vcrit * 0.8, &p)
            .unwrap();
        assert!(matches!(
            below.class,
            StabilityClass::StableNode | StabilityClass::StableFocus
        ));
        let above = classify(&jacobian_2dof(cyf, cyr, vcrit * 1.2, &p), cyf, cyr, vcrit * 1.2, &p)
            .unwrap();
        assert_eq!(above.class, StabilityClass::Saddle);
    }

    #[test]
    fn case2_stability_needs_speed_above_critical() {
        let p = VehicleParams::default();
        let (cyf, cyr) = (8.0e3, -1.5e5);
        let vcrit = critical_speed(cyf, cyr, &p).expect("defined");
        let slow = classify(&jacobian_2dof(cyf, cyr, vcrit * 0.6, &p), cyf, cyr, vcrit * 0.6, &p)
            .unwrap();
        assert_eq!(slow.case_id, CaseId::Case2);
        assert_eq!(slow.class, StabilityClass::Saddle);
        let fast = classify(&jacobian_2dof(cyf, cyr, vcrit * 1.4, &p), cyf, cyr, vcrit * 1.4, &p)
            .unwrap();
        assert!(matches!(
            fast.class,
            StabilityClass::StableNode | StabilityClass::StableFocus
        ));
    }

    #[test]
    fn classify_flags_singular_jacobian() {
        let p = VehicleParams::default();
        let j = [[0.0, 0.0], [0.0, 0.0]];
        assert!(classify(&j, -1.0, -1.0, 10.0, &p).is_err());
    }

    #[test]
    fn residuals_meet_tolerance() {
        let (p, t) = setup();
        let cond = Conditions {
            vx: 16.67,
            mu: 0.8,
            delta: 0.05,
            dmz: 500.0,
        };
        for eq in find_equilibria(&cond, &p, &t).unwrap() {
            let (db, dr) =
                derivatives_2dof(eq.beta, eq.r, cond.vx, cond.delta, cond.mu, cond.dmz, &p, &t)
                    .unwrap();
            assert!(db.abs() <= RESIDUAL_TOL && dr.abs() <= RESIDUAL_TOL);
        }
    }

    #[test]
    fn zero_input_equilibria_are_symmetric() {
        let (p, t) = setup();
        let cond = Conditions {
            vx: 16.67,
            mu: 0.9,
            delta: 0.0,
            dmz: 0.0,
        };
        let eqs = find_equilibria(&cond, &p, &t).unwrap();
        for eq in &eqs {
            let mirrored = eqs.iter().any(|m| {
                (m.beta + eq.beta).abs() < 1e-6 && (m.r + eq.r).abs() < 1e-6
            });
            assert!(mirrored, "missing mirror of ({}, {})", eq.beta, eq.r);
        }
    }

    #[test]
    fn large_steering_removes_right_saddle() {
        let (p, t) = setup();
        let base = Conditions {
            vx: 60.0 / 3.6,
            mu: 0.9,
            delta: 0.0,
            dmz: 0.0,
        };
        let with_saddles = find_equilibria(&base, &p, &t).unwrap();
        assert!(with_saddles
            .iter()
            .any(|e| e.case_id == CaseId::Case3 && e.r > 0.0));

        // Past the critical angle the saddle the stable point approaches is
        // destroyed in a saddle-node coalescence; its mirror survives.
        let steered = Conditions {
            delta: 0.3,
            ..base
        };
        let eqs = find_equilibria(&steered, &p, &t).unwrap();
        assert!(
            !eqs.iter().any(|e| e.case_id == CaseId::Case3 && e.r > 0.0),
            "approached saddle should vanish past the critical steering angle"
        );
        assert!(eqs.iter().any(|e| e.case_id == CaseId::Case3 && e.r < 0.0));
    }

    #[test]
    fn yaw_moment_drives_coalescence() {
        let (p, t) = setup();
        let mut last_distance = f64::INFINITY;
        let mut disappeared = false;
        for &dmz in &[0.0, 600.0, 1200.0, 1800.0, 2400.0, 3000.0] {
            let cond = Conditions {
                vx: 60.0 / 3.6,
                mu: 0.5,
                delta: 0.0,
                dmz,
            };
            let eqs = find_equilibria(&cond, &p, &t).unwrap();
            let stable: Vec<_> = eqs
                .iter()
                .filter(|e| {
                    matches!(
                        e.class,
                        StabilityClass::StableNode | StabilityClass::StableFocus
                    )
                })
                .collect();
            let saddles: Vec<_> = eqs
                .iter()
                .filter(|e| e.case_id == CaseId::Case3)
                .collect();
            if stable.is_empty() || saddles.is_empty() {
                disappeared = true;
                break;
            }
            let d = stable
                .iter()
                .flat_map(|s| {
                    saddles
                        .iter()
                        .map(|q| (s.beta - q.beta).hypot(s.r - q.r))
                })
                .fold(f64::INFINITY, f64::min);
            assert!(
                d < last_distance + 1e-9,
                "stable-saddle distance should shrink with the yaw moment"
            );
            last_distance = d;
        }
        assert!(
            disappeared || last_distance < 0.25,
            "pair should approach coalescence over the moment ramp"
        );
    }
}
