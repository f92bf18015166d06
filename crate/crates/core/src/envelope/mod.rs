//! Dual stability envelopes in the (beta, r) phase plane under bounded
//! steering and yaw-moment inputs.
//!
//! The inner envelope bounds the non-drifting stable region (rear tire
//! unsaturated, yaw rate below its steady-state maximum). The outer envelope
//! bounds the recoverable set: front tire unsaturated, and either inside the
//! yaw-rate strip or certified by the convergence-angle test to be drivable
//! back to the drift saddle under admissible inputs.

pub mod geom;
pub mod marching;

use serde::{Deserialize, Serialize};

use crate::equilibrium::{refine_equilibrium, CaseId, Conditions};
use crate::error::{Error, Result};
use crate::exec::{map_indexed, Parallelism};
use crate::numeric::golden_min;
use crate::saddle::SaddleFit;
use crate::tire::{self, TireParams};
use crate::vehicle::{static_loads, VehicleParams};

pub use geom::Point;

/// Admissible steering and yaw-moment intervals.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct InputBox {
    pub delta_min: f64,
    pub delta_max: f64,
    pub dmz_min: f64,
    pub dmz_max: f64,
}

impl Default for InputBox {
    fn default() -> Self {
        InputBox {
            delta_min: -0.5,
            delta_max: 0.5,
            dmz_min: -3500.0,
            dmz_max: 3500.0,
        }
    }
}

impl InputBox {
    pub fn validate(&self) -> Result<()> {
        if self.delta_min >= self.delta_max || self.dmz_min >= self.dmz_max {
            return Err(Error::domain("input box bounds must satisfy min < max"));
        }
        Ok(())
    }

    /// The box seen through the odd symmetry (beta, r) -> (-beta, -r).
    pub fn mirrored(&self) -> InputBox {
        InputBox {
            delta_min: -self.delta_max,
            delta_max: -self.delta_min,
            dmz_min: -self.dmz_max,
            dmz_max: -self.dmz_min,
        }
    }

    /// Yaw moment closest to zero inside the box.
    fn dmz_nearest_zero(&self) -> f64 {
        0.0f64.clamp(self.dmz_min, self.dmz_max)
    }
}

/// What a boundary polyline represents.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundaryKind {
    FrontSat,
    RearSat,
    YawRateMax,
    Recoverable,
}

/// Which side of the polyline is admissible.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum HalfSpaceSense {
    BetaAtLeast,
    BetaAtMost,
    RAtMost,
    RAtLeast,
    Inside,
}

/// One envelope boundary.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnvelopeBoundary {
    pub kind: BoundaryKind,
    pub polyline: Vec<Point>,
    pub sense: HalfSpaceSense,
}

/// Convergence-angle pair for one state against one saddle.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct RecoverabilityIndex {
    /// Angle of the ray from the saddle to the state.
    pub eta_a: f64,
    /// Largest attainable pull angle under the input box.
    pub eta_max: f64,
    pub recoverable: bool,
}

/// Result of the pull-angle maximisation.
#[derive(Clone, Copy, Debug)]
pub struct EtaMax {
    pub eta: f64,
    pub delta_star: f64,
    pub dmz_star: f64,
}

/// Default r-span of boundary polylines emitted for plotting.
const LINE_R_SPAN: f64 = 2.0;

/// Front tire saturation boundary for the positive-yaw branch:
/// `beta >= -(lf/Vx) r + delta_min + alpha_f_sat`.
pub fn front_sat_boundary(
    vx: f64,
    mu: f64,
    input_box: &InputBox,
    params: &VehicleParams,
    tire_params: &TireParams,
) -> Result<EnvelopeBoundary> {
    input_box.validate()?;
    let (fzf, _) = static_loads(params)?;
    let alpha_sat = tire::saturation_angle(mu, fzf, tire_params)?;
    let slope = -params.lf / vx;
    let intercept = input_box.delta_min + alpha_sat;
    let line = |r: f64| slope * r + intercept;
    Ok(EnvelopeBoundary {
        kind: BoundaryKind::FrontSat,
        polyline: vec![(line(-LINE_R_SPAN), -LINE_R_SPAN), (line(LINE_R_SPAN), LINE_R_SPAN)],
        sense: HalfSpaceSense::BetaAtLeast,
    })
}

/// Rear tire saturation boundary (upper edge of the rear-unsaturated band):
/// `beta <= (lr/Vx) r + alpha_r_sat`.
pub fn rear_sat_boundary(
    vx: f64,
    mu: f64,
    params: &VehicleParams,
    tire_params: &TireParams,
) -> Result<EnvelopeBoundary> {
    let (_, fzr) = static_loads(params)?;
    let alpha_sat = tire::saturation_angle(mu, fzr, tire_params)?;
    let slope = params.lr / vx;
    let line = |r: f64| slope * r + alpha_sat;
    Ok(EnvelopeBoundary {
        kind: BoundaryKind::RearSat,
        polyline: vec![(line(-LINE_R_SPAN), -LINE_R_SPAN), (line(LINE_R_SPAN), LINE_R_SPAN)],
        sense: HalfSpaceSense::BetaAtMost,
    })
}

/// Model value of the positive-branch saddle yaw rate at given inputs.
fn model_yaw(fit: &SaddleFit, mu: f64, vx: f64, delta: f64, dmz: f64) -> f64 {
    let f1 = fit.p[2] * delta / mu;
    let d3 = mu * fit.p[6] * (1.0 - (fit.p[7] * vx + fit.p[8]));
    let f3 = if d3.abs() < 1e-9 {
        f64::NEG_INFINITY
    } else {
        1.0 - (dmz / d3).powi(2)
    };
    (mu * fit.g / vx + f1) * f3
}

/// The most permissive steady-state yaw-rate bound over the input box, with
/// the steering angle and yaw moment attaining it.
pub fn yaw_bound_anchor(
    vx: f64,
    mu: f64,
    input_box: &InputBox,
    fit: &SaddleFit,
) -> Result<(f64, f64, f64)> {
    input_box.validate()?;
    let dmz = input_box.dmz_nearest_zero();
    let mut best = (f64::NEG_INFINITY, 0.0);
    for delta in [input_box.delta_min, input_box.delta_max] {
        let r = model_yaw(fit, mu, vx, delta, dmz);
        if r > best.0 {
            best = (r, delta);
        }
    }
    if !best.0.is_finite() || best.0 <= 0.0 {
        return Err(Error::domain(
            "yaw-rate boundary void: no admissible saddle at these conditions",
        ));
    }
    Ok((best.0, best.1, dmz))
}

/// Maximum steady-state yaw-rate boundary, a horizontal line in the phase
/// plane evaluated at the most permissive admissible inputs.
pub fn yaw_rate_boundary(
    vx: f64,
    mu: f64,
    input_box: &InputBox,
    fit: &SaddleFit,
) -> Result<EnvelopeBoundary> {
    let (r_bound, _, _) = yaw_bound_anchor(vx, mu, input_box, fit)?;
    Ok(EnvelopeBoundary {
        kind: BoundaryKind::YawRateMax,
        polyline: vec![(-1.0, r_bound), (1.0, r_bound)],
        sense: HalfSpaceSense::RAtMost,
    })
}

/// Angle of the ray from the saddle to the state, in (-pi, pi].
pub fn eta_a(state: Point, saddle: Point) -> Result<f64> {
    let (db, dr) = (state.0 - saddle.0, state.1 - saddle.1);
    if db.hypot(dr) < 1e-12 {
        return Err(Error::domain("state coincides with the saddle"));
    }
    Ok(dr.atan2(db))
}

/// Largest attainable pull angle: the yaw acceleration is minimised over the
/// input box (moment at its lower bound; steering by a 201-point grid refined
/// by golden section), and the angle of the reversed state derivative at that
/// input is returned.
pub fn eta_max(
    state: Point,
    vx: f64,
    mu: f64,
    input_box: &InputBox,
    params: &VehicleParams,
    tire_params: &TireParams,
) -> Result<EtaMax> {
    input_box.validate()?;
    if vx < crate::vehicle::VX_FLOOR {
        return Err(Error::domain("speed below kinematic floor"));
    }
    let (fzf, fzr) = static_loads(params)?;
    let (beta, r) = state;
    let alpha_r = beta - params.lr * r / vx;
    let fyr = tire::lateral_force(alpha_r, fzr, mu, tire_params)?;

    let front_force = |delta: f64| -> f64 {
        let alpha_f = beta + params.lf * r / vx - delta;
        tire::lateral_force(alpha_f, fzf, mu, tire_params).unwrap_or(f64::INFINITY)
    };
    const GRID: usize = 201;
    let mut best_i = 0;
    let mut best_v = f64::INFINITY;
    for i in 0..GRID {
        let delta = input_box.delta_min
            + (input_box.delta_max - input_box.delta_min) * i as f64 / (GRID - 1) as f64;
        let v = front_force(delta);
        if v < best_v {
            best_v = v;
            best_i = i;
        }
    }
    if !best_v.is_finite() {
        return Err(Error::domain("front slip angle leaves the tire domain"));
    }
    let step = (input_box.delta_max - input_box.delta_min) / (GRID - 1) as f64;
    let lo = (input_box.delta_min + step * (best_i as f64 - 1.0)).max(input_box.delta_min);
    let hi = (input_box.delta_min + step * (best_i as f64 + 1.0)).min(input_box.delta_max);
    let (delta_star, fyf_min) = golden_min(front_force, lo, hi, 1e-7);

    let rdot = (fyf_min * params.lf - fyr * params.lr + input_box.dmz_min) / params.iz;
    let bdot = (fyf_min + fyr) / (params.m * vx) - r;
    Ok(EtaMax {
        eta: (-rdot).atan2(-bdot),
        delta_star,
        dmz_star: input_box.dmz_min,
    })
}

/// Convergence test of one state against one saddle (positive-yaw side).
pub fn recoverability(
    state: Point,
    saddle: Point,
    vx: f64,
    mu: f64,
    input_box: &InputBox,
    params: &VehicleParams,
    tire_params: &TireParams,
) -> Result<RecoverabilityIndex> {
    let angle_a = eta_a(state, saddle)?;
    let em = eta_max(state, vx, mu, input_box, params, tire_params)?;
    Ok(RecoverabilityIndex {
        eta_a: angle_a,
        eta_max: em.eta,
        recoverable: em.eta >= angle_a,
    })
}

/// Scan window around a saddle inside which the convergence test applies.
pub const WINDOW_BETA: f64 = 0.25;
pub const WINDOW_R: f64 = 0.5;

/// Continuous membership margin of the convergence test for states on the
/// positive-yaw side; negative outside the scan window.
fn eta_margin_left(
    state: Point,
    saddle: Point,
    vx: f64,
    mu: f64,
    input_box: &InputBox,
    params: &VehicleParams,
    tire_params: &TireParams,
) -> f64 {
    if (state.0 - saddle.0).abs() > WINDOW_BETA || (state.1 - saddle.1).abs() > WINDOW_R {
        return -1.0;
    }
    if (state.0 - saddle.0).hypot(state.1 - saddle.1) < 1e-9 {
        return 1.0;
    }
    match recoverability(state, saddle, vx, mu, input_box, params, tire_params) {
        Ok(idx) => idx.eta_max - idx.eta_a,
        Err(_) => -1.0,
    }
}

/// One assembled envelope.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DualEnvelope {
    pub vx: f64,
    pub mu: f64,
    pub input_box: InputBox,
    pub alpha_f_sat: f64,
    pub alpha_r_sat: f64,
    /// Slope -lf/Vx of the front-saturation lines.
    pub front_slope: f64,
    /// Upper/lower yaw-rate strip edges (anchored at the refined saddles).
    pub r_upper: f64,
    pub r_lower: f64,
    /// Saddle the positive-yaw recoverable extension converges to.
    pub saddle_left: Point,
    pub saddle_right: Point,
    /// Non-drifting stable region (closed polygon).
    pub inner: Vec<Point>,
    /// Recoverable region (closed polygon).
    pub outer: Vec<Point>,
    pub boundaries: Vec<EnvelopeBoundary>,
}

impl DualEnvelope {
    /// Signed distance to the inner boundary; positive outside the inner
    /// (non-drifting) region.
    pub fn distance_inner(&self, beta: f64, r: f64) -> f64 {
        -geom::signed_distance_inside((beta, r), &self.inner)
    }

    /// Signed distance to the outer boundary; positive inside the
    /// recoverable region.
    pub fn distance_outer(&self, beta: f64, r: f64) -> f64 {
        geom::signed_distance_inside((beta, r), &self.outer)
    }

    /// Margin of the front-saturation band (positive when an admissible
    /// steering angle keeps the front tire unsaturated).
    pub fn front_margin(&self, beta: f64, r: f64) -> f64 {
        let intercept = self.input_box.delta_min + self.alpha_f_sat;
        let left = self.front_slope * r + intercept;
        let right = self.front_slope * r - intercept;
        (beta - left).min(right - beta)
    }

    /// Membership in the recoverable (outer) set by the defining tests
    /// rather than the extracted polygon.
    pub fn is_recoverable(
        &self,
        beta: f64,
        r: f64,
        params: &VehicleParams,
        tire_params: &TireParams,
    ) -> bool {
        if self.front_margin(beta, r) < 0.0 {
            return false;
        }
        if r <= self.r_upper && r >= self.r_lower {
            return true;
        }
        let margin = if r > 0.0 {
            eta_margin_left(
                (beta, r),
                self.saddle_left,
                self.vx,
                self.mu,
                &self.input_box,
                params,
                tire_params,
            )
        } else {
            eta_margin_left(
                (-beta, -r),
                (-self.saddle_right.0, -self.saddle_right.1),
                self.vx,
                self.mu,
                &self.input_box.mirrored(),
                params,
                tire_params,
            )
        };
        margin >= 0.0
    }
}

/// Options controlling envelope construction resolution.
#[derive(Clone, Copy, Debug)]
pub struct EnvelopeOptions {
    /// Node count per axis of the outer-field marching grid.
    pub outer_grid: usize,
    /// Node count per axis of the recoverable-region scan.
    pub recoverable_grid: usize,
}

impl Default for EnvelopeOptions {
    fn default() -> Self {
        EnvelopeOptions {
            outer_grid: 201,
            recoverable_grid: 120,
        }
    }
}

/// Boundary of the recoverable extension beyond the yaw-rate strip on the
/// positive-yaw side: the zero contour of the convergence-test margin,
/// extracted by marching squares over the scan window. Degenerates to the
/// strip edge when no state beyond it passes the test.
pub fn recoverable_region(
    vx: f64,
    mu: f64,
    input_box: &InputBox,
    saddle: Point,
    r_bound: f64,
    params: &VehicleParams,
    tire_params: &TireParams,
    grid_nodes: usize,
) -> Result<EnvelopeBoundary> {
    input_box.validate()?;
    let n = grid_nodes.max(16);
    let xs: Vec<f64> = (0..n)
        .map(|i| saddle.0 - WINDOW_BETA + 2.0 * WINDOW_BETA * i as f64 / (n - 1) as f64)
        .collect();
    let r_lo = r_bound;
    let r_hi = saddle.1 + WINDOW_R;
    let ys: Vec<f64> = (0..n)
        .map(|i| r_lo + (r_hi - r_lo) * i as f64 / (n - 1) as f64)
        .collect();
    let values = map_indexed(n * n, Parallelism::Sequential, |idx| {
        let (iy, ix) = (idx / n, idx % n);
        eta_margin_left((xs[ix], ys[iy]), saddle, vx, mu, input_box, params, tire_params)
    });
    let field = marching::GridField {
        xs: &xs,
        ys: &ys,
        values: &values,
    };
    let mut contours = marching::zero_contours(&field);
    contours.sort_by(|a, b| b.len().cmp(&a.len()));
    let polyline = contours.into_iter().next().unwrap_or_else(|| {
        vec![(saddle.0 - WINDOW_BETA, r_bound), (saddle.0 + WINDOW_BETA, r_bound)]
    });
    Ok(EnvelopeBoundary {
        kind: BoundaryKind::Recoverable,
        polyline,
        sense: HalfSpaceSense::Inside,
    })
}

/// Assemble the dual envelope at one operating point.
///
/// The yaw-rate strip edges are anchored at the saddles: the location model
/// at the most permissive admissible inputs provides the initial guess, which
/// a Newton polish refines to an exact equilibrium of the planar field. The
/// inner region is the rear-unsaturated band cut by the strip (and by the
/// front band, which binds at low speed); the outer region is the front band
/// cut by the strip extended with the convergence-certified bumps around the
/// saddles.
pub fn build_dual_envelope(
    vx: f64,
    mu: f64,
    input_box: &InputBox,
    fit: &SaddleFit,
    params: &VehicleParams,
    tire_params: &TireParams,
    opts: &EnvelopeOptions,
) -> Result<DualEnvelope> {
    input_box.validate()?;
    let (fzf, fzr) = static_loads(params)?;
    let alpha_f_sat = tire::saturation_angle(mu, fzf, tire_params)?;
    let alpha_r_sat = tire::saturation_angle(mu, fzr, tire_params)?;
    let front_slope = -params.lf / vx;
    let front_intercept = input_box.delta_min + alpha_f_sat;

    // Anchor saddles: the location model provides guesses over a steering
    // grid; each is Newton-polished, and only genuine drift-branch saddles
    // (Case 3 with beta and r of opposite sign) survive. The strip edge is
    // the extreme yaw rate among the surviving saddles, so the attached
    // saddle lies exactly on the outer boundary. The raw model corner value
    // (yaw_rate_boundary) can extrapolate past the coalescence where the
    // saddle family ends.
    let dmz_anchor = input_box.dmz_nearest_zero();
    let refine = |beta0: f64, r0: f64, delta: f64| -> Option<Point> {
        let cond = Conditions {
            vx,
            mu,
            delta,
            dmz: dmz_anchor,
        };
        refine_equilibrium(beta0, r0, &cond, params, tire_params)
            .filter(|eq| eq.case_id == CaseId::Case3)
            .filter(|eq| eq.beta * eq.r < 0.0)
            .filter(|eq| (eq.beta - beta0).abs() < 0.25 && (eq.r - r0).abs() < 0.25)
            .map(|eq| (eq.beta, eq.r))
    };
    const DELTA_GRID: usize = 13;
    let mut saddle_left: Option<Point> = None;
    let mut saddle_right: Option<Point> = None;
    for i in 0..DELTA_GRID {
        let delta = input_box.delta_min
            + (input_box.delta_max - input_box.delta_min) * i as f64 / (DELTA_GRID - 1) as f64;
        if let Ok(pred) = crate::saddle::eval_saddle_model(fit, mu, vx, delta, dmz_anchor) {
            if let Some(s) = pred.positive_yaw {
                if let Some(found) = refine(s.beta, s.r, delta) {
                    if saddle_left.map_or(true, |cur| found.1 > cur.1) {
                        saddle_left = Some(found);
                    }
                }
            }
            if let Some(s) = pred.negative_yaw {
                if let Some(found) = refine(s.beta, s.r, delta) {
                    if saddle_right.map_or(true, |cur| found.1 < cur.1) {
                        saddle_right = Some(found);
                    }
                }
            }
        }
    }
    // Fall back to the zero-input model prediction when no polish succeeded.
    let fallback = crate::saddle::eval_saddle_model(fit, mu, vx, 0.0, dmz_anchor)?;
    let saddle_left = saddle_left
        .or(fallback.positive_yaw.map(|s| (s.beta, s.r)))
        .ok_or_else(|| Error::domain("no positive-yaw saddle at these conditions"))?;
    let saddle_right = saddle_right
        .or(fallback.negative_yaw.map(|s| (s.beta, s.r)))
        .ok_or_else(|| Error::domain("no negative-yaw saddle at these conditions"))?;
    let (r_upper, r_lower) = (saddle_left.1, saddle_right.1);
    if r_upper <= r_lower {
        return Err(Error::domain("degenerate yaw-rate strip"));
    }

    // Inner region: rear band, strip, and the front band where it binds.
    let big = 10.0;
    let mut inner = vec![(-big, -big), (big, -big), (big, big), (-big, big)];
    let rear_slope = params.lr / vx;
    for hp in [
        geom::HalfPlane { a: 1.0, b: -rear_slope, c: alpha_r_sat },
        geom::HalfPlane { a: -1.0, b: rear_slope, c: alpha_r_sat },
        geom::HalfPlane { a: 0.0, b: 1.0, c: r_upper },
        geom::HalfPlane { a: 0.0, b: -1.0, c: -r_lower },
        geom::HalfPlane { a: -1.0, b: -front_slope, c: -front_intercept },
        geom::HalfPlane { a: 1.0, b: front_slope, c: -front_intercept },
    ] {
        inner = geom::clip_convex(&inner, hp);
        if inner.len() < 3 {
            return Err(Error::domain("inner envelope degenerates at these conditions"));
        }
    }

    // Outer region: marching squares on
    // min(front margin, max(strip margin, convergence margin)).
    let n = opts.outer_grid.max(32);
    let beta_window = front_intercept.abs() + (params.lf / vx) * (r_upper.abs() + WINDOW_R) + 0.1;
    let xs: Vec<f64> = (0..n)
        .map(|i| -beta_window + 2.0 * beta_window * i as f64 / (n - 1) as f64)
        .collect();
    let r_pad = WINDOW_R + 0.1;
    let ys: Vec<f64> = (0..n)
        .map(|i| (r_lower - r_pad) + ((r_upper + r_pad) - (r_lower - r_pad)) * i as f64 / (n - 1) as f64)
        .collect();
    let dr_cell = (ys[1] - ys[0]).abs();
    let eta_band = (2.0 * dr_cell).max(0.05);
    let mirrored_box = input_box.mirrored();
    let mirrored_saddle = (-saddle_right.0, -saddle_right.1);
    let values = map_indexed(n * n, Parallelism::Sequential, |idx| {
        let (iy, ix) = (idx / n, idx % n);
        let (beta, r) = (xs[ix], ys[iy]);
        let left_line = front_slope * r + front_intercept;
        let right_line = front_slope * r - front_intercept;
        let front = (beta - left_line).min(right_line - beta);
        let strip = (r_upper - r).min(r - r_lower);
        let combined = if strip >= eta_band {
            strip
        } else {
            let eta = if r > 0.0 {
                eta_margin_left((beta, r), saddle_left, vx, mu, input_box, params, tire_params)
            } else {
                eta_margin_left(
                    (-beta, -r),
                    mirrored_saddle,
                    vx,
                    mu,
                    &mirrored_box,
                    params,
                    tire_params,
                )
            };
            strip.max(eta)
        };
        front.min(combined)
    });
    let field = marching::GridField {
        xs: &xs,
        ys: &ys,
        values: &values,
    };
    let outer = marching::largest_closed_contour(&field)
        .ok_or_else(|| Error::domain("outer envelope extraction found no contour"))?;

    // Boundary polylines for export.
    let mut boundaries = vec![
        front_sat_boundary(vx, mu, input_box, params, tire_params)?,
        {
            let mut b = front_sat_boundary(vx, mu, input_box, params, tire_params)?;
            for p in &mut b.polyline {
                *p = (-p.0, -p.1);
            }
            b.sense = HalfSpaceSense::BetaAtMost;
            b
        },
        rear_sat_boundary(vx, mu, params, tire_params)?,
        {
            let mut b = rear_sat_boundary(vx, mu, params, tire_params)?;
            for p in &mut b.polyline {
                *p = (-p.0, -p.1);
            }
            b.sense = HalfSpaceSense::BetaAtLeast;
            b
        },
        EnvelopeBoundary {
            kind: BoundaryKind::YawRateMax,
            polyline: vec![(-1.0, r_upper), (1.0, r_upper)],
            sense: HalfSpaceSense::RAtMost,
        },
        EnvelopeBoundary {
            kind: BoundaryKind::YawRateMax,
            polyline: vec![(-1.0, r_lower), (1.0, r_lower)],
            sense: HalfSpaceSense::RAtLeast,
        },
    ];
    boundaries.push(recoverable_region(
        vx,
        mu,
        input_box,
        saddle_left,
        r_upper,
        params,
        tire_params,
        opts.recoverable_grid,
    )?);
    let mut green_right = recoverable_region(
        vx,
        mu,
        &mirrored_box,
        mirrored_saddle,
        -r_lower,
        params,
        tire_params,
        opts.recoverable_grid,
    )?;
    for p in &mut green_right.polyline {
        *p = (-p.0, -p.1);
    }
    boundaries.push(green_right);

    Ok(DualEnvelope {
        vx,
        mu,
        input_box: *input_box,
        alpha_f_sat,
        alpha_r_sat,
        front_slope,
        r_upper,
        r_lower,
        saddle_left,
        saddle_right,
        inner,
        outer,
        boundaries,
    })
}

/// Offline envelope lookup table over a (Vx, mu) grid.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnvelopeTable {
    pub vx_axis: Vec<f64>,
    pub mu_axis: Vec<f64>,
    pub input_box: InputBox,
    /// Row-major cells: `cells[imu * vx_axis.len() + ivx]`.
    pub cells: Vec<DualEnvelope>,
    pub tool: String,
    pub version: String,
}

/// Signed distances returned by a table query.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeQuery {
    /// Positive outside the inner (non-drifting) region.
    pub d_inner: f64,
    /// Positive inside the outer (recoverable) region.
    pub d_outer: f64,
    /// Set when the query point was clamped onto the table grid.
    pub clamped: bool,
}

impl EnvelopeTable {
    /// Build the table cell by cell; cells are independent and run in
    /// parallel under the rayon backend.
    pub fn build(
        vx_axis: Vec<f64>,
        mu_axis: Vec<f64>,
        input_box: InputBox,
        fit: &SaddleFit,
        params: &VehicleParams,
        tire_params: &TireParams,
        opts: &EnvelopeOptions,
        par: Parallelism,
    ) -> Result<Self> {
        if vx_axis.is_empty() || mu_axis.is_empty() {
            return Err(Error::Config("table axes must be non-empty".into()));
        }
        if vx_axis.windows(2).any(|w| w[1] <= w[0]) || mu_axis.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("table axes must be strictly increasing".into()));
        }
        let nv = vx_axis.len();
        let cells_res = map_indexed(nv * mu_axis.len(), par, |idx| {
            let (imu, ivx) = (idx / nv, idx % nv);
            build_dual_envelope(
                vx_axis[ivx],
                mu_axis[imu],
                &input_box,
                fit,
                params,
                tire_params,
                opts,
            )
        });
        let mut cells = Vec::with_capacity(cells_res.len());
        for c in cells_res {
            cells.push(c?);
        }
        Ok(EnvelopeTable {
            vx_axis,
            mu_axis,
            input_box,
            cells,
            tool: "drift-core".into(),
            version: env!("CARGO_PKG_VERSION").into(),
        })
    }

    fn cell(&self, ivx: usize, imu: usize) -> &DualEnvelope {
        &self.cells[imu * self.vx_axis.len() + ivx]
    }

    /// Bilinear interpolation of the per-cell signed distances; queries
    /// outside the grid are clamped and flagged.
    pub fn query(&self, vx: f64, mu: f64, beta: f64, r: f64) -> EnvelopeQuery {
        let locate = |axis: &[f64], v: f64| -> (usize, f64, bool) {
            if axis.len() == 1 {
                return (0, 0.0, false);
            }
            if v <= axis[0] {
                return (0, 0.0, v < axis[0] - 1e-12);
            }
            let last = axis.len() - 1;
            if v >= axis[last] {
                return (last - 1, 1.0, v > axis[last] + 1e-12);
            }
            let i = axis.partition_point(|&a| a <= v).saturating_sub(1).min(last - 1);
            let t = (v - axis[i]) / (axis[i + 1] - axis[i]);
            (i, t, false)
        };
        let (iv, tv, cv) = locate(&self.vx_axis, vx);
        let (im, tm, cm) = locate(&self.mu_axis, mu);
        let iv1 = (iv + 1).min(self.vx_axis.len() - 1);
        let im1 = (im + 1).min(self.mu_axis.len() - 1);
        let corners = [
            (self.cell(iv, im), (1.0 - tv) * (1.0 - tm)),
            (self.cell(iv1, im), tv * (1.0 - tm)),
            (self.cell(iv, im1), (1.0 - tv) * tm),
            (self.cell(iv1, im1), tv * tm),
        ];
        let mut d_inner = 0.0;
        let mut d_outer = 0.0;
        for (cell, w) in corners {
            if w == 0.0 {
                continue;
            }
            d_inner += w * cell.distance_inner(beta, r);
            d_outer += w * cell.distance_outer(beta, r);
        }
        EnvelopeQuery {
            d_inner,
            d_outer,
            clamped: cv || cm,
        }
    }
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::saddle::{fit_saddle_model, locate_saddles_grid, FitDomain, GridSpec, SaddleFit};
    use approx::assert_relative_eq;
    use std::sync::OnceLock;

    fn fixture() -> &'static (VehicleParams, TireParams, SaddleFit) {
        static FIX: OnceLock<(VehicleParams, TireParams, SaddleFit)> = OnceLock::new();
        FIX.get_or_init(|| {
            let params = VehicleParams::default();
            let tire = TireParams::default();
            let spec = GridSpec {
                domain: FitDomain::default(),
                n_mu: 5,
                n_vx: 5,
                n_delta: 5,
                n_dmz: 7,
            };
            let ds = locate_saddles_grid(&spec, &params, &tire, Parallelism::default()).unwrap();
            let fit = fit_saddle_model(&ds, &params, &tire).unwrap();
            (params, tire, fit)
        })
    }

    fn fig13_envelope() -> &'static DualEnvelope {
        static ENV: OnceLock<DualEnvelope> = OnceLock::new();
        ENV.get_or_init(|| {
            let (params, tire, fit) = fixture();
            build_dual_envelope(
                60.0 / 3.6,
                0.8,
                &InputBox::default(),
                fit,
                params,
                tire,
                &EnvelopeOptions::default(),
            )
            .unwrap()
        })
    }

    #[test]
    fn front_boundary_slope_and_intercept() {
        let (params, tire, _) = fixture();
        let b = front_sat_boundary(16.67, 0.8, &InputBox::default(), params, tire).unwrap();
        let (p0, p1) = (b.polyline[0], b.polyline[1]);
        let slope = (p1.0 - p0.0) / (p1.1 - p0.1);
        assert_relative_eq!(slope, -params.lf / 16.67, epsilon = 1e-12);
        let intercept = p0.0 - slope * p0.1;
        let alpha_sat = tire::saturation_angle(0.8, 8477.2, tire).unwrap();
        assert!((intercept - (-0.5 + alpha_sat)).abs() < 1e-6);
        // Faster: shallower slope.
        let b2 = front_sat_boundary(25.0, 0.8, &InputBox::default(), params, tire).unwrap();
        let slope2 = (b2.polyline[1].0 - b2.polyline[0].0) / (b2.polyline[1].1 - b2.polyline[0].1);
        assert!(slope2.abs() < slope.abs());
    }

    #[test]
    fn rear_boundary_slope_and_substitution() {
        let (params, tire, _) = fixture();
        let b = rear_sat_boundary(16.67, 0.8, params, tire).unwrap();
        let (p0, p1) = (b.polyline[0], b.polyline[1]);
        let slope = (p1.0 - p0.0) / (p1.1 - p0.1);
        assert_relative_eq!(slope, params.lr / 16.67, epsilon = 1e-12);
        // At r = 0 the line passes through beta = alpha_r_sat.
        let intercept = p0.0 - slope * p0.1;
        let alpha_sat = tire::saturation_angle(0.8, 8395.9, tire).unwrap();
        assert!((intercept - alpha_sat).abs() < 1e-6);
    }

    #[test]
    fn yaw_boundary_reduces_to_mu_g_over_vx() {
        let (_, _, fit) = fixture();
        // Degenerate input box pinned at zero inputs.
        let tiny = InputBox {
            delta_min: -1e-12,
            delta_max: 1e-12,
            dmz_min: -1e-9,
            dmz_max: 1e-9,
        };
        let b = yaw_rate_boundary(16.67, 0.8, &tiny, fit).unwrap();
        let r = b.polyline[0].1;
        assert_relative_eq!(r, 0.8 * 9.81 / 16.67, epsilon = 1e-6);
        assert_relative_eq!(r, 0.4708, epsilon = 1e-4);
        // Boundary grows with friction.
        let b2 = yaw_rate_boundary(16.67, 0.9, &tiny, fit).unwrap();
        assert!(b2.polyline[0].1 > r);
    }

    #[test]
    fn eta_a_examples() {
        // Directly above the saddle.
        assert_relative_eq!(
            eta_a((0.0, 1.0), (0.0, 0.5)).unwrap(),
            std::f64::consts::FRAC_PI_2
        );
        // Published coordinates: state c against saddle a.
        let v = eta_a((-0.05, 0.47), (-0.14, 0.43)).unwrap();
        assert_relative_eq!(v, (0.04f64 / 0.09).atan(), epsilon = 1e-12);
        assert_relative_eq!(v, 0.4182, epsilon = 1e-4);
        // Swapping the points flips the ray by pi.
        let w = eta_a((-0.14, 0.43), (-0.05, 0.47)).unwrap();
        let diff = (v - w).abs();
        assert_relative_eq!(diff, std::f64::consts::PI, epsilon = 1e-12);
        // Coincident points are rejected.
        assert!(eta_a((0.1, 0.2), (0.1, 0.2)).is_err());
    }

    #[test]
    fn eta_max_matches_brute_force() {
        let (params, tire, _) = fixture();
        let env = fig13_envelope();
        let bx = InputBox::default();
        let (vx, mu) = (60.0 / 3.6, 0.8);
        let states = [
            (env.saddle_left.0 + 0.05, env.saddle_left.1 + 0.05),
            (env.saddle_left.0 - 0.03, env.saddle_left.1 + 0.10),
            (env.saddle_left.0 + 0.10, env.saddle_left.1 + 0.02),
        ];
        for state in states {
            let ours = eta_max(state, vx, mu, &bx, params, tire).unwrap();
            // Brute force: locate the yaw-acceleration minimiser on a dense
            // input grid, then evaluate the same angle composition there.
            let (fzf, fzr) = static_loads(params).unwrap();
            let alpha_r = state.0 - params.lr * state.1 / vx;
            let fyr = tire::lateral_force(alpha_r, fzr, mu, tire).unwrap();
            let mut best = (f64::INFINITY, 0.0);
            for i in 0..101 {
                let delta = bx.delta_min + (bx.delta_max - bx.delta_min) * i as f64 / 100.0;
                let alpha_f = state.0 + params.lf * state.1 / vx - delta;
                if let Ok(fyf) = tire::lateral_force(alpha_f, fzf, mu, tire) {
                    if fyf < best.0 {
                        best = (fyf, delta);
                    }
                }
            }
            let rdot = (best.0 * params.lf - fyr * params.lr + bx.dmz_min) / params.iz;
            let bdot = (best.0 + fyr) / (params.m * vx) - state.1;
            let brute = (-rdot).atan2(-bdot);
            let half_degree = 0.5f64.to_radians();
            assert!(
                (ours.eta - brute).abs() < half_degree,
                "eta {} vs brute {}",
                ours.eta,
                brute
            );
        }
    }

    #[test]
    fn eta_max_grows_with_the_input_box() {
        let (params, tire, _) = fixture();
        let env = fig13_envelope();
        let state = (env.saddle_left.0 + 0.04, env.saddle_left.1 + 0.08);
        let small = InputBox {
            delta_min: -0.3,
            delta_max: 0.3,
            dmz_min: -2000.0,
            dmz_max: 2000.0,
        };
        let big = InputBox::default();
        let e_small = eta_max(state, 60.0 / 3.6, 0.8, &small, params, tire).unwrap();
        let e_big = eta_max(state, 60.0 / 3.6, 0.8, &big, params, tire).unwrap();
        assert!(e_big.eta >= e_small.eta - 1e-12);
    }

    #[test]
    fn strip_interior_is_recoverable() {
        let (params, tire, _) = fixture();
        let env = fig13_envelope();
        for &(db, dr) in &[(0.0, 0.0), (0.05, 0.3), (-0.1, -0.5), (0.2, 0.8)] {
            let beta = db;
            let r = dr * env.r_upper;
            if env.front_margin(beta, r) > 0.01 && r.abs() < env.r_upper {
                assert!(env.is_recoverable(beta, r, params, tire));
            }
        }
    }

    #[test]
    fn fig13_topology() {
        let (params, tire, _) = fixture();
        let env = fig13_envelope();
        // Saddle anchors the outer boundary.
        let d_saddle = env.distance_outer(env.saddle_left.0, env.saddle_left.1);
        assert!(
            d_saddle.abs() < 0.02,
            "saddle should sit on the outer boundary, d = {d_saddle}"
        );
        // Saddle lies outside the inner region.
        assert!(env.distance_inner(env.saddle_left.0, env.saddle_left.1) > 0.0);
        // Inner is contained in outer: every inner vertex keeps a
        // nonnegative outer distance.
        for p in &env.inner {
            assert!(env.distance_outer(p.0, p.1) > -1e-3);
        }
        // A white annulus exists: some state outside inner, inside outer.
        let mid = (
            0.5 * (env.saddle_left.0 + env.inner[0].0),
            0.5 * (env.saddle_left.1 + env.inner[0].1),
        );
        let _ = mid;
        let probe = (env.saddle_left.0 + 0.02, env.saddle_left.1 - 0.05);
        assert!(env.distance_inner(probe.0, probe.1) > 0.0);
        assert!(env.distance_outer(probe.0, probe.1) > 0.0);
        let _ = (params, tire);
    }

    #[test]
    fn envelope_mirrors_under_odd_symmetry() {
        let env = fig13_envelope();
        assert_relative_eq!(env.saddle_left.0, -env.saddle_right.0, epsilon = 1e-9);
        assert_relative_eq!(env.saddle_left.1, -env.saddle_right.1, epsilon = 1e-9);
        // Mirrored outer vertices stay on the outer boundary.
        for p in env.outer.iter().step_by(25) {
            let d = env.distance_outer(-p.0, -p.1);
            assert!(
                d.abs() < 0.015,
                "mirror of ({}, {}) off the boundary by {d}",
                p.0,
                p.1
            );
        }
    }

    #[test]
    fn recoverable_region_self_converges() {
        let (params, tire, _) = fixture();
        let env = fig13_envelope();
        let bx = InputBox::default();
        let coarse = recoverable_region(
            60.0 / 3.6,
            0.8,
            &bx,
            env.saddle_left,
            env.r_upper,
            params,
            tire,
            120,
        )
        .unwrap();
        let fine = recoverable_region(
            60.0 / 3.6,
            0.8,
            &bx,
            env.saddle_left,
            env.r_upper,
            params,
            tire,
            240,
        )
        .unwrap();
        let cell = (2.0 * WINDOW_BETA / 119.0).max(WINDOW_R / 119.0);
        for p in &coarse.polyline {
            let d = fine
                .polyline
                .iter()
                .map(|q| (p.0 - q.0).hypot(p.1 - q.1))
                .fold(f64::INFINITY, f64::min);
            assert!(d <= cell, "refinement moved the green curve by {d} > {cell}");
        }
    }

    #[test]
    fn membership_monotone_in_the_box() {
        let (params, tire, fit) = fixture();
        let small_box = InputBox {
            delta_min: -0.25,
            delta_max: 0.25,
            dmz_min: -1500.0,
            dmz_max: 1500.0,
        };
        let env_small = build_dual_envelope(
            60.0 / 3.6,
            0.8,
            &small_box,
            fit,
            params,
            tire,
            &EnvelopeOptions::default(),
        )
        .unwrap();
        let env_big = fig13_envelope();
        // Any point recoverable under the small box must stay recoverable
        // under the full box (same anchor saddle used for a fair test).
        let saddle = env_small.saddle_left;
        for i in 0..40 {
            let beta = saddle.0 - 0.2 + 0.4 * (i as f64 / 39.0);
            let r = env_small.r_upper + 0.02 + 0.3 * ((i * 7 % 13) as f64 / 12.0);
            let small_margin = eta_margin_left(
                (beta, r),
                saddle,
                60.0 / 3.6,
                0.8,
                &small_box,
                params,
                tire,
            );
            if small_margin >= 0.0 {
                let big_margin = eta_margin_left(
                    (beta, r),
                    saddle,
                    60.0 / 3.6,
                    0.8,
                    &env_big.input_box,
                    params,
                    tire,
                );
                assert!(
                    big_margin >= small_margin - 1e-9,
                    "margin shrank when the box grew at ({beta}, {r})"
                );
            }
        }
    }

    #[test]
    fn table_query_matches_cells_and_stays_continuous() {
        let (params, tire, fit) = fixture();
        let table = EnvelopeTable::build(
            vec![14.0, 16.67, 19.0],
            vec![0.7, 0.8],
            InputBox::default(),
            fit,
            params,
            tire,
            &EnvelopeOptions {
                outer_grid: 121,
                recoverable_grid: 60,
            },
            Parallelism::default(),
        )
        .unwrap();
        // At a node the query equals the direct cell distances.
        let cell = &table.cells[1 * 3 + 1]; // mu = 0.8, vx = 16.67
        let q = table.query(16.67, 0.8, -0.1, 0.3);
        assert_relative_eq!(q.d_inner, cell.distance_inner(-0.1, 0.3), epsilon = 1e-12);
        assert_relative_eq!(q.d_outer, cell.distance_outer(-0.1, 0.3), epsilon = 1e-12);
        assert!(!q.clamped);

        // Sweeping vx across a cell edge produces no jump.
        let mut last = None;
        for i in 0..=60 {
            let vx = 15.5 + 2.5 * i as f64 / 60.0;
            let q = table.query(vx, 0.75, -0.08, 0.35);
            if let Some(prev) = last {
                let jump: f64 = q.d_outer - prev;
                assert!(jump.abs() < 0.05, "distance jump {jump} across the sweep");
            }
            last = Some(q.d_outer);
        }

        // Outside the grid: clamped and flagged.
        let q = table.query(30.0, 0.8, 0.0, 0.0);
        assert!(q.clamped);

        // Saddle query: on the outer boundary.
        let q = table.query(16.67, 0.8, cell.saddle_left.0, cell.saddle_left.1);
        assert!(q.d_outer.abs() < 0.03);
    }
}
