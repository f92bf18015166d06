//! Saddle-point location over the operating domain: numeric location on a
//! (mu, Vx, delta, dMz) grid, a 12-parameter closed-form location model, and
//! its least-squares identification.
//!
//! The model: with `alpha_sat(mu) = p1 mu + p2`,
//!
//! ```text
//! f1 = p3 delta / mu
//! f2 = p4 + p5 delta mu + p6 Vx
//! f3 = 1 - (dMz / (mu p7 (1 - (p8 Vx + p9))))^2
//! f4 = 1 - (dMz / (mu p10 (1 - (p11 Vx + p12))))^2
//! r_s{1,2}   = (+-mu g / Vx + f1) f3
//! beta_s{1,2} = (-lf r_s{1,2} / Vx + (-+|alpha_sat| + delta) f2) f4
//! ```
//!
//! `f3 <= 0` or `f4 <= 0` marks the saddle nonexistent (yaw moment beyond
//! coalescence). The printed denominators are over-parameterised (only the
//! products `p7 (1 - p9)` and `p7 p8` are identifiable), so the fit pins
//! `p9 = p12 = 0` and identifies the remaining ten parameters.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::equilibrium::{find_equilibria, CaseId, Conditions};
use crate::error::{Error, Result};
use crate::exec::{map_indexed, Parallelism};
use crate::tire::{saturation_angle, TireParams};
use crate::vehicle::{static_loads, VehicleParams};

/// Closed interval.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub fn new(min: f64, max: f64) -> Self {
        Range { min, max }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.min - 1e-12 && v <= self.max + 1e-12
    }

    pub fn linspace(&self, n: usize) -> Vec<f64> {
        if n == 1 {
            return vec![0.5 * (self.min + self.max)];
        }
        (0..n)
            .map(|i| self.min + (self.max - self.min) * i as f64 / (n - 1) as f64)
            .collect()
    }
}

/// Domain the location model is identified over and valid inside.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct FitDomain {
    pub mu: Range,
    pub vx: Range,
    pub delta: Range,
    pub dmz: Range,
}

impl Default for FitDomain {
    fn default() -> Self {
        FitDomain {
            mu: Range::new(0.3, 1.0),
            vx: Range::new(20.0 / 3.6, 90.0 / 3.6),
            delta: Range::new(-0.5, 0.5),
            dmz: Range::new(-3500.0, 3500.0),
        }
    }
}

impl FitDomain {
    pub fn contains(&self, mu: f64, vx: f64, delta: f64, dmz: f64) -> bool {
        self.mu.contains(mu)
            && self.vx.contains(vx)
            && self.delta.contains(delta)
            && self.dmz.contains(dmz)
    }
}

/// Which of the saddle pair an observation belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SaddleBranch {
    /// r > 0 branch (`r_s1`).
    PositiveYaw,
    /// r < 0 branch (`r_s2`).
    NegativeYaw,
}

/// One located saddle.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SaddleObservation {
    pub mu: f64,
    /// m/s
    pub vx: f64,
    /// rad
    pub delta: f64,
    /// N m
    pub dmz: f64,
    pub branch: SaddleBranch,
    /// rad
    pub beta: f64,
    /// rad/s
    pub r: f64,
}

/// Numerically located saddles over a grid.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SaddleDataset {
    pub domain: FitDomain,
    /// Cells of the generating grid (mu, vx, delta, dmz).
    pub grid: [usize; 4],
    pub rows: Vec<SaddleObservation>,
    /// Grid cells in which no saddle exists (expected near coalescence).
    pub empty_cells: usize,
}

/// Grid specification for `locate_saddles_grid`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GridSpec {
    pub domain: FitDomain,
    pub n_mu: usize,
    pub n_vx: usize,
    pub n_delta: usize,
    pub n_dmz: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            domain: FitDomain::default(),
            n_mu: 6,
            n_vx: 6,
            n_delta: 7,
            n_dmz: 8,
        }
    }
}

impl GridSpec {
    pub fn cells(&self) -> usize {
        self.n_mu * self.n_vx * self.n_delta * self.n_dmz
    }
}

/// Locate the saddle pair in every grid cell.
///
/// Runs the multi-start Newton search per cell and keeps the Case-3 roots,
/// one per yaw-rate sign. Cells without a saddle are counted, not errors.
pub fn locate_saddles_grid(
    spec: &GridSpec,
    params: &VehicleParams,
    tire_params: &TireParams,
    par: Parallelism,
) -> Result<SaddleDataset> {
    let mus = spec.domain.mu.linspace(spec.n_mu);
    let vxs = spec.domain.vx.linspace(spec.n_vx);
    let deltas = spec.domain.delta.linspace(spec.n_delta);
    let dmzs = spec.domain.dmz.linspace(spec.n_dmz);
    let mut cells = Vec::with_capacity(spec.cells());
    for &mu in &mus {
        for &vx in &vxs {
            for &delta in &deltas {
                for &dmz in &dmzs {
                    cells.push(Conditions {
                        vx,
                        mu,
                        delta,
                        dmz,
                    });
                }
            }
        }
    }
    let per_cell = map_indexed(cells.len(), par, |i| {
        let cond = cells[i];
        let mut found: Vec<SaddleObservation> = Vec::new();
        if let Ok(eqs) = find_equilibria(&cond, params, tire_params) {
            for branch in [SaddleBranch::PositiveYaw, SaddleBranch::NegativeYaw] {
                // Drift-branch saddles only: beta and r of opposite sign.
                let pick = eqs
                    .iter()
                    .filter(|e| e.case_id == CaseId::Case3 && e.beta * e.r < 0.0)
                    .filter(|e| match branch {
                        SaddleBranch::PositiveYaw => e.r > 0.0,
                        SaddleBranch::NegativeYaw => e.r < 0.0,
                    })
                    .max_by(|a, b| a.r.abs().total_cmp(&b.r.abs()));
                if let Some(eq) = pick {
                    found.push(SaddleObservation {
                        mu: cond.mu,
                        vx: cond.vx,
                        delta: cond.delta,
                        dmz: cond.dmz,
                        branch,
                        beta: eq.beta,
                        r: eq.r,
                    });
                }
            }
        }
        found
    });
    let mut rows = Vec::new();
    let mut empty_cells = 0;
    for cell in per_cell {
        if cell.is_empty() {
            empty_cells += 1;
        }
        rows.extend(cell);
    }
    Ok(SaddleDataset {
        domain: spec.domain,
        grid: [spec.n_mu, spec.n_vx, spec.n_delta, spec.n_dmz],
        rows,
        empty_cells,
    })
}

/// Identified location model.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SaddleFit {
    /// p1..p12 (1-indexed in the model equations).
    pub p: [f64; 12],
    pub domain: FitDomain,
    /// Per-coordinate RMS of the fit residuals, (rad, rad/s).
    pub rms_beta: f64,
    pub rms_r: f64,
    /// Gravitational acceleration and front-axle lever arm baked into the
    /// model terms.
    pub g: f64,
    pub lf: f64,
    /// Set when no seed converged within the iteration budget.
    pub warning_nonconverged: bool,
}

/// Model prediction for one saddle branch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaddlePoint {
    pub beta: f64,
    pub r: f64,
}

/// Both branches; `None` marks a saddle nonexistent at these conditions.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SaddlePrediction {
    pub positive_yaw: Option<SaddlePoint>,
    pub negative_yaw: Option<SaddlePoint>,
}

fn guarded(denom: f64) -> f64 {
    if denom.abs() < 1e-9 {
        1e-9f64.copysign(if denom == 0.0 { 1.0 } else { denom })
    } else {
        denom
    }
}

fn model_terms(p: &[f64; 12], mu: f64, vx: f64, delta: f64, dmz: f64) -> (f64, f64, f64, f64) {
    let f1 = p[2] * delta / mu;
    let f2 = p[3] + p[4] * delta * mu + p[5] * vx;
    let d3 = guarded(mu * p[6] * (1.0 - (p[7] * vx + p[8])));
    let f3 = 1.0 - (dmz / d3).powi(2);
    let d4 = guarded(mu * p[9] * (1.0 - (p[10] * vx + p[11])));
    let f4 = 1.0 - (dmz / d4).powi(2);
    (f1, f2, f3, f4)
}

/// Raw model output without the existence cut; used by the fit so residual
/// gradients stay smooth through the coalescence surface.
fn model_raw(
    p: &[f64; 12],
    g: f64,
    lf: f64,
    mu: f64,
    vx: f64,
    delta: f64,
    dmz: f64,
) -> (SaddlePoint, SaddlePoint, f64, f64) {
    let (f1, f2, f3, f4) = model_terms(p, mu, vx, delta, dmz);
    let alpha_sat = (p[0] * mu + p[1]).abs();
    let r1 = (mu * g / vx + f1) * f3;
    let r2 = (-mu * g / vx + f1) * f3;
    let b1 = (-lf * r1 / vx + (-alpha_sat + delta) * f2) * f4;
    let b2 = (-lf * r2 / vx + (alpha_sat + delta) * f2) * f4;
    (
        SaddlePoint { beta: b1, r: r1 },
        SaddlePoint { beta: b2, r: r2 },
        f3,
        f4,
    )
}

fn model_predict(
    p: &[f64; 12],
    g: f64,
    lf: f64,
    mu: f64,
    vx: f64,
    delta: f64,
    dmz: f64,
) -> SaddlePrediction {
    let (s1, s2, f3, f4) = model_raw(p, g, lf, mu, vx, delta, dmz);
    if f3 <= 0.0 || f4 <= 0.0 {
        return SaddlePrediction {
            positive_yaw: None,
            negative_yaw: None,
        };
    }
    SaddlePrediction {
        positive_yaw: Some(s1),
        negative_yaw: Some(s2),
    }
}

/// Evaluate the identified model inside its domain.
pub fn eval_saddle_model(
    fit: &SaddleFit,
    mu: f64,
    vx: f64,
    delta: f64,
    dmz: f64,
) -> Result<SaddlePrediction> {
    if !fit.domain.contains(mu, vx, delta, dmz) {
        return Err(Error::Config(format!(
            "query (mu={mu}, vx={vx}, delta={delta}, dmz={dmz}) outside the fit domain"
        )));
    }
    Ok(model_predict(&fit.p, fit.g, fit.lf, mu, vx, delta, dmz))
}

/// Affine regression of the front saturation angle against mu over the given
/// range: `alpha_sat ~ p1 mu + p2`.
pub fn saturation_affine(
    mu_range: Range,
    params: &VehicleParams,
    tire_params: &TireParams,
) -> Result<(f64, f64)> {
    let (fzf, _) = static_loads(params)?;
    let mus = mu_range.linspace(15);
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &mu in &mus {
        let a = saturation_angle(mu, fzf, tire_params)?;
        sx += mu;
        sy += a;
        sxx += mu * mu;
        sxy += mu * a;
    }
    let n = mus.len() as f64;
    let p1 = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let p2 = (sy - p1 * sx) / n;
    Ok((p1, p2))
}

/// Parameters actually identified by the nonlinear stage
/// (p3..p8, p10, p11; p9 and p12 are pinned to zero).
const FREE: [usize; 8] = [2, 3, 4, 5, 6, 7, 9, 10];

fn theta_to_p(theta: &[f64; 8], p12_base: &[f64; 12]) -> [f64; 12] {
    let mut p = *p12_base;
    for (k, &idx) in FREE.iter().enumerate() {
        p[idx] = theta[k];
    }
    p[8] = 0.0;
    p[11] = 0.0;
    p
}

struct FitData {
    rows: Vec<SaddleObservation>,
    sigma_beta: f64,
    sigma_r: f64,
    g: f64,
    lf: f64,
}

fn residuals(theta: &[f64; 8], base: &[f64; 12], data: &FitData, out: &mut [f64]) {
    let p = theta_to_p(theta, base);
    for (i, row) in data.rows.iter().enumerate() {
        let (s1, s2, _, _) = model_raw(&p, data.g, data.lf, row.mu, row.vx, row.delta, row.dmz);
        let sp = match row.branch {
            SaddleBranch::PositiveYaw => s1,
            SaddleBranch::NegativeYaw => s2,
        };
        out[2 * i] = (sp.beta - row.beta) / data.sigma_beta;
        out[2 * i + 1] = (sp.r - row.r) / data.sigma_r;
    }
}

fn sum_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Characteristic magnitudes of the free parameters; the search runs in
/// scaled coordinates to keep the normal equations well conditioned.
const THETA_SCALE: [f64; 8] = [0.1, 1.0, 0.5, 0.01, 1e4, 0.01, 1e4, 0.01];

/// Damped Gauss-Newton (Levenberg-Marquardt) on the weighted residuals.
/// Returns (theta, sse, converged).
fn levenberg_marquardt(
    theta0: [f64; 8],
    base: &[f64; 12],
    data: &FitData,
    max_iter: usize,
) -> ([f64; 8], f64, bool) {
    use nalgebra::{DMatrix, DVector};
    let m = 2 * data.rows.len();
    let unscale = |t: &[f64; 8]| {
        let mut out = [0.0; 8];
        for k in 0..8 {
            out[k] = t[k] * THETA_SCALE[k];
        }
        out
    };
    let mut scaled = [0.0; 8];
    for k in 0..8 {
        scaled[k] = theta0[k] / THETA_SCALE[k];
    }
    let mut res = vec![0.0; m];
    residuals(&unscale(&scaled), base, data, &mut res);
    let mut sse = sum_sq(&res);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut jac = DMatrix::<f64>::zeros(m, 8);
    let mut r_plus = vec![0.0; m];
    let mut r_minus = vec![0.0; m];
    for _ in 0..max_iter {
        for k in 0..8 {
            let h = 1e-6 * scaled[k].abs().max(1.0);
            let mut tp = scaled;
            tp[k] += h;
            residuals(&unscale(&tp), base, data, &mut r_plus);
            let mut tm = scaled;
            tm[k] -= h;
            residuals(&unscale(&tm), base, data, &mut r_minus);
            for i in 0..m {
                jac[(i, k)] = (r_plus[i] - r_minus[i]) / (2.0 * h);
            }
        }
        let r_vec = DVector::from_column_slice(&res);
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * r_vec;
        if jtr.amax() < 1e-10 {
            converged = true;
            break;
        }
        let mut improved = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for k in 0..8 {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            let step = match a.lu().solve(&(-&jtr)) {
                Some(s) => s,
                None => break,
            };
            let mut trial = scaled;
            for k in 0..8 {
                trial[k] += step[k];
            }
            let mut trial_res = vec![0.0; m];
            residuals(&unscale(&trial), base, data, &mut trial_res);
            let trial_sse = sum_sq(&trial_res);
            if trial_sse.is_finite() && trial_sse < sse {
                scaled = trial;
                res = trial_res;
                sse = trial_sse;
                lambda = (lambda * 0.5).max(1e-14);
                improved = true;
                if step.amax() < 1e-12 {
                    converged = true;
                }
                break;
            }
            lambda *= 4.0;
            if lambda > 1e14 {
                break;
            }
        }
        if !improved {
            // Stalled at a stationary point; treat as converged.
            converged = true;
            break;
        }
        if converged {
            break;
        }
    }
    (unscale(&scaled), sse, converged)
}

/// Fit p1, p2 by least squares of the front saturation angle against mu, then
/// p3..p12 by multi-start Levenberg-Marquardt against the dataset. The best
/// seed by residual wins; ten seeds from a fixed stream keep the result
/// deterministic.
pub fn fit_saddle_model(
    dataset: &SaddleDataset,
    params: &VehicleParams,
    tire_params: &TireParams,
) -> Result<SaddleFit> {
    if dataset.rows.len() < 500 {
        return Err(Error::Config(format!(
            "need at least 500 dataset rows, got {}",
            dataset.rows.len()
        )));
    }
    let (p1, p2) = saturation_affine(dataset.domain.mu, params, tire_params)?;

    let mean_beta = dataset.rows.iter().map(|r| r.beta).sum::<f64>() / dataset.rows.len() as f64;
    let mean_r = dataset.rows.iter().map(|r| r.r).sum::<f64>() / dataset.rows.len() as f64;
    let sigma_beta = (dataset
        .rows
        .iter()
        .map(|r| (r.beta - mean_beta).powi(2))
        .sum::<f64>()
        / dataset.rows.len() as f64)
        .sqrt()
        .max(1e-6);
    let sigma_r = (dataset
        .rows
        .iter()
        .map(|r| (r.r - mean_r).powi(2))
        .sum::<f64>()
        / dataset.rows.len() as f64)
        .sqrt()
        .max(1e-6);
    let data = FitData {
        rows: dataset.rows.clone(),
        sigma_beta,
        sigma_r,
        g: params.g,
        lf: params.lf,
    };
    let mut base = [0.0; 12];
    base[0] = p1;
    base[1] = p2;

    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut seeds: Vec<[f64; 8]> = Vec::with_capacity(10);
    // Structural guess: neutral adjustment functions, moment denominators
    // sized so the largest commanded moment sits inside the coalescence.
    let dmz_max = dataset.domain.dmz.min.abs().max(dataset.domain.dmz.max.abs());
    let d_guess = (2.0 * dmz_max / dataset.domain.mu.min).max(1000.0);
    seeds.push([0.0, 1.0, 0.0, 0.0, d_guess, 0.0, d_guess, 0.0]);
    while seeds.len() < 10 {
        seeds.push([
            rng.random_range(-0.15..0.15),     // p3
            rng.random_range(0.6..1.4),        // p4
            rng.random_range(-0.5..0.5),       // p5
            rng.random_range(-0.02..0.02),     // p6
            rng.random_range(5000.0..30000.0), // p7
            rng.random_range(-0.01..0.01),     // p8
            rng.random_range(5000.0..30000.0), // p10
            rng.random_range(-0.01..0.01),     // p11
        ]);
    }
    let mut best: Option<([f64; 8], f64, bool)> = None;
    for seed_theta in seeds {
        let (theta, sse, converged) = levenberg_marquardt(seed_theta, &base, &data, 200);
        let better = match &best {
            Some((_, best_sse, _)) => sse < *best_sse,
            None => true,
        };
        if better {
            best = Some((theta, sse, converged));
        }
    }
    let (theta, _, converged) = best.expect("at least one seed ran");
    let p = theta_to_p(&theta, &base);

    // Unweighted per-coordinate RMS of the winning fit.
    let mut res = vec![0.0; 2 * data.rows.len()];
    residuals(&theta, &base, &data, &mut res);
    let mut ss_beta = 0.0;
    let mut ss_r = 0.0;
    for i in 0..data.rows.len() {
        ss_beta += (res[2 * i] * sigma_beta).powi(2);
        ss_r += (res[2 * i + 1] * sigma_r).powi(2);
    }
    let n_rows = data.rows.len() as f64;
    Ok(SaddleFit {
        p,
        domain: dataset.domain,
        rms_beta: (ss_beta / n_rows).sqrt(),
        rms_r: (ss_r / n_rows).sqrt(),
        g: params.g,
        lf: params.lf,
        warning_nonconverged: !converged,
    })
}
