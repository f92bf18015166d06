use drift_core::envelope::*;
use drift_core::saddle::*;
use drift_core::tire::TireParams;
use drift_core::vehicle::{derivatives_2dof, VehicleParams};
use drift_core::Parallelism;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rk4_2dof(beta: f64, r: f64, vx: f64, mu: f64, delta: f64, dmz: f64, dt: f64,
            p: &VehicleParams, t: &TireParams) -> Option<(f64, f64)> {
    let f = |b: f64, y: f64| derivatives_2dof(b, y, vx, delta, mu, dmz, p, t).ok();
    let k1 = f(beta, r)?;
    let k2 = f(beta + 0.5*dt*k1.0, r + 0.5*dt*k1.1)?;
    let k3 = f(beta + 0.5*dt*k2.0, r + 0.5*dt*k2.1)?;
    let k4 = f(beta + dt*k3.0, r + dt*k3.1)?;
    Some((beta + dt/6.0*(k1.0+2.0*k2.0+2.0*k3.0+k4.0), r + dt/6.0*(k1.1+2.0*k2.1+2.0*k3.1+k4.1)))
}

fn main() {
    let params = VehicleParams::default();
    let tire = TireParams::default();
    let spec = GridSpec { domain: FitDomain::default(), n_mu: 6, n_vx: 6, n_delta: 7, n_dmz: 8 };
    let ds = locate_saddles_grid(&spec, &params, &tire, Parallelism::default()).unwrap();
    let fit = fit_saddle_model(&ds, &params, &tire).unwrap();
    let (vx, mu) = (60.0/3.6, 0.8);
    let env = build_dual_envelope(vx, mu, &InputBox::default(), &fit, &params, &tire, &EnvelopeOptions::default()).unwrap();
    let saddle = env.saddle_left;
    println!("saddle ({:+.4},{:+.4}) strip top {:+.4}", saddle.0, saddle.1, env.r_upper);

    // collect eta-certified states beyond the strip
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut samples = Vec::new();
    while samples.len() < 60 {
        let beta = saddle.0 + rng.random_range(-0.25..0.25);
        let r = env.r_upper + rng.random_range(0.0..0.5f64).min(saddle.1 + 0.5 - env.r_upper);
        if r <= env.r_upper { continue; }
        if env.front_margin(beta, r) < 0.0 { continue; }
        if env.is_recoverable(beta, r, &params, &tire) {
            samples.push((beta, r));
        }
    }
    let bx = InputBox::default();
    let mut ok = 0;
    let mut worst = Vec::new();
    for &(b0, r0) in &samples {
        let mut reached = false;
        let mut best_d = f64::INFINITY;
        'inputs: for i in 0..161 {
            for j in 0..161 {
                let delta = bx.delta_min + (bx.delta_max - bx.delta_min) * i as f64 / 160.0;
                let dmz = bx.dmz_min + (bx.dmz_max - bx.dmz_min) * j as f64 / 160.0;
                let (mut b, mut r) = (b0, r0);
                for _ in 0..600 {
                    match rk4_2dof(b, r, vx, mu, delta, dmz, 0.005, &params, &tire) {
                        Some((nb, nr)) => { b = nb; r = nr; }
                        None => break,
                    }
                    let d = (b - saddle.0).hypot(r - saddle.1);
                    best_d = best_d.min(d);
                    if d < 0.02 { reached = true; break 'inputs; }
                }
            }
        }
        if reached { ok += 1; } else { worst.push((b0, r0, best_d)); }
    }
    println!("reached: {}/{} = {:.1}%", ok, samples.len(), 100.0 * ok as f64 / samples.len() as f64);
    for w in worst.iter().take(8) { println!("  miss ({:+.3},{:+.3}) best_d={:.4}", w.0, w.1, w.2); }
}
