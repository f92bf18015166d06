use drift_core::envelope::*;
use drift_core::saddle::*;
use drift_core::tire::TireParams;
use drift_core::vehicle::VehicleParams;
use drift_core::Parallelism;

fn main() {
    let params = VehicleParams::default();
    let tire = TireParams::default();
    let spec = GridSpec { domain: FitDomain::default(), n_mu: 6, n_vx: 6, n_delta: 7, n_dmz: 8 };
    let ds = locate_saddles_grid(&spec, &params, &tire, Parallelism::default()).unwrap();
    let fit = fit_saddle_model(&ds, &params, &tire).unwrap();
    println!("fit rms ({:.4},{:.4})", fit.rms_beta, fit.rms_r);

    let t0 = std::time::Instant::now();
    let env = build_dual_envelope(60.0/3.6, 0.8, &InputBox::default(), &fit, &params, &tire, &EnvelopeOptions::default()).unwrap();
    println!("build: {:.2?}", t0.elapsed());
    println!("saddles: left ({:+.4},{:+.4}) right ({:+.4},{:+.4})", env.saddle_left.0, env.saddle_left.1, env.saddle_right.0, env.saddle_right.1);
    println!("r strip: [{:+.4}, {:+.4}] alpha_sat f/r = {:.4}/{:.4}", env.r_lower, env.r_upper, env.alpha_f_sat, env.alpha_r_sat);
    println!("inner verts {} area {:.4}", env.inner.len(), geom::polygon_area(&env.inner));
    println!("outer verts {} area {:.4}", env.outer.len(), geom::polygon_area(&env.outer));
    println!("saddle d_outer {:+.5} d_inner {:+.5}", env.distance_outer(env.saddle_left.0, env.saddle_left.1), env.distance_inner(env.saddle_left.0, env.saddle_left.1));
    // inner subset of outer: sample check
    for p in &env.inner {
        let d = env.distance_outer(p.0, p.1);
        if d < -1e-3 { println!("INNER VERTEX OUTSIDE OUTER: ({:.3},{:.3}) d={:.4}", p.0, p.1, d); }
    }
    // area trends
    for vx_kmh in [40.0, 60.0, 80.0] {
        let e = build_dual_envelope(vx_kmh/3.6, 0.8, &InputBox::default(), &fit, &params, &tire, &EnvelopeOptions::default()).unwrap();
        println!("vx={vx_kmh} km/h mu=0.8: outer area {:.4}", geom::polygon_area(&e.outer));
    }
    for mu in [0.5, 0.7, 0.9] {
        let e = build_dual_envelope(60.0/3.6, mu, &InputBox::default(), &fit, &params, &tire, &EnvelopeOptions::default()).unwrap();
        println!("vx=60 km/h mu={mu}: outer area {:.4}", geom::polygon_area(&e.outer));
    }
}
