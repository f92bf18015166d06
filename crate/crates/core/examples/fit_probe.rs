use drift_core::saddle::*;
use drift_core::tire::TireParams;
use drift_core::vehicle::VehicleParams;

fn main() {
    // same synthetic setup as the unit test
    let mut p = [0.0; 12];
    p[0]=0.139; p[1]=0.001; p[2]=0.05; p[3]=1.1; p[4]=-0.2; p[5]=0.004;
    p[6]=15000.0; p[7]=0.005; p[9]=18000.0; p[10]=0.004;
    let params = VehicleParams::default();
    let domain = FitDomain::default();
    let fitref = SaddleFit { p, domain, rms_beta: 0.0, rms_r: 0.0, g: params.g, lf: params.lf, warning_nonconverged: false };
    let mut rows = Vec::new();
    for &mu in &domain.mu.linspace(5) {
        for &vx in &domain.vx.linspace(5) {
            for &delta in &domain.delta.linspace(6) {
                for &dmz in &domain.dmz.linspace(6) {
                    let pred = eval_saddle_model(&fitref, mu, vx, delta, dmz).unwrap();
                    if let Some(sp) = pred.positive_yaw {
                        rows.push(SaddleObservation { mu, vx, delta, dmz, branch: SaddleBranch::PositiveYaw, beta: sp.beta, r: sp.r });
                    }
                    if let Some(sp) = pred.negative_yaw {
                        rows.push(SaddleObservation { mu, vx, delta, dmz, branch: SaddleBranch::NegativeYaw, beta: sp.beta, r: sp.r });
                    }
                }
            }
        }
    }
    println!("rows {}", rows.len());
    let ds = SaddleDataset { domain, grid: [5,5,6,6], rows, empty_cells: 0 };
    let tire = TireParams::default();
    let fit = fit_saddle_model(&ds, &params, &tire).unwrap();
    println!("warn={} rms=({:.2e},{:.2e})", fit.warning_nonconverged, fit.rms_beta, fit.rms_r);
    for i in 0..12 {
        println!("p{:<2} truth {:>12.6} fit {:>14.8} relerr {:.2e}", i+1, p[i], fit.p[i], (fit.p[i]-p[i]).abs()/p[i].abs().max(1e-3));
    }
}
