use drift_core::equilibrium::*;
use drift_core::tire::TireParams;
use drift_core::vehicle::VehicleParams;

fn main() {
    let p = VehicleParams::default();
    let t = TireParams::default();
    for &delta in &[0.0, 0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.5] {
        let cond = Conditions { vx: 60.0/3.6, mu: 0.9, delta, dmz: 0.0 };
        let eqs = find_equilibria(&cond, &p, &t).unwrap();
        print!("delta={delta:4.2}: ");
        for e in &eqs {
            print!("({:+.3},{:+.3},{:?},{:?}) ", e.beta, e.r, e.case_id, e.class);
        }
        println!();
    }
}
