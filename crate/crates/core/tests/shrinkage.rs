use gsar::simkit::{run_replicates, SimScenario};
use gsar::{FamilySpec, FitConfig};

const REPLICATES: usize = 20;

fn rho_sd(spec: FamilySpec, side: usize, rho: f64) -> f64 {
    let mut scn = SimScenario::new(spec, side, side, rho, 4242);
    scn.replicates = REPLICATES;
    let rep = run_replicates(&scn, &FitConfig::default()).unwrap();
    rep.summary("rho").and_then(|s| s.sd).expect("at least two usable replicates")
}

#[test]
fn rho_spread_shrinks_with_grid_size() {
    let cases = [
        (FamilySpec::poisson(), [-0.5, 0.0, 0.5].as_slice()),
        (FamilySpec::gamma(), [-0.5, 0.0, 0.5].as_slice()),
        (FamilySpec::binomial(), [-0.5, 0.0].as_slice()),
    ];
    for (spec, rhos) in cases {
        for &rho in rhos {
            let small = rho_sd(spec, 7, rho);
            let large = rho_sd(spec, 20, rho);
            assert!(large < small, "{:?} rho {rho}: sd {small} at n = 49, {large} at n = 400", spec.family());
        }
    }
}
