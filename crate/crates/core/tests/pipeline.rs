use gsar::effects::summarize_effects;
use gsar::estimator::fit_glm;
use gsar::simkit::{run_replicates, simulate_dataset, SimScenario};
use gsar::weights::{load_weights, parse_gal, write_gal, WeightsFormat};
use gsar::{build_rook_grid, fit, FamilySpec, FitConfig, FitData};
use nalgebra::{DMatrix, DVector};

#[test]
fn weights_file_round_trip_feeds_a_fit() {
    let scn = SimScenario::new(FamilySpec::poisson(), 6, 6, 0.3, 11);
    let (ds, w) = simulate_dataset(&scn, 0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("grid.gal");
    std::fs::write(&path, write_gal(&w)).unwrap();
    let loaded = load_weights(&path, WeightsFormat::Gal).unwrap().row_standardize();
    assert_eq!(loaded.to_dense(), w.to_dense());

    let a = fit(&ds.data, &w, scn.family, &FitConfig::default()).unwrap();
    let b = fit(&ds.data, &loaded, scn.family, &FitConfig::default()).unwrap();
    assert_eq!(a.rho_hat, b.rho_hat);
    assert_eq!(a.beta_hat, b.beta_hat);
}

#[test]
fn effects_follow_a_fit() {
    let scn = SimScenario::new(FamilySpec::gamma(), 8, 8, 0.4, 3);
    let (ds, w) = simulate_dataset(&scn, 1).unwrap();
    let fitted = fit(&ds.data, &w, scn.family, &FitConfig::default()).unwrap();
    let names: Vec<String> = ["const", "x1", "x2"].iter().map(|s| s.to_string()).collect();
    let eff = summarize_effects(&fitted.beta_hat, fitted.rho_hat, &w, &names, Some(0)).unwrap();
    assert_eq!(eff.len(), 2);
    for (e, b) in eff.iter().zip(fitted.beta_hat.iter().skip(1)) {
        assert!((e.total - b / (1.0 - fitted.rho_hat)).abs() < 1e-10);
        // positive dependence spreads part of each effect to neighbours
        assert!(e.direct.abs() > b.abs() && e.indirect * b > 0.0);
    }
}

#[test]
fn units_without_neighbours_are_allowed() {
    // a 3x3 grid plus two isolated units
    let mut text = write_gal(&build_rook_grid(3, 3).unwrap());
    text = text.replacen("9\n", "11\n", 1);
    text.push_str("10 0\n\n11 0\n\n");
    let w = parse_gal(&text).unwrap().row_standardize();
    assert_eq!(w.empty_rows(), 2);
    let x = DMatrix::from_fn(11, 2, |i, j| if j == 0 { 1.0 } else { (i as f64 - 5.0) / 3.0 });
    let y = DVector::from_fn(11, |i, _| 1.0 + 0.5 * x[(i, 1)] + if i % 2 == 0 { 0.3 } else { -0.3 });
    let data = FitData::new(y, x);
    let fitted = fit(&data, &w, FamilySpec::normal(), &FitConfig::default()).unwrap();
    assert!(fitted.converged);
    assert!(fitted.rho_hat.abs() < 1.0);
}

#[test]
fn replicate_report_is_reproducible() {
    let mut scn = SimScenario::new(FamilySpec::binomial(), 5, 5, -0.3, 99);
    scn.replicates = 6;
    let a = run_replicates(&scn, &FitConfig::default()).unwrap();
    let b = run_replicates(&scn, &FitConfig::default()).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    assert!(a.is_consistent(1e-12));
    assert_eq!(a.rows.len(), 6);
    assert!(a.rows.windows(2).all(|r| r[0].index < r[1].index));
}

#[test]
fn fixed_rho_fit_matches_glm_on_grid_data() {
    let scn = SimScenario::new(FamilySpec::negative_binomial(3.0).unwrap(), 7, 7, 0.0, 5);
    let (ds, w) = simulate_dataset(&scn, 0).unwrap();
    let cfg = FitConfig {
        rho_fixed: Some(0.0),
        eps_beta: 1e-12,
        ..FitConfig::default()
    };
    let fitted = fit(&ds.data, &w, scn.family, &cfg).unwrap();
    let glm = fit_glm(&ds.data, scn.family).unwrap();
    assert!((fitted.beta_hat - glm.beta).amax() < 1e-8);
}
