use sisnet::limits::{compute_n_star, n_star_grid, NStarSettings};
use sisnet::model::{EpidemicScenario, Mechanism, State};
use sisnet::netmat::ConnectivityMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn scenario(l: Vec<Vec<f64>>, beta: Vec<f64>, gamma: Vec<f64>, s0: Vec<f64>, i0: Vec<f64>) -> EpidemicScenario {
    EpidemicScenario::new(
        ConnectivityMatrix::from_rows(&l).unwrap(),
        beta,
        gamma,
        (0.0, 1.0),
        Mechanism::MassAction,
        State::new(s0, i0),
    )
    .unwrap()
}

fn sym2() -> Vec<Vec<f64>> {
    vec![vec![-1.0, 1.0], vec![1.0, -1.0]]
}

fn agrees_with_grid(sc: &EpidemicScenario, points: usize) -> (f64, f64) {
    let opt = compute_n_star(sc, &NStarSettings::default()).unwrap();
    let grid = n_star_grid(sc, points, 4, 1e-11).unwrap();
    // a feasible grid point can never beat the certified upper bound
    assert!(grid.value <= opt.upper * (1.0 + 1e-9), "{grid:?} vs {opt:?}");
    assert!(
        (opt.value - grid.value).abs() <= 1e-3 * grid.value,
        "optimizer {} vs grid {}",
        opt.value,
        grid.value
    );
    (opt.value, grid.value)
}

#[test]
fn symmetric_fixture_matches_grid() {
    let sc = scenario(sym2(), vec![1.0, 1.0], vec![2.0, 3.0], vec![5.0, 0.0], vec![1.0, 1.0]);
    let (opt, _) = agrees_with_grid(&sc, 201);
    assert!((opt - 5.0).abs() < 1e-6, "{opt}");
}

#[test]
fn heterogeneous_transmission_lifts_threshold() {
    let sc = scenario(sym2(), vec![1.0, 4.0], vec![2.0, 12.0], vec![5.0, 0.0], vec![1.0, 1.0]);
    let (opt, grid) = agrees_with_grid(&sc, 201);
    assert!(opt > 5.0 + 1e-3, "{opt} {grid}");
}

#[test]
fn random_small_networks_match_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..12 {
        let n = if case < 8 { 2 } else { 3 };
        let mut l = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    l[i][j] = rng.gen_range(0.2..2.0);
                }
            }
        }
        for j in 0..n {
            let out: f64 = (0..n).filter(|&i| i != j).map(|i| l[i][j]).sum();
            l[j][j] = -out;
        }
        let beta: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..4.0)).collect();
        let gamma: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..4.0)).collect();
        let s0: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..6.0)).collect();
        let sc = scenario(l, beta, gamma, s0, vec![0.5; n]);
        let points = if n == 2 { 201 } else { 41 };
        agrees_with_grid(&sc, points);
    }
}
