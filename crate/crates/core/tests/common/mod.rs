#![allow(dead_code)]

use rand::Rng;
use sisnet::model::{EpidemicScenario, Mechanism, State};
use sisnet::netmat::{ConnectivityMatrix, SquareMatrix};

/// Random quasi-positive matrix with zero column sums. Every off-diagonal
/// entry is kept with probability `density`; a ring `i -> i+1` is always
/// present so the graph is strongly connected.
pub fn random_connectivity<R: Rng>(rng: &mut R, n: usize, density: f64) -> ConnectivityMatrix {
    let mut m = SquareMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            let ring = i == (j + 1) % n;
            if i != j && (ring || rng.gen::<f64>() < density) {
                m.set(i, j, rng.gen_range(0.05..3.0));
            }
        }
    }
    for j in 0..n {
        let out: f64 = (0..n).filter(|&i| i != j).map(|i| m.get(i, j)).sum();
        m.set(j, j, -out);
    }
    ConnectivityMatrix::new(m).expect("ring makes it irreducible")
}

pub fn sym2() -> ConnectivityMatrix {
    ConnectivityMatrix::from_rows(&[vec![-1.0, 1.0], vec![1.0, -1.0]]).unwrap()
}

pub fn cycle3() -> ConnectivityMatrix {
    ConnectivityMatrix::from_rows(&[
        vec![-1.0, 0.0, 1.0],
        vec![1.0, -1.0, 0.0],
        vec![0.0, 1.0, -1.0],
    ])
    .unwrap()
}

pub fn scenario(
    l: ConnectivityMatrix,
    mechanism: Mechanism,
    dispersal: (f64, f64),
    beta: &[f64],
    gamma: &[f64],
    s0: &[f64],
    i0: &[f64],
) -> EpidemicScenario {
    EpidemicScenario::new(
        l,
        beta.to_vec(),
        gamma.to_vec(),
        dispersal,
        mechanism,
        State::new(s0.to_vec(), i0.to_vec()),
    )
    .unwrap()
}
