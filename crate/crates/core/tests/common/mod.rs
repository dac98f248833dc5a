#![allow(dead_code)]

//! Random states and operators shared by the integration tests.

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use qwcp::linalg::Matrix;
use qwcp::netgraph::NetworkGraph;
use qwcp::statevec::{RegisterLayout, StateVector};
use qwcp::walkops::{
    make_coin_block, make_coin_controlled_data, make_coin_perm, make_data_controlled_coin, make_flipflop_shift,
    make_walk_interaction, CoinAction, CoinBlockEntry, OperatorSpec,
};

/// Gaussian amplitudes, normalised: Haar-distributed pure state.
pub fn random_state(l: &RegisterLayout, rng: &mut ChaCha8Rng) -> StateVector {
    let amps: Vec<Complex64> = (0..l.dim())
        .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    let n = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    StateVector::from_amplitudes(l, amps.into_iter().map(|a| a / n).collect()).unwrap()
}

pub fn random_unitary(n: usize, rng: &mut ChaCha8Rng) -> Matrix {
    // Gram-Schmidt on a complex Gaussian matrix, column by column.
    let mut cols: Vec<Vec<Complex64>> = Vec::new();
    while cols.len() < n {
        let mut v: Vec<Complex64> = (0..n)
            .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        for c in &cols {
            let p: Complex64 = c.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
            for (x, a) in v.iter_mut().zip(c) {
                *x -= p * a;
            }
        }
        let norm = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        cols.push(v.into_iter().map(|x| x / norm).collect());
    }
    let data = (0..n * n).map(|i| cols[i % n][i / n]).collect();
    Matrix::from_row_major(n, data)
}

/// A random operator on the 2×3 grid with two walkers and a data qubit at every node.
pub fn random_op(g: &NetworkGraph, l: &RegisterLayout, rng: &mut ChaCha8Rng) -> OperatorSpec {
    let v = rng.random_range(0..g.num_vertices());
    let d = g.coin_dim(v);
    let w = rng.random_range(0..2);
    let coin = |rng: &mut ChaCha8Rng| rng.random_range(0..d);
    let two = |rng: &mut ChaCha8Rng| {
        let a = rng.random_range(0..d);
        let b = (a + rng.random_range(1..d)) % d;
        (a, b)
    };
    let data_at = l.data_index(v, "q").unwrap();
    match rng.random_range(0..6) {
        0 => {
            let ws: Vec<usize> = if rng.random() { vec![0, 1] } else { vec![w] };
            make_flipflop_shift(l, &ws).unwrap()
        }
        1 => {
            let (a, b) = two(rng);
            make_coin_perm(g, v, a, b, w).unwrap()
        }
        2 => {
            let m = rng.random_range(2..=d);
            let mut coins: Vec<usize> = (0..d).collect();
            for i in 0..m {
                let j = rng.random_range(i..d);
                coins.swap(i, j);
            }
            coins.truncate(m);
            make_coin_block(
                g,
                vec![CoinBlockEntry {
                    vertex: v,
                    coins,
                    matrix: random_unitary(m, rng),
                }],
                w,
            )
            .unwrap()
        }
        3 => {
            let (a, b) = two(rng);
            make_data_controlled_coin(g, l, v, &[data_at], &[rng.random()], CoinAction::swap(a, b), w).unwrap()
        }
        4 => {
            let c = coin(rng);
            make_coin_controlled_data(g, l, v, Some(vec![c]), &[data_at], random_unitary(2, rng), None, w).unwrap()
        }
        _ => {
            let (a, b) = two(rng);
            make_walk_interaction(g, l, v, coin(rng), CoinAction::swap(a, b), w, 1 - w).unwrap()
        }
    }
}

pub fn random_walk_setup() -> (NetworkGraph, RegisterLayout) {
    let mut g = NetworkGraph::grid(2, 3);
    for v in 0..6 {
        g.add_data_qubit(v, "q").unwrap();
    }
    let l = RegisterLayout::for_network(&g, 2).unwrap();
    (g, l)
}
