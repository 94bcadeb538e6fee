#![allow(dead_code)]

use std::path::PathBuf;

use feedback_lens::feedback::AmplifierParams;
use feedback_lens::sfg::Equation;
use feedback_lens::smallsignal::{LinearCircuit, Primitive};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn log_uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    (rng.gen_range(lo.ln()..hi.ln())).exp()
}

/// R in [10, 1e7], g_m in [1e-4, 1], β in [20, 500], K in [10, 1e5].
pub fn random_params(rng: &mut impl Rng) -> AmplifierParams {
    let g_m = log_uniform(rng, 1e-4, 1.0);
    let beta = log_uniform(rng, 20.0, 500.0);
    AmplifierParams {
        k: log_uniform(rng, 10.0, 1e5),
        r_out: log_uniform(rng, 10.0, 1e7),
        r1: log_uniform(rng, 10.0, 1e7),
        r2: log_uniform(rng, 10.0, 1e7),
        g_m,
        r_pi: beta / g_m,
        r_o: log_uniform(rng, 10.0, 1e7),
        ..AmplifierParams::paper_defaults()
    }
}

pub fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn read_fixture(name: &str) -> String {
    std::fs::read_to_string(fixture(name)).unwrap()
}

/// Gaussian elimination with partial pivoting, kept apart from the crate's
/// own solver so it can serve as an oracle.
#[allow(clippy::needless_range_loop)]
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-14 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let m = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= m * a[col][c];
            }
            b[r] -= m * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

/// Determinant by the same elimination.
#[allow(clippy::needless_range_loop)]
pub fn gauss_det(mut a: Vec<Vec<f64>>) -> f64 {
    let n = a.len();
    let mut det = 1.0;
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[piv][col] == 0.0 {
            return 0.0;
        }
        if piv != col {
            a.swap(col, piv);
            det = -det;
        }
        det *= a[col][col];
        for r in col + 1..n {
            let m = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= m * a[col][c];
            }
        }
    }
    det
}

/// A random system `x_i = Σ a_ij x_j + c_i u` with its coupling matrix and
/// drive vector.
pub struct RandomSystem {
    pub a: Vec<Vec<f64>>,
    pub c: Vec<f64>,
}

pub fn var(i: usize) -> String {
    format!("x{i}")
}

impl RandomSystem {
    pub fn generate(rng: &mut impl Rng, n: usize, density: f64) -> Self {
        let coef = |rng: &mut dyn rand::RngCore| {
            let m = rng.gen_range(0.1..1.0);
            if rng.gen_bool(0.5) {
                m
            } else {
                -m
            }
        };
        let mut a = vec![vec![0.0; n]; n];
        for (i, row) in a.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                let p = if i == j { density / 4.0 } else { density };
                if rng.gen_bool(p) {
                    *v = coef(rng);
                }
            }
        }
        let mut c = vec![0.0; n];
        c[0] = coef(rng);
        for v in c.iter_mut().skip(1) {
            if rng.gen_bool(0.2) {
                *v = coef(rng);
            }
        }
        RandomSystem { a, c }
    }

    pub fn equations(&self) -> Vec<Equation> {
        let n = self.c.len();
        (0..n)
            .map(|i| {
                let mut terms: Vec<(String, f64)> = (0..n)
                    .filter(|&j| self.a[i][j] != 0.0)
                    .map(|j| (var(j), self.a[i][j]))
                    .collect();
                if self.c[i] != 0.0 {
                    terms.push(("u".to_string(), self.c[i]));
                }
                Equation {
                    lhs: var(i),
                    terms,
                }
            })
            .collect()
    }

    /// `I − A`.
    pub fn system_matrix(&self) -> Vec<Vec<f64>> {
        let n = self.c.len();
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| f64::from(u8::from(i == j)) - self.a[i][j])
                    .collect()
            })
            .collect()
    }

    /// `dx/du` by direct solve of `(I − A) x = c`.
    pub fn sensitivity(&self) -> Option<Vec<f64>> {
        gauss_solve(self.system_matrix(), self.c.clone())
    }
}

/// A connected resistor network on nodes `n1..=nN` plus ground.
pub struct RandomNetwork {
    pub nodes: Vec<String>,
    pub resistors: Vec<(String, String, f64)>,
}

impl RandomNetwork {
    pub fn generate(rng: &mut impl Rng, n: usize, extra: usize) -> Self {
        let nodes: Vec<String> = (1..=n).map(|i| format!("n{i}")).collect();
        let mut all = vec!["0".to_string()];
        all.extend(nodes.iter().cloned());
        let mut resistors = Vec::new();
        // Spanning tree keeps every node tied to ground.
        for i in 1..all.len() {
            let j = rng.gen_range(0..i);
            resistors.push((all[i].clone(), all[j].clone(), log_uniform(rng, 10.0, 1e6)));
        }
        for _ in 0..extra {
            let i = rng.gen_range(0..all.len());
            let mut j = rng.gen_range(0..all.len());
            while j == i {
                j = rng.gen_range(0..all.len());
            }
            resistors.push((all[i].clone(), all[j].clone(), log_uniform(rng, 10.0, 1e6)));
        }
        RandomNetwork { nodes, resistors }
    }

    pub fn circuit(&self) -> LinearCircuit {
        let mut lc = LinearCircuit::new();
        for (k, (a, b, r)) in self.resistors.iter().enumerate() {
            lc.push(Primitive::resistor(&format!("R{k}"), a, b, *r));
        }
        lc
    }

    /// Node conductance matrix over the non-ground nodes.
    pub fn conductance_matrix(&self) -> Vec<Vec<f64>> {
        let n = self.nodes.len();
        let idx = |s: &str| self.nodes.iter().position(|x| x == s);
        let mut g = vec![vec![0.0; n]; n];
        for (a, b, r) in &self.resistors {
            let y = 1.0 / r;
            let (ia, ib) = (idx(a), idx(b));
            if let Some(i) = ia {
                g[i][i] += y;
            }
            if let Some(j) = ib {
                g[j][j] += y;
            }
            if let (Some(i), Some(j)) = (ia, ib) {
                g[i][j] -= y;
                g[j][i] -= y;
            }
        }
        g
    }

    /// Entry `(i, i)` of the inverse conductance matrix.
    pub fn driving_point(&self, i: usize) -> f64 {
        let n = self.nodes.len();
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        gauss_solve(self.conductance_matrix(), e).unwrap()[i]
    }
}
