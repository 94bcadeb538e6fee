//! Dense LU factorization with partial pivoting.
//!
//! Rows are equilibrated (scaled to unit max-norm) before elimination, so
//! the singularity threshold does not depend on the units of the system.

use std::fmt;
use std::ops::{Index, IndexMut};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut m = Matrix::zeros(r, c);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), c, "ragged rows");
            m.data[i * c..(i + 1) * c].copy_from_slice(row);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Display for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.rows {
            let cells: Vec<String> = self.row(i).iter().map(|v| format!("{v:>12.4e}")).collect();
            writeln!(f, "[{}]", cells.join(" "))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix is singular (no usable pivot in column {column})")]
    Singular { column: usize },
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
}

/// `P * D * A = L * U` with `D` the row equilibration.
#[derive(Debug, Clone)]
pub struct Lu {
    n: usize,
    lu: Matrix,
    perm: Vec<usize>,
    scale: Vec<f64>,
    swaps: usize,
}

impl Lu {
    pub fn factor(a: &Matrix) -> Result<Lu, LinalgError> {
        if a.rows != a.cols {
            return Err(LinalgError::NotSquare {
                rows: a.rows,
                cols: a.cols,
            });
        }
        let n = a.rows;
        let mut lu = a.clone();
        let mut scale = vec![1.0; n];
        for (i, s) in scale.iter_mut().enumerate() {
            let m = lu.row(i).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if m == 0.0 {
                return Err(LinalgError::Singular { column: i });
            }
            *s = 1.0 / m;
            for j in 0..n {
                lu[(i, j)] *= *s;
            }
        }
        let tol = 4.0 * f64::EPSILON * n as f64;
        let mut perm: Vec<usize> = (0..n).collect();
        let mut swaps = 0;
        for k in 0..n {
            let (p, pv) = (k..n)
                .map(|i| (i, lu[(i, k)].abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pv <= tol {
                return Err(LinalgError::Singular { column: k });
            }
            if p != k {
                for j in 0..n {
                    lu.data.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
                swaps += 1;
            }
            let pivot = lu[(k, k)];
            for i in k + 1..n {
                let factor = lu[(i, k)] / pivot;
                lu[(i, k)] = factor;
                if factor != 0.0 {
                    for j in k + 1..n {
                        let u = lu[(k, j)];
                        lu[(i, j)] -= factor * u;
                    }
                }
            }
        }
        Ok(Lu {
            n,
            lu,
            perm,
            scale,
            swaps,
        })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p] * self.scale[p]).collect();
        for i in 0..n {
            let s: f64 = (0..i).map(|j| self.lu[(i, j)] * x[j]).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| self.lu[(i, j)] * x[j]).sum();
            x[i] = (x[i] - s) / self.lu[(i, i)];
        }
        x
    }

    pub fn determinant(&self) -> f64 {
        let mut d: f64 = (0..self.n).map(|i| self.lu[(i, i)]).product();
        d /= self.scale.iter().product::<f64>();
        if self.swaps % 2 == 1 {
            -d
        } else {
            d
        }
    }
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let z = s - a;
    (s, (a - (s - z)) + (b - z))
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

/// `b − A x` for `A` given as unsummed entries and `x = hi + lo`, carried
/// in roughly twice working precision.
fn residual(entries: &[(usize, usize, f64)], b: &[f64], hi: &[f64], lo: &[f64]) -> Vec<f64> {
    let mut r_hi = b.to_vec();
    let mut r_lo = vec![0.0; b.len()];
    for &(i, j, v) in entries {
        let (p, pe) = two_prod(v, hi[j]);
        let (s, e) = two_sum(r_hi[i], -p);
        r_hi[i] = s;
        r_lo[i] += e - pe - v * lo[j];
    }
    r_hi.iter().zip(&r_lo).map(|(h, l)| h + l).collect()
}

/// Solves `A x = b` where `A` is the sum of `entries` (`(row, col, value)`,
/// repeats allowed).
///
/// The summed matrix is factored once; the solution is then refined in
/// double-double against the unsummed entries, so digits lost when nearly
/// cancelling entries are added together are recovered.
pub fn solve_entries(n: usize, entries: &[(usize, usize, f64)], b: &[f64]) -> Result<Vec<f64>, LinalgError> {
    let mut a = Matrix::zeros(n, n);
    for &(i, j, v) in entries {
        a[(i, j)] += v;
    }
    let lu = Lu::factor(&a)?;
    let mut hi = lu.solve(b);
    let mut lo = vec![0.0; n];
    for _ in 0..10 {
        let dx = lu.solve(&residual(entries, b, &hi, &lo));
        let mut moved = false;
        for ((h, l), d) in hi.iter_mut().zip(lo.iter_mut()).zip(dx) {
            if !d.is_finite() {
                return Ok(hi);
            }
            moved |= d.abs() > 1e-3 * f64::EPSILON * h.abs();
            let (s, e) = two_sum(*h, d);
            let (s, e) = two_sum(s, e + *l);
            *h = s;
            *l = e;
        }
        if !moved {
            break;
        }
    }
    Ok(hi)
}

/// Solves `A x = b` with refined residuals; see [`solve_entries`].
pub fn solve(a: &Matrix, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
    if a.rows != a.cols {
        return Err(LinalgError::NotSquare {
            rows: a.rows,
            cols: a.cols,
        });
    }
    let n = a.rows;
    let entries: Vec<(usize, usize, f64)> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|&(i, j)| a[(i, j)] != 0.0)
        .map(|(i, j)| (i, j, a[(i, j)]))
        .collect();
    solve_entries(n, &entries, b)
}
