//! Small dense complex matrices used for coin blocks, data gates and the oracle.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_1_SQRT_2;

use crate::error::{Error, Result};

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Unitarity tolerance for user-supplied and constructed blocks.
pub const UNITARY_TOL: f64 = 1e-12;

/// Square complex matrix, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    dim: usize,
    data: Vec<Complex64>,
}

impl Matrix {
    pub fn identity(dim: usize) -> Self {
        let mut data = vec![ZERO; dim * dim];
        for i in 0..dim {
            data[i * dim + i] = ONE;
        }
        Matrix { dim, data }
    }

    /// Builds a matrix from row-major entries. Panics if `data.len()` is not a square.
    pub fn from_row_major(dim: usize, data: Vec<Complex64>) -> Self {
        assert_eq!(data.len(), dim * dim, "matrix data must have dim^2 entries");
        Matrix { dim, data }
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        let dim = rows.len();
        let data = rows
            .iter()
            .flat_map(|r| {
                assert_eq!(r.len(), dim);
                r.iter().map(|&x| Complex64::new(x, 0.0))
            })
            .collect();
        Matrix { dim, data }
    }

    /// Permutation matrix swapping basis states `a` and `b`.
    pub fn swap(dim: usize, a: usize, b: usize) -> Self {
        let mut m = Matrix::identity(dim);
        if a != b {
            m.data[a * dim + a] = ZERO;
            m.data[b * dim + b] = ZERO;
            m.data[a * dim + b] = ONE;
            m.data[b * dim + a] = ONE;
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.dim + col]
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.data
    }

    pub fn dagger(&self) -> Self {
        let n = self.dim;
        let mut data = vec![ZERO; n * n];
        for r in 0..n {
            for c in 0..n {
                data[c * n + r] = self.data[r * n + c].conj();
            }
        }
        Matrix { dim: n, data }
    }

    pub fn mul(&self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.dim, rhs.dim);
        let n = self.dim;
        let mut data = vec![ZERO; n * n];
        for r in 0..n {
            for k in 0..n {
                let a = self.data[r * n + k];
                if a == ZERO {
                    continue;
                }
                for c in 0..n {
                    data[r * n + c] += a * rhs.data[k * n + c];
                }
            }
        }
        Matrix { dim: n, data }
    }

    /// Kronecker product `self ⊗ rhs`; `self` acts on the more significant bits.
    pub fn kron(&self, rhs: &Matrix) -> Matrix {
        let (n, m) = (self.dim, rhs.dim);
        let dim = n * m;
        let mut data = vec![ZERO; dim * dim];
        for r1 in 0..n {
            for c1 in 0..n {
                let a = self.data[r1 * n + c1];
                for r2 in 0..m {
                    for c2 in 0..m {
                        data[(r1 * m + r2) * dim + c1 * m + c2] = a * rhs.data[r2 * m + c2];
                    }
                }
            }
        }
        Matrix { dim, data }
    }

    /// Largest entrywise deviation of `U†U` from the identity.
    pub fn unitarity_error(&self) -> f64 {
        let p = self.dagger().mul(self);
        let n = self.dim;
        let mut worst = 0.0f64;
        for r in 0..n {
            for c in 0..n {
                let target = if r == c { ONE } else { ZERO };
                worst = worst.max((p.data[r * n + c] - target).norm());
            }
        }
        worst
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.unitarity_error() <= tol
    }

    pub fn ensure_unitary(&self, what: &str) -> Result<()> {
        let err = self.unitarity_error();
        if err > UNITARY_TOL || !err.is_finite() {
            return Err(Error::NotUnitary(format!("{what}: |U†U - I| = {err:.3e}")));
        }
        Ok(())
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        let d = self.dagger();
        self.data.iter().zip(&d.data).all(|(a, b)| (a - b).norm() <= tol)
    }

    pub fn is_identity(&self) -> bool {
        *self == Matrix::identity(self.dim)
    }

    /// `out = self · v`.
    #[inline]
    pub fn apply(&self, v: &[Complex64], out: &mut [Complex64]) {
        let n = self.dim;
        for (r, o) in out.iter_mut().enumerate().take(n) {
            let row = &self.data[r * n..(r + 1) * n];
            *o = row.iter().zip(v).map(|(a, b)| a * b).sum();
        }
    }
}

/// Single-qubit gates known by name.
pub fn named_gate(name: &str) -> Option<Matrix> {
    let i = Complex64::i();
    let h = FRAC_1_SQRT_2;
    let m = match name {
        "I" => Matrix::identity(2),
        "X" => Matrix::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]),
        "Y" => Matrix::from_row_major(2, vec![ZERO, -i, i, ZERO]),
        "Z" => Matrix::from_real_rows(&[&[1.0, 0.0], &[0.0, -1.0]]),
        "H" => Matrix::from_real_rows(&[&[h, h], &[h, -h]]),
        "S" => Matrix::from_row_major(2, vec![ONE, ZERO, ZERO, i]),
        "T" => Matrix::from_row_major(
            2,
            vec![ONE, ZERO, ZERO, Complex64::from_polar(1.0, std::f64::consts::FRAC_PI_4)],
        ),
        _ => return None,
    };
    Some(m)
}

pub fn pauli_x() -> Matrix {
    named_gate("X").unwrap()
}

pub fn hadamard() -> Matrix {
    named_gate("H").unwrap()
}

/// `X ⊗ X ⊗ ... ⊗ X` on `n` qubits.
pub fn x_all(n: usize) -> Matrix {
    let dim = 1usize << n;
    let mut data = vec![ZERO; dim * dim];
    for r in 0..dim {
        data[r * dim + (dim - 1 - r)] = ONE;
    }
    Matrix::from_row_major(dim, data)
}

/// Local GHZ preparation on `n` qubits: H on the first qubit followed by CNOTs from it to
/// every other qubit. Maps `|0…0⟩` to `(|0…0⟩ + |1…1⟩)/√2`.
pub fn ghz_prep(n: usize) -> Matrix {
    assert!(n >= 1);
    let dim = 1usize << n;
    let h = hadamard().kron(&Matrix::identity(dim >> 1));
    // CNOT fan from the most significant qubit: flips all lower bits when the top bit is set.
    let top = dim >> 1;
    let mut fan = vec![ZERO; dim * dim];
    for col in 0..dim {
        let row = if col & top != 0 { col ^ (top - 1) } else { col };
        fan[row * dim + col] = ONE;
    }
    Matrix::from_row_major(dim, fan).mul(&h)
}

/// `|s⟩⟨s| ⊗ U + (1 - |s⟩⟨s|) ⊗ 1` with the controls on the more significant bits.
pub fn controlled(pattern: &[bool], u: &Matrix) -> Matrix {
    let nc = pattern.len();
    let s = pattern.iter().fold(0usize, |acc, &b| (acc << 1) | b as usize);
    let m = u.dim();
    let dim = (1usize << nc) * m;
    let mut data = vec![ZERO; dim * dim];
    for blk in 0..(1usize << nc) {
        for r in 0..m {
            for c in 0..m {
                let v = if blk == s {
                    u.get(r, c)
                } else if r == c {
                    ONE
                } else {
                    ZERO
                };
                data[(blk * m + r) * dim + blk * m + c] = v;
            }
        }
    }
    Matrix::from_row_major(dim, data)
}
