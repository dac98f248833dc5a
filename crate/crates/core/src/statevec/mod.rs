//! Dense state vector over the walker registers and the data plane.

mod layout;
mod measure;

pub use layout::{DataQubit, RegisterLayout, MAX_TOTAL_BITS};
pub use measure::{measure, Basis, MeasureMode, MeasurementRecord};

use num_complex::Complex64;
use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::linalg::{Matrix, ONE, ZERO};
use crate::walkops::OperatorSpec;

pub const NORM_TOL: f64 = 1e-10;
pub const SUPPORT_TOL: f64 = 1e-9;
pub const FIDELITY_TOL: f64 = 1e-9;
/// Amplitudes with magnitude below this are left out of state dumps.
pub const DUMP_EPS: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    layout: RegisterLayout,
    amps: Vec<Complex64>,
}

/// Product state `⊗_j |v_j, c_j⟩ ⊗ data`, with unlisted data qubits in `|0⟩`.
///
/// `data_inits` maps data-qubit positions (in layout order) to `[α, β]`.
pub fn init_state(
    layout: &RegisterLayout,
    walker_inits: &[(usize, usize)],
    data_inits: &[(usize, [Complex64; 2])],
) -> Result<StateVector> {
    let n = layout.num_data();
    let mut data = vec![[ONE, ZERO]; n];
    for &(i, q) in data_inits {
        if i >= n {
            return Err(Error::InvalidQubitIndex(i));
        }
        let norm = q[0].norm_sqr() + q[1].norm_sqr();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized(norm));
        }
        data[i] = q;
    }
    let mut amps = vec![ONE];
    for q in &data {
        amps = amps.iter().flat_map(|a| [a * q[0], a * q[1]]).collect();
    }
    let data_state = StateVector {
        layout: layout.data_plane(),
        amps,
    };
    StateVector::product(layout, walker_inits, &data_state)
}

impl StateVector {
    /// `⊗_j |v_j, c_j⟩ ⊗ data_state` where `data_state` lives on `layout.data_plane()`.
    pub fn product(layout: &RegisterLayout, walker_inits: &[(usize, usize)], data_state: &StateVector) -> Result<Self> {
        if walker_inits.len() != layout.walkers() {
            return Err(Error::Precondition(format!(
                "{} walker positions given for {} walkers",
                walker_inits.len(),
                layout.walkers()
            )));
        }
        if data_state.layout != layout.data_plane() {
            return Err(Error::LayoutMismatch);
        }
        let mut base = 0usize;
        for (j, &(v, c)) in walker_inits.iter().enumerate() {
            if !layout.is_valid_edge(v, c) {
                return Err(Error::InvalidCoin { vertex: v, coin: c });
            }
            base |= ((v << layout.coin_bits()) | c) << layout.walker_offset(j);
        }
        let mut amps = vec![ZERO; layout.dim()];
        let block = 1usize << layout.num_data();
        // `base` already sits above the data bits.
        amps[base..base + block].copy_from_slice(&data_state.amps);
        Ok(StateVector {
            layout: layout.clone(),
            amps,
        })
    }

    /// Wraps raw amplitudes; the vector must have the layout's dimension and unit norm.
    pub fn from_amplitudes(layout: &RegisterLayout, amps: Vec<Complex64>) -> Result<Self> {
        if amps.len() != layout.dim() {
            return Err(Error::LayoutMismatch);
        }
        let s = StateVector {
            layout: layout.clone(),
            amps,
        };
        let n = s.norm_sqr();
        if (n - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized(n));
        }
        Ok(s)
    }

    /// Computational basis state `|index⟩`.
    pub fn basis(layout: &RegisterLayout, index: usize) -> Self {
        let mut amps = vec![ZERO; layout.dim()];
        amps[index] = ONE;
        StateVector {
            layout: layout.clone(),
            amps,
        }
    }

    pub fn layout(&self) -> &RegisterLayout {
        &self.layout
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(Complex64::norm_sqr).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn apply(&mut self, op: &OperatorSpec) -> Result<()> {
        op.apply(self)
    }

    /// Applies an involutive index map in place. `f` must satisfy `f(f(i)) == i`.
    pub(crate) fn permute_involution(&mut self, f: impl Fn(usize) -> usize) {
        for i in 0..self.amps.len() {
            let j = f(i);
            debug_assert_eq!(f(j), i, "index map is not an involution");
            if j > i {
                self.amps.swap(i, j);
            }
        }
    }

    /// Applies `m` to every group `{member(base, 0), …, member(base, dim-1)}` for each base
    /// index accepted by `is_base`.
    pub(crate) fn apply_block(
        &mut self,
        m: &Matrix,
        is_base: impl Fn(usize) -> bool,
        member: impl Fn(usize, usize) -> usize,
    ) {
        let d = m.dim();
        let mut idx = vec![0usize; d];
        let mut v = vec![ZERO; d];
        let mut out = vec![ZERO; d];
        for base in 0..self.amps.len() {
            if !is_base(base) {
                continue;
            }
            let mut any = false;
            for k in 0..d {
                idx[k] = member(base, k);
                v[k] = self.amps[idx[k]];
                any |= v[k] != ZERO;
            }
            if !any {
                continue;
            }
            m.apply(&v, &mut out);
            for k in 0..d {
                self.amps[idx[k]] = out[k];
            }
        }
    }

    /// Hadamard on one amplitude-index bit.
    pub(crate) fn hadamard_bit(&mut self, bit: usize) {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let mask = 1usize << bit;
        for i in 0..self.amps.len() {
            if i & mask == 0 {
                let (a, b) = (self.amps[i], self.amps[i | mask]);
                self.amps[i] = (a + b) * h;
                self.amps[i | mask] = (a - b) * h;
            }
        }
    }

    /// Pauli `Z` on one amplitude-index bit.
    pub(crate) fn z_bit(&mut self, bit: usize) {
        let mask = 1usize << bit;
        for (i, a) in self.amps.iter_mut().enumerate() {
            if i & mask != 0 {
                *a = -*a;
            }
        }
    }

    /// Vertex supports of every walker, computed in one pass over the amplitudes.
    pub fn walker_supports(&self, tol: f64) -> Vec<BTreeSet<usize>> {
        let l = &self.layout;
        let nv = 1 << l.vertex_bits();
        let mut p = vec![0.0; l.walkers() * nv];
        for (i, a) in self.amps.iter().enumerate() {
            if *a != ZERO {
                let w = a.norm_sqr();
                for j in 0..l.walkers() {
                    p[j * nv + l.vertex_of(i, j)] += w;
                }
            }
        }
        (0..l.walkers())
            .map(|j| (0..nv).filter(|&v| p[j * nv + v] > tol).collect())
            .collect()
    }

    /// Marginal probability of each vertex value for walker `j`.
    pub fn walker_vertex_marginals(&self, j: usize) -> Result<Vec<f64>> {
        self.layout.check_walker(j)?;
        let mut p = vec![0.0; 1 << self.layout.vertex_bits()];
        for (i, a) in self.amps.iter().enumerate() {
            if *a != ZERO {
                p[self.layout.vertex_of(i, j)] += a.norm_sqr();
            }
        }
        Ok(p)
    }

    /// Vertices where walker `j` has marginal probability above `tol`.
    pub fn walker_vertex_support(&self, j: usize, tol: f64) -> Result<BTreeSet<usize>> {
        Ok(self
            .walker_vertex_marginals(j)?
            .into_iter()
            .enumerate()
            .filter(|&(_, p)| p > tol)
            .map(|(v, _)| v)
            .collect())
    }

    /// Total probability on basis vectors that do not name an edge of the graph.
    pub fn invalid_weight(&self) -> f64 {
        let l = &self.layout;
        self.amps
            .iter()
            .enumerate()
            .filter(|(i, _)| (0..l.walkers()).any(|j| !l.is_valid_edge(l.vertex_of(*i, j), l.coin_of(*i, j))))
            .map(|(_, a)| a.norm_sqr())
            .sum()
    }

    /// Purity `Tr(ρ_S²)` of the reduced state on the given qubits (MSB = 0 numbering).
    pub fn purity_across_cut(&self, subsystem: &[usize]) -> Result<f64> {
        let total = self.layout.total_bits();
        let set: BTreeSet<usize> = subsystem.iter().copied().collect();
        if set.is_empty() || set.len() >= total {
            return Err(Error::InvalidSubsystem(
                "subsystem must be a nonempty proper subset".into(),
            ));
        }
        if set.len() != subsystem.len() {
            return Err(Error::InvalidSubsystem("repeated qubit".into()));
        }
        if let Some(&q) = set.iter().find(|&&q| q >= total) {
            return Err(Error::InvalidQubitIndex(q));
        }
        let mask = set.iter().fold(0usize, |m, &q| m | (1 << self.layout.qubit_bit(q)));
        Ok(purity_of_split(&self.amps, mask))
    }

    /// Human-readable dump: one `bits  re  im` line per amplitude above [`DUMP_EPS`].
    pub fn dump(&self) -> String {
        let width = self.layout.total_bits();
        let mut out = String::new();
        for (i, a) in self.amps.iter().enumerate() {
            if a.norm() >= DUMP_EPS {
                let bits = if width == 0 {
                    String::new()
                } else {
                    format!("{i:0width$b}")
                };
                writeln!(out, "{bits}  {}  {}", a.re, a.im).unwrap();
            }
        }
        out
    }

    /// Splits a walker ⊗ data product state and returns the data factor.
    ///
    /// Fails when the walkers are entangled with the data (purity below `1 - 1e-9`).
    pub fn data_factor(&self) -> Result<StateVector> {
        let l = &self.layout;
        let data_plane = l.data_plane();
        if l.walkers() == 0 {
            return Ok(self.clone());
        }
        let block = 1usize << l.num_data();
        let (best, weight) = self
            .amps
            .chunks(block)
            .enumerate()
            .map(|(w, c)| (w, c.iter().map(Complex64::norm_sqr).sum::<f64>()))
            .fold((0, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if l.num_data() > 0 {
            let purity = self.purity_across_cut(&l.all_walker_qubits())?;
            if purity < 1.0 - FIDELITY_TOL {
                return Err(Error::Precondition(format!(
                    "walkers are entangled with the data plane (purity {purity:.12})"
                )));
            }
        }
        let scale = 1.0 / weight.sqrt();
        let mut amps: Vec<Complex64> = self.amps[best * block..(best + 1) * block].to_vec();
        // Fix the global phase so the largest data amplitude is real and positive.
        let pivot = amps
            .iter()
            .copied()
            .max_by(|a, b| a.norm_sqr().total_cmp(&b.norm_sqr()))
            .unwrap_or(ONE);
        let phase = if pivot == ZERO {
            ONE
        } else {
            pivot.conj() / pivot.norm()
        };
        for a in &mut amps {
            *a *= phase * scale;
        }
        Ok(StateVector {
            layout: data_plane,
            amps,
        })
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVector) -> Result<Complex64> {
        if self.layout != other.layout {
            return Err(Error::LayoutMismatch);
        }
        Ok(self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum())
    }
}

/// Free-function form of [`StateVector::apply`].
pub fn apply_operator(state: &mut StateVector, op: &OperatorSpec) -> Result<()> {
    state.apply(op)
}

/// `|⟨s1|s2⟩|²`.
pub fn fidelity(s1: &StateVector, s2: &StateVector) -> Result<f64> {
    Ok(s1.inner(s2)?.norm_sqr())
}

/// Purity of the reduced state on the bits in `mask`, summing only over nonzero amplitudes.
fn purity_of_split(amps: &[Complex64], mask: usize) -> f64 {
    // Rows: values of the masked bits; columns: values of the rest.
    let entries: Vec<(usize, usize, Complex64)> = amps
        .iter()
        .enumerate()
        .filter(|(_, a)| **a != ZERO)
        .map(|(i, a)| (i & mask, i & !mask, *a))
        .collect();
    let rows: BTreeSet<usize> = entries.iter().map(|e| e.0).collect();
    let cols: BTreeSet<usize> = entries.iter().map(|e| e.1).collect();
    // Build the reduced density matrix on whichever side has fewer distinct values.
    let (small, group_by_rows) = if rows.len() <= cols.len() {
        (rows, false)
    } else {
        (cols, true)
    };
    let pos: HashMap<usize, usize> = small.iter().enumerate().map(|(i, &x)| (x, i)).collect();
    let d = small.len();
    let mut groups: HashMap<usize, Vec<(usize, Complex64)>> = HashMap::new();
    for &(r, c, a) in &entries {
        let (key, s) = if group_by_rows { (r, c) } else { (c, r) };
        groups.entry(key).or_default().push((pos[&s], a));
    }
    let mut rho = vec![ZERO; d * d];
    for members in groups.values() {
        for &(x, a) in members {
            for &(y, b) in members {
                rho[x * d + y] += a * b.conj();
            }
        }
    }
    rho.iter().map(Complex64::norm_sqr).sum()
}
