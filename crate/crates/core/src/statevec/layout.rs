use serde::Serialize;

use crate::error::{Error, Result};
use crate::netgraph::NetworkGraph;

/// Largest state the dense simulator will allocate.
pub const MAX_TOTAL_BITS: usize = 26;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DataQubit {
    pub vertex: usize,
    pub name: String,
}

/// Bit layout of `k` walker registers followed by the data qubits.
///
/// Most significant first: walker 0 vertex bits, walker 0 coin bits, walker 1 vertex bits,
/// …, then data qubits in `data_order`. Qubit number `q` (as used by measurement and cuts)
/// counts from the most significant bit, so amplitude-index bit `total_bits - 1 - q`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegisterLayout {
    nv: usize,
    nc: usize,
    k: usize,
    /// Valid coin values per vertex, `d(v) + 1`.
    coin_dims: Vec<usize>,
    /// Flip-flop permutation of one walker register, indexed by `vertex << nc | coin`.
    flip: Vec<u32>,
    data: Vec<DataQubit>,
}

impl RegisterLayout {
    /// Layout with `k` walkers and the given data qubits, each `(vertex, name)` declared in `g`.
    pub fn new(g: &NetworkGraph, k: usize, data_order: Vec<(usize, String)>) -> Result<Self> {
        let nv = g.vertex_bits();
        let nc = g.coin_bits();
        let mut data = Vec::with_capacity(data_order.len());
        for (vertex, name) in data_order {
            g.check_vertex(vertex)?;
            if !g.data_qubits(vertex).contains(&name) {
                return Err(Error::UnknownQubit(format!("{}.{name}", g.label(vertex))));
            }
            let q = DataQubit { vertex, name };
            if data.contains(&q) {
                return Err(Error::DuplicateQubit(format!("{}.{}", g.label(vertex), q.name)));
            }
            data.push(q);
        }
        let total = k * (nv + nc) + data.len();
        if total > MAX_TOTAL_BITS {
            return Err(Error::TooManyBits {
                bits: total,
                max: MAX_TOTAL_BITS,
            });
        }
        let coin_dims = (0..g.num_vertices()).map(|v| g.coin_dim(v)).collect();
        let mut flip: Vec<u32> = (0..1u32 << (nv + nc)).collect();
        for v in 0..g.num_vertices() {
            for c in 0..g.coin_dim(v) {
                let u = g.neighbor_of_port(v, c).unwrap();
                let back = g.port_of(u, v).unwrap();
                flip[(v << nc) | c] = ((u << nc) | back) as u32;
            }
        }
        Ok(RegisterLayout {
            nv,
            nc,
            k,
            coin_dims,
            flip,
            data,
        })
    }

    /// Layout with `k` walkers and every data qubit declared in `g`, in vertex order.
    pub fn for_network(g: &NetworkGraph, k: usize) -> Result<Self> {
        let order = (0..g.num_vertices())
            .flat_map(|v| g.data_qubits(v).iter().map(move |q| (v, q.clone())))
            .collect();
        Self::new(g, k, order)
    }

    /// Data-only layout (no walkers), used by the oracle.
    pub fn data_only(data: Vec<DataQubit>) -> Result<Self> {
        if data.len() > MAX_TOTAL_BITS {
            return Err(Error::TooManyBits {
                bits: data.len(),
                max: MAX_TOTAL_BITS,
            });
        }
        Ok(RegisterLayout {
            nv: 1,
            nc: 1,
            k: 0,
            coin_dims: Vec::new(),
            flip: Vec::new(),
            data,
        })
    }

    /// The same data plane with the walkers removed.
    pub fn data_plane(&self) -> RegisterLayout {
        RegisterLayout::data_only(self.data.clone()).expect("data plane fits")
    }

    pub fn vertex_bits(&self) -> usize {
        self.nv
    }

    pub fn coin_bits(&self) -> usize {
        self.nc
    }

    pub fn walkers(&self) -> usize {
        self.k
    }

    pub fn walker_bits(&self) -> usize {
        self.nv + self.nc
    }

    pub fn data_qubits(&self) -> &[DataQubit] {
        &self.data
    }

    pub fn num_data(&self) -> usize {
        self.data.len()
    }

    pub fn num_vertices(&self) -> usize {
        self.coin_dims.len()
    }

    pub fn total_bits(&self) -> usize {
        self.k * self.walker_bits() + self.data.len()
    }

    pub fn dim(&self) -> usize {
        1usize << self.total_bits()
    }

    pub fn coin_dim(&self, v: usize) -> usize {
        self.coin_dims.get(v).copied().unwrap_or(0)
    }

    /// Whether `(v, c)` names an edge of the graph with self-loops.
    pub fn is_valid_edge(&self, v: usize, c: usize) -> bool {
        c < self.coin_dim(v)
    }

    pub fn data_index(&self, vertex: usize, name: &str) -> Option<usize> {
        self.data.iter().position(|q| q.vertex == vertex && q.name == name)
    }

    pub(crate) fn flip_table(&self) -> &[u32] {
        &self.flip
    }

    /// Amplitude-index bit offset of walker `j`'s register (its least significant bit).
    #[inline]
    pub fn walker_offset(&self, j: usize) -> usize {
        self.total_bits() - (j + 1) * self.walker_bits()
    }

    #[inline]
    pub fn walker_field(&self, index: usize, j: usize) -> usize {
        (index >> self.walker_offset(j)) & ((1 << self.walker_bits()) - 1)
    }

    #[inline]
    pub fn vertex_of(&self, index: usize, j: usize) -> usize {
        self.walker_field(index, j) >> self.nc
    }

    #[inline]
    pub fn coin_of(&self, index: usize, j: usize) -> usize {
        self.walker_field(index, j) & ((1 << self.nc) - 1)
    }

    /// `index` with walker `j`'s register replaced by `field`.
    #[inline]
    pub fn with_walker_field(&self, index: usize, j: usize, field: usize) -> usize {
        let off = self.walker_offset(j);
        let mask = ((1 << self.walker_bits()) - 1) << off;
        (index & !mask) | (field << off)
    }

    #[inline]
    pub fn with_coin(&self, index: usize, j: usize, coin: usize) -> usize {
        let off = self.walker_offset(j);
        let mask = ((1 << self.nc) - 1) << off;
        (index & !mask) | (coin << off)
    }

    /// Amplitude-index bit of data qubit `i`.
    #[inline]
    pub fn data_bit(&self, i: usize) -> usize {
        self.data.len() - 1 - i
    }

    /// Converts a qubit number (MSB = 0) to an amplitude-index bit.
    #[inline]
    pub fn qubit_bit(&self, q: usize) -> usize {
        self.total_bits() - 1 - q
    }

    /// Qubit numbers of walker `j`'s vertex register, most significant first.
    pub fn vertex_qubits(&self, j: usize) -> Vec<usize> {
        let start = j * self.walker_bits();
        (start..start + self.nv).collect()
    }

    pub fn coin_qubits(&self, j: usize) -> Vec<usize> {
        let start = j * self.walker_bits() + self.nv;
        (start..start + self.nc).collect()
    }

    pub fn walker_qubits(&self, j: usize) -> Vec<usize> {
        let start = j * self.walker_bits();
        (start..start + self.walker_bits()).collect()
    }

    /// Qubit numbers of all walker registers.
    pub fn all_walker_qubits(&self) -> Vec<usize> {
        (0..self.k * self.walker_bits()).collect()
    }

    /// Qubit number of data qubit `i`.
    pub fn data_qubit(&self, i: usize) -> usize {
        self.k * self.walker_bits() + i
    }

    pub fn check_walker(&self, j: usize) -> Result<()> {
        if j < self.k {
            Ok(())
        } else {
            Err(Error::InvalidWalker(j))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_node() -> NetworkGraph {
        let mut g = NetworkGraph::undirected(&["A", "B"], &[("A", "B")]).unwrap();
        g.add_data_qubit(0, "a").unwrap();
        g.add_data_qubit(1, "b").unwrap();
        g
    }

    #[test]
    fn widths_and_offsets() {
        let g = two_node();
        let l = RegisterLayout::for_network(&g, 2).unwrap();
        assert_eq!(l.total_bits(), 2 * 2 + 2);
        assert_eq!(l.walker_offset(0), 4);
        assert_eq!(l.walker_offset(1), 2);
        assert_eq!(l.data_bit(0), 1);
        assert_eq!(l.vertex_qubits(1), vec![2]);
        assert_eq!(l.coin_qubits(1), vec![3]);
        assert_eq!(l.data_qubit(1), 5);
        assert_eq!(l.qubit_bit(5), 0);
    }

    #[test]
    fn flip_table_reverses_edges() {
        let g = two_node();
        let l = RegisterLayout::for_network(&g, 1).unwrap();
        // |A, port1> -> |B, port1>, self-loops fixed.
        assert_eq!(l.flip_table(), &[0, 3, 2, 1]);
    }

    #[test]
    fn bit_cap_enforced() {
        let g = NetworkGraph::grid(3, 3);
        assert!(matches!(
            RegisterLayout::for_network(&g, 4),
            Err(Error::TooManyBits { bits: 28, .. })
        ));
    }

    #[test]
    fn undeclared_qubit_rejected() {
        let g = two_node();
        assert!(matches!(
            RegisterLayout::new(&g, 1, vec![(0, "b".into())]),
            Err(Error::UnknownQubit(_))
        ));
    }
}
