//! Network graphs with implicit self-loops and deterministic coin ports.
//!
//! Vertex ids are positions in the sorted label list. At every vertex `v`, port 0 is the
//! self-loop and ports `1..=d(v)` name the neighbors in ascending label order, so the coin
//! value `c_vu` of edge `(v, u)` is `port_of(v, u)`.

use serde::Deserialize;
use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::error::{Error, Result};

/// Port of the self-loop at every vertex.
pub const SELF_PORT: usize = 0;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetworkGraph {
    labels: Vec<String>,
    index: BTreeMap<String, usize>,
    /// `neighbors[v]` sorted ascending; `neighbors[v][i]` sits on port `i + 1`.
    neighbors: Vec<Vec<usize>>,
    data_qubits: Vec<Vec<String>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkFile {
    nodes: Vec<String>,
    edges: Vec<(String, String)>,
    #[serde(default)]
    data_qubits: BTreeMap<String, Vec<String>>,
}

/// Parses a network file: `{"nodes": [...], "edges": [[u, v], ...], "data_qubits": {node: [...]}}`.
///
/// Both directions of every edge must be listed; self-loops are added here and must not be.
pub fn load_network(text: &str) -> Result<NetworkGraph> {
    let file: NetworkFile = serde_json::from_str(text).map_err(|e| Error::NetworkParse(e.to_string()))?;
    let edges: Vec<(&str, &str)> = file.edges.iter().map(|(u, v)| (u.as_str(), v.as_str())).collect();
    let nodes: Vec<&str> = file.nodes.iter().map(String::as_str).collect();
    let mut g = NetworkGraph::from_directed_edges(&nodes, &edges)?;
    for (node, qubits) in &file.data_qubits {
        let v = g.vertex(node)?;
        for q in qubits {
            g.add_data_qubit(v, q)?;
        }
    }
    Ok(g)
}

fn ceil_log2(n: usize) -> usize {
    if n <= 1 {
        0
    } else {
        (usize::BITS - (n - 1).leading_zeros()) as usize
    }
}

impl NetworkGraph {
    /// Builds a graph from an explicit directed edge list, which must already be symmetric.
    pub fn from_directed_edges(nodes: &[&str], edges: &[(&str, &str)]) -> Result<Self> {
        let mut labels: Vec<String> = Vec::with_capacity(nodes.len());
        for &n in nodes {
            if n.is_empty() {
                return Err(Error::EmptyLabel);
            }
            labels.push(n.to_string());
        }
        labels.sort();
        if let Some(w) = labels.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::DuplicateNode(w[0].clone()));
        }
        let index: BTreeMap<String, usize> = labels.iter().enumerate().map(|(i, l)| (l.clone(), i)).collect();
        let lookup = |l: &str| index.get(l).copied().ok_or(Error::UnknownNode(l.to_string()));

        let mut directed = BTreeSet::new();
        for &(u, v) in edges {
            let (iu, iv) = (lookup(u)?, lookup(v)?);
            if iu == iv {
                return Err(Error::ListedSelfLoop(u.to_string()));
            }
            if !directed.insert((iu, iv)) {
                return Err(Error::DuplicateEdge(u.to_string(), v.to_string()));
            }
        }
        let mut neighbors = vec![Vec::new(); labels.len()];
        for &(iu, iv) in &directed {
            if !directed.contains(&(iv, iu)) {
                return Err(Error::AsymmetricEdge(labels[iu].clone(), labels[iv].clone()));
            }
            neighbors[iu].push(iv);
        }
        Ok(NetworkGraph {
            data_qubits: vec![Vec::new(); labels.len()],
            labels,
            index,
            neighbors,
        })
    }

    /// Builds a graph from undirected pairs, adding both directions.
    pub fn undirected(nodes: &[&str], pairs: &[(&str, &str)]) -> Result<Self> {
        let edges: Vec<(&str, &str)> = pairs.iter().flat_map(|&(u, v)| [(u, v), (v, u)]).collect();
        Self::from_directed_edges(nodes, &edges)
    }

    /// `rows × cols` grid; node `r*cols + c` is labelled `n{r*cols + c}`.
    pub fn grid(rows: usize, cols: usize) -> Self {
        let names: Vec<String> = (0..rows * cols).map(|i| format!("n{i}")).collect();
        let mut pairs = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                let i = r * cols + c;
                if c + 1 < cols {
                    pairs.push((names[i].as_str(), names[i + 1].as_str()));
                }
                if r + 1 < rows {
                    pairs.push((names[i].as_str(), names[i + cols].as_str()));
                }
            }
        }
        let nodes: Vec<&str> = names.iter().map(String::as_str).collect();
        Self::undirected(&nodes, &pairs).expect("grid construction is well-formed")
    }

    pub fn add_data_qubit(&mut self, v: usize, name: &str) -> Result<()> {
        self.check_vertex(v)?;
        if name.is_empty() || name.contains('.') {
            return Err(Error::NetworkParse(format!(
                "invalid data qubit name `{name}` at `{}`",
                self.labels[v]
            )));
        }
        if self.data_qubits[v].iter().any(|q| q == name) {
            return Err(Error::DuplicateQubit(format!("{}.{name}", self.labels[v])));
        }
        self.data_qubits[v].push(name.to_string());
        Ok(())
    }

    pub fn num_vertices(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, v: usize) -> &str {
        &self.labels[v]
    }

    pub fn vertex(&self, label: &str) -> Result<usize> {
        self.index
            .get(label)
            .copied()
            .ok_or_else(|| Error::UnknownNode(label.to_string()))
    }

    pub fn check_vertex(&self, v: usize) -> Result<()> {
        if v < self.labels.len() {
            Ok(())
        } else {
            Err(Error::InvalidVertex(v))
        }
    }

    /// Number of proper neighbors, `d(v)`.
    pub fn degree(&self, v: usize) -> usize {
        self.neighbors[v].len()
    }

    /// Number of valid coin values at `v`, `d(v) + 1` including the self-loop.
    pub fn coin_dim(&self, v: usize) -> usize {
        self.neighbors[v].len() + 1
    }

    pub fn max_coin_dim(&self) -> usize {
        (0..self.num_vertices()).map(|v| self.coin_dim(v)).max().unwrap_or(1)
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[v]
    }

    pub fn is_adjacent(&self, u: usize, v: usize) -> bool {
        self.neighbors[u].binary_search(&v).is_ok()
    }

    /// The vertex reached through port `coin` of `v`; port 0 returns `v` itself.
    pub fn neighbor_of_port(&self, v: usize, coin: usize) -> Option<usize> {
        match coin {
            SELF_PORT => Some(v),
            c => self.neighbors[v].get(c - 1).copied(),
        }
    }

    /// Coin value `c_vu` of edge `(v, u)`; `port_of(v, v) == Some(0)`.
    pub fn port_of(&self, v: usize, u: usize) -> Option<usize> {
        if u == v {
            return Some(SELF_PORT);
        }
        self.neighbors[v].binary_search(&u).ok().map(|i| i + 1)
    }

    pub fn check_coin(&self, v: usize, coin: usize) -> Result<()> {
        self.check_vertex(v)?;
        if coin < self.coin_dim(v) {
            Ok(())
        } else {
            Err(Error::InvalidCoin { vertex: v, coin })
        }
    }

    pub fn port_to(&self, v: usize, u: usize) -> Result<usize> {
        self.port_of(v, u).ok_or(Error::NotNeighbor(u, v))
    }

    pub fn data_qubits(&self, v: usize) -> &[String] {
        &self.data_qubits[v]
    }

    /// Unordered proper edges `(u, v)` with `u < v`, in ascending order.
    pub fn proper_edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (u, ns) in self.neighbors.iter().enumerate() {
            out.extend(ns.iter().filter(|&&v| v > u).map(|&v| (u, v)));
        }
        out
    }

    /// Vertex register width, `ceil(log2 |V|)` and at least 1.
    pub fn vertex_bits(&self) -> usize {
        ceil_log2(self.num_vertices()).max(1)
    }

    /// Coin register width, `ceil(log2 max_v (d(v) + 1))` and at least 1.
    pub fn coin_bits(&self) -> usize {
        ceil_log2(self.max_coin_dim()).max(1)
    }

    fn bfs(&self, src: usize) -> (Vec<Option<usize>>, Vec<Option<usize>>) {
        let n = self.num_vertices();
        let mut dist = vec![None; n];
        let mut prev = vec![None; n];
        let mut queue = VecDeque::from([src]);
        dist[src] = Some(0);
        while let Some(v) = queue.pop_front() {
            let d = dist[v].unwrap();
            for &u in &self.neighbors[v] {
                if dist[u].is_none() {
                    dist[u] = Some(d + 1);
                    prev[u] = Some(v);
                    queue.push_back(u);
                }
            }
        }
        (dist, prev)
    }

    /// Minimum hop distance; `Ok(None)` when `v` is unreachable from `u`.
    pub fn hop_distance(&self, u: usize, v: usize) -> Result<Option<usize>> {
        self.check_vertex(u)?;
        self.check_vertex(v)?;
        Ok(self.bfs(u).0[v])
    }

    /// A shortest path from `u` to `v`, breaking ties towards smaller vertex ids.
    pub fn shortest_path(&self, u: usize, v: usize) -> Result<Option<PathSpec>> {
        self.check_vertex(u)?;
        self.check_vertex(v)?;
        let (dist, prev) = self.bfs(u);
        if dist[v].is_none() {
            return Ok(None);
        }
        let mut nodes = vec![v];
        let mut cur = v;
        while let Some(p) = prev[cur] {
            nodes.push(p);
            cur = p;
        }
        nodes.reverse();
        Ok(Some(PathSpec { nodes }))
    }
}

/// Qubit budget of the control plane for `k` walkers: `k · (nv + nc)`.
pub fn control_plane_budget(g: &NetworkGraph, k: usize) -> usize {
    k * (g.vertex_bits() + g.coin_bits())
}

/// A simple path `[A, …, B]` through adjacent vertices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PathSpec {
    nodes: Vec<usize>,
}

impl PathSpec {
    pub fn new(g: &NetworkGraph, nodes: Vec<usize>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidPath("empty path".into()));
        }
        for &v in &nodes {
            g.check_vertex(v)?;
        }
        for w in nodes.windows(2) {
            if !g.is_adjacent(w[0], w[1]) {
                return Err(Error::InvalidPath(format!(
                    "hop {} -> {} is not an edge",
                    g.label(w[0]),
                    g.label(w[1])
                )));
            }
        }
        let mut seen = BTreeSet::new();
        for &v in &nodes {
            if !seen.insert(v) {
                return Err(Error::InvalidPath(format!("node {} repeated", g.label(v))));
            }
        }
        Ok(PathSpec { nodes })
    }

    pub fn from_labels(g: &NetworkGraph, labels: &[&str]) -> Result<Self> {
        let nodes = labels.iter().map(|l| g.vertex(l)).collect::<Result<_>>()?;
        Self::new(g, nodes)
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn start(&self) -> usize {
        self.nodes[0]
    }

    pub fn end(&self) -> usize {
        *self.nodes.last().unwrap()
    }

    /// `Δ_p(A, B)`.
    pub fn hops(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn position(&self, v: usize) -> Option<usize> {
        self.nodes.iter().position(|&x| x == v)
    }
}

/// A directed tree rooted at `root`, given by `(parent, child)` edges of the graph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreeSpec {
    root: usize,
    parent: BTreeMap<usize, usize>,
    children: BTreeMap<usize, Vec<usize>>,
}

impl TreeSpec {
    pub fn new(g: &NetworkGraph, root: usize, edges: &[(usize, usize)]) -> Result<Self> {
        g.check_vertex(root)?;
        let mut parent = BTreeMap::new();
        let mut children: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for &(p, c) in edges {
            g.check_vertex(p)?;
            g.check_vertex(c)?;
            if !g.is_adjacent(p, c) {
                return Err(Error::InvalidTree(format!(
                    "{} > {} is not an edge",
                    g.label(p),
                    g.label(c)
                )));
            }
            if c == root {
                return Err(Error::InvalidTree("root has a predecessor".into()));
            }
            if parent.insert(c, p).is_some() {
                return Err(Error::InvalidTree(format!(
                    "{} has more than one predecessor",
                    g.label(c)
                )));
            }
            children.entry(p).or_default().push(c);
        }
        for cs in children.values_mut() {
            cs.sort_unstable();
        }
        let tree = TreeSpec { root, parent, children };
        // Every edge endpoint must hang off the root.
        let reached = tree.nodes().len();
        let mut all: BTreeSet<usize> = tree.parent.keys().copied().collect();
        all.extend(tree.children.keys().copied());
        all.insert(root);
        if reached != all.len() {
            return Err(Error::InvalidTree("not connected to the root".into()));
        }
        Ok(tree)
    }

    pub fn from_labels(g: &NetworkGraph, root: &str, edges: &[(&str, &str)]) -> Result<Self> {
        let root = g.vertex(root)?;
        let edges = edges
            .iter()
            .map(|(p, c)| Ok((g.vertex(p)?, g.vertex(c)?)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(g, root, &edges)
    }

    /// A path viewed as a tree.
    pub fn from_path(g: &NetworkGraph, path: &PathSpec) -> Result<Self> {
        let edges: Vec<_> = path.nodes().windows(2).map(|w| (w[0], w[1])).collect();
        Self::new(g, path.start(), &edges)
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        self.parent.get(&v).copied()
    }

    /// Successors `S(v)` in ascending order.
    pub fn children(&self, v: usize) -> &[usize] {
        self.children.get(&v).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Tree nodes in breadth-first order from the root.
    pub fn nodes(&self) -> Vec<usize> {
        let mut out = vec![self.root];
        let mut i = 0;
        while i < out.len() {
            let v = out[i];
            out.extend_from_slice(self.children(v));
            i += 1;
        }
        out
    }

    pub fn contains(&self, v: usize) -> bool {
        v == self.root || self.parent.contains_key(&v)
    }

    /// `Δ_T(A, v)`.
    pub fn depth(&self, v: usize) -> Option<usize> {
        if !self.contains(v) {
            return None;
        }
        let mut d = 0;
        let mut cur = v;
        while let Some(p) = self.parent(cur) {
            cur = p;
            d += 1;
        }
        Some(d)
    }

    pub fn height(&self) -> usize {
        self.nodes()
            .into_iter()
            .filter_map(|v| self.depth(v))
            .max()
            .unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_node_ports() {
        let g = load_network(r#"{"nodes":["A","B"],"edges":[["A","B"],["B","A"]]}"#).unwrap();
        let a = g.vertex("A").unwrap();
        let b = g.vertex("B").unwrap();
        assert_eq!(g.degree(a), 1);
        assert_eq!(g.port_of(a, b), Some(1));
        assert_eq!(g.port_of(a, a), Some(0));
    }

    #[test]
    fn asymmetric_edges_are_rejected() {
        let err = load_network(r#"{"nodes":["A","B"],"edges":[["A","B"]]}"#).unwrap_err();
        assert_eq!(err, Error::AsymmetricEdge("A".into(), "B".into()));
    }

    #[test]
    fn loader_errors() {
        assert!(matches!(
            load_network(r#"{"nodes":["A","A"],"edges":[]}"#),
            Err(Error::DuplicateNode(_))
        ));
        assert!(matches!(
            load_network(r#"{"nodes":["A","B"],"edges":[["A","B"],["B","A"],["A","B"]]}"#),
            Err(Error::DuplicateEdge(..))
        ));
        assert!(matches!(
            load_network(r#"{"nodes":["A"],"edges":[["A","A"]]}"#),
            Err(Error::ListedSelfLoop(_))
        ));
        assert!(matches!(
            load_network(r#"{"nodes":["A"],"edges":[["A","Z"]]}"#),
            Err(Error::UnknownNode(_))
        ));
        assert!(matches!(
            load_network(r#"{"nodes":[""],"edges":[]}"#),
            Err(Error::EmptyLabel)
        ));
        assert!(matches!(
            load_network(r#"{"nodes":["A"],"edges":[],"data_qubits":{"B":["b"]}}"#),
            Err(Error::UnknownNode(_))
        ));
        assert!(matches!(
            load_network(r#"{"nodes":["A"],"edges":[],"data_qubits":{"A":["a","a"]}}"#),
            Err(Error::DuplicateQubit(_))
        ));
        assert!(matches!(load_network("{"), Err(Error::NetworkParse(_))));
    }

    #[test]
    fn grid_center_ports() {
        let g = NetworkGraph::grid(3, 3);
        let v = |l: &str| g.vertex(l).unwrap();
        let center = v("n4");
        let want = [("n4", 0), ("n1", 1), ("n3", 2), ("n5", 3), ("n7", 4)];
        for (l, port) in want {
            assert_eq!(g.neighbor_of_port(center, port), Some(v(l)));
            assert_eq!(g.port_of(center, v(l)), Some(port));
        }
        assert_eq!(g.neighbor_of_port(center, 5), None);
    }

    #[test]
    fn port_map_is_a_bijection() {
        let g = NetworkGraph::grid(3, 4);
        for v in 0..g.num_vertices() {
            for c in 0..g.coin_dim(v) {
                let u = g.neighbor_of_port(v, c).unwrap();
                assert_eq!(g.port_of(v, u), Some(c));
                // flip-flop needs the reverse port as well
                assert!(g.port_of(u, v).is_some());
            }
        }
    }

    #[test]
    fn grid_distances() {
        let g = NetworkGraph::grid(3, 3);
        let v = |l: &str| g.vertex(l).unwrap();
        assert_eq!(g.hop_distance(v("n0"), v("n0")).unwrap(), Some(0));
        assert_eq!(g.hop_distance(v("n0"), v("n8")).unwrap(), Some(4));
        assert_eq!(g.hop_distance(v("n0"), v("n5")).unwrap(), Some(3));
        let p = g.shortest_path(v("n0"), v("n5")).unwrap().unwrap();
        assert_eq!(p.hops(), 3);
        assert!(PathSpec::new(&g, p.nodes().to_vec()).is_ok());
        assert!(g.hop_distance(v("n0"), 99).is_err());
    }

    #[test]
    fn disconnected_pairs_have_no_distance() {
        let g = NetworkGraph::undirected(&["A", "B", "C"], &[("A", "B")]).unwrap();
        assert_eq!(g.hop_distance(0, 2).unwrap(), None);
        assert!(g.shortest_path(0, 2).unwrap().is_none());
    }

    #[test]
    fn budgets() {
        let g = NetworkGraph::grid(3, 3);
        assert_eq!((g.vertex_bits(), g.coin_bits()), (4, 3));
        assert_eq!(control_plane_budget(&g, 1), 7);
        assert_eq!(control_plane_budget(&g, 2), 14);
        let p2 = NetworkGraph::undirected(&["A", "B"], &[("A", "B")]).unwrap();
        assert_eq!((p2.vertex_bits(), p2.coin_bits()), (1, 1));
        assert_eq!(control_plane_budget(&p2, 1), 2);
    }

    #[test]
    fn path_validation() {
        let g = NetworkGraph::grid(3, 3);
        assert!(PathSpec::from_labels(&g, &["n0", "n1", "n2"]).is_ok());
        assert!(matches!(
            PathSpec::from_labels(&g, &["n0", "n2"]),
            Err(Error::InvalidPath(_))
        ));
        assert!(matches!(
            PathSpec::from_labels(&g, &["n0", "n1", "n0"]),
            Err(Error::InvalidPath(_))
        ));
    }

    #[test]
    fn tree_validation() {
        let g = NetworkGraph::grid(3, 3);
        let t = TreeSpec::from_labels(&g, "n4", &[("n4", "n1"), ("n4", "n3"), ("n1", "n0")]).unwrap();
        assert_eq!(t.depth(g.vertex("n0").unwrap()), Some(2));
        assert_eq!(t.children(g.vertex("n4").unwrap()).len(), 2);
        assert_eq!(t.height(), 2);
        assert!(TreeSpec::from_labels(&g, "n4", &[("n4", "n1"), ("n0", "n1")]).is_err());
        assert!(TreeSpec::from_labels(&g, "n4", &[("n4", "n1"), ("n0", "n3")]).is_err());
        assert!(TreeSpec::from_labels(&g, "n4", &[("n1", "n4")]).is_err());
        assert!(TreeSpec::from_labels(&g, "n4", &[("n4", "n0")]).is_err());
    }
}
