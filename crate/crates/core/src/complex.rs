//! Simplicial complexes of dimension at most two and their boundary operators.
//!
//! Every simplex is stored with ascending vertex indices. With that
//! orientation, `∂₁` carries `-1` at the lower vertex and `+1` at the higher
//! one, and `∂₂` maps triangle `(i, j, k)` to `(j,k) - (i,k) + (i,j)`.

use std::collections::{HashMap, VecDeque};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when checking that a connectivity matrix is symmetric.
pub const SYMMETRY_TOLERANCE: f64 = 1e-9;

/// Nodes, oriented edges and oriented triangles.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplicialComplex {
    n_nodes: usize,
    edges: Vec<[usize; 2]>,
    triangles: Vec<[usize; 3]>,
    edge_index: HashMap<(usize, usize), usize>,
}

/// JSON layout used for complex export and import.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComplexFile {
    #[serde(default = "crate::io::schema_version")]
    pub schema_version: u32,
    pub n_nodes: usize,
    pub edges: Vec<[usize; 2]>,
    #[serde(default)]
    pub triangles: Vec<[usize; 3]>,
}

impl SimplicialComplex {
    /// Builds a complex from explicit simplex lists.
    ///
    /// Vertex lists are sorted into ascending order; edge order is kept as
    /// given and defines column order of `∂₁`. Self-loops, duplicate edges,
    /// out-of-range vertices and triangles with a missing edge are rejected.
    pub fn new(
        n_nodes: usize,
        edges: impl IntoIterator<Item = [usize; 2]>,
        triangles: impl IntoIterator<Item = [usize; 3]>,
    ) -> Result<Self> {
        let mut stored = Vec::new();
        let mut edge_index = HashMap::new();
        for [a, b] in edges {
            if a == b {
                return Err(Error::Topology(format!("self-loop at node {a}")));
            }
            let (i, j) = (a.min(b), a.max(b));
            if j >= n_nodes {
                return Err(Error::Topology(format!(
                    "edge ({a},{b}) references node outside 0..{n_nodes}"
                )));
            }
            if edge_index.insert((i, j), stored.len()).is_some() {
                return Err(Error::Topology(format!("duplicate edge ({i},{j})")));
            }
            stored.push([i, j]);
        }

        let mut tris = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for mut t in triangles {
            t.sort_unstable();
            let [i, j, k] = t;
            if i == j || j == k {
                return Err(Error::Topology(format!("degenerate triangle {t:?}")));
            }
            for pair in [(i, j), (i, k), (j, k)] {
                if !edge_index.contains_key(&pair) {
                    return Err(Error::Topology(format!(
                        "triangle ({i},{j},{k}) references missing edge {pair:?}"
                    )));
                }
            }
            if !seen.insert(t) {
                return Err(Error::Topology(format!("duplicate triangle {t:?}")));
            }
            tris.push(t);
        }

        Ok(SimplicialComplex {
            n_nodes,
            edges: stored,
            triangles: tris,
            edge_index,
        })
    }

    /// Thresholds a symmetric connectivity matrix: edge `(i, j)` exists iff
    /// `|m[i][j]| > threshold`. The diagonal is ignored and no triangles are
    /// filled.
    pub fn from_connectivity(matrix: &[Vec<f64>], threshold: f64) -> Result<Self> {
        if !(threshold >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "threshold must be nonnegative, got {threshold}"
            )));
        }
        let n = matrix.len();
        for (i, row) in matrix.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InputFormat(format!(
                    "matrix is not square: row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
        }
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let (a, b) = (matrix[i][j], matrix[j][i]);
                if !a.is_finite() || !b.is_finite() {
                    return Err(Error::InputFormat(format!("non-finite entry at ({i},{j})")));
                }
                if (a - b).abs() > SYMMETRY_TOLERANCE {
                    return Err(Error::InputFormat(format!(
                        "matrix is not symmetric at ({i},{j}): {a} vs {b}"
                    )));
                }
                if a.abs() > threshold {
                    edges.push([i, j]);
                }
            }
        }
        SimplicialComplex::new(n, edges, [])
    }

    /// Path graph `0 - 1 - ... - (n-1)`.
    pub fn path(n: usize) -> Self {
        let edges = (1..n).map(|i| [i - 1, i]);
        SimplicialComplex::new(n, edges, []).expect("path graph is valid")
    }

    /// `rows × cols` lattice graph, nodes numbered row-major. Horizontal
    /// edges of a row come before its vertical edges.
    pub fn grid(rows: usize, cols: usize) -> Self {
        let id = |r: usize, c: usize| r * cols + c;
        let mut edges = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                if c + 1 < cols {
                    edges.push([id(r, c), id(r, c + 1)]);
                }
            }
            for c in 0..cols {
                if r + 1 < rows {
                    edges.push([id(r, c), id(r + 1, c)]);
                }
            }
        }
        SimplicialComplex::new(rows * cols, edges, []).expect("grid graph is valid")
    }

    /// A single filled triangle with edges ordered `[e01, e02, e12]`.
    pub fn filled_triangle() -> Self {
        SimplicialComplex::new(3, [[0, 1], [0, 2], [1, 2]], [[0, 1, 2]])
            .expect("triangle is valid")
    }

    /// Erdős–Rényi graph: each pair `i < j` is an edge with probability `p`.
    pub fn erdos_renyi<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Self {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.random::<f64>() < p {
                    edges.push([i, j]);
                }
            }
        }
        SimplicialComplex::new(n, edges, []).expect("random graph is valid")
    }

    /// Returns a copy with the given triangles filled.
    pub fn with_triangles(&self, triangles: impl IntoIterator<Item = [usize; 3]>) -> Result<Self> {
        SimplicialComplex::new(self.n_nodes, self.edges.iter().copied(), triangles)
    }

    /// All 3-cliques of the underlying graph, ascending.
    pub fn three_cliques(&self) -> Vec<[usize; 3]> {
        let nbrs = self.node_neighbors();
        let mut out = Vec::new();
        for (i, ni) in nbrs.iter().enumerate() {
            for &j in ni.iter().filter(|&&j| j > i) {
                for &k in nbrs[j].iter().filter(|&&k| k > j) {
                    if self.edge_index.contains_key(&(i, k)) {
                        out.push([i, j, k]);
                    }
                }
            }
        }
        out
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    /// Position of edge `{a, b}` in `edges`, if present.
    pub fn edge_position(&self, a: usize, b: usize) -> Option<usize> {
        self.edge_index.get(&(a.min(b), a.max(b))).copied()
    }

    /// Number of k-simplices for `k ∈ {0, 1, 2}`.
    pub fn count(&self, k: usize) -> Result<usize> {
        match k {
            0 => Ok(self.n_nodes),
            1 => Ok(self.edges.len()),
            2 => Ok(self.triangles.len()),
            _ => Err(Error::UnsupportedDimension(k)),
        }
    }

    /// Sorted neighbor lists of every node.
    pub fn node_neighbors(&self) -> Vec<Vec<usize>> {
        let mut nbrs = vec![Vec::new(); self.n_nodes];
        for &[i, j] in &self.edges {
            nbrs[i].push(j);
            nbrs[j].push(i);
        }
        for list in &mut nbrs {
            list.sort_unstable();
        }
        nbrs
    }

    /// Edge positions incident to each node, ascending.
    pub fn incident_edges(&self) -> Vec<Vec<usize>> {
        let mut inc = vec![Vec::new(); self.n_nodes];
        for (e, &[i, j]) in self.edges.iter().enumerate() {
            inc[i].push(e);
            inc[j].push(e);
        }
        inc
    }

    /// Line-graph neighbor lists: edges sharing a node, ascending, without
    /// the edge itself.
    pub fn edge_neighbors(&self) -> Vec<Vec<usize>> {
        let inc = self.incident_edges();
        self.edges
            .iter()
            .enumerate()
            .map(|(e, &[i, j])| {
                let mut list: Vec<usize> = inc[i]
                    .iter()
                    .chain(inc[j].iter())
                    .copied()
                    .filter(|&f| f != e)
                    .collect();
                list.sort_unstable();
                list.dedup();
                list
            })
            .collect()
    }

    /// Adjacency lists of the k-simplices (nodes sharing an edge, or edges
    /// sharing a node).
    pub fn simplex_neighbors(&self, k: usize) -> Result<Vec<Vec<usize>>> {
        match k {
            0 => Ok(self.node_neighbors()),
            1 => Ok(self.edge_neighbors()),
            _ => Err(Error::UnsupportedDimension(k)),
        }
    }

    /// Breadth-first hop distances from `source` in the k-simplex adjacency
    /// graph; `None` marks unreachable simplices.
    pub fn hop_distances(&self, k: usize, source: usize) -> Result<Vec<Option<usize>>> {
        let nbrs = self.simplex_neighbors(k)?;
        if source >= nbrs.len() {
            return Err(Error::InvalidParameter(format!(
                "source {source} out of range for {} {k}-simplices",
                nbrs.len()
            )));
        }
        Ok(bfs(&nbrs, source))
    }

    /// Shortest path length between two edges in the line graph; `None`
    /// when they lie in different components.
    pub fn edge_hop_distance(&self, e1: usize, e2: usize) -> Result<Option<usize>> {
        if e2 >= self.edges.len() {
            return Err(Error::InvalidParameter(format!("edge index {e2} out of range")));
        }
        Ok(self.hop_distances(1, e1)?[e2])
    }

    /// Number of connected components of the node graph.
    pub fn connected_components(&self) -> usize {
        let nbrs = self.node_neighbors();
        let mut seen = vec![false; self.n_nodes];
        let mut count = 0;
        for s in 0..self.n_nodes {
            if seen[s] {
                continue;
            }
            count += 1;
            for (v, d) in bfs(&nbrs, s).into_iter().enumerate() {
                if d.is_some() {
                    seen[v] = true;
                }
            }
        }
        count
    }

    /// Signed node-edge incidence `∂₁`.
    pub fn boundary_1(&self) -> BoundaryOperator {
        let entries = self
            .edges
            .iter()
            .enumerate()
            .flat_map(|(e, &[i, j])| [(i, e, -1), (j, e, 1)])
            .collect();
        BoundaryOperator {
            k: 1,
            rows: self.n_nodes,
            cols: self.edges.len(),
            entries,
        }
    }

    /// Signed edge-triangle incidence `∂₂`.
    pub fn boundary_2(&self) -> Result<BoundaryOperator> {
        let mut entries = Vec::with_capacity(3 * self.triangles.len());
        for (t, &[i, j, k]) in self.triangles.iter().enumerate() {
            for ((a, b), sign) in [((j, k), 1), ((i, k), -1), ((i, j), 1)] {
                let row = self.edge_position(a, b).ok_or_else(|| {
                    Error::Topology(format!("triangle ({i},{j},{k}) missing edge ({a},{b})"))
                })?;
                entries.push((row, t, sign));
            }
        }
        Ok(BoundaryOperator {
            k: 2,
            rows: self.edges.len(),
            cols: self.triangles.len(),
            entries,
        })
    }

    pub fn to_file(&self) -> ComplexFile {
        ComplexFile {
            schema_version: crate::io::SCHEMA_VERSION,
            n_nodes: self.n_nodes,
            edges: self.edges.clone(),
            triangles: self.triangles.clone(),
        }
    }

    pub fn from_file(file: &ComplexFile) -> Result<Self> {
        SimplicialComplex::new(
            file.n_nodes,
            file.edges.iter().copied(),
            file.triangles.iter().copied(),
        )
    }
}

fn bfs(nbrs: &[Vec<usize>], source: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; nbrs.len()];
    dist[source] = Some(0);
    let mut queue = VecDeque::from([source]);
    while let Some(u) = queue.pop_front() {
        let d = dist[u].unwrap();
        for &v in &nbrs[u] {
            if dist[v].is_none() {
                dist[v] = Some(d + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}

/// Sparse signed incidence matrix `∂_k`, stored as `(row, col, sign)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundaryOperator {
    pub k: usize,
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<(usize, usize, i8)>,
}

impl BoundaryOperator {
    pub fn to_dense(&self) -> Vec<Vec<i64>> {
        let mut m = vec![vec![0i64; self.cols]; self.rows];
        for &(r, c, s) in &self.entries {
            m[r][c] += i64::from(s);
        }
        m
    }

    /// Entries of column `col` as `(row, sign)`, in storage order.
    pub fn column(&self, col: usize) -> Vec<(usize, i8)> {
        self.entries
            .iter()
            .filter(|e| e.1 == col)
            .map(|&(r, _, s)| (r, s))
            .collect()
    }

    /// Exact integer product `self · rhs`.
    pub fn compose(&self, rhs: &BoundaryOperator) -> Result<Vec<Vec<i64>>> {
        if self.cols != rhs.rows {
            return Err(Error::shape(format!(
                "cannot compose {}x{} with {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut by_row: Vec<Vec<(usize, i64)>> = vec![Vec::new(); rhs.rows];
        for &(r, c, s) in &rhs.entries {
            by_row[r].push((c, i64::from(s)));
        }
        let mut out = vec![vec![0i64; rhs.cols]; self.rows];
        for &(r, mid, s) in &self.entries {
            for &(c, t) in &by_row[mid] {
                out[r][c] += i64::from(s) * t;
            }
        }
        Ok(out)
    }

    /// Checks the sign pattern expected for this dimension.
    pub fn check_structure(&self) -> Result<()> {
        let mut cols: Vec<Vec<(usize, i8)>> = vec![Vec::new(); self.cols];
        for &(r, c, s) in &self.entries {
            if r >= self.rows || c >= self.cols {
                return Err(Error::Topology(format!("entry ({r},{c}) out of bounds")));
            }
            if s != 1 && s != -1 {
                return Err(Error::Topology(format!("sign {s} at ({r},{c})")));
            }
            cols[c].push((r, s));
        }
        for (c, col) in cols.iter().enumerate() {
            match self.k {
                1 => {
                    let ok = col.len() == 2 && {
                        let mut sorted = col.clone();
                        sorted.sort_unstable();
                        sorted[0].0 < sorted[1].0 && sorted[0].1 == -1 && sorted[1].1 == 1
                    };
                    if !ok {
                        return Err(Error::Topology(format!("∂₁ column {c} malformed: {col:?}")));
                    }
                }
                2 => {
                    let plus = col.iter().filter(|e| e.1 == 1).count();
                    let mut rows: Vec<usize> = col.iter().map(|e| e.0).collect();
                    rows.sort_unstable();
                    rows.dedup();
                    if col.len() != 3 || plus != 2 || rows.len() != 3 {
                        return Err(Error::Topology(format!("∂₂ column {c} malformed: {col:?}")));
                    }
                }
                k => return Err(Error::UnsupportedDimension(k)),
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn constant_matrix(n: usize, v: f64) -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| (0..n).map(|j| if i == j { 0.0 } else { v }).collect())
            .collect()
    }

    #[test]
    fn threshold_admits_all_or_none() {
        let m = constant_matrix(3, 0.9);
        let c = SimplicialComplex::from_connectivity(&m, 0.5).unwrap();
        assert_eq!(c.n_nodes(), 3);
        assert_eq!(c.edges(), &[[0, 1], [0, 2], [1, 2]]);
        assert_eq!(c.n_triangles(), 0);

        let c = SimplicialComplex::from_connectivity(&m, 1.0).unwrap();
        assert_eq!(c.n_nodes(), 3);
        assert_eq!(c.n_edges(), 0);
    }

    #[test]
    fn threshold_uses_absolute_value() {
        let m = vec![
            vec![0.0, 0.8, 0.1],
            vec![0.8, 0.0, -0.7],
            vec![0.1, -0.7, 0.0],
        ];
        let c = SimplicialComplex::from_connectivity(&m, 0.5).unwrap();
        assert_eq!(c.edges(), &[[0, 1], [1, 2]]);
    }

    #[test]
    fn rejects_bad_matrices() {
        let ragged = vec![vec![0.0, 1.0], vec![1.0]];
        assert!(matches!(
            SimplicialComplex::from_connectivity(&ragged, 0.5),
            Err(Error::InputFormat(_))
        ));
        let asym = vec![vec![0.0, 1.0], vec![0.5, 0.0]];
        assert!(matches!(
            SimplicialComplex::from_connectivity(&asym, 0.5),
            Err(Error::InputFormat(_))
        ));
        let nearly = vec![vec![0.0, 1.0], vec![1.0 + 1e-12, 0.0]];
        assert!(SimplicialComplex::from_connectivity(&nearly, 0.5).is_ok());
    }

    #[test]
    fn diagonal_never_creates_edges() {
        let m = vec![vec![5.0, 0.0], vec![0.0, 5.0]];
        let c = SimplicialComplex::from_connectivity(&m, 0.5).unwrap();
        assert_eq!(c.n_edges(), 0);
    }

    #[test]
    fn boundary_1_path() {
        let c = SimplicialComplex::path(3);
        let d1 = c.boundary_1();
        assert_eq!(d1.column(0), vec![(0, -1), (1, 1)]);
        assert_eq!(d1.column(1), vec![(1, -1), (2, 1)]);
        d1.check_structure().unwrap();

        let single = SimplicialComplex::path(2).boundary_1();
        assert_eq!(single.cols, 1);
        assert_eq!(single.column(0), vec![(0, -1), (1, 1)]);

        let empty = SimplicialComplex::new(4, [], []).unwrap().boundary_1();
        assert_eq!((empty.rows, empty.cols), (4, 0));
    }

    #[test]
    fn boundary_2_cases() {
        let cycle = SimplicialComplex::new(3, [[0, 1], [0, 2], [1, 2]], []).unwrap();
        assert_eq!(cycle.boundary_2().unwrap().cols, 0);

        let tri = SimplicialComplex::filled_triangle();
        let d2 = tri.boundary_2().unwrap();
        // edges: e01 = 0, e02 = 1, e12 = 2
        assert_eq!(d2.column(0), vec![(2, 1), (1, -1), (0, 1)]);
        d2.check_structure().unwrap();
        let zero = tri.boundary_1().compose(&d2).unwrap();
        assert!(zero.iter().flatten().all(|&x| x == 0));

        // two triangles sharing edge (1,2)
        let two = SimplicialComplex::new(
            4,
            [[0, 1], [0, 2], [1, 2], [1, 3], [2, 3]],
            [[0, 1, 2], [1, 2, 3]],
        )
        .unwrap();
        let d2 = two.boundary_2().unwrap();
        assert_eq!(d2.cols, 2);
        let shared = two.edge_position(1, 2).unwrap();
        // (1,2) is the (j,k) face of the first triangle and the (i,j) face
        // of the second: +1 in both columns.
        assert_eq!(d2.to_dense()[shared], vec![1, 1]);
        let zero = two.boundary_1().compose(&d2).unwrap();
        assert!(zero.iter().flatten().all(|&x| x == 0));
    }

    #[test]
    fn triangle_with_missing_edge_is_rejected() {
        let err = SimplicialComplex::new(3, [[0, 1], [1, 2]], [[0, 1, 2]]).unwrap_err();
        assert!(matches!(err, Error::Topology(_)));
    }

    #[test]
    fn construction_rejects_invalid_edges() {
        assert!(SimplicialComplex::new(2, [[0, 0]], []).is_err());
        assert!(SimplicialComplex::new(2, [[0, 2]], []).is_err());
        assert!(SimplicialComplex::new(3, [[0, 1], [1, 0]], []).is_err());
        let c = SimplicialComplex::new(3, [[2, 0]], []).unwrap();
        assert_eq!(c.edges(), &[[0, 2]]);
    }

    #[test]
    fn edge_hops() {
        let p3 = SimplicialComplex::path(3);
        assert_eq!(p3.edge_hop_distance(0, 1).unwrap(), Some(1));
        assert_eq!(p3.edge_hop_distance(0, 0).unwrap(), Some(0));
        let p4 = SimplicialComplex::path(4);
        assert_eq!(p4.edge_hop_distance(0, 2).unwrap(), Some(2));
        let disjoint = SimplicialComplex::new(4, [[0, 1], [2, 3]], []).unwrap();
        assert_eq!(disjoint.edge_hop_distance(0, 1).unwrap(), None);
    }

    #[test]
    fn negating_the_matrix_gives_the_same_complex() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let n = rng.random_range(2..8);
            let mut m = vec![vec![0.0; n]; n];
            for i in 0..n {
                for j in (i + 1)..n {
                    let v = rng.random_range(-1.0..1.0);
                    m[i][j] = v;
                    m[j][i] = v;
                }
            }
            let neg: Vec<Vec<f64>> = m.iter().map(|r| r.iter().map(|x| -x).collect()).collect();
            let a = SimplicialComplex::from_connectivity(&m, 0.4).unwrap();
            let b = SimplicialComplex::from_connectivity(&neg, 0.4).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn grid_counts() {
        let g = SimplicialComplex::grid(5, 5);
        assert_eq!(g.n_nodes(), 25);
        assert_eq!(g.n_edges(), 40);
        assert_eq!(g.connected_components(), 1);
    }

    #[test]
    fn cliques_of_k4() {
        let k4 = SimplicialComplex::new(4, [[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]], [])
            .unwrap();
        assert_eq!(k4.three_cliques().len(), 4);
        let filled = k4.with_triangles(k4.three_cliques()).unwrap();
        let d1 = filled.boundary_1();
        let d2 = filled.boundary_2().unwrap();
        assert!(d1.compose(&d2).unwrap().iter().flatten().all(|&x| x == 0));
    }
}
