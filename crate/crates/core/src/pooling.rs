//! Topological graph pooling.
//!
//! One pooling level matches neighboring k-simplices with a greedy Graclus
//! pass, merges each matched pair into the higher-degree member, rebuilds
//! the boundary operators from the surviving simplices and recomputes the
//! Hodge-Laplacians. Signals are pooled over a binary tree whose leaves are
//! the fine simplices, padded with fake leaves so every parent has two
//! children.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::complex::SimplicialComplex;
use crate::error::{Error, Result};
use crate::laplacian::{hodge_laplacian, HodgeLaplacian};
use crate::signal::SimplexSignal;

/// Weighted adjacency between k-simplices: nodes sharing an edge (k = 0)
/// or edges sharing a node (k = 1).
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexGraph {
    pub k: usize,
    /// Neighbor lists sorted by index, symmetric.
    pub adjacency: Vec<Vec<(usize, f64)>>,
}

impl SimplexGraph {
    /// Unit weight on every adjacency of the complex.
    pub fn unit(complex: &SimplicialComplex, k: usize) -> Result<Self> {
        let nbrs = complex.simplex_neighbors(k)?;
        Ok(SimplexGraph {
            k,
            adjacency: nbrs
                .into_iter()
                .map(|l| l.into_iter().map(|v| (v, 1.0)).collect())
                .collect(),
        })
    }

    /// Node adjacency weighted per edge, `weights[e]` for edge position `e`.
    pub fn with_edge_weights(complex: &SimplicialComplex, weights: &[f64]) -> Result<Self> {
        if weights.len() != complex.n_edges() {
            return Err(Error::shape(format!(
                "{} edge weights for {} edges",
                weights.len(),
                complex.n_edges()
            )));
        }
        let triples: Vec<_> = complex
            .edges()
            .iter()
            .zip(weights)
            .map(|(&[i, j], &w)| (i, j, w))
            .collect();
        SimplexGraph::from_weighted_pairs(0, complex.n_nodes(), &triples)
    }

    /// Arbitrary symmetric adjacency from `(u, v, w)` triples.
    pub fn from_weighted_pairs(k: usize, n: usize, pairs: &[(usize, usize, f64)]) -> Result<Self> {
        let mut adj: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
        for &(u, v, w) in pairs {
            if u >= n || v >= n || u == v {
                return Err(Error::InvalidParameter(format!("bad adjacency ({u},{v})")));
            }
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::InvalidParameter(format!("weight {w} on ({u},{v}) must be nonnegative")));
            }
            *adj[u].entry(v).or_insert(0.0) += w;
            *adj[v].entry(u).or_insert(0.0) += w;
        }
        Ok(SimplexGraph {
            k,
            adjacency: adj.into_iter().map(|m| m.into_iter().collect()).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    pub fn degree(&self, u: usize) -> f64 {
        self.adjacency[u].iter().map(|(_, w)| w).sum()
    }
}

/// Order in which the greedy matching visits simplices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum VisitOrder {
    #[default]
    Ascending,
    /// Seeded random permutation.
    Shuffled(u64),
}

/// Greedy Graclus matching. Each unmatched simplex `u` is paired with the
/// unmatched neighbor maximizing `w_uv (1/d_u + 1/d_v)`; ties go to the
/// lower index. Neighbors joined only by zero weight are not candidates.
/// Returns `(u, Some(v))` for pairs and `(u, None)` for singletons, in
/// visit order.
pub fn graclus_match(graph: &SimplexGraph, order: VisitOrder) -> Vec<(usize, Option<usize>)> {
    let n = graph.len();
    let degree: Vec<f64> = (0..n).map(|u| graph.degree(u)).collect();
    let mut visit: Vec<usize> = (0..n).collect();
    if let VisitOrder::Shuffled(seed) = order {
        visit.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    let mut matched = vec![false; n];
    let mut out = Vec::with_capacity(n / 2 + 1);
    for u in visit {
        if matched[u] {
            continue;
        }
        matched[u] = true;
        let mut best: Option<(usize, f64)> = None;
        for &(v, w) in &graph.adjacency[u] {
            if matched[v] || w <= 0.0 {
                continue;
            }
            let score = w * (1.0 / degree[u] + 1.0 / degree[v]);
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((v, score));
            }
        }
        match best {
            Some((v, _)) => {
                matched[v] = true;
                out.push((u, Some(v)));
            }
            None => out.push((u, None)),
        }
    }
    out
}

/// How the incidences of a node removed by a k = 0 merge are handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CoarsenMode {
    /// Move the removed node's edges onto the surviving node, dropping
    /// self-loops and duplicates.
    #[default]
    Reattach,
    /// Delete every edge of the removed node.
    Strict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PoolMode {
    #[default]
    Avg,
    Max,
}

/// One level of topological pooling.
#[derive(Debug, Clone)]
pub struct PoolingPlan {
    pub k: usize,
    pub fine_count: usize,
    /// `(kept, merged)` per coarse simplex, in coarse order.
    pub pairs: Vec<(usize, Option<usize>)>,
    /// Leaf positions occupied by fake simplices.
    pub fake_indices: Vec<usize>,
    /// Binary-tree leaves: leaves `2c` and `2c + 1` are the children of
    /// coarse simplex `c`; `None` marks a fake leaf.
    pub permutation: Vec<Option<usize>>,
    /// Coarse index of every fine simplex.
    pub cluster_of: Vec<usize>,
    pub coarse_complex: SimplicialComplex,
    /// `[L_0, L_1]` of the coarse complex.
    pub coarse_laplacians: Vec<HodgeLaplacian>,
    /// Adjacency weights for matching at the next level; adjacencies that
    /// only reach a fake leaf carry no weight.
    pub coarse_graph: SimplexGraph,
}

impl PoolingPlan {
    pub fn coarse_count(&self) -> usize {
        self.pairs.len()
    }

    pub fn singletons(&self) -> impl Iterator<Item = usize> + '_ {
        self.pairs.iter().filter(|p| p.1.is_none()).map(|p| p.0)
    }

    pub fn coarse_laplacian(&self, k: usize) -> Result<&HodgeLaplacian> {
        self.coarse_laplacians.get(k).ok_or(Error::UnsupportedDimension(k))
    }

    /// Debug export: pairs, singletons, fakes and the coarse complex.
    pub fn to_json(&self) -> serde_json::Value {
        let pairs: Vec<[usize; 2]> = self
            .pairs
            .iter()
            .filter_map(|&(a, b)| b.map(|b| [a, b]))
            .collect();
        let singletons: Vec<usize> = self.singletons().collect();
        serde_json::json!({
            "schema_version": crate::io::SCHEMA_VERSION,
            "k": self.k,
            "fine_count": self.fine_count,
            "pairs": pairs,
            "singletons": singletons,
            "fake_indices": self.fake_indices,
            "permutation": self.permutation,
            "coarse_complex": self.coarse_complex.to_file(),
        })
    }
}

/// Merges matched k-simplices. In every pair the simplex with the lower
/// weighted degree in `graph` is removed (equal degree: the higher index),
/// together with its incident (k+1)-simplices.
pub fn coarsen(
    complex: &SimplicialComplex,
    graph: &SimplexGraph,
    matching: &[(usize, Option<usize>)],
    mode: CoarsenMode,
) -> Result<PoolingPlan> {
    let k = graph.k;
    let n = complex.count(k)?;
    if graph.len() != n {
        return Err(Error::Plan(format!(
            "adjacency has {} entries, complex has {n} {k}-simplices",
            graph.len()
        )));
    }

    let mut seen = vec![false; n];
    let mut mark = |s: usize| -> Result<()> {
        if s >= n {
            return Err(Error::Plan(format!("simplex {s} does not exist (count {n})")));
        }
        if std::mem::replace(&mut seen[s], true) {
            return Err(Error::Plan(format!("simplex {s} appears twice in the matching")));
        }
        Ok(())
    };
    let mut merges: Vec<(usize, Option<usize>)> = Vec::with_capacity(matching.len());
    for &(a, b) in matching {
        mark(a)?;
        match b {
            None => merges.push((a, None)),
            Some(b) => {
                mark(b)?;
                let (da, db) = (graph.degree(a), graph.degree(b));
                let a_removed = da < db || (da == db && a > b);
                merges.push(if a_removed { (b, Some(a)) } else { (a, Some(b)) });
            }
        }
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::Plan(format!("simplex {missing} is not covered by the matching")));
    }

    merges.sort_by_key(|m| m.0);
    let mut cluster_of = vec![0usize; n];
    let mut removed = vec![false; n];
    for (c, &(kept, merged)) in merges.iter().enumerate() {
        cluster_of[kept] = c;
        if let Some(m) = merged {
            cluster_of[m] = c;
            removed[m] = true;
        }
    }

    let coarse_complex = match k {
        0 => coarsen_nodes(complex, &merges, &cluster_of, &removed, mode)?,
        1 => coarsen_edges(complex, &removed)?,
        _ => return Err(Error::UnsupportedDimension(k)),
    };

    let mut permutation = Vec::with_capacity(2 * merges.len());
    let mut fake_indices = Vec::new();
    for &(kept, merged) in &merges {
        permutation.push(Some(kept));
        if merged.is_none() {
            fake_indices.push(permutation.len());
        }
        permutation.push(merged);
    }

    let coarse_graph = inherit_weights(graph, &cluster_of, &coarse_complex)?;
    let coarse_laplacians = vec![
        hodge_laplacian(&coarse_complex, 0)?,
        hodge_laplacian(&coarse_complex, 1)?,
    ];

    Ok(PoolingPlan {
        k,
        fine_count: n,
        pairs: merges,
        fake_indices,
        permutation,
        cluster_of,
        coarse_complex,
        coarse_laplacians,
        coarse_graph,
    })
}

fn coarsen_nodes(
    complex: &SimplicialComplex,
    merges: &[(usize, Option<usize>)],
    cluster_of: &[usize],
    removed: &[bool],
    mode: CoarsenMode,
) -> Result<SimplicialComplex> {
    // Coarse node c is the kept node of merges[c]; merges is sorted by kept
    // index, so renumbering preserves node order.
    let mut edges: Vec<[usize; 2]> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for &[i, j] in complex.edges() {
        if mode == CoarsenMode::Strict && (removed[i] || removed[j]) {
            continue;
        }
        let (a, b) = (cluster_of[i], cluster_of[j]);
        if a == b {
            continue;
        }
        let e = [a.min(b), a.max(b)];
        if seen.insert(e) {
            edges.push(e);
        }
    }
    edges.sort_unstable();
    let triangles: Vec<[usize; 3]> = complex
        .triangles()
        .iter()
        .filter(|t| t.iter().all(|&v| !removed[v]))
        .map(|t| [cluster_of[t[0]], cluster_of[t[1]], cluster_of[t[2]]])
        .collect();
    SimplicialComplex::new(merges.len(), edges, triangles)
}

fn coarsen_edges(complex: &SimplicialComplex, removed: &[bool]) -> Result<SimplicialComplex> {
    let edges: Vec<[usize; 2]> = complex
        .edges()
        .iter()
        .zip(removed)
        .filter(|(_, r)| !**r)
        .map(|(e, _)| *e)
        .collect();
    let triangles: Vec<[usize; 3]> = complex
        .triangles()
        .iter()
        .filter(|&&[i, j, k]| {
            [(i, j), (i, k), (j, k)]
                .iter()
                .all(|&(a, b)| complex.edge_position(a, b).is_some_and(|e| !removed[e]))
        })
        .copied()
        .collect();
    SimplicialComplex::new(complex.n_nodes(), edges, triangles)
}

fn inherit_weights(
    graph: &SimplexGraph,
    cluster_of: &[usize],
    coarse: &SimplicialComplex,
) -> Result<SimplexGraph> {
    let mut acc: HashMap<(usize, usize), f64> = HashMap::new();
    for (u, list) in graph.adjacency.iter().enumerate() {
        for &(v, w) in list {
            let (a, b) = (cluster_of[u], cluster_of[v]);
            if a != b {
                *acc.entry((a, b)).or_insert(0.0) += w;
            }
        }
    }
    let nbrs = coarse.simplex_neighbors(graph.k)?;
    Ok(SimplexGraph {
        k: graph.k,
        adjacency: nbrs
            .iter()
            .enumerate()
            .map(|(a, l)| {
                l.iter()
                    .map(|&b| (b, acc.get(&(a, b)).copied().unwrap_or(0.0)))
                    .collect()
            })
            .collect(),
    })
}

/// Settings for building pooling plans.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct PoolOptions {
    #[serde(default)]
    pub order: VisitOrder,
    #[serde(default)]
    pub mode: CoarsenMode,
}

/// Matching followed by coarsening.
pub fn tgpool(complex: &SimplicialComplex, graph: &SimplexGraph, opts: PoolOptions) -> Result<PoolingPlan> {
    let matching = graclus_match(graph, opts.order);
    coarsen(complex, graph, &matching, opts.mode)
}

/// `levels` successive plans starting from unit adjacency weights.
pub fn build_hierarchy(
    complex: &SimplicialComplex,
    k: usize,
    levels: usize,
    opts: PoolOptions,
) -> Result<Vec<PoolingPlan>> {
    let mut plans: Vec<PoolingPlan> = Vec::with_capacity(levels);
    let mut current = complex.clone();
    let mut graph = SimplexGraph::unit(complex, k)?;
    for _ in 0..levels {
        let plan = tgpool(&current, &graph, opts)?;
        current = plan.coarse_complex.clone();
        graph = plan.coarse_graph.clone();
        plans.push(plan);
    }
    Ok(plans)
}

/// Which fine simplex supplied each max-pooled value.
#[derive(Debug, Clone, Default)]
pub struct PoolCache {
    pub argmax: Vec<usize>,
}

/// Reduces each pair of children to its coarse simplex. Fake children are
/// skipped, so singletons pass through unchanged in both modes.
pub fn pool_signal(plan: &PoolingPlan, f: &SimplexSignal, mode: PoolMode) -> Result<SimplexSignal> {
    pool_signal_cached(plan, f, mode).map(|(s, _)| s)
}

pub fn pool_signal_cached(
    plan: &PoolingPlan,
    f: &SimplexSignal,
    mode: PoolMode,
) -> Result<(SimplexSignal, PoolCache)> {
    if f.dim() != plan.fine_count {
        return Err(Error::shape(format!(
            "signal dim {} does not match fine simplex count {}",
            f.dim(),
            plan.fine_count
        )));
    }
    let ch = f.channels();
    let mut out = SimplexSignal::zeros(plan.coarse_count(), ch);
    let mut cache = PoolCache::default();
    if mode == PoolMode::Max {
        cache.argmax = vec![0; plan.coarse_count() * ch];
    }
    for (c, &(kept, merged)) in plan.pairs.iter().enumerate() {
        for j in 0..ch {
            let a = f.get(kept, j);
            let v = match (merged, mode) {
                (None, PoolMode::Avg) => a,
                (Some(m), PoolMode::Avg) => 0.5 * (a + f.get(m, j)),
                (None, PoolMode::Max) => {
                    cache.argmax[c * ch + j] = kept;
                    a
                }
                (Some(m), PoolMode::Max) => {
                    let b = f.get(m, j);
                    let (src, v) = if b > a { (m, b) } else { (kept, a) };
                    cache.argmax[c * ch + j] = src;
                    v
                }
            };
            out.set(c, j, v);
        }
    }
    Ok((out, cache))
}

/// Routes a coarse gradient back to the fine simplices.
pub fn pool_backward(
    plan: &PoolingPlan,
    grad: &SimplexSignal,
    mode: PoolMode,
    cache: &PoolCache,
) -> Result<SimplexSignal> {
    if grad.dim() != plan.coarse_count() {
        return Err(Error::shape("pooled gradient does not match coarse count"));
    }
    let ch = grad.channels();
    let mut out = SimplexSignal::zeros(plan.fine_count, ch);
    for (c, &(kept, merged)) in plan.pairs.iter().enumerate() {
        for j in 0..ch {
            let g = grad.get(c, j);
            match (merged, mode) {
                (None, _) => out.set(kept, j, g),
                (Some(m), PoolMode::Avg) => {
                    out.set(kept, j, 0.5 * g);
                    out.set(m, j, 0.5 * g);
                }
                (Some(_), PoolMode::Max) => out.set(cache.argmax[c * ch + j], j, g),
            }
        }
    }
    Ok(out)
}
