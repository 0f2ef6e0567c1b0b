use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::complex::SimplicialComplex;
use crate::error::{Error, Result};
use crate::io::{fmt_f64, read_complex_json, write_complex_json, write_json, SCHEMA_VERSION};
use crate::layers::SampleInput;

/// Atlas plus per-sample inputs and targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub atlas: SimplicialComplex,
    pub samples: Vec<SampleInput>,
    pub targets: Vec<f64>,
    /// Ground truth when the data were generated synthetically.
    pub planted: Option<Planted>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    /// Weighted sum of the planted edges' features.
    #[default]
    Linear,
    /// Product of the first two planted edges' features.
    Product,
}

/// Parameters of [`generate_synthetic`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub n_samples: usize,
    pub n_nodes: usize,
    pub time_len: usize,
    pub density: f64,
    pub noise_sigma: f64,
    pub n_planted: usize,
    /// Explicit planted weights; overrides the random draw and `n_planted`.
    pub planted_weights: Option<Vec<f64>>,
    pub target: TargetKind,
    /// AR(1) coefficient of the node series.
    pub smoothing: f64,
    /// Standard deviation of the per-sample edge perturbation.
    pub edge_spread: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            n_samples: 200,
            n_nodes: 20,
            time_len: 32,
            density: 0.2,
            noise_sigma: 0.0,
            n_planted: 5,
            planted_weights: None,
            target: TargetKind::Linear,
            smoothing: 0.8,
            edge_spread: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedEdge {
    pub edge: usize,
    pub u: usize,
    pub v: usize,
    pub weight: f64,
}

/// Ground truth recorded alongside a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Planted {
    pub schema_version: u32,
    pub spec: SyntheticSpec,
    pub edges: Vec<PlantedEdge>,
}

impl Planted {
    pub fn edge_set(&self) -> Vec<usize> {
        let mut e: Vec<usize> = self.edges.iter().map(|p| p.edge).collect();
        e.sort_unstable();
        e
    }
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples.len() != self.targets.len() {
            return Err(Error::shape("sample and target counts differ"));
        }
        let (n, m) = (self.atlas.n_nodes(), self.atlas.n_edges());
        for (i, s) in self.samples.iter().enumerate() {
            if s.node_series.len() != n * s.time_len || s.edge_features.len() != m {
                return Err(Error::shape(format!("sample {i} does not match the atlas")));
            }
        }
        if let Some(t) = self.targets.iter().position(|t| !t.is_finite()) {
            return Err(Error::InputFormat(format!("target of sample {t} is not finite")));
        }
        Ok(())
    }

    /// Copy with samples reordered by `order`.
    pub fn permuted(&self, order: &[usize]) -> Dataset {
        Dataset {
            atlas: self.atlas.clone(),
            samples: order.iter().map(|&i| self.samples[i].clone()).collect(),
            targets: order.iter().map(|&i| self.targets[i]).collect(),
            planted: self.planted.clone(),
        }
    }

    /// Writes `atlas.json`, `samples.csv`, `series/<id>.csv`, `edges/<id>.csv`
    /// and, if present, `planted.json`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        self.validate()?;
        fs::create_dir_all(dir.join("series"))?;
        fs::create_dir_all(dir.join("edges"))?;
        write_complex_json(&dir.join("atlas.json"), &self.atlas)?;
        let mut index = String::from("sample_id,target\n");
        for (id, (s, t)) in self.samples.iter().zip(&self.targets).enumerate() {
            index.push_str(&format!("{id},{}\n", fmt_f64(*t)));

            let mut series = String::from("node");
            for t in 0..s.time_len {
                series.push_str(&format!(",t{t}"));
            }
            series.push('\n');
            for (node, row) in s.node_series.chunks(s.time_len.max(1)).enumerate() {
                series.push_str(&node.to_string());
                for v in row {
                    series.push(',');
                    series.push_str(&fmt_f64(*v));
                }
                series.push('\n');
            }
            fs::write(dir.join("series").join(format!("{id}.csv")), series)?;

            let mut edges = String::from("edge,u,v,value\n");
            for (e, (&[u, v], x)) in self.atlas.edges().iter().zip(&s.edge_features).enumerate() {
                edges.push_str(&format!("{e},{u},{v},{}\n", fmt_f64(*x)));
            }
            fs::write(dir.join("edges").join(format!("{id}.csv")), edges)?;
        }
        fs::write(dir.join("samples.csv"), index)?;
        if let Some(p) = &self.planted {
            write_json(&dir.join("planted.json"), p)?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Dataset> {
        let atlas = read_complex_json(&dir.join("atlas.json"))?;
        let index = fs::read_to_string(dir.join("samples.csv"))?;
        let mut samples = Vec::new();
        let mut targets = Vec::new();
        for (lineno, line) in index.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |what: &str| Error::InputFormat(format!("samples.csv line {}: {what}", lineno + 1));
            let (id, target) = line.split_once(',').ok_or_else(|| bad("expected sample_id,target"))?;
            let id = id.trim();
            if id.is_empty() || id.contains(['/', '\\']) || id.starts_with('.') {
                return Err(bad("invalid sample id"));
            }
            let target: f64 = target.trim().parse().map_err(|_| bad("target is not a number"))?;
            samples.push(read_sample(dir, id, &atlas)?);
            targets.push(target);
        }
        let planted_path = dir.join("planted.json");
        let planted = if planted_path.exists() {
            let text = fs::read_to_string(&planted_path)?;
            Some(serde_json::from_str(&text).map_err(|e| Error::InputFormat(format!("planted.json: {e}")))?)
        } else {
            None
        };
        let data = Dataset { atlas, samples, targets, planted };
        data.validate()?;
        Ok(data)
    }
}

fn numeric_rows(path: &Path, skip_cols: usize) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> =
            line.split(',').skip(skip_cols).map(|s| s.trim().parse::<f64>()).collect();
        rows.push(row.map_err(|e| Error::InputFormat(format!("{}:{}: {e}", path.display(), lineno + 1)))?);
    }
    Ok(rows)
}

fn read_sample(dir: &Path, id: &str, atlas: &SimplicialComplex) -> Result<SampleInput> {
    let series_path = dir.join("series").join(format!("{id}.csv"));
    let rows = numeric_rows(&series_path, 1)?;
    if rows.len() != atlas.n_nodes() {
        return Err(Error::InputFormat(format!(
            "{} has {} node rows, atlas has {} nodes",
            series_path.display(),
            rows.len(),
            atlas.n_nodes()
        )));
    }
    let time_len = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != time_len) {
        return Err(Error::InputFormat(format!("{} has ragged rows", series_path.display())));
    }
    let edge_path = dir.join("edges").join(format!("{id}.csv"));
    let erows = numeric_rows(&edge_path, 3)?;
    if erows.len() != atlas.n_edges() || erows.iter().any(|r| r.len() != 1) {
        return Err(Error::InputFormat(format!(
            "{} must have one value for each of the {} atlas edges",
            edge_path.display(),
            atlas.n_edges()
        )));
    }
    Ok(SampleInput {
        node_series: rows.concat(),
        time_len,
        edge_features: erows.into_iter().map(|r| r[0]).collect(),
    })
}

/// Random connected atlas: Erdős–Rényi edges plus a random spanning path.
pub fn random_atlas<R: Rng + ?Sized>(n_nodes: usize, density: f64, rng: &mut R) -> Result<SimplicialComplex> {
    let er = SimplicialComplex::erdos_renyi(n_nodes, density, rng);
    let mut edges: Vec<[usize; 2]> = er.edges().to_vec();
    let mut perm: Vec<usize> = (0..n_nodes).collect();
    perm.shuffle(rng);
    for w in perm.windows(2) {
        let (a, b) = (w[0].min(w[1]), w[0].max(w[1]));
        if er.edge_position(a, b).is_none() {
            edges.push([a, b]);
        }
    }
    edges.sort_unstable();
    SimplicialComplex::new(n_nodes, edges, [])
}

/// Synthetic regression data with a planted edge-level signal.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
    if !(spec.density > 0.0 && spec.density <= 1.0) {
        return bad("density must lie in (0, 1]");
    }
    if spec.n_nodes < 4 {
        return bad("at least 4 nodes are required");
    }
    if spec.time_len == 0 {
        return bad("time_len must be positive");
    }
    if !(spec.noise_sigma >= 0.0 && spec.noise_sigma.is_finite()) {
        return bad("noise_sigma must be a nonnegative number");
    }
    if !(0.0..1.0).contains(&spec.smoothing.abs()) || !(spec.edge_spread > 0.0) {
        return bad("smoothing must lie in (-1, 1) and edge_spread must be positive");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let atlas = random_atlas(spec.n_nodes, spec.density, &mut rng)?;
    let m = atlas.n_edges();

    let n_planted = spec.planted_weights.as_ref().map_or(spec.n_planted, |w| w.len());
    if n_planted > m {
        return bad("more planted edges than atlas edges");
    }
    if spec.target == TargetKind::Product && n_planted < 2 {
        return bad("the product target needs two planted edges");
    }
    let mut chosen: Vec<usize> = rand::seq::index::sample(&mut rng, m, n_planted).into_vec();
    chosen.sort_unstable();
    let weights: Vec<f64> = match &spec.planted_weights {
        Some(w) => w.clone(),
        None => chosen
            .iter()
            .map(|_| {
                let mag = rng.random_range(1.0..2.0);
                if rng.random::<bool>() {
                    mag
                } else {
                    -mag
                }
            })
            .collect(),
    };
    let planted_edges: Vec<PlantedEdge> = chosen
        .iter()
        .zip(&weights)
        .map(|(&e, &weight)| {
            let [u, v] = atlas.edges()[e];
            PlantedEdge { edge: e, u, v, weight }
        })
        .collect();

    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let base: Vec<f64> = (0..m).map(|_| 0.3 * std_normal.sample(&mut rng)).collect();
    let a = spec.smoothing;
    let innovation = (1.0 - a * a).sqrt();

    let mut samples = Vec::with_capacity(spec.n_samples);
    let mut targets = Vec::with_capacity(spec.n_samples);
    for _ in 0..spec.n_samples {
        let mut series = Vec::with_capacity(spec.n_nodes * spec.time_len);
        for _ in 0..spec.n_nodes {
            let mut x = std_normal.sample(&mut rng);
            series.push(x);
            for _ in 1..spec.time_len {
                x = a * x + innovation * std_normal.sample(&mut rng);
                series.push(x);
            }
        }
        let edges: Vec<f64> = base
            .iter()
            .map(|b| b + spec.edge_spread * std_normal.sample(&mut rng))
            .collect();
        let signal = match spec.target {
            TargetKind::Linear => planted_edges.iter().map(|p| p.weight * edges[p.edge]).sum::<f64>(),
            TargetKind::Product => edges[planted_edges[0].edge] * edges[planted_edges[1].edge],
        };
        let noise = if spec.noise_sigma > 0.0 { spec.noise_sigma * std_normal.sample(&mut rng) } else { 0.0 };
        targets.push(signal + noise);
        samples.push(SampleInput { node_series: series, time_len: spec.time_len, edge_features: edges });
    }

    Ok(Dataset {
        atlas,
        samples,
        targets,
        planted: Some(Planted { schema_version: SCHEMA_VERSION, spec: spec.clone(), edges: planted_edges }),
    })
}
