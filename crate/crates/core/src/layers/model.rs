use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    dropout, dropout_backward, global_average_time, global_average_time_backward, leaky_relu,
    leaky_relu_backward, max_pool_time, max_pool_time_backward, DenseCache, DenseLayer, HLConvCache,
    HLConvLayer, Series, TemporalConvLayer, LEAKY_SLOPE,
};
use crate::complex::SimplicialComplex;
use crate::error::{Error, Result};
use crate::laplacian::{hodge_laplacian, HodgeLaplacian};
use crate::pooling::{
    build_hierarchy, pool_backward, pool_signal_cached, CoarsenMode, PoolCache, PoolMode, PoolOptions,
    PoolingPlan, VisitOrder,
};
use crate::signal::SimplexSignal;

/// Power-iteration steps used when the spectral scale is estimated.
const SCALE_STEPS: usize = 50;

const CHECKPOINT_FORMAT: &str = "hodgeconv-model";

/// Which input branches feed the head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Branches {
    #[default]
    Both,
    NodeOnly,
    EdgeOnly,
}

impl Branches {
    pub fn has_node(self) -> bool {
        self != Branches::EdgeOnly
    }

    pub fn has_edge(self) -> bool {
        self != Branches::NodeOnly
    }
}

/// Divisor applied to the Laplacian inside every filter bank.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SpectralScale {
    /// Estimated largest eigenvalue of the Laplacian at each level.
    #[default]
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ThetaInit {
    /// Glorot-uniform constant term, `±0.01` higher terms.
    #[default]
    Glorot,
    /// `θ_0 = 1`, higher terms zero, all perturbed by `±0.01`.
    NearIdentity,
}

/// Architecture hyperparameters. Every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub branches: Branches,
    pub temporal_channels: Vec<usize>,
    pub temporal_kernels: Vec<usize>,
    pub node_channels: Vec<usize>,
    pub node_order: usize,
    pub edge_channels: Vec<usize>,
    pub edge_order: usize,
    pub head_hidden: Vec<usize>,
    pub dropout: f64,
    /// Also apply dropout after convolution layers, not only in the head.
    pub dropout_conv: bool,
    pub leaky_slope: f64,
    pub node_pooling: bool,
    pub edge_pooling: bool,
    pub pool_mode: PoolMode,
    pub coarsen_mode: CoarsenMode,
    pub spectral_scale: SpectralScale,
    pub theta_init: ThetaInit,
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            branches: Branches::Both,
            temporal_channels: vec![8, 8],
            temporal_kernels: vec![5, 3],
            node_channels: vec![16, 1],
            node_order: 3,
            edge_channels: vec![32, 32],
            edge_order: 4,
            head_hidden: vec![256, 128],
            dropout: 0.5,
            dropout_conv: true,
            leaky_slope: LEAKY_SLOPE,
            node_pooling: true,
            edge_pooling: true,
            pool_mode: PoolMode::Avg,
            coarsen_mode: CoarsenMode::Reattach,
            spectral_scale: SpectralScale::Auto,
            theta_init: ThetaInit::Glorot,
            init_seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.temporal_channels.len() != self.temporal_kernels.len() {
            return bad("temporal_channels and temporal_kernels must have equal length");
        }
        if self
            .temporal_channels
            .iter()
            .chain(&self.temporal_kernels)
            .chain(&self.node_channels)
            .chain(&self.edge_channels)
            .chain(&self.head_hidden)
            .any(|&c| c == 0)
        {
            return bad("channel counts, kernel sizes and hidden sizes must be at least 1");
        }
        if self.node_order == 0 || self.edge_order == 0 {
            return bad("Laguerre orders must be at least 1");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout rate must lie in [0, 1)");
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return bad("leaky slope must lie in (0, 1)");
        }
        if let SpectralScale::Fixed(s) = self.spectral_scale {
            if !(s.is_finite() && s > 0.0) {
                return bad("fixed spectral scale must be positive");
            }
        }
        Ok(())
    }

    fn conv_dropout(&self) -> f64 {
        if self.dropout_conv {
            self.dropout
        } else {
            0.0
        }
    }
}

/// One sample: a single-channel series per node (node-major, `time_len`
/// steps each) and one scalar per atlas edge.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleInput {
    pub node_series: Vec<f64>,
    pub time_len: usize,
    pub edge_features: Vec<f64>,
}

/// Laplacians per level and the plans between them for one branch.
#[derive(Debug, Clone)]
struct BranchTopology {
    laplacians: Vec<HodgeLaplacian>,
    plans: Vec<Option<PoolingPlan>>,
}

impl BranchTopology {
    fn build(atlas: &SimplicialComplex, k: usize, layers: usize, pooling: bool, mode: CoarsenMode) -> Result<Self> {
        let base = hodge_laplacian(atlas, k)?;
        if !pooling || layers == 0 {
            return Ok(Self { laplacians: vec![base; layers + 1], plans: vec![None; layers] });
        }
        let opts = PoolOptions { order: VisitOrder::Ascending, mode };
        let plans = build_hierarchy(atlas, k, layers, opts)?;
        let mut laplacians = vec![base];
        for p in &plans {
            laplacians.push(p.coarse_laplacian(k)?.clone());
        }
        Ok(Self { laplacians, plans: plans.into_iter().map(Some).collect() })
    }

    fn output_dim(&self) -> usize {
        self.laplacians.last().map_or(0, |l| l.dim())
    }
}

fn resolve_scale(scale: SpectralScale, l: &HodgeLaplacian) -> f64 {
    match scale {
        SpectralScale::Fixed(s) => s,
        SpectralScale::Auto => {
            let s = l.lambda_max_estimate(SCALE_STEPS);
            if s > 1e-12 {
                s
            } else {
                1.0
            }
        }
    }
}

#[derive(Debug, Clone)]
struct TemporalStep {
    input: Series,
    pre: Series,
    mask: Option<Vec<f64>>,
    pool_arg: Vec<usize>,
}

#[derive(Debug, Clone)]
struct ConvStep {
    cache: HLConvCache,
    mask: Option<Vec<f64>>,
    pool: Option<PoolCache>,
}

#[derive(Debug, Clone)]
struct BranchTape {
    layers: Vec<ConvStep>,
    readout: ConvStep,
}

#[derive(Debug, Clone)]
struct NodeTape {
    temporal: Vec<TemporalStep>,
    /// `(time, channels)` of the series entering the time average.
    bridge: (usize, usize),
    input_time: usize,
    branch: BranchTape,
}

#[derive(Debug, Clone)]
struct HeadStep {
    cache: DenseCache,
    pre: Vec<f64>,
    mask: Option<Vec<f64>>,
}

/// Activations recorded by [`Model::forward`] for the reverse pass.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    recorded: bool,
    node: Option<NodeTape>,
    edge: Option<BranchTape>,
    head: Vec<HeadStep>,
    split: usize,
    pub prediction: f64,
}

/// Gradients aligned with [`Model::parameters`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads(pub Vec<Vec<f64>>);

impl ModelGrads {
    pub fn zeros_like(model: &Model) -> Self {
        ModelGrads(model.parameters().iter().map(|p| vec![0.0; p.len()]).collect())
    }

    pub fn add_scaled(&mut self, other: &ModelGrads, scale: f64) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.0.iter_mut().flatten().for_each(|x| *x *= s);
    }

    pub fn flat(&self) -> Vec<f64> {
        self.0.concat()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|x| x.is_finite())
    }
}

/// Result of [`Model::backward`]: parameter gradients plus input gradients.
#[derive(Debug, Clone)]
pub struct Backward {
    pub grads: ModelGrads,
    /// Node-major `n_nodes x time_len`; zeros when the node branch is off.
    pub node_series: Vec<f64>,
    /// One entry per atlas edge; zeros when the edge branch is off.
    pub edge_features: Vec<f64>,
}

/// Serialized model: architecture plus every parameter tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema_version: u32,
    pub format: String,
    pub config: ModelConfig,
    pub n_nodes: usize,
    pub n_edges: usize,
    pub temporal: Vec<TemporalConvLayer>,
    pub node_layers: Vec<HLConvLayer>,
    pub node_readout: Option<HLConvLayer>,
    pub edge_layers: Vec<HLConvLayer>,
    pub edge_readout: Option<HLConvLayer>,
    pub head: Vec<DenseLayer>,
}

impl Checkpoint {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let ckpt: Checkpoint = serde_json::from_str(&text)?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(Error::InputFormat(format!("not a model checkpoint (format {:?})", ckpt.format)));
        }
        if ckpt.schema_version != crate::io::SCHEMA_VERSION {
            return Err(Error::InputFormat(format!(
                "unsupported checkpoint schema version {}",
                ckpt.schema_version
            )));
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_json(path, self)
    }
}

/// Temporal branch, HL-node and HL-edge branches, and the dense head,
/// bound to the topology of one atlas.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub n_nodes: usize,
    pub n_edges: usize,
    pub temporal: Vec<TemporalConvLayer>,
    pub node_layers: Vec<HLConvLayer>,
    pub node_readout: Option<HLConvLayer>,
    pub edge_layers: Vec<HLConvLayer>,
    pub edge_readout: Option<HLConvLayer>,
    pub head: Vec<DenseLayer>,
    node_topo: Option<BranchTopology>,
    edge_topo: Option<BranchTopology>,
}

/// Builds a conv stack over the given levels. Returns the layers and readout.
fn conv_stack(
    config: &ModelConfig,
    k: usize,
    in_channels: usize,
    channels: &[usize],
    order: usize,
    topo: &BranchTopology,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<HLConvLayer>, HLConvLayer)> {
    let mut make = |level: usize, i: usize, o: usize| -> Result<HLConvLayer> {
        let scale = resolve_scale(config.spectral_scale, &topo.laplacians[level]);
        let mut layer = HLConvLayer::zeros(k, order, i, o, scale)?;
        layer.slope = config.leaky_slope;
        match config.theta_init {
            ThetaInit::Glorot => layer.init_glorot(rng),
            ThetaInit::NearIdentity => layer.init_near_identity(rng),
        }
        Ok(layer)
    };
    let mut layers = Vec::with_capacity(channels.len());
    let mut c_in = in_channels;
    for (level, &c) in channels.iter().enumerate() {
        layers.push(make(level, c_in, c)?);
        c_in = c;
    }
    let readout = make(channels.len(), c_in, 1)?;
    Ok((layers, readout))
}

impl Model {
    /// Randomly initialized model for `atlas`, seeded by `config.init_seed`.
    pub fn new(config: ModelConfig, atlas: &SimplicialComplex) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let b = config.branches;
        let node_topo = if b.has_node() {
            Some(BranchTopology::build(
                atlas,
                0,
                config.node_channels.len(),
                config.node_pooling,
                config.coarsen_mode,
            )?)
        } else {
            None
        };
        let edge_topo = if b.has_edge() {
            Some(BranchTopology::build(
                atlas,
                1,
                config.edge_channels.len(),
                config.edge_pooling,
                config.coarsen_mode,
            )?)
        } else {
            None
        };

        let mut temporal = Vec::new();
        let (mut node_layers, mut node_readout) = (Vec::new(), None);
        if let Some(topo) = &node_topo {
            let mut c_in = 1;
            for (&c, &kernel) in config.temporal_channels.iter().zip(&config.temporal_kernels) {
                temporal.push(TemporalConvLayer::init(kernel, c_in, c, &mut rng)?);
                c_in = c;
            }
            let (layers, readout) =
                conv_stack(&config, 0, c_in, &config.node_channels, config.node_order, topo, &mut rng)?;
            node_layers = layers;
            node_readout = Some(readout);
        }
        let (mut edge_layers, mut edge_readout) = (Vec::new(), None);
        if let Some(topo) = &edge_topo {
            let (layers, readout) =
                conv_stack(&config, 1, 1, &config.edge_channels, config.edge_order, topo, &mut rng)?;
            edge_layers = layers;
            edge_readout = Some(readout);
        }

        let mut width = node_topo.as_ref().map_or(0, |t| t.output_dim())
            + edge_topo.as_ref().map_or(0, |t| t.output_dim());
        if width == 0 {
            return Err(Error::InvalidParameter("model has no inputs for the dense head".into()));
        }
        let mut head = Vec::new();
        for &h in &config.head_hidden {
            head.push(DenseLayer::init(width, h, &mut rng));
            width = h;
        }
        head.push(DenseLayer::init(width, 1, &mut rng));

        Ok(Self {
            config,
            n_nodes: atlas.n_nodes(),
            n_edges: atlas.n_edges(),
            temporal,
            node_layers,
            node_readout,
            edge_layers,
            edge_readout,
            head,
            node_topo,
            edge_topo,
        })
    }

    pub fn from_checkpoint(ckpt: Checkpoint, atlas: &SimplicialComplex) -> Result<Self> {
        if ckpt.n_nodes != atlas.n_nodes() || ckpt.n_edges != atlas.n_edges() {
            return Err(Error::shape(format!(
                "checkpoint expects {} nodes and {} edges, atlas has {} and {}",
                ckpt.n_nodes,
                ckpt.n_edges,
                atlas.n_nodes(),
                atlas.n_edges()
            )));
        }
        let mut model = Model::new(ckpt.config.clone(), atlas)?;
        let hl_shape = |l: &HLConvLayer| (l.k, l.bank.order, l.bank.in_channels, l.bank.out_channels);
        let same_hl = |a: &[HLConvLayer], b: &[HLConvLayer]| {
            a.len() == b.len() && a.iter().zip(b).all(|(x, y)| hl_shape(x) == hl_shape(y))
        };
        let opt = |o: &Option<HLConvLayer>| o.iter().cloned().collect::<Vec<_>>();
        let ok = ckpt.temporal.len() == model.temporal.len()
            && ckpt.temporal.iter().zip(&model.temporal).all(|(a, b)| {
                (a.kernel_size, a.in_channels, a.out_channels) == (b.kernel_size, b.in_channels, b.out_channels)
            })
            && same_hl(&ckpt.node_layers, &model.node_layers)
            && same_hl(&opt(&ckpt.node_readout), &opt(&model.node_readout))
            && same_hl(&ckpt.edge_layers, &model.edge_layers)
            && same_hl(&opt(&ckpt.edge_readout), &opt(&model.edge_readout))
            && ckpt.head.len() == model.head.len()
            && ckpt.head.iter().zip(&model.head).all(|(a, b)| (a.in_dim, a.out_dim) == (b.in_dim, b.out_dim));
        if !ok {
            return Err(Error::shape("checkpoint layers do not match the architecture of its config"));
        }
        for l in &ckpt.temporal {
            l.validate()?;
        }
        for l in ckpt.node_layers.iter().chain(&ckpt.edge_layers).chain(&ckpt.node_readout).chain(&ckpt.edge_readout) {
            l.validate()?;
        }
        for l in &ckpt.head {
            l.validate()?;
        }
        model.temporal = ckpt.temporal;
        model.node_layers = ckpt.node_layers;
        model.node_readout = ckpt.node_readout;
        model.edge_layers = ckpt.edge_layers;
        model.edge_readout = ckpt.edge_readout;
        model.head = ckpt.head;
        Ok(model)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            schema_version: crate::io::SCHEMA_VERSION,
            format: CHECKPOINT_FORMAT.to_string(),
            config: self.config.clone(),
            n_nodes: self.n_nodes,
            n_edges: self.n_edges,
            temporal: self.temporal.clone(),
            node_layers: self.node_layers.clone(),
            node_readout: self.node_readout.clone(),
            edge_layers: self.edge_layers.clone(),
            edge_readout: self.edge_readout.clone(),
            head: self.head.clone(),
        }
    }

    /// Pooling plans of the node (`k = 0`) or edge (`k = 1`) branch.
    pub fn pooling_plans(&self, k: usize) -> Vec<&PoolingPlan> {
        let topo = if k == 0 { &self.node_topo } else { &self.edge_topo };
        topo.iter().flat_map(|t| t.plans.iter().flatten()).collect()
    }

    /// Every parameter tensor in a fixed order: temporal, node layers, node
    /// readout, edge layers, edge readout, head; weights before biases.
    pub fn parameters(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for l in &self.temporal {
            out.push(&l.weights);
            out.push(&l.bias);
        }
        for l in self.node_layers.iter().chain(&self.node_readout).chain(&self.edge_layers).chain(&self.edge_readout) {
            out.push(&l.bank.theta);
            out.push(&l.bias);
        }
        for l in &self.head {
            out.push(&l.weights);
            out.push(&l.bias);
        }
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for l in &mut self.temporal {
            out.push(&mut l.weights);
            out.push(&mut l.bias);
        }
        for l in self
            .node_layers
            .iter_mut()
            .chain(&mut self.node_readout)
            .chain(&mut self.edge_layers)
            .chain(&mut self.edge_readout)
        {
            out.push(&mut l.bank.theta);
            out.push(&mut l.bias);
        }
        for l in &mut self.head {
            out.push(&mut l.weights);
            out.push(&mut l.bias);
        }
        out
    }

    pub fn parameter_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut pair = |name: String, a: &str, b: &str| {
            out.push(format!("{name}.{a}"));
            out.push(format!("{name}.{b}"));
        };
        for i in 0..self.temporal.len() {
            pair(format!("temporal{i}"), "weights", "bias");
        }
        for i in 0..self.node_layers.len() {
            pair(format!("node{i}"), "theta", "bias");
        }
        if self.node_readout.is_some() {
            pair("node_readout".into(), "theta", "bias");
        }
        for i in 0..self.edge_layers.len() {
            pair(format!("edge{i}"), "theta", "bias");
        }
        if self.edge_readout.is_some() {
            pair("edge_readout".into(), "theta", "bias");
        }
        for i in 0..self.head.len() {
            pair(format!("head{i}"), "weights", "bias");
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|p| p.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.parameters().iter().all(|p| p.iter().all(|x| x.is_finite()))
    }

    /// Eval-mode prediction.
    pub fn predict(&self, input: &SampleInput) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        self.forward(input, &mut rng, false).map(|(y, _)| y)
    }

    fn check_input(&self, input: &SampleInput) -> Result<()> {
        if self.config.branches.has_node() {
            if input.node_series.len() != self.n_nodes * input.time_len {
                return Err(Error::shape(format!(
                    "node series has {} values, expected {} nodes x {} steps",
                    input.node_series.len(),
                    self.n_nodes,
                    input.time_len
                )));
            }
            let min_len = 1usize << self.temporal.len();
            if input.time_len < min_len {
                return Err(Error::shape(format!(
                    "series length {} is too short for {} temporal pooling layers",
                    input.time_len,
                    self.temporal.len()
                )));
            }
        }
        if self.config.branches.has_edge() && input.edge_features.len() != self.n_edges {
            return Err(Error::shape(format!(
                "edge features have {} values, atlas has {} edges",
                input.edge_features.len(),
                self.n_edges
            )));
        }
        Ok(())
    }

    /// Runs the model and records the tape. Dropout draws from `rng` only
    /// when `train` is set.
    pub fn forward<R: Rng + ?Sized>(&self, input: &SampleInput, rng: &mut R, train: bool) -> Result<(f64, Tape)> {
        self.check_input(input)?;
        let conv_rate = self.config.conv_dropout();
        let slope = self.config.leaky_slope;
        let mut tape = Tape { recorded: true, ..Tape::default() };
        let mut features = Vec::new();

        if let (Some(topo), Some(readout)) = (&self.node_topo, &self.node_readout) {
            let mut x = Series::from_vec(self.n_nodes, input.time_len, 1, input.node_series.clone())?;
            let mut steps = Vec::with_capacity(self.temporal.len());
            for layer in &self.temporal {
                let pre = layer.forward(&x)?;
                let act = leaky_relu(&pre.data, slope);
                let (dropped, mask) = dropout(&act, conv_rate, rng, train);
                let act = Series::from_vec(pre.nodes, pre.time, pre.channels, dropped)?;
                let (pooled, pool_arg) = max_pool_time(&act)?;
                steps.push(TemporalStep { input: x, pre, mask, pool_arg });
                x = pooled;
            }
            let bridge = (x.time, x.channels);
            let signal = SimplexSignal::from_vec(self.n_nodes, x.channels, global_average_time(&x))?;
            let (out, branch) = self.branch_forward(&self.node_layers, readout, topo, signal, rng, train)?;
            features.extend_from_slice(out.values());
            tape.node = Some(NodeTape { temporal: steps, bridge, input_time: input.time_len, branch });
        }
        tape.split = features.len();
        if let (Some(topo), Some(readout)) = (&self.edge_topo, &self.edge_readout) {
            let signal = SimplexSignal::column(input.edge_features.clone());
            let (out, branch) = self.branch_forward(&self.edge_layers, readout, topo, signal, rng, train)?;
            features.extend_from_slice(out.values());
            tape.edge = Some(branch);
        }

        let mut x = features;
        let last = self.head.len() - 1;
        for (i, layer) in self.head.iter().enumerate() {
            let (pre, cache) = layer.forward(&x)?;
            if i == last {
                tape.head.push(HeadStep { cache, pre: pre.clone(), mask: None });
                x = pre;
            } else {
                let (out, mask) = dropout(&leaky_relu(&pre, slope), self.config.dropout, rng, train);
                tape.head.push(HeadStep { cache, pre, mask });
                x = out;
            }
        }
        tape.prediction = x[0];
        Ok((x[0], tape))
    }

    fn branch_forward<R: Rng + ?Sized>(
        &self,
        layers: &[HLConvLayer],
        readout: &HLConvLayer,
        topo: &BranchTopology,
        mut x: SimplexSignal,
        rng: &mut R,
        train: bool,
    ) -> Result<(SimplexSignal, BranchTape)> {
        let rate = self.config.conv_dropout();
        let mut steps = Vec::with_capacity(layers.len());
        for (level, layer) in layers.iter().enumerate() {
            let (act, cache) = layer.forward(&topo.laplacians[level], &x)?;
            let (dropped, mask) = dropout(act.values(), rate, rng, train);
            let act = SimplexSignal::from_vec(act.dim(), act.channels(), dropped)?;
            let (next, pool) = match &topo.plans[level] {
                Some(plan) => {
                    let (p, c) = pool_signal_cached(plan, &act, self.config.pool_mode)?;
                    (p, Some(c))
                }
                None => (act, None),
            };
            steps.push(ConvStep { cache, mask, pool });
            x = next;
        }
        let level = layers.len();
        let (act, cache) = readout.forward(&topo.laplacians[level], &x)?;
        let (dropped, mask) = dropout(act.values(), rate, rng, train);
        let out = SimplexSignal::from_vec(act.dim(), 1, dropped)?;
        Ok((out, BranchTape { layers: steps, readout: ConvStep { cache, mask, pool: None } }))
    }

    /// Gradients of `upstream · prediction` with respect to every parameter
    /// and both inputs.
    pub fn backward(&self, tape: &Tape, upstream: f64) -> Result<Backward> {
        if !tape.recorded {
            return Err(Error::Tape("backward called before forward".into()));
        }
        if tape.node.is_some() != self.node_topo.is_some()
            || tape.edge.is_some() != self.edge_topo.is_some()
            || tape.head.len() != self.head.len()
        {
            return Err(Error::Tape("tape was recorded by a different architecture".into()));
        }
        let mut grads = ModelGrads::zeros_like(self);
        let slope = self.config.leaky_slope;
        let n_temporal = self.temporal.len();
        let n_node_conv = self.node_layers.len() + usize::from(self.node_readout.is_some());
        let node_slot = 2 * n_temporal;
        let edge_slot = node_slot + 2 * n_node_conv;
        let head_slot = edge_slot + 2 * (self.edge_layers.len() + usize::from(self.edge_readout.is_some()));

        let mut g = vec![upstream];
        let last = self.head.len() - 1;
        for (i, (layer, step)) in self.head.iter().zip(&tape.head).enumerate().rev() {
            if i != last {
                g = dropout_backward(&g, step.mask.as_deref());
                g = leaky_relu_backward(&step.pre, &g, slope);
            }
            let (dw, db, dx) = layer.backward(&step.cache, &g)?;
            grads.0[head_slot + 2 * i] = dw;
            grads.0[head_slot + 2 * i + 1] = db;
            g = dx;
        }

        let mut node_series = vec![0.0; tape.node.as_ref().map_or(0, |t| self.n_nodes * t.input_time)];
        if let (Some(nt), Some(topo), Some(readout)) = (&tape.node, &self.node_topo, &self.node_readout) {
            let up = SimplexSignal::column(g[..tape.split].to_vec());
            let dx = self.branch_backward(&self.node_layers, readout, topo, &nt.branch, up, &mut grads, node_slot)?;
            let (time, ch) = nt.bridge;
            let mut gs = global_average_time_backward(self.n_nodes, time, ch, dx.values());
            for (i, (layer, step)) in self.temporal.iter().zip(&nt.temporal).enumerate().rev() {
                let pooled = max_pool_time_backward(step.pre.time, &step.pool_arg, &gs);
                let d = dropout_backward(&pooled.data, step.mask.as_deref());
                let d = leaky_relu_backward(&step.pre.data, &d, slope);
                let d = Series::from_vec(step.pre.nodes, step.pre.time, step.pre.channels, d)?;
                let (dw, db, dx) = layer.backward(&step.input, &d)?;
                grads.0[2 * i] = dw;
                grads.0[2 * i + 1] = db;
                gs = dx;
            }
            node_series = gs.data;
        }

        let mut edge_features = vec![0.0; self.n_edges];
        if let (Some(bt), Some(topo), Some(readout)) = (&tape.edge, &self.edge_topo, &self.edge_readout) {
            let up = SimplexSignal::column(g[tape.split..].to_vec());
            let dx = self.branch_backward(&self.edge_layers, readout, topo, bt, up, &mut grads, edge_slot)?;
            edge_features = dx.into_values();
        }
        Ok(Backward { grads, node_series, edge_features })
    }

    #[allow(clippy::too_many_arguments)]
    fn branch_backward(
        &self,
        layers: &[HLConvLayer],
        readout: &HLConvLayer,
        topo: &BranchTopology,
        tape: &BranchTape,
        upstream: SimplexSignal,
        grads: &mut ModelGrads,
        slot: usize,
    ) -> Result<SimplexSignal> {
        let level = layers.len();
        let g = dropout_backward(upstream.values(), tape.readout.mask.as_deref());
        let g = SimplexSignal::from_vec(upstream.dim(), 1, g)?;
        let (dtheta, db, mut g) = readout.backward(&topo.laplacians[level], &tape.readout.cache, &g)?;
        grads.0[slot + 2 * level] = dtheta;
        grads.0[slot + 2 * level + 1] = db;
        for (i, (layer, step)) in layers.iter().zip(&tape.layers).enumerate().rev() {
            if let (Some(plan), Some(cache)) = (&topo.plans[i], &step.pool) {
                g = pool_backward(plan, &g, self.config.pool_mode, cache)?;
            }
            let d = dropout_backward(g.values(), step.mask.as_deref());
            let d = SimplexSignal::from_vec(g.dim(), g.channels(), d)?;
            let (dtheta, db, dx) = layer.backward(&topo.laplacians[i], &step.cache, &d)?;
            grads.0[slot + 2 * i] = dtheta;
            grads.0[slot + 2 * i + 1] = db;
            g = dx;
        }
        Ok(g)
    }
}
