use serde::{Deserialize, Serialize};

use crate::backbones::{Backbone, Model, ModelConfig};
use crate::bert_fmt::{FormatKind, HeadKind, TokenVocab};
use crate::data::{synth, EmbeddingTable, Sample, Task, Vocab};
use crate::error::Result;
use crate::graph::{build_graph, GcnStack, Graph, GraphKind};
use crate::numcore::{check_params, FdScheme, Matrix, ParamCheck, ParamTensor, Rng};
use crate::rnn::{gru_backward, gru_forward, gru_step, CellKind, GruParams, RecurrentEncoder};
use crate::tiny_transformer::{TransformerConfig, TransformerModel};

/// Threshold for single cells and layers.
pub const CELL_TOLERANCE: f64 = 1e-5;
/// Threshold for composed models.
pub const MODEL_TOLERANCE: f64 = 1e-4;
/// Rectifier inputs closer to zero than this are re-drawn before checking.
pub const KINK_MARGIN: f64 = 0.02;

fn scheme() -> FdScheme {
    FdScheme::five_point(1e-3)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteEntry {
    pub component: String,
    pub seed: u64,
    pub param: String,
    pub max_rel_error: f64,
    pub threshold: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub entries: Vec<SuiteEntry>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        !self.entries.is_empty() && self.entries.iter().all(|e| e.passed)
    }

    pub fn failures(&self) -> Vec<&SuiteEntry> {
        self.entries.iter().filter(|e| !e.passed).collect()
    }

    pub fn max_rel_error(&self) -> f64 {
        self.entries.iter().map(|e| e.max_rel_error).fold(0.0, f64::max)
    }

    fn push(&mut self, component: &str, seed: u64, threshold: f64, checks: Vec<ParamCheck>) {
        for c in checks {
            self.entries.push(SuiteEntry {
                component: component.into(),
                seed,
                passed: c.max_rel_error < threshold,
                param: c.name,
                max_rel_error: c.max_rel_error,
                threshold,
            });
        }
    }
}

/// Seeds and an optional component-name prefix filter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteOptions {
    pub seeds: Vec<u64>,
    pub only: Option<String>,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self { seeds: vec![1, 2, 3], only: None }
    }
}

impl SuiteOptions {
    fn wants(&self, component: &str) -> bool {
        self.only.as_deref().is_none_or(|p| component.starts_with(p))
    }
}

fn spread(params: Vec<&mut ParamTensor>, rng: &mut Rng, scale: f64) {
    for p in params {
        for v in p.value.as_mut_slice() {
            *v = rng.uniform(-scale, scale);
        }
    }
}

fn random_matrix(rows: usize, cols: usize, rng: &mut Rng, scale: f64) -> Matrix {
    Matrix::new(rows, cols, (0..rows * cols).map(|_| rng.uniform(-scale, scale)).collect()).expect("finite draws")
}

/// Loss `Σ w⊙H + Σ H²` over an encoder's outputs.
struct SeqProblem {
    enc: RecurrentEncoder,
    xs: Matrix,
    aspect: Option<Vec<f64>>,
    w: Matrix,
}

impl SeqProblem {
    fn new(kind: CellKind, bi: bool, seed: u64) -> Self {
        let rng = Rng::new(seed);
        let mut enc = RecurrentEncoder::new(kind, bi, "enc", 2, 3, &rng);
        spread(enc.params_mut(), &mut rng.substream("spread"), 0.8);
        let mut data = rng.substream("data");
        let xs = random_matrix(4, 2, &mut data, 1.5);
        let aspect = (kind == CellKind::AspectAware).then(|| (0..3).map(|_| data.uniform(-1.0, 1.0)).collect());
        let w = random_matrix(4, enc.out_dim(), &mut data, 1.0);
        Self { enc, xs, aspect, w }
    }

    fn loss(&self) -> Result<f64> {
        let a = self.aspect.as_deref();
        let (out, _) = self.enc.forward(&self.xs, a, a)?;
        Ok(out.h.as_slice().iter().zip(self.w.as_slice()).map(|(h, w)| w * h + h * h).sum())
    }

    fn backward(&mut self) -> Result<f64> {
        for p in self.enc.params_mut() {
            p.zero_grad();
        }
        let a = self.aspect.clone();
        let (out, cache) = self.enc.forward(&self.xs, a.as_deref(), a.as_deref())?;
        let d: Vec<f64> = out.h.as_slice().iter().zip(self.w.as_slice()).map(|(h, w)| w + 2.0 * h).collect();
        self.enc.backward(&cache, &Matrix::new(out.h.rows(), out.h.cols(), d)?);
        self.loss()
    }
}

fn check_cells(report: &mut SuiteReport, opts: &SuiteOptions) -> Result<()> {
    for (name, kind, bi) in [
        ("lstm", CellKind::Vanilla, false),
        ("aalstm", CellKind::AspectAware, false),
        ("bi-lstm", CellKind::Vanilla, true),
        ("bi-aalstm", CellKind::AspectAware, true),
    ] {
        if !opts.wants(name) {
            continue;
        }
        for &seed in &opts.seeds {
            let mut prob = SeqProblem::new(kind, bi, seed);
            let checks = check_params(&mut prob, |m| m.enc.params_mut(), SeqProblem::backward, SeqProblem::loss, scheme())?;
            report.push(name, seed, CELL_TOLERANCE, checks);
        }
    }
    Ok(())
}

struct GruProblem {
    p: GruParams,
    x: Vec<f64>,
    h: Vec<f64>,
    w: Vec<f64>,
}

impl GruProblem {
    fn loss(&self) -> Result<f64> {
        let h1 = gru_step(&self.p, &self.x, &self.h)?;
        Ok(gru_step(&self.p, &self.x, &h1)?.dot(&self.w))
    }

    fn backward(&mut self) -> Result<f64> {
        for t in self.p.params_mut() {
            t.zero_grad();
        }
        let (h1, c1) = gru_forward(&self.p, &self.x, &self.h)?;
        let (h2, c2) = gru_forward(&self.p, &self.x, &h1)?;
        let (_, dh1) = gru_backward(&mut self.p, &c2, &self.w);
        gru_backward(&mut self.p, &c1, &dh1);
        Ok(h2.dot(&self.w))
    }
}

fn check_gru(report: &mut SuiteReport, opts: &SuiteOptions) -> Result<()> {
    if !opts.wants("gru") {
        return Ok(());
    }
    for &seed in &opts.seeds {
        let rng = Rng::new(seed);
        let mut p = GruParams::new("gru", 3, 2, &rng);
        spread(p.params_mut(), &mut rng.substream("spread"), 0.8);
        let mut d = rng.substream("data");
        let mut draw = |n: usize| (0..n).map(|_| d.uniform(-1.2, 1.2)).collect::<Vec<_>>();
        let mut prob = GruProblem { p, x: draw(3), h: draw(2), w: draw(2) };
        let checks = check_params(&mut prob, |m| m.p.params_mut(), GruProblem::backward, GruProblem::loss, scheme())?;
        report.push("gru", seed, CELL_TOLERANCE, checks);
    }
    Ok(())
}

/// Loss `Σ w⊙G + ½ΣG²` over one graph layer's output.
struct GraphProblem {
    stack: GcnStack,
    g: Graph,
    h: Matrix,
    a: Vec<f64>,
    w: Matrix,
}

impl GraphProblem {
    fn loss(&self) -> Result<f64> {
        let (out, _) = self.stack.forward(&self.g, &self.h, Some(&self.a))?;
        Ok(out.as_slice().iter().zip(self.w.as_slice()).map(|(o, w)| o * w + 0.5 * o * o).sum())
    }

    fn backward(&mut self) -> Result<f64> {
        for p in self.stack.params_mut() {
            p.zero_grad();
        }
        let (out, cache) = self.stack.forward(&self.g, &self.h, Some(&self.a))?;
        let d: Vec<f64> = out.as_slice().iter().zip(self.w.as_slice()).map(|(o, w)| w + o).collect();
        self.stack.backward(&self.g, &cache, &Matrix::new(out.rows(), out.cols(), d)?);
        self.loss()
    }
}

fn check_graph_layers(report: &mut SuiteReport, opts: &SuiteOptions) -> Result<()> {
    for (name, kind) in [("gcn", GraphKind::Gcn), ("aagcn", GraphKind::Aagcn)] {
        if !opts.wants(name) {
            continue;
        }
        for &seed in &opts.seeds {
            let rng = Rng::new(seed);
            let mut d = rng.substream("data");
            let n = 5;
            let mut edges: Vec<(usize, usize)> = (1..n).map(|i| (i, d.below(i))).collect();
            edges.push((d.below(n), d.below(n)));
            let g = build_graph(n, &edges)?;
            let mut stack = GcnStack::new(kind, 1, 3, 2, "gcn", &rng);
            spread(stack.params_mut(), &mut rng.substream("spread"), 0.9);
            let h = random_matrix(n, 3, &mut d, 1.0);
            let w = random_matrix(n, 3, &mut d, 1.0);
            let a = vec![d.uniform(-1.0, 1.0), d.uniform(-1.0, 1.0)];
            let mut prob = GraphProblem { stack, g, h, a, w };
            let checks = check_params(&mut prob, |m| m.stack.params_mut(), GraphProblem::backward, GraphProblem::loss, scheme())?;
            report.push(name, seed, CELL_TOLERANCE, checks);
        }
    }
    Ok(())
}

/// Every backbone and variant the suite instantiates, named.
pub fn backbone_variants() -> Vec<(String, ModelConfig)> {
    let mut out = Vec::new();
    for backbone in [Backbone::Single, Backbone::Atae, Backbone::Ian, Backbone::Ram, Backbone::Asgcn] {
        let tag = format!("{backbone:?}").to_lowercase();
        for cell in [CellKind::Vanilla, CellKind::AspectAware] {
            for bi in [false, true] {
                if backbone == Backbone::Asgcn && !bi {
                    continue;
                }
                let mut c = ModelConfig::for_backbone(backbone, Task::Atsa);
                c.cell = cell;
                c.bidirectional = bi;
                let cell_tag = match (cell, bi) {
                    (CellKind::Vanilla, false) => "lstm",
                    (CellKind::Vanilla, true) => "bi-lstm",
                    (CellKind::AspectAware, false) => "aalstm",
                    (CellKind::AspectAware, true) => "bi-aalstm",
                };
                out.push((format!("{tag}/{cell_tag}"), c.clone()));
                if matches!(backbone, Backbone::Ram | Backbone::Asgcn) && bi {
                    c.graph = Some(GraphKind::Aagcn);
                    out.push((format!("{tag}/{cell_tag}+aagcn"), c));
                }
            }
        }
    }
    let mut atae = ModelConfig::for_backbone(Backbone::Atae, Task::Atsa);
    atae.aec = false;
    atae.cell = CellKind::AspectAware;
    out.push(("atae/aalstm-no-aec".into(), atae));
    for backbone in [Backbone::Single, Backbone::Atae, Backbone::Ian] {
        for cell in [CellKind::Vanilla, CellKind::AspectAware] {
            let mut c = ModelConfig::for_backbone(backbone, Task::Acsa);
            c.cell = cell;
            c.train_embeddings = true;
            let cell_tag = if cell == CellKind::Vanilla { "lstm" } else { "aalstm" };
            out.push((format!("{}-acsa/{cell_tag}", format!("{backbone:?}").to_lowercase()), c));
        }
    }
    out
}

fn suite_samples(task: Task, seed: u64) -> Vec<Sample> {
    match task {
        Task::Atsa => {
            let mut s = synth::opposite_pair_corpus(1, &Rng::new(seed));
            s.truncate(1);
            s
        }
        Task::Acsa => synth::separable_category_corpus(3, &Rng::new(seed)).into_iter().skip(seed as usize % 3).take(1).collect(),
    }
}

/// Redraws parameters until no graph rectifier input on `x` sits within
/// [`KINK_MARGIN`] of zero; finite differences across a kink are meaningless.
fn spread_model(m: &mut Model, x: &crate::backbones::EncodedSample, seed: u64) -> Result<()> {
    for attempt in 0..64 {
        spread(m.params_mut(), &mut Rng::new(seed).substream(&format!("spread/{attempt}")), 1.0);
        let (_, c) = m.forward(x, None)?;
        if c.relu_margin().is_none_or(|d| d > KINK_MARGIN) {
            return Ok(());
        }
    }
    Err(crate::Error::Config(format!("no kink-free parameter draw found for seed {seed}")))
}

fn check_backbones(report: &mut SuiteReport, opts: &SuiteOptions) -> Result<()> {
    for (name, cfg) in backbone_variants() {
        let component = format!("backbone/{name}");
        if !opts.wants(&component) {
            continue;
        }
        for &seed in &opts.seeds {
            let samples = suite_samples(cfg.task, seed);
            let vocab = Vocab::from_samples([samples.as_slice()]);
            let table = EmbeddingTable::random(vocab, 4, 0.8, &Rng::new(seed).substream("emb"));
            let mut cats: Vec<String> = samples.iter().filter_map(|s| s.category.clone()).collect();
            cats.dedup();
            let mut m = Model::new(cfg.clone().with_dims(4, 4), &table, cats, &Rng::new(seed))?;
            let x = m.encode(&samples[0])?;
            spread_model(&mut m, &x, seed)?;
            let checks = check_params(
                &mut m,
                |m| m.params_mut(),
                |m| {
                    m.zero_grad();
                    let (_, c) = m.forward(&x, None)?;
                    m.backward(&c, x.label)
                },
                |m| m.loss(&x),
                scheme(),
            )?;
            report.push(&component, seed, MODEL_TOLERANCE, checks);
        }
    }
    Ok(())
}

fn check_transformer(report: &mut SuiteReport, opts: &SuiteOptions) -> Result<()> {
    let combos = [
        (FormatKind::Bert1, HeadKind::Cls),
        (FormatKind::Aabert2, HeadKind::Pool),
        (FormatKind::Aabert3, HeadKind::Sep),
    ];
    for (format, head) in combos {
        let component = format!("transformer/{}-{}", format.name().to_lowercase(), format!("{head:?}").to_lowercase());
        if !opts.wants(&component) {
            continue;
        }
        for &seed in &opts.seeds {
            let samples = suite_samples(Task::Atsa, seed);
            let cfg = TransformerConfig { layers: 2, heads: 2, d_model: 8, d_ff: 12, max_len: 24, ..TransformerConfig::default() };
            let mut m = TransformerModel::new(cfg, format, head, TokenVocab::from_samples(&samples), &Rng::new(seed))?;
            let mut r = Rng::new(seed).substream("spread");
            for p in m.params_mut() {
                for v in p.value.as_mut_slice() {
                    *v += r.uniform(-0.5, 0.5);
                }
            }
            let x = m.encode(&samples[0])?;
            let checks = check_params(
                &mut m,
                |m| m.params_mut(),
                |m| {
                    m.zero_grad();
                    let (_, c) = m.forward(&x, None)?;
                    m.backward(&c, x.label)
                },
                |m| m.loss(&x),
                scheme(),
            )?;
            report.push(&component, seed, MODEL_TOLERANCE, checks);
        }
    }
    Ok(())
}

/// Finite-difference checks of every parameter of every cell, graph layer,
/// backbone variant and the tiny transformer. Failures are report entries.
pub fn grad_check_suite(opts: &SuiteOptions) -> Result<SuiteReport> {
    let mut report = SuiteReport::default();
    check_cells(&mut report, opts)?;
    check_gru(&mut report, opts)?;
    check_graph_layers(&mut report, opts)?;
    check_backbones(&mut report, opts)?;
    check_transformer(&mut report, opts)?;
    Ok(report)
}
