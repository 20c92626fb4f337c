use crate::data::{sample_graph, EmbeddingTable, Sample, Task, Vocab};
use crate::error::{shape_err, Error, Result};
use crate::graph::{GcnStack, Graph, GraphKind, StackCache};
use crate::numcore::{
    add_into, axpy, cross_entropy, dot, softmax, softmax_backward, Matrix, ParamKind, ParamTensor, Rng, Vector,
};
use crate::rnn::{gru_backward, gru_forward, CellKind, EncoderCache, GruCache, GruParams, PoolMode, RecurrentEncoder, INIT_SCALE};

use super::blocks::{apply_mask, dropout_mask, span_mean, span_mean_backward, AttentionCache, AttentionParams, Classifier};
use super::config::{Backbone, ModelConfig};

/// A sample resolved against a model's vocabulary and category list.
#[derive(Clone, Debug)]
pub struct EncodedSample {
    pub ids: Vec<usize>,
    pub span: Option<(usize, usize)>,
    pub category: Option<usize>,
    pub graph: Option<Graph>,
    pub label: usize,
}

/// A complete classifier: embeddings, encoder(s), backbone-specific layers and head.
#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub categories: Vec<String>,
    pub embeddings: ParamTensor,
    pub category_table: Option<ParamTensor>,
    pub encoder: RecurrentEncoder,
    pub aspect_encoder: Option<RecurrentEncoder>,
    pub graph: Option<GcnStack>,
    pub attention: Option<AttentionParams>,
    pub aspect_attention: Option<AttentionParams>,
    pub gru: Option<GruParams>,
    pub classifier: Classifier,
}

#[derive(Clone, Debug)]
enum Detail {
    Pool,
    Attend(AttentionCache),
    Ian { h_a: Matrix, asp_cache: EncoderCache, att_c: AttentionCache, att_a: AttentionCache },
    Ram { graph: Option<StackCache>, pos: Vec<f64>, episodes: Vec<(AttentionCache, GruCache)> },
    Asgcn { graph: StackCache, q: Vec<f64>, weights: Vector },
}

/// Activations from [`Model::forward`] needed by [`Model::backward`].
#[derive(Clone, Debug)]
pub struct ForwardCache {
    ids: Vec<usize>,
    span: Option<(usize, usize)>,
    category: Option<usize>,
    graph: Option<Graph>,
    x_mask: Option<Vec<f64>>,
    h: Matrix,
    enc_cache: EncoderCache,
    detail: Detail,
    r: Vec<f64>,
    r_mask: Option<Vec<f64>>,
    pub probs: Vector,
}

impl ForwardCache {
    /// Distance of the nearest graph rectifier input from its kink.
    pub fn relu_margin(&self) -> Option<f64> {
        match &self.detail {
            Detail::Ram { graph: Some(g), .. } | Detail::Asgcn { graph: g, .. } => g.relu_margin(),
            _ => None,
        }
    }
}

/// Train-time dropout: rate and the stream masks are drawn from.
pub struct Dropout<'a> {
    pub p: f64,
    pub rng: &'a mut Rng,
}

/// `1 − dist_t / T`, with `dist_t` the token distance to the aspect span.
pub(crate) fn position_weights(t_len: usize, (s, e): (usize, usize)) -> Vec<f64> {
    let t = t_len as f64;
    (0..t_len)
        .map(|i| {
            let dist = if i < s {
                s - i
            } else if i >= e {
                i + 1 - e
            } else {
                0
            };
            1.0 - dist as f64 / t
        })
        .collect()
}

impl Model {
    /// Builds a model whose word rows come from `table`. `categories` lists the
    /// aspect categories (ACSA) and may be empty for aspect terms.
    pub fn new(config: ModelConfig, table: &EmbeddingTable, categories: Vec<String>, rng: &Rng) -> Result<Self> {
        config.validate()?;
        if table.dim() != config.emb_dim {
            return Err(Error::Config(format!("embedding table has dim {}, config says {}", table.dim(), config.emb_dim)));
        }
        if config.task == Task::Acsa && categories.is_empty() {
            return Err(Error::Config("ACSA model needs at least one category".into()));
        }
        let (de, dc, dh, d_att) = (config.emb_dim, config.hidden_dim, config.encoder_out_dim(), config.att_dim);
        let enc_dx = if config.aec { 2 * de } else { de };
        let encoder = RecurrentEncoder::new(config.cell, config.bidirectional, "enc", enc_dx, dc, rng);
        let category_table = (config.task == Task::Acsa).then(|| {
            ParamTensor::named_uniform("emb.categories", ParamKind::Embedding, categories.len(), de, INIT_SCALE, rng)
        });
        let aspect_encoder = config
            .has_aspect_encoder()
            .then(|| RecurrentEncoder::new(CellKind::Vanilla, config.bidirectional, "enc_aspect", de, dc, rng));
        let graph = config.graph.map(|k| GcnStack::new(k, config.gcn_layers, dh, dh, "gcn", rng));
        let key_dim = if config.has_aspect_encoder() || config.backbone == Backbone::Ram { dh } else { de };
        let attention = matches!(config.backbone, Backbone::Atae | Backbone::Ian | Backbone::Ram)
            .then(|| AttentionParams::new("att", dh, key_dim, d_att, rng));
        let aspect_attention = config.has_aspect_encoder().then(|| AttentionParams::new("att_aspect", dh, dh, d_att, rng));
        let gru = (config.backbone == Backbone::Ram).then(|| GruParams::new("ram.gru", dh, dh, rng));
        let dr = if config.has_aspect_encoder() { 2 * dh } else { dh };
        let classifier = Classifier::new("cls", dr, rng);
        let embeddings = ParamTensor::new("emb.words", ParamKind::Embedding, table.matrix.clone());
        Ok(Self {
            config,
            vocab: table.vocab.clone(),
            categories,
            embeddings,
            category_table,
            encoder,
            aspect_encoder,
            graph,
            attention,
            aspect_attention,
            gru,
            classifier,
        })
    }

    /// Resolves tokens, category and dependency graph.
    pub fn encode(&self, s: &Sample) -> Result<EncodedSample> {
        s.validate()?;
        if s.task != self.config.task {
            return Err(Error::Config(format!("{:?} sample given to a {:?} model", s.task, self.config.task)));
        }
        let ids = s
            .tokens
            .iter()
            .map(|t| self.vocab.get(t).ok_or_else(|| Error::Lookup(format!("token `{t}` not in model vocabulary"))))
            .collect::<Result<Vec<_>>>()?;
        if ids.is_empty() {
            return Err(Error::Empty("sample tokens"));
        }
        let category = match &s.category {
            Some(c) => Some(
                self.categories
                    .iter()
                    .position(|k| k == c)
                    .ok_or_else(|| Error::Lookup(format!("unknown category `{c}`")))?,
            ),
            None => None,
        };
        let graph = if self.config.needs_graph() { Some(sample_graph(s)?) } else { None };
        Ok(EncodedSample { ids, span: s.aspect_span, category, graph, label: s.polarity.index() })
    }

    /// Adds rows for words missing from the vocabulary, drawn exactly as
    /// out-of-vocabulary rows are when loading embeddings.
    pub fn extend_vocab<'a, I: IntoIterator<Item = &'a str>>(&mut self, words: I, rng: &Rng) -> usize {
        let new: Vec<&str> = words.into_iter().filter(|w| self.vocab.get(w).is_none()).collect();
        if new.is_empty() {
            return 0;
        }
        let vocab = Vocab::from_words(self.vocab.words().iter().map(String::as_str).chain(new.iter().copied()));
        let de = self.config.emb_dim;
        let mut data = Vec::with_capacity(vocab.len() * de);
        for w in vocab.words() {
            match self.vocab.get(w) {
                Some(i) => data.extend_from_slice(self.embeddings.value.row(i)),
                None => data.extend(crate::data::oov_row(rng, w, de)),
            }
        }
        let added = vocab.len() - self.vocab.len();
        self.vocab = vocab;
        let value = Matrix::new(self.vocab.len(), de, data).expect("rows built with the table width");
        self.embeddings = ParamTensor::new("emb.words", ParamKind::Embedding, value);
        added
    }

    fn collect(&self, with_words: bool) -> Vec<&ParamTensor> {
        let mut v: Vec<&ParamTensor> = Vec::new();
        if with_words {
            v.push(&self.embeddings);
        }
        v.extend(self.category_table.iter());
        v.extend(self.encoder.params());
        if let Some(e) = &self.aspect_encoder {
            v.extend(e.params());
        }
        if let Some(g) = &self.graph {
            v.extend(g.params());
        }
        for a in [&self.attention, &self.aspect_attention].into_iter().flatten() {
            v.extend(a.params());
        }
        if let Some(g) = &self.gru {
            v.extend(g.params());
        }
        v.extend(self.classifier.params());
        v
    }

    fn collect_mut(&mut self, with_words: bool) -> Vec<&mut ParamTensor> {
        let mut v: Vec<&mut ParamTensor> = Vec::new();
        if with_words {
            v.push(&mut self.embeddings);
        }
        v.extend(self.category_table.iter_mut());
        v.extend(self.encoder.params_mut());
        if let Some(e) = &mut self.aspect_encoder {
            v.extend(e.params_mut());
        }
        if let Some(g) = &mut self.graph {
            v.extend(g.params_mut());
        }
        for a in [&mut self.attention, &mut self.aspect_attention].into_iter().flatten() {
            v.extend(a.params_mut());
        }
        if let Some(g) = &mut self.gru {
            v.extend(g.params_mut());
        }
        v.extend(self.classifier.params_mut());
        v
    }

    /// Parameters the optimizer updates, in a fixed order.
    pub fn params(&self) -> Vec<&ParamTensor> {
        self.collect(self.config.train_embeddings)
    }

    pub fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        self.collect_mut(self.config.train_embeddings)
    }

    /// Every tensor including frozen word embeddings, for serialization.
    pub fn all_params(&self) -> Vec<&ParamTensor> {
        self.collect(true)
    }

    pub fn all_params_mut(&mut self) -> Vec<&mut ParamTensor> {
        self.collect_mut(true)
    }

    pub fn zero_grad(&mut self) {
        for p in self.all_params_mut() {
            p.zero_grad();
        }
    }

    /// Class probabilities without dropout.
    pub fn predict(&self, x: &EncodedSample) -> Result<Vector> {
        Ok(self.forward(x, None)?.0)
    }

    /// Cross-entropy of the gold label under [`Model::predict`].
    pub fn loss(&self, x: &EncodedSample) -> Result<f64> {
        let p = self.predict(x)?;
        Ok(cross_entropy(&p, x.label)?.0)
    }

    fn aspect_span(&self, x: &EncodedSample) -> Result<(usize, usize)> {
        x.span.ok_or_else(|| Error::Config(format!("{:?} needs an aspect span", self.config.backbone)))
    }

    pub fn forward(&self, x: &EncodedSample, dropout: Option<Dropout<'_>>) -> Result<(Vector, ForwardCache)> {
        let cfg = &self.config;
        let t_len = x.ids.len();
        let de = cfg.emb_dim;
        let mut dropout = dropout.filter(|d| d.p > 0.0);
        let emb = self.embeddings.value.select_rows(&x.ids);
        let a_emb: Option<Vector> = match cfg.task {
            Task::Atsa if !cfg.has_aspect_encoder() => {
                let (s, e) = self.aspect_span(x)?;
                if e > t_len || s >= e {
                    return Err(Error::Index { what: "aspect span end", index: e, len: t_len });
                }
                Some(span_mean(&emb, s, e))
            }
            Task::Atsa => None,
            Task::Acsa => {
                let table = self.category_table.as_ref().expect("ACSA models own a category table");
                let k = x.category.ok_or_else(|| Error::Lookup("ACSA sample without category".into()))?;
                Some(table.value.row_vector(k))
            }
        };

        let x_mask = dropout.as_mut().map(|d| dropout_mask(t_len * de, d.p, d.rng));
        let mut xd = emb;
        apply_mask(xd.as_mut_slice(), x_mask.as_deref());

        let enc_in = match (&a_emb, cfg.aec) {
            (Some(a), true) => {
                let rep = Matrix::from_rows(&vec![a.as_slice(); t_len])?;
                xd.hconcat(&rep)?
            }
            _ => xd.clone(),
        };

        // IAN on aspect terms encodes the aspect words first; their mean hidden
        // state becomes the context cell's aspect vector.
        let ian_aspect = match &self.aspect_encoder {
            Some(enc_a) => {
                let (s, e) = self.aspect_span(x)?;
                let xa = xd.select_rows(&(s..e).collect::<Vec<_>>());
                let (out, cache) = enc_a.forward(&xa, None, None)?;
                Some((out.h, cache))
            }
            None => None,
        };
        let m_a = ian_aspect.as_ref().map(|(h, _)| h.mean_rows());

        let dc = cfg.hidden_dim;
        let (cell_fwd, cell_bwd): (Option<&[f64]>, Option<&[f64]>) = match (cfg.cell, &m_a, &a_emb) {
            (CellKind::Vanilla, _, _) => (None, None),
            (CellKind::AspectAware, Some(m), _) if cfg.bidirectional => (Some(&m[..dc]), Some(&m[dc..])),
            (CellKind::AspectAware, Some(m), _) => (Some(m.as_slice()), None),
            (CellKind::AspectAware, None, Some(a)) => (Some(a.as_slice()), cfg.bidirectional.then_some(a.as_slice())),
            (CellKind::AspectAware, None, None) => return Err(Error::Config("aspect-aware cell without aspect".into())),
        };
        let (out, enc_cache) = self.encoder.forward(&enc_in, cell_fwd, cell_bwd)?;
        let h = out.h;

        let (r, detail) = match cfg.backbone {
            Backbone::Single => (self.pool(&h), Detail::Pool),
            Backbone::Atae => {
                let a = a_emb.as_ref().expect("ATAE computes an aspect vector");
                let (s, c) = self.attention.as_ref().expect("ATAE has attention").forward(&h, a)?;
                (s.into_vec(), Detail::Attend(c))
            }
            Backbone::Ian => match ian_aspect {
                Some((h_a, asp_cache)) => {
                    let m_a = m_a.expect("set with the aspect encoder");
                    let m_c = h.mean_rows();
                    let (s_c, att_c) = self.attention.as_ref().expect("IAN has attention").forward(&h, &m_a)?;
                    let (s_a, att_a) = self.aspect_attention.as_ref().expect("IAN has aspect attention").forward(&h_a, &m_c)?;
                    let r = Vector::concat(&[&s_c, &s_a]).into_vec();
                    (r, Detail::Ian { h_a, asp_cache, att_c, att_a })
                }
                None => {
                    let a = a_emb.as_ref().expect("category vector");
                    let (s, c) = self.attention.as_ref().expect("IAN has attention").forward(&h, a)?;
                    (s.into_vec(), Detail::Attend(c))
                }
            },
            Backbone::Ram => self.ram_forward(x, &h)?,
            Backbone::Asgcn => self.asgcn_forward(x, &h)?,
        };

        let r_mask = dropout.as_mut().map(|d| dropout_mask(r.len(), d.p, d.rng));
        let mut r = r;
        apply_mask(&mut r, r_mask.as_deref());
        let probs = self.classifier.forward(&r)?;
        let cache = ForwardCache {
            ids: x.ids.clone(),
            span: x.span,
            category: x.category,
            graph: x.graph.clone(),
            x_mask,
            h,
            enc_cache,
            detail,
            r,
            r_mask,
            probs: probs.clone(),
        };
        Ok((probs, cache))
    }

    fn pool(&self, h: &Matrix) -> Vec<f64> {
        let t = h.rows();
        match self.config.pool {
            PoolMode::Mean => h.mean_rows().into_vec(),
            PoolMode::Last if self.config.bidirectional => {
                let dc = self.config.hidden_dim;
                Vector::concat(&[&h.row(t - 1)[..dc], &h.row(0)[dc..]]).into_vec()
            }
            PoolMode::Last => h.row(t - 1).to_vec(),
        }
    }

    fn pool_backward(&self, t_len: usize, dr: &[f64]) -> Matrix {
        let mut dh = Matrix::zeros(t_len, dr.len());
        match self.config.pool {
            PoolMode::Mean => {
                for t in 0..t_len {
                    axpy(dh.row_mut(t), 1.0 / t_len as f64, dr);
                }
            }
            PoolMode::Last if self.config.bidirectional => {
                let dc = self.config.hidden_dim;
                add_into(&mut dh.row_mut(t_len - 1)[..dc], &dr[..dc]);
                add_into(&mut dh.row_mut(0)[dc..], &dr[dc..]);
            }
            PoolMode::Last => dh.row_mut(t_len - 1).copy_from_slice(dr),
        }
        dh
    }

    fn graph_of<'g>(&self, g: &'g Option<Graph>, t_len: usize) -> Result<&'g Graph> {
        let g = g.as_ref().ok_or_else(|| Error::Lookup("graph layers need dependency heads".into()))?;
        if g.n() != t_len {
            return Err(shape_err("graph", format!("{} nodes for {t_len} tokens", g.n())));
        }
        Ok(g)
    }

    fn run_graph(&self, x: &EncodedSample, h: &Matrix) -> Result<Option<(Matrix, StackCache)>> {
        let Some(stack) = &self.graph else { return Ok(None) };
        let g = self.graph_of(&x.graph, h.rows())?;
        let (s, e) = self.aspect_span(x)?;
        let a = span_mean(h, s, e);
        let gate = (self.config.graph == Some(GraphKind::Aagcn)).then_some(a.as_slice());
        Ok(Some(stack.forward(g, h, gate)?))
    }

    fn ram_forward(&self, x: &EncodedSample, h: &Matrix) -> Result<(Vec<f64>, Detail)> {
        let span = self.aspect_span(x)?;
        let graph = self.run_graph(x, h)?;
        let src = graph.as_ref().map_or(h, |(g, _)| g);
        let pos = position_weights(h.rows(), span);
        let mut mem = src.clone();
        for (t, w) in pos.iter().enumerate() {
            mem.row_mut(t).iter_mut().for_each(|v| *v *= w);
        }
        let att = self.attention.as_ref().expect("RAM has attention");
        let gru = self.gru.as_ref().expect("RAM has a GRU");
        let mut e = vec![0.0; gru.dg()];
        let mut episodes = Vec::with_capacity(self.config.ram_episodes);
        for _ in 0..self.config.ram_episodes {
            let (s, ac) = att.forward(&mem, &e)?;
            let (next, gc) = gru_forward(gru, &s, &e)?;
            episodes.push((ac, gc));
            e = next.into_vec();
        }
        Ok((e, Detail::Ram { graph: graph.map(|(_, c)| c), pos, episodes }))
    }

    fn asgcn_forward(&self, x: &EncodedSample, h: &Matrix) -> Result<(Vec<f64>, Detail)> {
        let (s, e) = self.aspect_span(x)?;
        let (g_out, graph) = self.run_graph(x, h)?.expect("ASGCN has graph layers");
        let mut q = vec![0.0; g_out.cols()];
        for j in s..e {
            add_into(&mut q, g_out.row(j));
        }
        let scores: Vec<f64> = (0..h.rows()).map(|t| dot(h.row(t), &q)).collect();
        let weights = softmax(&scores);
        let mut r = vec![0.0; h.cols()];
        for t in 0..h.rows() {
            axpy(&mut r, weights[t], h.row(t));
        }
        Ok((r, Detail::Asgcn { graph, q, weights }))
    }

    /// Accumulates parameter gradients of the cross-entropy loss for `label`
    /// and returns that loss.
    pub fn backward(&mut self, c: &ForwardCache, label: usize) -> Result<f64> {
        let (loss, d_logits) = cross_entropy(&c.probs, label)?;
        let mut dr = self.classifier.backward(&c.r, &d_logits);
        apply_mask(&mut dr, c.r_mask.as_deref());

        let t_len = c.ids.len();
        let de = self.config.emb_dim;
        let mut d_a_emb = vec![0.0; de];
        let mut ian: Option<(Matrix, Vec<f64>, &EncoderCache)> = None;

        let dh = match &c.detail {
            Detail::Pool => self.pool_backward(t_len, &dr),
            Detail::Attend(ac) => {
                let (dh, da) = self.attention.as_mut().expect("attention").backward(ac, &dr);
                add_into(&mut d_a_emb, &da);
                dh
            }
            Detail::Ian { h_a, asp_cache, att_c, att_a } => {
                let dh_out = self.config.encoder_out_dim();
                let (mut dh, dm_a) = self.attention.as_mut().expect("attention").backward(att_c, &dr[..dh_out]);
                let (dh_a, dm_c) = self.aspect_attention.as_mut().expect("aspect attention").backward(att_a, &dr[dh_out..]);
                for t in 0..t_len {
                    axpy(dh.row_mut(t), 1.0 / t_len as f64, &dm_c);
                }
                debug_assert_eq!(h_a.shape(), dh_a.shape());
                ian = Some((dh_a, dm_a, asp_cache));
                dh
            }
            Detail::Ram { graph, pos, episodes } => {
                let att = self.attention.as_mut().expect("attention");
                let gru = self.gru.as_mut().expect("gru");
                let mut de_state = dr.clone();
                let mut dmem = Matrix::zeros(t_len, c.h.cols());
                for (ac, gc) in episodes.iter().rev() {
                    let (ds, de_prev) = gru_backward(gru, gc, &de_state);
                    let (dm, de_key) = att.backward(ac, &ds);
                    add_into(dmem.as_mut_slice(), dm.as_slice());
                    de_state = de_prev;
                    add_into(&mut de_state, &de_key);
                }
                for (t, w) in pos.iter().enumerate() {
                    dmem.row_mut(t).iter_mut().for_each(|v| *v *= w);
                }
                match graph {
                    Some(sc) => self.graph_backward(c, sc, &dmem)?,
                    None => dmem,
                }
            }
            Detail::Asgcn { graph, q, weights } => {
                let (s, e) = c.span.expect("checked in forward");
                let h = &c.h;
                let mut dh = Matrix::zeros(t_len, h.cols());
                let dw: Vec<f64> = (0..t_len).map(|t| dot(h.row(t), &dr)).collect();
                let ds = softmax_backward(weights, &dw);
                let mut dq = vec![0.0; q.len()];
                for t in 0..t_len {
                    let row = dh.row_mut(t);
                    axpy(row, weights[t], &dr);
                    axpy(row, ds[t], q);
                    axpy(&mut dq, ds[t], h.row(t));
                }
                let mut dg = Matrix::zeros(t_len, q.len());
                for j in s..e {
                    dg.row_mut(j).copy_from_slice(&dq);
                }
                let dh_graph = self.graph_backward(c, graph, &dg)?;
                add_into(dh.as_mut_slice(), dh_graph.as_slice());
                dh
            }
        };

        let grads = self.encoder.backward(&c.enc_cache, &dh);
        let mut dxd = Matrix::zeros(t_len, de);
        for t in 0..t_len {
            let row = grads.dxs.row(t);
            dxd.row_mut(t).copy_from_slice(&row[..de]);
            if self.config.aec {
                add_into(&mut d_a_emb, &row[de..]);
            }
        }
        let d_cell_aspect: Vec<f64> = match (grads.d_aspect_fwd, grads.d_aspect_bwd) {
            (Some(f), Some(b)) if ian.is_some() => [f, b].concat(),
            (Some(mut f), Some(b)) => {
                add_into(&mut f, &b);
                f
            }
            (Some(f), None) => f,
            _ => Vec::new(),
        };

        if let Some((mut dh_a, mut dm_a, asp_cache)) = ian {
            if !d_cell_aspect.is_empty() {
                add_into(&mut dm_a, &d_cell_aspect);
            }
            let ta = dh_a.rows();
            for t in 0..ta {
                axpy(dh_a.row_mut(t), 1.0 / ta as f64, &dm_a);
            }
            let enc_a = self.aspect_encoder.as_mut().expect("aspect encoder");
            let ga = enc_a.backward(asp_cache, &dh_a);
            let (s, _) = c.span.expect("IAN span");
            for t in 0..ta {
                add_into(dxd.row_mut(s + t), ga.dxs.row(t));
            }
        } else if !d_cell_aspect.is_empty() {
            add_into(&mut d_a_emb, &d_cell_aspect);
        }

        apply_mask(dxd.as_mut_slice(), c.x_mask.as_deref());
        match self.config.task {
            Task::Acsa => {
                let table = self.category_table.as_mut().expect("category table");
                let k = c.category.expect("ACSA category");
                add_into(table.grad.row_mut(k), &d_a_emb);
            }
            Task::Atsa if self.config.train_embeddings => {
                if self.aspect_encoder.is_none() {
                    let (s, e) = c.span.expect("ATSA span");
                    for t in s..e {
                        add_into(self.embeddings.grad.row_mut(c.ids[t]), &d_a_emb.iter().map(|v| v / (e - s) as f64).collect::<Vec<_>>());
                    }
                }
            }
            Task::Atsa => {}
        }
        if self.config.train_embeddings {
            for (t, &id) in c.ids.iter().enumerate() {
                add_into(self.embeddings.grad.row_mut(id), dxd.row(t));
            }
        }
        Ok(loss)
    }

    fn graph_backward(&mut self, c: &ForwardCache, sc: &StackCache, d_out: &Matrix) -> Result<Matrix> {
        let g = c.graph.as_ref().ok_or_else(|| Error::Lookup("graph missing from cache".into()))?;
        let stack = self.graph.as_mut().expect("graph layers");
        let (mut dh, da) = stack.backward(g, sc, d_out);
        if !da.is_empty() {
            let (s, e) = c.span.expect("graph models need a span");
            span_mean_backward(&mut dh, s, e, &da);
        }
        Ok(dh)
    }
}
