use serde::{Deserialize, Serialize};

use crate::data::Task;
use crate::error::{Error, Result};
use crate::graph::GraphKind;
use crate::rnn::{CellKind, PoolMode};

/// Model composition around the recurrent encoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backbone {
    /// Encoder followed directly by a pooled classifier.
    Single,
    Atae,
    Ian,
    Ram,
    Asgcn,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub backbone: Backbone,
    pub task: Task,
    pub cell: CellKind,
    pub bidirectional: bool,
    pub graph: Option<GraphKind>,
    /// Concatenate the aspect vector to every input embedding (ATAE only).
    pub aec: bool,
    /// Sequence reduction for the `Single` backbone.
    pub pool: PoolMode,
    pub emb_dim: usize,
    pub hidden_dim: usize,
    pub att_dim: usize,
    pub ram_episodes: usize,
    pub gcn_layers: usize,
    /// Update word embeddings during training.
    pub train_embeddings: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            backbone: Backbone::Single,
            task: Task::Atsa,
            cell: CellKind::Vanilla,
            bidirectional: false,
            graph: None,
            aec: false,
            pool: PoolMode::Last,
            emb_dim: 300,
            hidden_dim: 300,
            att_dim: 300,
            ram_episodes: 3,
            gcn_layers: 2,
            train_embeddings: false,
        }
    }
}

impl ModelConfig {
    /// Defaults for `backbone`: ATAE turns on aspect concatenation, ASGCN is
    /// bidirectional over a two-layer GCN.
    pub fn for_backbone(backbone: Backbone, task: Task) -> Self {
        let mut c = Self { backbone, task, ..Self::default() };
        match backbone {
            Backbone::Atae => c.aec = true,
            Backbone::Asgcn => {
                c.bidirectional = true;
                c.graph = Some(GraphKind::Gcn);
            }
            _ => {}
        }
        c
    }

    pub fn with_dims(mut self, emb: usize, hidden: usize) -> Self {
        self.emb_dim = emb;
        self.hidden_dim = hidden;
        self.att_dim = hidden;
        self
    }

    /// Width of one hidden row: `hidden_dim`, doubled when bidirectional.
    pub fn encoder_out_dim(&self) -> usize {
        if self.bidirectional {
            2 * self.hidden_dim
        } else {
            self.hidden_dim
        }
    }

    /// IAN on aspect terms runs a separate aspect encoder.
    pub(crate) fn has_aspect_encoder(&self) -> bool {
        self.backbone == Backbone::Ian && self.task == Task::Atsa
    }

    /// Width of the aspect vector the recurrent cell receives.
    fn cell_aspect_dim(&self) -> usize {
        if self.has_aspect_encoder() {
            self.hidden_dim
        } else {
            self.emb_dim
        }
    }

    pub fn needs_graph(&self) -> bool {
        self.graph.is_some()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.emb_dim == 0 || self.hidden_dim == 0 || self.att_dim == 0 {
            return bad("dimensions must be positive".into());
        }
        if self.aec && self.backbone != Backbone::Atae {
            return bad("aspect concatenation applies to ATAE only".into());
        }
        match (self.backbone, self.graph) {
            (Backbone::Asgcn, None) => return bad("ASGCN needs a graph layer kind".into()),
            (Backbone::Asgcn | Backbone::Ram, _) => {}
            (b, Some(_)) => return bad(format!("{b:?} takes no graph layers")),
            _ => {}
        }
        if self.graph.is_some() && self.gcn_layers == 0 {
            return bad("gcn_layers must be at least 1".into());
        }
        if matches!(self.backbone, Backbone::Ram | Backbone::Asgcn) && self.task == Task::Acsa {
            return bad(format!("{:?} needs aspect-term positions and cannot run on ACSA", self.backbone));
        }
        if self.backbone == Backbone::Ram && self.ram_episodes == 0 {
            return bad("ram_episodes must be at least 1".into());
        }
        if self.cell == CellKind::AspectAware && self.cell_aspect_dim() != self.hidden_dim {
            return bad(format!(
                "aspect-aware cell needs aspect dim = hidden dim, got {} vs {}",
                self.cell_aspect_dim(),
                self.hidden_dim
            ));
        }
        Ok(())
    }
}
