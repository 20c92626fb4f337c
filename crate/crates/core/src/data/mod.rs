//! SemEval-2014 ingestion, embeddings, dependency heads and bucketing.

mod buckets;
mod deps;
mod embeddings;
mod sample;
mod semeval;
pub mod synth;
mod tokenize;

pub use buckets::{bucket_by_aspect_count, BucketKey, BucketProfile};
pub use deps::{
    attach_dependencies, heads_to_edges, load_dependency_edges, load_dependency_edges_reader, sample_graph,
    DependencyEdges,
};
pub use embeddings::{
    embed_tokens, load_embeddings, load_embeddings_reader, token_ids, EmbeddingTable, Vocab, DEFAULT_EMBEDDING_DIM,
    OOV_SCALE,
};
pub(crate) use embeddings::oov_row;
pub use sample::{read_jsonl, write_jsonl, Polarity, Sample, Task};
pub use semeval::{parse_semeval, DatasetStats};
pub use tokenize::{tokenize, tokenize_with_offsets, Token};
