use absa_bench::{pair_samples, random_matrix};
use absa_core::backbones::{Backbone, Model, ModelConfig};
use absa_core::bert_fmt::TokenVocab;
use absa_core::data::{EmbeddingTable, Vocab};
use absa_core::graph::{aagcn_layer, build_graph, gcn_layer, AagcnParams, GcnParams};
use absa_core::rnn::{run_sequence, AalstmParams, Cell, CellKind, LstmParams};
use absa_core::{FormatKind, HeadKind, Rng, Task, TransformerConfig, TransformerModel};
use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

fn cells(c: &mut Criterion) {
    let mut group = c.benchmark_group("sequence");
    for t in [8usize, 32] {
        let xs = random_matrix(t, 32, 1);
        let aspect: Vec<f64> = random_matrix(1, 32, 2).as_slice().to_vec();
        let lstm = Cell::Lstm(LstmParams::new("l", 32, 32, &Rng::new(3)));
        let aa = Cell::Aalstm(AalstmParams::new("a", 32, 32, &Rng::new(3)));
        group.bench_with_input(BenchmarkId::new("lstm", t), &xs, |b, xs| b.iter(|| run_sequence(&lstm, black_box(xs), None).unwrap()));
        group.bench_with_input(BenchmarkId::new("aalstm", t), &xs, |b, xs| b.iter(|| run_sequence(&aa, black_box(xs), Some(&aspect)).unwrap()));
    }
    group.finish();
}

fn graphs(c: &mut Criterion) {
    let n = 24;
    let edges: Vec<(usize, usize)> = (1..n).map(|i| (i, i / 2)).collect();
    let g = build_graph(n, &edges).unwrap();
    let h = random_matrix(n, 32, 4);
    let gcn = GcnParams::new("g", 32, 32, &Rng::new(5));
    let aagcn = AagcnParams::new("a", 32, 32, 32, &Rng::new(5));
    let aspect = random_matrix(1, 32, 6).as_slice().to_vec();
    c.bench_function("gcn_layer/24", |b| b.iter(|| gcn_layer(&gcn, &g, black_box(&h)).unwrap()));
    c.bench_function("aagcn_layer/24", |b| b.iter(|| aagcn_layer(&aagcn, &g, black_box(&h), &aspect).unwrap()));
}

fn models(c: &mut Criterion) {
    let samples = pair_samples(4);
    let vocab = Vocab::from_samples([samples.as_slice()]);
    let table = EmbeddingTable::random(vocab, 32, 0.1, &Rng::new(7));
    let mut group = c.benchmark_group("train_step");
    for backbone in [Backbone::Single, Backbone::Ian, Backbone::Ram, Backbone::Asgcn] {
        let mut cfg = ModelConfig::for_backbone(backbone, Task::Atsa).with_dims(32, 32);
        cfg.cell = CellKind::AspectAware;
        let mut m = Model::new(cfg, &table, Vec::new(), &Rng::new(8)).unwrap();
        let x = m.encode(&samples[0]).unwrap();
        group.bench_function(format!("{backbone:?}").to_lowercase(), |b| {
            b.iter(|| {
                m.zero_grad();
                let (_, cache) = m.forward(&x, None).unwrap();
                m.backward(&cache, x.label).unwrap()
            })
        });
    }
    let cfg = TransformerConfig::default();
    let mut t = TransformerModel::new(cfg, FormatKind::Aabert2, HeadKind::Cls, TokenVocab::from_samples(&samples), &Rng::new(9)).unwrap();
    let x = t.encode(&samples[0]).unwrap();
    group.bench_function("transformer", |b| {
        b.iter(|| {
            t.zero_grad();
            let (_, cache) = t.forward(&x, None).unwrap();
            t.backward(&cache, x.label).unwrap()
        })
    });
    group.finish();
}

criterion_group!(benches, cells, graphs, models);
criterion_main!(benches);
