use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use metassign_core::assign::{solve_ue, Method, SolverOptions};
use metassign_core::gnn::{GatedGcn, GatedGcnParams, GnnHyper, GraphBatch};
use metassign_core::meta::{meta_step, Learner, MetaConfig, MetaTrainState, TaskData};
use metassign_core::rng::stream;
use metassign_core::scenario::{build_edge_features, build_node_features, synthetic_network, DegreeMode, SyntheticConfig};
use metassign_core::{Normalization, Tape, Tensor};

fn network(n_nodes: usize, n_edges: usize) -> (metassign_core::RoadNetwork, metassign_core::OdMatrix) {
    synthetic_network(&SyntheticConfig {
        n_nodes,
        n_edges,
        ..Default::default()
    })
    .expect("valid synthetic network")
}

fn batch(n_nodes: usize, n_edges: usize) -> GraphBatch {
    let (net, od) = network(n_nodes, n_edges);
    let norm = Normalization::from_base(&net, &od);
    let present = vec![true; net.n_edges()];
    let x = build_node_features(&net, &present, &od, &norm, DegreeMode::Open);
    let e = build_edge_features(&net, &present, &norm);
    let targets = Tensor::column(vec![0.3; net.n_edges()]);
    GraphBatch::new(x, e, net.from_index(), net.to_index(), present.into(), targets).expect("consistent batch")
}

fn bench_assignment(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_ue");
    group.measurement_time(Duration::from_secs(3));
    let (net, od) = network(40, 140);
    let present = vec![true; net.n_edges()];
    for method in [Method::Fw, Method::Cfw, Method::Bcfw] {
        let options = SolverOptions {
            method,
            ..Default::default()
        };
        group.bench_with_input(BenchmarkId::new("40n_140e", method), &options, |b, o| {
            b.iter(|| solve_ue(&net, &present, &od, o).expect("solvable"));
        });
    }
    group.finish();
}

fn bench_gnn(c: &mut Criterion) {
    let mut group = c.benchmark_group("gated_gcn");
    group.measurement_time(Duration::from_secs(3));
    for (hidden, layers) in [(32, 3), (192, 6)] {
        let hyper = GnnHyper {
            hidden,
            layers,
            ..Default::default()
        };
        let b = batch(40, 140);
        let params = GatedGcnParams::init(&hyper, b.node_features.cols(), 2, &mut stream(0, &[])).expect("valid hyper");
        let model = GatedGcn::for_params(&params).expect("valid params");
        let id = format!("h{hidden}_l{layers}");
        group.bench_function(BenchmarkId::new("forward", &id), |bench| {
            bench.iter(|| {
                let mut tape = Tape::new();
                model
                    .forward(&mut tape, &params.values, &b, false, &mut stream(0, &[]))
                    .expect("forward")
            });
        });
        group.bench_function(BenchmarkId::new("loss_grad", &id), |bench| {
            bench.iter(|| model.loss_grad(&params.values, &[&b], true, &mut stream(0, &[])).expect("backward"));
        });
    }
    group.finish();
}

fn bench_meta_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("meta_step");
    group.sample_size(10);
    group.measurement_time(Duration::from_secs(5));
    let hyper = GnnHyper {
        hidden: 32,
        layers: 3,
        ..Default::default()
    };
    let b = batch(20, 60);
    let params = GatedGcnParams::init(&hyper, b.node_features.cols(), 2, &mut stream(0, &[])).expect("valid hyper");
    let model = GatedGcn::for_params(&params).expect("valid params");
    let cfg = MetaConfig {
        k_support: 2,
        m_query: 8,
        ..Default::default()
    };
    let tasks: Vec<TaskData<GraphBatch>> = (0..cfg.task_batch)
        .map(|i| TaskData {
            task_id: i,
            support: vec![b.clone(); cfg.k_support],
            query: vec![b.clone(); cfg.m_query],
        })
        .collect();
    group.bench_function("desk_h32_l3", |bench| {
        bench.iter_batched(
            || MetaTrainState::new(params.values.clone(), &cfg),
            |mut state| meta_step(&model, &mut state, &tasks, &cfg).expect("finite step"),
            criterion::BatchSize::SmallInput,
        );
    });
    group.finish();
}

criterion_group!(benches, bench_assignment, bench_gnn, bench_meta_step);
criterion_main!(benches);
