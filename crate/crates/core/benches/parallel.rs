//! Sequential against rayon-parallel execution of the data-parallel paths.
//!
//! Without the `parallel` feature both variants run sequentially.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ssgn_core::exec::Exec;
use ssgn_core::graph::{PruneConfig, SceneGraph, SparsityToggles};
use ssgn_core::model::Ssgn;
use ssgn_core::neural::{Gradients, Tape};
use ssgn_core::scene::{synth_dataset, synth_generate_with, Split, SplitRatios, SynthSpec};
use ssgn_core::training::{example_loss, prepare, Experiment, PgMode, Vocabs};

const MODES: [(&str, Exec); 2] = [
    ("sequential", Exec::Sequential),
    ("parallel", Exec::Parallel),
];

fn synth(c: &mut Criterion) {
    let spec = SynthSpec {
        scenes: 200,
        ..SynthSpec::default()
    };
    let mut g = c.benchmark_group("synth_200");
    for (name, exec) in MODES {
        g.bench_function(name, |b| {
            b.iter(|| synth_generate_with(black_box(1), &spec, exec).unwrap())
        });
    }
    g.finish();
}

fn prune(c: &mut Criterion) {
    let spec = SynthSpec {
        scenes: 1000,
        ..SynthSpec::default()
    };
    let scenes = synth_generate_with(2, &spec, Exec::Parallel).unwrap();
    let cfg = PruneConfig::default();
    let mut g = c.benchmark_group("prune_1000");
    for (name, exec) in MODES {
        g.bench_function(name, |b| {
            b.iter(|| {
                exec.try_map_range(scenes.len(), |i| {
                    SceneGraph::build(&scenes[i], &cfg, SparsityToggles::default())
                })
                .unwrap()
            })
        });
    }
    g.finish();
}

fn batch_gradients(c: &mut Criterion) {
    let spec = SynthSpec {
        scenes: 40,
        splits: SplitRatios {
            train: 1.0,
            val: 0.0,
            test: 0.0,
        },
        ..SynthSpec::default()
    };
    let ds = synth_dataset(3, &spec, Exec::Parallel).unwrap();
    let experiment = Experiment::default();
    let vocabs = Vocabs::build(&ds);
    let split = prepare(&ds, Split::Train, &vocabs, &experiment, Exec::Parallel).unwrap();
    let dims = ssgn_core::model::ModelDims {
        question_vocab: vocabs.question.len(),
        answer_vocab: vocabs.answer.len(),
        object_feature: spec.feature_dim,
        token_feature: spec.feature_dim,
    };
    let (model, store) = Ssgn::new(experiment.model, dims, 0).unwrap();
    let mut g = c.benchmark_group("batch_gradients");
    g.sample_size(10);
    for batch in [8usize, 16] {
        for (name, exec) in MODES {
            g.bench_with_input(BenchmarkId::new(name, batch), &batch, |b, &batch| {
                b.iter(|| {
                    let per_example = exec.map_range(batch, |k| {
                        let ex = &split.examples[k % split.examples.len()];
                        let mut tape = Tape::new(&store);
                        let l = example_loss(
                            &model,
                            &mut tape,
                            &split,
                            ex,
                            &vocabs,
                            1.0,
                            PgMode::Greedy,
                        )
                        .unwrap();
                        tape.backward(l.total)
                    });
                    let mut sum = Gradients::zeros_like(&store);
                    for grads in &per_example {
                        sum.add_assign(grads);
                    }
                    sum
                })
            });
        }
    }
    g.finish();
}

criterion_group!(benches, synth, prune, batch_gradients);
criterion_main!(benches);
