//! Sequential versus data-parallel execution of the hot kernels.
//!
//! Built without the `parallel` feature, both variants run sequentially.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use madi::agents::{Agent, Algorithm, AlgorithmSpec, Batch};
use madi::augment::random_shift;
use madi::config::HyperParams;
use madi::nets::layers::{Conv2d, Init};
use madi::nets::masker::apply_mask;
use madi::nets::{MaskHook, MaskerDef, NetConfig, ParamSet};
use madi::par::Exec;
use madi::rng::RngStream;
use madi::tensor::Tensor;

const EXECS: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn random(shape: &[usize], rng: &mut RngStream) -> Tensor<f32> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.uniform() as f32).collect()).unwrap()
}

fn conv(c: &mut Criterion) {
    let mut rng = RngStream::new(0);
    let layer = Conv2d::new("c", 32, 32, 3, 1, 0);
    let mut params = ParamSet::new();
    layer.init(&mut params, Init::He, &mut rng);
    let x = random(&[32, 32, 21, 21], &mut rng);
    let dy = random(&[32, 32, 19, 19], &mut rng);
    let mut g = c.benchmark_group("conv3x3_32ch_b32");
    for (name, exec) in EXECS {
        g.bench_function(BenchmarkId::new("forward", name), |b| {
            b.iter(|| black_box(layer.forward(exec, &params, &x)))
        });
        g.bench_function(BenchmarkId::new("backward", name), |b| {
            let mut grads = params.zeros_like();
            b.iter(|| black_box(layer.backward(exec, &params, &x, &dy, &mut grads, true)))
        });
    }
    g.finish();
}

fn masker(c: &mut Criterion) {
    let mut rng = RngStream::new(1);
    let mut def = MaskerDef::new(32);
    let params = def.init::<f32>(&mut rng);
    let obs = random(&[16, 9, 48, 48], &mut rng);
    let mut g = c.benchmark_group("apply_mask_b16_48px");
    g.sample_size(10);
    for (name, exec) in EXECS {
        def.exec = exec;
        g.bench_function(name, |b| {
            b.iter(|| black_box(apply_mask(&def, &params, &obs, MaskHook::Learned).unwrap()))
        });
    }
    g.finish();
}

fn shift(c: &mut Criterion) {
    let mut rng = RngStream::new(2);
    let obs = random(&[64, 9, 48, 48], &mut rng);
    let mut g = c.benchmark_group("random_shift_b64");
    for (name, exec) in EXECS {
        g.bench_function(name, |b| {
            let mut r = RngStream::new(3);
            b.iter(|| black_box(random_shift(exec, &obs, 4, &mut r).unwrap()))
        });
    }
    g.finish();
}

fn update(c: &mut Criterion) {
    let size = 32;
    let hp = HyperParams::default();
    let spec = AlgorithmSpec::new(Algorithm::Madi, size, size);
    let net = NetConfig {
        encoder_layers: 3,
        ..NetConfig::desk(hp.frame_stack, size, 2, true)
    };
    let mut rng = RngStream::new(4);
    let n = 16;
    let batch = Batch {
        obs: random(&[n, 9, size, size], &mut rng),
        action: Tensor::from_vec(&[n, 2], (0..2 * n).map(|_| rng.uniform_range(-1.0, 1.0) as f32).collect()).unwrap(),
        reward: (0..n).map(|_| rng.uniform() as f32).collect(),
        next_obs: random(&[n, 9, size, size], &mut rng),
        bootstrap: vec![true; n],
    };
    let mut g = c.benchmark_group("madi_update_b16_32px");
    g.sample_size(10);
    for (name, exec) in EXECS {
        let mut agent = Agent::<f32>::new(spec, hp.clone(), net.clone(), &mut RngStream::new(5)).unwrap();
        agent.set_exec(exec);
        let mut r = RngStream::new(6);
        let mut step = 0;
        g.bench_function(name, |b| {
            b.iter(|| {
                step += 1;
                black_box(agent.update(&batch, step, &mut r).unwrap())
            })
        });
    }
    g.finish();
}

criterion_group!(benches, conv, masker, shift, update);
criterion_main!(benches);
