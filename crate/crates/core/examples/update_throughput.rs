//! Times agent updates at the desk configuration and projects the wall
//! clock of a full run. Usage: `update_throughput [algorithm...] [--updates N]`.

use std::time::Instant;

use madi::agents::{Agent, Algorithm, Batch};
use madi::harness::RunConfig;
use madi::rng::RngStream;
use madi::tensor::Tensor;

fn random(shape: &[usize], rng: &mut RngStream) -> Tensor<f32> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.uniform() as f32).collect()).unwrap()
}

fn main() {
    let mut args: Vec<String> = std::env::args().skip(1).collect();
    let mut updates = 3;
    if let Some(i) = args.iter().position(|a| a == "--updates") {
        updates = args[i + 1].parse().expect("--updates takes a count");
        args.drain(i..i + 2);
    }
    let algorithms: Vec<Algorithm> = if args.is_empty() {
        vec![Algorithm::Sac, Algorithm::Madi]
    } else {
        args.iter().map(|a| a.parse().expect("algorithm name")).collect()
    };
    for algorithm in algorithms {
        let mut cfg = RunConfig::default();
        cfg.algorithm = algorithm;
        let hp = cfg.hp.clone();
        let mut agent = Agent::<f32>::new(cfg.algorithm_spec(), hp.clone(), cfg.net_config(), &mut RngStream::new(0))
            .expect("desk config is valid");
        agent.set_exec(cfg.exec());
        let (h, w) = cfg.env_spec().render_size();
        let c = 3 * hp.frame_stack;
        let n = hp.batch_size;
        let mut rng = RngStream::new(1);
        let batch = Batch {
            obs: random(&[n, c, h, w], &mut rng),
            action: random(&[n, 2], &mut rng),
            reward: (0..n).map(|_| rng.uniform() as f32).collect(),
            next_obs: random(&[n, c, h, w], &mut rng),
            bootstrap: vec![true; n],
        };
        let start = Instant::now();
        for step in 1..=updates {
            agent.update(&batch, step, &mut rng).expect("update");
        }
        let per = start.elapsed().as_secs_f64() / updates as f64;
        let run_updates = hp.total_steps.saturating_sub(hp.init_steps);
        println!(
            "{algorithm}: {per:.3} s/update at batch {n}, {h}x{w}; {run_updates} updates ~ {:.1} h per run",
            per * run_updates as f64 / 3600.0
        );
    }
}
