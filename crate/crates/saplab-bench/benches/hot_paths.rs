//! Throughput of the paths the experiment grid spends its time in: stochastic
//! forward passes, vote averaging, oracle gradients, and short attack runs.
//! The network is reference-shaped and briefly trained so the attack starts
//! from a correctly classified point and walks its full iteration budget.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use saplab::attacks::{
    pgd, AttackConfig, AttackGoal, BpdaOracle, CleanPredictor, DefendedPredictor,
    GradientOracle, OracleKind, ThroughSapOracle, VanillaOracle,
};
use saplab::gradcore::Network;
use saplab::harness::{make_dataset, DatasetParams};
use saplab::mlp::{init_network, predict_clean, train, MlpSpec, TrainConfig};
use saplab::sap::{
    averaged_predict_k, keep_prob, retention_probs, sample_mask, sap_forward, SapConfig,
    Scheme,
};
use saplab::{rng, Tensor};

struct Fixture {
    net: Network,
    x: Tensor,
    label: usize,
    sap: SapConfig,
}

fn fixture() -> Fixture {
    let params = DatasetParams {
        classes: 10,
        dim: 32,
        n_train: 200,
        n_test: 20,
        sigma: 0.06,
    };
    let data = make_dataset(1, &params).expect("dataset");
    let mut net = init_network(&MlpSpec {
        widths: vec![32, 128, 128, 10],
        init_seed: 2,
    })
    .expect("network");
    train(
        &mut net,
        &data.train.xs,
        &data.train.ys,
        &TrainConfig {
            learning_rate: 0.1,
            epochs: 10,
            batch_size: 16,
            shuffle_seed: 5,
        },
    )
    .expect("training");
    let idx = (0..data.test.xs.len())
        .find(|&i| {
            predict_clean(&net, &data.test.xs[i]).expect("forward").0 == data.test.ys[i]
        })
        .expect("a correctly classified test point");
    Fixture {
        x: data.test.xs[idx].clone(),
        label: data.test.ys[idx],
        net,
        sap: SapConfig {
            r_multiplier: 1.0,
            scheme: Scheme::Multinomial,
            passes: 100,
            seed: 3,
        },
    }
}

fn bench_pruning(c: &mut Criterion) {
    let mut stream = rng::stream(&[4]);
    let h: Vec<f64> = (0..128).map(|i| ((i * 37 % 128) as f64 - 64.0) / 64.0).collect();
    let probs = retention_probs(&h).expect("nonzero activations");

    let mut g = c.benchmark_group("pruning");
    g.bench_function("keep_prob_width_128", |b| {
        b.iter(|| keep_prob(black_box(&probs), black_box(128.0)))
    });
    g.bench_function("multinomial_mask_width_128", |b| {
        b.iter(|| sample_mask(black_box(&probs), 128, Scheme::Multinomial, &mut stream))
    });
    g.bench_function("binomial_mask_width_128", |b| {
        b.iter(|| sample_mask(black_box(&probs), 128, Scheme::Binomial, &mut stream))
    });
    g.finish();
}

fn bench_forward(c: &mut Criterion) {
    let f = fixture();

    let mut g = c.benchmark_group("forward");
    g.bench_function("clean", |b| {
        b.iter(|| predict_clean(black_box(&f.net), black_box(&f.x)).unwrap())
    });
    g.bench_function("sap_single_pass", |b| {
        let mut pass = 0u64;
        b.iter(|| {
            pass += 1;
            sap_forward(black_box(&f.net), black_box(&f.x), &f.sap, 0, pass).unwrap()
        })
    });
    g.bench_function("averaged_vote_k100", |b| {
        b.iter(|| averaged_predict_k(black_box(&f.net), black_box(&f.x), &f.sap, 0, 100).unwrap())
    });
    g.finish();
}

fn bench_gradients(c: &mut Criterion) {
    let f = fixture();
    let vanilla = VanillaOracle::new(&f.net);
    let bpda = BpdaOracle::new(&f.net);
    let through = ThroughSapOracle::new(&f.net, &f.sap, 1).expect("oracle");

    let mut g = c.benchmark_group("gradients");
    g.bench_function("vanilla", |b| {
        let mut step = 0u64;
        b.iter(|| {
            step += 1;
            vanilla.loss_gradient(black_box(&f.x), f.label, 0, step).unwrap()
        })
    });
    g.bench_function("bpda", |b| {
        let mut step = 0u64;
        b.iter(|| {
            step += 1;
            bpda.loss_gradient(black_box(&f.x), f.label, 0, step).unwrap()
        })
    });
    g.bench_function("through_sap_eot1", |b| {
        let mut step = 0u64;
        b.iter(|| {
            step += 1;
            through.loss_gradient(black_box(&f.x), f.label, 0, step).unwrap()
        })
    });
    g.finish();
}

fn bench_attack(c: &mut Criterion) {
    let f = fixture();
    let cfg = AttackConfig {
        iterations: 10,
        eval_every: 10,
        eval_passes: 10,
        ..AttackConfig::default()
    };
    let vanilla = VanillaOracle::new(&f.net);
    let clean_judge = CleanPredictor::new(&f.net);
    let bpda = BpdaOracle::new(&f.net);
    let defended_judge = DefendedPredictor::new(&f.net, &f.sap, 10).expect("judge");
    let bpda_cfg = AttackConfig {
        oracle: OracleKind::Bpda,
        ..cfg.clone()
    };

    let mut g = c.benchmark_group("attack");
    g.sample_size(20);
    g.bench_function("pgd_vanilla_10_iters", |b| {
        b.iter(|| {
            pgd(
                &vanilla,
                &clean_judge,
                black_box(&f.x),
                AttackGoal::Untargeted { label: f.label },
                &cfg,
                0,
            )
            .unwrap()
        })
    });
    g.bench_function("pgd_bpda_judged_by_10_votes_10_iters", |b| {
        b.iter(|| {
            pgd(
                &bpda,
                &defended_judge,
                black_box(&f.x),
                AttackGoal::Untargeted { label: f.label },
                &bpda_cfg,
                0,
            )
            .unwrap()
        })
    });
    g.finish();
}

criterion_group!(
    benches,
    bench_pruning,
    bench_forward,
    bench_gradients,
    bench_attack
);
criterion_main!(benches);
