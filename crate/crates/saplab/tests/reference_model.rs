//! Behavior of the committed reference benchmark: training quality, the
//! near-identity operating point of a very high r multiplier, the noise
//! reduction from vote averaging, and the attack-budget calibration that the
//! erratum grid depends on.

use std::sync::OnceLock;

use saplab::attacks::{
    pgd, AttackConfig, AttackGoal, CleanPredictor, DefendedPredictor, Predictor, VanillaOracle,
};
use saplab::gradcore::{forward, Network, Tensor};
use saplab::harness::{make_dataset, reference_config, DatasetPair, ExperimentConfig};
use saplab::mlp::{accuracy, init_network, predict_clean, train, TrainLog};
use saplab::sap::{averaged_predict_k, sap_forward, SapConfig, Scheme};

const SEED: u64 = 42;

struct Reference {
    cfg: ExperimentConfig,
    data: DatasetPair,
    net: Network,
    log: TrainLog,
    test_accuracy: f64,
}

static REFERENCE: OnceLock<Reference> = OnceLock::new();

fn reference() -> &'static Reference {
    REFERENCE.get_or_init(|| {
        let cfg = reference_config(SEED);
        let data = make_dataset(cfg.dataset_seed, &cfg.dataset).expect("dataset");
        let mut net = init_network(&cfg.model).expect("init");
        let log = train(&mut net, &data.train.xs, &data.train.ys, &cfg.train).expect("train");
        let test_accuracy = accuracy(&net, &data.test.xs, &data.test.ys).expect("accuracy");
        Reference {
            cfg,
            data,
            net,
            log,
            test_accuracy,
        }
    })
}

/// The defense seed the reference grid wires into every defended cell.
fn defense_seed(cfg: &ExperimentConfig) -> u64 {
    cfg.cells
        .iter()
        .find_map(|c| c.sap.as_ref())
        .expect("reference grid has defended cells")
        .seed
}

fn defense(cfg: &ExperimentConfig, r_multiplier: f64, passes: usize) -> SapConfig {
    SapConfig {
        r_multiplier,
        scheme: Scheme::Multinomial,
        passes,
        seed: defense_seed(cfg),
    }
}

#[test]
fn training_reaches_the_reference_floor() {
    let r = reference();
    assert!(
        r.test_accuracy >= 0.95,
        "reference net reached only {:.3} test accuracy",
        r.test_accuracy
    );
    let train_accuracy = accuracy(&r.net, &r.data.train.xs, &r.data.train.ys).unwrap();
    assert!(
        train_accuracy >= r.test_accuracy - 0.02,
        "train accuracy {train_accuracy:.3} fell below test accuracy {:.3}",
        r.test_accuracy
    );
}

#[test]
fn training_loss_decreases_when_smoothed() {
    let r = reference();
    let loss = &r.log.epoch_loss;
    assert!(loss.len() >= 5, "reference schedule trains multiple epochs");
    let window = 3;
    let smooth: Vec<f64> = loss
        .windows(window)
        .map(|w| w.iter().sum::<f64>() / window as f64)
        .collect();
    for (i, pair) in smooth.windows(2).enumerate() {
        assert!(
            pair[1] <= pair[0] + 1e-6,
            "smoothed loss rose from {} to {} at epoch {}",
            pair[0],
            pair[1],
            i
        );
    }
    assert!(
        *loss.last().unwrap() < 0.5 * loss[0],
        "training barely moved: first {} last {}",
        loss[0],
        loss.last().unwrap()
    );
}

/// The attack budget is calibrated so a white-box attack on the undefended
/// net is near-certain; every defended gap in the grid is measured against
/// this ceiling.
#[test]
fn white_box_budget_breaks_the_undefended_net() {
    let r = reference();
    let oracle = VanillaOracle::new(&r.net);
    let judge = CleanPredictor::new(&r.net);
    let cfg = AttackConfig::default();
    let mut successes = 0usize;
    let n = r.data.test.xs.len();
    for i in 0..n {
        let goal = AttackGoal::Untargeted {
            label: r.data.test.ys[i],
        };
        let out = pgd(&oracle, &judge, &r.data.test.xs[i], goal, &cfg, i as u64).unwrap();
        successes += out.success as usize;
    }
    let rate = successes as f64 / n as f64;
    assert!(
        rate > 0.95,
        "white-box success {rate:.3} leaves the budget under-calibrated"
    );
}

/// At r_multiplier 50 nearly every unit survives with keep probability one,
/// so the defended decision should collapse onto the clean one.
#[test]
fn huge_r_multiplier_agrees_with_the_clean_labels() {
    let r = reference();
    let cfg = defense(&r.cfg, 50.0, 10);
    let mut agree = 0usize;
    let n = r.data.test.xs.len();
    for i in 0..n {
        let clean = predict_clean(&r.net, &r.data.test.xs[i]).unwrap().0;
        let defended = averaged_predict_k(&r.net, &r.data.test.xs[i], &cfg, i as u64, 10)
            .unwrap()
            .0;
        agree += (clean == defended) as usize;
    }
    let rate = agree as f64 / n as f64;
    assert!(
        rate >= 0.99,
        "r=50x agreement with clean labels was only {rate:.3}"
    );
}

#[test]
fn huge_r_multiplier_logits_stay_within_one_percent() {
    let r = reference();
    let cfg = defense(&r.cfg, 50.0, 1);
    for i in 0..20 {
        let x = &r.data.test.xs[i];
        let clean = forward(&r.net, x).unwrap().0;
        let sap = sap_forward(&r.net, x, &cfg, i as u64, 0).unwrap().logits;
        let diff: f64 = clean
            .data()
            .iter()
            .zip(sap.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let norm: f64 = clean.data().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(
            diff / norm < 0.01,
            "example {i}: single-pass relative logit error {:.4}",
            diff / norm
        );
    }
}

/// Averaging K=100 stochastic passes should shrink the per-class probability
/// noise by about sqrt(K), i.e. a std ratio near 0.1. Measured at the
/// midpoint of two anchors: confident points carry only rare-spike noise,
/// whose sample std is too heavy-tailed to estimate from a few hundred
/// draws, while the midpoint's dominant classes fluctuate continuously.
#[test]
fn vote_averaging_shrinks_noise_by_about_sqrt_k() {
    let r = reference();
    let cfg = defense(&r.cfg, 1.0, 100);
    let mid: Vec<f64> = r.data.anchors[0]
        .data()
        .iter()
        .zip(r.data.anchors[1].data())
        .map(|(a, b)| 0.5 * (a + b))
        .collect();
    let x = Tensor::vector(mid);
    let classes = r.cfg.model.classes();
    let reps = 300;
    let mut single = vec![Vec::with_capacity(reps); classes];
    let mut averaged = vec![Vec::with_capacity(reps); classes];
    for rep in 0..reps {
        let one = averaged_predict_k(&r.net, &x, &cfg, rep as u64, 1).unwrap().1;
        let many = averaged_predict_k(&r.net, &x, &cfg, rep as u64, 100).unwrap().1;
        for c in 0..classes {
            single[c].push(one[c]);
            averaged[c].push(many[c]);
        }
    }
    let std = |v: &[f64]| {
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        (v.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
    };
    let mut checked = 0usize;
    for c in 0..classes {
        let s = std(&single[c]);
        if s < 0.1 {
            continue;
        }
        let ratio = std(&averaged[c]) / s;
        assert!(
            (0.07..=0.15).contains(&ratio),
            "class {c}: std ratio {ratio:.4} outside the sqrt(K) band"
        );
        checked += 1;
    }
    assert!(checked > 0, "no class carried measurable single-pass noise");
}

/// With the defense at a near-identity operating point, judging transferred
/// examples on it should look just like judging them on the clean net.
#[test]
fn transfer_against_a_vacuous_defense_matches_white_box() {
    let r = reference();
    let oracle = VanillaOracle::new(&r.net);
    let source_judge = CleanPredictor::new(&r.net);
    let sap = defense(&r.cfg, 50.0, 10);
    let defended = DefendedPredictor::new(&r.net, &sap, 10).unwrap();
    let cfg = AttackConfig::default();
    let n = 200usize;
    let mut white_box = 0usize;
    let mut transferred = 0usize;
    for i in 0..n {
        let y = r.data.test.ys[i];
        let goal = AttackGoal::Untargeted { label: y };
        let out = pgd(&oracle, &source_judge, &r.data.test.xs[i], goal, &cfg, i as u64).unwrap();
        white_box += out.success as usize;
        let label = defended.predict(&out.x_adv, i as u64).unwrap();
        transferred += (label != y) as usize;
    }
    let gap = (white_box as f64 - transferred as f64).abs() / n as f64;
    assert!(
        gap <= 0.03,
        "transfer to a 50x-defended judge drifted {gap:.3} from white-box"
    );
}

/// A zero-radius attack cannot move the input, so its transfer success rate
/// is exactly the defended model's clean error rate on the same points.
#[test]
fn zero_radius_transfer_equals_defended_clean_error() {
    let r = reference();
    let oracle = VanillaOracle::new(&r.net);
    let source_judge = CleanPredictor::new(&r.net);
    let sap = defense(&r.cfg, 1.0, 10);
    let defended = DefendedPredictor::new(&r.net, &sap, 10).unwrap();
    let cfg = AttackConfig {
        epsilon: 0.0,
        iterations: 1,
        ..AttackConfig::default()
    };
    let n = 100usize;
    let mut success = 0usize;
    let mut clean_errors = 0usize;
    for i in 0..n {
        let y = r.data.test.ys[i];
        let x = &r.data.test.xs[i];
        let goal = AttackGoal::Untargeted { label: y };
        let out = pgd(&oracle, &source_judge, x, goal, &cfg, i as u64).unwrap();
        assert_eq!(out.x_adv.data(), x.data(), "zero radius must not move x");
        let label = defended.predict(&out.x_adv, i as u64).unwrap();
        success += (label != y) as usize;
        clean_errors += (defended.predict(x, i as u64).unwrap() != y) as usize;
    }
    assert_eq!(
        success, clean_errors,
        "zero-radius transfer success must equal defended clean error"
    );
}
