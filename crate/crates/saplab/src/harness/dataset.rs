//! Synthetic Gaussian-anchor classification data.
//!
//! Each class owns one anchor point placed in the inner box [0.2, 0.8]^d
//! with a minimum pairwise separation; samples are the anchor plus isotropic
//! Gaussian noise, clipped to the [0, 1] data box. The geometry gives a
//! nearly perfect nearest-anchor classifier, so model accuracy measures the
//! model and not the data.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::attacks::{read_block, write_block};
use crate::error::{Error, Result};
use crate::gradcore::Tensor;
use crate::rng::{self, domain};

const ANCHOR_BOX: (f64, f64) = (0.2, 0.8);
const ANCHOR_MIN_DIST: f64 = 0.5;
const ANCHOR_MAX_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetParams {
    pub classes: usize,
    pub dim: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub sigma: f64,
}

impl Default for DatasetParams {
    fn default() -> Self {
        Self {
            classes: 10,
            dim: 32,
            n_train: 4000,
            n_test: 500,
            sigma: 0.06,
        }
    }
}

impl DatasetParams {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::Config("at least two classes required".into()));
        }
        if self.dim < 2 {
            return Err(Error::Config("at least two dimensions required".into()));
        }
        if self.n_train == 0 || self.n_test == 0 {
            return Err(Error::Config("both splits need at least one sample".into()));
        }
        if !self.sigma.is_finite() || self.sigma < 0.0 {
            return Err(Error::Config(format!(
                "sigma must be a finite non-negative real, got {}",
                self.sigma
            )));
        }
        Ok(())
    }
}

/// One split: inputs in [0,1]^dim and class labels, balanced within one
/// sample by round-robin assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub xs: Vec<Tensor>,
    pub ys: Vec<usize>,
}

/// Train and test splits drawn around one shared anchor set.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetPair {
    pub params: DatasetParams,
    pub seed: u64,
    pub anchors: Vec<Tensor>,
    pub train: SyntheticDataset,
    pub test: SyntheticDataset,
}

fn l2_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn place_anchors(seed: u64, params: &DatasetParams) -> Result<Vec<Tensor>> {
    let mut stream = rng::stream(&[seed, domain::ANCHORS]);
    let span = ANCHOR_BOX.1 - ANCHOR_BOX.0;
    let mut anchors: Vec<Vec<f64>> = Vec::with_capacity(params.classes);
    let mut attempts = 0usize;
    while anchors.len() < params.classes {
        if attempts >= ANCHOR_MAX_ATTEMPTS {
            return Err(Error::DataGeneration(format!(
                "placed only {} of {} anchors after {ANCHOR_MAX_ATTEMPTS} attempts; \
                 class count, the {ANCHOR_MIN_DIST} spacing, and the \
                 [{}, {}]^{} box conflict",
                anchors.len(),
                params.classes,
                ANCHOR_BOX.0,
                ANCHOR_BOX.1,
                params.dim
            )));
        }
        attempts += 1;
        let candidate: Vec<f64> = (0..params.dim)
            .map(|_| ANCHOR_BOX.0 + span * stream.random::<f64>())
            .collect();
        if anchors
            .iter()
            .all(|a| l2_distance(a, &candidate) >= ANCHOR_MIN_DIST)
        {
            anchors.push(candidate);
        }
    }
    Ok(anchors.into_iter().map(Tensor::vector).collect())
}

fn draw_split(
    anchors: &[Tensor],
    n: usize,
    sigma: f64,
    stream: &mut rand_chacha::ChaCha8Rng,
) -> SyntheticDataset {
    let classes = anchors.len();
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % classes;
        let anchor = anchors[class].data();
        let x: Vec<f64> = anchor
            .iter()
            .map(|&a| (a + sigma * stream.sample::<f64, _>(StandardNormal)).clamp(0.0, 1.0))
            .collect();
        xs.push(Tensor::vector(x));
        ys.push(class);
    }
    SyntheticDataset { xs, ys }
}

/// Generate both splits deterministically from the seed.
pub fn make_dataset(seed: u64, params: &DatasetParams) -> Result<DatasetPair> {
    params.validate()?;
    let anchors = place_anchors(seed, params)?;
    let mut train_stream = rng::stream(&[seed, domain::TRAIN_NOISE]);
    let train = draw_split(&anchors, params.n_train, params.sigma, &mut train_stream);
    let mut test_stream = rng::stream(&[seed, domain::TEST_NOISE]);
    let test = draw_split(&anchors, params.n_test, params.sigma, &mut test_stream);
    Ok(DatasetPair {
        params: params.clone(),
        seed,
        anchors,
        train,
        test,
    })
}

/// Label of the closest anchor, ties toward the lowest class index.
pub fn nearest_anchor_label(anchors: &[Tensor], x: &Tensor) -> usize {
    let mut best = 0usize;
    let mut best_dist = f64::INFINITY;
    for (c, anchor) in anchors.iter().enumerate() {
        let d = l2_distance(anchor.data(), x.data());
        if d < best_dist {
            best = c;
            best_dist = d;
        }
    }
    best
}

/// Accuracy of the nearest-anchor classifier on one split; the ceiling any
/// trained model is measured against.
pub fn nearest_anchor_accuracy(anchors: &[Tensor], split: &SyntheticDataset) -> f64 {
    let correct = split
        .xs
        .iter()
        .zip(&split.ys)
        .filter(|(x, &y)| nearest_anchor_label(anchors, x) == y)
        .count();
    correct as f64 / split.xs.len() as f64
}

#[derive(Serialize, Deserialize)]
struct DatasetHeader {
    anchors: Vec<Vec<f64>>,
    params: DatasetParams,
    seed: u64,
    splits: Vec<String>,
}

/// Dataset file: one JSON header line, then one binary sample block per
/// split (train first), in the adversarial-dump layout with every target
/// slot marked untargeted.
pub fn save_dataset(pair: &DatasetPair, path: &Path) -> Result<()> {
    let label = path.display().to_string();
    let header = DatasetHeader {
        anchors: pair.anchors.iter().map(|a| a.data().to_vec()).collect(),
        params: pair.params.clone(),
        seed: pair.seed,
        splits: vec!["train".into(), "test".into()],
    };
    let mut w = BufWriter::new(File::create(path).map_err(|e| Error::file(path, e))?);
    let json = serde_json::to_string(&serde_json::to_value(&header)?)?;
    w.write_all(json.as_bytes())?;
    w.write_all(b"\n")?;
    for split in [&pair.train, &pair.test] {
        let targets = vec![None; split.xs.len()];
        write_block(&mut w, &split.xs, &split.ys, &targets, &label)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<DatasetPair> {
    let label = path.display().to_string();
    let mut r = BufReader::new(File::open(path).map_err(|e| Error::file(path, e))?);
    let mut header_line = String::new();
    r.read_line(&mut header_line)?;
    let header: DatasetHeader = serde_json::from_str(header_line.trim_end()).map_err(|e| {
        Error::Format {
            path: label.clone(),
            reason: format!("bad dataset header: {e}"),
        }
    })?;
    if header.splits != ["train", "test"] {
        return Err(Error::Format {
            path: label,
            reason: format!("unexpected split list {:?}", header.splits),
        });
    }
    let mut splits = Vec::with_capacity(2);
    for expected_n in [header.params.n_train, header.params.n_test] {
        let block = read_block(&mut r, &label)?;
        if block.samples.len() != expected_n {
            return Err(Error::Format {
                path: label,
                reason: format!(
                    "split holds {} samples, header promises {expected_n}",
                    block.samples.len()
                ),
            });
        }
        if block.targets.iter().any(|t| t.is_some()) {
            return Err(Error::Format {
                path: label,
                reason: "dataset blocks must not carry target labels".into(),
            });
        }
        splits.push(SyntheticDataset {
            xs: block.samples,
            ys: block.true_labels,
        });
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format {
            path: label,
            reason: "trailing bytes after the last split".into(),
        });
    }
    let test = splits.pop().expect("two splits read");
    let train = splits.pop().expect("two splits read");
    Ok(DatasetPair {
        params: header.params,
        seed: header.seed,
        anchors: header.anchors.into_iter().map(Tensor::vector).collect(),
        train,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_params() -> DatasetParams {
        DatasetParams {
            classes: 4,
            dim: 8,
            n_train: 30,
            n_test: 17,
            sigma: 0.05,
        }
    }

    #[test]
    fn generation_is_deterministic_bitwise() {
        let a = make_dataset(5, &small_params()).unwrap();
        let b = make_dataset(5, &small_params()).unwrap();
        assert_eq!(a, b);
        let c = make_dataset(6, &small_params()).unwrap();
        assert_ne!(a.anchors, c.anchors);
    }

    #[test]
    fn anchors_respect_box_and_spacing() {
        let pair = make_dataset(7, &small_params()).unwrap();
        for anchor in &pair.anchors {
            for &v in anchor.data() {
                assert!((ANCHOR_BOX.0..=ANCHOR_BOX.1).contains(&v));
            }
        }
        for i in 0..pair.anchors.len() {
            for j in i + 1..pair.anchors.len() {
                let d = l2_distance(pair.anchors[i].data(), pair.anchors[j].data());
                assert!(d >= ANCHOR_MIN_DIST, "anchors {i},{j} only {d} apart");
            }
        }
    }

    #[test]
    fn samples_stay_in_the_unit_box_and_classes_balance() {
        let pair = make_dataset(8, &small_params()).unwrap();
        let mut counts = vec![0usize; 4];
        for (x, &y) in pair.test.xs.iter().zip(&pair.test.ys) {
            assert!(x.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
            counts[y] += 1;
        }
        let (min, max) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
        assert!(max - min <= 1, "imbalanced counts {counts:?}");
    }

    #[test]
    fn noiseless_two_class_data_is_perfectly_separable() {
        let params = DatasetParams {
            classes: 2,
            dim: 4,
            n_train: 20,
            n_test: 20,
            sigma: 0.0,
        };
        let pair = make_dataset(9, &params).unwrap();
        assert_eq!(nearest_anchor_accuracy(&pair.anchors, &pair.test), 1.0);
        for (x, &y) in pair.test.xs.iter().zip(&pair.test.ys) {
            assert_eq!(x.data(), pair.anchors[y].data());
        }
    }

    #[test]
    fn reference_geometry_leaves_little_anchor_confusion() {
        let pair = make_dataset(10, &DatasetParams::default()).unwrap();
        assert!(nearest_anchor_accuracy(&pair.anchors, &pair.test) >= 0.97);
    }

    #[test]
    fn impossible_anchor_packing_reports_generation_failure() {
        let params = DatasetParams {
            classes: 50,
            dim: 2,
            n_train: 10,
            n_test: 10,
            sigma: 0.01,
        };
        assert!(matches!(
            make_dataset(11, &params),
            Err(Error::DataGeneration(_))
        ));
    }

    #[test]
    fn dataset_file_roundtrips_bitwise() {
        let pair = make_dataset(12, &small_params()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.sapx");
        save_dataset(&pair, &path).unwrap();
        let loaded = load_dataset(&path).unwrap();
        assert_eq!(pair, loaded);
    }

    #[test]
    fn dataset_header_is_the_first_line_and_json() {
        let pair = make_dataset(13, &small_params()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.sapx");
        save_dataset(&pair, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let newline = bytes.iter().position(|&b| b == b'\n').unwrap();
        let header: serde_json::Value =
            serde_json::from_slice(&bytes[..newline]).unwrap();
        assert_eq!(header["params"]["classes"], 4);
        assert_eq!(&bytes[newline + 1..newline + 5], b"SAPX");
    }
}
