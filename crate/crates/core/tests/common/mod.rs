#![allow(dead_code)]

use acmca::{Graph, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-6;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// `|a − n| ≤ rtol·max(|a|, |n|) + 1e-8`.
pub fn close(analytic: f64, numeric: f64, rtol: f64) -> bool {
    (analytic - numeric).abs() <= rtol * analytic.abs().max(numeric.abs()) + 1e-8
}

/// Contracts an arbitrary tensor to a scalar with fixed random weights so
/// every output element receives a distinct upstream gradient.
pub fn project_to_scalar(g: &mut Graph, out: Var, seed: u64) -> Var {
    let n = g.value(out).len();
    let mut r = rng(seed ^ 0x5eed);
    let w = g.constant(random_tensor(&mut r, &[n, 1]));
    let flat = g.reshape(out, &[1, n]).unwrap();
    let y = g.matmul(flat, w).unwrap();
    g.sum(y)
}

/// Compares reverse-mode gradients of `f` w.r.t. every element of every input
/// against central finite differences.
pub fn check_gradients<F>(inputs: &[Tensor], f: F, rtol: f64) -> Result<(), String>
where
    F: Fn(&mut Graph, &[Var]) -> Var,
{
    let eval = |values: &[Tensor]| -> f64 {
        let mut g = Graph::new();
        let vars: Vec<Var> = values.iter().map(|t| g.leaf(t.clone())).collect();
        let loss = f(&mut g, &vars);
        g.value(loss).data()[0]
    };
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone().with_grad())).collect();
    let loss = f(&mut g, &vars);
    g.backward(loss).map_err(|e| e.to_string())?;
    for (k, v) in vars.iter().enumerate() {
        let analytic = g.grad(*v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; inputs[k].len()]);
        for i in 0..inputs[k].len() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[i] += FD_STEP;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[i] -= FD_STEP;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * FD_STEP);
            if !close(analytic[i], numeric, rtol) {
                return Err(format!(
                    "input {k} element {i}: analytic {} vs numeric {numeric}",
                    analytic[i]
                ));
            }
        }
    }
    Ok(())
}

pub fn random_batch(rng: &mut ChaCha8Rng, b: usize, widths: acmca::model::InputWidths) -> acmca::data::ModalBatch {
    let ids = (0..b).map(|i| format!("s{i}")).collect();
    let labels = (0..b).map(|i| i % 3).collect();
    acmca::data::ModalBatch::new(
        ids,
        random_tensor(rng, &[b, widths.clinical]),
        random_tensor(rng, &[b, widths.genetic]),
        random_tensor(rng, &[b, widths.mri]),
        random_tensor(rng, &[b, widths.pet]),
        labels,
    )
    .unwrap()
}

pub const SMALL_WIDTHS: acmca::model::InputWidths =
    acmca::model::InputWidths { clinical: 7, genetic: 6, mri: 5, pet: 5 };

/// 16 features as 4 tokens of width 4, with narrow hidden layers.
pub fn small_config() -> acmca::model::ModelConfig {
    acmca::model::ModelConfig {
        feature_dim: 16,
        n_tokens: 4,
        encoder_hidden: 8,
        classifier_hidden: vec![8, 6],
        ..Default::default()
    }
}

/// Nearest-centroid classifier (Euclidean) fitted on `train`, scored on `test`.
pub fn nearest_centroid_accuracy(
    train: &[Vec<f64>],
    train_labels: &[usize],
    test: &[Vec<f64>],
    test_labels: &[usize],
) -> f64 {
    let width = train[0].len();
    let mut centroids = vec![vec![0.0; width]; 3];
    let mut counts = [0usize; 3];
    for (row, &y) in train.iter().zip(train_labels) {
        counts[y] += 1;
        for (c, v) in centroids[y].iter_mut().zip(row) {
            *c += v;
        }
    }
    for (c, n) in centroids.iter_mut().zip(counts) {
        c.iter_mut().for_each(|v| *v /= n.max(1) as f64);
    }
    let correct = test
        .iter()
        .zip(test_labels)
        .filter(|(row, &y)| {
            let dist = |c: &Vec<f64>| c.iter().zip(row.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            let best = (0..3).min_by(|&a, &b| dist(&centroids[a]).total_cmp(&dist(&centroids[b]))).unwrap();
            best == y
        })
        .count();
    correct as f64 / test.len() as f64
}

/// Prepares a synthetic cohort, splits it 80/20 and scores nearest-centroid
/// on the concatenated (clinical-standardized) modality vectors.
pub fn synthetic_centroid_accuracy(spec: &acmca::data::SynthSpec) -> f64 {
    use acmca::data::{prepare_cohort, split_stratified, standardize_clinical, synth_cohort, PrepareOptions};
    let cohort = prepare_cohort(&synth_cohort(spec).unwrap(), &PrepareOptions::default()).unwrap();
    let (tr, te) = split_stratified(&cohort.batch.labels, 0.2, spec.seed).unwrap();
    let mut train = cohort.batch.select(&tr).unwrap();
    let mut test = cohort.batch.select(&te).unwrap();
    standardize_clinical(&mut train, &mut test).unwrap();
    nearest_centroid_accuracy(&train.concatenated_rows(), &train.labels, &test.concatenated_rows(), &test.labels)
}

/// Small synthetic split: 20 subjects per class, 8-wide imaging vectors.
pub fn small_dataset(seed: u64, separation: f64) -> acmca::experiment::Dataset {
    use acmca::data::{PrepareOptions, SynthSpec};
    use acmca::experiment::{build_dataset, DataSource};
    let spec = SynthSpec { n_per_class: 20, snp_count: 60, img_width: 8, class_separation: separation, ..Default::default() };
    let prepare = PrepareOptions { top_k_snps: 20, ..Default::default() };
    build_dataset(&DataSource::Synthetic(spec), &prepare, 0.25, seed).unwrap()
}

/// Quick training settings on a 16-wide feature space.
pub fn quick_train_config(epochs: usize) -> acmca::train::TrainConfig {
    acmca::train::TrainConfig { epochs, batch_size: 16, feature_dim: 16, learning_rate: 3e-3, ..Default::default() }
}
