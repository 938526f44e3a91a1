//! Linear evaluation of frozen encoders: repeated stratified k-fold
//! cross-validation of a multinomial logistic-regression probe.

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::encoder::ModelParams;
use crate::error::{Error, Result};
use crate::graph::{batch_graphs, Dataset};
use crate::rng::stream;
use crate::tensor::{Tape, Tensor};

const EMBED_CHUNK: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbeConfig {
    pub folds: usize,
    pub repeats: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    /// Standardise each embedding column with train-fold statistics.
    pub standardize: bool,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            folds: 10,
            repeats: 5,
            epochs: 200,
            learning_rate: 0.01,
            l2: 1e-3,
            standardize: true,
            seed: 0,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 || self.repeats < 1 {
            return Err(Error::invalid(format!(
                "need folds >= 2 and repeats >= 1, got {} and {}",
                self.folds, self.repeats
            )));
        }
        if !(self.learning_rate > 0.0) || !(self.l2 >= 0.0) {
            return Err(Error::invalid("probe learning rate must be positive and l2 non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub accuracy_mean: f64,
    /// Population standard deviation over repeats.
    pub accuracy_std: f64,
    pub repeat_accuracies: Vec<f64>,
}

impl EvalReport {
    pub fn from_repeats(repeat_accuracies: Vec<f64>) -> Self {
        let n = repeat_accuracies.len() as f64;
        let mean = repeat_accuracies.iter().sum::<f64>() / n;
        let var = repeat_accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
        Self {
            accuracy_mean: mean,
            accuracy_std: var.sqrt(),
            repeat_accuracies,
        }
    }
}

/// Pre-projection embeddings for every graph, in dataset order.
pub fn embed_all(params: &ModelParams, dataset: &Dataset) -> Result<Tensor> {
    if dataset.feature_dim() != params.feature_dim() {
        return Err(Error::shape(
            "embed_all",
            &[dataset.len(), dataset.feature_dim()],
            &[dataset.len(), params.feature_dim()],
        ));
    }
    let chunks = dataset
        .graphs()
        .par_chunks(EMBED_CHUNK)
        .map(|chunk| params.encode(&batch_graphs(chunk)?))
        .collect::<Result<Vec<_>>>()?;
    let cols = params.config().hidden_dim;
    let data = chunks.into_iter().flat_map(Tensor::into_data).collect();
    Tensor::new(vec![dataset.len(), cols], data)
}

/// Fold index per sample. Each class is shuffled and dealt round-robin,
/// continuing where the previous class stopped, so per-class fold counts
/// differ by at most one and fold sizes stay balanced.
pub fn stratified_folds(labels: &[usize], folds: usize, seed: u64, repeat: usize) -> Result<Vec<usize>> {
    if folds < 2 || labels.len() < folds {
        return Err(Error::invalid(format!(
            "cannot split {} samples into {folds} folds",
            labels.len()
        )));
    }
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut by_class = vec![Vec::new(); num_classes];
    for (i, &y) in labels.iter().enumerate() {
        by_class[y].push(i);
    }
    let mut rng = stream(seed, &[repeat as u64]);
    let mut assignment = vec![0; labels.len()];
    let mut next = 0;
    for members in &mut by_class {
        members.shuffle(&mut rng);
        for &i in members.iter() {
            assignment[i] = next;
            next = (next + 1) % folds;
        }
    }
    Ok(assignment)
}

/// Trained probe weights `d × C` and bias `1 × C`, plus the column
/// statistics used to standardise inputs.
#[derive(Clone, Debug)]
pub struct Probe {
    pub weight: Tensor,
    pub bias: Tensor,
    shift: Vec<f64>,
    scale: Vec<f64>,
}

impl Probe {
    fn prepare(&self, x: &Tensor) -> Tensor {
        let mut out = x.clone();
        let cols = x.cols();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            let j = i % cols;
            *v = (*v - self.shift[j]) / self.scale[j];
        }
        out
    }

    pub fn predict(&self, x: &Tensor) -> Result<Vec<usize>> {
        let logits = self.prepare(x).matmul(&self.weight)?;
        let c = logits.cols();
        Ok((0..logits.rows())
            .map(|r| {
                let row = logits.row(r);
                (0..c)
                    .map(|k| row[k] + self.bias.data()[k])
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (k, v)| if v > best.1 { (k, v) } else { best })
                    .0
            })
            .collect())
    }
}

/// Full-batch gradient descent on softmax cross-entropy plus
/// `l2/2·‖W‖²`, starting from zero weights.
pub fn train_probe(x: &Tensor, labels: &[usize], num_classes: usize, cfg: &ProbeConfig) -> Result<Probe> {
    let (n, d) = (x.rows(), x.cols());
    if labels.len() != n || n == 0 {
        return Err(Error::invalid(format!("{n} rows but {} labels", labels.len())));
    }
    let (shift, scale) = if cfg.standardize {
        column_stats(x)
    } else {
        (vec![0.0; d], vec![1.0; d])
    };
    let mut probe = Probe {
        weight: Tensor::zeros(d, num_classes),
        bias: Tensor::zeros(1, num_classes),
        shift,
        scale,
    };
    let xs = probe.prepare(x);
    let mut onehot = Tensor::zeros(n, num_classes);
    for (i, &y) in labels.iter().enumerate() {
        onehot.set(i, y, 1.0);
    }
    for _ in 0..cfg.epochs {
        let mut tape = Tape::new();
        let w = tape.param(probe.weight.clone());
        let b = tape.param(probe.bias.clone());
        let xv = tape.constant(xs.clone());
        let y = tape.constant(onehot.clone());
        let xw = tape.matmul(xv, w)?;
        let logits = tape.add(xw, b)?;
        let lsm = tape.log_softmax_rows(logits)?;
        let picked = tape.mul(lsm, y)?;
        let total = tape.sum(picked);
        let nll = tape.scale(total, -1.0 / n as f64);
        let w2 = tape.mul(w, w)?;
        let w2 = tape.sum(w2);
        let penalty = tape.scale(w2, 0.5 * cfg.l2);
        let loss = tape.add(nll, penalty)?;
        let grads = tape.backward(loss)?;
        for (param, var) in [(&mut probe.weight, w), (&mut probe.bias, b)] {
            let g = grads.wrt(&tape, var);
            for (p, gi) in param.data_mut().iter_mut().zip(g.data()) {
                *p -= cfg.learning_rate * gi;
            }
        }
    }
    Ok(probe)
}

fn column_stats(x: &Tensor) -> (Vec<f64>, Vec<f64>) {
    let (n, d) = (x.rows() as f64, x.cols());
    let mut mean = vec![0.0; d];
    for r in 0..x.rows() {
        for (m, v) in mean.iter_mut().zip(x.row(r)) {
            *m += v / n;
        }
    }
    let mut var = vec![0.0; d];
    for r in 0..x.rows() {
        for ((s, v), m) in var.iter_mut().zip(x.row(r)).zip(&mean) {
            *s += (v - m).powi(2) / n;
        }
    }
    let scale = var
        .into_iter()
        .map(|v| if v.sqrt() > 1e-12 { v.sqrt() } else { 1.0 })
        .collect();
    (mean, scale)
}

fn select_rows(x: &Tensor, rows: &[usize]) -> Tensor {
    let data = rows.iter().flat_map(|&r| x.row(r).iter().copied()).collect();
    Tensor::from_parts_unchecked(vec![rows.len(), x.cols()], data)
}

/// Repeated stratified k-fold accuracy of a linear probe on `embeddings`.
pub fn linear_probe(embeddings: &Tensor, labels: &[usize], cfg: &ProbeConfig) -> Result<EvalReport> {
    cfg.validate()?;
    if !embeddings.is_matrix() || embeddings.rows() != labels.len() {
        return Err(Error::shape("linear_probe", embeddings.shape(), &[labels.len()]));
    }
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut counts = vec![0usize; num_classes];
    labels.iter().for_each(|&y| counts[y] += 1);
    if counts.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::invalid("linear probe needs at least two classes"));
    }
    if let Some(class) = counts.iter().position(|&c| c == 1) {
        return Err(Error::invalid(format!(
            "class {class} has a single sample, so some training fold lacks it"
        )));
    }
    let assignments = (0..cfg.repeats)
        .map(|r| stratified_folds(labels, cfg.folds, cfg.seed, r))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, usize)> = (0..cfg.repeats)
        .flat_map(|r| (0..cfg.folds).map(move |f| (r, f)))
        .collect();
    let fold_accuracy = jobs
        .par_iter()
        .map(|&(r, f)| {
            let (test, train): (Vec<usize>, Vec<usize>) =
                (0..labels.len()).partition(|&i| assignments[r][i] == f);
            let train_y: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
            let probe = train_probe(&select_rows(embeddings, &train), &train_y, num_classes, cfg)?;
            let pred = probe.predict(&select_rows(embeddings, &test))?;
            let hits = pred.iter().zip(&test).filter(|(p, &i)| **p == labels[i]).count();
            Ok(hits as f64 / test.len() as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    let repeats = fold_accuracy
        .chunks(cfg.folds)
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect();
    Ok(EvalReport::from_repeats(repeats))
}

/// Embeds `dataset` with frozen `params` and runs [`linear_probe`].
pub fn evaluate(params: &ModelParams, dataset: &Dataset, cfg: &ProbeConfig) -> Result<EvalReport> {
    let x = embed_all(params, dataset)?;
    linear_probe(&x, &dataset.labels(), cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{init_params, EncoderConfig};
    use crate::graph::Graph;
    use rand::Rng;

    fn separable(n: usize) -> (Tensor, Vec<usize>) {
        let mut rng = stream(5, &[]);
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let data = labels
            .iter()
            .flat_map(|&y| {
                let sign = if y == 0 { -1.0 } else { 1.0 };
                [sign * (1.0 + rng.gen::<f64>()), rng.gen::<f64>() - 0.5]
            })
            .collect();
        (Tensor::new(vec![n, 2], data).unwrap(), labels)
    }

    #[test]
    fn separable_classes_score_perfectly() {
        let (x, y) = separable(60);
        let r = linear_probe(&x, &y, &ProbeConfig::default()).unwrap();
        assert_eq!(r.accuracy_mean, 1.0);
        assert_eq!(r.accuracy_std, 0.0);
        assert_eq!(r.repeat_accuracies.len(), 5);
    }

    #[test]
    fn shuffled_labels_are_near_chance() {
        let (x, mut y) = separable(200);
        y.shuffle(&mut stream(77, &[]));
        let r = linear_probe(&x, &y, &ProbeConfig::default()).unwrap();
        assert!((r.accuracy_mean - 0.5).abs() <= 0.1, "{}", r.accuracy_mean);
    }

    #[test]
    fn single_repeat_has_zero_std() {
        let (x, mut y) = separable(40);
        y.shuffle(&mut stream(1, &[]));
        let cfg = ProbeConfig { repeats: 1, ..ProbeConfig::default() };
        assert_eq!(linear_probe(&x, &y, &cfg).unwrap().accuracy_std, 0.0);
    }

    #[test]
    fn folds_are_stratified() {
        let labels: Vec<usize> = (0..97).map(|i| [0, 0, 1, 2, 2, 2][i % 6]).collect();
        let folds = stratified_folds(&labels, 10, 3, 0).unwrap();
        for class in 0..3 {
            let total = labels.iter().filter(|&&y| y == class).count() as f64;
            for f in 0..10 {
                let c = (0..97).filter(|&i| labels[i] == class && folds[i] == f).count() as f64;
                assert!((c - total / 10.0).abs() <= 1.0);
            }
        }
        assert_ne!(folds, stratified_folds(&labels, 10, 3, 1).unwrap());
    }

    #[test]
    fn rejects_degenerate_label_sets() {
        let x = Tensor::zeros(20, 2);
        assert!(linear_probe(&x, &[0; 20], &ProbeConfig::default()).is_err());
        let mut y = vec![0; 20];
        y[3] = 1;
        assert!(linear_probe(&x, &y, &ProbeConfig::default()).is_err());
        assert!(linear_probe(&x, &[0, 1], &ProbeConfig::default()).is_err());
        let bad = ProbeConfig { folds: 1, ..ProbeConfig::default() };
        assert!(linear_probe(&x, &[0, 1].repeat(10), &bad).is_err());
    }

    #[test]
    fn embeddings_are_deterministic_and_frozen() {
        let x = Tensor::matrix(3, 2, vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap();
        let g = Graph::new(3, vec![(0, 1), (1, 2)], x.clone(), 0).unwrap();
        let permuted = Graph::new(
            3,
            vec![(2, 1), (1, 0)],
            Tensor::matrix(3, 2, vec![1.0, 1.0, 0.0, 1.0, 1.0, 0.0]).unwrap(),
            1,
        )
        .unwrap();
        let ds = Dataset::new("d", vec![g, permuted], 2).unwrap();
        let params = init_params(&EncoderConfig::default(), 2, 4).unwrap();
        let before = params.clone();
        let a = embed_all(&params, &ds).unwrap();
        assert_eq!(a, embed_all(&params, &ds).unwrap());
        assert_eq!(a.rows(), 2);
        assert!(a.row(0).iter().zip(a.row(1)).all(|(p, q)| (p - q).abs() < 1e-12));
        assert_eq!(params, before);
    }
}
