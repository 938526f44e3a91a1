//! Self-supervised pre-training with Adam.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::mpsc::sync_channel;
use std::thread;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;

use crate::augment::{sample_view_pair, AugmentKind, AugmentPool, AugmentSpec};
use crate::encoder::{init_params, EncoderConfig, ModelParams};
use crate::error::{Error, Result};
use crate::graph::{batch_graphs, Dataset, GraphBatch};
use crate::losses::{LossKind, LossParams};
use crate::rng::{derive_seed, stream};
use crate::tensor::{Tape, Tensor};

const INIT_STREAM: u64 = 0;
const SHUFFLE_STREAM: u64 = 1;
const VIEW_STREAM: u64 = 2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates, one pair per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub step: u64,
}

impl AdamState {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        let m: Vec<Tensor> = params.into_iter().map(Tensor::zeros_like).collect();
        Self {
            v: m.clone(),
            m,
            step: 0,
        }
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(
    params: &mut [&mut Tensor],
    grads: &[Tensor],
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::invalid(format!(
            "adam_step got {} params, {} grads and {} moment slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for ((p, g), m) in params.iter().zip(grads).zip(&state.m) {
        if p.shape() != g.shape() || p.shape() != m.shape() {
            return Err(Error::shape("adam_step", p.shape(), g.shape()));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (((p, g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(&mut state.m)
        .zip(&mut state.v)
    {
        let (p, m, v) = (p.data_mut(), m.data_mut(), v.data_mut());
        for i in 0..p.len() {
            let gi = g.data()[i];
            m[i] = b1 * m[i] + (1.0 - b1) * gi;
            v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    pub loss: LossKind,
    pub loss_params: LossParams,
    pub pool: AugmentPool,
    pub encoder: EncoderConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let pool = AugmentPool::new(vec![
            AugmentSpec::new(AugmentKind::NodeDrop, 0.2).expect("valid ratio"),
            AugmentSpec::new(AugmentKind::Subgraph, 0.2).expect("valid ratio"),
        ])
        .expect("nonempty pool");
        Self {
            epochs: 100,
            batch_size: 128,
            adam: AdamConfig::default(),
            seed: 0,
            loss: LossKind::VicRegHsic,
            loss_params: LossParams::default(),
            pool,
            encoder: EncoderConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if self.batch_size < 2 {
            return Err(Error::invalid(format!(
                "batch_size must be at least 2, got {}",
                self.batch_size
            )));
        }
        self.encoder.validate()?;
        self.loss_params.validate()
    }
}

#[derive(Clone, Debug)]
pub struct TrainResult {
    pub params: ModelParams,
    pub loss_history: Vec<f64>,
    pub wall_time: Duration,
}

/// The parameters `pretrain` starts from for this dataset and config.
pub fn initial_params(dataset: &Dataset, cfg: &TrainConfig) -> Result<ModelParams> {
    init_params(
        &cfg.encoder,
        dataset.feature_dim(),
        derive_seed(cfg.seed, &[INIT_STREAM]),
    )
}

struct ViewBatch {
    epoch: usize,
    batch: usize,
    views: Result<(GraphBatch, GraphBatch)>,
}

fn batch_schedule(dataset: &Dataset, cfg: &TrainConfig, epoch: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut stream(cfg.seed, &[SHUFFLE_STREAM, epoch as u64]));
    order
        .chunks(cfg.batch_size)
        .filter(|c| c.len() >= 2)
        .map(<[usize]>::to_vec)
        .collect()
}

fn make_views(
    dataset: &Dataset,
    cfg: &TrainConfig,
    epoch: usize,
    batch: usize,
    members: &[usize],
) -> Result<(GraphBatch, GraphBatch)> {
    let (a, b): (Vec<_>, Vec<_>) = members
        .iter()
        .map(|&gi| {
            let mut rng = stream(cfg.seed, &[VIEW_STREAM, epoch as u64, batch as u64, gi as u64]);
            sample_view_pair(&dataset.graphs()[gi], &cfg.pool, &mut rng)
        })
        .unzip();
    Ok((batch_graphs(&a)?, batch_graphs(&b)?))
}

/// Pre-trains an encoder and projector. Views for the next batch are built
/// on a separate thread while the current batch is optimised.
pub fn pretrain(dataset: &Dataset, cfg: &TrainConfig) -> Result<TrainResult> {
    cfg.validate()?;
    if dataset.len() < 2 {
        return Err(Error::invalid(format!(
            "dataset needs at least 2 graphs, has {}",
            dataset.len()
        )));
    }
    let start = Instant::now();
    let mut params = initial_params(dataset, cfg)?;
    let mut state = AdamState::new(params.tensors());
    let mut loss_history = Vec::with_capacity(cfg.epochs);

    thread::scope(|scope| -> Result<()> {
        let (tx, rx) = sync_channel::<ViewBatch>(1);
        scope.spawn(move || {
            for epoch in 0..cfg.epochs {
                for (batch, members) in batch_schedule(dataset, cfg, epoch).iter().enumerate() {
                    let views = make_views(dataset, cfg, epoch, batch, members);
                    if tx.send(ViewBatch { epoch, batch, views }).is_err() {
                        return;
                    }
                }
            }
        });

        let mut epoch_losses = Vec::new();
        let mut current_epoch = 0;
        for item in rx {
            if item.epoch != current_epoch {
                loss_history.push(mean(&epoch_losses));
                epoch_losses.clear();
                current_epoch = item.epoch;
            }
            let (va, vb) = item.views?;
            let loss = train_step(&mut params, &mut state, cfg, &va, &vb)
                .map_err(|e| annotate(e, item.epoch, item.batch))?;
            epoch_losses.push(loss);
        }
        loss_history.push(mean(&epoch_losses));
        Ok(())
    })?;

    Ok(TrainResult {
        params,
        loss_history,
        wall_time: start.elapsed(),
    })
}

fn annotate(e: Error, epoch: usize, batch: usize) -> Error {
    match e {
        Error::NonFiniteLoss { components, .. } => Error::NonFiniteLoss {
            epoch,
            batch,
            components,
        },
        other => other,
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn train_step(
    params: &mut ModelParams,
    state: &mut AdamState,
    cfg: &TrainConfig,
    va: &GraphBatch,
    vb: &GraphBatch,
) -> Result<f64> {
    let mut tape = Tape::new();
    let model = params.bind(&mut tape, true);
    let ha = model.encode(&mut tape, va)?;
    let hb = model.encode(&mut tape, vb)?;
    let za = model.project(&mut tape, ha)?;
    let zb = model.project(&mut tape, hb)?;
    let terms = cfg.loss.evaluate(&mut tape, za, zb, &cfg.loss_params)?;
    let loss = tape.value(terms.total).item()?;
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss {
            epoch: 0,
            batch: 0,
            components: format!("total={loss}, {}", terms.describe(&tape)),
        });
    }
    let grads = tape.backward(terms.total)?;
    let grads = model.gradients(&tape, &grads);
    adam_step(&mut params.tensors_mut(), &grads, state, &cfg.adam)?;
    Ok(loss)
}

/// Writes `epoch,mean_loss` rows, epochs counted from 1.
pub fn write_loss_history(path: &Path, history: &[f64]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut out = fs::File::create(path)?;
    writeln!(out, "epoch,mean_loss")?;
    for (i, loss) in history.iter().enumerate() {
        writeln!(out, "{},{loss}", i + 1)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;

    fn tiny_dataset() -> Dataset {
        let graphs = (0..6)
            .map(|i| {
                let n = 3 + i % 3;
                let edges = (1..n).map(|v| (v - 1, v)).collect();
                let x = Tensor::new(
                    vec![n, 3],
                    (0..n * 3).map(|k| ((k + i) % 3 == 0) as u8 as f64).collect(),
                )
                .unwrap();
                Graph::new(n, edges, x, i % 2).unwrap()
            })
            .collect();
        Dataset::new("tiny", graphs, 2).unwrap()
    }

    fn tiny_config(epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size: 4,
            encoder: EncoderConfig {
                num_layers: 2,
                hidden_dim: 8,
                projector_dim: 8,
            },
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_gradient_leaves_params_and_decays_moments() {
        let mut p = Tensor::filled(2, 2, 1.5);
        let mut state = AdamState::new([&p]);
        state.m[0] = Tensor::filled(2, 2, 1.0);
        state.v[0] = Tensor::filled(2, 2, 1.0);
        let before = p.clone();
        let cfg = AdamConfig::default();
        adam_step(&mut [&mut p], &[Tensor::zeros(2, 2)], &mut state, &cfg).unwrap();
        // Stored moments are nonzero, so the bias-corrected step is not zero;
        // with fresh moments it is.
        assert!(state.m[0].data().iter().all(|&m| (m - 0.9).abs() < 1e-15));
        assert!(state.v[0].data().iter().all(|&v| (v - 0.999).abs() < 1e-15));
        let mut q = before.clone();
        let mut fresh = AdamState::new([&q]);
        adam_step(&mut [&mut q], &[Tensor::zeros(2, 2)], &mut fresh, &cfg).unwrap();
        assert_eq!(q, before);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = Tensor::matrix(1, 3, vec![0.0, 0.0, 0.0]).unwrap();
        let g = Tensor::matrix(1, 3, vec![3.0, -0.5, 1e-3]).unwrap();
        let mut state = AdamState::new([&p]);
        let cfg = AdamConfig::default();
        adam_step(&mut [&mut p], &[g.clone()], &mut state, &cfg).unwrap();
        for (pi, gi) in p.data().iter().zip(g.data()) {
            let oracle = -cfg.learning_rate * gi / (gi.abs() + cfg.epsilon);
            assert!((pi - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_gradient_moves_monotonically() {
        let mut p = Tensor::scalar(2.0);
        let mut state = AdamState::new([&p]);
        let mut last = p.item().unwrap();
        for _ in 0..50 {
            adam_step(&mut [&mut p], &[Tensor::scalar(0.7)], &mut state, &AdamConfig::default())
                .unwrap();
            assert!(p.item().unwrap() < last);
            last = p.item().unwrap();
        }
    }

    #[test]
    fn adam_rejects_mismatched_shapes() {
        let mut p = Tensor::zeros(2, 2);
        let mut state = AdamState::new([&p]);
        let cfg = AdamConfig::default();
        assert!(adam_step(&mut [&mut p], &[Tensor::zeros(2, 3)], &mut state, &cfg).is_err());
        assert!(adam_step(&mut [&mut p], &[], &mut state, &cfg).is_err());
    }

    #[test]
    fn one_epoch_history_and_all_params_move() {
        let ds = tiny_dataset();
        let cfg = tiny_config(1);
        let result = pretrain(&ds, &cfg).unwrap();
        assert_eq!(result.loss_history.len(), 1);
        assert!(result.loss_history[0].is_finite());
        let init = initial_params(&ds, &cfg).unwrap();
        for (a, b) in init.tensors().iter().zip(result.params.tensors()) {
            assert!(a.max_abs_diff(b) > 0.0);
        }
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let ds = tiny_dataset();
        let cfg = tiny_config(3);
        let a = pretrain(&ds, &cfg).unwrap();
        let b = pretrain(&ds, &cfg).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(
            a.loss_history.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.loss_history.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        let c = pretrain(&ds, &TrainConfig { seed: 9, ..cfg }).unwrap();
        assert_ne!(a.loss_history, c.loss_history);
    }

    #[test]
    fn every_loss_trains_finitely() {
        let ds = tiny_dataset();
        for kind in LossKind::ALL {
            let cfg = TrainConfig {
                loss: kind,
                ..tiny_config(2)
            };
            let r = pretrain(&ds, &cfg).unwrap();
            assert!(r.loss_history.iter().all(|v| v.is_finite()), "{kind:?}");
        }
    }

    #[test]
    fn trailing_singleton_batch_is_dropped() {
        let ds = tiny_dataset();
        let cfg = TrainConfig {
            batch_size: 5,
            ..tiny_config(1)
        };
        assert!(batch_schedule(&ds, &cfg, 0).iter().all(|b| b.len() == 5));
        assert!(pretrain(&ds, &cfg).is_ok());
    }

    #[test]
    fn rejects_bad_config() {
        let ds = tiny_dataset();
        assert!(pretrain(&ds, &TrainConfig { epochs: 0, ..tiny_config(1) }).is_err());
        assert!(pretrain(&ds, &TrainConfig { batch_size: 1, ..tiny_config(1) }).is_err());
    }
}
