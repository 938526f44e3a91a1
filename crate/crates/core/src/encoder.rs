//! GIN-style graph encoder with mean readout, and the projection head.
//!
//! Each encoder layer computes `h ← W2·relu(W1·(h + Σ_neighbours h) + b1) + b2`;
//! graph embeddings are the mean of the final node states. The projection
//! head is `linear → relu → linear`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::GraphBatch;
use crate::tensor::{Gradients, Tape, Tensor, Var};

pub const CHECKPOINT_MAGIC: &str = "GRAPHSSL-CKPT-1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EncoderConfig {
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub projector_dim: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            num_layers: 3,
            hidden_dim: 32,
            projector_dim: 160,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_layers == 0 || self.hidden_dim == 0 || self.projector_dim == 0 {
            return Err(Error::invalid(format!(
                "encoder layers and dims must be at least 1: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Affine map `x·W + b` with `W: in × out`, `b: 1 × out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    fn glorot(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| rng.gen_range(-bound..=bound))
            .collect();
        Self {
            weight: Tensor::from_parts_unchecked(vec![fan_in, fan_out], data),
            bias: Tensor::zeros(1, fan_out),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GinLayer {
    pub inner: Linear,
    pub outer: Linear,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    config: EncoderConfig,
    feature_dim: usize,
    seed: u64,
    pub layers: Vec<GinLayer>,
    pub head_inner: Linear,
    pub head_outer: Linear,
}

/// Glorot-uniform weights and zero biases, deterministic in `seed`.
pub fn init_params(cfg: &EncoderConfig, feature_dim: usize, seed: u64) -> Result<ModelParams> {
    cfg.validate()?;
    if feature_dim == 0 {
        return Err(Error::invalid("feature_dim must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = cfg.hidden_dim;
    let layers = (0..cfg.num_layers)
        .map(|i| {
            let fan_in = if i == 0 { feature_dim } else { h };
            GinLayer {
                inner: Linear::glorot(fan_in, h, &mut rng),
                outer: Linear::glorot(h, h, &mut rng),
            }
        })
        .collect();
    let p = cfg.projector_dim;
    Ok(ModelParams {
        config: *cfg,
        feature_dim,
        seed,
        layers,
        head_inner: Linear::glorot(h, p, &mut rng),
        head_outer: Linear::glorot(p, p, &mut rng),
    })
}

impl ModelParams {
    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn linears(&self) -> impl Iterator<Item = &Linear> {
        self.layers
            .iter()
            .flat_map(|l| [&l.inner, &l.outer])
            .chain([&self.head_inner, &self.head_outer])
    }

    /// Every parameter tensor in a fixed order.
    pub fn tensors(&self) -> Vec<&Tensor> {
        self.linears().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.inner, &mut l.outer])
            .chain([&mut self.head_inner, &mut self.head_outer])
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    /// Names matching the order of [`ModelParams::tensors`].
    pub fn tensor_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for i in 0..self.layers.len() {
            for part in ["inner", "outer"] {
                names.push(format!("gin.{i}.{part}.weight"));
                names.push(format!("gin.{i}.{part}.bias"));
            }
        }
        for part in ["inner", "outer"] {
            names.push(format!("head.{part}.weight"));
            names.push(format!("head.{part}.bias"));
        }
        names
    }

    /// Records the parameters on `tape`, as trainable leaves or constants.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundModel {
        let vars = self
            .tensors()
            .into_iter()
            .map(|t| {
                if trainable {
                    tape.param(t.clone())
                } else {
                    tape.constant(t.clone())
                }
            })
            .collect();
        BoundModel {
            vars,
            num_layers: self.layers.len(),
            feature_dim: self.feature_dim,
            hidden_dim: self.config.hidden_dim,
        }
    }

    /// Wraps explicit tape handles, one per tensor in [`ModelParams::tensors`]
    /// order, whose values must match the stored shapes.
    pub fn bind_vars(&self, tape: &Tape, vars: Vec<Var>) -> Result<BoundModel> {
        let tensors = self.tensors();
        if vars.len() != tensors.len() {
            return Err(Error::invalid(format!(
                "expected {} parameter handles, got {}",
                tensors.len(),
                vars.len()
            )));
        }
        for (t, &v) in tensors.iter().zip(&vars) {
            if tape.value(v).shape() != t.shape() {
                return Err(Error::shape("bind_vars", tape.value(v).shape(), t.shape()));
            }
        }
        Ok(BoundModel {
            vars,
            num_layers: self.layers.len(),
            feature_dim: self.feature_dim,
            hidden_dim: self.config.hidden_dim,
        })
    }

    /// Graph embeddings (`batch_size × hidden_dim`) without recording gradients.
    pub fn encode(&self, batch: &GraphBatch) -> Result<Tensor> {
        let mut tape = Tape::new();
        let model = self.bind(&mut tape, false);
        let h = model.encode(&mut tape, batch)?;
        Ok(tape.value(h).clone())
    }

    /// Projected embeddings (`batch_size × projector_dim`).
    pub fn project(&self, embeddings: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let model = self.bind(&mut tape, false);
        let x = tape.constant(embeddings.clone());
        let z = model.project(&mut tape, x)?;
        Ok(tape.value(z).clone())
    }
}

/// Tape handles for a [`ModelParams`], in [`ModelParams::tensors`] order.
#[derive(Clone, Debug)]
pub struct BoundModel {
    vars: Vec<Var>,
    num_layers: usize,
    feature_dim: usize,
    hidden_dim: usize,
}

impl BoundModel {
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    fn linear(&self, tape: &mut Tape, x: Var, index: usize) -> Result<Var> {
        let (w, b) = (self.vars[2 * index], self.vars[2 * index + 1]);
        let xw = tape.matmul(x, w)?;
        tape.add(xw, b)
    }

    pub fn encode(&self, tape: &mut Tape, batch: &GraphBatch) -> Result<Var> {
        let x = batch.node_features();
        if x.cols() != self.feature_dim {
            return Err(Error::shape("encode", x.shape(), &[x.rows(), self.feature_dim]));
        }
        let mut h = tape.constant(x.clone());
        for layer in 0..self.num_layers {
            let agg = tape.aggregate_neighbors(h, batch.directed_edges().clone())?;
            let combined = tape.add(h, agg)?;
            let inner = self.linear(tape, combined, 2 * layer)?;
            let act = tape.relu(inner);
            h = self.linear(tape, act, 2 * layer + 1)?;
        }
        tape.segment_mean(h, batch.node_to_graph().clone(), batch.batch_size())
    }

    pub fn project(&self, tape: &mut Tape, embeddings: Var) -> Result<Var> {
        let e = tape.value(embeddings);
        if !e.is_matrix() || e.cols() != self.hidden_dim {
            return Err(Error::shape("project", e.shape(), &[e.rows(), self.hidden_dim]));
        }
        let head = 2 * self.num_layers;
        let inner = self.linear(tape, embeddings, head)?;
        let act = tape.relu(inner);
        self.linear(tape, act, head + 1)
    }

    /// Gradients per parameter tensor, zero-filled where untouched.
    pub fn gradients(&self, tape: &Tape, grads: &Gradients) -> Vec<Tensor> {
        self.vars.iter().map(|&v| grads.wrt(tape, v)).collect()
    }
}

/// Parameters plus free-form string metadata, saved as text.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub meta: BTreeMap<String, String>,
}

impl Checkpoint {
    pub fn new(params: ModelParams) -> Self {
        Self {
            params,
            meta: BTreeMap::new(),
        }
    }

    /// Text layout: the magic line, `config` and `meta` lines, then one
    /// `tensor NAME ROWS COLS` header per tensor followed by its values on
    /// a single line.
    pub fn to_text(&self) -> String {
        let p = &self.params;
        let c = p.config;
        let mut out = format!("{CHECKPOINT_MAGIC}\n");
        out.push_str(&format!(
            "config num_layers={} hidden_dim={} projector_dim={} feature_dim={} seed={}\n",
            c.num_layers, c.hidden_dim, c.projector_dim, p.feature_dim, p.seed
        ));
        for (k, v) in &self.meta {
            out.push_str(&format!("meta {k} {v}\n"));
        }
        for (name, t) in p.tensor_names().iter().zip(p.tensors()) {
            out.push_str(&format!("tensor {name} {} {}\n", t.rows(), t.cols()));
            let values: Vec<String> = t.data().iter().map(|v| format!("{v:e}")).collect();
            out.push_str(&values.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::Checkpoint(msg);
        let mut lines = text.lines();
        if lines.next() != Some(CHECKPOINT_MAGIC) {
            return Err(bad(format!("missing magic line {CHECKPOINT_MAGIC}")));
        }
        let config_line = lines.next().ok_or_else(|| bad("missing config line".into()))?;
        let fields: BTreeMap<&str, &str> = config_line
            .strip_prefix("config ")
            .ok_or_else(|| bad("missing config line".into()))?
            .split_whitespace()
            .filter_map(|kv| kv.split_once('='))
            .collect();
        let field = |k: &str| -> Result<u64> {
            fields
                .get(k)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| bad(format!("config lacks {k}")))
        };
        let config = EncoderConfig {
            num_layers: field("num_layers")? as usize,
            hidden_dim: field("hidden_dim")? as usize,
            projector_dim: field("projector_dim")? as usize,
        };
        let mut params = init_params(&config, field("feature_dim")? as usize, field("seed")?)?;
        let mut meta = BTreeMap::new();
        let mut tensors = BTreeMap::new();
        while let Some(line) = lines.next() {
            if let Some(rest) = line.strip_prefix("meta ") {
                let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                meta.insert(k.to_owned(), v.to_owned());
            } else if let Some(rest) = line.strip_prefix("tensor ") {
                let parts: Vec<&str> = rest.split_whitespace().collect();
                let [name, rows, cols] = parts[..] else {
                    return Err(bad(format!("bad tensor header '{line}'")));
                };
                let (rows, cols): (usize, usize) = (
                    rows.parse().map_err(|_| bad(format!("bad rows in '{line}'")))?,
                    cols.parse().map_err(|_| bad(format!("bad cols in '{line}'")))?,
                );
                let values = lines
                    .next()
                    .ok_or_else(|| bad(format!("tensor {name} has no values")))?
                    .split_whitespace()
                    .map(|v| v.parse::<f64>().map_err(|_| bad(format!("bad value '{v}' in {name}"))))
                    .collect::<Result<Vec<_>>>()?;
                let t = Tensor::matrix(rows, cols, values).map_err(|e| bad(e.to_string()))?;
                tensors.insert(name.to_owned(), t);
            } else if !line.trim().is_empty() {
                return Err(bad(format!("unexpected line '{line}'")));
            }
        }
        let names = params.tensor_names();
        for (name, slot) in names.iter().zip(params.tensors_mut()) {
            let t = tensors
                .remove(name)
                .ok_or_else(|| bad(format!("missing tensor {name}")))?;
            if t.shape() != slot.shape() {
                return Err(bad(format!(
                    "tensor {name} has shape {:?}, expected {:?}",
                    t.shape(),
                    slot.shape()
                )));
            }
            *slot = t;
        }
        if let Some(extra) = tensors.keys().next() {
            return Err(bad(format!("unknown tensor {extra}")));
        }
        Ok(Self { params, meta })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
            _ => e.into(),
        })?;
        Self::from_text(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{batch_graphs, Graph};

    fn small_graph(label: usize) -> Graph {
        let x = Tensor::matrix(3, 2, vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap();
        Graph::new(3, vec![(0, 1), (1, 2)], x, label).unwrap()
    }

    fn zero_biases(p: &mut ModelParams) {
        let names = p.tensor_names();
        for (name, t) in names.iter().zip(p.tensors_mut()) {
            if name.ends_with("bias") {
                t.data_mut().iter_mut().for_each(|v| *v = 0.0);
            }
        }
    }

    #[test]
    fn zero_features_encode_to_zero() {
        let mut p = init_params(&EncoderConfig::default(), 4, 1).unwrap();
        zero_biases(&mut p);
        let g = Graph::new(1, vec![], Tensor::zeros(1, 4), 0).unwrap();
        let h = p.encode(&batch_graphs(&[g]).unwrap()).unwrap();
        assert_eq!(h.shape(), &[1, 32]);
        assert!(h.data().iter().all(|&v| v == 0.0));
        let z = p.project(&h).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identical_graphs_identical_rows() {
        let p = init_params(&EncoderConfig::default(), 2, 3).unwrap();
        let h = p.encode(&batch_graphs(&[small_graph(0), small_graph(1)]).unwrap()).unwrap();
        assert_eq!(h.row(0), h.row(1));
    }

    #[test]
    fn projection_shape() {
        let p = init_params(&EncoderConfig::default(), 2, 3).unwrap();
        let h = Tensor::filled(128, 32, 0.1);
        assert_eq!(p.project(&h).unwrap().shape(), &[128, 160]);
        assert!(p.project(&Tensor::zeros(4, 31)).is_err());
        let odd = Graph::new(1, vec![], Tensor::zeros(1, 5), 0).unwrap();
        assert!(p.encode(&batch_graphs(&[odd]).unwrap()).is_err());
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let cfg = EncoderConfig::default();
        let a = init_params(&cfg, 7, 11).unwrap();
        assert_eq!(a, init_params(&cfg, 7, 11).unwrap());
        assert_ne!(a, init_params(&cfg, 7, 12).unwrap());
        for l in a.linears() {
            let (fan_in, fan_out) = (l.weight.rows(), l.weight.cols());
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            assert!(l.weight.data().iter().all(|v| v.abs() <= bound));
            assert!(l.bias.data().iter().all(|&v| v == 0.0));
        }
        assert!(init_params(&EncoderConfig { num_layers: 0, ..cfg }, 7, 1).is_err());
    }

    #[test]
    fn doubling_first_head_weights_doubles_preactivation() {
        let p = init_params(&EncoderConfig::default(), 2, 5).unwrap();
        let h = Tensor::filled(3, 32, 0.25);
        let pre = h.matmul(&p.head_inner.weight).unwrap();
        let doubled = h.matmul(&p.head_inner.weight.map(|v| 2.0 * v)).unwrap();
        assert!(doubled.max_abs_diff(&pre.map(|v| 2.0 * v)) < 1e-15);
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut ckpt = Checkpoint::new(init_params(&EncoderConfig::default(), 7, 2).unwrap());
        ckpt.meta.insert("loss".into(), "vicreghsic".into());
        ckpt.meta.insert("final_loss".into(), "12.5".into());
        let text = ckpt.to_text();
        assert!(text.starts_with("GRAPHSSL-CKPT-1\n"));
        assert_eq!(Checkpoint::from_text(&text).unwrap(), ckpt);
        assert!(Checkpoint::from_text("nope\n").is_err());
        let truncated: String = text.lines().take(6).collect::<Vec<_>>().join("\n");
        assert!(Checkpoint::from_text(&truncated).is_err());
    }
}
