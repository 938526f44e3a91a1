//! Self-supervised objectives over two batches of paired embeddings.
//!
//! `Za` and `Zb` are `n × d` matrices whose `i`-th rows embed two views of
//! the same graph. Every function records its computation on the given
//! tape so the result can be differentiated.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CovarianceMode {
    /// Off-diagonal covariances are pushed to 0.
    Vicreg,
    /// Off-diagonal covariances are pushed to −1.
    Hsic,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossParams {
    /// Weight of the invariance term.
    pub lambda: f64,
    /// Weight of the variance term.
    pub mu: f64,
    /// Weight of the covariance term.
    pub nu: f64,
    /// Target standard deviation per dimension.
    pub gamma: f64,
    pub epsilon: f64,
    /// Exponent of the norm in the invariance term.
    pub p: f64,
    pub covariance_mode: CovarianceMode,
    pub temperature: f64,
    /// Off-diagonal weight of the cross-correlation objectives.
    pub lambda_bt: f64,
}

impl Default for LossParams {
    fn default() -> Self {
        Self {
            lambda: 25.0,
            mu: 25.0,
            nu: 1.0,
            gamma: 1.0,
            epsilon: 1e-4,
            p: 2.0,
            covariance_mode: CovarianceMode::Hsic,
            temperature: 0.5,
            lambda_bt: 5e-3,
        }
    }
}

impl LossParams {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            (self.epsilon > 0.0, "epsilon must be positive"),
            (self.gamma > 0.0, "gamma must be positive"),
            (self.temperature > 0.0, "temperature must be positive"),
            (self.p >= 1.0, "p must be at least 1"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(Error::invalid(*msg)),
            None => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LossKind {
    VicReg,
    VicRegHsic,
    BarlowTwins,
    Hsic,
    /// Also known as InfoNCE or the SimCLR loss.
    NtXent,
}

impl LossKind {
    pub const ALL: [LossKind; 5] = [
        LossKind::VicReg,
        LossKind::VicRegHsic,
        LossKind::BarlowTwins,
        LossKind::Hsic,
        LossKind::NtXent,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::VicReg => "vicreg",
            LossKind::VicRegHsic => "vicreghsic",
            LossKind::BarlowTwins => "bt",
            LossKind::Hsic => "hsic",
            LossKind::NtXent => "ntxent",
        }
    }

    pub fn evaluate(self, tape: &mut Tape, za: Var, zb: Var, params: &LossParams) -> Result<LossTerms> {
        params.validate()?;
        let single = |name, total| LossTerms {
            total,
            components: vec![(name, total)],
        };
        match self {
            LossKind::VicReg => vicreg_family_loss(
                tape,
                za,
                zb,
                &LossParams {
                    covariance_mode: CovarianceMode::Vicreg,
                    ..*params
                },
            ),
            LossKind::VicRegHsic => vicreg_family_loss(
                tape,
                za,
                zb,
                &LossParams {
                    covariance_mode: CovarianceMode::Hsic,
                    ..*params
                },
            ),
            LossKind::BarlowTwins => Ok(single("bt", barlow_twins_loss(tape, za, zb, params.lambda_bt)?)),
            LossKind::Hsic => Ok(single("hsic", hsic_loss(tape, za, zb, params.lambda_bt)?)),
            LossKind::NtXent => Ok(single("ntxent", nt_xent_loss(tape, za, zb, params.temperature)?)),
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match key.as_str() {
            "vicreg" => Ok(LossKind::VicReg),
            "vicreghsic" => Ok(LossKind::VicRegHsic),
            "bt" | "barlowtwins" | "barlow" => Ok(LossKind::BarlowTwins),
            "hsic" => Ok(LossKind::Hsic),
            "ntxent" | "infonce" | "simclr" => Ok(LossKind::NtXent),
            _ => Err(Error::invalid(format!("unknown loss '{s}'"))),
        }
    }
}

/// A scalar loss and the named terms it was summed from.
#[derive(Clone, Debug)]
pub struct LossTerms {
    pub total: Var,
    pub components: Vec<(&'static str, Var)>,
}

impl LossTerms {
    pub fn describe(&self, tape: &Tape) -> String {
        self.components
            .iter()
            .map(|(name, v)| format!("{name}={}", tape.value(*v).data()[0]))
            .collect::<Vec<_>>()
            .join(", ")
    }
}

fn check_pair(tape: &Tape, za: Var, zb: Var, min_rows: usize) -> Result<(usize, usize)> {
    let (a, b) = (tape.value(za), tape.value(zb));
    if !a.is_matrix() || a.shape() != b.shape() {
        return Err(Error::shape("loss", a.shape(), b.shape()));
    }
    check_rows(a, min_rows)?;
    Ok((a.rows(), a.cols()))
}

fn check_rows(z: &Tensor, min_rows: usize) -> Result<()> {
    if z.rows() < min_rows {
        return Err(Error::DegenerateBatch(format!(
            "need at least {min_rows} rows, got {}",
            z.rows()
        )));
    }
    Ok(())
}

fn off_diagonal_mask(d: usize) -> Tensor {
    let mut m = Tensor::filled(d, d, 1.0);
    for i in 0..d {
        m.set(i, i, 0.0);
    }
    m
}

fn square(tape: &mut Tape, x: Var) -> Result<Var> {
    tape.mul(x, x)
}

/// Mean over rows of the squared `p`-norm of `Za − Zb`.
pub fn invariance_term(tape: &mut Tape, za: Var, zb: Var, p: f64) -> Result<Var> {
    check_pair(tape, za, zb, 1)?;
    if p < 1.0 {
        return Err(Error::invalid(format!("p must be at least 1, got {p}")));
    }
    let diff = tape.sub(za, zb)?;
    let squared_norms = if p == 2.0 {
        let sq = square(tape, diff)?;
        tape.sum_rows(sq)?
    } else {
        let abs = tape.abs(diff);
        let powered = tape.pow(abs, p)?;
        let sums = tape.sum_rows(powered)?;
        tape.pow(sums, 2.0 / p)?
    };
    Ok(tape.mean(squared_norms))
}

/// Mean over dimensions of `max(0, γ − sqrt(Var + ε))`, unbiased variance.
pub fn variance_term(tape: &mut Tape, z: Var, gamma: f64, epsilon: f64) -> Result<Var> {
    check_rows(tape.value(z), 2)?;
    let var = tape.var_axis0(z)?;
    let shifted = tape.add_scalar(var, epsilon);
    let std = tape.sqrt(shifted)?;
    let neg = tape.scale(std, -1.0);
    let gap = tape.add_scalar(neg, gamma);
    let hinge = tape.relu(gap);
    Ok(tape.mean(hinge))
}

/// `(Z − mean)ᵀ(Z − mean) / (n − 1)`.
pub fn covariance_matrix(tape: &mut Tape, z: Var) -> Result<Var> {
    let zv = tape.value(z);
    if !zv.is_matrix() {
        return Err(Error::shape("covariance_matrix", zv.shape(), &[]));
    }
    check_rows(zv, 2)?;
    let n = zv.rows();
    let mean = tape.mean_axis0(z)?;
    let centered = tape.sub(z, mean)?;
    let ct = tape.transpose(centered)?;
    let gram = tape.matmul(ct, centered)?;
    Ok(tape.scale(gram, 1.0 / (n - 1) as f64))
}

/// `(1/d) Σ_{i≠j} C_ij²` in vicreg mode, `(1/d) Σ_{i≠j} (1 + C_ij)²` in hsic mode.
pub fn covariance_term(tape: &mut Tape, z: Var, mode: CovarianceMode) -> Result<Var> {
    let d = tape.value(z).cols();
    let cov = covariance_matrix(tape, z)?;
    let shifted = match mode {
        CovarianceMode::Vicreg => cov,
        CovarianceMode::Hsic => tape.add_scalar(cov, 1.0),
    };
    let sq = square(tape, shifted)?;
    let mask = tape.constant(off_diagonal_mask(d));
    let off = tape.mul(sq, mask)?;
    let total = tape.sum(off);
    Ok(tape.scale(total, 1.0 / d as f64))
}

/// `λ·s(Za, Zb) + μ·[v(Za) + v(Zb)] + ν·[c(Za) + c(Zb)]`.
pub fn vicreg_family_loss(tape: &mut Tape, za: Var, zb: Var, params: &LossParams) -> Result<LossTerms> {
    check_pair(tape, za, zb, 2)?;
    let sim = invariance_term(tape, za, zb, params.p)?;
    let va = variance_term(tape, za, params.gamma, params.epsilon)?;
    let vb = variance_term(tape, zb, params.gamma, params.epsilon)?;
    let std = tape.add(va, vb)?;
    let ca = covariance_term(tape, za, params.covariance_mode)?;
    let cb = covariance_term(tape, zb, params.covariance_mode)?;
    let cov = tape.add(ca, cb)?;

    let weighted_sim = tape.scale(sim, params.lambda);
    let weighted_std = tape.scale(std, params.mu);
    let weighted_cov = tape.scale(cov, params.nu);
    let partial = tape.add(weighted_sim, weighted_std)?;
    let total = tape.add(partial, weighted_cov)?;
    Ok(LossTerms {
        total,
        components: vec![("invariance", sim), ("variance", std), ("covariance", cov)],
    })
}

/// Columns scaled to zero mean and unit population variance.
fn standardize(tape: &mut Tape, z: Var) -> Result<Var> {
    let mean = tape.mean_axis0(z)?;
    let centered = tape.sub(z, mean)?;
    let sq = square(tape, centered)?;
    let var = tape.mean_axis0(sq)?;
    if let Some(j) = tape.value(var).data().iter().position(|&v| !(v > 0.0)) {
        return Err(Error::DegenerateBatch(format!("column {j} has zero variance")));
    }
    let std = tape.sqrt(var)?;
    let inv = tape.pow(std, -1.0)?;
    tape.mul(centered, inv)
}

/// Cross-correlation matrix of the standardized views, `d × d`.
pub fn cross_correlation(tape: &mut Tape, za: Var, zb: Var) -> Result<Var> {
    let (n, _) = check_pair(tape, za, zb, 2)?;
    let a = standardize(tape, za)?;
    let b = standardize(tape, zb)?;
    let at = tape.transpose(a)?;
    let prod = tape.matmul(at, b)?;
    Ok(tape.scale(prod, 1.0 / n as f64))
}

fn cross_correlation_loss(
    tape: &mut Tape,
    za: Var,
    zb: Var,
    off_diagonal_weight: f64,
    off_diagonal_target: f64,
) -> Result<Var> {
    let d = tape.value(za).cols();
    let r = cross_correlation(tape, za, zb)?;

    let neg = tape.scale(r, -1.0);
    let gap = tape.add_scalar(neg, 1.0);
    let gap_sq = square(tape, gap)?;
    let eye = tape.constant(Tensor::identity(d));
    let diag = tape.mul(gap_sq, eye)?;
    let on = tape.sum(diag);

    let shifted = tape.add_scalar(r, -off_diagonal_target);
    let shifted_sq = square(tape, shifted)?;
    let mask = tape.constant(off_diagonal_mask(d));
    let off_terms = tape.mul(shifted_sq, mask)?;
    let off_sum = tape.sum(off_terms);
    let off = tape.scale(off_sum, off_diagonal_weight);
    tape.add(on, off)
}

/// `Σ_i (1 − R_ii)² + λ_bt Σ_{i≠j} R_ij²` over the cross-correlation `R`.
pub fn barlow_twins_loss(tape: &mut Tape, za: Var, zb: Var, lambda_bt: f64) -> Result<Var> {
    cross_correlation_loss(tape, za, zb, lambda_bt, 0.0)
}

/// `Σ_i (1 − R_ii)² + λ_bt Σ_{i≠j} (1 + R_ij)²`: the cross-correlation
/// objective with off-diagonals pulled toward −1.
pub fn hsic_loss(tape: &mut Tape, za: Var, zb: Var, lambda_bt: f64) -> Result<Var> {
    cross_correlation_loss(tape, za, zb, lambda_bt, -1.0)
}

// Added to self-similarities before the softmax; exp of it underflows to 0.
const SELF_SIMILARITY_MASK: f64 = -1e12;

/// Normalized-temperature cross-entropy averaged over all `2n` anchors.
///
/// Each row's positive is its counterpart in the other view; the other
/// `2n − 2` rows are negatives.
pub fn nt_xent_loss(tape: &mut Tape, za: Var, zb: Var, temperature: f64) -> Result<Var> {
    let (n, _) = check_pair(tape, za, zb, 2)?;
    if !(temperature > 0.0) {
        return Err(Error::invalid("temperature must be positive"));
    }
    let all = tape.concat_rows(&[za, zb])?;
    let unit = tape.l2_row_normalize(all)?;
    let unit_t = tape.transpose(unit)?;
    let sim = tape.matmul(unit, unit_t)?;
    let logits = tape.scale(sim, 1.0 / temperature);

    let m = 2 * n;
    let mut self_mask = Tensor::zeros(m, m);
    let mut positives = Tensor::zeros(m, m);
    for i in 0..m {
        self_mask.set(i, i, SELF_SIMILARITY_MASK);
        positives.set(i, (i + n) % m, 1.0);
    }
    let self_mask = tape.constant(self_mask);
    let masked = tape.add(logits, self_mask)?;
    let log_probs = tape.log_softmax_rows(masked)?;
    let positives = tape.constant(positives);
    let picked = tape.mul(log_probs, positives)?;
    let total = tape.sum(picked);
    Ok(tape.scale(total, -1.0 / m as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval(f: impl FnOnce(&mut Tape) -> Result<Var>) -> f64 {
        let mut tape = Tape::new();
        let v = f(&mut tape).unwrap();
        tape.value(v).item().unwrap()
    }

    fn m(rows: usize, cols: usize, data: &[f64]) -> Tensor {
        Tensor::matrix(rows, cols, data.to_vec()).unwrap()
    }

    #[test]
    fn invariance_examples() {
        let a = m(1, 2, &[3.0, 4.0]);
        let zero = m(1, 2, &[0.0, 0.0]);
        let run = |p: f64, x: &Tensor, y: &Tensor| {
            eval(|t| {
                let (xa, xb) = (t.constant(x.clone()), t.constant(y.clone()));
                invariance_term(t, xa, xb, p)
            })
        };
        assert_eq!(run(2.0, &a, &a), 0.0);
        assert_eq!(run(2.0, &a, &zero), 25.0);
        assert_eq!(run(1.0, &a, &zero), 49.0);
        assert_eq!(run(3.0, &a, &zero), run(3.0, &zero, &a));
    }

    #[test]
    fn variance_examples() {
        let run = |z: Tensor| {
            eval(|t| {
                let z = t.constant(z);
                variance_term(t, z, 1.0, 1e-4)
            })
        };
        assert!((run(m(3, 2, &[2.0; 6])) - 0.99).abs() < 1e-15);
        assert_eq!(run(m(2, 1, &[1.0, -1.0])), 0.0);
        assert_eq!(run(m(3, 1, &[-5.0, 0.0, 5.0])), 0.0);
        let mut tape = Tape::new();
        let z = tape.constant(m(1, 2, &[1.0, 2.0]));
        assert!(matches!(variance_term(&mut tape, z, 1.0, 1e-4), Err(Error::DegenerateBatch(_))));
    }

    #[test]
    fn covariance_examples() {
        let mut tape = Tape::new();
        let z = tape.constant(m(2, 2, &[1.0, 1.0, -1.0, -1.0]));
        let c = covariance_matrix(&mut tape, z).unwrap();
        assert_eq!(tape.value(c).data(), &[2.0, 2.0, 2.0, 2.0]);
        let vic = covariance_term(&mut tape, z, CovarianceMode::Vicreg).unwrap();
        let hsic = covariance_term(&mut tape, z, CovarianceMode::Hsic).unwrap();
        assert_eq!(tape.value(vic).data(), &[4.0]);
        assert_eq!(tape.value(hsic).data(), &[9.0]);

        let constant = tape.constant(m(3, 2, &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]));
        let c = covariance_matrix(&mut tape, constant).unwrap();
        assert!(tape.value(c).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn covariance_term_optima() {
        // Independent columns: diagonal covariance.
        let diag = m(4, 2, &[1.0, 1.0, 1.0, -1.0, -1.0, 1.0, -1.0, -1.0]);
        let v = eval(|t| {
            let z = t.constant(diag.clone());
            covariance_term(t, z, CovarianceMode::Vicreg)
        });
        assert_eq!(v, 0.0);
        // Columns (x, −x) with unit variance: off-diagonal covariance −1.
        let anti = m(2, 2, &[0.5f64.sqrt(), -(0.5f64.sqrt()), -(0.5f64.sqrt()), 0.5f64.sqrt()]);
        let h = eval(|t| {
            let z = t.constant(anti.clone());
            covariance_term(t, z, CovarianceMode::Hsic)
        });
        assert!(h.abs() < 1e-15, "{h}");
    }

    #[test]
    fn vicreg_family_examples() {
        let rows = m(2, 2, &[1.0, 1.0, -1.0, -1.0]);
        let run = |z: &Tensor, mode| {
            eval(|t| {
                let (a, b) = (t.constant(z.clone()), t.constant(z.clone()));
                let params = LossParams {
                    covariance_mode: mode,
                    ..LossParams::default()
                };
                Ok(vicreg_family_loss(t, a, b, &params)?.total)
            })
        };
        assert_eq!(run(&rows, CovarianceMode::Vicreg), 8.0);
        assert_eq!(run(&rows, CovarianceMode::Hsic), 18.0);
        let constant = m(4, 3, &[0.7; 12]);
        assert!((run(&constant, CovarianceMode::Vicreg) - 49.5).abs() < 1e-12);
    }

    #[test]
    fn barlow_twins_examples() {
        let z = m(3, 2, &[1.0, 0.0, 2.0, 5.0, 4.0, 1.0]);
        let neg = z.map(|v| -v);
        let mut tape = Tape::new();
        let (a, b) = (tape.constant(z.clone()), tape.constant(z.clone()));
        let r = cross_correlation(&mut tape, a, b).unwrap();
        let rv = tape.value(r).clone();
        assert!((rv.get(0, 0) - 1.0).abs() < 1e-12 && (rv.get(1, 1) - 1.0).abs() < 1e-12);
        let loss = barlow_twins_loss(&mut tape, a, b, 5e-3).unwrap();
        let expected = 5e-3 * (rv.get(0, 1).powi(2) + rv.get(1, 0).powi(2));
        assert!((tape.value(loss).data()[0] - expected).abs() < 1e-12);

        let c = tape.constant(neg);
        let flipped = barlow_twins_loss(&mut tape, a, c, 0.0).unwrap();
        assert!((tape.value(flipped).data()[0] - 8.0).abs() < 1e-12);

        let flat = tape.constant(m(3, 2, &[1.0, 0.0, 1.0, 5.0, 1.0, 1.0]));
        assert!(matches!(
            barlow_twins_loss(&mut tape, flat, a, 5e-3),
            Err(Error::DegenerateBatch(_))
        ));
    }

    #[test]
    fn nt_xent_orthonormal() {
        let z = m(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let loss = eval(|t| {
            let (a, b) = (t.constant(z.clone()), t.constant(z.clone()));
            nt_xent_loss(t, a, b, 0.5)
        });
        // Every anchor: positive logit 2, two negatives at 0, self masked.
        let e2 = 2.0f64.exp();
        let expected = -(e2 / (e2 + 2.0)).ln();
        assert!((loss - expected).abs() < 1e-12, "{loss} vs {expected}");
    }

    #[test]
    fn nt_xent_row_scaling_invariance() {
        let a = m(3, 2, &[1.0, 0.5, -0.3, 2.0, 0.7, -1.1]);
        let b = m(3, 2, &[0.9, 0.4, -0.2, 1.5, 1.0, -0.8]);
        let mut scaled = a.clone();
        scaled.row_mut(1).iter_mut().for_each(|v| *v *= 7.0);
        let run = |x: &Tensor| {
            eval(|t| {
                let (xa, xb) = (t.constant(x.clone()), t.constant(b.clone()));
                nt_xent_loss(t, xa, xb, 0.5)
            })
        };
        assert!((run(&a) - run(&scaled)).abs() < 1e-12);
    }

    #[test]
    fn parse_loss_names() {
        for kind in LossKind::ALL {
            assert_eq!(kind.name().parse::<LossKind>().unwrap(), kind);
        }
        assert_eq!("VICReg-HSIC".parse::<LossKind>().unwrap(), LossKind::VicRegHsic);
        assert_eq!("InfoNCE".parse::<LossKind>().unwrap(), LossKind::NtXent);
        assert!("triplet".parse::<LossKind>().is_err());
    }

    #[test]
    fn params_validation() {
        assert!(LossParams::default().validate().is_ok());
        for bad in [
            LossParams { epsilon: 0.0, ..Default::default() },
            LossParams { gamma: -1.0, ..Default::default() },
            LossParams { temperature: 0.0, ..Default::default() },
            LossParams { p: 0.5, ..Default::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }
}
