use super::{Tape, Tensor, Var};
use crate::error::Result;

/// Compares the reverse-mode gradient of `f` at `point` with central
/// differences of width `2 * step`.
///
/// Returns the largest `|a − b| / max(1, |a|, |b|)` over all coordinates.
/// `f` receives a fresh tape and the parameter handle, and must return a
/// scalar.
pub fn finite_difference_check<F>(f: F, point: &Tensor, step: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let eval = |at: &Tensor| -> Result<f64> {
        let mut tape = Tape::new();
        let x = tape.param(at.clone());
        let out = f(&mut tape, x)?;
        tape.value(out).item()
    };

    let mut tape = Tape::new();
    let x = tape.param(point.clone());
    let out = f(&mut tape, x)?;
    let analytic = tape.backward(out)?.wrt(&tape, x);

    let mut worst = 0.0_f64;
    let mut probe = point.clone();
    for i in 0..point.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + step;
        let plus = eval(&probe)?;
        probe.data_mut()[i] = orig - step;
        let minus = eval(&probe)?;
        probe.data_mut()[i] = orig;

        let numeric = (plus - minus) / (2.0 * step);
        let a = analytic.data()[i];
        let err = (a - numeric).abs() / 1.0_f64.max(a.abs()).max(numeric.abs());
        worst = worst.max(err);
    }
    Ok(worst)
}
