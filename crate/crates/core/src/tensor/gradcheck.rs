//! Central finite-difference checks for tape gradients.
//!
//! The numerical side only ever evaluates the forward function, so it stays
//! independent of the backward rules it is checking.

use rand::Rng;

use super::{seeded_rng, Result, Tape, Tensor, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub probes: usize,
    pub max_rel_error: f64,
    /// `(input index, flat entry, analytic, numeric)` of the worst probe.
    pub worst: Option<(usize, usize, f64, f64)>,
}

/// Relative error with a small absolute floor, so near-zero gradients do not
/// blow up the ratio.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Compares analytic gradients of the scalar `f(inputs)` against central
/// differences with step `h`, on up to `probes_per_input` random entries of
/// every input (all entries when the input is smaller).
pub fn check_gradients<F>(
    inputs: &[Tensor],
    f: F,
    h: f64,
    probes_per_input: usize,
    seed: u64,
) -> Result<GradCheckReport>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let tape = Tape::new();
    let vars: Vec<Var<'_>> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let out = f(&tape, &vars)?;
    let grads = tape.backward(out)?;
    let analytic: Vec<Tensor> = vars.iter().map(|v| grads.wrt(*v).cloned()).collect::<Result<_>>()?;

    let eval = |xs: &[Tensor]| -> Result<f64> {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = xs.iter().map(|t| tape.param(t.clone())).collect();
        f(&tape, &vars)?.value().item()
    };

    let mut rng = seeded_rng(seed);
    let mut report = GradCheckReport { probes: 0, max_rel_error: 0.0, worst: None };
    for (i, input) in inputs.iter().enumerate() {
        let entries: Vec<usize> = if input.len() <= probes_per_input {
            (0..input.len()).collect()
        } else {
            (0..probes_per_input).map(|_| rng.random_range(0..input.len())).collect()
        };
        for j in entries {
            let mut xs = inputs.to_vec();
            let mut plus = input.to_vec();
            plus[j] += h;
            xs[i] = Tensor::new(input.shape(), plus)?;
            let fp = eval(&xs)?;
            let mut minus = input.to_vec();
            minus[j] -= h;
            xs[i] = Tensor::new(input.shape(), minus)?;
            let fm = eval(&xs)?;
            let numeric = (fp - fm) / (2.0 * h);
            let a = analytic[i].data()[j];
            let err = relative_error(a, numeric);
            report.probes += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                if err >= report.max_rel_error {
                    report.worst = Some((i, j, a, numeric));
                }
            }
        }
    }
    Ok(report)
}
