//! Central finite-difference gradient checking at 64-bit precision.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Fault, Tape, Var};
use crate::error::Result;
use crate::tensor::Tensor;

pub const DEFAULT_STEP: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    pub step: f64,
    /// Further steps tried where `step` disagrees; each coordinate keeps its
    /// smallest error. A larger step resolves components near the roundoff
    /// floor of `step`, a smaller one steps around a nearby kink.
    pub fallback_steps: Vec<f64>,
    /// Check at most this many coordinates per input, chosen by `seed`.
    pub max_coords: Option<usize>,
    pub seed: u64,
    /// Record the analytic pass on a tape carrying this fault.
    pub fault: Option<Fault>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: DEFAULT_STEP,
            fallback_steps: Vec::new(),
            max_coords: None,
            seed: 0,
            fault: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(input index, flat coordinate)` of the worst coordinate.
    pub worst: Option<(usize, usize)>,
    pub coords_checked: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Max relative error between the tape gradient of scalar `f` at `point`
/// and its central difference estimate, over every coordinate.
pub fn grad_check<F>(f: F, point: &Tensor<f64>) -> Result<f64>
where
    F: for<'t> Fn(&Var<'t, f64>) -> Result<Var<'t, f64>>,
{
    let report = grad_check_inputs(
        |xs| f(&xs[0]),
        std::slice::from_ref(point),
        &GradCheckOptions::default(),
    )?;
    Ok(report.max_rel_error)
}

/// Multi-input variant: each entry of `points` becomes one leaf.
pub fn grad_check_inputs<F>(
    f: F,
    points: &[Tensor<f64>],
    opts: &GradCheckOptions,
) -> Result<GradCheckReport>
where
    F: for<'t> Fn(&[Var<'t, f64>]) -> Result<Var<'t, f64>>,
{
    let tape = match opts.fault {
        Some(fault) => Tape::with_fault(fault),
        None => Tape::new(),
    };
    let leaves: Vec<Var<'_, f64>> = points.iter().map(|p| tape.leaf(p.clone())).collect();
    let out = f(&leaves)?;
    let grads = tape.backward(&out)?;
    let analytic: Vec<Tensor<f64>> = leaves.iter().map(|l| grads.of(l)).collect();

    let eval = |inputs: &[Tensor<f64>]| -> Result<f64> {
        let tape = Tape::inference();
        let vars: Vec<_> = inputs.iter().map(|p| tape.constant(p.clone())).collect();
        let y = f(&vars)?;
        Ok(y.value().data()[0])
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut work: Vec<Tensor<f64>> = points.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        coords_checked: 0,
    };
    for (i, point) in points.iter().enumerate() {
        let n = point.len();
        let coords: Vec<usize> = match opts.max_coords {
            Some(m) if m < n => sample(&mut rng, n, m).into_vec(),
            _ => (0..n).collect(),
        };
        for c in coords {
            let x0 = point.data()[c];
            let a = analytic[i].data()[c];
            let mut err = f64::INFINITY;
            for h in std::iter::once(opts.step).chain(opts.fallback_steps.iter().copied()) {
                work[i].data_mut()[c] = x0 + h;
                let fp = eval(&work)?;
                work[i].data_mut()[c] = x0 - h;
                let fm = eval(&work)?;
                work[i].data_mut()[c] = x0;
                err = err.min(relative_error(a, (fp - fm) / (2.0 * h)));
                if err < 1e-6 {
                    break;
                }
            }
            report.coords_checked += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                report.worst = Some((i, c));
            }
        }
    }
    Ok(report)
}
