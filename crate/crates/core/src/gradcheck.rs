//! Central finite-difference gradient checking.
//!
//! Only forward evaluation of the function under test is used to build the
//! numerical reference, so the check is independent of the backward rules.

use crate::error::Result;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Largest element-wise relative error over all inputs.
    pub max_rel_err: f64,
    /// (input index, element index) of the worst element.
    pub worst: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
}

/// Relative error `|a - n| / max(|a|, |n|, floor)`.
pub fn rel_err(a: f64, n: f64, floor: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(floor)
}

/// Compares backward gradients of the scalar `f` against central
/// differences with step `h` at every element of every input.
pub fn check<F>(inputs: &[(Vec<usize>, Vec<f64>)], h: f64, floor: f64, f: F) -> Result<GradCheckReport>
where
    F: Fn(&[Tensor]) -> Result<Tensor>,
{
    let tracked: Vec<Tensor> = inputs
        .iter()
        .map(|(s, d)| Tensor::param(s, d.clone()))
        .collect::<Result<_>>()?;
    f(&tracked)?.backward()?;
    let analytic: Vec<Vec<f64>> = tracked
        .iter()
        .map(|t| t.grad().unwrap_or_else(|| vec![0.0; t.numel()]))
        .collect();

    let eval = |which: usize, at: usize, delta: f64| -> Result<f64> {
        let consts: Vec<Tensor> = inputs
            .iter()
            .enumerate()
            .map(|(i, (s, d))| {
                let mut d = d.clone();
                if i == which {
                    d[at] += delta;
                }
                Tensor::new(s, d)
            })
            .collect::<Result<_>>()?;
        f(&consts)?.item()
    };

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: (0, 0),
        analytic: 0.0,
        numeric: 0.0,
    };
    for (i, (_, d)) in inputs.iter().enumerate() {
        for j in 0..d.len() {
            let numeric = (eval(i, j, h)? - eval(i, j, -h)?) / (2.0 * h);
            let a = analytic[i][j];
            let e = rel_err(a, numeric, floor);
            if e > report.max_rel_err || (i, j) == (0, 0) {
                report = GradCheckReport {
                    max_rel_err: e.max(report.max_rel_err),
                    worst: (i, j),
                    analytic: a,
                    numeric,
                };
            }
        }
    }
    Ok(report)
}
