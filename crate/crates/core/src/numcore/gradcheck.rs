//! Central-difference gradient checking.
//!
//! Verifies analytic gradients against `(f(x+eps) - f(x-eps)) / (2 eps)`
//! elementwise. The comparison is a relative error with a floored
//! denominator, plus an absolute escape hatch for entries where both values
//! sit inside finite-difference noise.

use serde::Serialize;

use super::tensor::Tensor;

/// Tuning knobs for [`grad_check`].
#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    /// Perturbation size for the central difference.
    pub epsilon: f64,
    /// Maximum allowed relative error.
    pub tolerance: f64,
    /// When set, stride-sample at most this many elements per parameter.
    pub max_checks_per_param: Option<usize>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            epsilon: 1e-4,
            tolerance: 1e-3,
            max_checks_per_param: None,
        }
    }
}

/// Per-parameter check summary.
#[derive(Clone, Debug, Serialize)]
pub struct ParamCheck {
    pub name: String,
    pub elements: usize,
    pub checked: usize,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub worst_index: usize,
    pub analytic_at_worst: f64,
    pub numeric_at_worst: f64,
}

/// Result of a full gradient check.
#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub epsilon: f64,
    pub tolerance: f64,
    pub max_rel_err: f64,
    pub pass: bool,
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    /// The parameter with the largest relative error, if any were checked.
    pub fn worst(&self) -> Option<&ParamCheck> {
        self.params
            .iter()
            .max_by(|a, b| a.max_rel_err.total_cmp(&b.max_rel_err))
    }
}

/// Relative error with a floored denominator. Differences at or below
/// `1e-9` count as zero: central differences with `eps ~ 1e-5` cannot
/// resolve anything finer.
fn rel_err(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff <= 1e-9 {
        return 0.0;
    }
    diff / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Checks analytic gradients of `eval` against central differences.
///
/// `eval(tensors, want_grads)` must return the loss at `tensors`, plus
/// (when `want_grads` is set) one gradient buffer per parameter in the same
/// order as `params`. The closure must be a pure function of the tensors so
/// that repeated evaluations are comparable; anything stochastic (dropout,
/// sampling) must be frozen by the caller.
pub fn grad_check<F>(
    params: &[(String, Tensor)],
    opts: &GradCheckOptions,
    mut eval: F,
) -> GradCheckReport
where
    F: FnMut(&[Tensor], bool) -> (f64, Option<Vec<Vec<f64>>>),
{
    let mut tensors: Vec<Tensor> = params.iter().map(|(_, t)| t.clone()).collect();

    let (loss0, grads) = eval(&tensors, true);
    assert!(
        loss0.is_finite(),
        "gradient check loss is not finite: {loss0}"
    );
    let grads = grads.expect("eval must return gradients when asked");
    assert_eq!(grads.len(), params.len(), "gradient count mismatch");

    let mut checks = Vec::with_capacity(params.len());
    let mut max_rel = 0.0f64;

    for (pi, (name, _)) in params.iter().enumerate() {
        let n = tensors[pi].len();
        assert_eq!(grads[pi].len(), n, "gradient length mismatch for {name}");

        let stride = match opts.max_checks_per_param {
            Some(m) if m > 0 && n > m => n.div_ceil(m),
            _ => 1,
        };

        let mut check = ParamCheck {
            name: name.clone(),
            elements: n,
            checked: 0,
            max_rel_err: 0.0,
            max_abs_err: 0.0,
            worst_index: 0,
            analytic_at_worst: 0.0,
            numeric_at_worst: 0.0,
        };

        let mut idx = 0;
        while idx < n {
            let saved = tensors[pi].data()[idx];
            tensors[pi].data_mut()[idx] = saved + opts.epsilon;
            let (lp, _) = eval(&tensors, false);
            tensors[pi].data_mut()[idx] = saved - opts.epsilon;
            let (lm, _) = eval(&tensors, false);
            tensors[pi].data_mut()[idx] = saved;

            let numeric = (lp - lm) / (2.0 * opts.epsilon);
            let analytic = grads[pi][idx];
            let rel = rel_err(analytic, numeric);
            let abs = (analytic - numeric).abs();

            check.checked += 1;
            if rel > check.max_rel_err || check.checked == 1 {
                check.max_rel_err = rel;
                check.worst_index = idx;
                check.analytic_at_worst = analytic;
                check.numeric_at_worst = numeric;
            }
            check.max_abs_err = check.max_abs_err.max(abs);

            idx += stride;
        }

        max_rel = max_rel.max(check.max_rel_err);
        checks.push(check);
    }

    GradCheckReport {
        epsilon: opts.epsilon,
        tolerance: opts.tolerance,
        max_rel_err: max_rel,
        pass: max_rel <= opts.tolerance,
        params: checks,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{Graph, Tensor};

    /// loss = sum(tanh(W x)) with fixed x; exercises matvec + tanh + sum.
    fn eval_net(tensors: &[Tensor], want: bool, scale: f64) -> (f64, Option<Vec<Vec<f64>>>) {
        let mut g = Graph::new();
        g.set_tanh_grad_scale(scale);
        let w = g.leaf(tensors[0].clone(), true);
        let x = g.constant(Tensor::vector(vec![0.3, -0.8, 0.5]));
        let y = g.matvec(w, x);
        let t = g.tanh(y);
        let s = g.sum(t);
        let loss = g.value(s).data()[0];
        if want {
            g.backward(s);
            (loss, Some(vec![g.grad(w).to_vec()]))
        } else {
            (loss, None)
        }
    }

    fn weight() -> (String, Tensor) {
        let data: Vec<f64> = (0..12).map(|i| ((i as f64) * 0.61).sin() * 0.7).collect();
        ("w".to_string(), Tensor::matrix(4, 3, data))
    }

    #[test]
    fn exact_gradients_pass() {
        let params = vec![weight()];
        let report = grad_check(&params, &GradCheckOptions::default(), |t, want| {
            eval_net(t, want, 1.0)
        });
        assert!(report.pass, "max rel err {}", report.max_rel_err);
        assert!(report.max_rel_err < 1e-6);
        assert_eq!(report.params[0].checked, 12);
    }

    #[test]
    fn corrupted_backward_fails() {
        let params = vec![weight()];
        let report = grad_check(&params, &GradCheckOptions::default(), |t, want| {
            eval_net(t, want, 1.02)
        });
        assert!(!report.pass, "a 2% gradient corruption must be flagged");
        assert!(report.max_rel_err > 1e-2 * 0.5);
    }

    #[test]
    fn sampling_reduces_checked_count() {
        let params = vec![weight()];
        let opts = GradCheckOptions {
            max_checks_per_param: Some(4),
            ..GradCheckOptions::default()
        };
        let report = grad_check(&params, &opts, |t, want| eval_net(t, want, 1.0));
        assert!(report.params[0].checked <= 4);
        assert!(report.pass);
    }

    #[test]
    fn report_worst_points_at_largest_error() {
        let params = vec![weight()];
        let report = grad_check(&params, &GradCheckOptions::default(), |t, want| {
            eval_net(t, want, 1.05)
        });
        let worst = report.worst().unwrap();
        assert_eq!(worst.name, "w");
        assert_eq!(worst.max_rel_err, report.max_rel_err);
    }
}
