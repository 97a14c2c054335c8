use super::{softmax_xent, Mode, Network, Result, Tensor};
use serde::Serialize;

/// Outcome of a finite-difference gradient check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub max_relative_error: f64,
    /// Where the worst error occurred, e.g. `param 3 [17]` or `input [5]`.
    pub worst: String,
    pub checked: usize,
}

/// Denominator floor: entries whose gradient is this small are compared in
/// absolute terms, since their relative error is pure rounding noise.
const FLOOR: f64 = 1e-6;

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

fn loss(net: &Network, x: &Tensor, label: usize) -> Result<f64> {
    let (logits, _) = net.forward_cached(x, None)?;
    Ok(softmax_xent(logits.values(), label)?.0)
}

/// Compares analytic gradients against central differences with step `eps`
/// for every parameter and every input element. Dropout is in eval mode.
pub fn gradcheck(net: &mut Network, x: &Tensor, label: usize, eps: f64) -> Result<GradcheckReport> {
    net.zero_grad();
    let (_, dx) = net.accumulate_gradients(x, label, Mode::Eval)?;
    let analytic: Vec<Vec<f64>> = net
        .params()
        .iter()
        .map(|p| p.grad().map_or_else(|| vec![0.0; p.len()], <[f64]>::to_vec))
        .collect();
    net.zero_grad();

    let mut report = GradcheckReport { max_relative_error: 0.0, worst: String::new(), checked: 0 };
    let record = |report: &mut GradcheckReport, a: f64, n: f64, at: String| {
        let err = relative_error(a, n);
        report.checked += 1;
        if err > report.max_relative_error || !err.is_finite() {
            report.max_relative_error = err;
            report.worst = at;
        }
    };

    for (pi, grads) in analytic.iter().enumerate() {
        for (k, &a) in grads.iter().enumerate() {
            let orig = net.params()[pi].values()[k];
            net.params_mut()[pi].values_mut()[k] = orig + eps;
            let up = loss(net, x, label)?;
            net.params_mut()[pi].values_mut()[k] = orig - eps;
            let down = loss(net, x, label)?;
            net.params_mut()[pi].values_mut()[k] = orig;
            record(&mut report, a, (up - down) / (2.0 * eps), format!("param {pi} [{k}]"));
        }
    }

    let mut probe = x.clone();
    for k in 0..x.len() {
        let orig = probe.values()[k];
        probe.values_mut()[k] = orig + eps;
        let up = loss(net, &probe, label)?;
        probe.values_mut()[k] = orig - eps;
        let down = loss(net, &probe, label)?;
        probe.values_mut()[k] = orig;
        record(&mut report, dx.values()[k], (up - down) / (2.0 * eps), format!("input [{k}]"));
    }
    Ok(report)
}
