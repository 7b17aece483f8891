//! Central finite-difference verification of analytic gradients.

/// Outcome of [`grad_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Max over checked parameters of
    /// `|analytic - central| / max(|analytic|, |central|, floor)`, where
    /// `floor` is the smallest slope central differences can resolve to
    /// better than 1e-5 relative (see [`grad_check`]).
    pub max_rel_error: f64,
    pub worst_index: Option<usize>,
    pub checked: usize,
    /// Checked parameters whose slope lay below the resolution floor.
    pub floored: usize,
    /// Parameters skipped because the loss is not smooth (or is dominated by
    /// rounding) within one step of them.
    pub excluded: Vec<usize>,
}

/// Relative disagreement between one-sided and central slopes beyond which a
/// parameter is treated as sitting on a kink.
const KINK_TOLERANCE: f64 = 1e-5;

/// Compares the analytic gradient returned by `loss` at `params` against
/// central differences with step `perturbation`.
///
/// Kink guard: with `D(h) = fwd(h) - bwd(h)` and `c(h)` the central slope,
/// a smooth loss has `D(h) ≈ 2 D(h/2)` and `c(h) ≈ c(h/2)`. A rectifier or
/// hinge kink within `h` of the parameter breaks at least one of these, so
/// a parameter whose central slope disagrees with the analytic one and that
/// fails either test is excluded rather than reported as an error.
///
/// Resolution floor: rounding in the two loss evaluations perturbs the
/// central slope by about `eps * (|f(+h)| + |f(-h)|) / 2h`. Slopes within
/// `1e5` times that bound cannot be compared relatively, so the comparison
/// scale never drops below it.
pub fn grad_check<F>(loss: F, params: &[f64], perturbation: f64) -> GradCheckReport
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let (_, analytic) = loss(params);
    grad_check_values(|p| loss(p).0, &analytic, params, perturbation)
}

/// [`grad_check`] for a loss evaluated without its gradient; `analytic` is
/// the gradient at `params`. Cheaper when the gradient is costly.
pub fn grad_check_values<F>(value: F, analytic: &[f64], params: &[f64], perturbation: f64) -> GradCheckReport
where
    F: Fn(&[f64]) -> f64,
{
    assert_eq!(analytic.len(), params.len(), "gradient length");
    let f0 = value(params);
    let mut probe = params.to_vec();
    let mut eval = |i: usize, delta: f64| {
        probe[i] = params[i] + delta;
        let v = value(&probe);
        probe[i] = params[i];
        v
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: None,
        checked: 0,
        floored: 0,
        excluded: Vec::new(),
    };
    let h = perturbation;
    for i in 0..params.len() {
        let (fp, fm) = (eval(i, h), eval(i, -h));
        let central = (fp - fm) / (2.0 * h);
        let noise = f64::EPSILON * (fp.abs() + fm.abs()) / (2.0 * h);
        let floor = (1e5 * noise).max(1e-12);
        let a = analytic[i];
        let magnitude = a.abs().max(central.abs());
        let err = (a - central).abs() / magnitude.max(floor);

        // Only a disagreement needs the kink diagnosis (two more loss
        // evaluations); an agreeing component is checked as is.
        if err > KINK_TOLERANCE {
            let (fp2, fm2) = (eval(i, h / 2.0), eval(i, -h / 2.0));
            let central_half = (fp2 - fm2) / h;
            let split = (fp - 2.0 * f0 + fm) / h;
            let split_half = (fp2 - 2.0 * f0 + fm2) / (h / 2.0);
            let scale = central.abs().max(central_half.abs()).max(floor);
            let curvature_mismatch = (split - 2.0 * split_half).abs();
            let drift = (central - central_half).abs();
            if curvature_mismatch > KINK_TOLERANCE * scale || drift > KINK_TOLERANCE * scale {
                report.excluded.push(i);
                continue;
            }
        }

        report.checked += 1;
        if magnitude < floor {
            report.floored += 1;
        }
        if err > report.max_rel_error || report.worst_index.is_none() {
            report.max_rel_error = report.max_rel_error.max(err);
            report.worst_index = Some(i);
        }
    }
    report
}
