use super::EmbedError;
use crate::numkit::euclidean_distance;

/// Hinge margins: positives are pulled within `alpha_p` of the anchor and
/// negatives pushed beyond `alpha_n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Margins {
    pub alpha_p: f64,
    pub alpha_n: f64,
}

impl Default for Margins {
    fn default() -> Self {
        Self {
            alpha_p: 0.2,
            alpha_n: 0.4,
        }
    }
}

impl Margins {
    /// Distances between unit vectors lie in [0, 2], so margins must too.
    pub fn new(alpha_p: f64, alpha_n: f64) -> Result<Self, EmbedError> {
        if !(0.0 <= alpha_p && alpha_p < alpha_n && alpha_n <= 2.0) {
            return Err(EmbedError::Config(format!(
                "margins must satisfy 0 <= alpha_p < alpha_n <= 2, got {alpha_p} and {alpha_n}"
            )));
        }
        Ok(Self { alpha_p, alpha_n })
    }
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    euclidean_distance(a, b)
}

/// `(D(a,p) - alpha_p)+ + (alpha_n - D(a,n))+`.
pub fn margin_loss(z_a: &[f64], z_p: &[f64], z_n: &[f64], margins: Margins) -> f64 {
    let pos = (distance(z_a, z_p) - margins.alpha_p).max(0.0);
    let neg = (margins.alpha_n - distance(z_a, z_n)).max(0.0);
    pos + neg
}

/// Gradients of [`margin_loss`] with respect to its three arguments.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletGrad {
    pub loss: f64,
    pub anchor: Vec<f64>,
    pub positive: Vec<f64>,
    pub negative: Vec<f64>,
}

/// Loss and (sub)gradients. Inactive hinges contribute nothing; at zero
/// distance the direction is undefined and the zero subgradient is used.
pub fn margin_loss_with_grad(z_a: &[f64], z_p: &[f64], z_n: &[f64], margins: Margins) -> TripletGrad {
    let dim = z_a.len();
    let mut out = TripletGrad {
        loss: 0.0,
        anchor: vec![0.0; dim],
        positive: vec![0.0; dim],
        negative: vec![0.0; dim],
    };
    let d_ap = distance(z_a, z_p);
    if d_ap - margins.alpha_p > 0.0 {
        out.loss += d_ap - margins.alpha_p;
        for i in 0..dim {
            let g = (z_a[i] - z_p[i]) / d_ap;
            out.anchor[i] += g;
            out.positive[i] -= g;
        }
    }
    let d_an = distance(z_a, z_n);
    if margins.alpha_n - d_an > 0.0 {
        out.loss += margins.alpha_n - d_an;
        if d_an > 0.0 {
            for i in 0..dim {
                let g = (z_a[i] - z_n[i]) / d_an;
                out.anchor[i] -= g;
                out.negative[i] += g;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::{grad_check, l2_normalize};
    use proptest::prelude::*;

    /// Unit vectors in the plane at the given angle from (1, 0).
    fn at_angle(theta: f64) -> Vec<f64> {
        vec![theta.cos(), theta.sin()]
    }

    /// Angle subtending chord length `d` on the unit circle.
    fn chord(d: f64) -> f64 {
        2.0 * (d / 2.0).asin()
    }

    #[test]
    fn inactive_hinges_give_zero() {
        let a = at_angle(0.0);
        let p = at_angle(chord(0.1));
        let n = at_angle(-chord(0.9));
        assert_eq!(margin_loss(&a, &p, &n, Margins::default()), 0.0);
    }

    #[test]
    fn worked_example() {
        // Axis-aligned points give exactly representable distances.
        let a = [0.0, 0.0];
        let p = [0.5, 0.0];
        let n = [0.0, 0.1];
        let l = margin_loss(&a, &p, &n, Margins::default());
        assert!((l - 0.6).abs() < 1e-15, "{l}");
        // and on the sphere, up to the rounding of the chord construction
        let a = at_angle(0.0);
        let p = at_angle(chord(0.5));
        let n = at_angle(-chord(0.1));
        assert!((margin_loss(&a, &p, &n, Margins::default()) - 0.6).abs() < 1e-12);
    }

    #[test]
    fn coincident_positive_with_zero_margin() {
        let a = at_angle(0.7);
        let m = Margins::new(0.0, 0.4).unwrap();
        let g = margin_loss_with_grad(&a, &a, &at_angle(2.0), m);
        assert_eq!(g.loss, 0.0);
        assert!(g.anchor.iter().chain(&g.positive).all(|&v| v == 0.0));
    }

    #[test]
    fn margin_validation() {
        assert!(Margins::new(0.4, 0.2).is_err());
        assert!(Margins::new(-0.1, 0.2).is_err());
        assert!(Margins::new(0.1, 2.5).is_err());
        assert!(Margins::new(0.0, 2.0).is_ok());
    }

    fn unit3() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-1.0f64..1.0, 3)
            .prop_filter("nonzero", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-2)
            .prop_map(|v| l2_normalize(&v).unwrap())
    }

    proptest! {
        #[test]
        fn nonnegative_and_zero_iff_both_satisfied(a in unit3(), p in unit3(), n in unit3()) {
            let m = Margins::default();
            let l = margin_loss(&a, &p, &n, m);
            prop_assert!(l >= 0.0);
            let satisfied = distance(&a, &p) <= m.alpha_p && distance(&a, &n) >= m.alpha_n;
            prop_assert_eq!(l == 0.0, satisfied);
        }

        #[test]
        fn gradient_matches_finite_differences(a in unit3(), p in unit3(), n in unit3()) {
            let m = Margins::default();
            let f = |x: &[f64]| {
                let g = margin_loss_with_grad(&x[0..3], &x[3..6], &x[6..9], m);
                let mut grad = g.anchor.clone();
                grad.extend(&g.positive);
                grad.extend(&g.negative);
                (g.loss, grad)
            };
            let x: Vec<f64> = a.iter().chain(&p).chain(&n).copied().collect();
            let report = grad_check(f, &x, 1e-6);
            prop_assert!(report.max_rel_error < 1e-4, "{report:?}");
        }
    }
}
