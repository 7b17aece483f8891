use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;

use super::matrix::{gemm, DenseMatrix, Op};
use super::NumError;

static NEXT_NET_ID: AtomicU64 = AtomicU64::new(1);

/// Identifies one parameter state of one network, so a tape can be matched
/// back to the exact weights that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct NetKey {
    id: u64,
    generation: u64,
}

impl NetKey {
    fn fresh() -> Self {
        Self {
            id: NEXT_NET_ID.fetch_add(1, Ordering::Relaxed),
            generation: 0,
        }
    }
}

/// Affine map `x -> W x + b` with `W` stored as (out × in).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearLayer {
    weights: DenseMatrix,
    bias: Vec<f64>,
}

impl LinearLayer {
    pub fn new(weights: DenseMatrix, bias: Vec<f64>) -> Result<Self, NumError> {
        if bias.len() != weights.rows() {
            return Err(NumError::DimensionMismatch {
                context: "layer bias",
                expected: weights.rows(),
                found: bias.len(),
            });
        }
        if let Some(index) = bias.iter().position(|b| !b.is_finite()) {
            return Err(NumError::NonFinite {
                context: "layer bias",
                index,
            });
        }
        Ok(Self { weights, bias })
    }

    /// Symmetric uniform initialization with half-width `1/sqrt(fan_in)`.
    pub fn random<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let scale = 1.0 / (fan_in.max(1) as f64).sqrt();
        let weights = (0..fan_in * fan_out)
            .map(|_| rng.random_range(-scale..=scale))
            .collect();
        let bias = (0..fan_out).map(|_| rng.random_range(-scale..=scale)).collect();
        Self {
            weights: DenseMatrix::from_vec(fan_out, fan_in, weights).expect("sized above"),
            bias,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn weights(&self) -> &DenseMatrix {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }
}

/// Gradient buffers with the same shapes as a [`LinearLayer`].
#[derive(Debug, Clone, PartialEq)]
pub struct LinearGrad {
    pub weights: DenseMatrix,
    pub bias: Vec<f64>,
}

/// Stack of affine layers with a rectifier between consecutive layers and
/// no activation after the last one.
#[derive(Debug)]
pub struct Mlp {
    layers: Vec<LinearLayer>,
    key: NetKey,
}

impl Clone for Mlp {
    fn clone(&self) -> Self {
        Self {
            layers: self.layers.clone(),
            key: NetKey::fresh(),
        }
    }
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

/// Activations recorded by a forward pass, sufficient for exact backprop.
#[derive(Debug, Clone)]
pub struct MlpTape {
    key: NetKey,
    /// Input to each layer; `inputs[0]` is the batch itself.
    inputs: Vec<DenseMatrix>,
    pre_activations: Vec<DenseMatrix>,
}

impl MlpTape {
    pub fn batch_size(&self) -> usize {
        self.inputs.first().map_or(0, DenseMatrix::rows)
    }

    /// Pre-activations of layer `index`, one row per batch element.
    pub fn pre_activation(&self, index: usize) -> &DenseMatrix {
        &self.pre_activations[index]
    }
}

/// Parameter gradients of an [`Mlp`], layer by layer.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrad {
    pub layers: Vec<LinearGrad>,
}

impl MlpGrad {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| LinearGrad {
                    weights: DenseMatrix::zeros(l.out_dim(), l.in_dim()),
                    bias: vec![0.0; l.out_dim()],
                })
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &MlpGrad) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weights.as_mut_slice().iter_mut().zip(b.weights.as_slice()) {
                *x += y;
            }
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += y;
            }
        }
    }

    /// Appends the gradient in the same order as [`Mlp::write_params`].
    pub fn write_flat(&self, out: &mut Vec<f64>) {
        for l in &self.layers {
            out.extend_from_slice(l.weights.as_slice());
            out.extend_from_slice(&l.bias);
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.write_flat(&mut out);
        out
    }
}

impl Mlp {
    pub fn new(layers: Vec<LinearLayer>) -> Result<Self, NumError> {
        if layers.is_empty() {
            return Err(NumError::EmptyNetwork);
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(NumError::DimensionMismatch {
                    context: "consecutive layers",
                    expected: pair[0].out_dim(),
                    found: pair[1].in_dim(),
                });
            }
        }
        Ok(Self {
            layers,
            key: NetKey::fresh(),
        })
    }

    /// Randomly initialized network with widths `dims[0] -> dims[1] -> ...`.
    pub fn random<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Result<Self, NumError> {
        if dims.len() < 2 {
            return Err(NumError::EmptyNetwork);
        }
        let layers = dims
            .windows(2)
            .map(|w| LinearLayer::random(w[0], w[1], rng))
            .collect();
        Self::new(layers)
    }

    pub fn layers(&self) -> &[LinearLayer] {
        &self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    /// Layer widths including the input, e.g. `[64, 64, 32, 8]`.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.in_dim())
            .chain(self.layers.iter().map(LinearLayer::out_dim))
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.out_dim() * (l.in_dim() + 1))
            .sum()
    }

    /// Appends all parameters: per layer, weights row-major then bias.
    pub fn write_params(&self, out: &mut Vec<f64>) {
        for l in &self.layers {
            out.extend_from_slice(l.weights.as_slice());
            out.extend_from_slice(&l.bias);
        }
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.write_params(&mut out);
        out
    }

    /// Overwrites parameters from the front of `flat`, returning how many
    /// values were consumed.
    pub fn read_params(&mut self, flat: &[f64]) -> Result<usize, NumError> {
        let needed = self.param_count();
        if flat.len() < needed {
            return Err(NumError::DimensionMismatch {
                context: "parameter vector",
                expected: needed,
                found: flat.len(),
            });
        }
        if let Some(index) = flat[..needed].iter().position(|v| !v.is_finite()) {
            return Err(NumError::NonFinite {
                context: "parameter vector",
                index,
            });
        }
        let mut offset = 0;
        for l in &mut self.layers {
            let nw = l.weights.as_slice().len();
            l.weights
                .as_mut_slice()
                .copy_from_slice(&flat[offset..offset + nw]);
            offset += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&flat[offset..offset + nb]);
            offset += nb;
        }
        self.key.generation += 1;
        Ok(offset)
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<(), NumError> {
        let used = self.read_params(flat)?;
        if used != flat.len() {
            return Err(NumError::DimensionMismatch {
                context: "parameter vector",
                expected: used,
                found: flat.len(),
            });
        }
        Ok(())
    }

    fn check_input(&self, width: usize) -> Result<(), NumError> {
        if width != self.in_dim() {
            return Err(NumError::DimensionMismatch {
                context: "network input",
                expected: self.in_dim(),
                found: width,
            });
        }
        Ok(())
    }

    fn affine(layer: &LinearLayer, x: &DenseMatrix) -> DenseMatrix {
        let mut z = DenseMatrix::zeros(x.rows(), layer.out_dim());
        for r in 0..z.rows() {
            z.row_mut(r).copy_from_slice(&layer.bias);
        }
        gemm(1.0, x, Op::Plain, &layer.weights, Op::Transposed, 1.0, &mut z);
        z
    }

    fn rectify(z: &DenseMatrix) -> DenseMatrix {
        let mut a = z.clone();
        a.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0));
        a
    }

    /// Forward pass over a batch (one row per sample), recording a tape.
    pub fn apply_batch(&self, input: &DenseMatrix) -> Result<(DenseMatrix, MlpTape), NumError> {
        self.check_input(input.cols())?;
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut current = input.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = Self::affine(layer, &current);
            let next = if i < last { Self::rectify(&z) } else { z.clone() };
            inputs.push(std::mem::replace(&mut current, next));
            pre_activations.push(z);
        }
        let tape = MlpTape {
            key: self.key,
            inputs,
            pre_activations,
        };
        Ok((current, tape))
    }

    /// Forward pass over a batch without recording activations.
    pub fn infer_batch(&self, input: &DenseMatrix) -> Result<DenseMatrix, NumError> {
        self.check_input(input.cols())?;
        let mut current = Self::affine(&self.layers[0], input);
        for layer in &self.layers[1..] {
            current = Self::affine(layer, &Self::rectify(&current));
        }
        Ok(current)
    }

    /// Forward pass for a single input vector.
    pub fn apply(&self, input: &[f64]) -> Result<(Vec<f64>, MlpTape), NumError> {
        let x = DenseMatrix::from_vec(1, input.len(), input.to_vec())?;
        let (out, tape) = self.apply_batch(&x)?;
        Ok((out.into_vec(), tape))
    }

    pub fn infer(&self, input: &[f64]) -> Result<Vec<f64>, NumError> {
        let x = DenseMatrix::from_vec(1, input.len(), input.to_vec())?;
        Ok(self.infer_batch(&x)?.into_vec())
    }

    /// Reverse pass for a batch. Returns parameter gradients summed over the
    /// batch and the per-sample input gradients.
    pub fn backprop_batch(
        &self,
        tape: &MlpTape,
        output_gradient: &DenseMatrix,
    ) -> Result<(MlpGrad, DenseMatrix), NumError> {
        if tape.key != self.key || tape.inputs.len() != self.layers.len() {
            return Err(NumError::StaleTape);
        }
        let n = tape.batch_size();
        if output_gradient.rows() != n || output_gradient.cols() != self.out_dim() {
            return Err(NumError::DimensionMismatch {
                context: "output gradient",
                expected: n * self.out_dim(),
                found: output_gradient.rows() * output_gradient.cols(),
            });
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = output_gradient.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let x = &tape.inputs[i];
            let mut dw = DenseMatrix::zeros(layer.out_dim(), layer.in_dim());
            gemm(1.0, &delta, Op::Transposed, x, Op::Plain, 0.0, &mut dw);
            let mut db = vec![0.0; layer.out_dim()];
            for row in delta.iter_rows() {
                for (b, d) in db.iter_mut().zip(row) {
                    *b += d;
                }
            }
            grads.push(LinearGrad { weights: dw, bias: db });

            let mut dx = DenseMatrix::zeros(n, layer.in_dim());
            gemm(1.0, &delta, Op::Plain, &layer.weights, Op::Plain, 0.0, &mut dx);
            if i > 0 {
                // rectifier derivative, taken as 0 at exactly 0
                let z = &tape.pre_activations[i - 1];
                for (g, &pre) in dx.as_mut_slice().iter_mut().zip(z.as_slice()) {
                    if pre <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            delta = dx;
        }
        grads.reverse();
        Ok((MlpGrad { layers: grads }, delta))
    }

    /// Reverse pass for a single sample recorded by [`Mlp::apply`].
    pub fn backprop(&self, tape: &MlpTape, output_gradient: &[f64]) -> Result<(MlpGrad, Vec<f64>), NumError> {
        if tape.batch_size() != 1 {
            return Err(NumError::StaleTape);
        }
        let g = DenseMatrix::from_vec(1, output_gradient.len(), output_gradient.to_vec()).map_err(|_| {
            NumError::DimensionMismatch {
                context: "output gradient",
                expected: self.out_dim(),
                found: output_gradient.len(),
            }
        })?;
        let (grad, dx) = self.backprop_batch(tape, &g)?;
        Ok((grad, dx.into_vec()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::gradcheck::grad_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn layer(rows: usize, cols: usize, w: &[f64], b: &[f64]) -> LinearLayer {
        LinearLayer::new(DenseMatrix::from_vec(rows, cols, w.to_vec()).unwrap(), b.to_vec()).unwrap()
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let net = Mlp::new(vec![LinearLayer::new(DenseMatrix::identity(2), vec![0.0, 0.0]).unwrap()]).unwrap();
        let (out, _) = net.apply(&[1.0, 2.0]).unwrap();
        assert_eq!(out, vec![1.0, 2.0]);
    }

    #[test]
    fn zero_weights_emit_bias() {
        let net = Mlp::new(vec![layer(1, 3, &[0.0; 3], &[0.5])]).unwrap();
        assert_eq!(net.apply(&[7.0, -1.0, 3.0]).unwrap().0, vec![0.5]);
    }

    #[test]
    fn two_layer_hand_computation() {
        // h = relu([[1, -1], [2, 0.5]] x + [0, -1]); y = [[1, 2]] h + [0.25]
        let net = Mlp::new(vec![
            layer(2, 2, &[1.0, -1.0, 2.0, 0.5], &[0.0, -1.0]),
            layer(1, 2, &[1.0, 2.0], &[0.25]),
        ])
        .unwrap();
        // x = [1, 2]: pre = [-1, 2]; h = [0, 2]; y = 4.25
        assert_eq!(net.apply(&[1.0, 2.0]).unwrap().0, vec![4.25]);
        // x = [3, 1]: pre = [2, 5.5]; h = [2, 5.5]; y = 13.25
        assert_eq!(net.apply(&[3.0, 1.0]).unwrap().0, vec![13.25]);
    }

    #[test]
    fn rejects_wrong_input_width() {
        let net = Mlp::new(vec![layer(1, 3, &[0.0; 3], &[0.5])]).unwrap();
        match net.apply(&[1.0]) {
            Err(NumError::DimensionMismatch { expected: 3, found: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_incompatible_layers() {
        assert!(Mlp::new(vec![layer(2, 2, &[0.0; 4], &[0.0; 2]), layer(1, 3, &[0.0; 3], &[0.0])]).is_err());
    }

    #[test]
    fn identity_backprop_is_chain_rule() {
        let net = Mlp::new(vec![LinearLayer::new(DenseMatrix::identity(2), vec![0.0, 0.0]).unwrap()]).unwrap();
        let x = [1.5, -2.0];
        let g = [0.3, 0.7];
        let (_, tape) = net.apply(&x).unwrap();
        let (grad, dx) = net.backprop(&tape, &g).unwrap();
        assert_eq!(dx, g.to_vec());
        // outer product g ⊗ x
        let outer: Vec<f64> = g.iter().flat_map(|gi| x.iter().map(move |xj| gi * xj)).collect();
        assert_eq!(grad.layers[0].weights.as_slice(), outer.as_slice());
        assert_eq!(grad.layers[0].bias, g.to_vec());
    }

    #[test]
    fn zero_preactivation_blocks_gradient() {
        // first hidden unit has pre-activation exactly 0
        let net = Mlp::new(vec![
            layer(2, 1, &[1.0, 1.0], &[-1.0, 0.0]),
            layer(1, 2, &[1.0, 1.0], &[0.0]),
        ])
        .unwrap();
        let (_, tape) = net.apply(&[1.0]).unwrap();
        assert_eq!(tape.pre_activation(0).row(0)[0], 0.0);
        let (grad, _) = net.backprop(&tape, &[1.0]).unwrap();
        assert_eq!(grad.layers[0].weights.row(0), &[0.0]);
        assert_eq!(grad.layers[0].bias[0], 0.0);
        assert_eq!(grad.layers[0].bias[1], 1.0);
    }

    #[test]
    fn stale_tape_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut net = Mlp::random(&[3, 4, 2], &mut rng).unwrap();
        let (_, tape) = net.apply(&[0.1, 0.2, 0.3]).unwrap();
        let p = net.params();
        net.set_params(&p).unwrap();
        assert!(matches!(net.backprop(&tape, &[1.0, 1.0]), Err(NumError::StaleTape)));

        let other = net.clone();
        let (_, tape) = net.apply(&[0.1, 0.2, 0.3]).unwrap();
        assert!(matches!(other.backprop(&tape, &[1.0, 1.0]), Err(NumError::StaleTape)));
    }

    #[test]
    fn batch_and_single_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let net = Mlp::random(&[5, 7, 3], &mut rng).unwrap();
        let rows: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..5).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let batch = DenseMatrix::from_rows(&rows).unwrap();
        let out = net.infer_batch(&batch).unwrap();
        for (i, r) in rows.iter().enumerate() {
            let single = net.infer(r).unwrap();
            for (a, b) in single.iter().zip(out.row(i)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    fn mlp_loss(net: &Mlp, x: &[f64], w: &[f64]) -> impl Fn(&[f64]) -> (f64, Vec<f64>) {
        let template = net.clone();
        let x = x.to_vec();
        let w = w.to_vec();
        move |p: &[f64]| {
            let mut n = template.clone();
            n.set_params(p).unwrap();
            let (out, tape) = n.apply(&x).unwrap();
            let loss: f64 = out.iter().zip(&w).map(|(o, c)| o * c).sum();
            let (grad, _) = n.backprop(&tape, &w).unwrap();
            (loss, grad.to_flat())
        }
    }

    #[test]
    fn three_layer_backprop_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let net = Mlp::random(&[6, 9, 7, 3], &mut rng).unwrap();
        let x: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let report = grad_check(mlp_loss(&net, &x, &w), &net.params(), 1e-5);
        assert!(report.max_rel_error < 1e-4, "{report:?}");
        assert!(report.checked > net.param_count() / 2);
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let net = Mlp::random(&[4, 8, 2], &mut rng).unwrap();
        let x: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let f = |input: &[f64]| {
            let (out, tape) = net.apply(input).unwrap();
            let (_, dx) = net.backprop(&tape, &[1.0, -0.5]).unwrap();
            (out[0] - 0.5 * out[1], dx)
        };
        let report = grad_check(f, &x, 1e-5);
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::Rng;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]
            #[test]
            fn random_nets_match_finite_differences(
                seed in any::<u64>(),
                widths in proptest::collection::vec(1usize..=32, 2..=4),
            ) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let net = Mlp::random(&widths, &mut rng).unwrap();
                let x: Vec<f64> = (0..widths[0]).map(|_| rng.random_range(-1.0..1.0)).collect();
                let w: Vec<f64> = (0..net.out_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
                let report = grad_check(mlp_loss(&net, &x, &w), &net.params(), 1e-5);
                prop_assert!(report.max_rel_error < 1e-4, "{:?}", report);
            }

            #[test]
            fn forward_is_deterministic(seed in any::<u64>()) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let net = Mlp::random(&[4, 6, 3], &mut rng).unwrap();
                let x = [0.3, -0.2, 0.9, 0.0];
                prop_assert_eq!(net.apply(&x).unwrap().0, net.clone().apply(&x).unwrap().0);
            }
        }
    }
}
