//! Dense tanh networks with exact reverse-mode gradients, orthogonal
//! initialization and Adam.
//!
//! A [`Mlp`] stores all of its parameters in one flat vector, layer by
//! layer: the `out x in` row-major weight matrix followed by the bias.
//! Gradients use the same layout, so optimizers and gradient clipping work
//! on plain slices.
//!
//! Forward passes are batched. [`Mlp::forward_batch`] returns a [`Tape`]
//! holding every layer's activations; [`Mlp::backward`] consumes the tape
//! and an output gradient and returns parameter and input gradients. A
//! tape is bound to the parameter version it was recorded against and is
//! refused once the parameters have been mutated.

use rand::Rng;
use thiserror::Error;

use crate::distributions::sample_standard_normal;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NeuralError {
    #[error("input has {got} values, expected {expected}")]
    InputDim { expected: usize, got: usize },
    #[error("gradient has {got} values, expected {expected}")]
    GradDim { expected: usize, got: usize },
    #[error("tape recorded at parameter version {tape} but parameters are at version {params}")]
    StaleTape { tape: u64, params: u64 },
    #[error("non-finite gradient component {value} at index {index}; update aborted")]
    NonFiniteGradient { index: usize, value: f64 },
    #[error("non-finite parameter {value} at index {index}")]
    NonFiniteParameter { index: usize, value: f64 },
    #[error("invalid layer sizes {0:?}")]
    LayerSizes(Vec<usize>),
}

/// Weight-matrix initializer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitGains {
    pub hidden: f64,
    pub output: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
    activate_output: bool,
    version: u64,
}

/// Forward intermediates of one batched pass.
#[derive(Debug, Clone)]
pub struct Tape {
    version: u64,
    batch: usize,
    /// `activations[0]` is the input; `activations[k]` the output of layer `k - 1`.
    activations: Vec<Vec<f64>>,
}

impl Tape {
    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("tape has at least the input")
    }
}

/// Parameter and input gradients from a backward pass.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub params: Vec<f64>,
    pub input: Vec<f64>,
}

fn layer_len(n_in: usize, n_out: usize) -> usize {
    n_out * n_in + n_out
}

impl Mlp {
    /// `sizes = [in, hidden..., out]`. Hidden layers use tanh; the output
    /// layer is linear unless `activate_output` is set.
    pub fn zeros(sizes: &[usize], activate_output: bool) -> Result<Self, NeuralError> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(NeuralError::LayerSizes(sizes.to_vec()));
        }
        let n = sizes.windows(2).map(|w| layer_len(w[0], w[1])).sum();
        Ok(Self { sizes: sizes.to_vec(), params: vec![0.0; n], activate_output, version: 0 })
    }

    /// Orthogonal weights (hidden gain on every layer but the last), zero biases.
    pub fn orthogonal<R: Rng + ?Sized>(
        sizes: &[usize],
        gains: InitGains,
        activate_output: bool,
        rng: &mut R,
    ) -> Result<Self, NeuralError> {
        let mut mlp = Self::zeros(sizes, activate_output)?;
        let n_layers = mlp.n_layers();
        let mut offset = 0;
        for k in 0..n_layers {
            let (n_in, n_out) = (mlp.sizes[k], mlp.sizes[k + 1]);
            let gain = if k + 1 == n_layers { gains.output } else { gains.hidden };
            let w = orthogonal_init(n_out, n_in, gain, rng);
            mlp.params[offset..offset + n_out * n_in].copy_from_slice(&w);
            offset += layer_len(n_in, n_out);
        }
        Ok(mlp)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn activates_output(&self) -> bool {
        self.activate_output
    }

    pub fn n_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Mutable parameter access. Invalidates every outstanding tape.
    pub fn params_mut(&mut self) -> &mut [f64] {
        self.version += 1;
        &mut self.params
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    fn layer_offsets(&self, k: usize) -> (usize, usize) {
        let start: usize = self.sizes.windows(2).take(k).map(|w| layer_len(w[0], w[1])).sum();
        (start, start + self.sizes[k + 1] * self.sizes[k])
    }

    /// Weight matrix (`out x in`, row-major) and bias of layer `k`.
    pub fn layer(&self, k: usize) -> (&[f64], &[f64]) {
        let (w, b) = self.layer_offsets(k);
        let n_out = self.sizes[k + 1];
        (&self.params[w..b], &self.params[b..b + n_out])
    }

    fn is_activated(&self, k: usize) -> bool {
        k + 1 < self.n_layers() || self.activate_output
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, NeuralError> {
        Ok(self.forward_batch(input, 1)?.output().to_vec())
    }

    /// Forward pass over `batch` row-major inputs.
    pub fn forward_batch(&self, inputs: &[f64], batch: usize) -> Result<Tape, NeuralError> {
        let expected = batch * self.input_dim();
        if inputs.len() != expected {
            return Err(NeuralError::InputDim { expected, got: inputs.len() });
        }
        let mut activations = Vec::with_capacity(self.sizes.len());
        activations.push(inputs.to_vec());
        for k in 0..self.n_layers() {
            let (n_in, n_out) = (self.sizes[k], self.sizes[k + 1]);
            let (w, b) = self.layer(k);
            let x = &activations[k];
            let mut y = vec![0.0; batch * n_out];
            // y = x · wᵀ
            unsafe {
                matrixmultiply::dgemm(
                    batch, n_in, n_out, 1.0,
                    x.as_ptr(), n_in as isize, 1,
                    w.as_ptr(), 1, n_in as isize,
                    0.0,
                    y.as_mut_ptr(), n_out as isize, 1,
                );
            }
            let activate = self.is_activated(k);
            for row in y.chunks_exact_mut(n_out) {
                for (v, bias) in row.iter_mut().zip(b) {
                    *v += bias;
                    if activate {
                        *v = v.tanh();
                    }
                }
            }
            activations.push(y);
        }
        Ok(Tape { version: self.version, batch, activations })
    }

    /// Reverse-mode pass: `output_grad` is dLoss/dOutput for every row of
    /// the recorded batch.
    pub fn backward(&self, tape: &Tape, output_grad: &[f64]) -> Result<Gradients, NeuralError> {
        if tape.version != self.version {
            return Err(NeuralError::StaleTape { tape: tape.version, params: self.version });
        }
        let batch = tape.batch;
        let expected = batch * self.output_dim();
        if output_grad.len() != expected {
            return Err(NeuralError::GradDim { expected, got: output_grad.len() });
        }
        let mut grads = vec![0.0; self.params.len()];
        let mut g = output_grad.to_vec();
        for k in (0..self.n_layers()).rev() {
            let (n_in, n_out) = (self.sizes[k], self.sizes[k + 1]);
            if self.is_activated(k) {
                for (gi, y) in g.iter_mut().zip(&tape.activations[k + 1]) {
                    *gi *= 1.0 - y * y;
                }
            }
            let x = &tape.activations[k];
            let (w_off, b_off) = self.layer_offsets(k);
            // dW = gᵀ · x
            unsafe {
                matrixmultiply::dgemm(
                    n_out, batch, n_in, 1.0,
                    g.as_ptr(), 1, n_out as isize,
                    x.as_ptr(), n_in as isize, 1,
                    0.0,
                    grads[w_off..].as_mut_ptr(), n_in as isize, 1,
                );
            }
            let db = &mut grads[b_off..b_off + n_out];
            for row in g.chunks_exact(n_out) {
                for (d, v) in db.iter_mut().zip(row) {
                    *d += v;
                }
            }
            // dx = g · W
            let (w, _) = self.layer(k);
            let mut gx = vec![0.0; batch * n_in];
            unsafe {
                matrixmultiply::dgemm(
                    batch, n_out, n_in, 1.0,
                    g.as_ptr(), n_out as isize, 1,
                    w.as_ptr(), n_in as isize, 1,
                    0.0,
                    gx.as_mut_ptr(), n_in as isize, 1,
                );
            }
            g = gx;
        }
        Ok(Gradients { params: grads, input: g })
    }

    /// Applies one Adam update, refusing non-finite gradients or results.
    pub fn adam_step(&mut self, grad: &[f64], state: &mut AdamState, lr: f64) -> Result<(), NeuralError> {
        adam_step(self.params_mut(), grad, state, lr)?;
        check_finite(&self.params)
    }
}

pub fn check_finite(values: &[f64]) -> Result<(), NeuralError> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(NeuralError::NonFiniteParameter { index, value: values[index] }),
        None => Ok(()),
    }
}

/// An `rows x cols` matrix with orthonormal rows (if `rows <= cols`) or
/// columns (otherwise), scaled by `gain`. Gram–Schmidt is applied twice on
/// a Gaussian matrix for full double-precision orthogonality.
pub fn orthogonal_init<R: Rng + ?Sized>(rows: usize, cols: usize, gain: f64, rng: &mut R) -> Vec<f64> {
    let (n_vec, len) = if rows <= cols { (rows, cols) } else { (cols, rows) };
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n_vec);
    while basis.len() < n_vec {
        let mut v: Vec<f64> = (0..len).map(|_| sample_standard_normal(rng)).collect();
        for _ in 0..2 {
            for q in &basis {
                let dot: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(q).for_each(|(a, b)| *a -= dot * b);
            }
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm < 1e-8 {
            continue;
        }
        v.iter_mut().for_each(|a| *a /= norm);
        basis.push(v);
    }
    let mut out = vec![0.0; rows * cols];
    for (i, q) in basis.iter().enumerate() {
        for (j, &val) in q.iter().enumerate() {
            let (r, c) = if rows <= cols { (i, j) } else { (j, i) };
            out[r * cols + c] = gain * val;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(n: usize, eps: f64) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], step_count: 0, beta1: 0.9, beta2: 0.999, eps }
    }
}

/// Bias-corrected Adam descent step on a flat parameter slice.
pub fn adam_step(params: &mut [f64], grad: &[f64], st: &mut AdamState, lr: f64) -> Result<(), NeuralError> {
    if grad.len() != params.len() || st.m.len() != params.len() {
        return Err(NeuralError::GradDim { expected: params.len(), got: grad.len() });
    }
    if let Some(index) = grad.iter().position(|g| !g.is_finite()) {
        return Err(NeuralError::NonFiniteGradient { index, value: grad[index] });
    }
    st.step_count += 1;
    let t = st.step_count as i32;
    let c1 = 1.0 - st.beta1.powi(t);
    let c2 = 1.0 - st.beta2.powi(t);
    for (((p, &g), m), v) in params.iter_mut().zip(grad).zip(st.m.iter_mut()).zip(st.v.iter_mut()) {
        *m = st.beta1 * *m + (1.0 - st.beta1) * g;
        *v = st.beta2 * *v + (1.0 - st.beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + st.eps);
    }
    Ok(())
}

/// Linear annealing from `base_lr` at step 0 to zero at `total_steps`.
pub fn lr_schedule(base_lr: f64, step: u64, total_steps: u64) -> f64 {
    if total_steps == 0 {
        return base_lr;
    }
    let frac = step.min(total_steps) as f64 / total_steps as f64;
    base_lr * (1.0 - frac)
}

/// Scales every gradient slice so their joint l2 norm is at most
/// `max_norm`. Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [&mut [f64]], max_norm: f64) -> f64 {
    let norm = grads.iter().flat_map(|g| g.iter()).map(|v| v * v).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        grads.iter_mut().for_each(|g| g.iter_mut().for_each(|v| *v *= scale));
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gains() -> InitGains {
        InitGains { hidden: 2f64.sqrt(), output: 1.0 }
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::zeros(&[3, 5, 2], false).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 0.3]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn linear_output_layer() {
        let mut net = Mlp::zeros(&[1, 1], false).unwrap();
        net.params_mut()[0] = 1.0;
        assert_eq!(net.forward(&[0.5]).unwrap(), vec![0.5]);

        let mut net = Mlp::zeros(&[2, 4, 1], false).unwrap();
        let n = net.num_params();
        net.params_mut()[n - 1] = 0.7;
        assert_eq!(net.forward(&[3.0, -1.0]).unwrap(), vec![0.7]);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(Mlp::zeros(&[3], false).is_err());
        assert!(Mlp::zeros(&[3, 0, 1], false).is_err());
        let net = Mlp::zeros(&[3, 2], false).unwrap();
        assert!(matches!(net.forward(&[1.0]), Err(NeuralError::InputDim { .. })));
    }

    #[test]
    fn stationary_point_has_zero_gradient() {
        // loss = out², evaluated where out = 0
        let net = Mlp::zeros(&[2, 3, 1], false).unwrap();
        let tape = net.forward_batch(&[0.4, -0.1], 1).unwrap();
        let out = tape.output()[0];
        let g = net.backward(&tape, &[2.0 * out]).unwrap();
        assert!(g.params.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_weight_gradient() {
        let mut net = Mlp::zeros(&[1, 1], false).unwrap();
        net.params_mut()[0] = 0.3;
        let tape = net.forward_batch(&[2.0], 1).unwrap();
        let g = net.backward(&tape, &[1.0]).unwrap();
        assert_eq!(g.params, vec![2.0, 1.0]);
        assert_eq!(g.input, vec![0.3]);
    }

    #[test]
    fn stale_tape_is_refused() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut net = Mlp::orthogonal(&[2, 4, 1], gains(), false, &mut rng).unwrap();
        let tape = net.forward_batch(&[0.1, 0.2], 1).unwrap();
        net.params_mut()[0] += 1.0;
        assert!(matches!(net.backward(&tape, &[1.0]), Err(NeuralError::StaleTape { .. })));
    }

    fn loss_of(net: &Mlp, input: &[f64], batch: usize, weights: &[f64]) -> f64 {
        let tape = net.forward_batch(input, batch).unwrap();
        tape.output().iter().zip(weights).map(|(o, w)| w * o + 0.5 * o * o).sum()
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = Mlp::orthogonal(&[8, 64, 64, 2], InitGains { hidden: 2f64.sqrt(), output: 1.0 }, false, &mut rng).unwrap();
        // Random non-zero biases so every path is exercised.
        for p in net.params_mut().iter_mut() {
            *p += 0.05 * sample_standard_normal(&mut rng);
        }
        let batch = 3;
        let input: Vec<f64> = (0..batch * 8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let weights: Vec<f64> = (0..batch * 2).map(|_| rng.gen_range(-1.0..1.0)).collect();

        let tape = net.forward_batch(&input, batch).unwrap();
        let out_grad: Vec<f64> = tape.output().iter().zip(&weights).map(|(o, w)| w + o).collect();
        let grads = net.backward(&tape, &out_grad).unwrap();

        let h = 1e-5;
        for _ in 0..100 {
            let i = rng.gen_range(0..net.num_params());
            let orig = net.params()[i];
            net.params_mut()[i] = orig + h;
            let up = loss_of(&net, &input, batch, &weights);
            net.params_mut()[i] = orig - h;
            let down = loss_of(&net, &input, batch, &weights);
            net.params_mut()[i] = orig;
            let fd = (up - down) / (2.0 * h);
            let an = grads.params[i];
            assert!((fd - an).abs() <= 1e-4 * fd.abs().max(an.abs()) + 1e-7, "param {i}: {an} vs {fd}");
        }
        // Input gradient.
        for i in 0..8 {
            let mut up = input.clone();
            up[i] += h;
            let mut down = input.clone();
            down[i] -= h;
            let fd = (loss_of(&net, &up, batch, &weights) - loss_of(&net, &down, batch, &weights)) / (2.0 * h);
            assert!((fd - grads.input[i]).abs() <= 1e-4 * fd.abs() + 1e-7);
        }
    }

    #[test]
    fn activated_output_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut net = Mlp::orthogonal(&[3, 5, 4], gains(), true, &mut rng).unwrap();
        let x = [0.3, -0.7, 0.2];
        let tape = net.forward_batch(&x, 1).unwrap();
        assert!(tape.output().iter().all(|v| v.abs() < 1.0));
        let w = [1.0, -2.0, 0.5, 0.25];
        let grads = net.backward(&tape, &w).unwrap();
        let f = |net: &Mlp| net.forward(&x).unwrap().iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
        let h = 1e-6;
        for i in 0..net.num_params() {
            let orig = net.params()[i];
            net.params_mut()[i] = orig + h;
            let up = f(&net);
            net.params_mut()[i] = orig - h;
            let down = f(&net);
            net.params_mut()[i] = orig;
            let fd = (up - down) / (2.0 * h);
            assert!((fd - grads.params[i]).abs() <= 1e-4 * fd.abs() + 1e-7);
        }
    }

    #[test]
    fn orthogonal_gram_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let check = |w: &[f64], rows: usize, cols: usize, scale: f64| {
            let (n, stride_outer, stride_inner, len) =
                if rows <= cols { (rows, cols, 1, cols) } else { (cols, 1, cols, rows) };
            for a in 0..n {
                for b in 0..n {
                    let dot: f64 = (0..len)
                        .map(|k| w[a * stride_outer + k * stride_inner] * w[b * stride_outer + k * stride_inner])
                        .sum();
                    let expect = if a == b { scale } else { 0.0 };
                    assert!((dot - expect).abs() < 1e-10, "{rows}x{cols}");
                }
            }
        };
        check(&orthogonal_init(4, 8, 1.0, &mut rng), 4, 8, 1.0);
        check(&orthogonal_init(4, 8, 2f64.sqrt(), &mut rng), 4, 8, 2.0);
        for (r, c) in [(64, 4), (64, 7), (64, 64), (4, 64), (1, 64), (2, 64)] {
            check(&orthogonal_init(r, c, 1.0, &mut rng), r, c, 1.0);
        }
        let one = orthogonal_init(1, 1, 1.0, &mut rng);
        assert_eq!(one[0].abs(), 1.0);
    }

    #[test]
    fn adam_first_step() {
        let mut p = vec![0.0];
        let mut st = AdamState::new(1, 1e-5);
        adam_step(&mut p, &[1.0], &mut st, 0.001).unwrap();
        assert!((p[0] + 0.001 / (1.0 + 1e-5)).abs() < 1e-15);
    }

    #[test]
    fn adam_zero_gradient_is_fixed_point() {
        let mut p = vec![0.3, -1.2, 5.0];
        let mut st = AdamState::new(3, 1e-5);
        for _ in 0..10 {
            adam_step(&mut p, &[0.0; 3], &mut st, 0.01).unwrap();
        }
        assert_eq!(p, vec![0.3, -1.2, 5.0]);
    }

    #[test]
    fn adam_two_steps_match_hand_recurrence() {
        let mut p = vec![0.0];
        let mut st = AdamState::new(1, 1e-5);
        adam_step(&mut p, &[1.0], &mut st, 0.001).unwrap();
        let first = p[0];
        adam_step(&mut p, &[1.0], &mut st, 0.001).unwrap();
        let second = p[0] - first;
        // m = 0.19, v = 0.001999; hat values both 1.
        let m = 0.9 * 0.1 + 0.1;
        let v = 0.999 * 0.001 + 0.001;
        let expected = -0.001 * (m / (1.0 - 0.81)) / ((v / (1.0 - 0.999f64 * 0.999)).sqrt() + 1e-5);
        assert!((second - expected).abs() < 1e-15);
        assert!((second.abs() - first.abs()).abs() < 0.01 * first.abs());
    }

    #[test]
    fn adam_rejects_non_finite_gradient() {
        let mut p = vec![1.0, 2.0];
        let mut st = AdamState::new(2, 1e-5);
        let err = adam_step(&mut p, &[0.1, f64::NAN], &mut st, 0.1).unwrap_err();
        assert!(matches!(err, NeuralError::NonFiniteGradient { index: 1, .. }));
        assert_eq!(p, vec![1.0, 2.0]);
        assert_eq!(st.step_count, 0);
    }

    #[test]
    fn lr_schedule_is_linear() {
        assert_eq!(lr_schedule(3e-4, 0, 1000), 3e-4);
        assert_eq!(lr_schedule(3e-4, 1000, 1000), 0.0);
        assert!((lr_schedule(3e-4, 500, 1000) - 1.5e-4).abs() < 1e-18);
    }

    #[test]
    fn global_norm_clipping() {
        let mut a = vec![3.0];
        let mut b = vec![4.0];
        let norm = clip_global_norm(&mut [&mut a, &mut b], 0.5);
        assert_eq!(norm, 5.0);
        assert!((a[0] - 0.3).abs() < 1e-15 && (b[0] - 0.4).abs() < 1e-15);
        let mut c = vec![0.1];
        clip_global_norm(&mut [&mut c], 0.5);
        assert_eq!(c, vec![0.1]);
    }

    #[test]
    fn identical_seeds_identical_networks() {
        let make = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Mlp::orthogonal(&[4, 64, 64, 64, 4], gains(), false, &mut rng).unwrap()
        };
        assert_eq!(make(5).params(), make(5).params());
        assert_ne!(make(5).params(), make(6).params());
    }
}
