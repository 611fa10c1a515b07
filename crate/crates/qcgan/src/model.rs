//! Model construction: the quantum-circuit generator, the classical
//! discriminator, the classical baseline generators, and the trainable
//! parameter audit.

use std::f64::consts::PI;

use rand::Rng;

use crate::qsim::{CircuitSpec, GateOp, ParamSlot, Statevector};
use crate::{Error, Result};

pub const LEAKY_SLOPE: f64 = 0.2;

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One RY(z_i) per qubit, fixed angles; the angle-encoding layer.
pub fn build_encoding(z: &[f64]) -> Result<Vec<GateOp>> {
    if z.is_empty() {
        return Err(Error::Shape("noise vector is empty".into()));
    }
    if let Some(bad) = z.iter().find(|v| !v.is_finite()) {
        return Err(Error::Shape(format!("non-finite noise angle {bad}")));
    }
    Ok(z.iter()
        .enumerate()
        .map(|(q, &angle)| GateOp::ry(q, ParamSlot::Fixed(angle)))
        .collect())
}

/// The trainable circuit: per layer, RX then RZ on every qubit, then a ring
/// of CRX entanglers control i -> target (i+1) mod n. Slots are numbered
/// layer-major, 3n per layer.
pub fn build_variational_layers(n_qubits: usize, depth: usize) -> Result<CircuitSpec> {
    if n_qubits < 2 {
        return Err(Error::Shape(format!(
            "variational circuit needs at least 2 qubits, got {n_qubits}"
        )));
    }
    if depth < 1 {
        return Err(Error::Shape(format!("depth {depth} must be at least 1")));
    }
    let mut gates = Vec::with_capacity(3 * n_qubits * depth);
    for layer in 0..depth {
        let base = 3 * n_qubits * layer;
        for q in 0..n_qubits {
            gates.push(GateOp::rx(q, ParamSlot::Trainable(base + q)));
        }
        for q in 0..n_qubits {
            gates.push(GateOp::rz(q, ParamSlot::Trainable(base + n_qubits + q)));
        }
        for q in 0..n_qubits {
            gates.push(GateOp::crx(
                q,
                (q + 1) % n_qubits,
                ParamSlot::Trainable(base + 2 * n_qubits + q),
            ));
        }
    }
    CircuitSpec::new(n_qubits, gates)
}

/// Quantum generator: angle encoding, variational circuit, basis-probability
/// readout scaled by 2^N, then a single logistic linear layer to pixel space.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorModel {
    pub n_qubits: usize,
    pub depth: usize,
    pub n_pixels: usize,
    /// Circuit angles, length 3 * n_qubits * depth.
    pub theta: Vec<f64>,
    /// Readout weights, n_pixels rows x 2^n_qubits columns, row-major.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    circuit: CircuitSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorGrads {
    pub theta: Vec<f64>,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl GeneratorModel {
    pub fn new(
        n_qubits: usize,
        depth: usize,
        n_pixels: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let circuit = build_variational_layers(n_qubits, depth)?;
        if n_pixels == 0 {
            return Err(Error::Shape("generator needs at least one pixel".into()));
        }
        let readout = 1usize << n_qubits;
        let theta: Vec<f64> = (0..circuit.n_params()).map(|_| rng.gen::<f64>() * PI).collect();
        let bound = 1.0 / (readout as f64).sqrt();
        let w: Vec<f64> = (0..n_pixels * readout)
            .map(|_| (rng.gen::<f64>() * 2.0 - 1.0) * bound)
            .collect();
        let b = vec![0.0; n_pixels];
        Ok(Self { n_qubits, depth, n_pixels, theta, w, b, circuit })
    }

    /// Rebuilds a model from flat parameter arrays (checkpoint restore).
    pub fn from_params(
        n_qubits: usize,
        depth: usize,
        n_pixels: usize,
        theta: Vec<f64>,
        w: Vec<f64>,
        b: Vec<f64>,
    ) -> Result<Self> {
        let circuit = build_variational_layers(n_qubits, depth)?;
        let readout = 1usize << n_qubits;
        if theta.len() != circuit.n_params() {
            return Err(Error::Shape(format!(
                "theta has length {}, expected {}",
                theta.len(),
                circuit.n_params()
            )));
        }
        if w.len() != n_pixels * readout || b.len() != n_pixels {
            return Err(Error::Shape(format!(
                "linear layer shapes {}/{} do not fit {n_pixels} pixels x {readout} readout",
                w.len(),
                b.len()
            )));
        }
        Ok(Self { n_qubits, depth, n_pixels, theta, w, b, circuit })
    }

    pub fn circuit(&self) -> &CircuitSpec {
        &self.circuit
    }

    pub fn readout_dim(&self) -> usize {
        1 << self.n_qubits
    }

    /// Fixed readout scale; raw probabilities average 1/2^N, so the scale
    /// keeps linear-layer inputs O(1).
    pub fn scale(&self) -> f64 {
        (1u64 << self.n_qubits) as f64
    }

    fn encoded_state(&self, z: &[f64]) -> Result<Statevector> {
        if z.len() != self.n_qubits {
            return Err(Error::Shape(format!(
                "noise vector has length {}, expected {}",
                z.len(),
                self.n_qubits
            )));
        }
        let encoding = CircuitSpec::new(self.n_qubits, build_encoding(z)?)?;
        encoding.run(&[], &Statevector::zero_state(self.n_qubits)?)
    }

    fn forward_cached(&self, z: &[f64]) -> Result<(Statevector, Vec<f64>, Vec<f64>)> {
        let encoded = self.encoded_state(z)?;
        let out = self.circuit.run(&self.theta, &encoded)?;
        let scale = self.scale();
        let h: Vec<f64> = out.probabilities().iter().map(|p| p * scale).collect();
        let readout = self.readout_dim();
        let x: Vec<f64> = (0..self.n_pixels)
            .map(|i| {
                let row = &self.w[i * readout..(i + 1) * readout];
                let pre: f64 =
                    row.iter().zip(&h).map(|(wik, hk)| wik * hk).sum::<f64>() + self.b[i];
                sigmoid(pre)
            })
            .collect();
        Ok((encoded, h, x))
    }

    /// Image in (0,1)^n_pixels for one noise vector.
    pub fn forward(&self, z: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_cached(z)?.2)
    }

    /// Exact chain rule through the logistic, the affine readout, the scale,
    /// and the circuit gradients.
    pub fn backward(&self, z: &[f64], upstream: &[f64]) -> Result<GeneratorGrads> {
        if upstream.len() != self.n_pixels {
            return Err(Error::Shape(format!(
                "upstream has length {}, expected {}",
                upstream.len(),
                self.n_pixels
            )));
        }
        let (encoded, h, x) = self.forward_cached(z)?;
        let readout = self.readout_dim();
        let dpre: Vec<f64> = upstream
            .iter()
            .zip(&x)
            .map(|(u, xi)| u * xi * (1.0 - xi))
            .collect();
        let mut dw = vec![0.0; self.w.len()];
        let mut dh = vec![0.0; readout];
        for i in 0..self.n_pixels {
            let row = &self.w[i * readout..(i + 1) * readout];
            for k in 0..readout {
                dw[i * readout + k] = dpre[i] * h[k];
                dh[k] += dpre[i] * row[k];
            }
        }
        let scale = self.scale();
        let dprobs: Vec<f64> = dh.iter().map(|d| d * scale).collect();
        let dtheta = self.circuit.gradients(&self.theta, &encoded, &dprobs)?;
        Ok(GeneratorGrads { theta: dtheta, w: dw, b: dpre })
    }
}

/// Per-layer (pre-activations, activations) kept by `Mlp::forward_all`;
/// activations include the input at index 0.
type LayerCache = (Vec<Vec<f64>>, Vec<Vec<f64>>);

/// Dense network with leaky-rectifier hidden layers (slope 0.2) and a
/// logistic output layer. Used for the discriminator and the classical
/// baseline generators.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub sizes: Vec<usize>,
    /// weights[l] is sizes[l+1] rows x sizes[l] columns, row-major.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl MlpGrads {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        Self {
            weights: mlp.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: mlp.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn add(&mut self, other: &MlpGrads) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

impl Mlp {
    pub fn new(sizes: &[usize], rng: &mut impl Rng) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Shape(format!("bad layer sizes {sizes:?}")));
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            weights.push(
                (0..fan_out * fan_in)
                    .map(|_| (rng.gen::<f64>() * 2.0 - 1.0) * bound)
                    .collect(),
            );
            biases.push(vec![0.0; fan_out]);
        }
        Ok(Self { sizes: sizes.to_vec(), weights, biases })
    }

    /// Rebuilds a network from per-layer flat arrays `[weights..., biases...]`.
    pub fn from_flat_layers(sizes: &[usize], layers: &[Vec<f64>]) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::Shape(format!("bad layer sizes {sizes:?}")));
        }
        if layers.len() != sizes.len() - 1 {
            return Err(Error::Shape(format!(
                "{} layer arrays for {} layers",
                layers.len(),
                sizes.len() - 1
            )));
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for (pair, layer) in sizes.windows(2).zip(layers) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            if layer.len() != fan_out * fan_in + fan_out {
                return Err(Error::Shape(format!(
                    "layer array has length {}, expected {}",
                    layer.len(),
                    fan_out * fan_in + fan_out
                )));
            }
            weights.push(layer[..fan_out * fan_in].to_vec());
            biases.push(layer[fan_out * fan_in..].to_vec());
        }
        Ok(Self { sizes: sizes.to_vec(), weights, biases })
    }

    pub fn to_flat_layers(&self) -> Vec<Vec<f64>> {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| w.iter().chain(b).copied().collect())
            .collect()
    }

    pub fn layer_param_counts(&self) -> Vec<usize> {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| w.len() + b.len())
            .collect()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.sizes[0] {
            return Err(Error::Shape(format!(
                "input has length {}, expected {}",
                x.len(),
                self.sizes[0]
            )));
        }
        Ok(())
    }

    /// Forward pass keeping pre-activations for the backward pass.
    fn forward_all(&self, x: &[f64]) -> Result<LayerCache> {
        self.check_input(x)?;
        let n_layers = self.weights.len();
        let mut pres = Vec::with_capacity(n_layers);
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(n_layers + 1);
        acts.push(x.to_vec());
        for l in 0..n_layers {
            let fan_in = self.sizes[l];
            let fan_out = self.sizes[l + 1];
            let input = &acts[l];
            let pre: Vec<f64> = (0..fan_out)
                .map(|i| {
                    let row = &self.weights[l][i * fan_in..(i + 1) * fan_in];
                    row.iter().zip(input).map(|(w, a)| w * a).sum::<f64>() + self.biases[l][i]
                })
                .collect();
            let act: Vec<f64> = if l + 1 == n_layers {
                pre.iter().map(|&p| sigmoid(p)).collect()
            } else {
                pre.iter()
                    .map(|&p| if p > 0.0 { p } else { LEAKY_SLOPE * p })
                    .collect()
            };
            pres.push(pre);
            acts.push(act);
        }
        Ok((pres, acts))
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_all(x)?.1.pop().expect("nonempty activations"))
    }

    /// Scalar output, for the discriminator shape [.., 1].
    pub fn forward_scalar(&self, x: &[f64]) -> Result<f64> {
        let out = self.forward(x)?;
        if out.len() != 1 {
            return Err(Error::Shape(format!(
                "scalar forward on network with output width {}",
                out.len()
            )));
        }
        Ok(out[0])
    }

    /// Reverse-mode gradients for every layer plus the input gradient.
    pub fn backward(&self, x: &[f64], upstream: &[f64]) -> Result<(MlpGrads, Vec<f64>)> {
        let n_layers = self.weights.len();
        if upstream.len() != self.sizes[n_layers] {
            return Err(Error::Shape(format!(
                "upstream has length {}, expected {}",
                upstream.len(),
                self.sizes[n_layers]
            )));
        }
        let (pres, acts) = self.forward_all(x)?;
        let mut grads = MlpGrads::zeros_like(self);
        let mut delta = upstream.to_vec();
        for l in (0..n_layers).rev() {
            let fan_in = self.sizes[l];
            let fan_out = self.sizes[l + 1];
            // Through the layer activation.
            let dpre: Vec<f64> = if l + 1 == n_layers {
                delta
                    .iter()
                    .zip(&acts[l + 1])
                    .map(|(d, y)| d * y * (1.0 - y))
                    .collect()
            } else {
                delta
                    .iter()
                    .zip(&pres[l])
                    .map(|(d, &p)| d * if p > 0.0 { 1.0 } else { LEAKY_SLOPE })
                    .collect()
            };
            let input = &acts[l];
            let mut dinput = vec![0.0; fan_in];
            for i in 0..fan_out {
                let row = &self.weights[l][i * fan_in..(i + 1) * fan_in];
                for k in 0..fan_in {
                    grads.weights[l][i * fan_in + k] = dpre[i] * input[k];
                    dinput[k] += dpre[i] * row[k];
                }
                grads.biases[l][i] = dpre[i];
            }
            delta = dinput;
        }
        Ok((grads, delta))
    }

    pub fn apply_sgd(&mut self, grads: &MlpGrads, lr: f64) {
        for (w, g) in self.weights.iter_mut().zip(&grads.weights) {
            for (x, d) in w.iter_mut().zip(g) {
                *x -= lr * d;
            }
        }
        for (b, g) in self.biases.iter_mut().zip(&grads.biases) {
            for (x, d) in b.iter_mut().zip(g) {
                *x -= lr * d;
            }
        }
    }
}

/// Discriminator of the adversarial game: n_pixels -> 64 -> 32 -> 1.
pub fn discriminator(n_pixels: usize, rng: &mut impl Rng) -> Result<Mlp> {
    Mlp::new(&[n_pixels, 64, 32, 1], rng)
}

/// Generator family selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    QcGan,
    Gan1,
    Gan2,
    Gan2Star,
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::QcGan => "qcgan",
            Variant::Gan1 => "gan1",
            Variant::Gan2 => "gan2",
            Variant::Gan2Star => "gan2star",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "qcgan" => Ok(Variant::QcGan),
            "gan1" => Ok(Variant::Gan1),
            "gan2" => Ok(Variant::Gan2),
            "gan2star" => Ok(Variant::Gan2Star),
            other => Err(Error::Config(format!("unknown model variant '{other}'"))),
        }
    }

    pub fn noise_dim(&self) -> usize {
        match self {
            Variant::Gan2Star => 100,
            _ => 5,
        }
    }

    /// Hidden widths of the classical baselines.
    pub fn hidden_sizes(&self) -> Option<(usize, usize)> {
        match self {
            Variant::QcGan => None,
            Variant::Gan1 => Some((16, 64)),
            Variant::Gan2 | Variant::Gan2Star => Some((256, 512)),
        }
    }
}

/// A trainable generator of either family.
#[derive(Debug, Clone, PartialEq)]
pub enum Generator {
    Quantum(GeneratorModel),
    Classical { variant: Variant, mlp: Mlp },
}

#[derive(Debug, Clone, PartialEq)]
pub enum GeneratorGradients {
    Quantum(GeneratorGrads),
    Classical(MlpGrads),
}

impl Generator {
    pub fn build(
        variant: Variant,
        n_qubits: usize,
        depth: usize,
        n_pixels: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        match variant.hidden_sizes() {
            None => Ok(Generator::Quantum(GeneratorModel::new(
                n_qubits, depth, n_pixels, rng,
            )?)),
            Some((h1, h2)) => Ok(Generator::Classical {
                variant,
                mlp: Mlp::new(&[variant.noise_dim(), h1, h2, n_pixels], rng)?,
            }),
        }
    }

    pub fn variant(&self) -> Variant {
        match self {
            Generator::Quantum(_) => Variant::QcGan,
            Generator::Classical { variant, .. } => *variant,
        }
    }

    pub fn noise_dim(&self) -> usize {
        match self {
            Generator::Quantum(g) => g.n_qubits,
            Generator::Classical { variant, .. } => variant.noise_dim(),
        }
    }

    pub fn n_pixels(&self) -> usize {
        match self {
            Generator::Quantum(g) => g.n_pixels,
            Generator::Classical { mlp, .. } => *mlp.sizes.last().expect("sizes"),
        }
    }

    pub fn forward(&self, z: &[f64]) -> Result<Vec<f64>> {
        match self {
            Generator::Quantum(g) => g.forward(z),
            Generator::Classical { mlp, .. } => mlp.forward(z),
        }
    }

    pub fn backward(&self, z: &[f64], upstream: &[f64]) -> Result<GeneratorGradients> {
        match self {
            Generator::Quantum(g) => Ok(GeneratorGradients::Quantum(g.backward(z, upstream)?)),
            Generator::Classical { mlp, .. } => {
                Ok(GeneratorGradients::Classical(mlp.backward(z, upstream)?.0))
            }
        }
    }

    pub fn zero_grads(&self) -> GeneratorGradients {
        match self {
            Generator::Quantum(g) => GeneratorGradients::Quantum(GeneratorGrads {
                theta: vec![0.0; g.theta.len()],
                w: vec![0.0; g.w.len()],
                b: vec![0.0; g.b.len()],
            }),
            Generator::Classical { mlp, .. } => {
                GeneratorGradients::Classical(MlpGrads::zeros_like(mlp))
            }
        }
    }

    pub fn accumulate(&self, acc: &mut GeneratorGradients, delta: &GeneratorGradients) {
        match (acc, delta) {
            (GeneratorGradients::Quantum(a), GeneratorGradients::Quantum(d)) => {
                for (x, y) in a.theta.iter_mut().zip(&d.theta) {
                    *x += y;
                }
                for (x, y) in a.w.iter_mut().zip(&d.w) {
                    *x += y;
                }
                for (x, y) in a.b.iter_mut().zip(&d.b) {
                    *x += y;
                }
            }
            (GeneratorGradients::Classical(a), GeneratorGradients::Classical(d)) => a.add(d),
            _ => unreachable!("gradient family mismatch"),
        }
    }

    pub fn apply_sgd(&mut self, grads: &GeneratorGradients, lr: f64) {
        match (self, grads) {
            (Generator::Quantum(g), GeneratorGradients::Quantum(d)) => {
                for (x, y) in g.theta.iter_mut().zip(&d.theta) {
                    *x -= lr * y;
                }
                for (x, y) in g.w.iter_mut().zip(&d.w) {
                    *x -= lr * y;
                }
                for (x, y) in g.b.iter_mut().zip(&d.b) {
                    *x -= lr * y;
                }
            }
            (Generator::Classical { mlp, .. }, GeneratorGradients::Classical(d)) => {
                mlp.apply_sgd(d, lr)
            }
            _ => unreachable!("gradient family mismatch"),
        }
    }

    /// Trainable scalar counts per named layer, in declaration order.
    pub fn count_parameters(&self) -> Vec<(String, usize)> {
        match self {
            Generator::Quantum(g) => vec![
                ("QuantumLayer".to_string(), g.theta.len()),
                ("Linear".to_string(), g.w.len() + g.b.len()),
            ],
            Generator::Classical { mlp, .. } => mlp
                .layer_param_counts()
                .into_iter()
                .enumerate()
                .map(|(i, c)| (format!("Linear{}", i + 1), c))
                .collect(),
        }
    }
}

/// Published per-layer trainable parameter counts at 28x28 output.
pub fn reference_counts(variant: Variant) -> Vec<(&'static str, usize)> {
    match variant {
        Variant::QcGan => vec![("QuantumLayer", 60), ("Linear", 25872)],
        Variant::Gan1 => vec![("Linear1", 96), ("Linear2", 1088), ("Linear3", 50960)],
        Variant::Gan2 => vec![("Linear1", 1536), ("Linear2", 131584), ("Linear3", 402192)],
        Variant::Gan2Star => {
            vec![("Linear1", 25856), ("Linear2", 131584), ("Linear3", 402192)]
        }
    }
}

/// Checks a generator's parameter counts against the published table.
pub fn verify_counts(counts: &[(String, usize)], variant: Variant) -> Result<()> {
    let expected = reference_counts(variant);
    if counts.len() != expected.len()
        || counts
            .iter()
            .zip(&expected)
            .any(|((name, c), (ename, ec))| name != ename || c != ec)
    {
        return Err(Error::Domain(format!(
            "{} parameter counts {counts:?} do not match reference {expected:?}",
            variant.as_str()
        )));
    }
    Ok(())
}

/// Qubit budget of the patch-based quantum GAN: a generator of `g`
/// sub-generators for `n_pixels` pixels needs g*(log2(n_pixels/g)+1) qubits.
pub fn patch_qubit_count(n_pixels: usize, g: usize) -> Result<(usize, usize)> {
    if g == 0 || n_pixels == 0 || !n_pixels.is_multiple_of(g) {
        return Err(Error::Domain(format!(
            "pixel count {n_pixels} is not divisible into {g} sub-generators"
        )));
    }
    let ratio = n_pixels / g;
    if !ratio.is_power_of_two() {
        return Err(Error::Domain(format!(
            "pixels per sub-generator {ratio} is not a power of two"
        )));
    }
    let per = ratio.trailing_zeros() as usize + 1;
    Ok((g * per, per))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use crate::qsim::GateKind;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn encoding_zero_angles_is_identity() {
        let spec = CircuitSpec::new(5, build_encoding(&[0.0; 5]).unwrap()).unwrap();
        let out = spec.run(&[], &Statevector::zero_state(5).unwrap()).unwrap();
        assert!((out.probabilities()[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn encoding_pi_angles_flip_all() {
        let spec = CircuitSpec::new(5, build_encoding(&[PI; 5]).unwrap()).unwrap();
        let out = spec.run(&[], &Statevector::zero_state(5).unwrap()).unwrap();
        assert!((out.probabilities()[31] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn encoding_single_superposition() {
        let z = [PI / 2.0, 0.0, 0.0, 0.0, 0.0];
        let spec = CircuitSpec::new(5, build_encoding(&z).unwrap()).unwrap();
        let p = spec
            .run(&[], &Statevector::zero_state(5).unwrap())
            .unwrap()
            .probabilities();
        assert!((p[0] - 0.5).abs() < 1e-12);
        assert!((p[1] - 0.5).abs() < 1e-12);
        assert!(p[2..].iter().all(|&v| v < 1e-15));
    }

    #[test]
    fn encoding_rejects_non_finite() {
        assert!(matches!(build_encoding(&[f64::NAN]), Err(Error::Shape(_))));
    }

    #[test]
    fn variational_counts() {
        assert_eq!(build_variational_layers(5, 4).unwrap().n_params(), 60);
        assert_eq!(build_variational_layers(2, 1).unwrap().n_params(), 6);
        assert!(matches!(build_variational_layers(1, 1), Err(Error::Shape(_))));
    }

    #[test]
    fn variational_gate_order_n2_m1() {
        let spec = build_variational_layers(2, 1).unwrap();
        let kinds: Vec<(GateKind, usize, Option<usize>)> = spec
            .gates()
            .iter()
            .map(|g| (g.kind, g.target, g.control))
            .collect();
        assert_eq!(
            kinds,
            vec![
                (GateKind::Rx, 0, None),
                (GateKind::Rx, 1, None),
                (GateKind::Rz, 0, None),
                (GateKind::Rz, 1, None),
                (GateKind::Crx, 1, Some(0)),
                (GateKind::Crx, 0, Some(1)),
            ]
        );
    }

    #[test]
    fn variational_zero_angles_is_identity() {
        let spec = build_variational_layers(3, 2).unwrap();
        let params = vec![0.0; spec.n_params()];
        let encoding = CircuitSpec::new(3, build_encoding(&[0.3, 1.1, 2.0]).unwrap()).unwrap();
        let input = encoding.run(&[], &Statevector::zero_state(3).unwrap()).unwrap();
        let out = spec.run(&params, &input).unwrap();
        for (a, b) in out.amps().iter().zip(input.amps()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn generator_zero_weights_outputs_half() {
        let mut g = GeneratorModel::new(5, 4, 64, &mut rng(1)).unwrap();
        g.w.iter_mut().for_each(|w| *w = 0.0);
        let x = g.forward(&[0.4, 0.9, 1.3, 0.2, 0.7]).unwrap();
        assert!(x.iter().all(|&v| (v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn generator_identity_circuit_reads_column_zero() {
        let mut g = GeneratorModel::new(5, 4, 8, &mut rng(2)).unwrap();
        g.theta.iter_mut().for_each(|t| *t = 0.0);
        let x = g.forward(&[0.0; 5]).unwrap();
        for i in 0..8 {
            let expected = sigmoid(g.w[i * 32] * 32.0 + g.b[i]);
            assert!((x[i] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn generator_output_in_open_unit_interval() {
        let g = GeneratorModel::new(5, 4, 64, &mut rng(3)).unwrap();
        let x = g.forward(&[0.1, 0.5, 0.9, 1.3, 0.2]).unwrap();
        assert!(x.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn generator_backward_zero_upstream() {
        let g = GeneratorModel::new(5, 2, 16, &mut rng(4)).unwrap();
        let grads = g.backward(&[0.1; 5], &[0.0; 16]).unwrap();
        assert!(grads.theta.iter().all(|&v| v == 0.0));
        assert!(grads.w.iter().all(|&v| v == 0.0));
        assert!(grads.b.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn generator_w_gradient_identity() {
        let g = GeneratorModel::new(5, 2, 4, &mut rng(5)).unwrap();
        let z = [0.3, 0.7, 1.1, 0.5, 0.9];
        let upstream = [0.5, -0.25, 1.0, 0.1];
        let (_, h, x) = g.forward_cached(&z).unwrap();
        let grads = g.backward(&z, &upstream).unwrap();
        for i in 0..4 {
            for k in 0..32 {
                let expected = upstream[i] * x[i] * (1.0 - x[i]) * h[k];
                assert!((grads.w[i * 32 + k] - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn generator_backward_matches_finite_differences() {
        // Reduced 8-pixel configuration, probe scalar sum(upstream * x).
        let mut r = rng(6);
        let g = GeneratorModel::new(3, 2, 8, &mut r).unwrap();
        let z: Vec<f64> = (0..3).map(|_| r.gen::<f64>() * PI / 2.0).collect();
        let upstream: Vec<f64> = (0..8).map(|_| r.gen::<f64>() * 2.0 - 1.0).collect();
        let grads = g.backward(&z, &upstream).unwrap();
        let probe = |m: &GeneratorModel| -> f64 {
            m.forward(&z)
                .unwrap()
                .iter()
                .zip(&upstream)
                .map(|(x, u)| x * u)
                .sum()
        };
        let eps = 1e-5;
        let check = |got: f64, want: f64| {
            let tol = (1e-6 * want.abs()).max(1e-9);
            assert!((got - want).abs() <= tol, "{got} vs {want}");
        };
        for j in 0..g.theta.len() {
            let mut hi = g.clone();
            hi.theta[j] += eps;
            let mut lo = g.clone();
            lo.theta[j] -= eps;
            check(grads.theta[j], (probe(&hi) - probe(&lo)) / (2.0 * eps));
        }
        for j in 0..g.w.len() {
            let mut hi = g.clone();
            hi.w[j] += eps;
            let mut lo = g.clone();
            lo.w[j] -= eps;
            check(grads.w[j], (probe(&hi) - probe(&lo)) / (2.0 * eps));
        }
        for j in 0..g.b.len() {
            let mut hi = g.clone();
            hi.b[j] += eps;
            let mut lo = g.clone();
            lo.b[j] -= eps;
            check(grads.b[j], (probe(&hi) - probe(&lo)) / (2.0 * eps));
        }
    }

    #[test]
    fn discriminator_zero_weights_outputs_half() {
        let mut d = discriminator(16, &mut rng(7)).unwrap();
        for w in &mut d.weights {
            w.iter_mut().for_each(|v| *v = 0.0);
        }
        assert!((d.forward_scalar(&[0.3; 16]).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn leaky_slope_passthrough() {
        // One hidden unit fed -1 must emit -0.2 before the next layer.
        let mut d = Mlp::new(&[1, 1, 1], &mut rng(8)).unwrap();
        d.weights[0] = vec![1.0];
        d.biases[0] = vec![0.0];
        d.weights[1] = vec![1.0];
        d.biases[1] = vec![0.0];
        let out = d.forward(&[-1.0]).unwrap();
        assert!((out[0] - sigmoid(-0.2)).abs() < 1e-15);
    }

    #[test]
    fn mlp_forward_matches_dense_oracle() {
        let mut r = rng(9);
        let mlp = Mlp::new(&[4, 3, 1], &mut r).unwrap();
        let x: Vec<f64> = (0..4).map(|_| r.gen::<f64>()).collect();
        // Straight-line reference.
        let mut h = [0.0; 3];
        for i in 0..3 {
            let mut pre = mlp.biases[0][i];
            for k in 0..4 {
                pre += mlp.weights[0][i * 4 + k] * x[k];
            }
            h[i] = if pre > 0.0 { pre } else { 0.2 * pre };
        }
        let mut pre = mlp.biases[1][0];
        for k in 0..3 {
            pre += mlp.weights[1][k] * h[k];
        }
        let expected = sigmoid(pre);
        assert!((mlp.forward_scalar(&x).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn mlp_backward_zero_upstream() {
        let mlp = Mlp::new(&[4, 3, 1], &mut rng(10)).unwrap();
        let (grads, dx) = mlp.backward(&[0.1, 0.2, 0.3, 0.4], &[0.0]).unwrap();
        assert!(grads.weights.iter().flatten().all(|&v| v == 0.0));
        assert!(dx.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mlp_backward_matches_finite_differences() {
        let mut r = rng(11);
        let mlp = Mlp::new(&[6, 5, 3, 1], &mut r).unwrap();
        let x: Vec<f64> = (0..6).map(|_| r.gen::<f64>()).collect();
        let upstream = [0.8];
        let (grads, dx) = mlp.backward(&x, &upstream).unwrap();
        let probe = |m: &Mlp, input: &[f64]| m.forward_scalar(input).unwrap() * upstream[0];
        let eps = 1e-6;
        let check = |got: f64, want: f64| {
            let tol = (1e-5 * want.abs()).max(1e-8);
            assert!((got - want).abs() <= tol, "{got} vs {want}");
        };
        for l in 0..mlp.weights.len() {
            for j in 0..mlp.weights[l].len() {
                let mut hi = mlp.clone();
                hi.weights[l][j] += eps;
                let mut lo = mlp.clone();
                lo.weights[l][j] -= eps;
                check(
                    grads.weights[l][j],
                    (probe(&hi, &x) - probe(&lo, &x)) / (2.0 * eps),
                );
            }
        }
        for j in 0..x.len() {
            let mut hi = x.clone();
            hi[j] += eps;
            let mut lo = x.clone();
            lo[j] -= eps;
            check(dx[j], (probe(&mlp, &hi) - probe(&mlp, &lo)) / (2.0 * eps));
        }
    }

    #[test]
    fn parameter_counts_match_reference_table() {
        let mut r = rng(12);
        for variant in [Variant::QcGan, Variant::Gan1, Variant::Gan2, Variant::Gan2Star] {
            let gen = Generator::build(variant, 5, 4, 784, &mut r).unwrap();
            verify_counts(&gen.count_parameters(), variant).unwrap();
        }
    }

    #[test]
    fn perturbed_depth_fails_audit() {
        let gen = Generator::build(Variant::QcGan, 5, 5, 784, &mut rng(13)).unwrap();
        assert!(verify_counts(&gen.count_parameters(), Variant::QcGan).is_err());
    }

    #[test]
    fn patch_qubit_examples() {
        assert_eq!(patch_qubit_count(64, 4).unwrap(), (20, 5));
        assert_eq!(patch_qubit_count(256, 16).unwrap(), (80, 5));
        assert_eq!(patch_qubit_count(8, 1).unwrap(), (4, 4));
        assert!(matches!(patch_qubit_count(60, 4), Err(Error::Domain(_))));
        assert!(matches!(patch_qubit_count(96, 2), Err(Error::Domain(_))));
    }
}
