//! Dense statevector simulator with exact reverse-pass gradients.
//!
//! Conventions: little-endian basis indexing (qubit 0 is the least
//! significant bit of the basis index) and rotations
//! `R_a(phi) = exp(-i phi sigma_a / 2)`, so
//! `RY(phi) = [[cos(phi/2), -sin(phi/2)], [sin(phi/2), cos(phi/2)]]`.
//! CRX applies RX on the target iff the control bit is 1.

use num_complex::Complex64;

use crate::{Error, Result};

pub const MAX_QUBITS: usize = 24;

/// Norm drift tolerated after construction or gate application.
pub const NORM_TOL: f64 = 1e-12;

/// Pure n-qubit state as a dense amplitude vector of length 2^n.
#[derive(Debug, Clone, PartialEq)]
pub struct Statevector {
    n_qubits: usize,
    amps: Vec<Complex64>,
}

impl Statevector {
    /// |0...0>.
    pub fn zero_state(n_qubits: usize) -> Result<Self> {
        if !(1..=MAX_QUBITS).contains(&n_qubits) {
            return Err(Error::Config(format!(
                "qubit count {n_qubits} outside supported range 1..={MAX_QUBITS}"
            )));
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n_qubits];
        amps[0] = Complex64::new(1.0, 0.0);
        Ok(Self { n_qubits, amps })
    }

    /// Builds a state from raw amplitudes; the vector must have length 2^n
    /// and unit norm within `NORM_TOL`.
    pub fn from_amps(n_qubits: usize, amps: Vec<Complex64>) -> Result<Self> {
        if !(1..=MAX_QUBITS).contains(&n_qubits) {
            return Err(Error::Config(format!(
                "qubit count {n_qubits} outside supported range 1..={MAX_QUBITS}"
            )));
        }
        if amps.len() != 1 << n_qubits {
            return Err(Error::Shape(format!(
                "amplitude vector has length {}, expected {}",
                amps.len(),
                1usize << n_qubits
            )));
        }
        let state = Self { n_qubits, amps };
        let norm = state.norm_sqr();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::Shape(format!("state norm^2 {norm} is not 1")));
        }
        Ok(state)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amps(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Computational-basis probabilities p_k = |amps[k]|^2.
    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateKind {
    Rx,
    Ry,
    Rz,
    Crx,
}

/// A gate angle is either fixed (encoding gates) or an index into the
/// trainable parameter vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParamSlot {
    Fixed(f64),
    Trainable(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateOp {
    pub kind: GateKind,
    pub target: usize,
    pub control: Option<usize>,
    pub param: ParamSlot,
}

impl GateOp {
    pub fn rx(target: usize, param: ParamSlot) -> Self {
        Self { kind: GateKind::Rx, target, control: None, param }
    }

    pub fn ry(target: usize, param: ParamSlot) -> Self {
        Self { kind: GateKind::Ry, target, control: None, param }
    }

    pub fn rz(target: usize, param: ParamSlot) -> Self {
        Self { kind: GateKind::Rz, target, control: None, param }
    }

    pub fn crx(control: usize, target: usize, param: ParamSlot) -> Self {
        Self { kind: GateKind::Crx, target, control: Some(control), param }
    }

    fn validate(&self, n_qubits: usize) -> Result<()> {
        if self.target >= n_qubits {
            return Err(Error::Shape(format!(
                "gate target {} out of range for {n_qubits} qubits",
                self.target
            )));
        }
        match (self.kind, self.control) {
            (GateKind::Crx, Some(c)) => {
                if c >= n_qubits {
                    return Err(Error::Shape(format!(
                        "gate control {c} out of range for {n_qubits} qubits"
                    )));
                }
                if c == self.target {
                    return Err(Error::Shape(format!(
                        "control and target coincide on qubit {c}"
                    )));
                }
            }
            (GateKind::Crx, None) => {
                return Err(Error::Shape("CRX gate is missing its control".into()))
            }
            (_, Some(_)) => {
                return Err(Error::Shape(
                    "control qubit given for a single-qubit gate".into(),
                ))
            }
            (_, None) => {}
        }
        Ok(())
    }

    fn angle(&self, params: &[f64]) -> Result<f64> {
        match self.param {
            ParamSlot::Fixed(a) => Ok(a),
            ParamSlot::Trainable(i) => params.get(i).copied().ok_or_else(|| {
                Error::Shape(format!(
                    "parameter slot {i} out of range for {} parameters",
                    params.len()
                ))
            }),
        }
    }
}

/// Ordered gate list over a fixed qubit count, with `n_params` distinct
/// trainable slots numbered contiguously from 0.
#[derive(Debug, Clone, PartialEq)]
pub struct CircuitSpec {
    n_qubits: usize,
    gates: Vec<GateOp>,
    n_params: usize,
}

impl CircuitSpec {
    pub fn new(n_qubits: usize, gates: Vec<GateOp>) -> Result<Self> {
        if !(1..=MAX_QUBITS).contains(&n_qubits) {
            return Err(Error::Config(format!(
                "qubit count {n_qubits} outside supported range 1..={MAX_QUBITS}"
            )));
        }
        let mut max_slot = None;
        for gate in &gates {
            gate.validate(n_qubits)?;
            if let ParamSlot::Trainable(i) = gate.param {
                max_slot = Some(max_slot.map_or(i, |m: usize| m.max(i)));
            }
        }
        let n_params = max_slot.map_or(0, |m| m + 1);
        let mut referenced = vec![false; n_params];
        for gate in &gates {
            if let ParamSlot::Trainable(i) = gate.param {
                referenced[i] = true;
            }
        }
        if let Some(missing) = referenced.iter().position(|r| !r) {
            return Err(Error::Shape(format!(
                "trainable slot {missing} is referenced by no gate"
            )));
        }
        Ok(Self { n_qubits, gates, n_params })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn gates(&self) -> &[GateOp] {
        &self.gates
    }

    fn check_run_shapes(&self, params: &[f64], input: &Statevector) -> Result<()> {
        if params.len() != self.n_params {
            return Err(Error::Shape(format!(
                "parameter vector has length {}, circuit expects {}",
                params.len(),
                self.n_params
            )));
        }
        if input.n_qubits != self.n_qubits {
            return Err(Error::Shape(format!(
                "input state has {} qubits, circuit expects {}",
                input.n_qubits, self.n_qubits
            )));
        }
        Ok(())
    }

    /// Applies the gates in sequence order.
    pub fn run(&self, params: &[f64], input: &Statevector) -> Result<Statevector> {
        self.check_run_shapes(params, input)?;
        let mut state = input.clone();
        for gate in &self.gates {
            apply_gate_mut(&mut state, gate, params)?;
        }
        Ok(state)
    }

    /// Exact dL/dtheta_j = sum_k upstream_k dp_k/dtheta_j by a reverse pass
    /// through the amplitudes.
    ///
    /// With phi = upstream .* psi_final, each gate G(theta) contributes
    /// 2 Re(phi_g^dag (dG/dtheta) psi_{g-1}) where (dG/dtheta) psi_{g-1}
    /// equals (-i/2) sigma applied to the post-gate state (restricted to the
    /// control subspace for CRX); psi and phi are unwound with G^dag.
    pub fn gradients(
        &self,
        params: &[f64],
        input: &Statevector,
        upstream: &[f64],
    ) -> Result<Vec<f64>> {
        self.check_run_shapes(params, input)?;
        if upstream.len() != input.dim() {
            return Err(Error::Shape(format!(
                "upstream vector has length {}, expected {}",
                upstream.len(),
                input.dim()
            )));
        }
        let mut psi = self.run(params, input)?;
        let mut phi = Statevector {
            n_qubits: self.n_qubits,
            amps: psi
                .amps
                .iter()
                .zip(upstream)
                .map(|(a, u)| a * u)
                .collect(),
        };
        let mut grads = vec![0.0; self.n_params];
        for gate in self.gates.iter().rev() {
            if let ParamSlot::Trainable(slot) = gate.param {
                let mu = apply_half_generator(&psi, gate);
                let contrib: f64 = phi
                    .amps
                    .iter()
                    .zip(&mu)
                    .map(|(p, m)| (p.conj() * m).re)
                    .sum();
                grads[slot] += 2.0 * contrib;
            }
            let inverse = GateOp {
                param: ParamSlot::Fixed(-gate.angle(params)?),
                ..*gate
            };
            apply_gate_mut(&mut psi, &inverse, params)?;
            apply_gate_mut(&mut phi, &inverse, params)?;
        }
        Ok(grads)
    }

    /// Central-difference gradients of sum_k upstream_k p_k; test oracle for
    /// `gradients`.
    pub fn finite_diff_gradients(
        &self,
        params: &[f64],
        input: &Statevector,
        upstream: &[f64],
        epsilon: f64,
    ) -> Result<Vec<f64>> {
        if epsilon <= 0.0 {
            return Err(Error::Domain(format!("epsilon {epsilon} must be positive")));
        }
        self.check_run_shapes(params, input)?;
        if upstream.len() != input.dim() {
            return Err(Error::Shape(format!(
                "upstream vector has length {}, expected {}",
                upstream.len(),
                input.dim()
            )));
        }
        let cost = |params: &[f64]| -> Result<f64> {
            let probs = self.run(params, input)?.probabilities();
            Ok(probs.iter().zip(upstream).map(|(p, u)| p * u).sum())
        };
        let mut shifted = params.to_vec();
        let mut grads = Vec::with_capacity(self.n_params);
        for j in 0..self.n_params {
            shifted[j] = params[j] + epsilon;
            let plus = cost(&shifted)?;
            shifted[j] = params[j] - epsilon;
            let minus = cost(&shifted)?;
            shifted[j] = params[j];
            grads.push((plus - minus) / (2.0 * epsilon));
        }
        Ok(grads)
    }
}

fn gate_unitary(kind: GateKind, angle: f64) -> [Complex64; 4] {
    let (half_sin, half_cos) = (angle / 2.0).sin_cos();
    let c = Complex64::new(half_cos, 0.0);
    match kind {
        GateKind::Rx | GateKind::Crx => {
            let ms = Complex64::new(0.0, -half_sin);
            [c, ms, ms, c]
        }
        GateKind::Ry => {
            let s = Complex64::new(half_sin, 0.0);
            [c, -s, s, c]
        }
        GateKind::Rz => [
            Complex64::new(half_cos, -half_sin),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(half_cos, half_sin),
        ],
    }
}

/// Applies a single gate; returns a fresh state (the contract is
/// value-level, in-place application is an internal detail).
pub fn apply_gate(state: &Statevector, gate: &GateOp, params: &[f64]) -> Result<Statevector> {
    let mut out = state.clone();
    apply_gate_mut(&mut out, gate, params)?;
    Ok(out)
}

fn apply_gate_mut(state: &mut Statevector, gate: &GateOp, params: &[f64]) -> Result<()> {
    gate.validate(state.n_qubits)?;
    let angle = gate.angle(params)?;
    let [u00, u01, u10, u11] = gate_unitary(gate.kind, angle);
    let target_bit = 1usize << gate.target;
    let control_mask = gate.control.map_or(0, |c| 1usize << c);
    for base in 0..state.amps.len() {
        if base & target_bit != 0 || base & control_mask != control_mask {
            continue;
        }
        let pair = base | target_bit;
        let a0 = state.amps[base];
        let a1 = state.amps[pair];
        state.amps[base] = u00 * a0 + u01 * a1;
        state.amps[pair] = u10 * a0 + u11 * a1;
    }
    Ok(())
}

/// (-i/2) sigma applied to `state` on the gate's target, restricted to the
/// control subspace; the tangent direction (dG/dtheta) psi_before.
fn apply_half_generator(state: &Statevector, gate: &GateOp) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); state.amps.len()];
    let target_bit = 1usize << gate.target;
    let control_mask = gate.control.map_or(0, |c| 1usize << c);
    let half_mi = Complex64::new(0.0, -0.5);
    for base in 0..state.amps.len() {
        if base & target_bit != 0 || base & control_mask != control_mask {
            continue;
        }
        let pair = base | target_bit;
        let a0 = state.amps[base];
        let a1 = state.amps[pair];
        match gate.kind {
            GateKind::Rx | GateKind::Crx => {
                out[base] = half_mi * a1;
                out[pair] = half_mi * a0;
            }
            GateKind::Ry => {
                out[base] = -0.5 * a1;
                out[pair] = 0.5 * a0;
            }
            GateKind::Rz => {
                out[base] = half_mi * a0;
                out[pair] = -half_mi * a1;
            }
        }
    }
    out
}
