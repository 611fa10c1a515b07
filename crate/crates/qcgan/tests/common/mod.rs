//! Helpers shared by the integration suites: a dense Kronecker-product
//! reference simulator, built independently of the production pair-update
//! kernel, and a synthetic handwritten-digit dataset written in MNIST IDX
//! layout so the full load/filter/resize/train pipeline can run offline.

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qcgan::qsim::{GateKind, GateOp};

const I2: [Complex64; 4] = [
    Complex64::new(1.0, 0.0),
    Complex64::new(0.0, 0.0),
    Complex64::new(0.0, 0.0),
    Complex64::new(1.0, 0.0),
];

fn rx_mat(theta: f64) -> [Complex64; 4] {
    let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    [
        Complex64::new(c, 0.0),
        Complex64::new(0.0, -s),
        Complex64::new(0.0, -s),
        Complex64::new(c, 0.0),
    ]
}

fn ry_mat(theta: f64) -> [Complex64; 4] {
    let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    [
        Complex64::new(c, 0.0),
        Complex64::new(-s, 0.0),
        Complex64::new(s, 0.0),
        Complex64::new(c, 0.0),
    ]
}

fn rz_mat(theta: f64) -> [Complex64; 4] {
    [
        Complex64::new(0.0, -theta / 2.0).exp(),
        Complex64::new(0.0, 0.0),
        Complex64::new(0.0, 0.0),
        Complex64::new(0.0, theta / 2.0).exp(),
    ]
}

/// Kronecker product of an `ar x ar` and a `br x br` matrix.
fn kron(a: &[Complex64], ar: usize, b: &[Complex64], br: usize) -> Vec<Complex64> {
    let n = ar * br;
    let mut out = vec![Complex64::new(0.0, 0.0); n * n];
    for ai in 0..ar {
        for aj in 0..ar {
            for bi in 0..br {
                for bj in 0..br {
                    out[(ai * br + bi) * n + (aj * br + bj)] = a[ai * ar + aj] * b[bi * br + bj];
                }
            }
        }
    }
    out
}

/// Embeds per-qubit 2x2 factors into the full 2^n operator. Qubit 0 is the
/// least-significant index bit, so it sits in the rightmost Kronecker slot.
fn embed(factors: &[[Complex64; 4]]) -> Vec<Complex64> {
    let mut acc = vec![Complex64::new(1.0, 0.0)];
    let mut dim = 1;
    for f in factors.iter().rev() {
        acc = kron(&acc, dim, f, 2);
        dim *= 2;
    }
    acc
}

/// Full 2^n x 2^n unitary for one gate, assembled from Kronecker products.
pub fn dense_unitary(gate: &GateOp, angle: f64, n_qubits: usize) -> Vec<Complex64> {
    let single = match gate.kind {
        GateKind::Rx | GateKind::Crx => rx_mat(angle),
        GateKind::Ry => ry_mat(angle),
        GateKind::Rz => rz_mat(angle),
    };
    match gate.control {
        None => {
            let mut factors = vec![I2; n_qubits];
            factors[gate.target] = single;
            embed(&factors)
        }
        Some(c) => {
            // |0><0|_c (x) I  +  |1><1|_c (x) RX_t
            let zero = Complex64::new(0.0, 0.0);
            let one = Complex64::new(1.0, 0.0);
            let p0 = [one, zero, zero, zero];
            let p1 = [zero, zero, zero, one];
            let mut f0 = vec![I2; n_qubits];
            f0[c] = p0;
            let mut f1 = vec![I2; n_qubits];
            f1[c] = p1;
            f1[gate.target] = single;
            let (a, b) = (embed(&f0), embed(&f1));
            a.iter().zip(&b).map(|(x, y)| x + y).collect()
        }
    }
}

/// Dense matrix-vector product for the reference path.
pub fn dense_apply(matrix: &[Complex64], state: &[Complex64]) -> Vec<Complex64> {
    let n = state.len();
    (0..n)
        .map(|i| (0..n).map(|j| matrix[i * n + j] * state[j]).sum())
        .collect()
}

fn be32(v: u32) -> [u8; 4] {
    v.to_be_bytes()
}

/// Draws one synthetic "handwritten zero": an ellipse ring with jittered
/// center, radii, stroke width, and ink level.
fn draw_zero(rng: &mut ChaCha8Rng) -> Vec<u8> {
    let cx = 13.5 + rng.gen_range(-1.5..1.5);
    let cy = 13.5 + rng.gen_range(-1.5..1.5);
    let rx = rng.gen_range(5.5..7.5);
    let ry = rng.gen_range(7.0..9.5);
    let stroke = rng.gen_range(0.28..0.42);
    let ink = rng.gen_range(190.0..255.0);
    let mut img = vec![0u8; 28 * 28];
    for y in 0..28 {
        for x in 0..28 {
            let dx = (x as f64 - cx) / rx;
            let dy = (y as f64 - cy) / ry;
            // Distance from the unit ellipse in normalized radial units.
            let d = (dx * dx + dy * dy).sqrt() - 1.0;
            let t = d.abs() / stroke;
            if t < 1.0 {
                img[y * 28 + x] = (ink * (1.0 - t * t)) as u8;
            }
        }
    }
    img
}

/// A crude vertical stroke standing in for a different digit class, so the
/// label filter has something to reject.
fn draw_one(rng: &mut ChaCha8Rng) -> Vec<u8> {
    let col = rng.gen_range(11..17);
    let ink = rng.gen_range(190..=255) as u8;
    let mut img = vec![0u8; 28 * 28];
    for y in 4..24 {
        img[y * 28 + col] = ink;
        img[y * 28 + col + 1] = ink;
    }
    img
}

/// Writes `n_zeros` zero-class and `n_others` one-class 28x28 images as
/// `train-images-idx3-ubyte` / `train-labels-idx1-ubyte` under `dir`.
/// Deterministic for a fixed seed.
pub fn write_mnist_fixture(dir: &Path, n_zeros: usize, n_others: usize) -> (PathBuf, PathBuf) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let total = n_zeros + n_others;
    let mut images = Vec::with_capacity(16 + total * 784);
    images.extend_from_slice(&be32(0x0000_0803));
    images.extend_from_slice(&be32(total as u32));
    images.extend_from_slice(&be32(28));
    images.extend_from_slice(&be32(28));
    let mut labels = Vec::with_capacity(8 + total);
    labels.extend_from_slice(&be32(0x0000_0801));
    labels.extend_from_slice(&be32(total as u32));
    // Interleave the off-class images so the label filter is exercised.
    let stride = total.checked_div(n_others).unwrap_or(usize::MAX).max(1);
    let mut ones_used = 0;
    for i in 0..total {
        if ones_used < n_others && i % stride == stride - 1 {
            images.extend_from_slice(&draw_one(&mut rng));
            labels.push(1);
            ones_used += 1;
        } else {
            images.extend_from_slice(&draw_zero(&mut rng));
            labels.push(0);
        }
    }
    let images_path = dir.join("train-images-idx3-ubyte");
    let labels_path = dir.join("train-labels-idx1-ubyte");
    fs::write(&images_path, images).unwrap();
    fs::write(&labels_path, labels).unwrap();
    (images_path, labels_path)
}
