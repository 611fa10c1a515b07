//! Frechet distance between image sets in pixel/projection feature space,
//! built on a cyclic Jacobi eigensolver, plus PGM grid output.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Feature dimension of the Frechet metric.
pub const FEATURE_DIM: usize = 64;

/// Seed of the fixed random projection for inputs wider than 64 pixels;
/// constant across runs so scores are comparable.
pub const PROJECTION_SEED: u64 = 0x51DE;

#[derive(Debug, Clone, PartialEq)]
pub struct FidReport {
    pub mu_x: Vec<f64>,
    pub mu_g: Vec<f64>,
    pub sigma_x: Vec<f64>,
    pub sigma_g: Vec<f64>,
    pub fid: f64,
}

/// 64-pixel images pass through unchanged; wider images are projected onto
/// 64 dimensions by a fixed seeded matrix with entries Uniform(-1,1)/sqrt(d_in).
pub fn features(images: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let Some(first) = images.first() else {
        return Ok(Vec::new());
    };
    let d_in = first.len();
    if images.iter().any(|img| img.len() != d_in) {
        return Err(Error::Shape("images have inconsistent pixel counts".into()));
    }
    if d_in == FEATURE_DIM {
        return Ok(images.to_vec());
    }
    let proj = projection_matrix(d_in);
    Ok(images
        .iter()
        .map(|img| {
            (0..FEATURE_DIM)
                .map(|k| {
                    proj[k * d_in..(k + 1) * d_in]
                        .iter()
                        .zip(img)
                        .map(|(p, x)| p * x)
                        .sum()
                })
                .collect()
        })
        .collect())
}

/// Row-major FEATURE_DIM x d_in projection, row k generated before row k+1.
pub fn projection_matrix(d_in: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(PROJECTION_SEED);
    let scale = 1.0 / (d_in as f64).sqrt();
    (0..FEATURE_DIM * d_in)
        .map(|_| (rng.gen::<f64>() * 2.0 - 1.0) * scale)
        .collect()
}

/// Sample mean and covariance (1/(n-1) normalization, symmetrized).
pub fn mean_cov(features: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = features.len();
    if n < 2 {
        return Err(Error::Domain(format!(
            "covariance needs at least 2 samples, got {n}"
        )));
    }
    let d = features[0].len();
    let mut mu = vec![0.0; d];
    for row in features {
        for (m, x) in mu.iter_mut().zip(row) {
            *m += x;
        }
    }
    for m in &mut mu {
        *m /= n as f64;
    }
    let mut sigma = vec![0.0; d * d];
    for row in features {
        let centered: Vec<f64> = row.iter().zip(&mu).map(|(x, m)| x - m).collect();
        for i in 0..d {
            for j in 0..d {
                sigma[i * d + j] += centered[i] * centered[j];
            }
        }
    }
    for s in &mut sigma {
        *s /= (n - 1) as f64;
    }
    // Symmetrize against accumulation-order drift.
    for i in 0..d {
        for j in (i + 1)..d {
            let avg = 0.5 * (sigma[i * d + j] + sigma[j * d + i]);
            sigma[i * d + j] = avg;
            sigma[j * d + i] = avg;
        }
    }
    Ok((mu, sigma))
}

fn frobenius(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn mat_mul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i * n + j] += aik * b[k * n + j];
            }
        }
    }
    out
}

fn check_symmetric(a: &[f64], n: usize) -> Result<()> {
    let scale = frobenius(a).max(1.0);
    for i in 0..n {
        for j in (i + 1)..n {
            if (a[i * n + j] - a[j * n + i]).abs() > 1e-8 * scale {
                return Err(Error::Domain(format!(
                    "matrix is not symmetric at ({i},{j})"
                )));
            }
        }
    }
    Ok(())
}

/// Cyclic Jacobi diagonalization of a symmetric matrix. Sweeps until the
/// largest off-diagonal entry is below 1e-12 * ||A||_F or 100 sweeps.
/// Returns (eigenvalues, eigenvectors) with eigenvector j in column j of the
/// row-major n x n matrix.
pub fn jacobi_eigh(matrix: &[f64], n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if matrix.len() != n * n {
        return Err(Error::Shape(format!(
            "matrix has {} entries, expected {}",
            matrix.len(),
            n * n
        )));
    }
    check_symmetric(matrix, n)?;
    let mut a = matrix.to_vec();
    let mut q = vec![0.0; n * n];
    for i in 0..n {
        q[i * n + i] = 1.0;
    }
    let threshold = 1e-12 * frobenius(matrix);
    for _sweep in 0..100 {
        let mut max_off = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                max_off = max_off.max(a[i * n + j].abs());
            }
        }
        if max_off <= threshold {
            break;
        }
        for p in 0..n {
            for r in (p + 1)..n {
                let apr = a[p * n + r];
                if apr == 0.0 {
                    continue;
                }
                let theta = (a[r * n + r] - a[p * n + p]) / (2.0 * apr);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);
                let app = a[p * n + p];
                let arr = a[r * n + r];
                a[p * n + p] = app - t * apr;
                a[r * n + r] = arr + t * apr;
                a[p * n + r] = 0.0;
                a[r * n + p] = 0.0;
                for i in 0..n {
                    if i == p || i == r {
                        continue;
                    }
                    let aip = a[i * n + p];
                    let air = a[i * n + r];
                    a[i * n + p] = aip - s * (air + tau * aip);
                    a[p * n + i] = a[i * n + p];
                    a[i * n + r] = air + s * (aip - tau * air);
                    a[r * n + i] = a[i * n + r];
                }
                for i in 0..n {
                    let qip = q[i * n + p];
                    let qir = q[i * n + r];
                    q[i * n + p] = c * qip - s * qir;
                    q[i * n + r] = s * qip + c * qir;
                }
            }
        }
    }
    let eigenvalues = (0..n).map(|i| a[i * n + i]).collect();
    Ok((eigenvalues, q))
}

/// Q sqrt(Lambda) Q^T for a symmetric PSD matrix; eigenvalues in
/// [-1e-10, 0) are clamped to 0, anything more negative is an error.
pub fn sqrtm_psd(matrix: &[f64], n: usize) -> Result<Vec<f64>> {
    let (eigenvalues, q) = jacobi_eigh(matrix, n)?;
    let mut roots = Vec::with_capacity(n);
    for &lambda in &eigenvalues {
        if lambda < -1e-10 * frobenius(matrix).max(1.0) {
            return Err(Error::Domain(format!(
                "matrix is not positive semidefinite: eigenvalue {lambda}"
            )));
        }
        roots.push(lambda.max(0.0).sqrt());
    }
    // Q diag(roots) Q^T.
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut sum = 0.0;
            for k in 0..n {
                sum += q[i * n + k] * roots[k] * q[j * n + k];
            }
            out[i * n + j] = sum;
        }
    }
    Ok(out)
}

/// Frechet distance between two feature sets:
/// ||mu_x - mu_g||^2 + Tr(Sigma_x + Sigma_g - 2 S) with
/// S = sqrtm(sqrt(Sigma_x) Sigma_g sqrt(Sigma_x)), clamped at 0.
pub fn fid_report(features_x: &[Vec<f64>], features_g: &[Vec<f64>]) -> Result<FidReport> {
    let (mu_x, sigma_x) = mean_cov(features_x)?;
    let (mu_g, sigma_g) = mean_cov(features_g)?;
    if mu_x.len() != mu_g.len() {
        return Err(Error::Shape(format!(
            "feature dimensions differ: {} vs {}",
            mu_x.len(),
            mu_g.len()
        )));
    }
    let d = mu_x.len();
    let mean_term: f64 = mu_x
        .iter()
        .zip(&mu_g)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let root_x = sqrtm_psd(&sigma_x, d)?;
    let mut inner = mat_mul(&root_x, &mat_mul(&sigma_g, &root_x, d), d);
    for i in 0..d {
        for j in (i + 1)..d {
            let avg = 0.5 * (inner[i * d + j] + inner[j * d + i]);
            inner[i * d + j] = avg;
            inner[j * d + i] = avg;
        }
    }
    let cross = sqrtm_psd(&inner, d)?;
    let trace = |m: &[f64]| (0..d).map(|i| m[i * d + i]).sum::<f64>();
    let fid = (mean_term + trace(&sigma_x) + trace(&sigma_g) - 2.0 * trace(&cross)).max(0.0);
    Ok(FidReport { mu_x, mu_g, sigma_x, sigma_g, fid })
}

pub fn fid(features_x: &[Vec<f64>], features_g: &[Vec<f64>]) -> Result<f64> {
    Ok(fid_report(features_x, features_g)?.fid)
}

/// Writes images as a binary PGM (P5) grid, tiled row-major with 2-pixel
/// black gutters; pixel byte = round(255 * clamp(x, 0, 1)), half up.
pub fn write_pgm_grid(
    images: &[Vec<f64>],
    img_h: usize,
    img_w: usize,
    grid_rows: usize,
    grid_cols: usize,
    path: &Path,
) -> Result<()> {
    const GUTTER: usize = 2;
    if grid_rows * grid_cols < images.len() {
        return Err(Error::Shape(format!(
            "{}x{} grid cannot hold {} images",
            grid_rows,
            grid_cols,
            images.len()
        )));
    }
    if images.iter().any(|img| img.len() != img_h * img_w) {
        return Err(Error::Shape("image size does not match grid cell".into()));
    }
    let canvas_h = grid_rows * img_h + (grid_rows - 1) * GUTTER;
    let canvas_w = grid_cols * img_w + (grid_cols - 1) * GUTTER;
    let mut canvas = vec![0u8; canvas_h * canvas_w];
    for (idx, img) in images.iter().enumerate() {
        let gr = idx / grid_cols;
        let gc = idx % grid_cols;
        let top = gr * (img_h + GUTTER);
        let left = gc * (img_w + GUTTER);
        for r in 0..img_h {
            for c in 0..img_w {
                let v = img[r * img_w + c].clamp(0.0, 1.0);
                canvas[(top + r) * canvas_w + (left + c)] = (255.0 * v + 0.5).floor() as u8;
            }
        }
    }
    let mut out = BufWriter::new(File::create(path)?);
    write!(out, "P5\n{canvas_w} {canvas_h}\n255\n")?;
    out.write_all(&canvas)?;
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_symmetric(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = rng.gen::<f64>() * 2.0 - 1.0;
                a[i * n + j] = v;
                a[j * n + i] = v;
            }
        }
        a
    }

    fn random_psd(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        // B B^T is PSD by construction.
        let b: Vec<f64> = (0..n * n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = (0..n).map(|k| b[i * n + k] * b[j * n + k]).sum();
            }
        }
        out
    }

    #[test]
    fn features_identity_for_64_pixels() {
        let imgs = vec![vec![0.5; 64], vec![0.1; 64]];
        assert_eq!(features(&imgs).unwrap(), imgs);
    }

    #[test]
    fn features_projection_is_linear_and_deterministic() {
        let img: Vec<f64> = (0..784).map(|i| (i % 11) as f64 / 10.0).collect();
        let scaled: Vec<f64> = img.iter().map(|v| 3.0 * v).collect();
        let f1 = features(std::slice::from_ref(&img)).unwrap();
        let f2 = features(&[scaled]).unwrap();
        for (a, b) in f1[0].iter().zip(&f2[0]) {
            assert!((3.0 * a - b).abs() < 1e-12);
        }
        assert_eq!(features(std::slice::from_ref(&img)).unwrap(), f1);
        assert_eq!(f1[0].len(), FEATURE_DIM);
    }

    #[test]
    fn mean_cov_two_point() {
        let rows = vec![vec![0.0, 0.0], vec![2.0, 2.0]];
        let (mu, sigma) = mean_cov(&rows).unwrap();
        assert_eq!(mu, vec![1.0, 1.0]);
        assert_eq!(sigma, vec![2.0, 2.0, 2.0, 2.0]);
    }

    #[test]
    fn mean_cov_identical_rows_and_small_n() {
        let rows = vec![vec![0.7, -0.3]; 5];
        let (_, sigma) = mean_cov(&rows).unwrap();
        assert!(sigma.iter().all(|&v| v.abs() < 1e-15));
        assert!(matches!(mean_cov(&rows[..1]), Err(Error::Domain(_))));
    }

    #[test]
    fn mean_cov_matches_two_pass_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|_| (0..5).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect())
            .collect();
        let (mu, sigma) = mean_cov(&rows).unwrap();
        // Textbook two-pass reference.
        for i in 0..5 {
            let m: f64 = rows.iter().map(|r| r[i]).sum::<f64>() / 20.0;
            assert!((mu[i] - m).abs() < 1e-12);
            for j in 0..5 {
                let mj: f64 = rows.iter().map(|r| r[j]).sum::<f64>() / 20.0;
                let cov: f64 = rows
                    .iter()
                    .map(|r| (r[i] - m) * (r[j] - mj))
                    .sum::<f64>()
                    / 19.0;
                assert!((sigma[i * 5 + j] - cov).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn jacobi_diagonal_input() {
        let a = vec![3.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 7.0];
        let (vals, q) = jacobi_eigh(&a, 3).unwrap();
        assert_eq!(vals, vec![3.0, -1.0, 7.0]);
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((q[i * 3 + j] - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn jacobi_classic_2x2() {
        let (mut vals, _) = jacobi_eigh(&[2.0, 1.0, 1.0, 2.0], 2).unwrap();
        vals.sort_by(f64::total_cmp);
        assert!((vals[0] - 1.0).abs() < 1e-12);
        assert!((vals[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn jacobi_reconstructs_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..10 {
            let n = 10;
            let a = random_symmetric(n, &mut rng);
            let (vals, q) = jacobi_eigh(&a, n).unwrap();
            // Q Lambda Q^T
            let mut recon = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    recon[i * n + j] =
                        (0..n).map(|k| q[i * n + k] * vals[k] * q[j * n + k]).sum();
                }
            }
            let diff: Vec<f64> = recon.iter().zip(&a).map(|(r, x)| r - x).collect();
            assert!(frobenius(&diff) <= 1e-9 * frobenius(&a));
            // Orthonormal columns.
            for i in 0..n {
                for j in 0..n {
                    let dot: f64 = (0..n).map(|k| q[k * n + i] * q[k * n + j]).sum();
                    let expected = if i == j { 1.0 } else { 0.0 };
                    assert!((dot - expected).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn jacobi_rejects_asymmetric() {
        let a = vec![1.0, 2.0, 0.0, 1.0];
        assert!(matches!(jacobi_eigh(&a, 2), Err(Error::Domain(_))));
    }

    #[test]
    fn sqrtm_identity_and_scaled_identity() {
        let eye = vec![1.0, 0.0, 0.0, 1.0];
        assert_eq!(sqrtm_psd(&eye, 2).unwrap(), eye);
        let four = vec![4.0, 0.0, 0.0, 4.0];
        let root = sqrtm_psd(&four, 2).unwrap();
        assert!((root[0] - 2.0).abs() < 1e-12 && (root[3] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn sqrtm_squares_back_up_to_64() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for n in [4, 16, 64] {
            let a = random_psd(n, &mut rng);
            let root = sqrtm_psd(&a, n).unwrap();
            let sq = mat_mul(&root, &root, n);
            let diff: Vec<f64> = sq.iter().zip(&a).map(|(s, x)| s - x).collect();
            assert!(frobenius(&diff) <= 1e-8 * frobenius(&a));
        }
    }

    #[test]
    fn sqrtm_rejects_negative_definite() {
        let a = vec![-1.0, 0.0, 0.0, 1.0];
        assert!(matches!(sqrtm_psd(&a, 2), Err(Error::Domain(_))));
    }

    #[test]
    fn fid_same_set_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let x: Vec<Vec<f64>> = (0..30)
            .map(|_| (0..4).map(|_| rng.gen::<f64>()).collect())
            .collect();
        assert!(fid(&x, &x).unwrap() <= 1e-8);
    }

    #[test]
    fn fid_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        let x: Vec<Vec<f64>> = (0..25)
            .map(|_| (0..3).map(|_| rng.gen::<f64>()).collect())
            .collect();
        let g: Vec<Vec<f64>> = (0..25)
            .map(|_| (0..3).map(|_| rng.gen::<f64>() + 0.5).collect())
            .collect();
        let a = fid(&x, &g).unwrap();
        let b = fid(&g, &x).unwrap();
        assert!((a - b).abs() <= 1e-8);
        assert!(a >= 0.0);
    }

    // Commuting diagonal pair with closed-form trace term.
    #[test]
    fn fid_trace_identity_commuting_case() {
        // Sigma_x = diag(4, 1), Sigma_g = diag(1, 9): Tr((Sx Sg)^1/2) = 2 + 3.
        let sx = vec![4.0, 0.0, 0.0, 1.0];
        let sg = vec![1.0, 0.0, 0.0, 9.0];
        let rx = sqrtm_psd(&sx, 2).unwrap();
        let inner = mat_mul(&rx, &mat_mul(&sg, &rx, 2), 2);
        let cross = sqrtm_psd(&inner, 2).unwrap();
        assert!((cross[0] + cross[3] - 5.0).abs() < 1e-10);
    }

    #[test]
    fn pgm_single_white_image() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.pgm");
        write_pgm_grid(&[vec![1.0; 4]], 2, 2, 1, 1, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..9], b"P5\n2 2\n25");
        assert_eq!(&bytes[bytes.len() - 4..], &[255, 255, 255, 255]);
    }

    #[test]
    fn pgm_rounds_half_up() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("half.pgm");
        write_pgm_grid(&[vec![0.5]], 1, 1, 1, 1, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(*bytes.last().unwrap(), 128);
    }

    #[test]
    fn pgm_grid_layout_with_gutters() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grid.pgm");
        let imgs: Vec<Vec<f64>> = (0..4).map(|_| vec![1.0; 64]).collect();
        write_pgm_grid(&imgs, 8, 8, 2, 2, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let header = b"P5\n18 18\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(bytes.len(), header.len() + 18 * 18);
        // Gutter column is black.
        let payload = &bytes[header.len()..];
        assert_eq!(payload[8], 0);
        assert_eq!(payload[9], 0);
    }

    #[test]
    fn pgm_rejects_overfull_grid() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.pgm");
        let imgs: Vec<Vec<f64>> = (0..5).map(|_| vec![0.0; 4]).collect();
        assert!(matches!(
            write_pgm_grid(&imgs, 2, 2, 2, 2, &path),
            Err(Error::Shape(_))
        ));
    }
}
