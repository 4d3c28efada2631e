//! Noise model, output SNR, oracle-assisted recovery and its SNR bounds.
//!
//! The measurement model is `y = A(x + n_s) + n_m` with white Gaussian input
//! noise `n_s` (variance `σ_s²`) and measurement noise `n_m` (variance
//! `σ_m²`). The output SNR divides the compressed signal power by the
//! *expected* total noise power `M σ₀²`, where
//! `σ₀² = trace(A Aᵀ) σ_s² / M + σ_m²`; it never uses a realized draw.

use crate::ensembles::{trace_gram, SensingMatrix};
use crate::error::{Error, Result};
use crate::linalg::{dot, least_squares, CompensatedSum, Matrix};
use crate::random::RandomStream;
use crate::signals::SparseSignal;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Default number of noise realizations behind `recovered_snr`.
pub const DEFAULT_RECOVERY_TRIALS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub sigma_s_sq: f64,
    pub sigma_m_sq: f64,
}

impl NoiseSpec {
    pub fn new(sigma_s_sq: f64, sigma_m_sq: f64) -> Result<Self> {
        for (name, v) in [("sigma_s_sq", sigma_s_sq), ("sigma_m_sq", sigma_m_sq)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        Ok(NoiseSpec {
            sigma_s_sq,
            sigma_m_sq,
        })
    }

    pub fn is_noiseless(&self) -> bool {
        self.sigma_s_sq == 0.0 && self.sigma_m_sq == 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SnrContext {
    Output,
    Recovered,
}

/// Linear-scale SNR. An infinite value means zero noise and is serialized
/// as the string `"unbounded"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnrValue {
    #[serde(serialize_with = "ser_eta", deserialize_with = "de_eta")]
    pub eta: f64,
    pub context: SnrContext,
}

fn ser_eta<S: Serializer>(eta: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if eta.is_infinite() {
        s.serialize_str("unbounded")
    } else {
        s.serialize_f64(*eta)
    }
}

fn de_eta<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }
    match Repr::deserialize(d)? {
        Repr::Num(v) => Ok(v),
        Repr::Text(t) if t == "unbounded" => Ok(f64::INFINITY),
        Repr::Text(t) => Err(serde::de::Error::custom(format!("bad SNR value '{t}'"))),
    }
}

impl SnrValue {
    pub fn is_unbounded(&self) -> bool {
        self.eta.is_infinite()
    }

    /// `10 log10(η)`; zero maps to `-inf`.
    pub fn db(&self) -> f64 {
        10.0 * self.eta.log10()
    }
}

/// `σ₀² = trace(A Aᵀ) σ_s² / M + σ_m²`. Zero makes every SNR undefined.
pub fn sigma0_sq(a: &SensingMatrix, noise: &NoiseSpec) -> f64 {
    trace_gram(a) / a.m() as f64 * noise.sigma_s_sq + noise.sigma_m_sq
}

fn check_signal(a: &SensingMatrix, x: &SparseSignal) -> Result<()> {
    if x.ambient_dim() != a.n() {
        return Err(Error::DimensionMismatch(format!(
            "signal has N={} but the matrix has {} columns",
            x.ambient_dim(),
            a.n()
        )));
    }
    Ok(())
}

/// `‖A x‖²` using only the support columns.
pub fn compressed_power(a: &SensingMatrix, x: &SparseSignal) -> f64 {
    let mut power = CompensatedSum::default();
    for m in 0..a.m() {
        let row = a.matrix.row(m);
        let d: f64 = x
            .support()
            .iter()
            .zip(x.magnitudes())
            .map(|(&i, &v)| row[i] * v)
            .sum();
        power.add(d * d);
    }
    power.value()
}

/// Output SNR `η_O = ‖A x‖² / (M σ₀²)`.
pub fn output_snr(a: &SensingMatrix, x: &SparseSignal, noise: &NoiseSpec) -> Result<SnrValue> {
    check_signal(a, x)?;
    let s0 = sigma0_sq(a, noise);
    if s0 <= 0.0 {
        return Err(Error::ZeroNoisePower);
    }
    Ok(SnrValue {
        eta: compressed_power(a, x) / (a.m() as f64 * s0),
        context: SnrContext::Output,
    })
}

/// One noisy measurement `y = A(x + n_s) + n_m`.
pub fn measure(
    a: &SensingMatrix,
    x: &SparseSignal,
    noise: &NoiseSpec,
    stream: &mut RandomStream,
) -> Result<Vec<f64>> {
    check_signal(a, x)?;
    let mut input = x.dense();
    if noise.sigma_s_sq > 0.0 {
        let sd = noise.sigma_s_sq.sqrt();
        for v in input.iter_mut() {
            *v += sd * stream.next_standard_normal();
        }
    }
    let sd_m = noise.sigma_m_sq.sqrt();
    let mut y = Vec::with_capacity(a.m());
    for m in 0..a.m() {
        let mut v = dot(a.matrix.row(m), &input);
        if noise.sigma_m_sq > 0.0 {
            v += sd_m * stream.next_standard_normal();
        }
        y.push(v);
    }
    Ok(y)
}

/// Total-noise covariance `σ_s² A Aᵀ + σ_m² I`.
pub fn noise_covariance(a: &SensingMatrix, noise: &NoiseSpec) -> Matrix {
    let mut cov = if noise.sigma_s_sq > 0.0 {
        let mut g = a.matrix.outer_gram();
        g.scale(noise.sigma_s_sq);
        g
    } else {
        Matrix::zeros(a.m(), a.m())
    };
    for i in 0..a.m() {
        cov[(i, i)] += noise.sigma_m_sq;
    }
    cov
}

/// Sample second-moment matrix `(1/D) Σ n nᵀ` of the total noise
/// `n = A n_s + n_m` over `draws` draws.
///
/// Draws are processed in fixed chunks, each with its own child stream, and
/// chunk sums are added in chunk order.
pub fn empirical_noise_covariance(
    a: &SensingMatrix,
    noise: &NoiseSpec,
    draws: usize,
    stream: &RandomStream,
) -> Result<Matrix> {
    const CHUNK: usize = 1024;
    if draws == 0 {
        return Err(Error::InvalidParameter("draws must be >= 1".into()));
    }
    let m = a.m();
    let zero = SparseSignal::new(a.n(), Vec::new(), Vec::new())?;
    let chunks = draws.div_ceil(CHUNK);
    let partial: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut s = stream.derive("noise-chunk", c as u64);
            let mut acc = vec![0.0; m * m];
            for _ in c * CHUNK..((c + 1) * CHUNK).min(draws) {
                let y = measure(a, &zero, noise, &mut s)?;
                for i in 0..m {
                    for j in i..m {
                        acc[i * m + j] += y[i] * y[j];
                    }
                }
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut cov = Matrix::zeros(m, m);
    for acc in &partial {
        for i in 0..m {
            for j in i..m {
                cov[(i, j)] += acc[i * m + j];
            }
        }
    }
    for i in 0..m {
        for j in i..m {
            let v = cov[(i, j)] / draws as f64;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    Ok(cov)
}

/// Least-squares estimate on a known support, zero elsewhere.
pub fn oracle_estimate(a: &SensingMatrix, support: &[usize], y: &[f64]) -> Result<Vec<f64>> {
    let sub = a.matrix.select_columns(support)?;
    let coeffs = least_squares(&sub, y)?;
    let mut x_hat = vec![0.0; a.n()];
    for (&i, c) in support.iter().zip(coeffs) {
        x_hat[i] = c;
    }
    Ok(x_hat)
}

/// Recovered SNR of oracle recovery, `‖x‖² / E‖x̂ − x‖²`, with the
/// expectation replaced by an average over `n_trials` fresh noise draws.
///
/// Trial `t` uses the child stream `stream.derive("trial", t)`, so the
/// result does not depend on how trials are scheduled across threads.
pub fn recovered_snr(
    a: &SensingMatrix,
    x: &SparseSignal,
    noise: &NoiseSpec,
    n_trials: usize,
    stream: &RandomStream,
) -> Result<SnrValue> {
    check_signal(a, x)?;
    if n_trials == 0 {
        return Err(Error::InvalidParameter("n_trials must be >= 1".into()));
    }
    let recovered = |eta| SnrValue {
        eta,
        context: SnrContext::Recovered,
    };
    if noise.is_noiseless() {
        // full column rank on the support means y determines x exactly
        oracle_estimate(a, x.support(), &vec![0.0; a.m()])?;
        return Ok(recovered(if x.norm_sq() == 0.0 { 0.0 } else { f64::INFINITY }));
    }
    let dense = x.dense();
    let errors: Vec<f64> = (0..n_trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut s = stream.derive("trial", t);
            let y = measure(a, x, noise, &mut s)?;
            let x_hat = oracle_estimate(a, x.support(), &y)?;
            Ok(x_hat
                .iter()
                .zip(&dense)
                .map(|(h, v)| (h - v) * (h - v))
                .sum())
        })
        .collect::<Result<_>>()?;
    let mean_error = errors.into_iter().collect::<CompensatedSum>().value() / n_trials as f64;
    if mean_error == 0.0 {
        return Ok(recovered(if x.norm_sq() == 0.0 { 0.0 } else { f64::INFINITY }));
    }
    Ok(recovered(x.norm_sq() / mean_error))
}

/// Exact `E‖A_S† n‖² = σ_m² ‖A_S†‖_F² + σ_s² ‖A_S† A‖_F²`.
pub fn oracle_error_power(a: &SensingMatrix, support: &[usize], noise: &NoiseSpec) -> Result<f64> {
    let sub = a.matrix.select_columns(support)?;
    let mut total = CompensatedSum::default();
    if noise.sigma_m_sq > 0.0 {
        let mut e = vec![0.0; a.m()];
        for m in 0..a.m() {
            e[m] = 1.0;
            let c = least_squares(&sub, &e)?;
            total.add(noise.sigma_m_sq * dot(&c, &c));
            e[m] = 0.0;
        }
    }
    if noise.sigma_s_sq > 0.0 {
        for n in 0..a.n() {
            let c = least_squares(&sub, &a.matrix.column(n))?;
            total.add(noise.sigma_s_sq * dot(&c, &c));
        }
    }
    Ok(total.value())
}

/// Bracket on `η_R / η_O` for oracle recovery with RIP constant `delta`:
/// `((1−δ)/(1+δ)) M/K ≤ η_R/η_O ≤ ((1+δ)/(1−δ)) M/K`.
pub fn rsnr_osnr_bounds(delta: f64, m: usize, k: usize) -> Result<(f64, f64)> {
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::InvalidRipConstant(delta));
    }
    if k == 0 {
        return Err(Error::InvalidParameter("K must be at least 1".into()));
    }
    let ratio = m as f64 / k as f64;
    Ok((
        (1.0 - delta) / (1.0 + delta) * ratio,
        (1.0 + delta) / (1.0 - delta) * ratio,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::{draw_matrix, MatrixEnsemble};

    fn worked_example() -> (SensingMatrix, SparseSignal) {
        let a = Matrix::from_rows(&[vec![1.0, 0.0, 1.0], vec![0.0, 1.0, -1.0]]).unwrap();
        let a = SensingMatrix::from_matrix(a, MatrixEnsemble::gaussian());
        let x = SparseSignal::new(3, vec![2], vec![2.0]).unwrap();
        (a, x)
    }

    #[test]
    fn sigma0_cases() {
        let (a, _) = worked_example();
        assert_eq!(sigma0_sq(&a, &NoiseSpec::new(1.0, 0.0).unwrap()), 2.0);
        assert_eq!(sigma0_sq(&a, &NoiseSpec::new(0.0, 0.3).unwrap()), 0.3);
        let eye = SensingMatrix::from_matrix(Matrix::identity(5), MatrixEnsemble::gaussian());
        assert_eq!(sigma0_sq(&eye, &NoiseSpec::new(1.0, 0.0).unwrap()), 1.0);
    }

    #[test]
    fn sigma0_row_orthogonal_folding_factor() {
        let (m, n) = (8, 40);
        let a = draw_matrix(
            MatrixEnsemble::RowOrthogonal,
            m,
            n,
            &mut RandomStream::new(1, "s0", 0),
        )
        .unwrap();
        let noise = NoiseSpec::new(0.7, 0.2).unwrap();
        let want = n as f64 / m as f64 * 0.7 + 0.2;
        assert!((sigma0_sq(&a, &noise) - want).abs() < 1e-12);
    }

    #[test]
    fn output_snr_worked_example() {
        let (a, x) = worked_example();
        let eta = output_snr(&a, &x, &NoiseSpec::new(1.0, 0.0).unwrap()).unwrap();
        assert_eq!(eta.eta, 2.0);
        assert_eq!(eta.context, SnrContext::Output);
        assert!((eta.db() - 3.010299956639812).abs() < 1e-12);
    }

    #[test]
    fn output_snr_zero_signal_and_scaling() {
        let (a, x) = worked_example();
        let noise = NoiseSpec::new(1.0, 0.5).unwrap();
        let zero = SparseSignal::new(3, vec![], vec![]).unwrap();
        let z = output_snr(&a, &zero, &noise).unwrap();
        assert_eq!(z.eta, 0.0);
        assert_eq!(z.db(), f64::NEG_INFINITY);
        let base = output_snr(&a, &x, &noise).unwrap().eta;
        let scaled = output_snr(&a, &x.scaled(3.0), &noise).unwrap().eta;
        assert!((scaled - 9.0 * base).abs() < 1e-12);
    }

    #[test]
    fn output_snr_errors() {
        let (a, x) = worked_example();
        assert_eq!(
            output_snr(&a, &x, &NoiseSpec::new(0.0, 0.0).unwrap()),
            Err(Error::ZeroNoisePower)
        );
        let wrong = SparseSignal::new(4, vec![0], vec![1.0]).unwrap();
        assert!(matches!(
            output_snr(&a, &wrong, &NoiseSpec::new(1.0, 0.0).unwrap()),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(NoiseSpec::new(-1.0, 0.0).is_err());
    }

    #[test]
    fn noiseless_measurement_is_exact() {
        let (a, x) = worked_example();
        let y = measure(
            &a,
            &x,
            &NoiseSpec::new(0.0, 0.0).unwrap(),
            &mut RandomStream::new(0, "m", 0),
        )
        .unwrap();
        assert_eq!(y, vec![2.0, -2.0]);
    }

    #[test]
    fn zero_matrix_measures_only_measurement_noise() {
        let a = SensingMatrix::from_matrix(Matrix::zeros(3, 4), MatrixEnsemble::gaussian());
        let x = SparseSignal::new(4, vec![1], vec![5.0]).unwrap();
        let noise = NoiseSpec::new(2.0, 1.0).unwrap();
        let y = measure(&a, &x, &noise, &mut RandomStream::new(3, "m", 0)).unwrap();
        // the same stream order: N input deviates first, then M measurement deviates
        let mut replay = RandomStream::new(3, "m", 0);
        replay.draw_standard_normal(4);
        let nm = replay.draw_standard_normal(3);
        assert_eq!(y, nm);
    }

    #[test]
    fn covariance_cases() {
        let (a, _) = worked_example();
        let c = noise_covariance(&a, &NoiseSpec::new(0.0, 0.4).unwrap());
        let mut want = Matrix::identity(2);
        want.scale(0.4);
        assert_eq!(c, want);
        // [[1,0,1],[0,1,-1]] A Aᵀ = [[2,-1],[-1,2]]
        let c = noise_covariance(&a, &NoiseSpec::new(0.5, 0.25).unwrap());
        let want = Matrix::from_rows(&[vec![1.25, -0.5], vec![-0.5, 1.25]]).unwrap();
        assert_eq!(c, want);
    }

    #[test]
    fn covariance_row_orthogonal_is_white() {
        let (m, n) = (10, 30);
        let a = draw_matrix(
            MatrixEnsemble::RowOrthogonal,
            m,
            n,
            &mut RandomStream::new(4, "cov", 0),
        )
        .unwrap();
        let noise = NoiseSpec::new(1.3, 0.1).unwrap();
        let c = noise_covariance(&a, &noise);
        let level = (n as f64 / m as f64) * 1.3 + 0.1;
        for i in 0..m {
            for j in 0..m {
                let want = if i == j { level } else { 0.0 };
                assert!((c[(i, j)] - want).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn oracle_noiseless_exact() {
        let a = draw_matrix(MatrixEnsemble::gaussian(), 8, 20, &mut RandomStream::new(5, "o", 0))
            .unwrap();
        let x = SparseSignal::new(20, vec![2, 7, 19], vec![1.5, -0.5, 2.0]).unwrap();
        let y = measure(&a, &x, &NoiseSpec::new(0.0, 0.0).unwrap(), &mut RandomStream::new(0, "", 0))
            .unwrap();
        let x_hat = oracle_estimate(&a, x.support(), &y).unwrap();
        for (h, v) in x_hat.iter().zip(x.dense()) {
            assert!((h - v).abs() < 1e-9);
        }
    }

    #[test]
    fn oracle_square_support() {
        let a = Matrix::from_rows(&[vec![2.0, 0.0, 1.0], vec![1.0, 5.0, 3.0]]).unwrap();
        let a = SensingMatrix::from_matrix(a, MatrixEnsemble::gaussian());
        // A_S = [[2,1],[1,3]] on support {0,2}; A_S⁻¹ (3,5) = (0.8, 1.4)
        let x_hat = oracle_estimate(&a, &[0, 2], &[3.0, 5.0]).unwrap();
        assert!((x_hat[0] - 0.8).abs() < 1e-14);
        assert_eq!(x_hat[1], 0.0);
        assert!((x_hat[2] - 1.4).abs() < 1e-14);
    }

    #[test]
    fn recovered_snr_noiseless_is_unbounded() {
        let (a, x) = worked_example();
        let r = recovered_snr(
            &a,
            &x,
            &NoiseSpec::new(0.0, 0.0).unwrap(),
            10,
            &RandomStream::new(0, "r", 0),
        )
        .unwrap();
        assert!(r.is_unbounded());
        let json = serde_json::to_string(&r).unwrap();
        assert_eq!(json, r#"{"eta":"unbounded","context":"recovered"}"#);
        let back: SnrValue = serde_json::from_str(&json).unwrap();
        assert!(back.is_unbounded());
    }

    #[test]
    fn recovered_snr_identity_block() {
        // K = M with A_S = I_M embedded: the error is the white measurement noise
        let (m, n) = (6, 9);
        let mut a = Matrix::zeros(m, n);
        for i in 0..m {
            a[(i, i + 2)] = 1.0;
        }
        let a = SensingMatrix::from_matrix(a, MatrixEnsemble::gaussian());
        let support: Vec<usize> = (2..2 + m).collect();
        let x = SparseSignal::new(n, support, vec![1.0, -2.0, 0.5, 1.0, 3.0, -1.0]).unwrap();
        let noise = NoiseSpec::new(0.0, 1.0).unwrap();
        let r = recovered_snr(&a, &x, &noise, 20_000, &RandomStream::new(6, "r", 0)).unwrap();
        let want = x.norm_sq() / m as f64;
        // mean of 6·20000 squared normals: relative sd ≈ sqrt(2/120000)
        assert!((r.eta / want - 1.0).abs() < 0.02, "{} vs {want}", r.eta);
    }

    #[test]
    fn recovered_snr_matches_exact_expectation() {
        let a = draw_matrix(MatrixEnsemble::gaussian(), 9, 15, &mut RandomStream::new(7, "r", 0))
            .unwrap();
        let x = SparseSignal::new(15, vec![1, 4, 11], vec![1.0, -1.0, 0.5]).unwrap();
        let noise = NoiseSpec::new(0.2, 0.5).unwrap();
        let exact = x.norm_sq() / oracle_error_power(&a, x.support(), &noise).unwrap();
        let mc = recovered_snr(&a, &x, &noise, 20_000, &RandomStream::new(8, "r", 0)).unwrap();
        assert!((mc.eta / exact - 1.0).abs() < 0.03, "{} vs {exact}", mc.eta);
    }

    #[test]
    fn bounds_examples() {
        assert_eq!(rsnr_osnr_bounds(0.0, 30, 3).unwrap(), (10.0, 10.0));
        let (lo, hi) = rsnr_osnr_bounds(1.0 / 3.0, 30, 3).unwrap();
        assert!((lo - 5.0).abs() < 1e-12 && (hi - 20.0).abs() < 1e-12);
        for d in [0.0, 0.1, 0.5, 0.9, 0.999] {
            let (lo, hi) = rsnr_osnr_bounds(d, 40, 4).unwrap();
            assert!(lo <= hi);
            assert!((lo * hi / 100.0 - 1.0).abs() < 1e-12);
        }
        assert_eq!(rsnr_osnr_bounds(1.0, 9, 3), Err(Error::InvalidRipConstant(1.0)));
        assert!(rsnr_osnr_bounds(-0.1, 9, 3).is_err());
    }

    #[test]
    fn empirical_covariance_approaches_model() {
        let a = SensingMatrix::from_matrix(
            Matrix::from_rows(&[vec![1.0, 0.0, 1.0], vec![0.0, 1.0, -1.0]]).unwrap(),
            MatrixEnsemble::gaussian(),
        );
        let noise = NoiseSpec::new(0.5, 0.25).unwrap();
        let s = RandomStream::new(4, "cov", 0);
        let emp = empirical_noise_covariance(&a, &noise, 50_000, &s).unwrap();
        let model = noise_covariance(&a, &noise);
        for i in 0..2 {
            for j in 0..2 {
                assert!((emp[(i, j)] - model[(i, j)]).abs() < 0.03, "{i}{j}");
            }
        }
        assert_eq!(emp, empirical_noise_covariance(&a, &noise, 50_000, &s).unwrap());
        assert!(empirical_noise_covariance(&a, &noise, 0, &s).is_err());
    }
}
