use proptest::prelude::*;
use snrspread_core::ensembles::{draw_matrix, rip_constant};
use snrspread_core::signals::sample_support;
use snrspread_core::snr::{
    measure, oracle_error_power, output_snr, recovered_snr, rsnr_osnr_bounds,
};
use snrspread_core::{MatrixEnsemble, NoiseSpec, RandomStream, SensingMatrix, SparseSignal};

fn unit_gaussian(m: usize, n: usize, seed: u64) -> SensingMatrix {
    let a = draw_matrix(MatrixEnsemble::gaussian(), m, n, &mut RandomStream::new(seed, "bracket", 0)).unwrap();
    SensingMatrix::from_matrix(a.matrix.map_columns_to_unit_norm().unwrap(), a.ensemble)
}

fn random_signal(n: usize, k: usize, seed: u64) -> SparseSignal {
    let mut s = RandomStream::new(seed, "signal", 0);
    let support = sample_support(n, k, &mut s).unwrap();
    SparseSignal::new(n, support, s.draw_standard_normal(k)).unwrap()
}

#[test]
fn monte_carlo_ratio_lies_in_bracket_for_pairs() {
    let noise = NoiseSpec::new(0.0, 1.0).unwrap();
    let (m, n, k) = (9, 15, 2);
    let mut checked = 0;
    for seed in 0..20 {
        let a = unit_gaussian(m, n, seed);
        let delta = rip_constant(&a, k).unwrap();
        let Ok((lo, hi)) = rsnr_osnr_bounds(delta, m, k) else { continue };
        let x = random_signal(n, k, seed);
        let eta_o = output_snr(&a, &x, &noise).unwrap().eta;
        let eta_r = recovered_snr(&a, &x, &noise, 10_000, &RandomStream::new(seed, "trials", 0)).unwrap().eta;
        let ratio = eta_r / eta_o;
        assert!(ratio >= lo * 0.99 && ratio <= hi * 1.01, "seed {seed}: {lo} {ratio} {hi}");
        checked += 1;
    }
    assert!(checked >= 10);
}

#[test]
fn white_noise_through_row_orthogonal_matrix_folds() {
    let (m, n) = (8, 40);
    let a = draw_matrix(MatrixEnsemble::RowOrthogonal, m, n, &mut RandomStream::new(1, "fold", 0)).unwrap();
    let zero = SparseSignal::new(n, vec![], vec![]).unwrap();
    let noise = NoiseSpec::new(1.0, 0.0).unwrap();
    let draws = 20_000;
    let mut stream = RandomStream::new(2, "fold-noise", 0);
    let mut diag = vec![0.0; m];
    for _ in 0..draws {
        let y = measure(&a, &zero, &noise, &mut stream).unwrap();
        for (d, v) in diag.iter_mut().zip(&y) {
            *d += v * v;
        }
    }
    let target = n as f64 / m as f64;
    for d in diag {
        // the variance estimate has relative s.e. √(2/draws) = 1%
        assert!((d / draws as f64 / target - 1.0).abs() < 0.05);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exact_ratio_lies_in_bracket(seed in any::<u64>(), k in 1usize..3) {
        let (m, n) = (9, 15);
        let a = unit_gaussian(m, n, seed);
        let delta = rip_constant(&a, k).unwrap();
        prop_assume!(delta < 1.0);
        let (lo, hi) = rsnr_osnr_bounds(delta, m, k).unwrap();
        let noise = NoiseSpec::new(0.0, 0.3).unwrap();
        let x = random_signal(n, k, seed);
        let eta_o = output_snr(&a, &x, &noise).unwrap().eta;
        let eta_r = x.norm_sq() / oracle_error_power(&a, x.support(), &noise).unwrap();
        let ratio = eta_r / eta_o;
        prop_assert!(ratio >= lo * (1.0 - 1e-12) && ratio <= hi * (1.0 + 1e-12));
    }

    #[test]
    fn bracket_is_geometric_about_m_over_k(delta in 0.0f64..0.999, m in 1usize..500, k in 1usize..50) {
        let (lo, hi) = rsnr_osnr_bounds(delta, m, k).unwrap();
        let r = m as f64 / k as f64;
        prop_assert!(lo <= r * (1.0 + 1e-15) && r <= hi * (1.0 + 1e-15));
        prop_assert!((lo * hi / (r * r) - 1.0).abs() < 1e-12);
    }
}
