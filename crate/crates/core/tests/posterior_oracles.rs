use ebdnn::basis::BasisSet;
use ebdnn::bspline::make_bspline_basis;
use ebdnn::posterior::*;
use ebdnn::quadrature::Grid;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Dense Gauss–Jordan elimination with partial pivoting.
fn gauss_jordan_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.iter().zip(b).map(|(row, &bi)| {
        let mut r = row.clone();
        r.push(bi);
        r
    }).collect();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs())).unwrap();
        m.swap(col, pivot);
        let p = m[col][col];
        for v in m[col].iter_mut() {
            *v /= p;
        }
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                if f != 0.0 {
                    for c in col..=n {
                        m[r][c] -= f * m[col][c];
                    }
                }
            }
        }
    }
    m.iter().map(|r| r[n]).collect()
}

/// Inverse by solving against unit vectors.
fn gauss_jordan_inverse(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let cols: Vec<Vec<f64>> = (0..n)
        .map(|j| gauss_jordan_solve(a, &(0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect::<Vec<_>>()))
        .collect();
    (0..n).map(|i| (0..n).map(|j| cols[j][i]).collect()).collect()
}

/// Normal equations built with plain loops.
fn naive_system(phi: &[Vec<f64>], y: &[f64], k: usize, sigma: f64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let s2 = sigma * sigma;
    let mut a = vec![vec![0.0; k]; k];
    let mut b = vec![0.0; k];
    for (row, &yi) in phi.iter().zip(y) {
        for i in 0..k {
            b[i] += row[i] * yi / s2;
            for j in 0..k {
                a[i][j] += row[i] * row[j] / s2;
            }
        }
    }
    for (i, r) in a.iter_mut().enumerate() {
        r[i] += 1.0;
    }
    (a, b)
}

fn random_instance(rng: &mut ChaCha8Rng, k: usize, n2: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let phi: Vec<Vec<f64>> = (0..n2).map(|_| (0..k).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let y: Vec<f64> = (0..n2).map(|_| rng.random_range(-3.0..3.0)).collect();
    (phi, y)
}

fn to_design(phi: &[Vec<f64>], k: usize) -> DesignMatrix {
    let flat: Vec<f64> = phi.iter().flatten().copied().collect();
    DesignMatrix::from_matrix(DMatrix::from_row_slice(phi.len(), k, &flat)).unwrap()
}

fn sup_rel(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

#[test]
fn mean_matches_gauss_jordan_k6_n40() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (phi, y) = random_instance(&mut rng, 6, 40);
    let post = fit_posterior(&to_design(&phi, 6), &y, 0.7).unwrap();
    let (a, b) = naive_system(&phi, &y, 6, 0.7);
    let oracle = gauss_jordan_solve(&a, &b);
    assert!(sup_rel(post.mean().as_slice(), &oracle) < 1e-10);
}

#[test]
fn empirical_gram_matches_triple_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (phi, _) = random_instance(&mut rng, 5, 33);
    let dm = to_design(&phi, 5);
    for i in 0..5 {
        for j in 0..5 {
            let mut s = 0.0;
            for row in &phi {
                s += row[i] * row[j];
            }
            assert!((dm.empirical_gram()[(i, j)] - s / 33.0).abs() < 1e-12);
        }
    }
}

#[test]
fn design_rows_are_one_hot_for_indicators() {
    let basis = make_bspline_basis(4, 1, 1).unwrap();
    let xs = vec![0.1, 0.3, 0.6, 0.9];
    let data = ebdnn::synth::Dataset::new(1, xs, vec![0.0; 4], 1.0, 0).unwrap();
    let dm = design_matrix(&basis, &data).unwrap();
    assert_eq!(dm.phi(), &DMatrix::<f64>::identity(4, 4));
}

#[test]
fn prior_only_moments() {
    let dm = DesignMatrix::from_matrix(DMatrix::zeros(0, 1)).unwrap();
    let post = fit_posterior(&dm, &[], 1.0).unwrap();
    let s = 100_000;
    let draws = sample_posterior(&post, s, 17).unwrap();
    let v: Vec<f64> = draws.iter().map(|d| d[0]).collect();
    let mean = v.iter().sum::<f64>() / s as f64;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (s as f64 - 1.0);
    assert!(mean.abs() < 4.0 / (s as f64).sqrt(), "mean {mean}");
    assert!((var - 1.0).abs() < 0.05, "variance {var}");
}

fn frobenius_rel(a: &DMatrix<f64>, b: &[Vec<f64>]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, row) in b.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            num += (a[(i, j)] - v).powi(2);
            den += v * v;
        }
    }
    (num / den).sqrt()
}

#[test]
fn draw_covariance_matches_explicit_inverse_k4() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (phi, y) = random_instance(&mut rng, 4, 12);
    let post = fit_posterior(&to_design(&phi, 4), &y, 1.0).unwrap();
    let draws = sample_posterior(&post, 200_000, 99).unwrap();
    let (a, _) = naive_system(&phi, &y, 4, 1.0);
    let inv = gauss_jordan_inverse(&a);
    let rel = frobenius_rel(&draws.sample_covariance(), &inv);
    assert!(rel < 0.05, "relative Frobenius error {rel}");
    assert!(frobenius_rel(&post.covariance(), &inv) < 1e-10);
}

#[test]
fn scalar_radius_matches_gaussian_quantile() {
    // posterior N(m, τ²) with k = 1 and φ ≡ 1
    let dm = DesignMatrix::from_matrix(DMatrix::from_element(3, 1, 1.0)).unwrap();
    let post = fit_posterior(&dm, &[0.5, 1.0, 2.0], 1.0).unwrap();
    let tau = post.covariance()[(0, 0)].sqrt();
    let basis = make_bspline_basis(1, 1, 1).unwrap();
    let design = GridDesign::new(&basis, Grid::trapezoid(1, 65).unwrap()).unwrap();
    let draws = sample_posterior(&post, 100_000, 5).unwrap();
    for norm in [Norm::L2, Norm::Sup] {
        let r = credible_radius(&draws, post.mean().as_slice(), &design, norm, 0.05).unwrap();
        assert!((r.radius / (1.959964 * tau) - 1.0).abs() < 0.02, "{norm:?}: {}", r.radius);
        assert_eq!(r.draws_used, 100_000);
    }
}

#[test]
fn standard_normal_band() {
    let dm = DesignMatrix::from_matrix(DMatrix::zeros(0, 1)).unwrap();
    let post = fit_posterior(&dm, &[], 1.0).unwrap();
    let basis = make_bspline_basis(1, 1, 1).unwrap();
    let design = GridDesign::new(&basis, Grid::trapezoid(1, 9).unwrap()).unwrap();
    let draws = sample_posterior(&post, 100_000, 8).unwrap();
    let band = pointwise_band(&draws, &design, 0.05).unwrap();
    for (l, u) in band.lower.iter().zip(&band.upper) {
        assert!((l / -1.959964 - 1.0).abs() < 0.02, "lower {l}");
        assert!((u / 1.959964 - 1.0).abs() < 0.02, "upper {u}");
    }
}

#[test]
fn curves_are_linear_in_theta() {
    let basis = make_bspline_basis(5, 3, 1).unwrap();
    let grid = Grid::trapezoid(1, 257).unwrap();
    let k = basis.len();
    let zero = eval_on_grid(&basis, &vec![0.0; k], &grid).unwrap();
    assert!(zero.values().iter().all(|&v| v == 0.0));
    let mut e2 = vec![0.0; k];
    e2[2] = 1.0;
    let c = eval_on_grid(&basis, &e2, &grid).unwrap();
    for (x, v) in grid.nodes().zip(c.values()) {
        assert_eq!(*v, basis.eval(x).unwrap()[2]);
    }
    let t1: Vec<f64> = (0..k).map(|i| i as f64 * 0.3 - 1.0).collect();
    let t2: Vec<f64> = (0..k).map(|i| (i as f64).sin()).collect();
    let sum: Vec<f64> = t1.iter().zip(&t2).map(|(a, b)| a + b).collect();
    let (a, b, s) =
        (eval_on_grid(&basis, &t1, &grid).unwrap(), eval_on_grid(&basis, &t2, &grid).unwrap(), eval_on_grid(&basis, &sum, &grid).unwrap());
    for i in 0..grid.len() {
        assert!((a.values()[i] + b.values()[i] - s.values()[i]).abs() < 1e-12);
    }
    let design = GridDesign::new(&basis, grid).unwrap();
    assert_eq!(design.curve(&t1).unwrap().values().len(), a.values().len());
}

#[test]
fn spline_target_is_covered_by_any_radius() {
    let basis = make_bspline_basis(6, 2, 1).unwrap();
    let grid = Grid::trapezoid(1, 129).unwrap();
    let theta: Vec<f64> = (0..basis.len()).map(|i| (i as f64 * 0.7).cos()).collect();
    let c = eval_on_grid(&basis, &theta, &grid).unwrap();
    for norm in [Norm::L2, Norm::Sup] {
        assert!(covers(&c, 0.0, &c, &grid, norm).unwrap());
    }
}

/// Empirical norm `‖f‖ₙ` at uniform design points against `‖f‖₂`.
#[test]
fn empirical_norm_sanity_for_rescaled_splines() {
    let basis = make_bspline_basis(16, 2, 1).unwrap().sqrt_k_rescaled();
    let grid = Grid::trapezoid(1, 4097).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let xs: Vec<f64> = (0..50_000).map(|_| rng.random::<f64>()).collect();
    let phi = basis.eval_points(&xs).unwrap();
    let trials = 200;
    let mut ok = 0;
    for _ in 0..trials {
        let theta: Vec<f64> = (0..basis.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let l2 = distance(&eval_on_grid(&basis, &theta, &grid).unwrap(), &Curve(vec![0.0; grid.len()]), &grid, Norm::L2).unwrap();
        let v = &phi * nalgebra::DVector::from_column_slice(&theta);
        let emp = (v.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64).sqrt();
        if 0.5 * l2 <= emp && emp <= 2.0 * l2 {
            ok += 1;
        }
    }
    assert!(ok as f64 >= 0.95 * trials as f64, "{ok}/{trials}");
}

fn small_design() -> (BasisSet, GridDesign) {
    let basis = make_bspline_basis(4, 2, 1).unwrap();
    let design = GridDesign::new(&basis, Grid::trapezoid(1, 65).unwrap()).unwrap();
    (basis, design)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mean_satisfies_normal_equations(seed in any::<u64>(), k in 1usize..9, n2 in 0usize..51, sigma in 0.2f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (phi, y) = random_instance(&mut rng, k, n2);
        let dm = if n2 == 0 { DesignMatrix::from_matrix(DMatrix::zeros(0, k)).unwrap() } else { to_design(&phi, k) };
        let post = fit_posterior(&dm, &y, sigma).unwrap();
        let (a, b) = naive_system(&phi, &y, k, sigma);
        let bsup = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..k {
            let am: f64 = (0..k).map(|j| a[i][j] * post.mean()[j]).sum();
            prop_assert!((am - b[i]).abs() < 1e-10 * (1.0 + bsup));
        }
    }

    #[test]
    fn radius_is_nonincreasing_in_alpha(seed in any::<u64>(), a1 in 0.02f64..0.5, a2 in 0.02f64..0.5) {
        let (_, design) = small_design();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<f64> = (0..5 * 200).map(|_| rng.random_range(-1.0..1.0)).collect();
        let draws = Draws::from_rows(5, values).unwrap();
        let center = [0.0; 5];
        let (lo, hi) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
        for norm in [Norm::L2, Norm::Sup] {
            let r_lo = credible_radius(&draws, &center, &design, norm, lo).unwrap().radius;
            let r_hi = credible_radius(&draws, &center, &design, norm, hi).unwrap().radius;
            prop_assert!(r_hi <= r_lo);
        }
    }

    #[test]
    fn distances_are_translation_invariant(seed in any::<u64>(), shift in prop::collection::vec(-5.0f64..5.0, 5)) {
        let (_, design) = small_design();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<f64> = (0..5 * 40).map(|_| rng.random_range(-1.0..1.0)).collect();
        let center: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let shifted: Vec<f64> = values.chunks(5).flat_map(|d| d.iter().zip(&shift).map(|(a, b)| a + b).collect::<Vec<_>>()).collect();
        let c2: Vec<f64> = center.iter().zip(&shift).map(|(a, b)| a + b).collect();
        let a = Draws::from_rows(5, values).unwrap();
        let b = Draws::from_rows(5, shifted).unwrap();
        for norm in [Norm::L2, Norm::Sup] {
            let ra = credible_radius(&a, &center, &design, norm, 0.1).unwrap().radius;
            let rb = credible_radius(&b, &c2, &design, norm, 0.1).unwrap().radius;
            prop_assert!((ra - rb).abs() <= 1e-9 * (1.0 + ra));
        }
    }

    #[test]
    fn containment_is_monotone_in_radius(seed in any::<u64>(), r1 in 0.0f64..2.0, extra in 0.0f64..2.0) {
        let grid = Grid::trapezoid(1, 33).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Curve((0..33).map(|_| rng.random_range(-1.0..1.0)).collect());
        let b = Curve((0..33).map(|_| rng.random_range(-1.0..1.0)).collect());
        for norm in [Norm::L2, Norm::Sup] {
            if covers(&a, r1, &b, &grid, norm).unwrap() {
                prop_assert!(covers(&a, r1 + extra, &b, &grid, norm).unwrap());
            }
        }
    }

    #[test]
    fn inflation_grows_with_n(n in 3usize..1_000_000, step in 1usize..1000) {
        for kind in [Inflation::SqrtLog, Inflation::Log, Inflation::LogCubed] {
            prop_assert!(kind.factor(n).unwrap() <= kind.factor(n + step).unwrap());
            prop_assert!(kind.factor(n).unwrap() >= 1.0);
        }
        prop_assert_eq!(Inflation::None.factor(n).unwrap(), 1.0);
    }
}
