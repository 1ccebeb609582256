//! Linear-coefficient solves checked against independent least-squares
//! oracles, including rank-deficient and badly scaled bases.
//!
//! Two oracles that share no code with the production solve are computed
//! per case and must agree with each other before either is trusted:
//! a modified-Gram-Schmidt column-space projector (with reorthogonalization
//! and rank detection) and a spectral pseudo-inverse built from the
//! symmetric eigendecomposition of the Gram matrix.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sagefit::varpro::{solve_alpha_star, ProjectionConfig};

/// Optimal residual norm via an orthonormal basis of the column space.
/// Columns that collapse below `1e-10` of their own norm after two
/// orthogonalization passes are dependent and dropped.
fn projector_residual(phi: &DMatrix<f64>, rhs: &DVector<f64>) -> f64 {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for j in 0..phi.ncols() {
        let original = phi.column(j).into_owned();
        let norm0 = original.norm();
        let mut v = original;
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&v);
                v -= q * c;
            }
        }
        let norm = v.norm();
        if norm0 > 0.0 && norm > 1e-10 * norm0 {
            basis.push(v / norm);
        }
    }
    let mut residual = rhs.clone();
    for q in &basis {
        let c = q.dot(&residual);
        residual -= q * c;
    }
    residual.norm()
}

/// Residual norm of the spectral pseudo-inverse solution
/// `alpha = V diag(1/lambda) V^T Phi^T rhs` with eigenvalues at or below
/// `lambda_max * 1e-12` treated as zero.
fn spectral_residual(phi: &DMatrix<f64>, rhs: &DVector<f64>) -> f64 {
    let gram = phi.tr_mul(phi);
    let atb = phi.tr_mul(rhs);
    let eig = SymmetricEigen::new(gram);
    let lambda_max = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let mut alpha = DVector::zeros(phi.ncols());
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda > lambda_max * 1e-12 {
            let v_k = eig.eigenvectors.column(k);
            let coef = v_k.dot(&atb) / lambda;
            alpha += v_k * coef;
        }
    }
    (rhs - phi * alpha).norm()
}

fn random_case(
    rng: &mut ChaCha8Rng,
    rank_deficient: bool,
) -> (DMatrix<f64>, Vec<f64>, Vec<f64>) {
    let m = rng.random_range(1..=8usize);
    let n = rng.random_range(m.max(4)..=64usize);
    let mut phi = DMatrix::zeros(n, m);
    for j in 0..m {
        let scale = 10f64.powf(rng.random_range(-1.5..1.5));
        for i in 0..n {
            phi[(i, j)] = scale * rng.random_range(-1.0..1.0);
        }
    }
    if rank_deficient && m >= 2 {
        // Overwrite one column with a multiple of another.
        let target = rng.random_range(0..m);
        let source = (target + 1) % m;
        let w = rng.random_range(-2.0..2.0);
        for i in 0..n {
            phi[(i, target)] = w * phi[(i, source)];
        }
    }
    let offset: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let targets: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    (phi, offset, targets)
}

#[test]
fn linear_solve_matches_independent_least_squares_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x04AC_1E55);
    let config = ProjectionConfig::default();
    for case in 0..200usize {
        let (phi, offset, targets) = random_case(&mut rng, case % 3 == 0);
        let report = solve_alpha_star(&phi, &offset, &targets, &config)
            .unwrap_or_else(|e| panic!("case {case}: {e}"));

        let rhs = DVector::from_iterator(
            targets.len(),
            targets.iter().zip(&offset).map(|(y, c)| y - c),
        );
        let oracle_a = projector_residual(&phi, &rhs);
        let oracle_b = spectral_residual(&phi, &rhs);
        assert!(
            (oracle_a - oracle_b).abs() <= 1e-9 * (1.0 + oracle_a),
            "case {case}: oracles disagree, projector {oracle_a} vs spectral {oracle_b}"
        );

        let alpha = DVector::from_column_slice(&report.alpha_star);
        let solve_residual = (&rhs - &phi * &alpha).norm();

        assert!(
            (solve_residual - oracle_a).abs() <= 1e-8 * (1.0 + oracle_a),
            "case {case}: solver residual {solve_residual} vs oracle {oracle_a} \
             (rank {} of {})",
            report.effective_rank,
            phi.ncols(),
        );
        // Regularization can only cost accuracy, never beat the optimum.
        assert!(solve_residual + 1e-9 >= oracle_a, "case {case}");
        assert!(
            (report.residual_norm - solve_residual).abs() <= 1e-9 * (1.0 + solve_residual),
            "case {case}: reported residual {} differs from recomputed {solve_residual}",
            report.residual_norm,
        );
    }
}
