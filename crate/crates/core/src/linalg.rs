//! Small dense linear solves for the Kernel SHAP weighted least squares.

use ndarray::{Array1, Array2};

/// Solve `a x = b` by Gaussian elimination with partial pivoting.
///
/// Returns `None` when a pivot collapses below `tol` relative to the largest
/// row entry, i.e. the system is numerically singular.
pub(crate) fn solve(a: &Array2<f64>, b: &Array1<f64>) -> Option<Array1<f64>> {
    let n = b.len();
    assert_eq!(a.nrows(), n);
    assert_eq!(a.ncols(), n);
    if n == 0 {
        return Some(Array1::zeros(0));
    }
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let tol = 1e-12 * scale;

    let mut m = a.clone();
    let mut rhs = b.clone();
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&i, &j| m[[i, col]].abs().total_cmp(&m[[j, col]].abs()))
            .unwrap();
        if m[[pivot_row, col]].abs() < tol {
            return None;
        }
        if pivot_row != col {
            for k in 0..n {
                m.swap([pivot_row, k], [col, k]);
            }
            rhs.swap(pivot_row, col);
        }
        let pivot = m[[col, col]];
        for row in col + 1..n {
            let factor = m[[row, col]] / pivot;
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                m[[row, k]] -= factor * m[[col, k]];
            }
            rhs[row] -= factor * rhs[col];
        }
    }
    let mut x = Array1::zeros(n);
    for row in (0..n).rev() {
        let mut acc = rhs[row];
        for k in row + 1..n {
            acc -= m[[row, k]] * x[k];
        }
        x[row] = acc / m[[row, row]];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Solve with a diagonal ridge fallback when the plain solve is singular.
pub(crate) fn solve_with_ridge(a: &Array2<f64>, b: &Array1<f64>) -> Option<(Array1<f64>, bool)> {
    if let Some(x) = solve(a, b) {
        return Some((x, false));
    }
    let n = b.len();
    let trace: f64 = (0..n).map(|i| a[[i, i]].abs()).sum();
    let lambda = 1e-8 * (trace / n.max(1) as f64).max(1e-12);
    let mut ridged = a.clone();
    for i in 0..n {
        ridged[[i, i]] += lambda;
    }
    solve(&ridged, b).map(|x| (x, true))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn solves_known_system() {
        let a = array![[2.0, 1.0], [1.0, 3.0]];
        let b = array![5.0, 10.0];
        let x = solve(&a, &b).unwrap();
        assert_abs_diff_eq!(x[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(x[1], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn pivoting_handles_zero_leading_entry() {
        let a = array![[0.0, 1.0], [1.0, 0.0]];
        let b = array![2.0, 3.0];
        let x = solve(&a, &b).unwrap();
        assert_abs_diff_eq!(x[0], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(x[1], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn singular_system_reports_none() {
        let a = array![[1.0, 2.0], [2.0, 4.0]];
        let b = array![1.0, 2.0];
        assert!(solve(&a, &b).is_none());
        let (_, ridged) = solve_with_ridge(&a, &b).unwrap();
        assert!(ridged);
    }

    #[test]
    fn random_spd_systems_round_trip() {
        use rand::Rng;
        let mut rng = crate::rng::stream(11, &[0xA]);
        for _ in 0..50 {
            let n = rng.random_range(1..8usize);
            let g = Array2::from_shape_fn((n, n), |_| rng.random_range(-1.0..1.0));
            let a = g.t().dot(&g) + Array2::<f64>::eye(n) * 0.1;
            let x_true = Array1::from_shape_fn(n, |_| rng.random_range(-2.0..2.0));
            let b = a.dot(&x_true);
            let x = solve(&a, &b).unwrap();
            for i in 0..n {
                assert_abs_diff_eq!(x[i], x_true[i], epsilon = 1e-8);
            }
        }
    }
}
