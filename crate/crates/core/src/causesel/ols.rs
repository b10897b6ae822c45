use ndarray::{Array1, ArrayView1, ArrayView2};

use super::CauseError;

/// Columns whose residual norm after orthogonalization falls below this
/// fraction of their (unit) equilibrated norm are treated as dependent.
pub const RANK_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub coefficients: Array1<f64>,
    pub rss: f64,
    pub rank: usize,
}

/// Least squares by Householder QR with column pivoting. Columns are scaled to
/// unit norm first, so the fit is invariant to column rescaling; dependent
/// columns receive a zero coefficient.
pub fn ols_fit(x: ArrayView2<f64>, y: ArrayView1<f64>) -> Result<OlsFit, CauseError> {
    let (n, p) = x.dim();
    if y.len() != n {
        return Err(CauseError::Shape(format!("{n} rows but {} targets", y.len())));
    }
    if n < p {
        return Err(CauseError::Shape(format!("{n} rows < {p} columns")));
    }
    let mut scale = vec![0.0; p];
    let mut cols: Vec<Vec<f64>> = (0..p)
        .map(|j| {
            let c: Vec<f64> = x.column(j).to_vec();
            let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
            scale[j] = if norm > 0.0 { 1.0 / norm } else { 0.0 };
            c.into_iter().map(|v| v * scale[j]).collect()
        })
        .collect();
    let mut qty: Vec<f64> = y.to_vec();
    let mut perm: Vec<usize> = (0..p).collect();
    let mut rank = 0;
    for k in 0..p {
        let tail_norm = |c: &Vec<f64>| c[k..].iter().map(|v| v * v).sum::<f64>();
        let (best, best_sq) =
            (k..p)
                .map(|j| (j, tail_norm(&cols[j])))
                .fold((k, -1.0), |acc, (j, s)| if s > acc.1 { (j, s) } else { acc });
        if best_sq.sqrt() <= RANK_TOLERANCE {
            break;
        }
        cols.swap(k, best);
        perm.swap(k, best);
        let alpha = {
            let norm = best_sq.sqrt();
            if cols[k][k] > 0.0 {
                -norm
            } else {
                norm
            }
        };
        let mut v: Vec<f64> = cols[k][k..].to_vec();
        v[0] -= alpha;
        let vnorm_sq: f64 = v.iter().map(|a| a * a).sum();
        if vnorm_sq > 0.0 {
            let reflect = |target: &mut [f64]| {
                let dot: f64 = v.iter().zip(target.iter()).map(|(a, b)| a * b).sum();
                let f = 2.0 * dot / vnorm_sq;
                for (t, a) in target.iter_mut().zip(&v) {
                    *t -= f * a;
                }
            };
            for col in cols.iter_mut().skip(k + 1) {
                reflect(&mut col[k..]);
            }
            reflect(&mut qty[k..]);
        }
        cols[k][k] = alpha;
        for v in cols[k][k + 1..].iter_mut() {
            *v = 0.0;
        }
        rank = k + 1;
    }
    // Back substitution on the leading rank x rank triangle.
    let mut beta_piv = vec![0.0; p];
    for i in (0..rank).rev() {
        let mut acc = qty[i];
        for j in i + 1..rank {
            acc -= cols[j][i] * beta_piv[j];
        }
        beta_piv[i] = acc / cols[i][i];
    }
    let mut coefficients = Array1::zeros(p);
    for (k, &j) in perm.iter().enumerate() {
        coefficients[j] = beta_piv[k] * scale[j];
    }
    let rss = qty[rank..].iter().map(|v| v * v).sum();
    Ok(OlsFit { coefficients, rss, rank })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2, Axis};

    #[test]
    fn constant_column() {
        let x = Array2::ones((6, 1));
        let y = Array1::from_elem(6, 2.5);
        let fit = ols_fit(x.view(), y.view()).unwrap();
        assert!((fit.coefficients[0] - 2.5).abs() < 1e-14);
        assert!(fit.rss < 1e-24);
        assert_eq!(fit.rank, 1);
    }

    #[test]
    fn matches_normal_equations() {
        let x = array![[1.0, 0.3], [1.0, -1.2], [1.0, 2.0], [1.0, 0.7], [1.0, -0.4]];
        let y = array![1.0, -0.5, 2.2, 0.1, 0.9];
        let fit = ols_fit(x.view(), y.view()).unwrap();
        // Closed form of the 2x2 normal equations.
        let xtx = x.t().dot(&x);
        let xty = x.t().dot(&y);
        let det = xtx[[0, 0]] * xtx[[1, 1]] - xtx[[0, 1]] * xtx[[1, 0]];
        let b0 = (xtx[[1, 1]] * xty[0] - xtx[[0, 1]] * xty[1]) / det;
        let b1 = (xtx[[0, 0]] * xty[1] - xtx[[1, 0]] * xty[0]) / det;
        assert!((fit.coefficients[0] - b0).abs() < 1e-12);
        assert!((fit.coefficients[1] - b1).abs() < 1e-12);
        let resid = &y - &x.dot(&array![b0, b1]);
        assert!((fit.rss - resid.dot(&resid)).abs() < 1e-12);
        // Residual is orthogonal to the column space.
        let r = &y - &x.dot(&fit.coefficients);
        assert!(x.t().dot(&r).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn duplicated_column_keeps_rss() {
        let x = array![[1.0, 0.5], [1.0, 1.5], [1.0, -2.0], [1.0, 3.0], [1.0, 0.0]];
        let y = array![0.2, 1.1, -1.0, 2.7, 0.4];
        let single = ols_fit(x.view(), y.view()).unwrap();
        let dup = ndarray::concatenate(Axis(1), &[x.view(), x.column(1).insert_axis(Axis(1))]).unwrap();
        let fit = ols_fit(dup.view(), y.view()).unwrap();
        assert_eq!(fit.rank, 2);
        assert!((fit.rss - single.rss).abs() < 1e-12);
        assert!(fit.coefficients.iter().filter(|&&c| c == 0.0).count() == 1);
    }

    #[test]
    fn zero_column_is_dependent() {
        let x = array![[1.0, 0.0], [2.0, 0.0], [3.0, 0.0]];
        let y = array![2.0, 4.0, 6.0];
        let fit = ols_fit(x.view(), y.view()).unwrap();
        assert_eq!(fit.rank, 1);
        assert!((fit.coefficients[0] - 2.0).abs() < 1e-14);
        assert_eq!(fit.coefficients[1], 0.0);
    }

    #[test]
    fn too_few_rows() {
        let x = Array2::<f64>::ones((2, 3));
        assert!(ols_fit(x.view(), Array1::zeros(2).view()).is_err());
    }
}
