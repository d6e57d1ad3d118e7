use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView2};

/// Leading eigenpairs of a symmetric matrix, largest eigenvalue first.
#[derive(Debug, Clone)]
pub struct TopEigen {
    pub values: [f64; 2],
    /// `n x 2`, unit columns, signs fixed by [`orient_sign`].
    pub vectors: Array2<f64>,
    /// Sum of all eigenvalues (the trace).
    pub trace: f64,
    /// Largest `|A v - lambda v|` over the two returned pairs.
    pub residual: f64,
}

/// Makes the first non-negligible entry of `v` positive. Entries smaller
/// than `1e-10` times the largest magnitude count as zero.
pub fn orient_sign(v: &mut [f64]) {
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return;
    }
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-10 * scale) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Top-2 eigendecomposition of a symmetric matrix (tridiagonalization plus
/// implicit QR). Matrices smaller than 2x2 are padded with zero pairs.
pub fn symmetric_top2(matrix: ArrayView2<f64>) -> TopEigen {
    let n = matrix.nrows();
    assert_eq!(n, matrix.ncols(), "eigendecomposition needs a square matrix");
    let dense = DMatrix::from_fn(n, n, |i, j| matrix[[i, j]]);
    let eig = SymmetricEigen::new(dense);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let mut values = [0.0; 2];
    let mut vectors = Array2::zeros((n, 2));
    for (slot, &idx) in order.iter().take(2).enumerate() {
        values[slot] = eig.eigenvalues[idx];
        let mut column: Vec<f64> = eig.eigenvectors.column(idx).iter().copied().collect();
        orient_sign(&mut column);
        vectors.column_mut(slot).assign(&Array1::from(column));
    }

    let mut residual = 0.0f64;
    for slot in 0..n.min(2) {
        let v = vectors.column(slot);
        let av = matrix.dot(&v);
        let r = av
            .iter()
            .zip(v.iter())
            .map(|(a, b)| (a - values[slot] * b).powi(2))
            .sum::<f64>()
            .sqrt();
        residual = residual.max(r);
    }

    TopEigen {
        values,
        vectors,
        trace: eig.eigenvalues.iter().sum(),
        residual,
    }
}
