//! Symmetric periodic tridiagonal systems, the Hessian structure of every
//! per-step problem (each unknown couples only to its two neighbours).

/// Symmetric matrix with `diag[i]` on the diagonal and `off[i]` coupling
/// `i` and `i + 1` (indices mod n, so `off[n - 1]` couples the last and first).
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicTridiag {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl PeriodicTridiag {
    pub fn zeros(n: usize) -> Self {
        Self { diag: vec![0.0; n], off: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let prev = (i + n - 1) % n;
                let next = (i + 1) % n;
                self.diag[i] * x[i] + self.off[i] * x[next] + self.off[prev] * x[prev]
            })
            .collect()
    }

    /// Sherman-Morrison reduction of the corner entries to a plain tridiagonal
    /// solve. Returns `None` on a vanishing pivot.
    pub fn solve(&self, rhs: &[f64]) -> Option<Vec<f64>> {
        let n = self.len();
        assert!(n >= 3);
        assert_eq!(rhs.len(), n);
        let corner = self.off[n - 1];
        let gamma = if self.diag[0] != 0.0 { -self.diag[0] } else { -1.0 };
        let mut b = self.diag.clone();
        b[0] -= gamma;
        b[n - 1] -= corner * corner / gamma;
        let sub = &self.off[..n - 1];

        let x = thomas(sub, &b, rhs)?;
        if corner == 0.0 {
            return Some(x);
        }
        let mut u = vec![0.0; n];
        u[0] = gamma;
        u[n - 1] = corner;
        let z = thomas(sub, &b, &u)?;
        let denom = 1.0 + z[0] + corner * z[n - 1] / gamma;
        if denom == 0.0 || !denom.is_finite() {
            return None;
        }
        let fact = (x[0] + corner * x[n - 1] / gamma) / denom;
        Some(x.iter().zip(&z).map(|(xi, zi)| xi - fact * zi).collect())
    }

    /// Solves `(self + weight * g g^T) x = rhs`.
    pub fn solve_rank_one(&self, weight: f64, g: &[f64], rhs: &[f64]) -> Option<Vec<f64>> {
        let y = self.solve(rhs)?;
        if weight == 0.0 {
            return Some(y);
        }
        let z = self.solve(g)?;
        let gy: f64 = g.iter().zip(&y).map(|(a, b)| a * b).sum();
        let gz: f64 = g.iter().zip(&z).map(|(a, b)| a * b).sum();
        let denom = 1.0 + weight * gz;
        if denom == 0.0 || !denom.is_finite() {
            return None;
        }
        let fact = weight * gy / denom;
        Some(y.iter().zip(&z).map(|(yi, zi)| yi - fact * zi).collect())
    }
}

/// Tridiagonal solve with symmetric off-diagonal `sub` (length n - 1).
fn thomas(sub: &[f64], diag: &[f64], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut piv = diag[0];
    if piv == 0.0 || !piv.is_finite() {
        return None;
    }
    c[0] = if n > 1 { sub[0] / piv } else { 0.0 };
    d[0] = rhs[0] / piv;
    for i in 1..n {
        piv = diag[i] - sub[i - 1] * c[i - 1];
        if piv == 0.0 || !piv.is_finite() {
            return None;
        }
        if i < n - 1 {
            c[i] = sub[i] / piv;
        }
        d[i] = (rhs[i] - sub[i - 1] * d[i - 1]) / piv;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Some(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;

    fn dense(t: &PeriodicTridiag) -> DMatrix<f64> {
        let n = t.len();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = t.diag[i];
            let j = (i + 1) % n;
            m[(i, j)] += t.off[i];
            m[(j, i)] += t.off[i];
        }
        m
    }

    proptest! {
        #[test]
        fn matches_dense_lu(
            n in 3usize..40,
            seed in proptest::collection::vec(-1.0f64..1.0, 120),
            weight in 0.0f64..50.0,
        ) {
            let diag: Vec<f64> = (0..n).map(|i| 4.0 + seed[i]).collect();
            let off: Vec<f64> = (0..n).map(|i| seed[40 + i]).collect();
            let rhs: Vec<f64> = (0..n).map(|i| seed[80 + i]).collect();
            let g: Vec<f64> = (0..n).map(|i| 0.5 + 0.1 * seed[(i + 7) % 120]).collect();
            let t = PeriodicTridiag { diag, off };

            let m = dense(&t);
            let x = t.solve(&rhs).unwrap();
            let oracle = m.clone().lu().solve(&DVector::from_vec(rhs.clone())).unwrap();
            for i in 0..n {
                prop_assert!((x[i] - oracle[i]).abs() <= 1e-10 * (1.0 + oracle[i].abs()));
            }

            let gv = DVector::from_vec(g.clone());
            let m1 = &m + weight * &gv * gv.transpose();
            let y = t.solve_rank_one(weight, &g, &rhs).unwrap();
            let oracle = m1.lu().solve(&DVector::from_vec(rhs)).unwrap();
            for i in 0..n {
                prop_assert!((y[i] - oracle[i]).abs() <= 1e-9 * (1.0 + oracle[i].abs()));
            }
        }
    }

    #[test]
    fn matvec_inverts_solve() {
        let t = PeriodicTridiag { diag: vec![3.0, 2.5, 4.0, 3.5, 2.0], off: vec![0.5, -0.3, 0.2, 0.1, 0.7] };
        let b = vec![1.0, -2.0, 0.5, 0.0, 3.0];
        let x = t.solve(&b).unwrap();
        for (u, v) in t.matvec(&x).iter().zip(&b) {
            assert!((u - v).abs() < 1e-13);
        }
    }
}
