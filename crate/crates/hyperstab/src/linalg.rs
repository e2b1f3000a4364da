//! Dense symmetric matrix utilities for the small matrices appearing in the
//! certificates: smallest-eigenvalue computation by cyclic Jacobi rotations
//! and positive-(semi)definiteness tests with relative tolerances.

use std::fmt;

/// Relative tolerance used by [`SymMatrix::is_psd`] / [`SymMatrix::is_pd`]
/// callers that have no reason to pick their own.
pub const DEFAULT_PSD_TOL: f64 = 1e-9;

const SYMMETRY_TOL: f64 = 1e-12;
const JACOBI_OFF_TOL: f64 = 1e-14;
const JACOBI_MAX_SWEEPS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub enum LinalgError {
    NotSymmetric { i: usize, j: usize, delta: f64 },
    DimensionMismatch { expected: usize, got: usize },
    NonConvergence { residual: f64 },
    EmptyMatrix,
}

impl fmt::Display for LinalgError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LinalgError::NotSymmetric { i, j, delta } => {
                write!(f, "matrix is not symmetric: |a[{i}][{j}] - a[{j}][{i}]| = {delta:e}")
            }
            LinalgError::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
            LinalgError::NonConvergence { residual } => {
                write!(f, "Jacobi iteration did not converge: off-diagonal residual {residual:e}")
            }
            LinalgError::EmptyMatrix => write!(f, "matrix order must be positive"),
        }
    }
}

impl std::error::Error for LinalgError {}

/// Small dense general matrix, row-major. Used for reflection matrices `K`
/// and sampled linear parts `M`; no algebra beyond what the certificates
/// need.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    n: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zero(n: usize) -> Mat {
        Mat { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Mat {
        let mut m = Mat::zero(n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Mat, LinalgError> {
        let n = rows.len();
        if n == 0 {
            return Err(LinalgError::EmptyMatrix);
        }
        let mut data = Vec::with_capacity(n * n);
        for row in rows {
            if row.len() != n {
                return Err(LinalgError::DimensionMismatch { expected: n, got: row.len() });
            }
            data.extend_from_slice(row);
        }
        Ok(Mat { n, data })
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }
}

/// Symmetric matrix of small order. Construction checks symmetry up to a
/// relative tolerance and stores the symmetrized part `(A + Aᵀ)/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn new(n: usize, entries: Vec<f64>) -> Result<SymMatrix, LinalgError> {
        if n == 0 {
            return Err(LinalgError::EmptyMatrix);
        }
        if entries.len() != n * n {
            return Err(LinalgError::DimensionMismatch { expected: n * n, got: entries.len() });
        }
        let scale = entries.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        for i in 0..n {
            for j in (i + 1)..n {
                let delta = (entries[i * n + j] - entries[j * n + i]).abs();
                if delta > SYMMETRY_TOL * scale {
                    return Err(LinalgError::NotSymmetric { i, j, delta });
                }
            }
        }
        let mut data = entries;
        for i in 0..n {
            for j in (i + 1)..n {
                let avg = 0.5 * (data[i * n + j] + data[j * n + i]);
                data[i * n + j] = avg;
                data[j * n + i] = avg;
            }
        }
        Ok(SymMatrix { n, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<SymMatrix, LinalgError> {
        let n = rows.len();
        let mut entries = Vec::with_capacity(n * n);
        for row in rows {
            if row.len() != n {
                return Err(LinalgError::DimensionMismatch { expected: n, got: row.len() });
            }
            entries.extend_from_slice(row);
        }
        SymMatrix::new(n, entries)
    }

    pub fn diag(d: &[f64]) -> SymMatrix {
        let n = d.len();
        let mut data = vec![0.0; n * n];
        for (i, &v) in d.iter().enumerate() {
            data[i * n + i] = v;
        }
        SymMatrix { n, data }
    }

    pub fn identity(n: usize) -> SymMatrix {
        SymMatrix::diag(&vec![1.0; n])
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn off_diagonal_norm(data: &[f64], n: usize) -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += data[i * n + j] * data[i * n + j];
                }
            }
        }
        s.sqrt()
    }

    /// All eigenvalues, ascending. Cyclic Jacobi sweeps until the
    /// off-diagonal Frobenius norm drops below `1e-14 * ||A||_F`,
    /// at most 100 sweeps.
    pub fn eigenvalues(&self) -> Result<Vec<f64>, LinalgError> {
        let n = self.n;
        if n == 1 {
            return Ok(vec![self.data[0]]);
        }
        let mut a = self.data.clone();
        let norm = self.frobenius_norm();
        if norm == 0.0 {
            return Ok(vec![0.0; n]);
        }
        let target = JACOBI_OFF_TOL * norm;
        let mut converged = false;
        for _ in 0..JACOBI_MAX_SWEEPS {
            if Self::off_diagonal_norm(&a, n) <= target {
                converged = true;
                break;
            }
            for p in 0..n - 1 {
                for q in p + 1..n {
                    let apq = a[p * n + q];
                    if apq == 0.0 {
                        continue;
                    }
                    let app = a[p * n + p];
                    let aqq = a[q * n + q];
                    // classical stable rotation formulas
                    let theta = (aqq - app) / (2.0 * apq);
                    let t = if theta >= 0.0 {
                        1.0 / (theta + (1.0 + theta * theta).sqrt())
                    } else {
                        -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                    };
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[k * n + p];
                        let akq = a[k * n + q];
                        a[k * n + p] = c * akp - s * akq;
                        a[k * n + q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[p * n + k];
                        let aqk = a[q * n + k];
                        a[p * n + k] = c * apk - s * aqk;
                        a[q * n + k] = s * apk + c * aqk;
                    }
                }
            }
        }
        if !converged && Self::off_diagonal_norm(&a, n) > target {
            return Err(LinalgError::NonConvergence {
                residual: Self::off_diagonal_norm(&a, n),
            });
        }
        let mut eig: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
        eig.sort_by(|x, y| x.partial_cmp(y).expect("eigenvalues are finite"));
        Ok(eig)
    }

    pub fn smallest_eigenvalue(&self) -> Result<f64, LinalgError> {
        Ok(self.eigenvalues()?[0])
    }

    /// Positive semidefinite up to `tol` relative to `max(1, ||A||_F)`.
    pub fn is_psd(&self, tol: f64) -> Result<bool, LinalgError> {
        let scale = self.frobenius_norm().max(1.0);
        Ok(self.smallest_eigenvalue()? >= -tol * scale)
    }

    /// Strictly positive definite with margin `tol` relative to
    /// `max(1, ||A||_F)`.
    pub fn is_pd(&self, tol: f64) -> Result<bool, LinalgError> {
        let scale = self.frobenius_norm().max(1.0);
        Ok(self.smallest_eigenvalue()? >= tol * scale)
    }
}

/// `KᵀWK`, exactly symmetric by construction.
pub fn congruence(k: &Mat, w: &SymMatrix) -> Result<SymMatrix, LinalgError> {
    let n = w.order();
    if k.order() != n {
        return Err(LinalgError::DimensionMismatch { expected: n, got: k.order() });
    }
    // wk = W K
    let mut wk = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for l in 0..n {
                s += w.get(i, l) * k.get(l, j);
            }
            wk[i * n + j] = s;
        }
    }
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let mut s = 0.0;
            for l in 0..n {
                s += k.get(l, i) * wk[l * n + j];
            }
            out[i * n + j] = s;
            out[j * n + i] = s;
        }
    }
    SymMatrix::new(n, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use proptest::prelude::*;

    /// Analytic eigenvalues of a symmetric 2x2 [[a, b], [b, c]].
    pub(crate) fn eig2(a: f64, b: f64, c: f64) -> (f64, f64) {
        let tr = a + c;
        let disc = ((a - c) * (a - c) + 4.0 * b * b).sqrt();
        (0.5 * (tr - disc), 0.5 * (tr + disc))
    }

    /// Analytic eigenvalues of a symmetric 3x3, ascending (trigonometric
    /// solution of the characteristic cubic).
    pub(crate) fn eig3(m: &SymMatrix) -> [f64; 3] {
        assert_eq!(m.order(), 3);
        let a = m.get(0, 0);
        let b = m.get(1, 1);
        let c = m.get(2, 2);
        let d = m.get(0, 1);
        let e = m.get(1, 2);
        let f = m.get(0, 2);
        let p1 = d * d + e * e + f * f;
        if p1 == 0.0 {
            let mut ev = [a, b, c];
            ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
            return ev;
        }
        let q = (a + b + c) / 3.0;
        let p2 = (a - q) * (a - q) + (b - q) * (b - q) + (c - q) * (c - q) + 2.0 * p1;
        let p = (p2 / 6.0).sqrt();
        // B = (A - q I) / p; r = det(B) / 2 clamped into [-1, 1]
        let bm = |x: f64| x;
        let b00 = (a - q) / p;
        let b11 = (b - q) / p;
        let b22 = (c - q) / p;
        let b01 = bm(d) / p;
        let b12 = bm(e) / p;
        let b02 = bm(f) / p;
        let detb = b00 * (b11 * b22 - b12 * b12) - b01 * (b01 * b22 - b12 * b02)
            + b02 * (b01 * b12 - b11 * b02);
        let r = (detb / 2.0).clamp(-1.0, 1.0);
        let phi = r.acos() / 3.0;
        let e1 = q + 2.0 * p * phi.cos();
        let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
        let e2 = 3.0 * q - e1 - e3;
        let mut ev = [e1, e2, e3];
        ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
        ev
    }

    fn random_sym(rng: &mut Rng, n: usize, scale: f64) -> SymMatrix {
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = rng.uniform(-scale, scale);
                entries[i * n + j] = v;
                entries[j * n + i] = v;
            }
        }
        SymMatrix::new(n, entries).unwrap()
    }

    #[test]
    fn identity_and_simple_cases() {
        assert_eq!(SymMatrix::identity(2).smallest_eigenvalue().unwrap(), 1.0);
        let m = SymMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let eig = m.eigenvalues().unwrap();
        assert!((eig[0] - 1.0).abs() < 1e-12);
        assert!((eig[1] - 3.0).abs() < 1e-12);
        // boundary matrix of the bundled counterflow example at k = 3/4
        let n = SymMatrix::diag(&[1.28125, 0.0]);
        assert_eq!(n.smallest_eigenvalue().unwrap(), 0.0);
    }

    #[test]
    fn psd_and_pd_verdicts() {
        let tol = DEFAULT_PSD_TOL;
        let n = SymMatrix::diag(&[1.28125, 0.0]);
        assert!(n.is_psd(tol).unwrap());
        assert!(!n.is_pd(tol).unwrap());

        let open_loop = SymMatrix::diag(&[-2.0, 0.0]);
        assert!(!open_loop.is_psd(tol).unwrap());

        let strict = SymMatrix::diag(&[0.50348558029387545, 0.9375]);
        assert!(strict.is_pd(tol).unwrap());
    }

    #[test]
    fn congruence_examples() {
        // K = [[0, 1], [1-k, 0]], W = diag(a, b) -> diag(b (1-k)^2, a)
        let k_gain = 0.75;
        let k = Mat::from_rows(&[vec![0.0, 1.0], vec![1.0 - k_gain, 0.0]]).unwrap();
        let w = SymMatrix::diag(&[2.5, 3.5]);
        let c = congruence(&k, &w).unwrap();
        assert!((c.get(0, 0) - 3.5 * 0.0625).abs() < 1e-15);
        assert!((c.get(1, 1) - 2.5).abs() < 1e-15);
        assert_eq!(c.get(0, 1), 0.0);

        let zero = congruence(&Mat::zero(2), &w).unwrap();
        assert_eq!(zero, SymMatrix::diag(&[0.0, 0.0]));

        let mut rng = Rng::new(3);
        let w = random_sym(&mut rng, 3, 2.0);
        let id = congruence(&Mat::identity(3), &w).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((id.get(i, j) - w.get(i, j)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn symmetry_is_enforced() {
        let err = SymMatrix::from_rows(&[vec![1.0, 2.0], vec![1.0, 1.0]]).unwrap_err();
        assert!(matches!(err, LinalgError::NotSymmetric { .. }));
        // tiny asymmetry is symmetrized away
        let m = SymMatrix::from_rows(&[vec![1.0, 1.0 + 1e-13], vec![1.0, 1.0]]).unwrap();
        assert_eq!(m.get(0, 1), m.get(1, 0));
    }

    #[test]
    fn diagonal_eigenvalues_are_sorted_entries() {
        let mut rng = Rng::new(11);
        for _ in 0..100 {
            let d: Vec<f64> = (0..5).map(|_| rng.uniform(-10.0, 10.0)).collect();
            let m = SymMatrix::diag(&d);
            let mut expect = d.clone();
            expect.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let eig = m.eigenvalues().unwrap();
            for (got, want) in eig.iter().zip(&expect) {
                assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0));
            }
        }
    }

    #[test]
    fn jacobi_matches_analytic_2x2_and_3x3() {
        let mut rng = Rng::new(202);
        for _ in 0..1000 {
            let a = rng.uniform(-5.0, 5.0);
            let b = rng.uniform(-5.0, 5.0);
            let c = rng.uniform(-5.0, 5.0);
            let m = SymMatrix::from_rows(&[vec![a, b], vec![b, c]]).unwrap();
            let (lo, _hi) = eig2(a, b, c);
            let got = m.smallest_eigenvalue().unwrap();
            let scale = m.frobenius_norm().max(1.0);
            assert!(
                (got - lo).abs() <= 1e-10 * scale,
                "2x2 mismatch: got {got}, want {lo}"
            );
        }
        for _ in 0..1000 {
            let m = random_sym(&mut rng, 3, 5.0);
            let want = eig3(&m);
            let got = m.eigenvalues().unwrap();
            let scale = m.frobenius_norm().max(1.0);
            for i in 0..3 {
                assert!(
                    (got[i] - want[i]).abs() <= 1e-10 * scale,
                    "3x3 mismatch at {i}: got {:?}, want {:?}",
                    got,
                    want
                );
            }
        }
    }

    #[test]
    fn zero_matrix_is_fine() {
        let m = SymMatrix::diag(&[0.0; 4]);
        assert_eq!(m.smallest_eigenvalue().unwrap(), 0.0);
        assert!(m.is_psd(DEFAULT_PSD_TOL).unwrap());
    }

    proptest! {
        // Rayleigh quotients upper-bound nothing below the smallest eigenvalue.
        #[test]
        fn rayleigh_quotient_lower_bound(seed in 0u64..500, n in 2usize..9) {
            let mut rng = Rng::new(seed);
            let m = random_sym(&mut rng, n, 3.0);
            let lo = m.smallest_eigenvalue().unwrap();
            let scale = m.frobenius_norm().max(1.0);
            for _ in 0..1000 {
                let v: Vec<f64> = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
                let vv: f64 = v.iter().map(|x| x * x).sum();
                if vv < 1e-12 { continue; }
                let mut quad = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        quad += v[i] * m.get(i, j) * v[j];
                    }
                }
                prop_assert!(lo <= quad / vv + 1e-9 * scale);
            }
        }

        // K^T W K is PSD whenever W is.
        #[test]
        fn congruence_preserves_psd(seed in 0u64..500, n in 2usize..6) {
            let mut rng = Rng::new(seed.wrapping_add(999));
            // W = R^T R is PSD by construction
            let r = {
                let mut m = Mat::zero(n);
                for i in 0..n {
                    for j in 0..n {
                        m.set(i, j, rng.uniform(-2.0, 2.0));
                    }
                }
                m
            };
            let w = congruence(&r, &SymMatrix::identity(n)).unwrap();
            let mut k = Mat::zero(n);
            for i in 0..n {
                for j in 0..n {
                    k.set(i, j, rng.uniform(-2.0, 2.0));
                }
            }
            let c = congruence(&k, &w).unwrap();
            let scale = c.frobenius_norm().max(1.0);
            prop_assert!(c.smallest_eigenvalue().unwrap() >= -1e-10 * scale);
        }
    }
}
