//! Dense eigendecomposition of unitary matrices through commuting Hermitian parts.
//!
//! For a normal matrix `W`, `K = (W + W^dag)/2` and `S = (W - W^dag)/(2i)`
//! commute and share eigenvectors with `W`. Diagonalizing the generic
//! combination `K + mu S`, then `S` inside any remaining eigenvalue cluster,
//! yields an orthonormal eigenbasis of `W` with Hermitian solvers only.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{Error, Result};

const MIX: f64 = -1.7;
const CLUSTER_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct UnitaryEigen {
    /// `epsilon` in `(-pi, pi]` with eigenvalue `e^{-i epsilon}`, ascending.
    pub quasienergies: Vec<f64>,
    /// Orthonormal eigenvectors as columns, in the order of `quasienergies`.
    pub vectors: DMatrix<Complex64>,
}

impl UnitaryEigen {
    pub fn len(&self) -> usize {
        self.quasienergies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.quasienergies.is_empty()
    }

    pub fn vector(&self, i: usize) -> DVector<Complex64> {
        self.vectors.column(i).into_owned()
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_phase(x: f64) -> f64 {
    let y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y - 2.0 * PI
    } else {
        y
    }
}

/// Quasienergy of the eigenvalue `z = e^{-i epsilon}`.
pub fn quasienergy_of(z: Complex64) -> f64 {
    wrap_phase(-z.arg())
}

/// Eigenvalues (ascending) and eigenvectors of a Hermitian matrix.
pub fn hermitian_eigen(m: DMatrix<Complex64>) -> (Vec<f64>, DMatrix<Complex64>) {
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (vals, vecs)
}

/// Index ranges of consecutive sorted values closer than `tol` (single linkage).
fn clusters(vals: &[f64], tol: f64) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=vals.len() {
        if i == vals.len() || vals[i] - vals[i - 1] > tol {
            out.push(start..i);
            start = i;
        }
    }
    out
}

/// Rotates the columns `range` of `vecs` to diagonalize `q^dag m q`.
fn refine(vecs: &mut DMatrix<Complex64>, range: std::ops::Range<usize>, m: &DMatrix<Complex64>) -> Vec<f64> {
    let q = vecs.columns(range.start, range.len()).into_owned();
    let mut sub = q.adjoint() * m * &q;
    let sub_h = (&sub + sub.adjoint()) * Complex64::new(0.5, 0.0);
    sub = sub_h;
    let (vals, u) = hermitian_eigen(sub);
    let rotated = q * u;
    vecs.columns_mut(range.start, range.len()).copy_from(&rotated);
    vals
}

/// Eigendecomposition of a unitary matrix.
pub fn unitary_eigen(w: &DMatrix<Complex64>) -> Result<UnitaryEigen> {
    if !w.is_square() {
        return Err(Error::Invariant("eigendecomposition of a non-square matrix".into()));
    }
    let wd = w.adjoint();
    let k = (w + &wd) * Complex64::new(0.5, 0.0);
    let s = (w - &wd) * Complex64::new(0.0, -0.5);
    let h = &k + &s * Complex64::new(MIX, 0.0);
    let h = (&h + h.adjoint()) * Complex64::new(0.5, 0.0);
    let (vals, mut vecs) = hermitian_eigen(h);
    for range in clusters(&vals, CLUSTER_TOL) {
        if range.len() > 1 {
            refine(&mut vecs, range, &s);
        }
    }
    let wv = w * &vecs;
    let mut pairs: Vec<(f64, usize)> = (0..vecs.ncols())
        .map(|c| {
            let z = vecs.column(c).dotc(&wv.column(c));
            (quasienergy_of(z), c)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let vectors = DMatrix::from_fn(vecs.nrows(), vecs.ncols(), |r, c| vecs[(r, pairs[c].1)]);
    Ok(UnitaryEigen {
        quasienergies: pairs.iter().map(|p| p.0).collect(),
        vectors,
    })
}

/// Within every group of eigenvectors whose quasienergies agree to `tol`
/// (on the circle), rotates the basis to diagonalize the Hermitian `op`.
pub fn split_degenerate(eig: &mut UnitaryEigen, op: &DMatrix<Complex64>, tol: f64) {
    let n = eig.quasienergies.len();
    if n == 0 {
        return;
    }
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && eig.quasienergies[j] - eig.quasienergies[j - 1] <= tol {
            j += 1;
        }
        if j - i > 1 {
            refine(&mut eig.vectors, i..j, op);
        }
        i = j;
    }
    // A cluster straddling the +-pi cut.
    if n > 1 && eig.quasienergies[0] + 2.0 * PI - eig.quasienergies[n - 1] <= tol {
        let lo: Vec<usize> = (0..n).take_while(|&c| eig.quasienergies[c] + 2.0 * PI - eig.quasienergies[n - 1] <= tol).collect();
        let hi: Vec<usize> = (0..n).rev().take_while(|&c| eig.quasienergies[0] + 2.0 * PI - eig.quasienergies[c] <= tol).collect();
        let cols: Vec<usize> = hi.iter().rev().chain(lo.iter()).copied().collect();
        let q = DMatrix::from_fn(eig.vectors.nrows(), cols.len(), |r, c| eig.vectors[(r, cols[c])]);
        let sub = q.adjoint() * op * &q;
        let sub = (&sub + sub.adjoint()) * Complex64::new(0.5, 0.0);
        let (_, u) = hermitian_eigen(sub);
        let rotated = q * u;
        for (c, &col) in cols.iter().enumerate() {
            eig.vectors.column_mut(col).copy_from(&rotated.column(c));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn residual(w: &DMatrix<Complex64>, eig: &UnitaryEigen) -> f64 {
        (0..eig.len())
            .map(|i| {
                let v = eig.vector(i);
                let lam = Complex64::from_polar(1.0, -eig.quasienergies[i]);
                (w * &v - v * lam).norm()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn diagonal_unitary() {
        let phases = [0.3, -2.0, PI, 1.0];
        let w = DMatrix::from_diagonal(&DVector::from_iterator(4, phases.iter().map(|&p| Complex64::from_polar(1.0, -p))));
        let eig = unitary_eigen(&w).unwrap();
        assert_abs_diff_eq!(eig.quasienergies[0], -2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(eig.quasienergies[3], PI, epsilon = 1e-12);
        assert!(residual(&w, &eig) < 1e-12);
    }

    #[test]
    fn degenerate_pairs_resolved() {
        // Shift on a ring: eigenvalues e^{-ik} are doubly degenerate in cos k.
        let n = 12;
        let w = DMatrix::from_fn(n, n, |r, col| if r == (col + 1) % n { c(1.0, 0.0) } else { c(0.0, 0.0) });
        let eig = unitary_eigen(&w).unwrap();
        assert!(residual(&w, &eig) < 1e-10);
        let gram = eig.vectors.adjoint() * &eig.vectors;
        assert!((gram - DMatrix::identity(n, n)).norm() < 1e-10);
    }

    #[test]
    fn split_by_position() {
        let w = DMatrix::<Complex64>::identity(3, 3);
        let mut eig = unitary_eigen(&w).unwrap();
        let pos = DMatrix::from_diagonal(&DVector::from_vec(vec![c(2.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]));
        split_degenerate(&mut eig, &pos, 1e-8);
        for i in 0..3 {
            let v = eig.vector(i);
            let loc = v.iter().filter(|z| z.norm() > 1e-8).count();
            assert_eq!(loc, 1);
        }
    }

    #[test]
    fn wrap_interval() {
        assert_eq!(wrap_phase(-PI), PI);
        assert_abs_diff_eq!(wrap_phase(3.0 * PI / 2.0), -PI / 2.0, epsilon = 1e-15);
    }
}
