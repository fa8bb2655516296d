//! Head-label scatter matrix and its leading eigenvectors.

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, LabelSpace};
use crate::error::{Error, Result};
use crate::linalg::{mean_rows, norm, sub, Matrix};
use crate::par;

pub const DEFAULT_RANK: usize = 100;
const MAX_SWEEPS: usize = 100;

/// Orthonormal basis (d x m) of the top-m eigenvectors of a symmetric matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenBasis {
    pub q: Matrix,
    pub eigenvalues: Vec<f64>,
    pub explained_ratio: f64,
}

impl EigenBasis {
    pub fn dim(&self) -> usize {
        self.q.rows()
    }

    pub fn rank(&self) -> usize {
        self.q.cols()
    }

    /// `Qᵀ x`
    pub fn coords(&self, x: &[f64]) -> Vec<f64> {
        self.q.matvec_t(x)
    }

    /// `Q Qᵀ x`
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        self.q.matvec(&self.coords(x))
    }
}

/// `Σ_b Σ_{z ∈ docs(b)} (r_z - o_b)(r_z - o_b)ᵀ` over head labels `b`, where `o_b`
/// is the mean representation of label `b`. Not normalized by counts.
pub fn scatter(reps: &Matrix, corpus: &Corpus, space: &LabelSpace) -> Result<Matrix> {
    if space.head().is_empty() {
        return Err(Error::Argument("scatter needs at least one head label".into()));
    }
    if reps.rows() != corpus.len() {
        return Err(Error::Shape(format!(
            "{} representations for {} documents",
            reps.rows(),
            corpus.len()
        )));
    }
    let d = reps.cols();
    let docs = corpus.label_docs(space.len());
    let parts = par::map_range(space.head().len(), |h| {
        let label = space.head()[h];
        let pool = &docs[label];
        if pool.is_empty() {
            return Err(Error::Argument(format!(
                "head label `{}` has no documents",
                space.name(label)
            )));
        }
        let proto = mean_rows(pool.iter().map(|&i| reps.row(i)), d);
        let mut s = Matrix::zeros(d, d);
        for &i in pool {
            let dev = sub(reps.row(i), &proto);
            s.add_outer(1.0, &dev, &dev);
        }
        Ok(s)
    });
    let mut total = Matrix::zeros(d, d);
    for p in parts {
        total.add_assign(&p?);
    }
    Ok(total)
}

/// Full eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns unsorted eigenvalues and the matching eigenvector columns.
fn jacobi(s: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    let n = s.rows();
    let mut a = Matrix::from_fn(n, n, |i, j| 0.5 * (s[(i, j)] + s[(j, i)]));
    let mut v = Matrix::identity(n);
    let scale = a.frobenius_norm();
    let off = |a: &Matrix| {
        let mut acc = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                acc += 2.0 * a[(i, j)] * a[(i, j)];
            }
        }
        acc.sqrt()
    };
    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let o = off(&a);
        if o == 0.0 || o <= 1e-15 * scale {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - sn * akq;
                    a[(k, q)] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * apk - sn * aqk;
                    a[(q, k)] = sn * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - sn * vkq;
                    v[(k, q)] = sn * vkp + c * vkq;
                }
            }
        }
    }
    if !converged {
        let achieved = off(&a);
        if achieved > 1e-10 * scale.max(1.0) {
            return Err(Error::Numerical(format!(
                "Jacobi did not converge in {MAX_SWEEPS} sweeps (off-diagonal norm {achieved:e})"
            )));
        }
    }
    Ok(((0..n).map(|i| a[(i, i)]).collect(), v))
}

/// Flips `col` so its first nonzero component is positive.
fn fix_sign(col: &mut [f64]) {
    if let Some(&first) = col.iter().find(|x| x.abs() > 1e-12) {
        if first < 0.0 {
            for x in col.iter_mut() {
                *x = -*x;
            }
        }
    }
}

pub fn top_eigen(s: &Matrix, m: usize) -> Result<EigenBasis> {
    let d = s.rows();
    if s.cols() != d {
        return Err(Error::Shape(format!("matrix is {:?}, not square", s.shape())));
    }
    if m == 0 || m > d {
        return Err(Error::Argument(format!("rank m = {m} must be in 1..={d}")));
    }
    if !s.is_finite() {
        return Err(Error::Numerical("scatter matrix has non-finite entries".into()));
    }
    let (values, vectors) = jacobi(s)?;
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]).then(i.cmp(&j)));

    let mut q = Matrix::zeros(d, m);
    let mut eigenvalues = Vec::with_capacity(m);
    let sym = Matrix::from_fn(d, d, |i, j| 0.5 * (s[(i, j)] + s[(j, i)]));
    let bound = 1e-6 * (sym.frobenius_norm() + 1.0);
    for (k, &idx) in order.iter().take(m).enumerate() {
        let mut col = vectors.column(idx);
        fix_sign(&mut col);
        let lambda = values[idx];
        let sq = sym.matvec(&col);
        let residual = norm(&sq.iter().zip(&col).map(|(a, b)| a - lambda * b).collect::<Vec<_>>());
        if residual > bound {
            return Err(Error::Numerical(format!(
                "eigenpair {k} residual {residual:e} exceeds {bound:e}"
            )));
        }
        for (i, v) in col.into_iter().enumerate() {
            q[(i, k)] = v;
        }
        eigenvalues.push(lambda);
    }
    let trace: f64 = values.iter().sum();
    let kept: f64 = eigenvalues.iter().sum();
    Ok(EigenBasis {
        q,
        eigenvalues,
        explained_ratio: ratio(kept, trace),
    })
}

fn ratio(kept: f64, trace: f64) -> f64 {
    if trace.abs() <= f64::EPSILON * kept.abs().max(1.0) {
        1.0
    } else {
        (kept / trace).clamp(0.0, 1.0)
    }
}

/// Fraction of `trace(S)` captured by the kept eigenvalues; 1 when `S` has zero trace.
pub fn explained(basis: &EigenBasis, s: &Matrix) -> f64 {
    let trace: f64 = (0..s.rows()).map(|i| s[(i, i)]).sum();
    ratio(basis.eigenvalues.iter().sum(), trace)
}
