//! Nonsymmetric eigensolver: Householder reduction to Hessenberg form,
//! Francis double-shift QR for the spectrum, inverse iteration for the
//! eigenvectors.

use num_complex::Complex64;

use super::lu::ComplexLu;
use super::Matrix;
use crate::error::{Error, Result};

/// Relative gap below which two eigenvalues are treated as equal.
pub const DEFAULT_DISTINCT_TOL: f64 = 1e-8;

const MAX_SWEEPS_PER_EIGENVALUE: usize = 60;
const REFINEMENT_STEPS: usize = 2;

#[derive(Debug, Clone)]
pub struct ComplexEigenSystem {
    /// Sorted by real part; conjugate pairs adjacent, positive imaginary part first.
    pub eigenvalues: Vec<Complex64>,
    /// Unit-norm eigenvectors, `eigenvectors[j]` belongs to `eigenvalues[j]`.
    pub eigenvectors: Vec<Vec<Complex64>>,
    pub distinct: bool,
    pub normal: bool,
    /// Absolute gap used for the distinctness decision.
    pub distinct_threshold: f64,
    pub min_gap: f64,
    /// `max_j |A v_j - λ_j v_j|`.
    pub max_residual: f64,
}

impl ComplexEigenSystem {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn min_real_part(&self) -> f64 {
        self.eigenvalues
            .iter()
            .map(|l| l.re)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_modulus(&self) -> f64 {
        self.eigenvalues.iter().map(|l| l.norm()).fold(0.0, f64::max)
    }
}

pub fn eig(m: &Matrix) -> Result<ComplexEigenSystem> {
    eig_with_tolerance(m, DEFAULT_DISTINCT_TOL)
}

/// Like [`eig`] with a caller-chosen distinctness tolerance: eigenvalues count
/// as distinct when their minimum gap exceeds `tol * (1 + max |λ|)`.
pub fn eig_with_tolerance(m: &Matrix, tol: f64) -> Result<ComplexEigenSystem> {
    let n = m.require_square("eigenproblem operand")?;
    if n > 64 {
        return Err(Error::Capacity(format!("eig supports m <= 64, got {n}")));
    }
    let mut values = eigenvalues(m)?;
    sort_spectrum(&mut values);

    let a_norm = m.frobenius_norm();
    let mut vectors: Vec<Vec<Complex64>> = Vec::with_capacity(n);
    let mut max_residual = 0.0f64;
    let mut j = 0;
    while j < n {
        let lambda = values[j];
        let v = eigenvector(m, lambda)?;
        max_residual = max_residual.max(residual(m, lambda, &v));
        if lambda.im > 0.0 && j + 1 < n && values[j + 1] == lambda.conj() {
            let w: Vec<Complex64> = v.iter().map(|c| c.conj()).collect();
            vectors.push(v);
            vectors.push(w);
            j += 2;
        } else {
            vectors.push(v);
            j += 1;
        }
    }

    let mut min_gap = f64::INFINITY;
    for a in 0..n {
        for b in a + 1..n {
            min_gap = min_gap.min((values[a] - values[b]).norm());
        }
    }
    let max_mod = values.iter().map(|l| l.norm()).fold(0.0, f64::max);
    let threshold = tol * (1.0 + max_mod);
    let mt = m.transpose();
    let commutator = &(m * &mt) - &(&mt * m);
    let normal = commutator.frobenius_norm() <= 1e-10 * a_norm * a_norm;

    Ok(ComplexEigenSystem {
        eigenvalues: values,
        eigenvectors: vectors,
        distinct: min_gap > threshold,
        normal,
        distinct_threshold: threshold,
        min_gap,
        max_residual,
    })
}

fn sort_spectrum(values: &mut [Complex64]) {
    values.sort_by(|a, b| {
        a.re.total_cmp(&b.re)
            .then(a.im.abs().total_cmp(&b.im.abs()))
            .then(b.im.total_cmp(&a.im))
    });
}

/// Reduces `m` to upper Hessenberg form by Householder similarities.
pub(crate) fn hessenberg(m: &Matrix) -> Matrix {
    let n = m.rows();
    let mut h = m.clone();
    if n < 3 {
        return h;
    }
    let mut ort = vec![0.0; n];
    let high = n - 1;
    for col in 1..high {
        let scale: f64 = (col..=high).map(|i| h[(i, col - 1)].abs()).sum();
        if scale == 0.0 {
            continue;
        }
        let mut hh = 0.0;
        for i in (col..=high).rev() {
            ort[i] = h[(i, col - 1)] / scale;
            hh += ort[i] * ort[i];
        }
        let mut g = hh.sqrt();
        if ort[col] > 0.0 {
            g = -g;
        }
        hh -= ort[col] * g;
        ort[col] -= g;

        for j in col..n {
            let f: f64 = (col..=high).rev().map(|i| ort[i] * h[(i, j)]).sum::<f64>() / hh;
            for i in col..=high {
                h[(i, j)] -= f * ort[i];
            }
        }
        for i in 0..=high {
            let f: f64 = (col..=high).rev().map(|j| ort[j] * h[(i, j)]).sum::<f64>() / hh;
            for j in col..=high {
                h[(i, j)] -= f * ort[j];
            }
        }
        h[(col, col - 1)] = scale * g;
        for i in col + 1..n {
            h[(i, col - 1)] = 0.0;
        }
    }
    h
}

/// Eigenvalues of a general real matrix (unsorted).
pub(crate) fn eigenvalues(m: &Matrix) -> Result<Vec<Complex64>> {
    let nn = m.rows();
    if nn == 0 {
        return Ok(Vec::new());
    }
    let mut h = hessenberg(m);
    let mut re = vec![0.0; nn];
    let mut im = vec![0.0; nn];
    let mut found = vec![false; nn];

    let eps = f64::EPSILON;
    let low: isize = 0;
    let mut n: isize = nn as isize - 1;
    let mut exshift = 0.0;
    let (mut p, mut q, mut r) = (0.0f64, 0.0f64, 0.0f64);
    let mut s: f64;
    let mut z: f64;
    let mut w: f64;
    let mut x: f64;
    let mut y: f64;

    let mut norm = 0.0;
    for i in 0..nn {
        for j in i.saturating_sub(1)..nn {
            norm += h[(i, j)].abs();
        }
    }

    let at = |i: isize, j: isize| (i as usize, j as usize);
    let mut iter = 0usize;
    let mut total_iter = 0usize;
    while n >= low {
        let mut l = n;
        while l > low {
            s = h[at(l - 1, l - 1)].abs() + h[at(l, l)].abs();
            if s == 0.0 {
                s = norm;
            }
            if h[at(l, l - 1)].abs() < eps * s {
                break;
            }
            l -= 1;
        }

        if l == n {
            h[at(n, n)] += exshift;
            re[n as usize] = h[at(n, n)];
            im[n as usize] = 0.0;
            found[n as usize] = true;
            n -= 1;
            iter = 0;
        } else if l == n - 1 {
            w = h[at(n, n - 1)] * h[at(n - 1, n)];
            p = (h[at(n - 1, n - 1)] - h[at(n, n)]) / 2.0;
            q = p * p + w;
            z = q.abs().sqrt();
            h[at(n, n)] += exshift;
            h[at(n - 1, n - 1)] += exshift;
            x = h[at(n, n)];
            let (i0, i1) = ((n - 1) as usize, n as usize);
            if q >= 0.0 {
                z = if p >= 0.0 { p + z } else { p - z };
                re[i0] = x + z;
                re[i1] = re[i0];
                if z != 0.0 {
                    re[i1] = x - w / z;
                }
                im[i0] = 0.0;
                im[i1] = 0.0;
            } else {
                re[i0] = x + p;
                re[i1] = x + p;
                im[i0] = z;
                im[i1] = -z;
            }
            found[i0] = true;
            found[i1] = true;
            n -= 2;
            iter = 0;
        } else {
            x = h[at(n, n)];
            y = 0.0;
            w = 0.0;
            if l < n {
                y = h[at(n - 1, n - 1)];
                w = h[at(n, n - 1)] * h[at(n - 1, n)];
            }
            // exceptional shifts
            if iter == 10 {
                exshift += x;
                for i in low..=n {
                    h[at(i, i)] -= x;
                }
                s = h[at(n, n - 1)].abs() + h[at(n - 1, n - 2)].abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            if iter == 30 {
                s = (y - x) / 2.0;
                s = s * s + w;
                if s > 0.0 {
                    s = s.sqrt();
                    if y < x {
                        s = -s;
                    }
                    s = x - w / ((y - x) / 2.0 + s);
                    for i in low..=n {
                        h[at(i, i)] -= s;
                    }
                    exshift += s;
                    x = 0.964;
                    y = x;
                    w = x;
                }
            }
            iter += 1;
            total_iter += 1;
            if iter > MAX_SWEEPS_PER_EIGENVALUE {
                let partial = (0..nn)
                    .filter(|&i| found[i])
                    .map(|i| Complex64::new(re[i], im[i]))
                    .collect();
                return Err(Error::NoConvergence {
                    iterations: total_iter,
                    partial,
                });
            }

            // two consecutive small subdiagonal elements
            let mut mm = n - 2;
            while mm >= l {
                z = h[at(mm, mm)];
                r = x - z;
                s = y - z;
                p = (r * s - w) / h[at(mm + 1, mm)] + h[at(mm, mm + 1)];
                q = h[at(mm + 1, mm + 1)] - z - r - s;
                r = h[at(mm + 2, mm + 1)];
                s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if mm == l {
                    break;
                }
                if h[at(mm, mm - 1)].abs() * (q.abs() + r.abs())
                    < eps
                        * (p.abs()
                            * (h[at(mm - 1, mm - 1)].abs()
                                + z.abs()
                                + h[at(mm + 1, mm + 1)].abs()))
                {
                    break;
                }
                mm -= 1;
            }
            for i in mm + 2..=n {
                h[at(i, i - 2)] = 0.0;
                if i > mm + 2 {
                    h[at(i, i - 3)] = 0.0;
                }
            }

            // double QR step on rows l..=n, columns mm..=n
            let mut k = mm;
            while k < n {
                let notlast = k != n - 1;
                if k != mm {
                    p = h[at(k, k - 1)];
                    q = h[at(k + 1, k - 1)];
                    r = if notlast { h[at(k + 2, k - 1)] } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x == 0.0 {
                        k += 1;
                        continue;
                    }
                    p /= x;
                    q /= x;
                    r /= x;
                }
                s = (p * p + q * q + r * r).sqrt();
                if p < 0.0 {
                    s = -s;
                }
                if s != 0.0 {
                    if k != mm {
                        h[at(k, k - 1)] = -s * x;
                    } else if l != mm {
                        h[at(k, k - 1)] = -h[at(k, k - 1)];
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    z = r / s;
                    q /= p;
                    r /= p;

                    for j in k..nn as isize {
                        p = h[at(k, j)] + q * h[at(k + 1, j)];
                        if notlast {
                            p += r * h[at(k + 2, j)];
                            h[at(k + 2, j)] -= p * z;
                        }
                        h[at(k, j)] -= p * x;
                        h[at(k + 1, j)] -= p * y;
                    }
                    for i in 0..=n.min(k + 3) {
                        p = x * h[at(i, k)] + y * h[at(i, k + 1)];
                        if notlast {
                            p += z * h[at(i, k + 2)];
                            h[at(i, k + 2)] -= p * r;
                        }
                        h[at(i, k)] -= p;
                        h[at(i, k + 1)] -= p * q;
                    }
                }
                k += 1;
            }
        }
    }
    Ok(re
        .into_iter()
        .zip(im)
        .map(|(a, b)| Complex64::new(a, b))
        .collect())
}

fn to_complex(m: &Matrix, shift: Complex64) -> Vec<Complex64> {
    let n = m.rows();
    let mut out: Vec<Complex64> = m.as_slice().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    for i in 0..n {
        out[i * n + i] -= shift;
    }
    out
}

pub(crate) fn complex_matvec(m: &Matrix, v: &[Complex64]) -> Vec<Complex64> {
    (0..m.rows())
        .map(|i| {
            m.row(i)
                .iter()
                .zip(v)
                .fold(Complex64::new(0.0, 0.0), |acc, (&a, &b)| acc + b * a)
        })
        .collect()
}

pub(crate) fn complex_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

fn residual(m: &Matrix, lambda: Complex64, v: &[Complex64]) -> f64 {
    let av = complex_matvec(m, v);
    av.iter()
        .zip(v)
        .map(|(a, b)| (a - lambda * b).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// Unit vector with its largest-modulus component real and positive.
fn normalize_phase(v: &mut [Complex64]) -> bool {
    let norm = complex_norm(v);
    if !(norm > 0.0 && norm.is_finite()) {
        return false;
    }
    let pivot = v
        .iter()
        .copied()
        .fold(Complex64::new(0.0, 0.0), |best, c| {
            if c.norm() > best.norm() * (1.0 + 1e-12) {
                c
            } else {
                best
            }
        });
    let phase = pivot.conj() / pivot.norm();
    for c in v.iter_mut() {
        *c = *c * phase / norm;
        if c.im == 0.0 {
            c.im = 0.0; // clears -0.0
        }
    }
    true
}

fn eigenvector(m: &Matrix, lambda: Complex64) -> Result<Vec<Complex64>> {
    let n = m.rows();
    let a_norm = m.frobenius_norm().max(f64::MIN_POSITIVE);
    let tiny = f64::EPSILON * a_norm;
    let lu = ComplexLu::factor_perturbed(n, to_complex(m, lambda), tiny);
    let tol = 1e-9 * a_norm;

    let mut best: Option<(f64, Vec<Complex64>)> = None;
    for attempt in 0..4 {
        let mut v: Vec<Complex64> = (0..n)
            .map(|k| {
                let phase = 0.61803398875 * ((k + 1) * (attempt + 1)) as f64;
                Complex64::new(1.0 + 0.5 * phase.sin(), 0.0)
            })
            .collect();
        let mut ok = normalize_phase(&mut v);
        for _ in 0..=REFINEMENT_STEPS {
            if !ok {
                break;
            }
            v = lu.solve(&v);
            ok = normalize_phase(&mut v);
        }
        if !ok {
            continue;
        }
        let res = residual(m, lambda, &v);
        if res <= tol {
            return Ok(v);
        }
        if best.as_ref().is_none_or(|(r, _)| res < *r) {
            best = Some((res, v));
        }
    }
    match best {
        Some((_, v)) => Ok(v),
        None => Err(Error::Numerical(format!(
            "inverse iteration failed for eigenvalue {lambda}"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn diagonal_spectrum_and_basis() {
        let e = eig(&Matrix::from_diag(&[3.0, 1.0, 2.0])).unwrap();
        assert_eq!(e.eigenvalues, vec![c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0)]);
        for (j, &k) in [1usize, 2, 0].iter().enumerate() {
            let v = &e.eigenvectors[j];
            assert!((v[k] - c(1.0, 0.0)).norm() < 1e-12);
            assert!(complex_norm(v) - 1.0 < 1e-14);
        }
        assert!(e.distinct && e.normal);
    }

    #[test]
    fn rotation_generator() {
        let m = Matrix::from_rows(&[vec![0.0, -1.0], vec![1.0, 0.0]]).unwrap();
        let e = eig(&m).unwrap();
        assert!((e.eigenvalues[0] - c(0.0, 1.0)).norm() < 1e-14);
        assert!((e.eigenvalues[1] - c(0.0, -1.0)).norm() < 1e-14);
        assert!(e.max_residual < 1e-12);
    }

    #[test]
    fn jordan_block_is_not_generic() {
        let m = Matrix::from_rows(&[vec![1.0, 1.0], vec![0.0, 1.0]]).unwrap();
        let e = eig(&m).unwrap();
        assert_eq!(e.eigenvalues, vec![c(1.0, 0.0), c(1.0, 0.0)]);
        assert!(!e.distinct);
        assert!(!e.normal);
    }

    #[test]
    fn integer_spectrum_recovered() {
        let m = Matrix::from_rows(&[vec![2.0, 1.0], vec![9.0, 2.0]]).unwrap();
        let e = eig(&m).unwrap();
        assert!((e.eigenvalues[0] - c(-1.0, 0.0)).norm() < 1e-10);
        assert!((e.eigenvalues[1] - c(5.0, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn companion_matrix_roots() {
        // x^4 - 10x^3 + 35x^2 - 50x + 24 = (x-1)(x-2)(x-3)(x-4)
        let m = Matrix::from_rows(&[
            vec![10.0, -35.0, 50.0, -24.0],
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 0.0],
        ])
        .unwrap();
        let e = eig(&m).unwrap();
        for (k, l) in e.eigenvalues.iter().enumerate() {
            assert!((l - c(k as f64 + 1.0, 0.0)).norm() < 1e-9, "{l}");
        }
        assert!(e.max_residual <= 1e-9 * m.frobenius_norm());
    }

    #[test]
    fn rejects_large_and_rectangular() {
        assert!(matches!(eig(&Matrix::zeros(2, 3)), Err(Error::Dimension(_))));
        assert!(matches!(eig(&Matrix::identity(65)), Err(Error::Capacity(_))));
    }
}
