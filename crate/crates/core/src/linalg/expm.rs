//! Matrix exponential by scaling and squaring with diagonal Padé approximants
//! (degrees 3, 5, 7, 9 and 13, selected from the 1-norm).

use super::{lu, Matrix};
use crate::error::{Error, Result};

const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.539398330063230e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
];
const THETA_13: f64 = 5.371920351148152;

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const B9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// `e^{M t}`.
pub fn mat_exp(m: &Matrix, t: f64) -> Result<Matrix> {
    let n = m.require_square("exponent")?;
    if !t.is_finite() {
        return Err(Error::Domain(format!("non-finite time {t}")));
    }
    if t == 0.0 || n == 0 {
        return Ok(Matrix::identity(n));
    }
    let a = m.scale(t);
    let norm = a.norm_one();
    if !norm.is_finite() {
        return Err(Error::Domain("non-finite exponent".into()));
    }

    for &(degree, theta) in &THETA {
        if norm <= theta {
            let coeffs: &[f64] = match degree {
                3 => &B3,
                5 => &B5,
                7 => &B7,
                _ => &B9,
            };
            return pade_low(&a, coeffs);
        }
    }

    let squarings = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let scaled = a.scale(0.5f64.powi(squarings));
    let mut r = pade13(&scaled)?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    Ok(r)
}

fn pade_low(a: &Matrix, b: &[f64]) -> Result<Matrix> {
    let n = a.rows();
    let a2 = a * a;
    // even powers I, A^2, A^4, ...
    let mut powers = vec![Matrix::identity(n)];
    while powers.len() < b.len().div_ceil(2) {
        let next = powers.last().unwrap() * &a2;
        powers.push(next);
    }
    let mut u = Matrix::zeros(n, n);
    let mut v = Matrix::zeros(n, n);
    for (k, p) in powers.iter().enumerate() {
        v = &v + &p.scale(b[2 * k]);
        if 2 * k + 1 < b.len() {
            u = &u + &p.scale(b[2 * k + 1]);
        }
    }
    let u = a * &u;
    finish(&u, &v)
}

fn pade13(a: &Matrix) -> Result<Matrix> {
    let n = a.rows();
    let b = &B13;
    let id = Matrix::identity(n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;

    let inner_u = &(&a6.scale(b[13]) + &a4.scale(b[11])) + &a2.scale(b[9]);
    let tail_u = &(&(&a6.scale(b[7]) + &a4.scale(b[5])) + &a2.scale(b[3])) + &id.scale(b[1]);
    let u = a * &(&(&a6 * &inner_u) + &tail_u);

    let inner_v = &(&a6.scale(b[12]) + &a4.scale(b[10])) + &a2.scale(b[8]);
    let tail_v = &(&(&a6.scale(b[6]) + &a4.scale(b[4])) + &a2.scale(b[2])) + &id.scale(b[0]);
    let v = &(&a6 * &inner_v) + &tail_v;
    finish(&u, &v)
}

fn finish(u: &Matrix, v: &Matrix) -> Result<Matrix> {
    let p = v + u;
    let q = v - u;
    lu::solve(&q, &p)
        .map_err(|_| Error::Numerical("singular Padé denominator in matrix exponential".into()))
}
