//! `%.17g` number formatting and the CSV conventions shared by all emitters.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Formats like C's `printf("%.17g", v)`.
pub fn g17(v: f64) -> String {
    const P: i32 = 17;
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf" } else { "-inf" }.into();
    }
    if v == 0.0 {
        return if v.is_sign_negative() { "-0" } else { "0" }.into();
    }
    let sci = format!("{:.*e}", (P - 1) as usize, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..P).contains(&exp) {
        let mantissa = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let fixed = format!("{:.*}", (P - 1 - exp) as usize, v);
        strip_zeros(&fixed).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn csv_row(values: &[f64]) -> String {
    let mut line = String::new();
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            line.push(',');
        }
        line.push_str(&g17(*v));
    }
    line
}

/// One row per line, no header.
pub fn matrix_to_csv(m: &Matrix) -> String {
    let mut out = String::new();
    for i in 0..m.rows() {
        let _ = writeln!(out, "{}", csv_row(m.row(i)));
    }
    out
}

pub fn matrix_from_csv(text: &str) -> Result<Matrix> {
    let rows: Vec<Vec<f64>> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.split(',')
                .map(|f| {
                    f.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Domain(format!("bad matrix entry {f:?}: {e}")))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Matrix::from_rows(&rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_printf_g17() {
        // reference strings from C printf("%.17g")
        assert_eq!(g17(1.0), "1");
        assert_eq!(g17(0.1), "0.10000000000000001");
        assert_eq!(g17(-2.5), "-2.5");
        assert_eq!(g17(1e-5), "1.0000000000000001e-05");
        assert_eq!(g17(123456.0), "123456");
        assert_eq!(g17(1e17), "1e+17");
        assert_eq!(g17(1e16), "10000000000000000");
        assert_eq!(g17(0.0001), "0.0001");
        assert_eq!(g17(std::f64::consts::PI), "3.1415926535897931");
        assert_eq!(g17(0.0), "0");
    }

    #[test]
    fn matrix_csv_round_trip_is_exact() {
        let m = Matrix::from_rows(&[vec![0.1, -1.0 / 3.0], vec![1e-300, 6.02e23]]).unwrap();
        let back = matrix_from_csv(&matrix_to_csv(&m)).unwrap();
        assert_eq!(back, m);
    }
}
