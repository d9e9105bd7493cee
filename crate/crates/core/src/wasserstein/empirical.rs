use crate::error::{Error, Result};

/// Largest sample count accepted by [`wp_empirical`].
pub const MAX_EMPIRICAL_POINTS: usize = 4096;

/// Uniform measure on finitely many points of `R^m`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    points: Vec<Vec<f64>>,
}

impl EmpiricalMeasure {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = points.first() else {
            return Err(Error::Domain("empirical measure needs at least one point".into()));
        };
        let m = first.len();
        if points.iter().any(|p| p.len() != m) {
            return Err(Error::Dimension("points of differing dimension".into()));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite sample point".into()));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }
}

fn cost(u: &[f64], v: &[f64], p: f64) -> f64 {
    let sq: f64 = u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
    if p == 2.0 {
        sq
    } else if p == 1.0 {
        sq.sqrt()
    } else {
        sq.powf(0.5 * p)
    }
}

/// Exact `W_p` between two uniform measures with the same number of points:
/// `(min_π (1/n) Σ_i |u_i - v_{π(i)}|^p)^{1/p}` over permutations `π`.
pub fn wp_empirical(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, p: f64) -> Result<f64> {
    if !p.is_finite() || p <= 0.0 {
        return Err(Error::Domain(format!("order p must be a positive finite number, got {p}")));
    }
    if p < 1.0 {
        return Err(Error::OutOfScope(format!("W_p for p = {p} < 1")));
    }
    if mu.len() != nu.len() {
        return Err(Error::Dimension(format!(
            "empirical measures of sizes {} and {}",
            mu.len(),
            nu.len()
        )));
    }
    if mu.dim() != nu.dim() {
        return Err(Error::Dimension(format!(
            "empirical measures in dimensions {} and {}",
            mu.dim(),
            nu.dim()
        )));
    }
    let n = mu.len();
    if n > MAX_EMPIRICAL_POINTS {
        return Err(Error::Capacity(format!(
            "{n} points exceeds the assignment limit of {MAX_EMPIRICAL_POINTS}"
        )));
    }

    // fixed argument order so that the distance is exactly symmetric
    let (mu, nu) = if canonical_order(mu, nu) == std::cmp::Ordering::Greater { (nu, mu) } else { (mu, nu) };
    let total = if mu.dim() == 1 {
        let mut a: Vec<f64> = mu.points.iter().map(|x| x[0]).collect();
        let mut b: Vec<f64> = nu.points.iter().map(|x| x[0]).collect();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        a.iter().zip(&b).map(|(x, y)| (x - y).abs().powf(p)).sum::<f64>()
    } else {
        let c: Vec<f64> = mu
            .points
            .iter()
            .flat_map(|u| nu.points.iter().map(move |v| cost(u, v, p)))
            .collect();
        let assignment = min_cost_assignment(n, &c);
        assignment
            .iter()
            .enumerate()
            .map(|(i, &j)| cost(&mu.points[i], &nu.points[j], p))
            .sum()
    };
    Ok((total / n as f64).powf(1.0 / p))
}

fn canonical_order(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> std::cmp::Ordering {
    let flat = |m: &EmpiricalMeasure| m.points.iter().flatten().copied().collect::<Vec<f64>>();
    let (a, b) = (flat(mu), flat(nu));
    a.iter().zip(&b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
}

/// Square assignment problem by shortest augmenting paths with dual
/// potentials (Jonker–Volgenant / Kuhn–Munkres family, O(n³)).
/// `c` is row-major `n x n`; returns the column assigned to each row.
pub fn min_cost_assignment(n: usize, c: &[f64]) -> Vec<usize> {
    assert_eq!(c.len(), n * n, "cost matrix must be n x n");
    // 1-based internal indexing; column 0 is the virtual source
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0f64; n + 1];
    let mut used = vec![false; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0usize;
        minv.iter_mut().for_each(|x| *x = f64::INFINITY);
        used.iter_mut().for_each(|x| *x = false);
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let row = &c[(i0 - 1) * n..i0 * n];
            let ui0 = u[i0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = row[j - 1] - ui0 - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of_row = vec![0usize; n];
    for j in 1..=n {
        if row_of[j] > 0 {
            col_of_row[row_of[j] - 1] = j - 1;
        }
    }
    col_of_row
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use itertools::Itertools;

    fn measure(points: &[&[f64]]) -> EmpiricalMeasure {
        EmpiricalMeasure::new(points.iter().map(|p| p.to_vec()).collect()).unwrap()
    }

    fn random_set(rng: &mut RngStream, n: usize, m: usize) -> EmpiricalMeasure {
        EmpiricalMeasure::new(
            (0..n)
                .map(|_| {
                    let mut z = vec![0.0; m];
                    rng.standard_normals(&mut z);
                    z
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn identical_sets() {
        let a = measure(&[&[0.0, 1.0], &[2.0, -1.0], &[0.5, 0.5]]);
        assert_eq!(wp_empirical(&a, &a, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn sorted_coupling_in_one_dimension() {
        let a = measure(&[&[0.0], &[1.0]]);
        let b = measure(&[&[2.0], &[1.0]]);
        assert_eq!(wp_empirical(&a, &b, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn brute_force_small() {
        let mut rng = RngStream::new(12, 0);
        for trial in 0..40 {
            let a = random_set(&mut rng, 6, 2);
            let b = random_set(&mut rng, 6, 2);
            let p = if trial % 2 == 0 { 1.0 } else { 2.0 };
            let best = (0..6)
                .permutations(6)
                .map(|perm| {
                    perm.iter()
                        .enumerate()
                        .map(|(i, &j)| cost(&a.points[i], &b.points[j], p))
                        .sum::<f64>()
                })
                .fold(f64::INFINITY, f64::min);
            let want = (best / 6.0).powf(1.0 / p);
            let got = wp_empirical(&a, &b, p).unwrap();
            assert!((got - want).abs() <= 1e-12, "trial {trial}: {got} vs {want}");
        }
    }

    #[test]
    fn one_dimensional_shortcut_matches_assignment() {
        let mut rng = RngStream::new(2, 0);
        let a = random_set(&mut rng, 50, 1);
        let b = random_set(&mut rng, 50, 1);
        for p in [1.0, 2.0, 3.5] {
            let c: Vec<f64> = a
                .points
                .iter()
                .flat_map(|u| b.points.iter().map(move |v| cost(u, v, p)))
                .collect();
            let assign = min_cost_assignment(50, &c);
            let total: f64 = assign.iter().enumerate().map(|(i, &j)| c[i * 50 + j]).sum();
            let want = (total / 50.0).powf(1.0 / p);
            assert!((wp_empirical(&a, &b, p).unwrap() - want).abs() < 1e-12);
        }
    }

    #[test]
    fn errors() {
        let a = measure(&[&[0.0, 0.0]]);
        let b = measure(&[&[0.0, 0.0], &[1.0, 1.0]]);
        assert!(matches!(wp_empirical(&a, &b, 1.0), Err(Error::Dimension(_))));
        assert!(matches!(wp_empirical(&a, &a, 0.5), Err(Error::OutOfScope(_))));
        let big = EmpiricalMeasure::new(vec![vec![0.0, 0.0]; MAX_EMPIRICAL_POINTS + 1]).unwrap();
        assert!(matches!(wp_empirical(&big, &big, 1.0), Err(Error::Capacity(_))));
        assert!(EmpiricalMeasure::new(vec![]).is_err());
    }
}
