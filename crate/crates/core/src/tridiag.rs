//! Real symmetric tridiagonal matrices: Sturm counts, bisection and inverse
//! iteration, plus the three-point finite-difference discretisation of
//! `−∂² + V_ξ` on a Dirichlet box.

use crate::error::{Error, Result};
use crate::potentials::PotentialSpec;

/// Symmetric tridiagonal matrix with diagonal `diag` and off-diagonal `off`
/// (`off.len() == diag.len() - 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiagonal {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTridiagonal {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Result<Self> {
        if diag.is_empty() || off.len() + 1 != diag.len() {
            return Err(Error::InvalidInput(format!(
                "tridiagonal shape mismatch: {} diagonal, {} off-diagonal",
                diag.len(),
                off.len()
            )));
        }
        Ok(Self { diag, off })
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// Gershgorin bounds on the spectrum.
    pub fn gershgorin(&self) -> (f64, f64) {
        let n = self.dim();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let r = if i > 0 { self.off[i - 1].abs() } else { 0.0 }
                + if i + 1 < n { self.off[i].abs() } else { 0.0 };
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    fn pivot_floor(&self) -> f64 {
        let (lo, hi) = self.gershgorin();
        f64::MIN_POSITIVE.max(f64::EPSILON * lo.abs().max(hi.abs()) * 1e-3)
    }

    /// Number of eigenvalues strictly below `lambda` (signs of the LDLᵀ pivots).
    pub fn count_below(&self, lambda: f64) -> usize {
        let pivmin = self.pivot_floor();
        let mut count = 0;
        let mut q = self.diag[0] - lambda;
        if q.abs() < pivmin {
            q = -pivmin;
        }
        if q < 0.0 {
            count += 1;
        }
        for i in 1..self.dim() {
            let e = self.off[i - 1];
            q = self.diag[i] - lambda - e * e / q;
            if q.abs() < pivmin {
                q = -pivmin;
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// Smallest eigenvalue, bisected to `tol`.
    pub fn lowest_eigenvalue(&self, tol: f64) -> f64 {
        let (mut a, b) = self.gershgorin();
        let mut b = b + tol.max(f64::EPSILON * b.abs());
        while b - a > tol && b - a > 4.0 * f64::EPSILON * a.abs().max(b.abs()) {
            let m = 0.5 * (a + b);
            if self.count_below(m) > 0 {
                b = m;
            } else {
                a = m;
            }
        }
        0.5 * (a + b)
    }

    /// Eigenvalues in `[lo, hi)`, ascending, each bisected to `tol`.
    pub fn eigenvalues_in(&self, lo: f64, hi: f64, tol: f64) -> Vec<f64> {
        let c_lo = self.count_below(lo);
        let c_hi = self.count_below(hi);
        let mut out = Vec::with_capacity(c_hi.saturating_sub(c_lo));
        let mut left = lo;
        for k in c_lo..c_hi {
            // k-th eigenvalue (0-based) lies in [left, hi)
            let (mut a, mut b) = (left, hi);
            while b - a > tol && b - a > 4.0 * f64::EPSILON * a.abs().max(b.abs()) {
                let m = 0.5 * (a + b);
                if self.count_below(m) > k {
                    b = m;
                } else {
                    a = m;
                }
            }
            let lambda = 0.5 * (a + b);
            out.push(lambda);
            left = a;
        }
        out
    }

    /// Unit eigenvector for the (accurately known) eigenvalue `lambda` by
    /// inverse iteration, orthogonalised against `against`.
    pub fn eigenvector(&self, lambda: f64, against: &[&[f64]]) -> Vec<f64> {
        let n = self.dim();
        let lu = ShiftedLu::factor(self, lambda);
        let mut x: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * (0.7 * i as f64).sin()).collect();
        for _ in 0..4 {
            for v in against {
                let dot: f64 = x.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
                x.iter_mut().zip(v.iter()).for_each(|(a, b)| *a -= dot * b);
            }
            normalize(&mut x);
            lu.solve(&mut x);
            normalize(&mut x);
        }
        for v in against {
            let dot: f64 = x.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
            x.iter_mut().zip(v.iter()).for_each(|(a, b)| *a -= dot * b);
        }
        normalize(&mut x);
        // fix the sign so the largest component is positive
        let (imax, _) = x
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |(ib, vb), (i, v)| if v.abs() > vb { (i, v.abs()) } else { (ib, vb) });
        if x[imax] < 0.0 {
            x.iter_mut().for_each(|v| *v = -*v);
        }
        x
    }

    /// Eigenpairs with eigenvalue in `[lo, hi)`.
    pub fn eigenpairs_in(&self, lo: f64, hi: f64, tol: f64) -> Vec<(f64, Vec<f64>)> {
        let values = self.eigenvalues_in(lo, hi, tol);
        let cluster = 1e-7 * (hi - lo).abs().max(1.0);
        let mut out: Vec<(f64, Vec<f64>)> = Vec::with_capacity(values.len());
        for lambda in values {
            let against: Vec<&[f64]> = out
                .iter()
                .filter(|(mu, _)| (lambda - mu).abs() < cluster)
                .map(|(_, v)| v.as_slice())
                .collect();
            let v = self.eigenvector(lambda, &against);
            out.push((lambda, v));
        }
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n)
            .map(|i| {
                let mut y = self.diag[i] * x[i];
                if i > 0 {
                    y += self.off[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    y += self.off[i] * x[i + 1];
                }
                y
            })
            .collect()
    }
}

fn normalize(x: &mut [f64]) {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        x.iter_mut().for_each(|v| *v /= norm);
    }
}

/// LU factorisation with partial pivoting of `T − λI` (LAPACK `gttrf` layout).
struct ShiftedLu {
    dl: Vec<f64>,
    d: Vec<f64>,
    du: Vec<f64>,
    du2: Vec<f64>,
    swapped: Vec<bool>,
}

impl ShiftedLu {
    fn factor(t: &SymTridiagonal, lambda: f64) -> Self {
        let n = t.dim();
        let tiny = t.pivot_floor();
        let mut dl = t.off.clone();
        let mut d: Vec<f64> = t.diag.iter().map(|v| v - lambda).collect();
        let mut du = t.off.clone();
        let mut du2 = vec![0.0; n.saturating_sub(2)];
        let mut swapped = vec![false; n.saturating_sub(1)];
        for i in 0..n.saturating_sub(1) {
            if d[i].abs() >= dl[i].abs() {
                if d[i] == 0.0 {
                    d[i] = tiny;
                }
                let fact = dl[i] / d[i];
                dl[i] = fact;
                d[i + 1] -= fact * du[i];
            } else {
                let fact = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = fact;
                let temp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = temp - fact * d[i + 1];
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] *= -fact;
                }
                swapped[i] = true;
            }
        }
        if d[n - 1] == 0.0 {
            d[n - 1] = tiny;
        }
        Self {
            dl,
            d,
            du,
            du2,
            swapped,
        }
    }

    fn solve(&self, b: &mut [f64]) {
        let n = self.d.len();
        for i in 0..n.saturating_sub(1) {
            if self.swapped[i] {
                b.swap(i, i + 1);
            }
            b[i + 1] -= self.dl[i] * b[i];
        }
        b[n - 1] /= self.d[n - 1];
        if n > 1 {
            b[n - 2] = (b[n - 2] - self.du[n - 2] * b[n - 1]) / self.d[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            b[i] = (b[i] - self.du[i] * b[i + 1] - self.du2[i] * b[i + 2]) / self.d[i];
        }
    }
}

/// `−∂² + V_ξ` on `[a, b]` with Dirichlet ends, three-point stencil on the
/// interior nodes `x_i = a + i·h`, `i = 1..n−1`, `h = (b − a)/n`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteDifferenceBox {
    pub a: f64,
    pub b: f64,
    pub step: f64,
    pub offset: f64,
    pub nodes: Vec<f64>,
    pub matrix: SymTridiagonal,
}

impl FiniteDifferenceBox {
    /// `step` is adjusted down so that it divides `b − a`.
    pub fn new(spec: &PotentialSpec, a: f64, b: f64, offset: f64, step: f64) -> Result<Self> {
        if !(b > a) || !(step > 0.0) {
            return Err(Error::InvalidInput(format!(
                "finite-difference box [{a}, {b}] with step {step}"
            )));
        }
        let n = ((b - a) / step).round().max(2.0) as usize;
        let h = (b - a) / n as f64;
        let nodes: Vec<f64> = (1..n).map(|i| a + i as f64 * h).collect();
        let inv = 1.0 / (h * h);
        let diag = nodes
            .iter()
            .map(|&x| 2.0 * inv + spec.evaluate(x, offset))
            .collect();
        let off = vec![-inv; nodes.len() - 1];
        Ok(Self {
            a,
            b,
            step: h,
            offset,
            nodes,
            matrix: SymTridiagonal::new(diag, off)?,
        })
    }

    /// Number of box eigenvalues strictly below `energy`.
    pub fn count_below(&self, energy: f64) -> usize {
        self.matrix.count_below(energy)
    }

    pub fn eigenvalues_in(&self, lo: f64, hi: f64) -> Vec<f64> {
        self.matrix.eigenvalues_in(lo, hi, 1e-11)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn laplacian(n: usize) -> SymTridiagonal {
        SymTridiagonal::new(vec![2.0; n], vec![-1.0; n - 1]).unwrap()
    }

    #[test]
    fn sturm_count_matches_closed_form() {
        // eigenvalues 2 − 2cos(kπ/(n+1))
        let n = 50;
        let t = laplacian(n);
        let exact: Vec<f64> = (1..=n)
            .map(|k| 2.0 - 2.0 * (k as f64 * PI / (n as f64 + 1.0)).cos())
            .collect();
        for probe in [0.1, 0.77, 1.5, 2.0001, 3.3, 3.99] {
            let expect = exact.iter().filter(|&&l| l < probe).count();
            assert_eq!(t.count_below(probe), expect, "probe {probe}");
        }
        let found = t.eigenvalues_in(0.5, 1.5, 1e-13);
        let expect: Vec<f64> = exact.iter().copied().filter(|l| (0.5..1.5).contains(l)).collect();
        assert_eq!(found.len(), expect.len());
        for (f, e) in found.iter().zip(&expect) {
            assert!((f - e).abs() < 1e-12);
        }
    }

    #[test]
    fn inverse_iteration_residual() {
        let n = 400;
        let diag: Vec<f64> = (0..n).map(|i| 2.0 + (0.3 * i as f64).cos()).collect();
        let t = SymTridiagonal::new(diag, vec![-1.0; n - 1]).unwrap();
        let pairs = t.eigenpairs_in(0.5, 2.5, 1e-13);
        assert!(pairs.len() > 5);
        for (lambda, v) in &pairs {
            let tv = t.matvec(v);
            let res: f64 = tv
                .iter()
                .zip(v)
                .map(|(a, b)| (a - lambda * b).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(res < 1e-9, "residual {res}");
        }
        for i in 0..pairs.len() {
            for j in 0..i {
                let dot: f64 = pairs[i].1.iter().zip(&pairs[j].1).map(|(a, b)| a * b).sum();
                assert!(dot.abs() < 1e-8);
            }
        }
    }

    #[test]
    fn lowest_matches_full_bisection() {
        let n = 300;
        let diag: Vec<f64> = (0..n).map(|i| 2.0 + (0.7 * i as f64).sin()).collect();
        let t = SymTridiagonal::new(diag, vec![-1.0; n - 1]).unwrap();
        let (lo, hi) = t.gershgorin();
        let all = t.eigenvalues_in(lo, hi + 1.0, 1e-13);
        assert!((t.lowest_eigenvalue(1e-13) - all[0]).abs() < 1e-12);
    }

    #[test]
    fn free_box_second_order() {
        // [0, π]: eigenvalues n²
        let z = PotentialSpec::Zero;
        let errs: Vec<f64> = [PI / 200.0, PI / 400.0]
            .iter()
            .map(|&h| {
                let fd = FiniteDifferenceBox::new(&z, 0.0, PI, 0.0, h).unwrap();
                fd.eigenvalues_in(0.0, 1.5)[0] - 1.0
            })
            .collect();
        let ratio = errs[0] / errs[1];
        assert!((ratio - 4.0).abs() < 0.05, "ratio {ratio}");
        let fd = FiniteDifferenceBox::new(&z, 0.0, PI, 0.0, PI / 1000.0).unwrap();
        let ev = fd.eigenvalues_in(-1.0, 10.0);
        assert_eq!(ev.len(), 3);
        for (k, l) in ev.iter().enumerate() {
            let n2 = ((k + 1) * (k + 1)) as f64;
            assert!((l - n2).abs() < 1e-4 * n2 * n2);
        }
    }

    #[test]
    fn shape_checked() {
        assert!(SymTridiagonal::new(vec![1.0, 2.0], vec![]).is_err());
        assert!(FiniteDifferenceBox::new(&PotentialSpec::Zero, 1.0, 0.0, 0.0, 0.1).is_err());
    }
}
