//! Complex polynomials, lemniscate-defining polynomials in factored form, and
//! the double-pole partial-fraction form of `[P/P']'`.
//!
//! Root finding uses the Aberth–Ehrlich simultaneous iteration. Degrees in this
//! crate stay small (below ~64), so the cubic cost per sweep is irrelevant and
//! the method's global convergence from a circle of starting points is what
//! matters.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;
use thiserror::Error;

/// Default relative tolerance for [`ComplexPoly::roots`].
pub const ROOT_TOL: f64 = 1e-12;
/// Default iteration cap for [`ComplexPoly::roots`].
pub const ROOT_MAX_ITER: usize = 200;
/// Roots closer than this (relative) are treated as one multiple root.
const ROOT_CLUSTER_TOL: f64 = 1e-5;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum PolyError {
    #[error("root finding needs degree >= 1")]
    Constant,
    #[error("root iteration stalled after {iterations} iterations (largest correction {max_correction:e})")]
    NoConvergence {
        iterations: usize,
        max_correction: f64,
        best: Vec<Complex64>,
    },
    #[error("scale must be positive and finite, got {0}")]
    BadScale(f64),
    #[error("a lemniscate polynomial needs at least one node")]
    NoNodes,
    #[error("node/multiplicity mismatch: {0}")]
    BadNodes(String),
    #[error("critical points {0} and {1} are confluent")]
    ConfluentCritical(Complex64, Complex64),
}

/// Dense complex polynomial, coefficients in ascending degree.
///
/// Trailing exact zeros are trimmed, so the leading coefficient is nonzero
/// unless the polynomial is identically zero (stored as `[0]`).
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexPoly {
    coeffs: Vec<Complex64>,
}

impl ComplexPoly {
    pub fn new(mut coeffs: Vec<Complex64>) -> Self {
        while coeffs.len() > 1 && coeffs.last() == Some(&Complex64::new(0.0, 0.0)) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(Complex64::new(0.0, 0.0));
        }
        Self { coeffs }
    }

    pub fn from_real(coeffs: &[f64]) -> Self {
        Self::new(coeffs.iter().map(|&c| Complex64::new(c, 0.0)).collect())
    }

    pub fn zero() -> Self {
        Self::new(vec![])
    }

    pub fn constant(c: Complex64) -> Self {
        Self::new(vec![c])
    }

    /// The monomial `z`.
    pub fn identity() -> Self {
        Self::from_real(&[0.0, 1.0])
    }

    /// `scale * Π (z - r)` over the given roots (repeated roots repeat).
    pub fn from_roots(scale: Complex64, roots: &[Complex64]) -> Self {
        let mut c = vec![scale];
        for &r in roots {
            let mut next = vec![Complex64::new(0.0, 0.0); c.len() + 1];
            for (i, &ci) in c.iter().enumerate() {
                next[i + 1] += ci;
                next[i] -= ci * r;
            }
            c = next;
        }
        Self::new(c)
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.len() == 1 && self.coeffs[0] == Complex64::new(0.0, 0.0)
    }

    pub fn leading(&self) -> Complex64 {
        *self.coeffs.last().expect("never empty")
    }

    /// Horner evaluation.
    pub fn eval(&self, z: Complex64) -> Complex64 {
        self.coeffs
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
    }

    pub fn derivative(&self) -> Self {
        if self.coeffs.len() <= 1 {
            return Self::zero();
        }
        Self::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &c)| c * k as f64)
                .collect(),
        )
    }

    /// `P#`: the polynomial with complex-conjugated coefficients.
    pub fn conj_coeffs(&self) -> Self {
        Self::new(self.coeffs.iter().map(|c| c.conj()).collect())
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self::new(self.coeffs.iter().map(|&c| c * s).collect())
    }

    /// Sum of coefficient magnitudes weighted by `|z|^k`; bounds the rounding
    /// error of Horner's rule at `z` up to a small multiple of machine epsilon.
    fn eval_magnitude(&self, z: Complex64) -> f64 {
        let r = z.norm();
        self.coeffs
            .iter()
            .rev()
            .fold(0.0, |acc, c| acc * r + c.norm())
    }

    pub fn roots(&self, tol: f64) -> Result<Vec<Complex64>, PolyError> {
        self.roots_with(tol, ROOT_MAX_ITER)
    }

    /// All complex roots by Aberth–Ehrlich iteration, repeated roots repeated.
    ///
    /// A root estimate is accepted once its correction falls below
    /// `tol * (1 + |z|)` or its residual drops under the Horner rounding bound.
    pub fn roots_with(&self, tol: f64, max_iter: usize) -> Result<Vec<Complex64>, PolyError> {
        let n = self.degree();
        if n == 0 {
            return Err(PolyError::Constant);
        }
        let lead = self.leading();
        let monic = self.scale(lead.inv());
        if n == 1 {
            return Ok(vec![-monic.coeffs[0]]);
        }
        let dp = monic.derivative();

        // Start on a circle of radius given by the geometric mean of root
        // magnitudes, rotated off the real axis to break conjugate symmetry.
        let c0 = monic.coeffs[0].norm();
        let radius = if c0 > 0.0 {
            c0.powf(1.0 / n as f64)
        } else {
            monic
                .coeffs
                .iter()
                .take(n)
                .map(|c| c.norm())
                .fold(0.0, f64::max)
                .max(1e-3)
        };
        let mut z: Vec<Complex64> = (0..n)
            .map(|k| {
                Complex64::from_polar(
                    radius,
                    2.0 * std::f64::consts::PI * k as f64 / n as f64 + 0.4,
                )
            })
            .collect();
        let mut done = vec![false; n];

        let mut max_corr = f64::INFINITY;
        for _ in 0..max_iter {
            max_corr = 0.0;
            for i in 0..n {
                if done[i] {
                    continue;
                }
                let zi = z[i];
                let p = monic.eval(zi);
                if p.norm() <= 8.0 * f64::EPSILON * monic.eval_magnitude(zi) {
                    done[i] = true;
                    continue;
                }
                let ratio = p / dp.eval(zi);
                let repulsion: Complex64 =
                    (0..n).filter(|&j| j != i).map(|j| (zi - z[j]).inv()).sum();
                let corr = ratio / (Complex64::new(1.0, 0.0) - ratio * repulsion);
                if !corr.is_finite() {
                    continue;
                }
                z[i] = zi - corr;
                let c = corr.norm();
                max_corr = max_corr.max(c);
                if c <= tol * (1.0 + z[i].norm()) {
                    done[i] = true;
                }
            }
            if done.iter().all(|&d| d) {
                return Ok(monic.refine_clusters(z));
            }
        }
        Err(PolyError::NoConvergence {
            iterations: max_iter,
            max_correction: max_corr,
            best: z,
        })
    }
}

impl ComplexPoly {
    /// Multiple roots come out of the iteration split by about `eps^{1/k}`.
    /// Their centroid is well conditioned; replace each tight cluster by its
    /// centroid polished with Newton on `P^{(k-1)}`, keeping the cluster only
    /// if the polished point stays within the cluster's spread.
    fn refine_clusters(&self, roots: Vec<Complex64>) -> Vec<Complex64> {
        let scale = 1.0 + roots.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let (centers, sizes) = cluster_points(&roots, ROOT_CLUSTER_TOL * scale);
        if sizes.iter().all(|&k| k == 1) {
            return roots;
        }
        let mut out = Vec::with_capacity(roots.len());
        for (center, k) in centers.into_iter().zip(sizes) {
            let members: Vec<Complex64> = roots
                .iter()
                .copied()
                .filter(|r| (r - center).norm() < ROOT_CLUSTER_TOL * scale)
                .collect();
            if k == 1 || members.len() != k {
                out.extend(members);
                continue;
            }
            let mut d = self.clone();
            for _ in 0..(k - 1) {
                d = d.derivative();
            }
            let dd = d.derivative();
            let mut z = center;
            for _ in 0..8 {
                let step = d.eval(z) / dd.eval(z);
                if !step.is_finite() {
                    break;
                }
                z -= step;
                if step.norm() < 1e-17 * scale {
                    break;
                }
            }
            let spread = members
                .iter()
                .map(|r| (r - center).norm())
                .fold(0.0, f64::max);
            if (z - center).norm() <= 2.0 * spread + 1e-15 * scale {
                out.extend(std::iter::repeat_n(z, k));
            } else {
                out.extend(members);
            }
        }
        out
    }
}

impl Add for &ComplexPoly {
    type Output = ComplexPoly;
    fn add(self, rhs: &ComplexPoly) -> ComplexPoly {
        let len = self.coeffs.len().max(rhs.coeffs.len());
        let zero = Complex64::new(0.0, 0.0);
        ComplexPoly::new(
            (0..len)
                .map(|i| {
                    self.coeffs.get(i).copied().unwrap_or(zero)
                        + rhs.coeffs.get(i).copied().unwrap_or(zero)
                })
                .collect(),
        )
    }
}

impl Neg for &ComplexPoly {
    type Output = ComplexPoly;
    fn neg(self) -> ComplexPoly {
        self.scale(Complex64::new(-1.0, 0.0))
    }
}

impl Sub for &ComplexPoly {
    type Output = ComplexPoly;
    fn sub(self, rhs: &ComplexPoly) -> ComplexPoly {
        self + &(-rhs)
    }
}

impl Mul for &ComplexPoly {
    type Output = ComplexPoly;
    fn mul(self, rhs: &ComplexPoly) -> ComplexPoly {
        let mut c = vec![Complex64::new(0.0, 0.0); self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            for (j, &b) in rhs.coeffs.iter().enumerate() {
                c[i + j] += a * b;
            }
        }
        ComplexPoly::new(c)
    }
}

impl fmt::Display for ComplexPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let terms: Vec<String> = self
            .coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| c.norm() != 0.0)
            .map(|(k, c)| match k {
                0 => format!("({c})"),
                1 => format!("({c})z"),
                _ => format!("({c})z^{k}"),
            })
            .collect();
        if terms.is_empty() {
            write!(f, "0")
        } else {
            write!(f, "{}", terms.join(" + "))
        }
    }
}

/// A lemniscate-defining polynomial `P(z) = a · Π (z − λ_j)^{k_j}`.
///
/// The factored data is authoritative; the expanded coefficients are cached.
/// The scale is kept positive: only `|P|` enters the lemniscate `{|P| = 1}`,
/// so any unimodular phase is absorbed.
#[derive(Debug, Clone, PartialEq)]
pub struct LemPoly {
    scale: f64,
    nodes: Vec<Complex64>,
    mults: Vec<usize>,
    expanded: ComplexPoly,
}

impl LemPoly {
    pub fn new(scale: f64, nodes: Vec<Complex64>, mults: Vec<usize>) -> Result<Self, PolyError> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(PolyError::BadScale(scale));
        }
        if nodes.is_empty() {
            return Err(PolyError::NoNodes);
        }
        if nodes.len() != mults.len() {
            return Err(PolyError::BadNodes(format!(
                "{} nodes but {} multiplicities",
                nodes.len(),
                mults.len()
            )));
        }
        if mults.contains(&0) {
            return Err(PolyError::BadNodes("multiplicity 0".into()));
        }
        if nodes.iter().any(|z| !z.is_finite()) {
            return Err(PolyError::BadNodes("non-finite node".into()));
        }
        let repeated: Vec<Complex64> = nodes
            .iter()
            .zip(&mults)
            .flat_map(|(&z, &k)| std::iter::repeat_n(z, k))
            .collect();
        let expanded = ComplexPoly::from_roots(Complex64::new(scale, 0.0), &repeated);
        Ok(Self {
            scale,
            nodes,
            mults,
            expanded,
        })
    }

    /// All nodes simple.
    pub fn simple(scale: f64, nodes: Vec<Complex64>) -> Result<Self, PolyError> {
        let mults = vec![1; nodes.len()];
        Self::new(scale, nodes, mults)
    }

    /// `a · (z − λ)^n`, whose lemniscate is the circle `|z − λ| = a^{-1/n}`.
    pub fn confluent(scale: f64, node: Complex64, n: usize) -> Result<Self, PolyError> {
        Self::new(scale, vec![node], vec![n])
    }

    /// Recover factored form from coefficients: roots within `cluster_tol` of
    /// each other are merged into a single node of higher multiplicity.
    pub fn from_poly(p: &ComplexPoly, cluster_tol: f64) -> Result<Self, PolyError> {
        let roots = p.roots(ROOT_TOL)?;
        let (nodes, mults) = cluster_points(&roots, cluster_tol);
        Self::new(p.leading().norm(), nodes, mults)
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn nodes(&self) -> &[Complex64] {
        &self.nodes
    }

    pub fn mults(&self) -> &[usize] {
        &self.mults
    }

    pub fn degree(&self) -> usize {
        self.mults.iter().sum()
    }

    pub fn expanded(&self) -> &ComplexPoly {
        &self.expanded
    }

    pub fn is_simple(&self) -> bool {
        self.mults.iter().all(|&k| k == 1)
    }

    /// Multiplicity-weighted centroid of the nodes.
    pub fn centroid(&self) -> Complex64 {
        let s: Complex64 = self
            .nodes
            .iter()
            .zip(&self.mults)
            .map(|(&z, &k)| z * k as f64)
            .sum();
        s / self.degree() as f64
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        self.nodes
            .iter()
            .zip(&self.mults)
            .fold(Complex64::new(self.scale, 0.0), |acc, (&l, &k)| {
                acc * (z - l).powu(k as u32)
            })
    }

    /// `P'(z)` by the product rule on the factored form.
    pub fn eval_derivative(&self, z: Complex64) -> Complex64 {
        let mut total = Complex64::new(0.0, 0.0);
        for (j, (&lj, &kj)) in self.nodes.iter().zip(&self.mults).enumerate() {
            let mut term =
                Complex64::new(self.scale * kj as f64, 0.0) * (z - lj).powu(kj as u32 - 1);
            for (i, (&li, &ki)) in self.nodes.iter().zip(&self.mults).enumerate() {
                if i != j {
                    term *= (z - li).powu(ki as u32);
                }
            }
            total += term;
        }
        total
    }

    /// `log|P(z)|`; `-inf` at a node.
    pub fn log_abs(&self, z: Complex64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.mults)
            .fold(self.scale.ln(), |acc, (&l, &k)| {
                acc + k as f64 * (z - l).norm().ln()
            })
    }

    /// Logarithmic derivative `P'/P = Σ k_j / (z − λ_j)`.
    pub fn log_derivative(&self, z: Complex64) -> Complex64 {
        self.nodes
            .iter()
            .zip(&self.mults)
            .map(|(&l, &k)| (z - l).inv() * k as f64)
            .sum()
    }

    /// `S(z) = Π (z − λ_j)` over distinct nodes.
    pub fn distinct_node_poly(&self) -> ComplexPoly {
        ComplexPoly::from_roots(Complex64::new(1.0, 0.0), &self.nodes)
    }

    /// `R(z) = Σ_j k_j Π_{i≠j} (z − λ_i)` over distinct nodes, so that
    /// `P/P' = S/R`. Its zeros are the critical points of `P` away from nodes.
    pub fn reduced_derivative(&self) -> ComplexPoly {
        let mut r = ComplexPoly::zero();
        for (j, &kj) in self.mults.iter().enumerate() {
            let others: Vec<Complex64> = self
                .nodes
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != j)
                .map(|(_, &z)| z)
                .collect();
            let term = ComplexPoly::from_roots(Complex64::new(kj as f64, 0.0), &others);
            r = &r + &term;
        }
        r
    }

    /// Critical points of `P` that are not nodes.
    pub fn critical_points(&self) -> Result<Vec<Complex64>, PolyError> {
        let r = self.reduced_derivative();
        if r.degree() == 0 {
            return Ok(vec![]);
        }
        r.roots(ROOT_TOL)
    }

    /// Same polynomial up to a unimodular factor after `z ↦ s·z + shift`:
    /// nodes map to `s·λ + shift`, and the scale picks up `|s|^{-n}`.
    pub fn transformed(&self, s: Complex64, shift: Complex64) -> Result<Self, PolyError> {
        let nodes = self.nodes.iter().map(|&l| s * l + shift).collect();
        Self::new(
            self.scale * s.norm().powi(-(self.degree() as i32)),
            nodes,
            self.mults.clone(),
        )
    }
}

/// Single-linkage clustering: points closer than `tol` share a cluster.
/// Returns cluster centroids and sizes in order of first appearance.
pub fn cluster_points(points: &[Complex64], tol: f64) -> (Vec<Complex64>, Vec<usize>) {
    let n = points.len();
    let mut label: Vec<usize> = (0..n).collect();
    fn find(label: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while label[r] != r {
            r = label[r];
        }
        label[i] = r;
        r
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if (points[i] - points[j]).norm() < tol {
                let (a, b) = (find(&mut label, i), find(&mut label, j));
                if a != b {
                    label[b.max(a)] = a.min(b);
                }
            }
        }
    }
    let mut centers: Vec<Complex64> = Vec::new();
    let mut sizes: Vec<usize> = Vec::new();
    let mut roots: Vec<usize> = Vec::new();
    for i in 0..n {
        let r = find(&mut label, i);
        match roots.iter().position(|&x| x == r) {
            Some(p) => {
                centers[p] += points[i];
                sizes[p] += 1;
            }
            None => {
                roots.push(r);
                centers.push(points[i]);
                sizes.push(1);
            }
        }
    }
    for (c, &s) in centers.iter_mut().zip(&sizes) {
        *c /= s as f64;
    }
    (centers, sizes)
}

/// `[P/P']' = 1/n + Σ A_k / (z − ξ_k)²` with simple critical points `ξ_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticalDecomp {
    pub constant: f64,
    pub poles: Vec<Complex64>,
    pub coeffs: Vec<Complex64>,
}

impl CriticalDecomp {
    pub fn eval(&self, z: Complex64) -> Complex64 {
        let tail: Complex64 = self
            .poles
            .iter()
            .zip(&self.coeffs)
            .map(|(&xi, &a)| a / ((z - xi) * (z - xi)))
            .sum();
        tail + self.constant
    }
}

/// Partial fractions of `[P/P']'`.
///
/// With `P/P' = S/R` (distinct-node form), the residue of `S/R` at a simple
/// zero `ξ` of `R` is `S(ξ)/R'(ξ)`, so the double-pole coefficient of the
/// derivative is `A = −S(ξ)/R'(ξ)`. Critical points closer than
/// `tol·(1 + max|ξ|)` are rejected as confluent.
pub fn double_pole_decomposition(p: &LemPoly, tol: f64) -> Result<CriticalDecomp, PolyError> {
    let n = p.degree();
    let constant = 1.0 / n as f64;
    let r = p.reduced_derivative();
    if r.degree() == 0 {
        return Ok(CriticalDecomp {
            constant,
            poles: vec![],
            coeffs: vec![],
        });
    }
    let poles = r.roots(ROOT_TOL)?;
    let span = 1.0 + poles.iter().map(|z| z.norm()).fold(0.0, f64::max);
    for i in 0..poles.len() {
        for j in (i + 1)..poles.len() {
            if (poles[i] - poles[j]).norm() < tol * span {
                return Err(PolyError::ConfluentCritical(poles[i], poles[j]));
            }
        }
    }
    let s = p.distinct_node_poly();
    let dr = r.derivative();
    let coeffs = poles.iter().map(|&xi| -s.eval(xi) / dr.eval(xi)).collect();
    Ok(CriticalDecomp {
        constant,
        poles,
        coeffs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn sorted(mut v: Vec<Complex64>) -> Vec<Complex64> {
        v.sort_by(|a, b| {
            a.re.partial_cmp(&b.re)
                .unwrap()
                .then(a.im.partial_cmp(&b.im).unwrap())
        });
        v
    }

    #[test]
    fn eval_examples() {
        let p = ComplexPoly::from_real(&[-0.81, 0.0, 1.0]);
        assert_eq!(p.eval(c(0.0, 0.0)), c(-0.81, 0.0));
        let w = Complex64::from_polar(1.0, std::f64::consts::PI / 3.0);
        assert_eq!(ComplexPoly::identity().eval(w), w);
        let q = ComplexPoly::from_real(&[1.0, 0.0, 1.0]);
        assert_eq!(q.eval(c(0.0, 1.0)), c(0.0, 0.0));
    }

    #[test]
    fn derivative_examples() {
        let p = ComplexPoly::from_real(&[-0.81, 0.0, 1.0]);
        assert_eq!(p.derivative(), ComplexPoly::from_real(&[0.0, 2.0]));
        assert!(ComplexPoly::constant(c(3.0, 1.0)).derivative().is_zero());
        let cube = ComplexPoly::from_roots(c(1.0, 0.0), &[c(1.0, 0.0); 3]);
        let sq3 = ComplexPoly::from_roots(c(3.0, 0.0), &[c(1.0, 0.0); 2]);
        assert_eq!(cube.derivative(), sq3);
    }

    #[test]
    fn trims_trailing_zeros() {
        let p = ComplexPoly::from_real(&[1.0, 2.0, 0.0, 0.0]);
        assert_eq!(p.degree(), 1);
        assert!(ComplexPoly::new(vec![]).is_zero());
    }

    #[test]
    fn roots_examples() {
        let r = sorted(
            ComplexPoly::from_real(&[1.0, 0.0, 1.0])
                .roots(ROOT_TOL)
                .unwrap(),
        );
        assert_abs_diff_eq!(r[0].im, -1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(r[1].im, 1.0, epsilon = 1e-14);

        let r = sorted(
            ComplexPoly::from_real(&[-0.81, 0.0, 1.0])
                .roots(ROOT_TOL)
                .unwrap(),
        );
        assert!((r[0] - c(-0.9, 0.0)).norm() < 1e-14);
        assert!((r[1] - c(0.9, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn roots_double_root() {
        // (z-0.3)^2 (z+0.5) = z^3 - 0.1 z^2 - 0.21 z + 0.045
        let p = ComplexPoly::from_real(&[0.045, -0.21, -0.1, 1.0]);
        let r = sorted(p.roots(ROOT_TOL).unwrap());
        assert!((r[0] - c(-0.5, 0.0)).norm() < 1e-8, "{r:?}");
        assert!((r[1] - c(0.3, 0.0)).norm() < 1e-8, "{r:?}");
        assert!((r[2] - c(0.3, 0.0)).norm() < 1e-8, "{r:?}");
        for z in &r {
            assert!(p.eval(*z).norm() < 1e-15);
        }
    }

    #[test]
    fn roots_of_constant_is_error() {
        assert_eq!(
            ComplexPoly::constant(c(2.0, 0.0)).roots(ROOT_TOL),
            Err(PolyError::Constant)
        );
    }

    #[test]
    fn lempoly_rejects_bad_data() {
        assert!(matches!(
            LemPoly::simple(0.0, vec![c(0.0, 0.0)]),
            Err(PolyError::BadScale(_))
        ));
        assert!(matches!(
            LemPoly::simple(-1.0, vec![c(0.0, 0.0)]),
            Err(PolyError::BadScale(_))
        ));
        assert_eq!(LemPoly::simple(1.0, vec![]), Err(PolyError::NoNodes));
        assert!(LemPoly::new(1.0, vec![c(0.0, 0.0)], vec![0]).is_err());
    }

    #[test]
    fn factored_and_expanded_agree() {
        let p = LemPoly::new(1.7, vec![c(0.2, 0.1), c(-0.4, 0.3)], vec![2, 1]).unwrap();
        for k in 0..16 {
            let z = Complex64::from_polar(1.3, k as f64 * 0.4);
            assert!((p.eval(z) - p.expanded().eval(z)).norm() < 1e-13);
            assert!((p.eval_derivative(z) - p.expanded().derivative().eval(z)).norm() < 1e-12);
            let ld = p.eval_derivative(z) / p.eval(z);
            assert!((p.log_derivative(z) - ld).norm() < 1e-12);
            assert_abs_diff_eq!(p.log_abs(z), p.eval(z).norm().ln(), epsilon = 1e-13);
        }
    }

    #[test]
    fn from_poly_merges_clusters() {
        let p = LemPoly::new(2.0, vec![c(0.1, 0.0)], vec![2]).unwrap();
        let q = LemPoly::from_poly(p.expanded(), 1e-6).unwrap();
        assert_eq!(q.mults(), &[2]);
        assert!((q.nodes()[0] - c(0.1, 0.0)).norm() < 1e-12);
        assert_abs_diff_eq!(q.scale(), 2.0, epsilon = 1e-14);
    }

    /// Independent route: `[P/P']' = 1 − P P'' / P'^2`.
    fn brute_force_decomp_target(p: &ComplexPoly, z: Complex64) -> Complex64 {
        let d1 = p.derivative();
        let d2 = d1.derivative();
        let pd = d1.eval(z);
        Complex64::new(1.0, 0.0) - p.eval(z) * d2.eval(z) / (pd * pd)
    }

    #[test]
    fn decomposition_bernoulli() {
        let p = LemPoly::simple(1.0, vec![c(0.8, 0.0), c(-0.8, 0.0)]).unwrap();
        let d = double_pole_decomposition(&p, 1e-8).unwrap();
        assert_eq!(d.constant, 0.5);
        assert_eq!(d.poles.len(), 1);
        assert!(d.poles[0].norm() < 1e-15);
        assert!((d.coeffs[0] - c(0.32, 0.0)).norm() < 1e-14);
        for k in 0..32 {
            let z = Complex64::from_polar(1.5, 2.0 * std::f64::consts::PI * k as f64 / 32.0);
            let want = brute_force_decomp_target(p.expanded(), z);
            assert!((d.eval(z) - want).norm() < 1e-13);
        }
    }

    #[test]
    fn decomposition_confluent_power_has_no_poles() {
        for n in 1..=5 {
            let p = LemPoly::confluent(1.0, c(0.2, 0.1), n).unwrap();
            let d = double_pole_decomposition(&p, 1e-8).unwrap();
            assert_eq!(d.constant, 1.0 / n as f64);
            assert!(d.poles.is_empty());
        }
    }

    #[test]
    fn decomposition_cubic() {
        let p = LemPoly::simple(1.0, vec![c(0.0, 0.0), c(1.0, 0.0), c(-1.0, 0.0)]).unwrap();
        let d = double_pole_decomposition(&p, 1e-8).unwrap();
        assert_abs_diff_eq!(d.constant, 1.0 / 3.0);
        let xi = sorted(d.poles.clone());
        let s = 1.0 / 3f64.sqrt();
        assert!((xi[0] - c(-s, 0.0)).norm() < 1e-14);
        assert!((xi[1] - c(s, 0.0)).norm() < 1e-14);
        for a in &d.coeffs {
            assert!((a - c(1.0 / 9.0, 0.0)).norm() < 1e-14);
        }
        let mut worst: f64 = 0.0;
        for k in 0..64 {
            let z = Complex64::from_polar(3.0, 2.0 * std::f64::consts::PI * k as f64 / 64.0);
            let want = brute_force_decomp_target(p.expanded(), z);
            worst = worst.max((d.eval(z) - want).norm() / want.norm());
        }
        assert!(worst < 1e-12, "{worst}");
    }

    #[test]
    fn decomposition_rejects_confluent_critical_points() {
        // Three nodes packed within 2e-7: both critical points sit between them.
        let p = LemPoly::simple(1.0, vec![c(1.0, 0.0), c(-1.0, 0.0), c(0.0, 1e-9)]).unwrap();
        let d = double_pole_decomposition(&p, 1e-3);
        assert!(d.is_ok());
        let crowded = LemPoly::simple(1.0, vec![c(0.0, 0.0), c(1e-7, 0.0), c(2e-7, 0.0)]).unwrap();
        assert!(matches!(
            double_pole_decomposition(&crowded, 1e-3),
            Err(PolyError::ConfluentCritical(..))
        ));
    }

    fn arb_complex() -> impl Strategy<Value = Complex64> {
        (-2.0..2.0f64, -2.0..2.0f64).prop_map(|(a, b)| c(a, b))
    }

    proptest! {
        #[test]
        fn derivative_is_linear(
            p in prop::collection::vec(arb_complex(), 1..8),
            q in prop::collection::vec(arb_complex(), 1..8),
            alpha in arb_complex(),
            beta in arb_complex(),
        ) {
            let p = ComplexPoly::new(p);
            let q = ComplexPoly::new(q);
            let lhs = (&p.scale(alpha) + &q.scale(beta)).derivative();
            let rhs = &p.derivative().scale(alpha) + &q.derivative().scale(beta);
            let len = lhs.coeffs().len().max(rhs.coeffs().len());
            for i in 0..len {
                let a = lhs.coeffs().get(i).copied().unwrap_or_default();
                let b = rhs.coeffs().get(i).copied().unwrap_or_default();
                prop_assert!((a - b).norm() <= 1e-12 * (1.0 + a.norm()));
            }
        }

        #[test]
        fn roots_invert_expansion(
            n in 1usize..=8,
            phase in 0.0..std::f64::consts::TAU,
            radii in prop::collection::vec(0.2..1.0f64, 8),
            jitter in prop::collection::vec(-0.15..0.15f64, 8),
        ) {
            // Well-separated nodes: one per angular sector.
            let nodes: Vec<Complex64> = (0..n)
                .map(|k| Complex64::from_polar(radii[k], phase + (k as f64 + 0.5 + jitter[k]) * std::f64::consts::TAU / n as f64))
                .collect();
            let p = LemPoly::simple(1.3, nodes.clone()).unwrap();
            let found = p.expanded().roots(ROOT_TOL).unwrap();
            for z in &nodes {
                let best = found.iter().map(|r| (r - z).norm()).fold(f64::INFINITY, f64::min);
                prop_assert!(best < 1e-8, "node {z} missed by {best}");
            }
        }

        #[test]
        fn decomposition_reconstructs(
            n in 2usize..=5,
            nodes in prop::collection::vec(arb_complex(), 5),
            scale in 0.3..3.0f64,
        ) {
            let p = LemPoly::simple(scale, nodes[..n].to_vec()).unwrap();
            let min_sep = (0..n).flat_map(|i| ((i+1)..n).map(move |j| (i, j)))
                .map(|(i, j)| (nodes[i] - nodes[j]).norm()).fold(f64::INFINITY, f64::min);
            prop_assume!(min_sep > 0.05);
            if let Ok(d) = double_pole_decomposition(&p, 1e-6) {
                let r = 4.0 + d.poles.iter().map(|z| z.norm()).fold(0.0, f64::max);
                for k in 0..48 {
                    let z = Complex64::from_polar(r, k as f64 * std::f64::consts::TAU / 48.0);
                    let want = brute_force_decomp_target(p.expanded(), z);
                    prop_assert!((d.eval(z) - want).norm() <= 1e-10 * want.norm());
                }
            }
        }
    }
}
