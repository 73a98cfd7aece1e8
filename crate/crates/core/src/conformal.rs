//! Exterior conformal maps `z(w) = b·w + Σ_{k=0..N} a_k w^{-k}` of `{|w| > 1}`,
//! boundary curves sampled on uniform θ grids, and lemniscate tracing through
//! the branch of `φ = P^{1/n}` normalized by `φ'(∞) > 0`.

use std::f64::consts::TAU;
use std::io::{BufRead, BufReader, Read, Write};

use num_complex::Complex64;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::cplx_poly::{LemPoly, PolyError};

/// Laurent coefficients below `TAIL_THRESHOLD · b` are dropped when a map is
/// recovered from samples.
pub const TAIL_THRESHOLD: f64 = 1e-13;
/// Positive-frequency content (modes ≥ 2) tolerated in a boundary that is
/// claimed to come from an exterior map, relative to `b`.
pub const POSITIVE_MODE_TOL: f64 = 1e-9;
/// Critical values of `|P|` closer to 1 than this count as pinched.
pub const PINCH_MARGIN: f64 = 1e-6;

const NEWTON_MAX_ITER: usize = 40;
const NEWTON_TOL: f64 = 1e-15;
const MAX_SUBDIVISION: u32 = 24;
const RADIAL_STEPS: usize = 64;

#[derive(Debug, Error)]
pub enum ConformalError {
    #[error("sample count {0} is not a power of two >= 4")]
    BadSampleCount(usize),
    #[error("{samples} samples cannot resolve a map of order {order} (need >= {needed})")]
    Aliasing {
        samples: usize,
        order: usize,
        needed: usize,
    },
    #[error("conformal radius must be positive and finite, got {0}")]
    BadRadius(f64),
    #[error("non-finite Laurent coefficient")]
    NonFinite,
    #[error("boundary is not the image of an exterior map: |mode {mode}| = {magnitude:e}")]
    NotExteriorMap { mode: i64, magnitude: f64 },
    #[error("Laurent tail still {tail:e} at the resolution limit; sample more points")]
    UnderResolved { tail: f64 },
    #[error("lemniscate interior is disconnected or pinched: |P| = {value} at critical point {critical}")]
    Disconnected { critical: Complex64, value: f64 },
    #[error("Newton continuation failed near theta = {theta}")]
    NewtonFailure { theta: f64 },
    #[error("branch jump near theta = {theta}: step {jump:e} exceeds bound {bound:e}")]
    BranchJump { theta: f64, jump: f64, bound: f64 },
    #[error("traced curve winds {winding} times around node {node}")]
    NotJordan { node: Complex64, winding: i64 },
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error("curve csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn fft_in_place(data: &mut [Complex64], inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let plan = if inverse {
        planner.plan_fft_inverse(data.len())
    } else {
        planner.plan_fft_forward(data.len())
    };
    plan.process(data);
}

/// Signed frequency of DFT bin `k` on an `m`-point grid; Nyquist maps to 0
/// for differentiation purposes.
fn signed_freq(k: usize, m: usize) -> f64 {
    if k < m / 2 {
        k as f64
    } else if k == m / 2 {
        0.0
    } else {
        k as f64 - m as f64
    }
}

pub fn theta(j: usize, m: usize) -> f64 {
    TAU * j as f64 / m as f64
}

fn check_samples(m: usize) -> Result<(), ConformalError> {
    if m >= 4 && m.is_power_of_two() {
        Ok(())
    } else {
        Err(ConformalError::BadSampleCount(m))
    }
}

/// Evaluate `lead·w + Σ tail[k] w^{-k}` (or its θ-derivative) at the `m`
/// grid points `w = e^{iθ_j}`. Modes beyond the grid are folded into their
/// aliases, which keeps pointwise values exact for any `m`.
pub(crate) fn laurent_grid(
    lead: f64,
    tail: &[Complex64],
    m: usize,
    derivative: bool,
) -> Vec<Complex64> {
    let mut spec = vec![Complex64::new(0.0, 0.0); m];
    let i = Complex64::i();
    spec[1 % m] += if derivative {
        i * lead
    } else {
        Complex64::new(lead, 0.0)
    };
    for (k, &a) in tail.iter().enumerate() {
        let idx = (m - k % m) % m;
        spec[idx] += if derivative { -i * a * k as f64 } else { a };
    }
    fft_in_place(&mut spec, true);
    spec
}

/// Truncated exterior conformal map.
#[derive(Debug, Clone, PartialEq)]
pub struct LaurentMap {
    b: f64,
    tail: Vec<Complex64>,
}

impl LaurentMap {
    /// `tail[k]` is the coefficient of `w^{-k}`; an empty tail means `a_0 = 0`.
    pub fn new(b: f64, mut tail: Vec<Complex64>) -> Result<Self, ConformalError> {
        if !(b > 0.0 && b.is_finite()) {
            return Err(ConformalError::BadRadius(b));
        }
        if tail.iter().any(|a| !a.is_finite()) {
            return Err(ConformalError::NonFinite);
        }
        if tail.is_empty() {
            tail.push(Complex64::new(0.0, 0.0));
        }
        Ok(Self { b, tail })
    }

    pub fn circle(radius: f64, center: Complex64) -> Result<Self, ConformalError> {
        Self::new(radius, vec![center])
    }

    /// `z = b·w + a/w`: an ellipse with semi-axes `b + a` and `b − a` when both are real.
    pub fn ellipse(b: f64, a: Complex64) -> Result<Self, ConformalError> {
        Self::new(b, vec![Complex64::new(0.0, 0.0), a])
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn tail(&self) -> &[Complex64] {
        &self.tail
    }

    /// Truncation order `N` (index of the last tail coefficient).
    pub fn order(&self) -> usize {
        self.tail.len() - 1
    }

    pub fn eval(&self, w: Complex64) -> Complex64 {
        let u = w.inv();
        let tail = self
            .tail
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &a| acc * u + a);
        w * self.b + tail
    }

    /// `dz/dw`.
    pub fn eval_dw(&self, w: Complex64) -> Complex64 {
        let u = w.inv();
        let mut s = Complex64::new(0.0, 0.0);
        for (k, &a) in self.tail.iter().enumerate().skip(1).rev() {
            s = s * u + a * k as f64;
        }
        // Σ k a_k u^{k+1} written as u² · Σ k a_k u^{k-1}
        Complex64::new(self.b, 0.0) - s * u * u
    }

    /// `dz/dθ = i·w·dz/dw` at `w = e^{iθ}`.
    pub fn z_theta(&self, theta: f64) -> Complex64 {
        let w = Complex64::from_polar(1.0, theta);
        Complex64::i() * w * self.eval_dw(w)
    }

    /// Area of the bounded complement, `π(b² − Σ k|a_k|²)`.
    pub fn area(&self) -> f64 {
        let s: f64 = self
            .tail
            .iter()
            .enumerate()
            .map(|(k, a)| k as f64 * a.norm_sqr())
            .sum();
        std::f64::consts::PI * (self.b * self.b - s)
    }

    pub(crate) fn sample_points(&self, m: usize) -> Vec<Complex64> {
        laurent_grid(self.b, &self.tail, m, false)
    }

    /// `dz/dθ` on the `m`-point grid.
    pub fn z_theta_samples(&self, m: usize) -> Vec<Complex64> {
        laurent_grid(self.b, &self.tail, m, true)
    }

    /// Smallest `|dz/dθ|` over the grid.
    pub fn cusp_margin(&self, m: usize) -> f64 {
        self.z_theta_samples(m)
            .iter()
            .fold(f64::INFINITY, |acc, z| acc.min(z.norm()))
    }

    /// Drop tail coefficients beyond the last one above `threshold · b`.
    pub fn truncated(&self, threshold: f64) -> Self {
        let cut = threshold * self.b;
        let last = self.tail.iter().rposition(|a| a.norm() > cut).unwrap_or(0);
        Self {
            b: self.b,
            tail: self.tail[..=last].to_vec(),
        }
    }
}

/// A closed boundary sampled at `θ_j = 2πj/M`, `M` a power of two.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    samples: Vec<Complex64>,
    /// Point of the curve at `θ = 0` used to anchor a traced curve, if any.
    seed: Option<Complex64>,
}

impl Curve {
    pub fn new(samples: Vec<Complex64>) -> Result<Self, ConformalError> {
        check_samples(samples.len())?;
        Ok(Self {
            samples,
            seed: None,
        })
    }

    pub fn with_seed(samples: Vec<Complex64>, seed: Complex64) -> Result<Self, ConformalError> {
        let mut c = Self::new(samples)?;
        c.seed = Some(seed);
        Ok(c)
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn seed(&self) -> Option<Complex64> {
        self.seed
    }

    pub fn theta(&self, j: usize) -> f64 {
        theta(j, self.samples.len())
    }

    /// Spectral `dz/dθ` from the samples.
    pub fn z_theta(&self) -> Vec<Complex64> {
        let m = self.samples.len();
        let mut spec = self.samples.clone();
        fft_in_place(&mut spec, false);
        let inv_m = 1.0 / m as f64;
        for (k, c) in spec.iter_mut().enumerate() {
            *c *= Complex64::new(0.0, signed_freq(k, m) * inv_m);
        }
        fft_in_place(&mut spec, true);
        spec
    }

    pub fn mean(&self) -> Complex64 {
        self.samples.iter().sum::<Complex64>() / self.samples.len() as f64
    }

    /// Winding number of the closed polygon about `p`.
    pub fn winding_number(&self, p: Complex64) -> i64 {
        let m = self.samples.len();
        let total: f64 = (0..m)
            .map(|j| ((self.samples[(j + 1) % m] - p) / (self.samples[j] - p)).arg())
            .sum();
        (total / TAU).round() as i64
    }

    pub fn contains(&self, p: Complex64) -> bool {
        self.winding_number(p) != 0
    }

    pub fn min_distance(&self, p: Complex64) -> f64 {
        self.samples
            .iter()
            .fold(f64::INFINITY, |acc, z| acc.min((z - p).norm()))
    }

    /// Largest distance between any two samples.
    pub fn diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for (i, a) in self.samples.iter().enumerate() {
            for b in &self.samples[i + 1..] {
                d = d.max((a - b).norm());
            }
        }
        d
    }

    /// True when no two non-adjacent polygon edges intersect.
    pub fn is_simple(&self) -> bool {
        let m = self.samples.len();
        let cross = |o: Complex64, a: Complex64, b: Complex64| {
            (a.re - o.re) * (b.im - o.im) - (a.im - o.im) * (b.re - o.re)
        };
        for i in 0..m {
            let (p1, p2) = (self.samples[i], self.samples[(i + 1) % m]);
            for j in (i + 2)..m {
                if i == 0 && j == m - 1 {
                    continue;
                }
                let (q1, q2) = (self.samples[j], self.samples[(j + 1) % m]);
                let d1 = cross(q1, q2, p1);
                let d2 = cross(q1, q2, p2);
                let d3 = cross(p1, p2, q1);
                let d4 = cross(p1, p2, q2);
                if d1 * d2 <= 0.0 && d3 * d4 <= 0.0 {
                    return false;
                }
            }
        }
        true
    }

    /// The curve under `z ↦ s·z + shift`, keeping the θ labels.
    pub fn transformed(&self, s: Complex64, shift: Complex64) -> Self {
        Self {
            samples: self.samples.iter().map(|&z| s * z + shift).collect(),
            seed: self.seed.map(|z| s * z + shift),
        }
    }

    /// CSV with header `theta,re_z,im_z`, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), ConformalError> {
        writeln!(out, "theta,re_z,im_z")?;
        for (j, z) in self.samples.iter().enumerate() {
            writeln!(out, "{:.16e},{:.16e},{:.16e}", self.theta(j), z.re, z.im)?;
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, ConformalError> {
        let mut lines = BufReader::new(input).lines();
        let header = lines
            .next()
            .ok_or_else(|| ConformalError::Csv("empty file".into()))??;
        if header.trim() != "theta,re_z,im_z" {
            return Err(ConformalError::Csv(format!("unexpected header {header:?}")));
        }
        let mut rows = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<f64> = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| ConformalError::Csv(format!("line {}: {e}", lineno + 2)))?;
            if fields.len() != 3 {
                return Err(ConformalError::Csv(format!(
                    "line {}: expected 3 fields, got {}",
                    lineno + 2,
                    fields.len()
                )));
            }
            rows.push(fields);
        }
        let m = rows.len();
        check_samples(m)?;
        for (j, r) in rows.iter().enumerate() {
            if (r[0] - theta(j, m)).abs() > 1e-12 {
                return Err(ConformalError::Csv(format!(
                    "row {j}: theta {} is not 2*pi*{j}/{m}",
                    r[0]
                )));
            }
        }
        Self::new(rows.iter().map(|r| Complex64::new(r[1], r[2])).collect())
    }
}

/// `z_j = z(e^{iθ_j})` on `m` points.
///
/// Requires `m >= 2(N+2)`, the smallest grid on which the samples still
/// determine every coefficient; evaluation itself is exact on any grid.
pub fn sample_boundary(map: &LaurentMap, m: usize) -> Result<Curve, ConformalError> {
    check_samples(m)?;
    let needed = 2 * (map.order() + 2);
    if m < needed {
        return Err(ConformalError::Aliasing {
            samples: m,
            order: map.order(),
            needed,
        });
    }
    Curve::new(map.sample_points(m))
}

/// A map recovered from a boundary, with what was discarded.
#[derive(Debug, Clone)]
pub struct MapFit {
    pub map: LaurentMap,
    /// Largest positive-frequency (≥ 2) mode, relative to `b`.
    pub positive_content: f64,
    /// Largest dropped tail coefficient, relative to `b`.
    pub dropped_tail: f64,
}

/// Inverse of [`sample_boundary`] by forward Fourier analysis.
pub fn fit_map_from_curve(curve: &Curve) -> Result<MapFit, ConformalError> {
    fit_map_from_curve_with(curve, TAIL_THRESHOLD)
}

pub fn fit_map_from_curve_with(
    curve: &Curve,
    tail_threshold: f64,
) -> Result<MapFit, ConformalError> {
    let m = curve.len();
    let mut spec = curve.samples().to_vec();
    fft_in_place(&mut spec, false);
    for c in spec.iter_mut() {
        *c /= m as f64;
    }
    let b = spec[1];
    if !(b.re > 0.0) || b.im.abs() > POSITIVE_MODE_TOL * b.norm() {
        return Err(ConformalError::NotExteriorMap {
            mode: 1,
            magnitude: b.norm(),
        });
    }
    let b = b.re;
    let mut positive: f64 = 0.0;
    for (k, c) in spec.iter().enumerate().take(m / 2 + 1).skip(2) {
        let rel = c.norm() / b;
        // Near Nyquist a positive mode is the tail folding over, not a
        // genuine obstruction; a finer grid separates the two.
        if rel > POSITIVE_MODE_TOL && k > m / 4 {
            return Err(ConformalError::UnderResolved { tail: rel });
        }
        if rel > POSITIVE_MODE_TOL {
            return Err(ConformalError::NotExteriorMap {
                mode: k as i64,
                magnitude: c.norm(),
            });
        }
        positive = positive.max(rel);
    }
    let mut tail = vec![spec[0]];
    tail.extend((1..m / 2).map(|k| spec[m - k]));
    let full = LaurentMap::new(b, tail)?;
    let map = full.truncated(tail_threshold);
    if map.order() + 1 >= m / 2 {
        return Err(ConformalError::UnderResolved {
            tail: full.tail().last().map(|a| a.norm()).unwrap_or(0.0) / b,
        });
    }
    let dropped = full.tail()[map.order() + 1..]
        .iter()
        .fold(0.0f64, |acc, a| acc.max(a.norm() / b));
    Ok(MapFit {
        map,
        positive_content: positive,
        dropped_tail: dropped,
    })
}

/// Solve `log P(z) = target` by Newton's method on the logarithm, starting at `z`.
fn newton_log(p: &LemPoly, mut z: Complex64, target: Complex64) -> Option<Complex64> {
    let shift = (-target).exp();
    for _ in 0..NEWTON_MAX_ITER {
        let d = (p.eval(z) * shift).ln();
        if !d.is_finite() {
            return None;
        }
        if d.norm() < NEWTON_TOL {
            return Some(z);
        }
        let step = d / p.log_derivative(z);
        z -= step;
        if step.norm() < 1e-16 * (1.0 + z.norm()) {
            return Some(z);
        }
    }
    let d = (p.eval(z) * shift).ln();
    (d.norm() < 1e3 * NEWTON_TOL).then_some(z)
}

/// Continue the solution of `P(z) = s^n` from `s0` down to `s1` along the real axis.
fn radial_arc(
    p: &LemPoly,
    z: Complex64,
    s0: f64,
    s1: f64,
    depth: u32,
) -> Result<Complex64, ConformalError> {
    let n = p.degree() as f64;
    let dz_ds = Complex64::new(n / s0, 0.0) / p.log_derivative(z);
    let guess = z + dz_ds * (s1 - s0);
    let bound = 4.0 * dz_ds.norm() * (s1 - s0).abs();
    match newton_log(p, guess, Complex64::new(n * s1.ln(), 0.0)) {
        Some(z1) if (z1 - z).norm() <= bound.max(1e-14) => Ok(z1),
        _ if depth < MAX_SUBDIVISION => {
            let mid = 0.5 * (s0 + s1);
            let zm = radial_arc(p, z, s0, mid, depth + 1)?;
            radial_arc(p, zm, mid, s1, depth + 1)
        }
        _ => Err(ConformalError::NewtonFailure { theta: 0.0 }),
    }
}

fn angular_arc(
    p: &LemPoly,
    z: Complex64,
    t0: f64,
    t1: f64,
    depth: u32,
) -> Result<Complex64, ConformalError> {
    let n = p.degree() as f64;
    let z_theta = Complex64::new(0.0, n) / p.log_derivative(z);
    let guess = z + z_theta * (t1 - t0);
    let bound = 4.0 * z_theta.norm() * (t1 - t0).abs();
    let solved = newton_log(p, guess, Complex64::new(0.0, n * t1));
    match solved {
        Some(z1) if (z1 - z).norm() <= bound => Ok(z1),
        _ if depth < MAX_SUBDIVISION => {
            let mid = 0.5 * (t0 + t1);
            let zm = angular_arc(p, z, t0, mid, depth + 1)?;
            angular_arc(p, zm, mid, t1, depth + 1)
        }
        Some(z1) => Err(ConformalError::BranchJump {
            theta: t1,
            jump: (z1 - z).norm(),
            bound,
        }),
        None => Err(ConformalError::NewtonFailure { theta: t1 }),
    }
}

/// Boundary point at `θ = 0`: the solution of `P(z) = 1` reached from `z = ∞`
/// along `w ∈ (1, ∞)`, which fixes the branch with `φ'(∞) > 0`.
fn radial_seed(p: &LemPoly) -> Result<Complex64, ConformalError> {
    let n = p.degree() as f64;
    let center = p.centroid();
    let root_scale = p.scale().powf(1.0 / n);
    let spread = p
        .nodes()
        .iter()
        .fold(0.0f64, |acc, l| acc.max((l - center).norm()));
    let s0 = 16.0 * (1.0 + root_scale * spread);
    let start = center + s0 / root_scale;
    let mut z = newton_log(p, start, Complex64::new(n * s0.ln(), 0.0))
        .ok_or(ConformalError::NewtonFailure { theta: 0.0 })?;
    let ratio = s0.powf(-1.0 / RADIAL_STEPS as f64);
    let mut s = s0;
    for i in 0..RADIAL_STEPS {
        let next = if i + 1 == RADIAL_STEPS {
            1.0
        } else {
            s * ratio
        };
        z = radial_arc(p, z, s, next, 0)?;
        s = next;
    }
    Ok(z)
}

/// Boundary of `{|P| < 1}` at `θ_j = 2πj/M`, with `P(z_j) = e^{inθ_j}`.
///
/// The interior must be connected: every critical value `|P(ξ)|` has to stay
/// below `1 − PINCH_MARGIN`. Points are produced by Newton continuation in θ
/// from the radial seed, subdividing steps that overshoot four times the
/// predicted arc length.
pub fn trace_lemniscate(p: &LemPoly, m: usize) -> Result<Curve, ConformalError> {
    check_samples(m)?;
    for xi in p.critical_points()? {
        let value = p.eval(xi).norm();
        if value >= 1.0 - PINCH_MARGIN {
            return Err(ConformalError::Disconnected {
                critical: xi,
                value,
            });
        }
    }
    let seed = radial_seed(p)?;
    let mut samples = Vec::with_capacity(m);
    samples.push(seed);
    let mut z = seed;
    for j in 1..=m {
        z = angular_arc(p, z, theta(j - 1, m), theta(j, m), 0)?;
        if j < m {
            samples.push(z);
        }
    }
    let closure = (z - seed).norm();
    let bound = 1e-9 * (1.0 + seed.norm());
    if closure > bound {
        return Err(ConformalError::BranchJump {
            theta: TAU,
            jump: closure,
            bound,
        });
    }
    let curve = Curve::with_seed(samples, seed)?;
    for &node in p.nodes() {
        let winding = curve.winding_number(node);
        if winding != 1 {
            return Err(ConformalError::NotJordan { node, winding });
        }
    }
    Ok(curve)
}

/// Outcome of [`univalence_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Univalence {
    pub univalent: bool,
    /// `min_j |dz/dθ(θ_j)|`.
    pub margin: f64,
}

/// Nonvanishing `dz/dθ` on the grid and winding number one about `a_0`.
pub fn univalence_check(map: &LaurentMap, m: usize) -> Univalence {
    let margin = map.cusp_margin(m);
    let univalent = margin > 0.0
        && Curve {
            samples: map.sample_points(m),
            seed: None,
        }
        .winding_number(map.tail()[0])
            == 1;
    Univalence { univalent, margin }
}
