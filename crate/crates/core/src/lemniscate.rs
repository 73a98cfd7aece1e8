//! Fitting degree-`n` lemniscates `{|P| = 1}` to closed curves.
//!
//! The defect of a curve is the root-mean-square of `log|P(z_j)|` over its
//! samples for the best-fitting `P` of degree `n`; it vanishes exactly on
//! lemniscates. Fitting is Levenberg–Marquardt on `(log a, Re λ_j, Im λ_j)`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::conformal::{ConformalError, Curve};
use crate::cplx_poly::{LemPoly, PolyError};
use crate::ResidualReport;

pub const DEFAULT_RESTARTS: usize = 8;
pub const DEFAULT_SEED: u64 = 0x1e3d_5ca7;

#[derive(Debug, Error)]
pub enum LemniscateError {
    #[error("degree must be at least 1")]
    BadDegree,
    #[error("{samples} samples cannot fit degree {degree} (need at least {needed})")]
    TooFewSamples {
        samples: usize,
        degree: usize,
        needed: usize,
    },
    #[error("initial polynomial has degree {got}, expected {expected}")]
    InitDegree { got: usize, expected: usize },
    #[error("every restart failed")]
    AllRestartsFailed,
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Conformal(#[from] ConformalError),
}

/// `r_j = log|P(z_j)|`; a sample on a node gives `-inf`, which makes `sup`
/// infinite.
pub fn level_residual(p: &LemPoly, curve: &Curve) -> ResidualReport {
    ResidualReport::from_samples(curve.samples().iter().map(|&z| p.log_abs(z)).collect())
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Stop once the parameter step is below `step_tol · (1 + |params|)`.
    pub step_tol: f64,
    pub lambda0: f64,
    /// Node spread below `cluster_rel · diameter` triggers the confluent refit.
    pub cluster_rel: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            step_tol: 1e-12,
            lambda0: 1e-3,
            cluster_rel: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DefectReport {
    pub degree: usize,
    pub poly: LemPoly,
    pub defect: f64,
    pub sup_defect: f64,
    pub iterations: usize,
    pub converged: bool,
    /// A trial step pushed a node outside the curve and was rejected.
    pub escaped: bool,
    pub seed: Option<u64>,
}

#[derive(Serialize)]
struct NodeRecord {
    re: f64,
    im: f64,
    mult: usize,
}

#[derive(Serialize)]
struct DefectRecord<'a> {
    n: usize,
    a: f64,
    nodes: Vec<NodeRecord>,
    defect: f64,
    sup_defect: f64,
    converged: bool,
    iterations: usize,
    seed: &'a Option<u64>,
}

impl Serialize for DefectReport {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        DefectRecord {
            n: self.degree,
            a: self.poly.scale(),
            nodes: self
                .poly
                .nodes()
                .iter()
                .zip(self.poly.mults())
                .map(|(z, &mult)| NodeRecord {
                    re: z.re,
                    im: z.im,
                    mult,
                })
                .collect(),
            defect: self.defect,
            sup_defect: self.sup_defect,
            converged: self.converged,
            iterations: self.iterations,
            seed: &self.seed,
        }
        .serialize(s)
    }
}

/// Either `n` free simple nodes or one node of multiplicity `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Model {
    Simple(usize),
    Confluent(usize),
}

impl Model {
    fn degree(self) -> usize {
        match self {
            Model::Simple(n) | Model::Confluent(n) => n,
        }
    }

    fn node_weight(self) -> f64 {
        match self {
            Model::Simple(_) => 1.0,
            Model::Confluent(n) => n as f64,
        }
    }

    /// Parameters are `[log a, Re λ_1, Im λ_1, …]`.
    fn nodes(params: &[f64]) -> Vec<Complex64> {
        params[1..]
            .chunks(2)
            .map(|c| Complex64::new(c[0], c[1]))
            .collect()
    }

    fn residuals(self, params: &[f64], samples: &[Complex64]) -> DVector<f64> {
        let nodes = Self::nodes(params);
        let w = self.node_weight();
        DVector::from_iterator(
            samples.len(),
            samples
                .iter()
                .map(|&z| params[0] + w * nodes.iter().map(|&l| (z - l).norm().ln()).sum::<f64>()),
        )
    }

    fn jacobian(self, params: &[f64], samples: &[Complex64]) -> DMatrix<f64> {
        let nodes = Self::nodes(params);
        let w = self.node_weight();
        let mut jac = DMatrix::<f64>::zeros(samples.len(), params.len());
        for (row, &z) in samples.iter().enumerate() {
            jac[(row, 0)] = 1.0;
            for (i, &l) in nodes.iter().enumerate() {
                // ∂ log|z − λ| / ∂(Re λ, Im λ) = (−Re, Im) of 1/(z − λ).
                let inv = (z - l).inv();
                jac[(row, 1 + 2 * i)] = -w * inv.re;
                jac[(row, 2 + 2 * i)] = w * inv.im;
            }
        }
        jac
    }

    fn poly(self, params: &[f64]) -> Result<LemPoly, PolyError> {
        let a = params[0].exp();
        let nodes = Self::nodes(params);
        match self {
            Model::Simple(_) => LemPoly::simple(a, nodes),
            Model::Confluent(n) => LemPoly::confluent(a, nodes[0], n),
        }
    }
}

fn rms(r: &DVector<f64>) -> f64 {
    (r.norm_squared() / r.len() as f64).sqrt()
}

/// `log a` making the mean residual vanish for the given nodes.
fn balanced_log_scale(model: Model, nodes: &[Complex64], samples: &[Complex64]) -> f64 {
    let mut params = vec![0.0];
    params.extend(nodes.iter().flat_map(|z| [z.re, z.im]));
    let r = model.residuals(&params, samples);
    -r.mean()
}

fn params_of(model: Model, nodes: &[Complex64], samples: &[Complex64]) -> Vec<f64> {
    let mut params = vec![balanced_log_scale(model, nodes, samples)];
    params.extend(nodes.iter().flat_map(|z| [z.re, z.im]));
    params
}

struct LmOutcome {
    params: Vec<f64>,
    residual: DVector<f64>,
    iterations: usize,
    converged: bool,
    escaped: bool,
}

fn levenberg_marquardt(
    model: Model,
    curve: &Curve,
    mut params: Vec<f64>,
    opts: &FitOptions,
) -> LmOutcome {
    let samples = curve.samples();
    let mut r = model.residuals(&params, samples);
    let mut cost = r.norm_squared();
    let mut lambda = opts.lambda0;
    let mut escaped = false;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        if cost == 0.0 {
            converged = true;
            break;
        }
        let jac = model.jacobian(&params, samples);
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * &r;
        let dmax = jtj.diagonal().max();
        let mut accepted = false;
        let mut tiny = false;
        while lambda < 1e16 {
            let mut lhs = jtj.clone();
            for i in 0..lhs.nrows() {
                lhs[(i, i)] += lambda * jtj[(i, i)].max(1e-12 * dmax);
            }
            let Some(step) = lhs.cholesky().map(|c| c.solve(&(-&grad))) else {
                lambda *= 10.0;
                continue;
            };
            let pnorm = params.iter().map(|p| p * p).sum::<f64>().sqrt();
            if step.norm() < opts.step_tol * (1.0 + pnorm) {
                tiny = true;
                break;
            }
            let trial: Vec<f64> = params.iter().zip(step.iter()).map(|(p, s)| p + s).collect();
            if Model::nodes(&trial).iter().any(|&l| !curve.contains(l)) {
                escaped = true;
                lambda *= 10.0;
                continue;
            }
            let rt = model.residuals(&trial, samples);
            let ct = rt.norm_squared();
            if ct.is_finite() && ct < cost {
                params = trial;
                r = rt;
                cost = ct;
                lambda = (lambda / 10.0).max(1e-15);
                accepted = true;
                break;
            }
            lambda *= 10.0;
        }
        if tiny || !accepted {
            converged = tiny || cost < 1e-28 * r.len() as f64;
            break;
        }
    }
    LmOutcome {
        params,
        residual: r,
        iterations,
        converged,
        escaped,
    }
}

fn report(
    model: Model,
    out: LmOutcome,
    seed: Option<u64>,
) -> Result<DefectReport, LemniscateError> {
    let poly = model.poly(&out.params)?;
    let sup = out.residual.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    Ok(DefectReport {
        degree: model.degree(),
        poly,
        defect: rms(&out.residual),
        sup_defect: sup,
        iterations: out.iterations,
        converged: out.converged,
        escaped: out.escaped,
        seed,
    })
}

fn check_inputs(curve: &Curve, n: usize) -> Result<(), LemniscateError> {
    if n == 0 {
        return Err(LemniscateError::BadDegree);
    }
    if curve.len() < 8 * n {
        return Err(LemniscateError::TooFewSamples {
            samples: curve.len(),
            degree: n,
            needed: 8 * n,
        });
    }
    Ok(())
}

/// Nodes on a ring about the curve's mean, oriented along its principal
/// axis, at half the RMS radius.
pub fn default_nodes(curve: &Curve, n: usize) -> Vec<Complex64> {
    let c = curve.mean();
    if n == 1 {
        return vec![c];
    }
    let m = curve.len() as f64;
    let second: Complex64 = curve
        .samples()
        .iter()
        .map(|z| (z - c) * (z - c))
        .sum::<Complex64>()
        / m;
    let radius = 0.5
        * (curve
            .samples()
            .iter()
            .map(|z| (z - c).norm_sqr())
            .sum::<f64>()
            / m)
            .sqrt();
    let phase = 0.5 * second.arg();
    (0..n)
        .map(|j| {
            c + Complex64::from_polar(radius, phase + std::f64::consts::TAU * j as f64 / n as f64)
        })
        .collect()
}

fn spread(nodes: &[Complex64]) -> f64 {
    let c = nodes.iter().sum::<Complex64>() / nodes.len() as f64;
    nodes.iter().fold(0.0f64, |m, z| m.max((z - c).norm()))
}

fn fit_confluent(
    curve: &Curve,
    n: usize,
    center: Complex64,
    opts: &FitOptions,
) -> Result<DefectReport, LemniscateError> {
    let model = Model::Confluent(n);
    let params = params_of(model, &[center], curve.samples());
    report(model, levenberg_marquardt(model, curve, params, opts), None)
}

/// Fit `n` simple nodes, starting from `init` or [`default_nodes`]. If the
/// nodes collapse to a cluster, or the fit stalls, the confluent model
/// `a(z − λ)^n` is tried from the cluster centroid and kept when it fits at
/// least as well.
pub fn fit(
    curve: &Curve,
    n: usize,
    init: Option<&LemPoly>,
    opts: &FitOptions,
) -> Result<DefectReport, LemniscateError> {
    check_inputs(curve, n)?;
    let nodes = match init {
        Some(p) => {
            if p.degree() != n {
                return Err(LemniscateError::InitDegree {
                    got: p.degree(),
                    expected: n,
                });
            }
            // A confluent initial guess is split into a tiny ring so the
            // simple-node model can move it.
            if p.is_simple() {
                p.nodes().to_vec()
            } else {
                let eps = 1e-3 * curve.diameter();
                p.nodes()
                    .iter()
                    .zip(p.mults())
                    .flat_map(|(&l, &k)| {
                        (0..k).map(move |j| {
                            if k == 1 {
                                l
                            } else {
                                l + Complex64::from_polar(
                                    eps,
                                    std::f64::consts::TAU * j as f64 / k as f64,
                                )
                            }
                        })
                    })
                    .collect()
            }
        }
        None => default_nodes(curve, n),
    };
    fit_from_nodes(curve, n, nodes, opts, None)
}

fn fit_from_nodes(
    curve: &Curve,
    n: usize,
    nodes: Vec<Complex64>,
    opts: &FitOptions,
    seed: Option<u64>,
) -> Result<DefectReport, LemniscateError> {
    let model = Model::Simple(n);
    let params = params_of(model, &nodes, curve.samples());
    let simple = report(model, levenberg_marquardt(model, curve, params, opts), seed)?;
    if n == 1 {
        return Ok(simple);
    }
    let fitted = simple.poly.nodes();
    let clustered = spread(fitted) < opts.cluster_rel * curve.diameter();
    if clustered || !simple.converged {
        let center = fitted.iter().sum::<Complex64>() / n as f64;
        if curve.contains(center) {
            let mut confluent = fit_confluent(curve, n, center, opts)?;
            if confluent.defect <= simple.defect {
                confluent.seed = seed;
                return Ok(confluent);
            }
        }
    }
    Ok(simple)
}

fn sort_key(r: &DefectReport) -> Vec<f64> {
    let mut nodes: Vec<(f64, f64)> = r.poly.nodes().iter().map(|z| (z.re, z.im)).collect();
    nodes.sort_by(|a, b| a.partial_cmp(b).expect("finite nodes"));
    std::iter::once(r.poly.scale())
        .chain(nodes.into_iter().flat_map(|(a, b)| [a, b]))
        .collect()
}

fn better(a: &DefectReport, b: &DefectReport) -> bool {
    match a.defect.partial_cmp(&b.defect) {
        Some(std::cmp::Ordering::Less) => true,
        Some(std::cmp::Ordering::Equal) => sort_key(a) < sort_key(b),
        _ => false,
    }
}

/// Best of the default start and `restarts` random starts, nodes drawn
/// uniformly from the part of the curve's bounding disk inside the curve.
pub fn defect_report(
    curve: &Curve,
    n: usize,
    restarts: usize,
    seed: u64,
) -> Result<DefectReport, LemniscateError> {
    check_inputs(curve, n)?;
    let opts = FitOptions::default();
    let mut best: Option<DefectReport> = None;
    let mut consider = |cand: Result<DefectReport, LemniscateError>| {
        if let Ok(mut r) = cand {
            r.seed = Some(seed);
            if r.defect.is_finite() && best.as_ref().is_none_or(|b| better(&r, b)) {
                best = Some(r);
            }
        }
    };
    consider(fit_from_nodes(
        curve,
        n,
        default_nodes(curve, n),
        &opts,
        None,
    ));
    if n > 1 {
        consider(fit_confluent(curve, n, curve.mean(), &opts));
    }
    let center = curve.mean();
    let radius = curve
        .samples()
        .iter()
        .fold(0.0f64, |m, z| m.max((z - center).norm()));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..restarts {
        let mut nodes = Vec::with_capacity(n);
        let mut attempts = 0;
        while nodes.len() < n && attempts < 10_000 {
            attempts += 1;
            let r = radius * rng.gen::<f64>().sqrt();
            let z = center + Complex64::from_polar(r, rng.gen::<f64>() * std::f64::consts::TAU);
            if curve.contains(z) {
                nodes.push(z);
            }
        }
        if nodes.len() == n {
            consider(fit_from_nodes(curve, n, nodes, &opts, None));
        }
    }
    best.ok_or(LemniscateError::AllRestartsFailed)
}

/// Minimal defect over the default multistart.
pub fn defect(curve: &Curve, n: usize) -> Result<f64, LemniscateError> {
    Ok(defect_report(curve, n, DEFAULT_RESTARTS, DEFAULT_SEED)?.defect)
}
