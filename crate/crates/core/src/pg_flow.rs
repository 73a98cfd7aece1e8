//! Polubarinova–Galin evolution `Im(z̄_t z_θ) = 1` of exterior Laurent maps.
//!
//! The source strength is fixed so that the right side is exactly 1: the
//! bounded complement gains area at `2π` per unit time and the normal speed of
//! the boundary is `1/|z_θ|`.
//!
//! For `z = b·w + Σ_{k=0..N} a_k w^{-k}` the product `z̄_t · w z_w` on `|w| = 1`
//! only carries modes `-(N+1)..=N+1`, so matching its real part to 1 mode by
//! mode gives `2N+3` real equations in the `2N+3` real unknowns
//! `(ḃ, ȧ_0..ȧ_N)`. The truncated family is therefore closed under the flow and
//! the coefficient velocities solve a square linear system exactly.

use std::f64::consts::{PI, TAU};
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::conformal::{laurent_grid, ConformalError, Curve, LaurentMap};
use crate::ResidualReport;

pub const DT_MAX: f64 = 1e-2;
/// A state with `min |z_θ| < CUSP_REL · b` is a cusp event.
pub const CUSP_REL: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("velocity system is singular (cusp margin {margin:e})")]
    Singular { margin: f64 },
    #[error("cusp at t = {t} (margin {margin:e})")]
    Cusp {
        t: f64,
        margin: f64,
        last: Box<FlowState>,
    },
    #[error("blow-up at t = {t} (margin {margin:e})")]
    Blowup {
        t: f64,
        margin: f64,
        last: Box<FlowState>,
    },
    #[error("|dt| = {dt} exceeds dt_max = {max}")]
    DtTooLarge { dt: f64, max: f64 },
    #[error("duration {duration} is not a whole number of steps of {dt}")]
    NotIntegral { duration: f64, dt: f64 },
    #[error("weight field: {0}")]
    BadWeight(String),
    #[error("pushed curve self-intersects; reduce dt")]
    StepTooLarge,
    #[error(transparent)]
    Conformal(#[from] ConformalError),
}

#[derive(Debug, Clone)]
pub struct FlowConfig {
    /// Grid used for diagnostics (moments, cusp margin); raised automatically
    /// to resolve the map.
    pub samples: usize,
    pub moment_order: usize,
    pub cusp_rel: f64,
    pub dt_max: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            samples: 256,
            moment_order: 8,
            cusp_rel: CUSP_REL,
            dt_max: DT_MAX,
        }
    }
}

impl FlowConfig {
    fn grid_for(&self, map: &LaurentMap) -> usize {
        self.samples
            .max((4 * (map.order() + 1)).next_power_of_two())
    }
}

/// Moments of a closed curve `Γ` bounding `Ω'` (bounded) and `Ω` (unbounded).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentVector {
    /// Area of `Ω'`.
    pub area: f64,
    /// `∫_Ω z^{-k} dA = −(1/2i)∮_Γ z^{-k} z̄ dz`, `k = 1..K`, regularized at
    /// infinity by the contour form. These are the moments conserved by the
    /// flow; they need the origin inside `Ω'`.
    pub harmonic: Vec<Complex64>,
    /// `∫_{Ω'} z^k dA = (1/2i)∮_Γ z^k z̄ dz`, `k = 1..K`. Not conserved by the
    /// exterior flow; kept for geometry (centroid, inertia).
    pub complement: Vec<Complex64>,
}

/// Trapezoid rule on the curve's own θ grid, with spectral `dz/dθ`.
pub fn moments(curve: &Curve, order: usize) -> MomentVector {
    let zt = curve.z_theta();
    let h = TAU / curve.len() as f64;
    let half_i = Complex64::new(0.0, 2.0).inv();
    let mut area = Complex64::new(0.0, 0.0);
    let mut harmonic = vec![Complex64::new(0.0, 0.0); order];
    let mut complement = vec![Complex64::new(0.0, 0.0); order];
    for (&z, &d) in curve.samples().iter().zip(&zt) {
        let base = z.conj() * d * h;
        area += base;
        let inv = z.inv();
        let (mut up, mut down) = (base, base);
        for k in 0..order {
            up *= z;
            down *= inv;
            complement[k] += up;
            harmonic[k] -= down;
        }
    }
    MomentVector {
        area: (area * half_i).re,
        harmonic: harmonic.into_iter().map(|m| m * half_i).collect(),
        complement: complement.into_iter().map(|m| m * half_i).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub cusp_margin: f64,
    pub area: f64,
    pub moments: MomentVector,
    /// `|a_N| / b`; how much of the map sits in its last retained mode.
    pub tail_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub t: f64,
    pub map: LaurentMap,
    pub diagnostics: Diagnostics,
}

impl FlowState {
    pub fn new(t: f64, map: LaurentMap, cfg: &FlowConfig) -> Self {
        let m = cfg.grid_for(&map);
        let curve = Curve::new(map.sample_points(m)).expect("power-of-two grid");
        let moments = moments(&curve, cfg.moment_order);
        let diagnostics = Diagnostics {
            cusp_margin: map.cusp_margin(m),
            area: moments.area,
            moments,
            tail_ratio: map.tail().last().map(|a| a.norm()).unwrap_or(0.0) / map.b(),
        };
        Self {
            t,
            map,
            diagnostics,
        }
    }
}

/// Time derivative of a Laurent map.
#[derive(Debug, Clone, PartialEq)]
pub struct MapVelocity {
    pub b_dot: f64,
    pub tail_dot: Vec<Complex64>,
}

/// Unknown layout: `[ḃ, Re ȧ_0, Im ȧ_0, …, Re ȧ_N, Im ȧ_N]`.
fn velocity_system(map: &LaurentMap) -> DMatrix<f64> {
    let n = map.order();
    let dim = 2 * n + 3;
    let b = map.b();
    let tail = map.tail();
    // Coefficients of w·z_w by exponent e ∈ [−N, 1].
    let v = |e: i64| -> Complex64 {
        match e {
            1 => Complex64::new(b, 0.0),
            e if e < 0 && (-e) as usize <= n => tail[(-e) as usize] * e as f64,
            _ => Complex64::new(0.0, 0.0),
        }
    };
    let i = Complex64::i();
    let mut mat = DMatrix::<f64>::zeros(dim, dim);
    // Columns: (exponent of z_t, unit value put in u_e).
    let mut columns: Vec<(i64, Complex64)> = vec![(1, Complex64::new(1.0, 0.0))];
    for k in 0..=n as i64 {
        columns.push((-k, Complex64::new(1.0, 0.0)));
        columns.push((-k, i));
    }
    for (col, &(e, u)) in columns.iter().enumerate() {
        // Mode 0: Re F_0 with F_m = Σ_e conj(u_e) v_{m+e}.
        mat[(0, col)] = (u.conj() * v(e)).re;
        for m in 1..=(n as i64 + 1) {
            // F_m + conj(F_{−m}) = 0 for m ≥ 1.
            let g = u.conj() * v(m + e) + u * v(e - m).conj();
            mat[(2 * m as usize - 1, col)] = g.re;
            mat[(2 * m as usize, col)] = g.im;
        }
    }
    mat
}

/// Coefficient velocities `(ḃ, ȧ_k)` making `Im(z̄_t z_θ) ≡ 1` on `|w| = 1`.
pub fn coefficient_velocities(map: &LaurentMap) -> Result<MapVelocity, FlowError> {
    let mat = velocity_system(map);
    let dim = mat.nrows();
    let mut rhs = DVector::<f64>::zeros(dim);
    rhs[0] = 1.0;
    let singular = || FlowError::Singular {
        margin: map.cusp_margin((4 * (map.order() + 1)).next_power_of_two().max(64)),
    };
    let sol = mat.clone().lu().solve(&rhs).ok_or_else(singular)?;
    if sol.iter().any(|x| !x.is_finite()) {
        return Err(singular());
    }
    let resid = (&mat * &sol - &rhs).amax();
    if resid > 1e-8 {
        return Err(singular());
    }
    let tail_dot = (0..=map.order())
        .map(|k| Complex64::new(sol[1 + 2 * k], sol[2 + 2 * k]))
        .collect();
    Ok(MapVelocity {
        b_dot: sol[0],
        tail_dot,
    })
}

/// Pointwise `Im(z̄_t z_θ) − 1` on an `m`-point grid.
pub fn pg_residual(map: &LaurentMap, velocity: &MapVelocity, m: usize) -> ResidualReport {
    let zt = map.z_theta_samples(m);
    let vel = laurent_grid(velocity.b_dot, &velocity.tail_dot, m, false);
    ResidualReport::from_samples(
        zt.iter()
            .zip(&vel)
            .map(|(d, v)| (v.conj() * d).im - 1.0)
            .collect(),
    )
}

fn offset(map: &LaurentMap, vel: &MapVelocity, h: f64) -> Result<LaurentMap, ConformalError> {
    let tail = map
        .tail()
        .iter()
        .zip(&vel.tail_dot)
        .map(|(&a, &d)| a + d * h)
        .collect();
    LaurentMap::new(map.b() + h * vel.b_dot, tail)
}

fn combine(ks: [&MapVelocity; 4]) -> MapVelocity {
    let w = [1.0, 2.0, 2.0, 1.0];
    let b_dot = ks.iter().zip(w).map(|(k, w)| w * k.b_dot).sum::<f64>() / 6.0;
    let tail_dot = (0..ks[0].tail_dot.len())
        .map(|j| {
            ks.iter()
                .zip(w)
                .map(|(k, w)| k.tail_dot[j] * w)
                .sum::<Complex64>()
                / 6.0
        })
        .collect();
    MapVelocity { b_dot, tail_dot }
}

/// One classical Runge–Kutta step; `dt` may be negative.
///
/// Every stage map is checked: a non-positive radius or a margin below
/// `cusp_rel · b` ends the step with a cusp event, a singular velocity
/// system with a blow-up event. Both carry the last good state.
pub fn step(state: &FlowState, dt: f64, cfg: &FlowConfig) -> Result<FlowState, FlowError> {
    if dt.abs() > cfg.dt_max {
        return Err(FlowError::DtTooLarge {
            dt: dt.abs(),
            max: cfg.dt_max,
        });
    }
    if dt == 0.0 {
        return Ok(state.clone());
    }
    let t_end = state.t + dt;
    let cusp = |margin: f64| FlowError::Cusp {
        t: t_end,
        margin,
        last: Box::new(state.clone()),
    };
    let blowup = |margin: f64| FlowError::Blowup {
        t: t_end,
        margin,
        last: Box::new(state.clone()),
    };
    let checked = |map: Result<LaurentMap, ConformalError>| -> Result<LaurentMap, FlowError> {
        let map = map.map_err(|_| cusp(0.0))?;
        let margin = map.cusp_margin(cfg.grid_for(&map));
        if !(margin >= cfg.cusp_rel * map.b()) {
            return Err(cusp(margin));
        }
        Ok(map)
    };
    let velocity = |map: &LaurentMap| -> Result<MapVelocity, FlowError> {
        coefficient_velocities(map).map_err(|e| match e {
            FlowError::Singular { margin } => blowup(margin),
            other => other,
        })
    };

    let map = &state.map;
    let k1 = velocity(map)?;
    let m2 = checked(offset(map, &k1, 0.5 * dt))?;
    let k2 = velocity(&m2)?;
    let m3 = checked(offset(map, &k2, 0.5 * dt))?;
    let k3 = velocity(&m3)?;
    let m4 = checked(offset(map, &k3, dt))?;
    let k4 = velocity(&m4)?;
    let next = checked(offset(map, &combine([&k1, &k2, &k3, &k4]), dt))?;
    Ok(FlowState::new(t_end, next, cfg))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Cusp,
    Blowup,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowEvent {
    #[serde(rename = "type")]
    pub kind: EventKind,
    pub t: f64,
    pub margin: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    /// Initial state followed by one state per completed step.
    pub states: Vec<FlowState>,
    pub events: Vec<FlowEvent>,
}

impl Trajectory {
    pub fn last(&self) -> &FlowState {
        self.states
            .last()
            .expect("trajectory holds the initial state")
    }

    pub fn terminated_early(&self) -> bool {
        !self.events.is_empty()
    }
}

pub type Observer<'a> = &'a mut dyn FnMut(&FlowState);

/// Advance `duration / dt` steps. Cusp and blow-up end the run and are
/// recorded as events; observers see every accepted state, the initial one
/// included.
pub fn evolve(
    initial: FlowState,
    duration: f64,
    dt: f64,
    cfg: &FlowConfig,
    observers: &mut [Observer<'_>],
) -> Result<Trajectory, FlowError> {
    let steps = if duration == 0.0 {
        0.0
    } else {
        (duration / dt).round()
    };
    if dt == 0.0 && duration != 0.0
        || steps < 0.0
        || (steps * dt - duration).abs() > 1e-9 * duration.abs().max(dt.abs())
    {
        return Err(FlowError::NotIntegral { duration, dt });
    }
    let t0 = initial.t;
    for obs in observers.iter_mut() {
        obs(&initial);
    }
    let mut states = vec![initial];
    let mut events = Vec::new();
    for i in 0..steps as usize {
        let current = states.last().expect("nonempty");
        match step(current, dt, cfg) {
            Ok(mut next) => {
                next.t = t0 + (i + 1) as f64 * dt;
                for obs in observers.iter_mut() {
                    obs(&next);
                }
                states.push(next);
            }
            Err(FlowError::Cusp { t, margin, .. }) => {
                events.push(FlowEvent {
                    kind: EventKind::Cusp,
                    t,
                    margin,
                });
                break;
            }
            Err(FlowError::Blowup { t, margin, .. }) => {
                events.push(FlowEvent {
                    kind: EventKind::Blowup,
                    t,
                    margin,
                });
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(Trajectory { states, events })
}

/// Normal boundary speed `V_j = 1/|z_θ(θ_j)|`.
pub fn harmonic_velocity(map: &LaurentMap, m: usize) -> Result<Vec<f64>, FlowError> {
    let zt = map.z_theta_samples(m);
    let margin = zt.iter().fold(f64::INFINITY, |acc, z| acc.min(z.norm()));
    if !(margin >= CUSP_REL * map.b()) {
        return Err(FlowError::Singular { margin });
    }
    Ok(zt.iter().map(|z| 1.0 / z.norm()).collect())
}

/// Positive, bounded weights `χ_j` on the θ grid.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightField {
    values: Vec<f64>,
}

impl WeightField {
    pub fn new(values: Vec<f64>) -> Result<Self, FlowError> {
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(FlowError::BadWeight(format!(
                "weights must be positive and finite, got {v}"
            )));
        }
        Ok(Self { values })
    }

    pub fn uniform(m: usize, value: f64) -> Result<Self, FlowError> {
        Self::new(vec![value; m])
    }

    pub fn from_fn(m: usize, f: impl Fn(f64) -> f64) -> Result<Self, FlowError> {
        Self::new((0..m).map(|j| f(crate::conformal::theta(j, m))).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Explicit Euler push of each sample by `χ·V·dt` along the outward normal of
/// the bounded complement; the result is not refitted to a map.
pub fn weighted_step(
    curve: &Curve,
    map: &LaurentMap,
    chi: &WeightField,
    dt: f64,
) -> Result<Curve, FlowError> {
    let m = curve.len();
    if chi.values().len() != m {
        return Err(FlowError::BadWeight(format!(
            "{} weights for {m} samples",
            chi.values().len()
        )));
    }
    let zt = map.z_theta_samples(m);
    let pushed: Vec<Complex64> = curve
        .samples()
        .iter()
        .zip(&zt)
        .zip(chi.values())
        .map(|((&z, &d), &w)| {
            // Outward normal −i·z_θ/|z_θ| times speed 1/|z_θ|.
            z + Complex64::new(0.0, -1.0) * d / d.norm_sqr() * (w * dt)
        })
        .collect();
    let out = Curve::new(pushed)?;
    if !out.is_simple() {
        return Err(FlowError::StepTooLarge);
    }
    Ok(out)
}

/// CSV rows `t,b,re_a0,im_a0,…,area,re_m1,im_m1,…,cusp_margin`, with the
/// conserved moments in the `m` columns.
pub fn write_trajectory_csv<W: Write>(states: &[FlowState], mut out: W) -> std::io::Result<()> {
    let order = states.iter().map(|s| s.map.order()).max().unwrap_or(0);
    let k = states
        .first()
        .map(|s| s.diagnostics.moments.harmonic.len())
        .unwrap_or(0);
    let mut header = vec!["t".to_string(), "b".to_string()];
    for j in 0..=order {
        header.push(format!("re_a{j}"));
        header.push(format!("im_a{j}"));
    }
    header.push("area".into());
    for j in 1..=k {
        header.push(format!("re_m{j}"));
        header.push(format!("im_m{j}"));
    }
    header.push("cusp_margin".into());
    writeln!(out, "{}", header.join(","))?;
    for s in states {
        let mut row = vec![format!("{:.16e}", s.t), format!("{:.16e}", s.map.b())];
        for j in 0..=order {
            let a = s.map.tail().get(j).copied().unwrap_or_default();
            row.push(format!("{:.16e}", a.re));
            row.push(format!("{:.16e}", a.im));
        }
        row.push(format!("{:.16e}", s.diagnostics.area));
        for m in &s.diagnostics.moments.harmonic {
            row.push(format!("{:.16e}", m.re));
            row.push(format!("{:.16e}", m.im));
        }
        row.push(format!("{:.16e}", s.diagnostics.cusp_margin));
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// Area of the bounded complement for a circle of radius `b`; the area law
/// says it grows by `2π` per unit time.
pub fn circle_area(b: f64) -> f64 {
    PI * b * b
}
