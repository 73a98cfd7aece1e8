//! Check batteries behind `lemlab verify`.

use std::f64::consts::{PI, TAU};

use clap::ValueEnum;
use lemlab_core::conformal::{trace_lemniscate, LaurentMap};
use lemlab_core::cplx_poly::{LemPoly, PolyError};
use lemlab_core::pg_flow::{evolve, FlowConfig, FlowState};
use lemlab_core::theorem_lab::{
    circle_oracle, destruction_experiment, frozen_node_reduction, node_velocities,
    nullstellensatz_fit, pg_lemniscate_residual, time_reversal_residual, FamilyStencil,
    StencilOrder, DEFAULT_H,
};
use lemlab_core::Complex64;
use serde::Serialize;
use serde_json::{json, Value};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Circle,
    Lemma,
    Timerev,
    Destruction,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Relation {
    #[serde(rename = "<")]
    Below,
    #[serde(rename = ">")]
    Above,
}

/// One line of the verification report.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub check: String,
    pub inputs: Value,
    pub residual: f64,
    pub threshold: f64,
    /// Whether `residual` must lie below or above `threshold`.
    pub relation: Relation,
    pub pass: bool,
}

impl Check {
    fn new(check: &str, inputs: Value, residual: f64, relation: Relation, threshold: f64) -> Self {
        let pass = match relation {
            Relation::Below => residual < threshold,
            Relation::Above => residual > threshold,
        };
        Self {
            check: check.into(),
            inputs,
            residual,
            threshold,
            relation,
            pass,
        }
    }

    fn below(check: &str, inputs: Value, residual: f64, threshold: f64) -> Self {
        Self::new(check, inputs, residual, Relation::Below, threshold)
    }

    fn above(check: &str, inputs: Value, residual: f64, threshold: f64) -> Self {
        Self::new(check, inputs, residual, Relation::Above, threshold)
    }
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn circle_family(t: f64) -> Result<LemPoly, PolyError> {
    LemPoly::simple(1.0 / (1.0 + 2.0 * t).sqrt(), vec![c(0.0, 0.0)])
}

fn bernoulli(_: f64) -> Result<LemPoly, PolyError> {
    LemPoly::simple(1.0, vec![c(0.8, 0.0), c(-0.8, 0.0)])
}

fn circle_suite() -> Result<Vec<Check>, CliError> {
    let mut out = Vec::new();
    let cfg = FlowConfig::default();
    let s0 = FlowState::new(0.0, LaurentMap::circle(1.0, c(0.0, 0.0))?, &cfg);
    let traj = evolve(s0, 0.5, 1e-3, &cfg, &mut [])?;
    let b = traj.last().map.b();
    out.push(Check::below(
        "circle_oracle",
        json!({"b0": 1.0, "t": 0.5, "dt": 1e-3}),
        (b - circle_oracle(1.0, 0.5)?).abs(),
        1e-9,
    ));
    let a0 = traj.states[0].diagnostics.area;
    let area_err = traj
        .states
        .iter()
        .map(|s| (s.diagnostics.area - a0 - TAU * s.t).abs())
        .fold(0.0, f64::max);
    out.push(Check::below(
        "area_law",
        json!({"b0": 1.0, "t": 0.5}),
        area_err,
        1e-8,
    ));

    let stencil = FamilyStencil::from_family(circle_family, 0.0, DEFAULT_H, StencilOrder::Fourth)?;
    let curve = trace_lemniscate(stencil.p0(), 128)?;
    let inputs = json!({"family": "z/sqrt(1+2t)", "t": 0.0, "h": DEFAULT_H, "stencil": 5});
    out.push(Check::below(
        "circle_growth_condition",
        inputs.clone(),
        pg_lemniscate_residual(&stencil, &curve).sup,
        1e-8,
    ));
    let null = nullstellensatz_fit(&stencil)?;
    out.push(Check::below(
        "circle_nullstellensatz",
        inputs.clone(),
        null.residual,
        1e-8,
    ));
    let speed = node_velocities(&stencil)?
        .iter()
        .map(|v| v.norm())
        .fold(0.0, f64::max);
    out.push(Check::below(
        "circle_node_velocity",
        inputs.clone(),
        speed,
        1e-8,
    ));
    let frozen = frozen_node_reduction(&stencil)?;
    out.push(Check::below(
        "circle_frozen_ode",
        inputs.clone(),
        frozen.ode_residual,
        1e-8,
    ));
    out.push(Check::below(
        "circle_obstruction_degree",
        inputs,
        frozen.obstruction_degree as f64,
        0.5,
    ));
    out.push(Check::below(
        "circle_time_reversal",
        json!({"poly": "z"}),
        time_reversal_residual(stencil.p0(), &curve)?.sup,
        1e-8,
    ));
    Ok(out)
}

fn lemma_suite() -> Result<Vec<Check>, CliError> {
    let mut out = Vec::new();
    let stencil = FamilyStencil::from_family(circle_family, 0.0, DEFAULT_H, StencilOrder::Fourth)?;
    let null = nullstellensatz_fit(&stencil)?;
    let inputs = json!({"family": "z/sqrt(1+2t)", "t": 0.0, "h": DEFAULT_H, "stencil": 5});
    out.push(Check::below(
        "nullstellensatz_circle",
        inputs.clone(),
        null.residual,
        1e-10,
    ));
    out.push(Check::below(
        "nullstellensatz_circle_B",
        inputs,
        (null.b + 2.0).abs(),
        1e-8,
    ));
    for h in [1e-2, 1e-3, 1e-4] {
        let s = FamilyStencil::from_family(bernoulli, 0.0, h, StencilOrder::Second)?;
        out.push(Check::above(
            "nullstellensatz_static_bernoulli",
            json!({"poly": "z^2-0.64", "h": h}),
            nullstellensatz_fit(&s)?.residual,
            1e-3,
        ));
    }
    let translating = |t: f64| LemPoly::simple(1.0, vec![c(t, 0.0)]);
    let s = FamilyStencil::from_family(translating, 0.0, DEFAULT_H, StencilOrder::Second)?;
    out.push(Check::below(
        "node_velocity_translation",
        json!({"family": "z-t", "h": DEFAULT_H}),
        (node_velocities(&s)?[0] - c(1.0, 0.0)).norm(),
        1e-6,
    ));
    let rotating = |t: f64| {
        let l = Complex64::from_polar(0.5, t);
        LemPoly::simple(1.0, vec![l, -l])
    };
    let s = FamilyStencil::from_family(rotating, 0.0, DEFAULT_H, StencilOrder::Second)?;
    let v = node_velocities(&s)?;
    let err = (v[0] - c(0.0, 0.5))
        .norm()
        .max((v[1] - c(0.0, -0.5)).norm());
    out.push(Check::below(
        "node_velocity_rotation",
        json!({"family": "±0.5e^{it}", "h": DEFAULT_H}),
        err,
        1e-6,
    ));
    Ok(out)
}

fn timerev_suite() -> Result<Vec<Check>, CliError> {
    let mut out = Vec::new();
    for n in 1..=3 {
        let p = LemPoly::confluent(1.0, c(0.0, 0.0), n)?;
        let curve = trace_lemniscate(&p, 128)?;
        out.push(Check::below(
            "time_reversal_confluent",
            json!({"poly": format!("z^{n}")}),
            time_reversal_residual(&p, &curve)?.sup,
            1e-12,
        ));
    }
    let p = bernoulli(0.0)?;
    let curve = trace_lemniscate(&p, 256)?;
    let r = time_reversal_residual(&p, &curve)?;
    let expected = (c(0.32, 0.0) / c(0.64, 1.0)).im;
    out.push(Check::below(
        "time_reversal_bernoulli_pi_over_4",
        json!({"poly": "z^2-0.64", "theta": PI / 4.0, "expected": expected}),
        (r.samples[32] - expected).abs(),
        1e-6,
    ));
    out.push(Check::above(
        "time_reversal_bernoulli_sup",
        json!({"poly": "z^2-0.64"}),
        r.sup,
        0.1,
    ));
    Ok(out)
}

fn destruction_suite() -> Result<Vec<Check>, CliError> {
    let mut out = Vec::new();
    let (t, dt, m) = (0.1, 1e-3, 256);
    let inputs = json!({"poly": "z^2-0.64", "T": t, "dt": dt, "M": m});
    let series = destruction_experiment(&bernoulli(0.0)?, t, dt, m)?;
    let d = series.defects();
    out.push(Check::below(
        "destruction_initial_defect",
        inputs.clone(),
        d[0],
        1e-10,
    ));
    let drops = d.windows(2).filter(|w| w[1] <= w[0]).count();
    out.push(Check::below(
        "destruction_monotone_violations",
        inputs.clone(),
        drops as f64,
        0.5,
    ));
    let ratio = d.last().copied().unwrap_or(0.0) / d[0].max(1e-14);
    out.push(Check::above(
        "destruction_growth_ratio",
        inputs.clone(),
        ratio,
        1e3,
    ));
    let (_, r2) = series.linear_fit(0.02);
    out.push(Check::above(
        "destruction_small_t_linearity",
        inputs,
        r2,
        0.99,
    ));
    for (name, p) in [
        ("survivor_circle", LemPoly::simple(1.0, vec![c(0.0, 0.0)])?),
        (
            "survivor_confluent",
            LemPoly::confluent(1.0, c(0.1, 0.0), 2)?,
        ),
    ] {
        let s = destruction_experiment(&p, 0.5, 1e-2, m)?;
        out.push(Check::below(
            name,
            json!({"T": 0.5, "dt": 1e-2, "M": m}),
            s.max_defect(),
            1e-8,
        ));
    }
    Ok(out)
}

pub fn run_suite(suite: Suite) -> Result<Vec<Check>, CliError> {
    Ok(match suite {
        Suite::Circle => circle_suite()?,
        Suite::Lemma => lemma_suite()?,
        Suite::Timerev => timerev_suite()?,
        Suite::Destruction => destruction_suite()?,
        Suite::All => {
            let mut all = circle_suite()?;
            all.extend(lemma_suite()?);
            all.extend(timerev_suite()?);
            all.extend(destruction_suite()?);
            all
        }
    })
}
