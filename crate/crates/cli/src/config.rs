//! Scenario files (TOML). Unknown keys are rejected.

use std::path::{Path, PathBuf};

use lemlab_core::conformal::{LaurentMap, TAIL_THRESHOLD};
use lemlab_core::cplx_poly::LemPoly;
use lemlab_core::pg_flow::{FlowConfig, CUSP_REL, DT_MAX};
use lemlab_core::Complex64;
use serde::Deserialize;

use crate::CliError;

/// `[re, im]` pairs in the file.
pub type Pair = [f64; 2];

fn cplx(p: &Pair) -> Complex64 {
    Complex64::new(p[0], p[1])
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub initial: Option<Initial>,
    pub run: RunConfig,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output: OutputConfig,
    pub sweep: Option<SweepAxes>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum Initial {
    Circle {
        b0: f64,
        #[serde(default)]
        center: Pair,
    },
    Ellipse {
        b0: f64,
        a0: f64,
    },
    Lemniscate {
        a: f64,
        nodes: Vec<Pair>,
        mults: Option<Vec<usize>>,
    },
    Coefficients {
        b: f64,
        a: Vec<Pair>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Total time `T`; negative together with `dt` for backward runs.
    pub duration: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Numerics {
    /// Boundary samples `M`.
    pub samples: usize,
    /// Moments `K`.
    pub moments: usize,
    /// Largest allowed truncation order `N` of the initial map.
    pub max_order: Option<usize>,
    /// Lemniscate degree fitted along lemniscate runs; defaults to the
    /// initial polynomial's degree.
    pub fit_degree: Option<usize>,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            samples: 256,
            moments: 8,
            max_order: None,
            fit_degree: None,
            restarts: lemlab_core::lemniscate::DEFAULT_RESTARTS,
            seed: lemlab_core::lemniscate::DEFAULT_SEED,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub cusp_rel: f64,
    pub tail_threshold: f64,
    pub dt_max: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            cusp_rel: CUSP_REL,
            tail_threshold: TAIL_THRESHOLD,
            dt_max: DT_MAX,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Steps between SVG boundary snapshots; no SVG when absent.
    pub snapshot_stride: Option<usize>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            snapshot_stride: None,
        }
    }
}

/// Grid of star lemniscates `z^n − ρ^n`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxes {
    pub rho: Vec<f64>,
    pub degree: Vec<usize>,
    /// Defect slope is fitted on `[0, slope_window]`; defaults to the run.
    pub slope_window: Option<f64>,
}

impl SweepAxes {
    /// Grid points in row-major order `(ρ, n)`, `ρ` outermost.
    pub fn points(&self) -> Vec<(f64, usize)> {
        self.rho
            .iter()
            .flat_map(|&r| self.degree.iter().map(move |&n| (r, n)))
            .collect()
    }
}

fn invalid(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {msg}"))
}

impl ScenarioConfig {
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let RunConfig { duration, dt } = self.run;
        if !(dt.is_finite() && dt != 0.0) {
            return Err(invalid("run.dt", "must be finite and nonzero"));
        }
        if !duration.is_finite() {
            return Err(invalid("run.duration", "must be finite"));
        }
        let steps = duration / dt;
        if steps < -1e-9 || (steps - steps.round()).abs() > 1e-9 * steps.abs().max(1.0) {
            return Err(invalid(
                "run.duration",
                "must be a nonnegative whole multiple of run.dt",
            ));
        }
        let m = self.numerics.samples;
        if !m.is_power_of_two() || m < 8 {
            return Err(invalid("numerics.samples", "must be a power of two >= 8"));
        }
        if self.numerics.moments == 0 {
            return Err(invalid("numerics.moments", "must be positive"));
        }
        if self.numerics.fit_degree == Some(0) {
            return Err(invalid("numerics.fit_degree", "must be positive"));
        }
        for (name, v) in [
            ("tolerances.cusp_rel", self.tolerances.cusp_rel),
            ("tolerances.tail_threshold", self.tolerances.tail_threshold),
            ("tolerances.dt_max", self.tolerances.dt_max),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, "must be positive"));
            }
        }
        if dt.abs() > self.tolerances.dt_max {
            return Err(invalid(
                "run.dt",
                format!("|dt| exceeds dt_max = {}", self.tolerances.dt_max),
            ));
        }
        match &self.initial {
            Some(Initial::Circle { b0, .. }) | Some(Initial::Ellipse { b0, .. })
                if !(*b0 > 0.0) =>
            {
                return Err(invalid("initial.b0", "must be positive"));
            }
            Some(Initial::Coefficients { b, .. }) if !(*b > 0.0) => {
                return Err(invalid("initial.b", "must be positive"));
            }
            Some(Initial::Lemniscate { a, nodes, mults }) => {
                if !(*a > 0.0) {
                    return Err(invalid("initial.a", "must be positive"));
                }
                if nodes.is_empty() {
                    return Err(invalid("initial.nodes", "must not be empty"));
                }
                if let Some(k) = mults {
                    if k.len() != nodes.len() || k.contains(&0) {
                        return Err(invalid(
                            "initial.mults",
                            "needs one positive entry per node",
                        ));
                    }
                }
            }
            _ => {}
        }
        if let Some(sw) = &self.sweep {
            if sw.rho.is_empty() || sw.degree.is_empty() {
                return Err(invalid("sweep", "axes must be non-empty"));
            }
            if sw.rho.iter().any(|r| !(0.0..1.0).contains(r)) {
                return Err(invalid("sweep.rho", "values must lie in [0, 1)"));
            }
            if sw.degree.contains(&0) {
                return Err(invalid("sweep.degree", "values must be positive"));
            }
        }
        Ok(())
    }

    pub fn flow_config(&self) -> FlowConfig {
        FlowConfig {
            samples: self.numerics.samples,
            moment_order: self.numerics.moments,
            cusp_rel: self.tolerances.cusp_rel,
            dt_max: self.tolerances.dt_max,
        }
    }
}

impl Initial {
    /// The defining polynomial, for lemniscate initial data.
    pub fn lemniscate(&self) -> Result<Option<LemPoly>, CliError> {
        let Initial::Lemniscate { a, nodes, mults } = self else {
            return Ok(None);
        };
        let nodes: Vec<Complex64> = nodes.iter().map(cplx).collect();
        let mults = mults.clone().unwrap_or_else(|| vec![1; nodes.len()]);
        LemPoly::new(*a, nodes, mults)
            .map(Some)
            .map_err(|e| invalid("initial", e))
    }

    /// Exterior map for map-type initial data; `None` for lemniscates,
    /// which must be traced first.
    pub fn map(&self) -> Result<Option<LaurentMap>, CliError> {
        let map = match self {
            Initial::Circle { b0, center } => LaurentMap::circle(*b0, cplx(center)),
            Initial::Ellipse { b0, a0 } => LaurentMap::ellipse(*b0, Complex64::new(*a0, 0.0)),
            Initial::Coefficients { b, a } => LaurentMap::new(*b, a.iter().map(cplx).collect()),
            Initial::Lemniscate { .. } => return Ok(None),
        };
        map.map(Some).map_err(|e| invalid("initial", e))
    }
}

/// `z^n − ρ^n`; `ρ = 0` gives the confluent `z^n`.
pub fn star(rho: f64, n: usize) -> Result<LemPoly, CliError> {
    let poly = if rho == 0.0 {
        LemPoly::confluent(1.0, Complex64::new(0.0, 0.0), n)
    } else {
        LemPoly::simple(
            1.0,
            (0..n)
                .map(|j| Complex64::from_polar(rho, std::f64::consts::TAU * j as f64 / n as f64))
                .collect(),
        )
    };
    poly.map_err(|e| CliError::Config(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "[run]\nduration = 0.5\ndt = 1e-3\n";

    #[test]
    fn circle_config_parses() {
        let cfg = ScenarioConfig::parse(&format!("{BASE}[initial.circle]\nb0 = 1.0\n")).unwrap();
        let map = cfg.initial.unwrap().map().unwrap().unwrap();
        assert_eq!(map.b(), 1.0);
        assert_eq!(cfg.numerics.samples, 256);
    }

    #[test]
    fn zero_dt_names_the_field() {
        let err = ScenarioConfig::parse("[run]\nduration = 0.5\ndt = 0.0\n").unwrap_err();
        assert!(err.to_string().contains("run.dt"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn unknown_keys_are_errors() {
        let err = ScenarioConfig::parse(&format!("{BASE}[numerics]\nsampels = 64\n")).unwrap_err();
        assert!(err.to_string().contains("sampels"), "{err}");
        let err = ScenarioConfig::parse(&format!("{BASE}[initial.circle]\nb0 = 1.0\nradius = 2\n"))
            .unwrap_err();
        assert!(err.to_string().contains("radius"), "{err}");
    }

    #[test]
    fn only_one_initial_condition() {
        let text =
            format!("{BASE}[initial.circle]\nb0 = 1.0\n[initial.ellipse]\nb0 = 1.0\na0 = 0.5\n");
        assert!(ScenarioConfig::parse(&text).is_err());
    }

    #[test]
    fn rejects_bad_numerics() {
        assert!(ScenarioConfig::parse(&format!("{BASE}[numerics]\nsamples = 100\n")).is_err());
        assert!(ScenarioConfig::parse(&format!("{BASE}[tolerances]\ncusp_rel = -1.0\n")).is_err());
        assert!(ScenarioConfig::parse("[run]\nduration = 0.5\ndt = 3e-3\n").is_err());
        assert!(ScenarioConfig::parse("[run]\nduration = 0.5\ndt = 0.05\n").is_err());
    }

    #[test]
    fn lemniscate_initial_data() {
        let text =
            format!("{BASE}[initial.lemniscate]\na = 1.0\nnodes = [[0.8, 0.0], [-0.8, 0.0]]\n");
        let cfg = ScenarioConfig::parse(&text).unwrap();
        let p = cfg.initial.unwrap().lemniscate().unwrap().unwrap();
        assert_eq!(p.degree(), 2);
    }

    #[test]
    fn sweep_grid_order() {
        let cfg = ScenarioConfig::parse(&format!(
            "{BASE}[sweep]\nrho = [0.2, 0.8]\ndegree = [2, 3]\n"
        ))
        .unwrap();
        assert_eq!(
            cfg.sweep.unwrap().points(),
            vec![(0.2, 2), (0.2, 3), (0.8, 2), (0.8, 3)]
        );
    }

    #[test]
    fn shipped_example_is_valid() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/bernoulli.toml");
        ScenarioConfig::from_path(&path).unwrap();
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/sweep.toml");
        ScenarioConfig::from_path(&path).unwrap();
    }
}
