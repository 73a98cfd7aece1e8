//! Drivers behind the subcommands. Each writes its files and returns a
//! summary; `main` turns summaries and errors into exit codes.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use lemlab_core::conformal::{trace_lemniscate, Curve};
use lemlab_core::cplx_poly::LemPoly;
use lemlab_core::lemniscate::{defect_report, fit, DefectReport, FitOptions};
use lemlab_core::pg_flow::{evolve, write_trajectory_csv, FlowEvent, FlowState, Trajectory};
use lemlab_core::theorem_lab::{
    boundary, destruction_experiment, lemniscate_map_with, time_reversal_residual,
    time_reversal_residual_direct,
};
use lemlab_core::Complex64;
use log::{debug, info, warn};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{star, ScenarioConfig};
use crate::{svg, CliError, EXIT_NUMERICAL, EXIT_OK};

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    Ok(BufWriter::new(
        File::create(path).map_err(|e| CliError::io(path, e))?,
    ))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    let mut f = create(path)?;
    f.write_all(contents.as_bytes())
        .map_err(|e| CliError::io(path, e))?;
    f.flush().map_err(|e| CliError::io(path, e))
}

#[derive(Debug)]
pub struct EvolveSummary {
    pub trajectory: Trajectory,
    /// Defect per step for lemniscate initial data.
    pub defects: Vec<(f64, f64)>,
    pub files: Vec<PathBuf>,
}

impl EvolveSummary {
    pub fn events(&self) -> &[FlowEvent] {
        &self.trajectory.events
    }

    pub fn exit_code(&self) -> i32 {
        if self.trajectory.terminated_early() {
            EXIT_NUMERICAL
        } else {
            EXIT_OK
        }
    }
}

/// Evolve the configured initial condition, writing `trajectory.csv`,
/// `events.json`, and when configured `defect.csv` and `snapshots.svg`.
pub fn cmd_evolve(cfg: &ScenarioConfig, out: Option<&Path>) -> Result<EvolveSummary, CliError> {
    let initial = cfg
        .initial
        .as_ref()
        .ok_or_else(|| CliError::Config("initial: evolve needs an initial condition".into()))?;
    let flow = cfg.flow_config();
    let poly = initial.lemniscate()?;
    let map = match (&poly, initial.map()?) {
        (_, Some(map)) => map,
        (Some(p), None) => {
            lemniscate_map_with(p, cfg.numerics.samples, cfg.tolerances.tail_threshold)?.map
        }
        (None, None) => unreachable!("every initial condition is a map or a lemniscate"),
    };
    if let Some(max) = cfg.numerics.max_order {
        if map.order() > max {
            return Err(CliError::Config(format!(
                "numerics.max_order: initial map needs order {} > {max}",
                map.order()
            )));
        }
    }
    info!("initial map: b = {}, order {}", map.b(), map.order());

    let fit_degree = cfg
        .numerics
        .fit_degree
        .or(poly.as_ref().map(LemPoly::degree));
    let mut defects = Vec::new();
    let mut fit_error = None;
    let mut prev = poly.clone();
    let samples = cfg.numerics.samples;
    let mut observe = |s: &FlowState| {
        let Some(n) = fit_degree else { return };
        if fit_error.is_some() {
            return;
        }
        let result = boundary(&s.map, samples)
            .map_err(CliError::from)
            .and_then(|curve| {
                match prev.as_ref().filter(|p| p.degree() == n) {
                    Some(p) => fit(&curve, n, Some(p), &FitOptions::default()),
                    None => defect_report(&curve, n, cfg.numerics.restarts, cfg.numerics.seed),
                }
                .map_err(CliError::from)
            });
        match result {
            Ok(r) => {
                debug!("t = {}: defect {:e}", s.t, r.defect);
                defects.push((s.t, r.defect));
                prev = Some(r.poly);
            }
            Err(e) => fit_error = Some(e),
        }
    };
    let traj = evolve(
        FlowState::new(0.0, map, &flow),
        cfg.run.duration,
        cfg.run.dt,
        &flow,
        &mut [&mut observe],
    )?;
    if let Some(e) = fit_error {
        return Err(e);
    }

    let dir = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.output.dir.clone());
    let mut files = Vec::new();
    let path = dir.join("trajectory.csv");
    let mut f = create(&path)?;
    write_trajectory_csv(&traj.states, &mut f).map_err(|e| CliError::io(&path, e))?;
    f.flush().map_err(|e| CliError::io(&path, e))?;
    files.push(path);

    let path = dir.join("events.json");
    write_file(
        &path,
        &(serde_json::to_string_pretty(&traj.events).expect("plain data") + "\n"),
    )?;
    files.push(path);

    if !defects.is_empty() {
        let mut text = String::from("t,defect\n");
        for (t, d) in &defects {
            text.push_str(&format!("{t:.16e},{d:.16e}\n"));
        }
        let path = dir.join("defect.csv");
        write_file(&path, &text)?;
        files.push(path);
    }

    if let Some(stride) = cfg.output.snapshot_stride.filter(|&s| s > 0) {
        let mut snaps = Vec::new();
        for (i, s) in traj.states.iter().enumerate() {
            if i % stride == 0 || i + 1 == traj.states.len() {
                snaps.push((s.t, boundary(&s.map, samples)?.samples().to_vec()));
            }
        }
        let path = dir.join("snapshots.svg");
        write_file(&path, &svg::render(&snaps))?;
        files.push(path);
    }
    for e in &traj.events {
        warn!("{:?} event at t = {} (margin {:e})", e.kind, e.t, e.margin);
    }
    Ok(EvolveSummary {
        trajectory: traj,
        defects,
        files,
    })
}

pub fn read_curve(path: &Path) -> Result<Curve, CliError> {
    let f = File::open(path).map_err(|e| CliError::io(path, e))?;
    Ok(Curve::read_csv(std::io::BufReader::new(f))?)
}

pub fn cmd_fit(
    curve: &Path,
    degree: usize,
    restarts: usize,
    seed: u64,
) -> Result<DefectReport, CliError> {
    if degree == 0 {
        return Err(CliError::Usage("--degree must be at least 1".into()));
    }
    let curve = read_curve(curve)?;
    Ok(defect_report(&curve, degree, restarts, seed)?)
}

/// Polynomial spec `[A:]RE,IM[^K];RE,IM[^K];…`, e.g. `1:0.8,0;-0.8,0`
/// for `z² − 0.64` or `8:0.1,0^3`.
pub fn parse_poly_spec(spec: &str) -> Result<LemPoly, CliError> {
    let bad = |why: &str| CliError::Usage(format!("--poly {spec:?}: {why}"));
    let (scale, nodes) = match spec.split_once(':') {
        Some((a, rest)) => (a.trim().parse::<f64>().map_err(|_| bad("bad scale"))?, rest),
        None => (1.0, spec),
    };
    let mut zs = Vec::new();
    let mut ks = Vec::new();
    for item in nodes.split(';').map(str::trim).filter(|s| !s.is_empty()) {
        let (z, k) = match item.split_once('^') {
            Some((z, k)) => (
                z,
                k.trim()
                    .parse::<usize>()
                    .map_err(|_| bad("bad multiplicity"))?,
            ),
            None => (item, 1),
        };
        let (re, im) = z.split_once(',').ok_or_else(|| bad("nodes are RE,IM"))?;
        let re = re.trim().parse::<f64>().map_err(|_| bad("bad real part"))?;
        let im = im
            .trim()
            .parse::<f64>()
            .map_err(|_| bad("bad imaginary part"))?;
        zs.push(Complex64::new(re, im));
        ks.push(k);
    }
    LemPoly::new(scale, zs, ks).map_err(|e| bad(&e.to_string()))
}

pub fn cmd_trace(spec: &str, samples: usize, out: &Path) -> Result<Curve, CliError> {
    let p = parse_poly_spec(spec)?;
    if !samples.is_power_of_two() || samples < 4 {
        return Err(CliError::Usage(
            "--samples must be a power of two >= 4".into(),
        ));
    }
    let curve = trace_lemniscate(&p, samples)?;
    let mut f = create(out)?;
    curve.write_csv(&mut f)?;
    f.flush().map_err(|e| CliError::io(out, e))?;
    Ok(curve)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub index: usize,
    pub rho: f64,
    pub degree: usize,
    pub defect_slope: Option<f64>,
    pub final_defect: Option<f64>,
    pub time_reversal_sup: Option<f64>,
    pub cusp_time: Option<f64>,
    pub status: String,
}

impl SweepRow {
    pub const HEADER: &'static str =
        "index,rho,degree,defect_slope,final_defect,time_reversal_sup,cusp_time,status";

    fn csv(&self) -> String {
        let num = |v: Option<f64>| v.map(|x| format!("{x:.16e}")).unwrap_or_default();
        format!(
            "{},{:.16e},{},{},{},{},{},{}",
            self.index,
            self.rho,
            self.degree,
            num(self.defect_slope),
            num(self.final_defect),
            num(self.time_reversal_sup),
            num(self.cusp_time),
            self.status.replace([',', '\n'], " ")
        )
    }

    pub fn ok(&self) -> bool {
        self.status == "ok"
    }
}

fn sweep_point(
    cfg: &ScenarioConfig,
    index: usize,
    rho: f64,
    degree: usize,
    window: f64,
) -> SweepRow {
    let mut row = SweepRow {
        index,
        rho,
        degree,
        defect_slope: None,
        final_defect: None,
        time_reversal_sup: None,
        cusp_time: None,
        status: "ok".into(),
    };
    let mut run = || -> Result<(), CliError> {
        let p0 = star(rho, degree)?;
        let curve = trace_lemniscate(&p0, cfg.numerics.samples)?;
        row.time_reversal_sup = Some(match time_reversal_residual(&p0, &curve) {
            Ok(r) => r.sup,
            Err(_) => time_reversal_residual_direct(&p0, &curve).sup,
        });
        let series =
            destruction_experiment(&p0, cfg.run.duration, cfg.run.dt, cfg.numerics.samples)?;
        row.defect_slope = Some(series.linear_fit(window).0);
        row.final_defect = series.defects().last().copied();
        if let Some(e) = series.events.first() {
            row.cusp_time = Some(e.t);
            row.status = format!("{:?}", e.kind).to_lowercase();
        }
        Ok(())
    };
    if let Err(e) = run() {
        row.status = format!("error: {e}");
    }
    row
}

#[derive(Debug)]
pub struct SweepSummary {
    pub rows: Vec<SweepRow>,
    pub file: PathBuf,
}

impl SweepSummary {
    pub fn exit_code(&self) -> i32 {
        if self.rows.iter().all(SweepRow::ok) {
            EXIT_OK
        } else {
            EXIT_NUMERICAL
        }
    }
}

/// Destruction experiment at every grid point, `jobs` at a time; rows are
/// assembled in grid order so the CSV does not depend on scheduling.
pub fn cmd_sweep(
    cfg: &ScenarioConfig,
    jobs: usize,
    out: Option<&Path>,
) -> Result<SweepSummary, CliError> {
    let axes = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::Config("sweep: section missing".into()))?;
    let window = axes.slope_window.unwrap_or(cfg.run.duration);
    let points = axes.points();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Usage(format!("--jobs: {e}")))?;
    let rows: Vec<SweepRow> = pool.install(|| {
        points
            .par_iter()
            .enumerate()
            .map(|(i, &(rho, n))| sweep_point(cfg, i, rho, n, window))
            .collect()
    });
    let mut text = String::from(SweepRow::HEADER);
    text.push('\n');
    for row in &rows {
        text.push_str(&row.csv());
        text.push('\n');
    }
    let dir = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.output.dir.clone());
    let file = dir.join("sweep.csv");
    write_file(&file, &text)?;
    Ok(SweepSummary { rows, file })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poly_specs() {
        let p = parse_poly_spec("1:0.8,0;-0.8,0").unwrap();
        assert_eq!(p.degree(), 2);
        let p = parse_poly_spec("8:0.1,0^3").unwrap();
        assert_eq!((p.scale(), p.mults()), (8.0, &[3usize][..]));
        assert_eq!(parse_poly_spec("0,0").unwrap().scale(), 1.0);
        for bad in ["", "x:0,0", "1:0", "1:0,0^0", "-1:0,0"] {
            assert!(parse_poly_spec(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn evolve_circle_writes_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ScenarioConfig::parse(
            "[initial.circle]\nb0 = 1.0\n[run]\nduration = 0.5\ndt = 1e-2\n[output]\nsnapshot_stride = 10\n",
        )
        .unwrap();
        let s = cmd_evolve(&cfg, Some(dir.path())).unwrap();
        assert_eq!(s.exit_code(), 0);
        assert!((s.trajectory.last().map.b() - 2f64.sqrt()).abs() < 1e-9);
        for name in ["trajectory.csv", "events.json", "snapshots.svg"] {
            assert!(dir.path().join(name).exists(), "{name}");
        }
        let events = fs::read_to_string(dir.path().join("events.json")).unwrap();
        assert_eq!(events.trim(), "[]");
    }

    #[test]
    fn backward_ellipse_reports_cusp() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ScenarioConfig::parse(
            "[initial.ellipse]\nb0 = 1.0\na0 = 0.5\n[run]\nduration = -1.0\ndt = -1e-2\n",
        )
        .unwrap();
        let s = cmd_evolve(&cfg, Some(dir.path())).unwrap();
        assert_eq!(s.exit_code(), EXIT_NUMERICAL);
        let events: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("events.json")).unwrap())
                .unwrap();
        assert_eq!(events.as_array().unwrap().len(), 1);
        assert_eq!(events[0]["type"], "cusp");
    }

    #[test]
    fn lemniscate_run_records_defect() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ScenarioConfig::parse(
            "[initial.lemniscate]\na = 1.0\nnodes = [[0.8, 0.0], [-0.8, 0.0]]\n[run]\nduration = 0.01\ndt = 1e-3\n",
        )
        .unwrap();
        let s = cmd_evolve(&cfg, Some(dir.path())).unwrap();
        assert_eq!(s.defects.len(), 11);
        assert!(s.defects[0].1 < 1e-10);
        assert!(s.defects.windows(2).all(|w| w[1].1 > w[0].1));
    }

    #[test]
    fn traced_curve_round_trips_through_fit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bern.csv");
        cmd_trace("1:0.8,0;-0.8,0", 256, &path).unwrap();
        let rep = cmd_fit(&path, 2, 2, 1).unwrap();
        assert!(rep.defect < 1e-10);
        let mut xs: Vec<f64> = rep.poly.nodes().iter().map(|z| z.re).collect();
        xs.sort_by(f64::total_cmp);
        assert!((xs[0] + 0.8).abs() < 1e-9 && (xs[1] - 0.8).abs() < 1e-9);
        assert!(matches!(cmd_fit(&path, 0, 2, 1), Err(CliError::Usage(_))));
        assert_eq!(
            cmd_fit(&dir.path().join("missing.csv"), 1, 2, 1)
                .unwrap_err()
                .exit_code(),
            2
        );
    }

    #[test]
    fn sweep_rows_in_grid_order() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ScenarioConfig::parse(
            "[run]\nduration = 0.005\ndt = 1e-3\n[numerics]\nsamples = 128\n[sweep]\nrho = [0.0, 0.8]\ndegree = [2]\n",
        )
        .unwrap();
        let s = cmd_sweep(&cfg, 2, Some(dir.path())).unwrap();
        assert_eq!(s.rows.len(), 2);
        assert!(s.rows.iter().all(SweepRow::ok), "{:?}", s.rows);
        assert!(s.rows[0].defect_slope.unwrap().abs() < 1e-6);
        assert!(s.rows[1].defect_slope.unwrap() > 0.0);
        assert!(s.rows[0].time_reversal_sup.unwrap() < 1e-12);
        let text = fs::read_to_string(&s.file).unwrap();
        assert!(text.starts_with(SweepRow::HEADER));
        assert_eq!(text.lines().count(), 3);
    }
}
