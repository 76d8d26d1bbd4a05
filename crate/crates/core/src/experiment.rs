//! Experiment orchestration: building solver contexts from a configuration
//! and running the study modes with their artifacts.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::boundary::{check_boundary_kind, BoundaryMap};
use crate::config::{validate, ExperimentConfig, InitialCondition, NoiseSpec};
use crate::diagnostics::{
    least_squares, map_paths, observed_orders, regularity_band_check, strong_convergence_study, HolderOptions,
};
use crate::elliptic::{Coefficients as Diffusion, OperatorFamily};
use crate::error::{invalid, Anchor, Error, Result};
use crate::evolution::{Propagator, SteppingLattice};
use crate::noise::{basis_modes, IncrementStream, NoiseModel, NoiseTarget};
use crate::output::{fmt17, write_ndjson, Num17};
use crate::solver::{run_path, Retention, SolverContext};
use crate::spatial::{Grid, Profile};
use crate::variational::{
    variational_residual, write_residual_csv, SpaceProfile, TestFunction, TimeProfile, VariationalResidual,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Solve,
    DeterministicOracle,
    VariationalCheck,
    RegularityStudy,
    ConvergenceStudy,
    ValidateOnly,
}

impl Mode {
    pub const ALL: [Mode; 6] = [
        Mode::Solve,
        Mode::DeterministicOracle,
        Mode::VariationalCheck,
        Mode::RegularityStudy,
        Mode::ConvergenceStudy,
        Mode::ValidateOnly,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Solve => "solve",
            Mode::DeterministicOracle => "deterministic-oracle",
            Mode::VariationalCheck => "variational-check",
            Mode::RegularityStudy => "regularity-study",
            Mode::ConvergenceStudy => "convergence-study",
            Mode::ValidateOnly => "validate-only",
        }
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| invalid(format!("unknown mode `{s}`")))
    }
}

/// Command-line overrides applied before validation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub paths: Option<usize>,
    pub seed: Option<u64>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(p) = self.paths {
            cfg.paths = p;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
    }
}

/// Nodal values of the configured initial condition.
pub fn initial_values(ic: &InitialCondition, grid: &Arc<Grid>) -> Vec<f64> {
    use std::f64::consts::PI;
    match *ic {
        InitialCondition::Zero => vec![0.0; grid.len()],
        InitialCondition::Constant { value } => vec![value; grid.len()],
        InitialCondition::CosMode { k } => Profile::Cosine { k }.sample(grid).into_values(),
        InitialCondition::RandomSmooth { modes, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let xi: Vec<f64> = (0..modes).map(|_| StandardNormal.sample(&mut rng)).collect();
            grid.coords()
                .iter()
                .map(|x| {
                    xi.iter()
                        .enumerate()
                        .map(|(k, z)| z * (1.0 + k as f64).powi(-2) * (k as f64 * PI * x[0]).cos())
                        .sum()
                })
                .collect()
        }
    }
}

fn read_table(file: &Path) -> Result<Vec<f64>> {
    #[derive(Deserialize)]
    struct Row {
        n: usize,
        lambda: f64,
    }
    let mut rows: Vec<Row> = csv::Reader::from_path(file)?.deserialize().collect::<std::result::Result<_, _>>()?;
    rows.sort_by_key(|r| r.n);
    if rows.is_empty() {
        return Err(invalid(format!("eigenvalue table {} is empty", file.display())));
    }
    Ok(rows.into_iter().map(|r| r.lambda).collect())
}

/// The configured noise model on `grid`, or `None` when absent.
pub fn noise_model(spec: &NoiseSpec, grid: &Arc<Grid>, target: NoiseTarget) -> Result<Option<Arc<NoiseModel>>> {
    let model = match spec {
        NoiseSpec::None => return Ok(None),
        NoiseSpec::PowerLaw { amplitude, decay, modes, basis, exponent } => {
            NoiseModel::power_law(Arc::clone(grid), target, *amplitude, *decay, *modes, *basis, *exponent)?
        }
        NoiseSpec::Table { file, basis, exponent } => {
            let lambdas = read_table(file)?;
            let modes = basis_modes(grid, target, *basis, lambdas.len())?;
            NoiseModel::spectral(Arc::clone(grid), target, lambdas, modes, 0.0, *exponent)?
        }
        NoiseSpec::White => NoiseModel::white(Arc::clone(grid), target)?,
    };
    Ok(Some(Arc::new(model)))
}

/// Solver context of `cfg` at `n` cells per axis and `steps` time steps.
pub fn build_context(cfg: &ExperimentConfig, n: usize, steps: usize) -> Result<SolverContext> {
    check_boundary_kind(cfg.operator.boundary_condition)?;
    let grid = Arc::new(Grid::new(cfg.grid.dimension, n)?);
    let lattice = SteppingLattice::new(cfg.lattice.horizon, steps)?;
    let mut fam =
        OperatorFamily::new(Arc::clone(&grid), Arc::new(cfg.operator.coefficients.clone()), cfg.operator.shift)?;
    let times = lattice.times();
    fam.prepare(&times)?;
    let fam = Arc::new(fam);
    let mut maps = BoundaryMap::new(Arc::clone(&fam), cfg.operator.boundary_condition)?;
    // forcing is evaluated at left endpoints only
    maps.prepare(&times[..steps])?;
    let prop = Propagator::new(fam, lattice, false)?;
    SolverContext::new(
        Arc::new(prop),
        Arc::new(maps),
        noise_model(&cfg.noise.interior, &grid, NoiseTarget::Interior)?,
        noise_model(&cfg.noise.boundary, &grid, NoiseTarget::Boundary)?,
        cfg.nonlinearities,
        initial_values(&cfg.initial, &grid),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub spatial_n: Vec<usize>,
    pub spatial_steps: usize,
    pub spatial_errors: Vec<f64>,
    pub spatial_order: f64,
    pub temporal_steps: Vec<usize>,
    pub temporal_n: usize,
    pub temporal_errors: Vec<f64>,
    pub temporal_order: f64,
    pub horizon: f64,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.spatial_order >= 1.9 && self.temporal_order >= 0.9
    }
}

fn heat_run(n: usize, steps: usize, horizon: f64) -> Result<(Arc<Grid>, Vec<f64>)> {
    let grid = Arc::new(Grid::new(1, n)?);
    let mut fam = OperatorFamily::new(Arc::clone(&grid), Arc::new(Diffusion::constant(1.0, 0.0)), 1.0)?;
    fam.prepare(&[0.0])?;
    let prop = Propagator::new(Arc::new(fam), SteppingLattice::new(horizon, steps)?, false)?;
    let u0 = Profile::Cosine { k: [1, 0] }.sample(&grid).into_values();
    let u = prop.propagate_values(0, steps, &u0)?;
    Ok((grid, u))
}

fn max_error(grid: &Grid, u: &[f64], amplitude: f64) -> f64 {
    grid.coords()
        .iter()
        .zip(u)
        .map(|(x, v)| (v - amplitude * (std::f64::consts::PI * x[0]).cos()).abs())
        .fold(0.0, f64::max)
}

fn fitted_order(hs: &[f64], errors: &[f64]) -> f64 {
    let xs: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    least_squares(&xs, &ys).0
}

/// 1D heat equation with `a ≡ 1`, zero flux and `u0 = cos(πs)`.
///
/// The spatial error is measured against the time-discrete mode
/// `(1+π²Δt)^{−M} cos(πs)` so that it isolates `h`; the temporal error is
/// measured against `e^{−π²T} cos(πs)` on a fine grid.
pub fn heat_oracle(
    spatial_n: &[usize],
    spatial_steps: usize,
    temporal_steps: &[usize],
    temporal_n: usize,
    horizon: f64,
) -> Result<OracleReport> {
    use std::f64::consts::PI;
    if spatial_n.len() < 2 || temporal_steps.len() < 2 {
        return Err(invalid("an order study needs at least two resolutions"));
    }
    let dt = horizon / spatial_steps as f64;
    let discrete = (1.0 + PI * PI * dt).powi(-(spatial_steps as i32));
    let spatial_errors = spatial_n
        .iter()
        .map(|&n| heat_run(n, spatial_steps, horizon).map(|(g, u)| max_error(&g, &u, discrete)))
        .collect::<Result<Vec<_>>>()?;
    let exact = (-PI * PI * horizon).exp();
    let temporal_errors = temporal_steps
        .iter()
        .map(|&m| heat_run(temporal_n, m, horizon).map(|(g, u)| max_error(&g, &u, exact)))
        .collect::<Result<Vec<_>>>()?;
    let hs: Vec<f64> = spatial_n.iter().map(|&n| 1.0 / n as f64).collect();
    let dts: Vec<f64> = temporal_steps.iter().map(|&m| horizon / m as f64).collect();
    Ok(OracleReport {
        spatial_n: spatial_n.to_vec(),
        spatial_steps,
        spatial_order: fitted_order(&hs, &spatial_errors),
        spatial_errors,
        temporal_steps: temporal_steps.to_vec(),
        temporal_n,
        temporal_order: fitted_order(&dts, &temporal_errors),
        temporal_errors,
        horizon,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariationalStudy {
    /// `(n, steps)` per level, coarse to fine.
    pub levels: Vec<(usize, usize)>,
    /// Mean `|residual|` over paths per level.
    pub mean_residual: Vec<f64>,
    /// Mean `|residual| / max(|lhs|, 1)` per level.
    pub relative_residual: Vec<f64>,
    pub order: f64,
    pub rows: Vec<VariationalResidual>,
}

impl VariationalStudy {
    /// Converges at `min_order`, or sits at the rounding floor throughout.
    pub fn passed(&self, min_order: f64) -> bool {
        self.order >= min_order || self.relative_residual.iter().all(|r| *r <= 1e-12)
    }
}

/// Variational residual of `phi` under joint refinement, with every level
/// driven by the same Brownian path sampled at the finest resolution.
pub fn variational_refinement(
    cfg: &ExperimentConfig,
    phi: &TestFunction,
    levels: &[(usize, usize)],
    paths: usize,
    threads: usize,
) -> Result<VariationalStudy> {
    if levels.len() < 2 || paths == 0 {
        return Err(invalid("a refinement study needs at least two levels and one path"));
    }
    let base = levels.iter().map(|l| l.1).max().unwrap_or(1);
    let contexts: Vec<SolverContext> = levels.iter().map(|&(n, m)| build_context(cfg, n, m)).collect::<Result<_>>()?;
    let per_path = map_paths(paths, threads, |path| {
        let stream = IncrementStream::new(cfg.seed, path, base, cfg.lattice.horizon)?;
        contexts
            .iter()
            .map(|ctx| {
                let tr = run_path(ctx, stream, Retention::All, "")?;
                variational_residual(ctx, &tr, phi, &stream)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut mean_residual = vec![0.0; levels.len()];
    let mut relative_residual = vec![0.0; levels.len()];
    for rows in &per_path {
        for (j, r) in rows.iter().enumerate() {
            mean_residual[j] += r.residual.abs() / paths as f64;
            relative_residual[j] += r.residual.abs() / r.lhs.abs().max(1.0) / paths as f64;
        }
    }
    let dts: Vec<f64> = levels.iter().map(|l| cfg.lattice.horizon / l.1 as f64).collect();
    let order = if mean_residual.iter().all(|r| *r > 0.0) { fitted_order(&dts, &mean_residual) } else { f64::NAN };
    Ok(VariationalStudy {
        levels: levels.to_vec(),
        mean_residual,
        relative_residual,
        order,
        rows: per_path.into_iter().flatten().collect(),
    })
}

/// Outcome of a run: summary lines (also written to `summary.txt`) and verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub mode: Mode,
    pub fingerprint: String,
    pub seed: u64,
    pub paths: usize,
    pub lines: Vec<String>,
    pub passed: bool,
}

impl RunSummary {
    pub fn text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "mode        {}", self.mode.as_str());
        let _ = writeln!(s, "fingerprint {}", self.fingerprint);
        let _ = writeln!(s, "seed        {}", self.seed);
        let _ = writeln!(s, "paths       {}", self.paths);
        for l in &self.lines {
            let _ = writeln!(s, "{l}");
        }
        let _ = writeln!(s, "verdict     {}", if self.passed { "PASS" } else { "FAIL" });
        s
    }
}

fn create(out: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(out.join(name))?))
}

#[derive(Serialize)]
struct Manifest<'a> {
    mode: &'a str,
    fingerprint: &'a str,
    seed: u64,
    paths: usize,
    files: Vec<String>,
}

/// Validates `cfg` (after overrides) and runs `mode`, writing artifacts under `out`.
/// `validate-only` writes nothing.
pub fn run_experiment(mut cfg: ExperimentConfig, mode: Mode, out: &Path, overrides: Overrides) -> Result<RunSummary> {
    overrides.apply(&mut cfg);
    let violations = validate(&cfg);
    if !violations.is_empty() {
        return Err(Error::Config(violations));
    }
    let fingerprint = cfg.fingerprint();
    let mut summary = RunSummary {
        mode,
        fingerprint: fingerprint.clone(),
        seed: cfg.seed,
        paths: cfg.paths,
        lines: vec![],
        passed: true,
    };
    if mode == Mode::ValidateOnly {
        summary.lines.push("configuration is admissible".into());
        return Ok(summary);
    }
    if cfg.paths == 0 && mode != Mode::DeterministicOracle {
        return Err(Error::rejected(
            Anchor::ExperimentSetup,
            format!("mode {} needs at least one path", mode.as_str()),
        ));
    }
    fs::create_dir_all(out)?;
    fs::write(out.join("config.toml"), format!("# fingerprint {fingerprint}\n{}", cfg.to_toml()?))?;
    let mut files = vec!["config.toml".to_string(), "summary.txt".to_string(), "manifest.json".to_string()];
    let threads = cfg.output.threads;
    match mode {
        Mode::ValidateOnly => unreachable!(),
        Mode::Solve => {
            let ctx = build_context(&cfg, cfg.grid.n, cfg.lattice.steps)?;
            let trajectories = map_paths(cfg.paths, threads, |path| {
                let stream = IncrementStream::new(cfg.seed, path, cfg.lattice.steps, cfg.lattice.horizon)?;
                run_path(&ctx, stream, cfg.output.retention, &fingerprint)
            })?;
            let mut w = create(out, "trajectories.ndjson")?;
            for tr in &trajectories {
                tr.write_ndjson(&mut w)?;
            }
            w.flush()?;
            files.push("trajectories.ndjson".into());
            let grid = ctx.propagator.family().grid();
            for tr in trajectories.iter().take(cfg.output.state_snapshots) {
                let name = format!("state_{fingerprint}_seed{}_path{}.csv", cfg.seed, tr.path);
                crate::spatial::GridFunction::new(Arc::clone(grid), tr.final_state().to_vec())?
                    .write_csv(create(out, &name)?)?;
                files.push(name);
            }
            let l2: Vec<f64> = trajectories.iter().map(|t| t.norms.last().map_or(0.0, |n| n.l2)).collect();
            let mean = l2.iter().sum::<f64>() / l2.len() as f64;
            let ms = l2.iter().map(|v| v * v).sum::<f64>() / l2.len() as f64;
            summary.lines.push(format!("final L2 mean        {}", fmt17(mean)));
            summary.lines.push(format!("final L2 mean square {}", fmt17(ms)));
        }
        Mode::DeterministicOracle => {
            let n = cfg.grid.n.max(16);
            let m = cfg.lattice.steps.max(16);
            let report = heat_oracle(&[n / 4, n / 2, n], m, &[m / 4, m / 2, m], 2 * n, cfg.lattice.horizon)?;
            let mut w = csv::Writer::from_writer(create(out, "oracle.csv")?);
            w.write_record(["kind", "n", "steps", "error"])?;
            for (n, e) in report.spatial_n.iter().zip(&report.spatial_errors) {
                w.write_record(["spatial", &n.to_string(), &report.spatial_steps.to_string(), &fmt17(*e)])?;
            }
            for (m, e) in report.temporal_steps.iter().zip(&report.temporal_errors) {
                w.write_record(["temporal", &report.temporal_n.to_string(), &m.to_string(), &fmt17(*e)])?;
            }
            w.flush()?;
            files.push("oracle.csv".into());
            summary.lines.push(format!(
                "spatial order  {} (pairwise {:?})",
                fmt17(report.spatial_order),
                observed_orders(&report.spatial_errors)
            ));
            summary.lines.push(format!(
                "temporal order {} (pairwise {:?})",
                fmt17(report.temporal_order),
                observed_orders(&report.temporal_errors)
            ));
            summary.passed = report.passed();
        }
        Mode::VariationalCheck => {
            let (n, m) = (cfg.grid.n, cfg.lattice.steps);
            if n % 4 != 0 || m % 4 != 0 {
                return Err(invalid("variational-check refines from n/4 and steps/4; both must be divisible by 4"));
            }
            let phi = TestFunction {
                id: 0,
                time: TimeProfile::Linear { slope: 1.0 },
                space: SpaceProfile::Profile { profile: Profile::Cosine { k: [1, 0] } },
            };
            let study =
                variational_refinement(&cfg, &phi, &[(n / 4, m / 4), (n / 2, m / 2), (n, m)], cfg.paths, threads)?;
            write_residual_csv(create(out, "residuals.csv")?, &study.rows)?;
            files.push("residuals.csv".into());
            for ((nl, ml), r) in study.levels.iter().zip(&study.mean_residual) {
                summary.lines.push(format!("n={nl:<5} steps={ml:<6} mean |residual| {}", fmt17(*r)));
            }
            summary.lines.push(format!("observed order {}", fmt17(study.order)));
            summary.passed = study.passed(0.4);
        }
        Mode::RegularityStudy => {
            let ctx = build_context(&cfg, cfg.grid.n, cfg.lattice.steps)?;
            let p = cfg.study.holder_norm.unwrap_or(cfg.exponents.p);
            let report = regularity_band_check(
                &ctx,
                cfg.cap_terms(),
                cfg.exponents.delta,
                p,
                cfg.exponents.q,
                cfg.study.subtract_deterministic,
                cfg.paths,
                cfg.seed,
                threads,
                HolderOptions::default(),
            )?;
            #[derive(Serialize)]
            struct Record<'a> {
                fingerprint: &'a str,
                seed: u64,
                path: usize,
                exponent: Option<Num17>,
                r_squared: Num17,
                window: (usize, usize),
            }
            let mut w = create(out, "holder.ndjson")?;
            for (path, e) in report.estimates.iter().enumerate() {
                write_ndjson(
                    &mut w,
                    &Record {
                        fingerprint: &fingerprint,
                        seed: cfg.seed,
                        path,
                        exponent: e.exponent.map(Num17),
                        r_squared: Num17(e.r_squared),
                        window: e.window,
                    },
                )?;
            }
            w.flush()?;
            files.push("holder.ndjson".into());
            let v = &report.verdict;
            summary.lines.push(format!("cap            {} ({:?})", fmt17(v.cap), v.binding));
            summary.lines.push(format!("delta          {}", fmt17(v.delta)));
            match v.median_exponent {
                Some(m) => summary.lines.push(format!("median expo    {}", fmt17(m))),
                None => summary.lines.push("median expo    undefined (constant path)".into()),
            }
            summary.lines.push(format!("upper bound    {}", fmt17(v.upper)));
            if let Some(l) = v.lower {
                summary.lines.push(format!("lower bound    {}", fmt17(l)));
            }
            if let Some(q) = report.lq_max {
                summary.lines.push(format!("max L^q norm   {}", fmt17(q)));
            }
            summary.passed = v.passed;
        }
        Mode::ConvergenceStudy => {
            let levels = cfg.study.levels.max(3);
            let finest = cfg.lattice.steps;
            if !finest.is_multiple_of(1 << (levels - 1)) {
                return Err(invalid(format!("{finest} steps cannot be halved {} times", levels - 1)));
            }
            let steps: Vec<usize> = (0..levels).map(|j| finest >> (levels - 1 - j)).collect();
            let reference = finest * cfg.study.reference_factor.max(1);
            let build = |m: usize| build_context(&cfg, cfg.grid.n, m);
            let study = strong_convergence_study(&build, &steps, reference, cfg.paths, cfg.seed, threads)?;
            let mut w = csv::Writer::from_writer(create(out, "convergence.csv")?);
            w.write_record(["steps", "dt", "error"])?;
            for ((m, dt), e) in study.steps.iter().zip(&study.dts).zip(&study.errors) {
                w.write_record([m.to_string(), fmt17(*dt), fmt17(*e)])?;
            }
            w.flush()?;
            files.push("convergence.csv".into());
            summary.lines.push(format!("reference steps {}", study.reference_steps));
            summary.lines.push(format!("strong rate     {}", fmt17(study.rate)));
            summary.passed = study.rate >= 0.4;
        }
    }
    fs::write(out.join("summary.txt"), summary.text())?;
    let manifest = Manifest { mode: mode.as_str(), fingerprint: &fingerprint, seed: cfg.seed, paths: cfg.paths, files };
    fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(summary)
}
