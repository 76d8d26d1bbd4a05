//! Experiment files: a TOML document with nested sections.
//!
//! Unknown keys are rejected everywhere. Validation collects every violated
//! admissibility condition, each tagged with the [`Anchor`] it comes from.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::boundary::BoundaryKind;
use crate::diagnostics::{regularity_cap, CapTerms};
use crate::elliptic::{validate_assumptions, CoefficientField, Coefficients};
use crate::error::{Anchor, Error, Result, Violation};
use crate::noise::{validate_example, ExampleRegime, ModeBasis, DEFAULT_MODES};
use crate::solver::{self, Retention};
use crate::spatial::Dimension;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub paths: usize,
    pub grid: GridSection,
    pub lattice: LatticeSection,
    pub operator: OperatorSection,
    pub exponents: Exponents,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub nonlinearities: solver::Coefficients,
    #[serde(default)]
    pub initial: InitialCondition,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regime: Option<ExampleRegime>,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub study: StudySection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub dimension: usize,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSection {
    pub horizon: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorSection {
    #[serde(default)]
    pub boundary_condition: BoundaryKind,
    pub shift: f64,
    pub coefficients: Coefficients,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Exponents {
    pub p: f64,
    pub alpha: f64,
    #[serde(default)]
    pub theta_b: f64,
    pub theta_c: f64,
    pub theta_g: f64,
    #[serde(default)]
    pub a: f64,
    #[serde(default)]
    pub delta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    #[serde(default)]
    pub interior: NoiseSpec,
    #[serde(default)]
    pub boundary: NoiseSpec,
}

fn default_modes() -> usize {
    DEFAULT_MODES
}

fn two() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseSpec {
    #[default]
    None,
    /// `λ_n = amplitude·n^{−decay}` on the built-in basis.
    PowerLaw {
        amplitude: f64,
        decay: f64,
        #[serde(default = "default_modes")]
        modes: usize,
        #[serde(default)]
        basis: ModeBasis,
        #[serde(default = "two")]
        exponent: f64,
    },
    /// Eigenvalues from a CSV file with columns `n,lambda`.
    Table {
        file: PathBuf,
        #[serde(default)]
        basis: ModeBasis,
        #[serde(default = "two")]
        exponent: f64,
    },
    /// Cylindrical (space-time white) noise.
    White,
}

impl NoiseSpec {
    pub fn is_none(&self) -> bool {
        matches!(self, NoiseSpec::None)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    #[default]
    Zero,
    Constant {
        value: f64,
    },
    CosMode {
        k: [u32; 2],
    },
    /// `Σ_{k<modes} ξ_k (1+k)^{−2} cos(kπs₁)` with fixed-seed normals `ξ_k`.
    RandomSmooth {
        modes: usize,
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default)]
    pub retention: Retention,
    /// Worker threads for path fan-out.
    #[serde(default = "one_thread")]
    pub threads: usize,
    /// Paths whose final state is written as CSV.
    #[serde(default)]
    pub state_snapshots: usize,
}

fn one_thread() -> usize {
    1
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { retention: Retention::Final, threads: 1, state_snapshots: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySection {
    /// Number of coarse dyadic levels below the finest lattice.
    #[serde(default = "three")]
    pub levels: usize,
    /// Reference resolution is `steps · reference_factor`.
    #[serde(default = "eight")]
    pub reference_factor: usize,
    /// Integrability exponent of the norm used for Hölder estimation; defaults to `p`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub holder_norm: Option<f64>,
    /// Subtract `P(·,0)u0` before estimating the exponent.
    #[serde(default = "yes")]
    pub subtract_deterministic: bool,
}

fn three() -> usize {
    3
}
fn eight() -> usize {
    8
}
fn yes() -> bool {
    true
}

impl Default for StudySection {
    fn default() -> Self {
        Self { levels: 3, reference_factor: 8, holder_norm: None, subtract_deterministic: true }
    }
}

impl ExperimentConfig {
    pub fn dimension(&self) -> Result<Dimension> {
        Dimension::from_usize(self.grid.dimension)
    }

    /// Terms entering the regularity cap: a term is active when its coefficient
    /// is nonzero and (for the noise terms) its noise is present.
    pub fn cap_terms(&self) -> CapTerms {
        let nl = &self.nonlinearities;
        CapTerms {
            theta_g: (!nl.g.is_zero()).then_some(self.exponents.theta_g),
            theta_b: (!nl.b.is_zero() && !self.noise.interior.is_none()).then_some(self.exponents.theta_b),
            theta_c: (!nl.c.is_zero() && !self.noise.boundary.is_none()).then_some(self.exponents.theta_c),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    /// First 16 hex digits of the SHA-256 of the canonical serialization.
    /// The worker count does not change results and is left out.
    pub fn fingerprint(&self) -> String {
        let mut canonical = self.clone();
        canonical.output.threads = 1;
        let text = canonical.to_toml().unwrap_or_default();
        hex::encode(Sha256::digest(text.as_bytes()))[..16].to_string()
    }

    /// Resolves relative table paths against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        for spec in [&mut self.noise.interior, &mut self.noise.boundary] {
            if let NoiseSpec::Table { file, .. } = spec {
                if file.is_relative() {
                    *file = base.join(&*file);
                }
            }
        }
    }
}

/// Parses and validates a configuration, reporting every violation at once.
pub fn parse_and_validate(text: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let violations = validate(&cfg);
    if violations.is_empty() {
        Ok(cfg)
    } else {
        Err(Error::Config(violations))
    }
}

pub fn load(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    let mut cfg = parse_and_validate(&text)?;
    cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
    Ok(cfg)
}

pub fn validate(cfg: &ExperimentConfig) -> Vec<Violation> {
    let mut v = Vec::new();
    let mut push = |anchor: Anchor, msg: String| v.push(Violation::new(anchor, msg));

    // structure
    let d = cfg.grid.dimension;
    if d != 1 && d != 2 {
        push(Anchor::ExperimentSetup, format!("grid dimension must be 1 or 2, got {d}"));
    }
    if cfg.grid.n < 4 {
        push(Anchor::ExperimentSetup, format!("grid needs at least 4 cells per axis, got {}", cfg.grid.n));
    }
    if cfg.lattice.steps < 2 || !(cfg.lattice.horizon > 0.0 && cfg.lattice.horizon.is_finite()) {
        push(Anchor::ExperimentSetup, "lattice needs a positive horizon and at least 2 steps".into());
    }
    if cfg.paths == 0 {
        push(Anchor::ExperimentSetup, "path count must be at least 1".into());
    }
    if cfg.output.threads == 0 {
        push(Anchor::ExperimentSetup, "thread count must be at least 1".into());
    }
    if !(cfg.operator.shift >= 0.0 && cfg.operator.shift.is_finite()) {
        push(Anchor::ShiftedSpectrum, format!("shift w must be finite and non-negative, got {}", cfg.operator.shift));
    }
    if cfg.operator.boundary_condition == BoundaryKind::Dirichlet {
        push(
            Anchor::DirichletExcluded,
            "Dirichlet boundary conditions cannot be handled: the Dirichlet map does not reach the needed extrapolation space".into(),
        );
    }

    // exponents
    let e = &cfg.exponents;
    if !(e.p >= 2.0 && e.p.is_finite()) {
        push(Anchor::RegularityHypotheses, format!("p = {} must lie in [2, ∞)", e.p));
    } else if !(e.alpha > 1.0 && e.alpha < 1.0 + 1.0 / e.p) {
        push(
            Anchor::RegularityHypotheses,
            format!("α = {} must lie in (1, 1 + 1/p) = (1, {})", e.alpha, 1.0 + 1.0 / e.p),
        );
    } else {
        let lo = 1.0 - e.alpha / 2.0;
        if !(e.theta_c > lo && e.theta_c < 0.5) {
            push(Anchor::RegularityHypotheses, format!("θ_C = {} must lie in (1 − α/2, ½) = ({lo}, 0.5)", e.theta_c));
        }
        if !(e.theta_g > lo && e.theta_g < 1.0) {
            push(Anchor::RegularityHypotheses, format!("θ_G = {} must lie in (1 − α/2, 1) = ({lo}, 1)", e.theta_g));
        }
    }
    if !(e.theta_b >= 0.0 && e.theta_b < 0.5) {
        push(Anchor::RegularityHypotheses, format!("θ_B = {} must lie in [0, ½)", e.theta_b));
    }
    if e.a != 0.0 {
        push(Anchor::RegularityHypotheses, format!("only a = 0 is supported, got {}", e.a));
    }
    let (cap, _) = regularity_cap(cfg.cap_terms());
    if !(e.delta >= 0.0 && e.delta < cap) {
        push(Anchor::RegularityCap, format!("δ = {} must lie in [0, {cap}) for the active terms", e.delta));
    }
    if let Some(q) = e.q {
        if d >= 2 {
            let bound = d as f64 * e.p / (d as f64 - 1.0);
            if !(q >= 1.0 && q < bound) {
                push(Anchor::LqEmbedding, format!("q = {q} must lie in [1, dp/(d−1)) = [1, {bound})"));
            }
        } else if !(q >= 1.0) {
            push(Anchor::LqEmbedding, format!("q = {q} must be at least 1"));
        }
    }

    // coefficients
    if let Ok(dim) = Dimension::from_usize(d) {
        let c = &cfg.operator.coefficients;
        if c.ellipticity() <= 0.0 {
            push(Anchor::Ellipticity, format!("claimed ellipticity constant κ = {} must be positive", c.ellipticity()));
        } else if let Ok(report) = validate_assumptions(c, dim, cfg.lattice.horizon.max(1e-12), 64, 33) {
            if !report.ellipticity_ok {
                push(
                    Anchor::Ellipticity,
                    format!(
                        "sampled ellipticity {} falls below the claimed κ = {}",
                        report.kappa_fit, report.kappa_claimed
                    ),
                );
            }
        }
        if let Coefficients::Diagonal { .. } = c {
            if dim == Dimension::One {
                push(Anchor::ExperimentSetup, "diagonal tensors need a two-dimensional grid".into());
            }
        }
    }

    // noise
    if let NoiseSpec::White = cfg.noise.interior {
        let r = validate_example(&ExampleRegime::White { d, p: e.p, theta_b: e.theta_b }).expect("white regime");
        v.extend(r.violations);
    }
    if let NoiseSpec::White = cfg.noise.boundary {
        v.push(Violation::new(Anchor::WhiteNoiseOneDim, "white noise is only admissible in the interior"));
    }
    for (spec, boundary) in [(&cfg.noise.interior, false), (&cfg.noise.boundary, true)] {
        if let NoiseSpec::PowerLaw { amplitude, decay, modes, .. } = spec {
            if !(*amplitude >= 0.0) || *modes == 0 {
                v.push(Violation::new(
                    Anchor::ExperimentSetup,
                    "power-law noise needs amplitude ≥ 0 and at least one mode",
                ));
            } else if boundary && *decay <= 1.0 && *amplitude > 0.0 {
                v.push(Violation::new(
                    Anchor::SummableBoundaryCovariance,
                    format!("λ_n ∝ n^-{decay} with bounded modes gives a divergent Σ λ_n ‖e_n‖_∞²"),
                ));
            }
        }
    }
    if let Some(regime) = &cfg.regime {
        match validate_example(regime) {
            Ok(r) => v.extend(r.violations),
            Err(e) => v.push(Violation::new(Anchor::ExperimentSetup, e.to_string())),
        }
    }
    v
}
