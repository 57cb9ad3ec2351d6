//! TOML run configuration.
//!
//! Every section except `[case]` is optional and every key inside a section
//! overrides the default of the chosen case kind. Quantities are
//! dimensionless problem units.
//!
//! ```toml
//! [case]
//! kind = "light_concentrated_1d"   # benchmark | light_distributed | light_concentrated_1d
//!                                  # | light_concentrated_2d | transport
//! cells = [256]                    # [n] in 1D, [nx, ny] in 2D
//! t_final = 10.0
//! dt = 0.1
//!
//! [coefficients]
//! gamma = 0.015
//!
//! [weights]
//! beta1 = 1e-6
//!
//! [control]
//! profile = "constant"             # constant | per_level
//! initial = 0.0
//!
//! [target]
//! generate = "constant"            # constant | exponential | parabolic
//! amplitude = 5.0
//!
//! [optimizer]
//! tol = 1e-6
//! max_iter = 100
//! step = "armijo"                  # armijo | fixed
//! alpha0 = 1.0
//!
//! [output]
//! directory = "out/light"
//! formats = ["csv", "vtk"]
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::cases::{
    benchmark_case, light_case, transport_case, AssignedControl, BenchmarkParams, CaseDefinition, CaseKind,
    ChannelFlow, LightParams, TransportParams,
};
use crate::error::{OcpError, Result};
use crate::optimize::{Control, OptimizerOptions, StepPolicy, TimeProfile};

use super::output::read_field_csv;
use super::velocity::read_velocity_file;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseSection {
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cells: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_final: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    /// Relative tolerance of the linear solves.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solver_tol: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientsSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub drug_diffusion: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub light_diffusion: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub absorption: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub light_speed: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound_extent: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound_value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diffusivity: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta3: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSection {
    /// Must match the case when given: `distributed`, `boundary_trace` or
    /// `boundary_scalar`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub profile: Option<String>,
    /// Constant initial guess.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSection {
    /// CSV written by `state_final.csv`; replaces the generated target.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generate: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VelocitySection {
    /// `analytic` or `file`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_speed: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pulsation: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub period: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub band_ratio: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha0: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub directory: Option<String>,
    /// Any of `csv` (always written) and `vtk`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub formats: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub case: CaseSection,
    #[serde(default, skip_serializing_if = "is_default")]
    pub coefficients: CoefficientsSection,
    #[serde(default, skip_serializing_if = "is_default")]
    pub weights: WeightsSection,
    #[serde(default, skip_serializing_if = "is_default")]
    pub control: ControlSection,
    #[serde(default, skip_serializing_if = "is_default")]
    pub target: TargetSection,
    #[serde(default, skip_serializing_if = "is_default")]
    pub velocity: VelocitySection,
    #[serde(default, skip_serializing_if = "is_default")]
    pub optimizer: OptimizerSection,
    #[serde(default, skip_serializing_if = "is_default")]
    pub output: OutputSection,
}

fn is_default<T: Default + PartialEq>(v: &T) -> bool {
    *v == T::default()
}

#[derive(Clone, Copy, PartialEq)]
enum Ty {
    Str,
    Num,
    Int,
    IntList,
    StrList,
}

const SCHEMA: &[(&str, &[(&str, Ty)])] = &[
    (
        "case",
        &[
            ("kind", Ty::Str),
            ("name", Ty::Str),
            ("cells", Ty::IntList),
            ("t_final", Ty::Num),
            ("dt", Ty::Num),
            ("solver_tol", Ty::Num),
        ],
    ),
    (
        "coefficients",
        &[
            ("epsilon", Ty::Num),
            ("drug_diffusion", Ty::Num),
            ("gamma", Ty::Num),
            ("light_diffusion", Ty::Num),
            ("absorption", Ty::Num),
            ("light_speed", Ty::Num),
            ("bound_extent", Ty::Num),
            ("bound_value", Ty::Num),
            ("diffusivity", Ty::Num),
        ],
    ),
    ("weights", &[("beta1", Ty::Num), ("beta2", Ty::Num), ("beta3", Ty::Num)]),
    (
        "control",
        &[("kind", Ty::Str), ("profile", Ty::Str), ("initial", Ty::Num)],
    ),
    (
        "target",
        &[
            ("path", Ty::Str),
            ("generate", Ty::Str),
            ("amplitude", Ty::Num),
            ("rate", Ty::Num),
        ],
    ),
    (
        "velocity",
        &[
            ("source", Ty::Str),
            ("path", Ty::Str),
            ("mean_speed", Ty::Num),
            ("pulsation", Ty::Num),
            ("period", Ty::Num),
            ("band_ratio", Ty::Num),
        ],
    ),
    (
        "optimizer",
        &[
            ("tol", Ty::Num),
            ("max_iter", Ty::Int),
            ("step", Ty::Str),
            ("alpha0", Ty::Num),
        ],
    ),
    ("output", &[("directory", Ty::Str), ("formats", Ty::StrList)]),
];

fn type_ok(v: &Value, ty: Ty) -> bool {
    match ty {
        Ty::Str => v.is_str(),
        Ty::Num => v.is_float() || v.is_integer(),
        Ty::Int => v.as_integer().is_some_and(|i| i >= 0),
        Ty::StrList => v.as_array().is_some_and(|a| a.iter().all(Value::is_str)),
        Ty::IntList => v
            .as_array()
            .is_some_and(|a| a.iter().all(|x| x.as_integer().is_some_and(|i| i > 0))),
    }
}

fn type_name(ty: Ty) -> &'static str {
    match ty {
        Ty::Str => "a string",
        Ty::Num => "a number",
        Ty::Int => "a non-negative integer",
        Ty::StrList => "a list of strings",
        Ty::IntList => "a list of positive integers",
    }
}

/// Structural check against the schema, reporting every problem with its key path.
fn check_schema(doc: &Table) -> Vec<String> {
    let mut errors = Vec::new();
    for (key, _) in doc.iter().filter(|(k, _)| !SCHEMA.iter().any(|(s, _)| s == k)) {
        errors.push(format!("{key}: unknown section"));
    }
    for (section, keys) in SCHEMA {
        let Some(value) = doc.get(*section) else {
            if *section == "case" {
                errors.push("[case]: missing required section".into());
            }
            continue;
        };
        let Some(table) = value.as_table() else {
            errors.push(format!("{section}: expected a table"));
            continue;
        };
        for (key, v) in table {
            match keys.iter().find(|(k, _)| k == key) {
                None => errors.push(format!("{section}.{key}: unknown key")),
                Some((_, ty)) if !type_ok(v, *ty) => {
                    errors.push(format!("{section}.{key}: expected {}", type_name(*ty)))
                }
                _ => {}
            }
        }
        if *section == "case" && !table.contains_key("kind") {
            errors.push("case.kind: missing required key".into());
        }
    }
    errors
}

/// Kind-level checks that need values rather than structure.
fn check_values(cfg: &RunConfig) -> Vec<String> {
    let mut errors = Vec::new();
    let kind = CaseKind::parse(&cfg.case.kind);
    if kind.is_none() {
        errors.push(format!("case.kind: unknown kind `{}`", cfg.case.kind));
    }
    if let (Some(tf), Some(dt)) = (cfg.case.t_final, cfg.case.dt) {
        if let Err(e) = CaseDefinition::steps_for(tf, dt) {
            errors.push(format!("case.dt: {e}"));
        }
    }
    if let Some(cells) = &cfg.case.cells {
        let want = match kind {
            Some(CaseKind::Benchmark) => Some(1),
            Some(CaseKind::LightDistributed | CaseKind::LightConcentrated1d) => Some(1),
            Some(CaseKind::LightConcentrated2d | CaseKind::Transport) => Some(2),
            None => None,
        };
        if want.is_some_and(|w| cells.len() != w) {
            errors.push(format!("case.cells: expected {} entries", want.unwrap_or(0)));
        }
    }
    let check_choice = |errors: &mut Vec<String>, path: &str, v: &Option<String>, allowed: &[&str]| {
        if let Some(s) = v {
            if !allowed.contains(&s.as_str()) {
                errors.push(format!("{path}: `{s}` is not one of {}", allowed.join(", ")));
            }
        }
    };
    check_choice(
        &mut errors,
        "control.kind",
        &cfg.control.kind,
        &["distributed", "boundary_trace", "boundary_scalar"],
    );
    if let (Some(k), Some(case_kind)) = (&cfg.control.kind, kind) {
        let expected = match case_kind {
            CaseKind::Benchmark | CaseKind::LightDistributed => "distributed",
            CaseKind::LightConcentrated1d | CaseKind::Transport => "boundary_scalar",
            CaseKind::LightConcentrated2d => "boundary_trace",
        };
        if k != expected {
            errors.push(format!(
                "control.kind: kind `{}` uses a {expected} control",
                cfg.case.kind
            ));
        }
    }
    for f in cfg.output.formats.iter().flatten() {
        if !["csv", "vtk"].contains(&f.as_str()) {
            errors.push(format!("output.formats: `{f}` is not one of csv, vtk"));
        }
    }
    check_choice(
        &mut errors,
        "control.profile",
        &cfg.control.profile,
        &["constant", "per_level"],
    );
    check_choice(
        &mut errors,
        "target.generate",
        &cfg.target.generate,
        &["constant", "exponential", "parabolic"],
    );
    check_choice(
        &mut errors,
        "velocity.source",
        &cfg.velocity.source,
        &["analytic", "file"],
    );
    check_choice(&mut errors, "optimizer.step", &cfg.optimizer.step, &["armijo", "fixed"]);
    if cfg.velocity.source.as_deref() == Some("file") && cfg.velocity.path.is_none() {
        errors.push("velocity.path: required when velocity.source = \"file\"".into());
    }
    if cfg.target.path.is_some() && cfg.target.generate.is_some() {
        errors.push("target: give either path or generate, not both".into());
    }
    let benchmark = kind == Some(CaseKind::Benchmark);
    let transport = kind == Some(CaseKind::Transport);
    let light = !benchmark && !transport && kind.is_some();
    let c = &cfg.coefficients;
    let only = |errors: &mut Vec<String>, present: bool, key: &str, ok: bool| {
        if present && !ok {
            errors.push(format!("coefficients.{key}: not used by kind `{}`", cfg.case.kind));
        }
    };
    only(&mut errors, c.epsilon.is_some(), "epsilon", benchmark);
    only(&mut errors, c.diffusivity.is_some(), "diffusivity", transport);
    for (key, present) in [
        ("drug_diffusion", c.drug_diffusion.is_some()),
        ("gamma", c.gamma.is_some()),
        ("light_diffusion", c.light_diffusion.is_some()),
        ("absorption", c.absorption.is_some()),
        ("light_speed", c.light_speed.is_some()),
        ("bound_extent", c.bound_extent.is_some()),
        ("bound_value", c.bound_value.is_some()),
    ] {
        only(&mut errors, present, key, light);
    }
    if (benchmark || light) && cfg.velocity != VelocitySection::default() {
        errors.push(format!("velocity: not used by kind `{}`", cfg.case.kind));
    }
    if benchmark && cfg.target != TargetSection::default() {
        errors.push("target: the benchmark target is analytic".into());
    }
    errors
}

/// Parses and validates a configuration document.
pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let doc: Table = text
        .parse()
        .map_err(|e: toml::de::Error| OcpError::Parse(e.to_string()))?;
    let errors = check_schema(&doc);
    if !errors.is_empty() {
        return Err(OcpError::Config(errors));
    }
    let cfg: RunConfig = Value::Table(doc)
        .try_into()
        .map_err(|e: toml::de::Error| OcpError::Config(vec![e.to_string()]))?;
    let errors = check_values(&cfg);
    if !errors.is_empty() {
        return Err(OcpError::Config(errors));
    }
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text)
}

pub fn to_toml(cfg: &RunConfig) -> String {
    toml::to_string(cfg).expect("configuration always serializes")
}

/// Everything a run needs, resolved from a configuration.
#[derive(Debug, Clone)]
pub struct RunSetup {
    pub case: CaseDefinition,
    pub initial: Control,
    pub options: OptimizerOptions,
    pub output_dir: PathBuf,
    pub vtk: bool,
}

fn set<T: Copy>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn profile(cfg: &RunConfig) -> Option<TimeProfile> {
    cfg.control.profile.as_deref().map(|p| match p {
        "per_level" => TimeProfile::PerLevel,
        _ => TimeProfile::Constant,
    })
}

fn assigned(cfg: &RunConfig, default: AssignedControl) -> AssignedControl {
    let t = &cfg.target;
    let amplitude = t.amplitude.unwrap_or(match default {
        AssignedControl::Constant(v) => v,
        AssignedControl::Exponential { amplitude, .. } | AssignedControl::Parabolic { amplitude } => amplitude,
    });
    match t.generate.as_deref() {
        Some("constant") => AssignedControl::Constant(amplitude),
        Some("exponential") => AssignedControl::Exponential {
            amplitude,
            rate: t.rate.unwrap_or(4.0),
        },
        Some("parabolic") => AssignedControl::Parabolic { amplitude },
        _ => match default {
            AssignedControl::Constant(_) => AssignedControl::Constant(amplitude),
            AssignedControl::Exponential { rate, .. } => AssignedControl::Exponential {
                amplitude,
                rate: t.rate.unwrap_or(rate),
            },
            AssignedControl::Parabolic { .. } => AssignedControl::Parabolic { amplitude },
        },
    }
}

/// Builds the case described by `cfg`; relative paths resolve against `base`.
pub fn build_case(cfg: &RunConfig, base: &Path) -> Result<CaseDefinition> {
    let kind = CaseKind::parse(&cfg.case.kind)
        .ok_or_else(|| OcpError::Config(vec![format!("case.kind: unknown kind `{}`", cfg.case.kind)]))?;
    let c = &cfg.coefficients;
    let w = &cfg.weights;
    let cells = cfg.case.cells.clone();
    let mut case = match kind {
        CaseKind::Benchmark => {
            let n = cells.as_ref().map_or(32, |c| c[0]);
            let mut p = BenchmarkParams::new(c.epsilon.unwrap_or(1.0), n);
            p.name = cfg.case.name.clone();
            set(&mut p.t_final, cfg.case.t_final);
            p.dt = cfg.case.dt;
            set(&mut p.beta1, w.beta1);
            set(&mut p.beta2, w.beta2);
            set(&mut p.solver_tol, cfg.case.solver_tol);
            let mut case = benchmark_case(&p)?;
            if let Some(pr) = profile(cfg) {
                case.control.profile = pr;
            }
            case
        }
        CaseKind::LightDistributed | CaseKind::LightConcentrated1d | CaseKind::LightConcentrated2d => {
            let beta1 = w.beta1.unwrap_or(1e-6);
            let mut p = match kind {
                CaseKind::LightDistributed => LightParams::distributed(5.0, beta1),
                CaseKind::LightConcentrated1d => LightParams::concentrated_1d(5.0, beta1),
                _ => LightParams::concentrated_2d(5.0, beta1),
            };
            p.name = cfg.case.name.clone();
            if let Some(cells) = &cells {
                p.cells = [cells[0], cells.get(1).copied().unwrap_or(1)];
            }
            set(&mut p.t_final, cfg.case.t_final);
            set(&mut p.dt, cfg.case.dt);
            set(&mut p.drug_diffusion, c.drug_diffusion);
            set(&mut p.gamma, c.gamma);
            set(&mut p.light_diffusion, c.light_diffusion);
            set(&mut p.absorption, c.absorption);
            set(&mut p.light_speed, c.light_speed);
            set(&mut p.bound_extent, c.bound_extent);
            set(&mut p.bound_value, c.bound_value);
            set(&mut p.beta3, w.beta3);
            set(&mut p.solver_tol, cfg.case.solver_tol);
            if let Some(pr) = profile(cfg) {
                p.profile = pr;
            }
            p.assigned = assigned(cfg, p.assigned);
            light_case(&p)?
        }
        CaseKind::Transport => {
            let mut p = TransportParams {
                name: cfg.case.name.clone(),
                ..TransportParams::default()
            };
            if let Some(cells) = &cells {
                p.cells = [cells[0], cells[1]];
            }
            set(&mut p.t_final, cfg.case.t_final);
            set(&mut p.dt, cfg.case.dt);
            set(&mut p.diffusivity, c.diffusivity);
            set(&mut p.beta1, w.beta1);
            set(&mut p.beta3, w.beta3);
            set(&mut p.solver_tol, cfg.case.solver_tol);
            let v = &cfg.velocity;
            let flow: &mut ChannelFlow = &mut p.flow;
            set(&mut flow.mean_speed, v.mean_speed);
            set(&mut flow.pulsation, v.pulsation);
            set(&mut flow.period, v.period);
            set(&mut flow.band_ratio, v.band_ratio);
            match assigned(cfg, AssignedControl::Constant(p.assigned)) {
                AssignedControl::Constant(a) => p.assigned = a,
                _ => {
                    return Err(OcpError::Config(vec![
                        "target.generate: the transport control is a constant".into(),
                    ]))
                }
            }
            let velocity = match (v.source.as_deref(), &v.path) {
                (Some("file"), Some(path)) => {
                    let grid = std::sync::Arc::new(crate::cases::transport_grid(&p)?);
                    let v = read_velocity_file(&base.join(path), &grid)?;
                    let n = CaseDefinition::steps_for(p.t_final, p.dt)?;
                    if v.n_steps() != n || (v.dt() - p.dt).abs() > 1e-12 * p.dt {
                        return Err(OcpError::Config(vec![format!(
                            "velocity.path: file has {} steps of {}, the case needs {n} of {}",
                            v.n_steps(),
                            v.dt(),
                            p.dt
                        )]));
                    }
                    Some(v)
                }
                _ => None,
            };
            let mut case = transport_case(&p, velocity)?;
            if let Some(pr) = profile(cfg) {
                case.control.profile = pr;
            }
            case
        }
    };
    if let Some(path) = &cfg.target.path {
        let target = read_field_csv(&base.join(path), &case.grid)?;
        // The assigned control no longer produced the target.
        case = case.with_terminal_target(target)?;
        case.reference = None;
    }
    case.check_consistency()?;
    Ok(case)
}

pub fn optimizer_options(cfg: &RunConfig, case: &CaseDefinition) -> OptimizerOptions {
    let o = &cfg.optimizer;
    let mut opts = OptimizerOptions::default();
    if case.kind() == CaseKind::Benchmark {
        opts = crate::cases::benchmark_options(case.weights.beta1);
    }
    set(&mut opts.tol, o.tol);
    set(&mut opts.max_iter, o.max_iter);
    let alpha = o.alpha0.unwrap_or(match opts.step {
        StepPolicy::Fixed(a) | StepPolicy::Armijo { alpha0: a } => a,
    });
    opts.step = match o.step.as_deref() {
        Some("fixed") => StepPolicy::Fixed(alpha),
        Some("armijo") => StepPolicy::Armijo { alpha0: alpha },
        _ => match opts.step {
            StepPolicy::Fixed(_) => StepPolicy::Fixed(alpha),
            StepPolicy::Armijo { .. } => StepPolicy::Armijo { alpha0: alpha },
        },
    };
    opts
}

/// Case, initial control, optimizer options and output location.
pub fn resolve(cfg: &RunConfig, base: &Path) -> Result<RunSetup> {
    let case = build_case(cfg, base)?;
    let initial = Control::constant(
        case.control,
        case.grid.clone(),
        case.dt,
        case.n_steps,
        cfg.control.initial.unwrap_or(0.0),
    )?;
    let options = optimizer_options(cfg, &case);
    let output_dir = cfg
        .output
        .directory
        .as_ref()
        .map(|d| base.join(d))
        .unwrap_or_else(|| base.join("out").join(&case.name));
    Ok(RunSetup {
        case,
        initial,
        options,
        output_dir,
        vtk: cfg.output.formats.iter().flatten().any(|f| f == "vtk"),
    })
}
