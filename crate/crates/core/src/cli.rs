//! Command-line front end: configuration merging, the seven commands, and
//! the JSON summary with its exit-code contract (0 success, 1 validation or
//! admissibility failure, 2 numerical failure).

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::aeq::{evolve_unchecked, recover_potential};
use crate::afunction::{
    a_direct_series, a_field_direct, a_via_fourier_with, series_tail_bound, AFunction, FieldMethod,
    FourierConfig, MAX_SERIES_K,
};
use crate::bm::{estimate_agreement_length, weyl_difference_ray, DEFAULT_RADII};
use crate::error::{Error, Result};
use crate::fixtures;
use crate::io;
use crate::krein::{
    build_s_kernel, check_positivity, recover_v_krein, require_margin, MARGIN_FLOOR,
};
use crate::numerics::{make_uniform_grid, Grid};
use crate::verify::{run_verify, CriterionReport, VerifyOptions};
use crate::weyl::{weyl_constant_closed_form, weyl_truncated_batch, DEFAULT_MAX_STEP};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Direct,
    InvertAeq,
    InvertKrein,
    Positivity,
    Bm,
    DemoConstant,
    Verify,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Direct => "direct",
            Command::InvertAeq => "invert-aeq",
            Command::InvertKrein => "invert-krein",
            Command::Positivity => "positivity",
            Command::Bm => "bm",
            Command::DemoConstant => "demo-constant",
            Command::Verify => "verify",
        }
    }
}

/// Flat run configuration; the JSON config file uses the same keys.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub command: Option<Command>,
    pub potential_path: Option<PathBuf>,
    pub potential_b_path: Option<PathBuf>,
    pub afunction_path: Option<PathBuf>,
    #[serde(rename = "T")]
    pub t: Option<f64>,
    pub h: Option<f64>,
    pub eta: Option<f64>,
    pub kmax: Option<usize>,
    pub c: Option<f64>,
    pub a: Option<f64>,
    pub output_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub inject_branch_flip: bool,
}

#[derive(Debug, Parser)]
#[command(
    name = "dirac-afunc",
    version,
    about = "Direct and inverse spectral maps for Dirac-type systems"
)]
pub struct CliArgs {
    /// JSON file with flat RunConfig keys; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub command: Option<Command>,
    /// Right end of the working interval.
    #[arg(long = "T")]
    pub t: Option<f64>,
    /// Grid spacing.
    #[arg(long)]
    pub h: Option<f64>,
    /// Contour height for Fourier inversion.
    #[arg(long)]
    pub eta: Option<f64>,
    /// Use the truncated series with this many terms instead of Fourier inversion.
    #[arg(long)]
    pub kmax: Option<usize>,
    /// Constant level (demo-constant) or ray slope (bm).
    #[arg(long)]
    pub c: Option<f64>,
    /// Support length for demo-constant.
    #[arg(long)]
    pub a: Option<f64>,
    /// Output directory.
    #[arg(long = "out")]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub potential: Option<PathBuf>,
    /// Second potential for bm.
    #[arg(long = "potential-b")]
    pub potential_b: Option<PathBuf>,
    #[arg(long)]
    pub afunction: Option<PathBuf>,
    #[arg(long, hide = true)]
    pub inject_branch_flip: bool,
}

/// Loads the config file, if any, and lets every given flag win.
pub fn resolve(args: &CliArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
            serde_json::from_str::<RunConfig>(&text)
                .map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    macro_rules! take {
        ($($field:ident <- $flag:ident),*) => {
            $(if args.$flag.is_some() { cfg.$field = args.$flag.clone(); })*
        };
    }
    take!(command <- command, t <- t, h <- h, eta <- eta, kmax <- kmax, c <- c, a <- a,
          output_dir <- out, potential_path <- potential, potential_b_path <- potential_b,
          afunction_path <- afunction);
    cfg.inject_branch_flip |= args.inject_branch_flip;
    validate(&cfg)?;
    Ok(cfg)
}

fn validate(cfg: &RunConfig) -> Result<()> {
    let command = cfg.command.ok_or_else(|| {
        Error::Validation("no command given (--command or \"command\" in the config)".into())
    })?;
    for (name, v) in [("T", cfg.t), ("h", cfg.h), ("eta", cfg.eta), ("a", cfg.a)] {
        if let Some(x) = v {
            if !(x > 0.0) || !x.is_finite() {
                return Err(Error::Validation(format!(
                    "{name} must be positive and finite, got {x}"
                )));
            }
        }
    }
    if let Some(c) = cfg.c {
        if !c.is_finite() || (command == Command::DemoConstant && c < 0.0) {
            return Err(Error::Validation(format!("invalid c = {c}")));
        }
    }
    if let Some(k) = cfg.kmax {
        if k > MAX_SERIES_K {
            return Err(Error::Validation(format!(
                "kmax must be at most {MAX_SERIES_K}, got {k}"
            )));
        }
    }
    let need = |p: &Option<PathBuf>, flag: &str| {
        p.as_ref()
            .map(|_| ())
            .ok_or_else(|| Error::Validation(format!("{} needs --{flag}", command.name())))
    };
    match command {
        Command::Direct => need(&cfg.potential_path, "potential"),
        Command::InvertAeq | Command::InvertKrein | Command::Positivity => {
            need(&cfg.afunction_path, "afunction")
        }
        Command::Bm => {
            need(&cfg.potential_path, "potential").and(need(&cfg.potential_b_path, "potential-b"))
        }
        Command::DemoConstant | Command::Verify => Ok(()),
    }
}

/// Machine-readable result of one run.
#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub command: String,
    pub parameters: RunConfig,
    pub criteria: Vec<CriterionReport>,
    pub exit_code: i32,
}

struct Outcome {
    criteria: Vec<CriterionReport>,
    exit_code: i32,
    messages: Vec<String>,
}

impl Outcome {
    fn from_criteria(criteria: Vec<CriterionReport>, messages: Vec<String>) -> Self {
        let exit_code = if criteria.iter().all(|c| c.pass) {
            0
        } else {
            1
        };
        Self {
            criteria,
            exit_code,
            messages,
        }
    }
}

fn criterion(name: &str, measured: f64, required: &str, pass: bool) -> CriterionReport {
    CriterionReport {
        name: name.into(),
        measured,
        required: required.into(),
        pass,
        detail: String::new(),
    }
}

/// Runs a resolved configuration. Diagnostics go to stderr; the summary is
/// written to `<out>/summary.json` when an output directory is set.
pub fn run(cfg: &RunConfig) -> Summary {
    let command = cfg.command.expect("resolved configuration has a command");
    let result = out_dir(cfg).and_then(|dir| {
        let outcome = match command {
            Command::Direct => run_direct(cfg, &dir),
            Command::InvertAeq | Command::InvertKrein => {
                run_invert(cfg, &dir, command == Command::InvertKrein)
            }
            Command::Positivity => run_positivity(cfg),
            Command::Bm => run_bm(cfg, &dir),
            Command::DemoConstant => run_demo(cfg, &dir),
            Command::Verify => Ok(run_verify_command(cfg)),
        }?;
        Ok((outcome, dir))
    });
    let (criteria, exit_code) = match result {
        Ok((outcome, dir)) => {
            for m in &outcome.messages {
                eprintln!("{m}");
            }
            let summary = Summary {
                command: command.name().into(),
                parameters: cfg.clone(),
                criteria: outcome.criteria,
                exit_code: outcome.exit_code,
            };
            if let Err(e) = write_summary(&dir, &summary) {
                eprintln!("error: {e}");
                return Summary {
                    exit_code: e.exit_code(),
                    ..summary
                };
            }
            return summary;
        }
        Err(e) => {
            eprintln!("error: {e}");
            (Vec::new(), e.exit_code())
        }
    };
    Summary {
        command: command.name().into(),
        parameters: cfg.clone(),
        criteria,
        exit_code,
    }
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg
        .output_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&dir).map_err(|e| Error::Validation(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn write_summary(dir: &Path, s: &Summary) -> Result<()> {
    let text = serde_json::to_string_pretty(s)?;
    fs::write(dir.join("summary.json"), text + "\n")?;
    Ok(())
}

/// Horizontal sample line `ξ + iη`, `ξ ∈ [-10, 10]`.
fn sample_line(eta: f64) -> Vec<Complex64> {
    (0..=40)
        .map(|k| Complex64::new(-10.0 + 0.5 * k as f64, eta))
        .collect()
}

fn field_method(cfg: &RunConfig) -> FieldMethod {
    match cfg.kmax {
        Some(kmax) => FieldMethod::Series { kmax },
        None => FieldMethod::Fourier(FourierConfig {
            eta: cfg.eta,
            ..FourierConfig::default()
        }),
    }
}

/// Node count of `[0, T]` at spacing `h`.
fn nodes(t_end: f64, h: f64) -> Result<usize> {
    Ok(Grid::with_spacing(t_end, h)?.len())
}

fn run_direct(cfg: &RunConfig, dir: &Path) -> Result<Outcome> {
    let mut p = io::read_potential(cfg.potential_path.as_ref().expect("validated"))?;
    if let Some(h) = cfg.h {
        p = p.resample(h)?;
    }
    let h = p.spacing();
    let t_end = cfg.t.unwrap_or(p.support());
    let n = nodes(t_end, h)?;
    let zs = sample_line(cfg.eta.unwrap_or(1.0));
    let weyl = weyl_truncated_batch(&p, &zs, DEFAULT_MAX_STEP.min(h))?;
    io::write_weyl(&dir.join("weyl.csv"), &weyl)?;
    let field = a_field_direct(&p, t_end, n, field_method(cfg))?;
    let a0 = AFunction::new(make_uniform_grid(t_end, n)?, field.rows[0].clone())?;
    io::write_afunction(&dir.join("afunction.csv"), &a0)?;
    io::write_afield(&dir.join("afield.csv"), &field)?;

    let max_norm = weyl.iter().map(|s| s.norm()).fold(0.0, f64::max);
    let edge = field
        .left_edge()
        .iter()
        .enumerate()
        .map(|(i, a)| (a + p.value_at(i as f64 * h).adjoint() * Complex64::new(0.0, 1.0)).norm())
        .fold(0.0, f64::max);
    Ok(Outcome::from_criteria(
        vec![
            criterion(
                "contractivity",
                max_norm,
                "<= 1 + 1e-8",
                max_norm <= 1.0 + 1e-8,
            ),
            criterion("edge identity", edge, "<= 1e-3", edge <= 1e-3),
        ],
        field.warnings,
    ))
}

fn load_afunction(cfg: &RunConfig) -> Result<(AFunction, f64)> {
    let a = io::read_afunction(cfg.afunction_path.as_ref().expect("validated"))?;
    if let Some(h) = cfg.h {
        if (h - a.grid.spacing()).abs() > 1e-9 * h {
            return Err(Error::Validation(format!(
                "--h {h} differs from the 𝒜 file spacing {}",
                a.grid.spacing()
            )));
        }
    }
    let t_end = cfg.t.unwrap_or(a.grid.end());
    Ok((a, t_end))
}

fn margin_criterion(margin: f64) -> CriterionReport {
    criterion("positivity margin", margin, "> 1e-8", margin > MARGIN_FLOOR)
}

fn run_invert(cfg: &RunConfig, dir: &Path, krein: bool) -> Result<Outcome> {
    let (a, t_end) = load_afunction(cfg)?;
    let margin = check_positivity(&build_s_kernel(&a, t_end)?);
    eprintln!("positivity margin: {margin:.6e}");
    require_margin(margin)?;
    let v = if krein {
        recover_v_krein(&a, t_end)?
    } else {
        let len = a.grid.index_of(t_end).expect("checked by the kernel") + 1;
        recover_potential(&evolve_unchecked(&a.truncate(len)?)?)?
    };
    io::write_potential(&dir.join("potential.csv"), &v)?;
    Ok(Outcome::from_criteria(
        vec![margin_criterion(margin)],
        Vec::new(),
    ))
}

fn run_positivity(cfg: &RunConfig) -> Result<Outcome> {
    let (a, t_end) = load_afunction(cfg)?;
    let margin = check_positivity(&build_s_kernel(&a, t_end)?);
    println!("positivity margin: {margin:.6e}");
    Ok(Outcome::from_criteria(
        vec![margin_criterion(margin)],
        Vec::new(),
    ))
}

fn run_bm(cfg: &RunConfig, dir: &Path) -> Result<Outcome> {
    let p1 = io::read_potential(cfg.potential_path.as_ref().expect("validated"))?;
    let p2 = io::read_potential(cfg.potential_b_path.as_ref().expect("validated"))?;
    let samples = weyl_difference_ray(&p1, &p2, cfg.c.unwrap_or(0.0), &DEFAULT_RADII)?;
    io::write_ray(&dir.join("ray.csv"), &samples)?;
    let est = estimate_agreement_length(&samples)?;
    println!(
        "agreement length: {:.6}{}",
        est.length,
        if est.total_agreement {
            " (total agreement)"
        } else {
            ""
        }
    );
    let mut report = criterion(
        "agreement fit residual",
        est.fit_residual,
        "<= 0.2",
        est.warning.is_none(),
    );
    report.detail = format!("T_est = {}", est.length);
    Ok(Outcome::from_criteria(
        vec![report],
        est.warning.into_iter().collect(),
    ))
}

fn run_demo(cfg: &RunConfig, dir: &Path) -> Result<Outcome> {
    let (c, a) = (cfg.c.unwrap_or(1.0), cfg.a.unwrap_or(1.0));
    let h = cfg.h.unwrap_or(1e-2);
    let t_end = cfg.t.unwrap_or(a);
    let p = fixtures::constant(c, a, h)?;
    io::write_potential(&dir.join("potential.csv"), &p)?;

    let zs = sample_line(cfg.eta.unwrap_or(1.0));
    let weyl = weyl_truncated_batch(&p, &zs, DEFAULT_MAX_STEP.min(h))?;
    let closed = zs
        .iter()
        .map(|&z| weyl_constant_closed_form(c, a, z))
        .collect::<Result<Vec<_>>>()?;
    io::write_weyl(&dir.join("weyl.csv"), &weyl)?;
    io::write_weyl(&dir.join("weyl_closed_form.csv"), &closed)?;
    let weyl_gap = weyl
        .iter()
        .zip(&closed)
        .map(|(x, y)| (&x.phi - &y.phi).norm())
        .fold(0.0, f64::max);

    let grid = Grid::with_spacing(t_end, h)?;
    let kmax = cfg.kmax.unwrap_or(MAX_SERIES_K);
    let use_series = cfg.kmax.is_some() || series_tail_bound(c, t_end, kmax) <= 1e-3;
    // 𝒜 jumps at x = a. The series resolves the jump exactly; Fourier
    // inversion rings near it, so its oracles stop at a / 2.
    let cutoff = if use_series { a - 0.5 * h } else { 0.5 * a };
    let below_jump = move |x: f64| x < cutoff;
    let (afn, mut warnings) = if use_series {
        (a_direct_series(&p, kmax, &grid, 1e-3)?, Vec::new())
    } else {
        let fcfg = FourierConfig {
            eta: cfg.eta,
            ..FourierConfig::default()
        };
        let afn = a_via_fourier_with(&p, t_end, &fcfg)?;
        let w = afn.warnings.clone();
        (afn, w)
    };
    if !use_series {
        warnings.push(format!(
            "series tail too large; Fourier route checked on [0, {cutoff}]"
        ));
    }
    io::write_afunction(&dir.join("afunction.csv"), &afn)?;
    let oracle_gap = afn
        .samples
        .iter()
        .enumerate()
        .filter(|(j, _)| below_jump(grid.node(*j)))
        .map(|(j, s)| (s[(0, 0)] - fixtures::constant_a_oracle(c, grid.node(j))).norm())
        .fold(0.0, f64::max);

    let mut criteria = vec![
        criterion(
            "closed-form Weyl agreement",
            weyl_gap,
            "<= 1e-6",
            weyl_gap <= 1e-6,
        ),
        criterion(
            "Bessel oracle for A",
            oracle_gap,
            "<= 1e-3",
            oracle_gap <= 1e-3,
        ),
    ];
    let margin = check_positivity(&build_s_kernel(&afn, t_end)?);
    criteria.push(margin_criterion(margin));
    if margin > MARGIN_FLOOR {
        let v = recover_v_krein(&afn, t_end)?;
        io::write_potential(&dir.join("potential_recovered.csv"), &v)?;
        let err = v
            .samples()
            .iter()
            .enumerate()
            .filter(|(j, _)| below_jump(*j as f64 * h))
            .map(|(j, s)| (s - p.value_at(j as f64 * h)).norm())
            .fold(0.0, f64::max);
        criteria.push(criterion("Krein round trip", err, "<= 5e-3", err <= 5e-3));
    }
    Ok(Outcome::from_criteria(criteria, warnings))
}

fn run_verify_command(cfg: &RunConfig) -> Outcome {
    let report = run_verify(&VerifyOptions {
        inject_branch_flip: cfg.inject_branch_flip,
    });
    for c in &report.criteria {
        println!(
            "{} {}: measured {:.3e}, required {}{}",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.measured,
            c.required,
            if c.detail.is_empty() {
                String::new()
            } else {
                format!(" ({})", c.detail)
            }
        );
    }
    Outcome::from_criteria(report.criteria, Vec::new())
}

/// Parses `DIRAC_AFUNC_THREADS` and sizes the worker pool.
pub fn configure_threads_from_env() -> Result<()> {
    if let Ok(raw) = std::env::var("DIRAC_AFUNC_THREADS") {
        let n: usize = raw.trim().parse().map_err(|_| {
            Error::Validation(format!(
                "DIRAC_AFUNC_THREADS must be a positive integer, got '{raw}'"
            ))
        })?;
        crate::par::configure_threads(n).map_err(Error::Validation)?;
    }
    Ok(())
}
