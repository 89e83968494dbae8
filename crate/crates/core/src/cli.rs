//! Command line front end.
//!
//! Every subcommand prints one JSON [`RunReport`] to standard output and,
//! with `--out DIR`, writes it to `DIR/report.json` next to its CSVs.
//! Exit codes: 0 success, 2 invalid configuration, 3 numerical failure,
//! 4 unmet precondition.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::analysis::{
    classify, compare_models, monotonicity_sweep, propagation_probe, Classification, SimOptions, SweepAxis,
};
use crate::error::{Error, Result};
use crate::io::{
    ensure_dir, format_f64, out_file, parse_scenario, scenario_hash, write_csv, write_field_csv, write_ode_csv,
    write_trace_csv, RunReport,
};
use crate::ode::{averaged_params, final_size, simulate_sir_sampled, OdeParams};
use crate::pde::{run_to_extinction, RunOptions};
use crate::scenario::Scenario;
use crate::spectral::{critical_diffusivity, principal_eigenpair, threshold_operator, EigenOptions};

#[derive(Debug, Parser)]
#[command(name = "epithreshold", version, about = "Threshold analysis for heterogeneous diffusive SIR models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Principal eigenpair of the threshold operator.
    Eigen(Common),
    /// PDE run to extinction with a diagnostic trace.
    Simulate(Common),
    /// RK4 run of the spatially constant (or averaged) model.
    Ode(OdeArgs),
    /// Final size of the spatially constant (or averaged) model.
    FinalSize(OdeArgs),
    /// Diffusive and averaged classification.
    Threshold(ThresholdArgs),
    /// Critical infectious diffusivity.
    Dstar(Common),
    /// PDE final state against the averaged final size over I0 scales.
    Compare(CompareArgs),
    /// lambda1 along one parameter axis.
    Sweep(SweepArgs),
    /// Loss of susceptibles over I0 scales.
    Probe(Common),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Scenario TOML file.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Output directory for report.json and CSVs.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub tmax: Option<f64>,
    /// Cells per axis, overriding the scenario.
    #[arg(long)]
    pub grid_n: Option<usize>,
    /// Tolerance of the subcommand's main computation.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Comma-separated I0 scales.
    #[arg(long, value_delimiter = ',')]
    pub scales: Option<Vec<f64>>,
    #[arg(long)]
    pub d_lo: Option<f64>,
    #[arg(long)]
    pub d_hi: Option<f64>,
    /// Record wall-clock timings in the report.
    #[arg(long)]
    pub timings: bool,
}

#[derive(Debug, Clone, Args)]
pub struct OdeArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub mu: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub s0: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub i0: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct ThresholdArgs {
    #[command(flatten)]
    pub common: Common,
    /// Also compute the critical diffusivity when it exists.
    #[arg(long)]
    pub with_dstar: bool,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub common: Common,
    /// Step-halving levels for Richardson extrapolation (1 = none).
    #[arg(long, default_value_t = 1)]
    pub levels: usize,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    /// d_i, mu_shift, alpha_scale or s0_scale.
    #[arg(long, default_value = "d_i")]
    pub axis: String,
    #[arg(long, default_value_t = 13)]
    pub samples: usize,
    /// Start of the parameter range (d_i defaults to --d-lo).
    #[arg(long, allow_hyphen_values = true)]
    pub from: Option<f64>,
    /// End of the parameter range (d_i defaults to --d-hi).
    #[arg(long, allow_hyphen_values = true)]
    pub to: Option<f64>,
}

struct Timer {
    enabled: bool,
    start: Instant,
}

impl Timer {
    fn new(enabled: bool) -> Self {
        Self {
            enabled,
            start: Instant::now(),
        }
    }

    fn lap(&mut self, report: &mut RunReport, key: &str) {
        if self.enabled {
            report.timings.insert(key.to_string(), self.start.elapsed().as_secs_f64());
        }
        self.start = Instant::now();
    }
}

fn load(common: &Common) -> Result<Scenario> {
    let path = common
        .scenario
        .as_deref()
        .ok_or_else(|| Error::invalid("--scenario is required"))?;
    let sc = parse_scenario(path)?;
    let grid_n = common.grid_n;
    let mut numerics = sc.numerics().clone();
    if let Some(dt) = common.dt {
        numerics.dt = Some(dt);
    }
    if let Some(t) = common.tmax {
        numerics.t_max = t;
    }
    if let Some(s) = &common.scales {
        numerics.scales = s.clone();
    }
    if let Some(v) = common.d_lo {
        numerics.d_lo = v;
    }
    if let Some(v) = common.d_hi {
        numerics.d_hi = v;
    }
    sc.respec(|spec| {
        spec.numerics = numerics;
        if let Some(n) = grid_n {
            spec.domain.cells = vec![n; spec.domain.cells.len()];
        }
    })
}

fn base_report(command: &str, sc: &Scenario) -> Result<RunReport> {
    let mut r = RunReport::new(command);
    r.scenario_hash = Some(scenario_hash(sc.spec())?);
    Ok(r)
}

fn out_dir(common: &Common) -> Result<Option<&Path>> {
    match common.out.as_deref() {
        Some(d) => {
            ensure_dir(d)?;
            Ok(Some(d))
        }
        None => Ok(None),
    }
}

fn eigen(c: &Common) -> Result<RunReport> {
    let mut timer = Timer::new(c.timings);
    let mut sc = load(c)?;
    if let Some(tol) = c.tol {
        let mut n = sc.numerics().clone();
        n.eigen_tol = tol;
        sc = sc.with_numerics(n)?;
    }
    let mut r = base_report("eigen", &sc)?;
    timer.lap(&mut r, "setup");
    let eig = principal_eigenpair(&threshold_operator(&sc)?, EigenOptions::from_scenario(&sc))?;
    timer.lap(&mut r, "eigen");
    r.lambda1 = Some(eig.lambda1);
    let band = crate::analysis::critical_band(&sc);
    r.classification = Some(Classification::from_lambda(eig.lambda1, band).as_str().into());
    r.detail("residual", eig.residual)?;
    r.detail("iterations", eig.iterations)?;
    if let Some(dir) = out_dir(c)? {
        let (p, s) = out_file(dir, "phi.csv");
        write_field_csv(&p, &eig.phi)?;
        r.field_paths.insert("phi".into(), s);
    }
    Ok(r)
}

fn simulate(c: &Common) -> Result<RunReport> {
    let mut timer = Timer::new(c.timings);
    let sc = load(c)?;
    let mut opts = RunOptions::from_scenario(&sc);
    if let Some(tol) = c.tol {
        opts.tol_i = tol;
    }
    let mut r = base_report("simulate", &sc)?;
    timer.lap(&mut r, "setup");
    let res = run_to_extinction(&sc, opts)?;
    timer.lap(&mut r, "simulate");
    let avg = averaged_params(&sc)?;
    r.s_infinity = Some(res.s_infinity);
    r.s_infinity_averaged = Some(avg.final_size()?);
    r.averaged_r0 = Some(avg.r0());
    r.averaged_classification = Some(Classification::from_r0(avg.r0()).as_str().into());
    r.detail("termination", res.reason.as_str())?;
    r.detail("t_final", res.t_final)?;
    r.detail("dt", opts.dt)?;
    r.detail("terminal_flatness", res.terminal_flatness)?;
    r.detail("eta_empirical", res.invariants.eta_empirical)?;
    r.detail("harnack_k", res.invariants.harnack_k)?;
    r.detail("steps", res.invariants.steps)?;
    r.detail("mass_violations", res.invariants.mass_violations)?;
    r.detail("max_principle_violations", res.invariants.max_principle_violations)?;
    r.detail("mean_s_violations", res.invariants.mean_s_violations)?;
    if let Some(dir) = out_dir(c)? {
        let (p, s) = out_file(dir, "trace.csv");
        write_trace_csv(&p, &res.trace)?;
        r.trace_path = Some(s);
        for (name, field) in [("S_final", &res.s_final), ("I_final", &res.i_final)] {
            let (p, s) = out_file(dir, &format!("{name}.csv"));
            write_field_csv(&p, field)?;
            r.field_paths.insert(name.into(), s);
        }
    }
    Ok(r)
}

/// `(params, S0, I0)` from flags, falling back to the averaged scenario.
fn ode_inputs(a: &OdeArgs) -> Result<(OdeParams, f64, f64, Option<Scenario>)> {
    let sc = match &a.common.scenario {
        Some(_) => Some(load(&a.common)?),
        None => None,
    };
    let avg = sc.as_ref().map(averaged_params).transpose()?;
    let pick = |flag: Option<f64>, from: Option<f64>, name: &str| {
        flag.or(from)
            .ok_or_else(|| Error::invalid(format!("--{name} is required without --scenario")))
    };
    let alpha = pick(a.alpha, avg.map(|m| m.params.alpha), "alpha")?;
    let mu = pick(a.mu, avg.map(|m| m.params.mu), "mu")?;
    let s0 = pick(a.s0, avg.map(|m| m.s0), "s0")?;
    let i0 = pick(a.i0, avg.map(|m| m.i0), "i0")?;
    Ok((OdeParams::new(alpha, mu)?, s0, i0, sc))
}

fn ode_report(command: &str, sc: &Option<Scenario>) -> Result<RunReport> {
    match sc {
        Some(sc) => base_report(command, sc),
        None => Ok(RunReport::new(command)),
    }
}

fn ode(a: &OdeArgs) -> Result<RunReport> {
    let mut timer = Timer::new(a.common.timings);
    let (p, s0, i0, sc) = ode_inputs(a)?;
    let mut r = ode_report("ode", &sc)?;
    let dt = a.common.dt.unwrap_or(1e-3 / p.mu);
    let t_max = a.common.tmax.unwrap_or(1e4);
    timer.lap(&mut r, "setup");
    let run = simulate_sir_sampled(p, s0, i0, dt, t_max, 5000)?;
    timer.lap(&mut r, "ode");
    r.s_infinity = Some(run.s_infinity);
    r.s_infinity_averaged = Some(final_size(p, s0, i0)?);
    r.averaged_r0 = Some(crate::ode::basic_reproduction_number(p, s0));
    r.averaged_classification = r.averaged_r0.map(|v| Classification::from_r0(v).as_str().into());
    r.detail("invariant_drift", run.invariant_drift)?;
    r.detail("extinct", run.extinct)?;
    r.detail("dt", dt)?;
    if let Some(dir) = out_dir(&a.common)? {
        let (path, s) = out_file(dir, "ode_trajectory.csv");
        write_ode_csv(&path, &run.samples)?;
        r.trace_path = Some(s);
    }
    Ok(r)
}

fn final_size_cmd(a: &OdeArgs) -> Result<RunReport> {
    let (p, s0, i0, sc) = ode_inputs(a)?;
    let mut r = ode_report("final-size", &sc)?;
    let s = final_size(p, s0, i0)?;
    r.s_infinity = Some(s);
    r.s_infinity_averaged = Some(s);
    r.averaged_r0 = Some(crate::ode::basic_reproduction_number(p, s0));
    r.averaged_classification = r.averaged_r0.map(|v| Classification::from_r0(v).as_str().into());
    out_dir(&a.common)?;
    Ok(r)
}

fn threshold(a: &ThresholdArgs) -> Result<RunReport> {
    let mut timer = Timer::new(a.common.timings);
    let sc = load(&a.common)?;
    let mut r = base_report("threshold", &sc)?;
    timer.lap(&mut r, "setup");
    let t = classify(&sc, a.common.tol, a.with_dstar)?;
    timer.lap(&mut r, "classify");
    r.lambda1 = Some(t.lambda1);
    r.classification = Some(t.classification.as_str().into());
    r.averaged_r0 = Some(t.averaged_r0);
    r.averaged_classification = Some(t.averaged_classification.as_str().into());
    r.d_star = t.d_star;
    r.detail("critical_band", t.tol)?;
    r.detail("eigen_residual", t.eigen_residual)?;
    out_dir(&a.common)?;
    Ok(r)
}

fn dstar(c: &Common) -> Result<RunReport> {
    let mut timer = Timer::new(c.timings);
    let sc = load(c)?;
    let n = sc.numerics();
    let rel_tol = c.tol.unwrap_or(n.dstar_rel_tol);
    let mut r = base_report("dstar", &sc)?;
    timer.lap(&mut r, "setup");
    let cd = critical_diffusivity(&sc, n.d_lo, n.d_hi, rel_tol)?;
    timer.lap(&mut r, "dstar");
    r.d_star = Some(cd.d_star);
    r.lambda1 = Some(cd.lambda_at);
    let avg = averaged_params(&sc)?;
    r.averaged_r0 = Some(avg.r0());
    r.averaged_classification = Some(Classification::from_r0(avg.r0()).as_str().into());
    r.detail("bracket", [cd.bracket.0, cd.bracket.1])?;
    r.detail("evaluations", cd.evaluations)?;
    out_dir(c)?;
    Ok(r)
}

fn sim_options(sc: &Scenario) -> SimOptions {
    SimOptions::from_scenario(sc)
}

fn with_critical_tol(sc: Scenario, tol: Option<f64>) -> Result<Scenario> {
    match tol {
        Some(t) => {
            let mut n = sc.numerics().clone();
            n.critical_tol = Some(t);
            sc.with_numerics(n)
        }
        None => Ok(sc),
    }
}

fn compare(a: &CompareArgs) -> Result<RunReport> {
    let mut timer = Timer::new(a.common.timings);
    let sc = load(&a.common)?;
    let mut r = base_report("compare", &sc)?;
    timer.lap(&mut r, "setup");
    let rep = compare_models(&sc, &sc.numerics().scales.clone(), sim_options(&sc), a.levels)?;
    timer.lap(&mut r, "compare");
    if let Some(first) = rep.rows.first() {
        r.s_infinity = Some(first.s_infinity_pde);
        r.s_infinity_averaged = Some(first.s_infinity_averaged);
    }
    r.epsilon_empirical = Some(rep.epsilon_empirical);
    r.detail("gaps", rep.gaps())?;
    r.detail("homogeneous", rep.homogeneous)?;
    r.detail("strict_expected", rep.strict_expected)?;
    r.detail("violations", rep.violations)?;
    r.detail("all_converged", rep.rows.iter().all(|x| x.converged))?;
    if let Some(dir) = out_dir(&a.common)? {
        let (p, s) = out_file(dir, "comparison.csv");
        let opt = |v: Option<f64>| v.map(format_f64).unwrap_or_default();
        write_csv(
            &p,
            &["scale", "s_infinity_pde", "s_infinity_averaged", "gap", "error_estimate", "converged"],
            rep.rows.iter().map(|x| {
                vec![
                    format_f64(x.scale),
                    format_f64(x.s_infinity_pde),
                    format_f64(x.s_infinity_averaged),
                    format_f64(x.gap),
                    opt(x.error_estimate),
                    x.converged.to_string(),
                ]
            }),
        )?;
        r.table_path = Some(s);
    }
    Ok(r)
}

fn sweep(a: &SweepArgs) -> Result<RunReport> {
    let mut timer = Timer::new(a.common.timings);
    let sc = load(&a.common)?;
    let axis = SweepAxis::parse(&a.axis)?;
    let mut r = base_report("sweep", &sc)?;
    timer.lap(&mut r, "setup");
    let (lo, hi) = axis.default_range(&sc);
    let range = Some((a.from.unwrap_or(lo), a.to.unwrap_or(hi)));
    let rep = monotonicity_sweep(&sc, axis, a.samples, range)?;
    timer.lap(&mut r, "sweep");
    r.detail("axis", axis.as_str())?;
    r.detail("violations", rep.violations)?;
    r.detail("values", rep.rows.iter().map(|x| x.value).collect::<Vec<_>>())?;
    r.detail("lambda1", rep.rows.iter().map(|x| x.lambda1).collect::<Vec<_>>())?;
    if let Some(l) = rep.limits {
        r.detail("limit_small_d", l.small)?;
        r.detail("limit_large_d", l.large)?;
    }
    if let Some(dir) = out_dir(&a.common)? {
        let (p, s) = out_file(dir, "sweep.csv");
        write_csv(
            &p,
            &[axis.as_str(), "lambda1"],
            rep.rows.iter().map(|x| vec![format_f64(x.value), format_f64(x.lambda1)]),
        )?;
        r.table_path = Some(s);
    }
    if rep.violations > 0 {
        let json = r.to_json()?;
        print!("{json}");
        return Err(Error::Consistency(format!(
            "{} monotonicity violation(s) along {}",
            rep.violations,
            axis.as_str()
        )));
    }
    Ok(r)
}

fn probe(c: &Common) -> Result<RunReport> {
    let mut timer = Timer::new(c.timings);
    let sc = with_critical_tol(load(c)?, c.tol)?;
    let mut r = base_report("probe", &sc)?;
    timer.lap(&mut r, "setup");
    let rep = propagation_probe(&sc, &sc.numerics().scales.clone(), sim_options(&sc))?;
    timer.lap(&mut r, "probe");
    let t = &rep.threshold;
    r.lambda1 = Some(t.lambda1);
    r.classification = Some(t.classification.as_str().into());
    r.averaged_r0 = Some(t.averaged_r0);
    r.averaged_classification = Some(t.averaged_classification.as_str().into());
    r.epsilon_empirical = Some(rep.epsilon_empirical);
    r.detail("floor", rep.floor)?;
    r.detail("passed", rep.passed)?;
    r.detail("losses", rep.rows.iter().map(|x| x.loss).collect::<Vec<_>>())?;
    if let Some(dir) = out_dir(c)? {
        let (p, s) = out_file(dir, "probe.csv");
        write_csv(
            &p,
            &["scale", "s_infinity", "loss", "converged"],
            rep.rows.iter().map(|x| {
                vec![
                    format_f64(x.scale),
                    format_f64(x.s_infinity),
                    format_f64(x.loss),
                    x.converged.to_string(),
                ]
            }),
        )?;
        r.table_path = Some(s);
    }
    Ok(r)
}

fn common(cmd: &Command) -> &Common {
    match cmd {
        Command::Eigen(c) | Command::Simulate(c) | Command::Dstar(c) | Command::Probe(c) => c,
        Command::Ode(a) | Command::FinalSize(a) => &a.common,
        Command::Threshold(a) => &a.common,
        Command::Compare(a) => &a.common,
        Command::Sweep(a) => &a.common,
    }
}

/// Runs a parsed command and returns its report, writing `report.json`
/// under `--out` when given.
pub fn execute(cli: &Cli) -> Result<RunReport> {
    let report = match &cli.command {
        Command::Eigen(c) => eigen(c),
        Command::Simulate(c) => simulate(c),
        Command::Ode(a) => ode(a),
        Command::FinalSize(a) => final_size_cmd(a),
        Command::Threshold(a) => threshold(a),
        Command::Dstar(c) => dstar(c),
        Command::Compare(a) => compare(a),
        Command::Sweep(a) => sweep(a),
        Command::Probe(c) => probe(c),
    }?;
    if let Some(dir) = &common(&cli.command).out {
        report.write(&dir.join("report.json"))?;
    }
    Ok(report)
}

/// Parses `args` (including the program name), runs the command, prints
/// the report or the error, and returns the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli).and_then(|r| r.to_json()) {
        Ok(json) => {
            print!("{json}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
