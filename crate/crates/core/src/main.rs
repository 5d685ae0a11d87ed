use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use hslab::scenario::{data_characters, parse_scenario, resolve_q_star, Axis, Scenario};
use hslab::solver::{run, Outcome, Trajectory};
use hslab::suite::run_inequality_suite;
use hslab::theory::{
    bootstrap_case, fit_decay_exponent, fourier_splitting_check, kato_weighted_norm, rate_predictor, BootstrapCase,
    DecayReport, RatePrediction, Regime,
};

const EXIT_SCIENCE: u8 = 1;
const EXIT_UNDECIDED: u8 = 2;
const EXIT_VALIDATION: u8 = 3;

#[derive(Parser)]
#[command(name = "hslab", version, about = "Radial lab for the Hardy-Sobolev heat flow")]
struct Cli {
    /// Scenario file (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory; overrides the scenario's output_dir.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads for sweeps and corpus checks.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Overrides the scenario seed.
    #[arg(long, global = true, value_name = "K")]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Run the flow and write the trajectory, reports and plot files.
    Simulate,
    /// Estimate the decay characters of u0 and Lambda u0.
    DecayCharacter,
    /// Run the inequality suite on the seeded corpus.
    CheckInequalities,
    /// Predict the decay rate.
    Predict,
    /// Run the scenario across the sweep axis.
    Sweep,
}

enum Failure {
    Validation(anyhow::Error),
    Science(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Science(e)
    }
}

fn validation(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Validation(e.into())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_VALIDATION),
            };
        }
    };
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Validation(e)) => {
            eprintln!("validation error: {e:#}");
            ExitCode::from(EXIT_VALIDATION)
        }
        Err(Failure::Science(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_SCIENCE)
        }
    }
}

fn load(cli: &Cli) -> Result<(Scenario, PathBuf), Failure> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| validation(anyhow!("--config PATH is required")))?;
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(validation)?;
    let mut sc = parse_scenario(&text).map_err(validation)?;
    if let Some(seed) = cli.seed {
        sc.seed = seed;
    }
    sc.validate().map_err(validation)?;
    match cli.command {
        Command::Sweep if sc.sweep.is_none() => {
            return Err(validation(anyhow!("invalid sweep: the scenario has no sweep section")))
        }
        Command::CheckInequalities => {
            let iq = sc.inequalities.clone().unwrap_or_default();
            if iq.rellich && sc.params.d < 5 {
                return Err(validation(anyhow!(
                    "invalid params.d: the Rellich check needs d >= 5, got {}",
                    sc.params.d
                )));
            }
        }
        Command::Predict if sc.params.d < 5 => {
            return Err(validation(anyhow!(
                "invalid params.d: the decay theorem needs d >= 5, got {}",
                sc.params.d
            )))
        }
        _ => {}
    }
    if let Some(0) = cli.threads {
        return Err(validation(anyhow!("invalid --threads: must be at least 1")));
    }
    let out = cli
        .out
        .clone()
        .or_else(|| sc.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    Ok((sc, out))
}

fn dispatch(cli: &Cli) -> Result<u8, Failure> {
    let (sc, out) = load(cli)?;
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let code = match cli.command {
        Command::Simulate => cmd_simulate(&sc, &out)?,
        Command::DecayCharacter => cmd_decay_character(&sc, &out)?,
        Command::CheckInequalities => cmd_check_inequalities(&sc, &out)?,
        Command::Predict => cmd_predict(&sc, &out)?,
        Command::Sweep => cmd_sweep(&sc, &out)?,
    };
    Ok(code)
}

fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

struct SimResult {
    traj: Trajectory,
    prediction: Option<RatePrediction>,
    decay_report: Option<DecayReport>,
    notes: Vec<String>,
}

fn prediction_for(sc: &Scenario, u0: &hslab::grid::RadialField) -> anyhow::Result<RatePrediction> {
    let params = sc.problem()?;
    let q = if bootstrap_case(&params) == BootstrapCase::RatioLt1 {
        sc.q_star
    } else {
        Some(resolve_q_star(sc, u0)?)
    };
    Ok(rate_predictor(&params, q)?)
}

fn simulate_core(sc: &Scenario) -> anyhow::Result<SimResult> {
    let (params, u0) = sc.initial_data()?;
    let traj = run(&u0, &params, &sc.solver)?;
    let mut notes = Vec::new();
    let prediction = if params.d >= 5 {
        match prediction_for(sc, &u0) {
            Ok(p) => Some(p),
            Err(e) => {
                notes.push(format!("no prediction: {e:#}"));
                None
            }
        }
    } else {
        None
    };
    let decay_report = match (&prediction, traj.outcome) {
        (Some(p), o) if !matches!(o, Outcome::Blowup { .. }) => match fit_decay_exponent(&traj, sc.fit_window(), p) {
            Ok(r) => Some(r),
            Err(e) => {
                notes.push(format!("no decay fit: {e}"));
                None
            }
        },
        _ => None,
    };
    Ok(SimResult {
        traj,
        prediction,
        decay_report,
        notes,
    })
}

#[derive(Serialize)]
struct RunReport<'a> {
    scenario_hash: String,
    outcome: &'static str,
    t_detect: Option<f64>,
    steps_accepted: usize,
    steps_rejected: usize,
    decay_report: Option<&'a DecayReport>,
    prediction: Option<&'a RatePrediction>,
}

fn run_report<'a>(sc: &Scenario, res: &'a SimResult) -> RunReport<'a> {
    RunReport {
        scenario_hash: sc.hash(),
        outcome: res.traj.outcome.label(),
        t_detect: res.traj.outcome.t_detect(),
        steps_accepted: res.traj.steps_accepted,
        steps_rejected: res.traj.steps_rejected,
        decay_report: res.decay_report.as_ref(),
        prediction: res.prediction.as_ref(),
    }
}

fn write_trajectory(path: &Path, traj: &Trajectory) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(["t", "dt", "h1_sq", "l2_sq", "lqc", "hs_term", "energy", "nehari"])?;
    for ((t, dt), r) in traj.times.iter().zip(&traj.dts).zip(&traj.reports) {
        w.write_record(
            [*t, *dt, r.h1_sq, r.l2_sq, r.lqc, r.hs_term, r.energy, r.nehari]
                .iter()
                .map(|v| v.to_string()),
        )?;
    }
    w.flush()?;
    Ok(())
}

/// C rate(t) with C calibrated at the fit window's left end.
fn envelope(res: &SimResult) -> Option<impl Fn(f64) -> f64> {
    let rep = res.decay_report.as_ref()?;
    let rate = {
        let p = rep.prediction;
        move |t: f64| match p.regime {
            Regime::Algebraic => (1.0 + t).powf(-p.exponent),
            Regime::Logarithmic => (std::f64::consts::E + t).ln().powi(-2),
        }
    };
    let traj = &res.traj;
    let i = traj.times.iter().position(|&t| t >= rep.fit_window.0 * (1.0 - 1e-12))?;
    let c = traj.reports[i].h1_sq / rate(traj.times[i]);
    Some(move |t: f64| c * rate(t))
}

const PLOT_SCRIPT: &str = "set logscale y
set xlabel 't'
set ylabel 'h1_sq'
set key top right
plot 'envelope.dat' using 1:2 with lines title 'h1_sq', \\
     'envelope.dat' using 1:3 with lines dashtype 2 title 'predicted envelope'
";

fn write_plot(dir: &Path, res: &SimResult) -> anyhow::Result<()> {
    let env = envelope(res);
    let mut text = String::from("# t h1_sq predicted_envelope\n");
    for (t, r) in res.traj.times.iter().zip(&res.traj.reports) {
        let e = env.as_ref().map_or(f64::NAN, |f| f(*t));
        text.push_str(&format!("{t} {} {e}\n", r.h1_sq));
    }
    fs::write(dir.join("envelope.dat"), text)?;
    fs::write(dir.join("plot.gp"), PLOT_SCRIPT)?;
    Ok(())
}

#[derive(Serialize)]
struct SplittingSummary {
    m: f64,
    c_tilde: f64,
    kappa_min: f64,
    holds: bool,
    degenerate: bool,
    worst_relative_slack: f64,
}

fn cmd_simulate(sc: &Scenario, out: &Path) -> anyhow::Result<u8> {
    let res = simulate_core(sc)?;
    for n in &res.notes {
        eprintln!("note: {n}");
    }
    write_trajectory(&out.join("trajectory.csv"), &res.traj)?;
    write_json(&out.join("report.json"), &run_report(sc, &res))?;
    write_json(&out.join("decay_report.json"), &res.decay_report)?;
    write_plot(out, &res)?;

    let mut failed = res.decay_report.as_ref().is_some_and(|r| !r.bound_satisfied);
    for a in &sc.analyses {
        if let Some(m) = a.splitting_m {
            let rep = fourier_splitting_check(&res.traj, m)?;
            let mut w = csv::Writer::from_path(out.join(format!("splitting_m{m}.csv")))?;
            w.write_record(["t", "lhs", "rhs", "slack"])?;
            for r in &rep.rows {
                w.write_record([r.t, r.lhs, r.rhs, r.slack].iter().map(|v| v.to_string()))?;
            }
            w.flush()?;
            write_json(
                &out.join(format!("splitting_m{m}.json")),
                &SplittingSummary {
                    m,
                    c_tilde: rep.c_tilde,
                    kappa_min: rep.kappa_min,
                    holds: rep.holds,
                    degenerate: rep.degenerate,
                    worst_relative_slack: rep.worst_relative_slack,
                },
            )?;
            if !rep.holds && !rep.degenerate {
                eprintln!("splitting inequality fails for m = {m}");
                failed = true;
            }
        }
        if let Some(q) = a.kato_q {
            let series = kato_weighted_norm(&res.traj, q)?;
            let mut w = csv::Writer::from_path(out.join(format!("kato_q{q}.csv")))?;
            w.write_record(["t", "value"])?;
            for (t, v) in series {
                w.write_record([t.to_string(), v.to_string()])?;
            }
            w.flush()?;
        }
    }
    println!("outcome: {}", res.traj.outcome.label());
    if let Some(r) = &res.decay_report {
        println!(
            "fitted exponent {:.4} over [{}, {}], bound satisfied: {}",
            r.fitted_exponent, r.fit_window.0, r.fit_window.1, r.bound_satisfied
        );
    }
    if failed {
        return Ok(EXIT_SCIENCE);
    }
    Ok(match res.traj.outcome {
        Outcome::Undecided => EXIT_UNDECIDED,
        _ => 0,
    })
}

fn cmd_decay_character(sc: &Scenario, out: &Path) -> anyhow::Result<u8> {
    let (_, u0) = sc.initial_data()?;
    let ch = data_characters(&u0, sc.decay_character_window())?;
    write_json(&out.join("decay_character.json"), &ch)?;
    println!("{}", serde_json::to_string_pretty(&ch)?);
    for (name, e) in [("u0", ch.u0), ("lambda_u0", ch.lambda_u0)] {
        if !e.reliable {
            eprintln!("note: the {name} fit is unreliable (residual {:.3})", e.fit_residual);
        }
    }
    Ok(0)
}

fn cmd_check_inequalities(sc: &Scenario, out: &Path) -> anyhow::Result<u8> {
    let params = sc.problem()?;
    let grid = sc.radial_grid(&params)?;
    let iq = sc.inequalities.clone().unwrap_or_default();
    let rep = run_inequality_suite(&params, &grid, sc.seed, iq.corpus_size, iq.rellich)?;
    write_json(&out.join("inequalities.json"), &rep)?;
    for c in &rep.checks {
        println!(
            "{:<20} {}  worst ratio {:.6} at {} (constant {:.6}, {})",
            c.name,
            if c.holds { "pass" } else { "FAIL" },
            c.worst_ratio,
            c.worst_sample,
            c.constant,
            c.constant_source
        );
    }
    if rep.all_pass {
        Ok(0)
    } else {
        for c in rep.checks.iter().filter(|c| !c.holds) {
            eprintln!("{} fails on {}", c.name, c.failing_sample.as_deref().unwrap_or("?"));
        }
        Ok(EXIT_SCIENCE)
    }
}

fn cmd_predict(sc: &Scenario, out: &Path) -> anyhow::Result<u8> {
    let params = sc.problem()?;
    let pred = if bootstrap_case(&params) == BootstrapCase::RatioLt1 || sc.q_star.is_some() {
        rate_predictor(&params, sc.q_star)?
    } else {
        let (_, u0) = sc.initial_data()?;
        prediction_for(sc, &u0)?
    };
    write_json(&out.join("prediction.json"), &pred)?;
    println!("{}", serde_json::to_string_pretty(&pred)?);
    Ok(0)
}

#[derive(Serialize)]
struct SweepRow {
    value: f64,
    outcome: String,
    t_detect: Option<f64>,
    fitted_exponent: Option<f64>,
    predicted_exponent: Option<f64>,
    regime: Option<&'static str>,
    bound_satisfied: Option<bool>,
    error: String,
}

fn sweep_member(sc: &Scenario, axis: Axis, value: f64, dir: &Path) -> anyhow::Result<SweepRow> {
    let sub = sc.with_axis(axis, value)?;
    sub.validate()?;
    let res = simulate_core(&sub)?;
    fs::create_dir_all(dir)?;
    write_trajectory(&dir.join("trajectory.csv"), &res.traj)?;
    write_json(&dir.join("report.json"), &run_report(&sub, &res))?;
    Ok(SweepRow {
        value,
        outcome: res.traj.outcome.label().to_string(),
        t_detect: res.traj.outcome.t_detect(),
        fitted_exponent: res.decay_report.map(|r| r.fitted_exponent),
        predicted_exponent: res.prediction.map(|p| p.exponent),
        regime: res.prediction.map(|p| match p.regime {
            Regime::Algebraic => "algebraic",
            Regime::Logarithmic => "logarithmic",
        }),
        bound_satisfied: res.decay_report.map(|r| r.bound_satisfied),
        error: String::new(),
    })
}

fn axis_name(axis: Axis) -> &'static str {
    match axis {
        Axis::Lambda => "lambda",
        Axis::Gamma => "gamma",
        Axis::D => "d",
        Axis::QStar => "q_star",
    }
}

fn cmd_sweep(sc: &Scenario, out: &Path) -> anyhow::Result<u8> {
    let spec = sc.sweep.clone().expect("validated");
    let mut values = spec.values.clone();
    values.sort_by(f64::total_cmp);
    let rows: Vec<SweepRow> = values
        .par_iter()
        .enumerate()
        .map(|(i, &v)| {
            let dir = out.join("runs").join(format!("{i:03}"));
            sweep_member(sc, spec.axis, v, &dir).unwrap_or_else(|e| SweepRow {
                value: v,
                outcome: "error".to_string(),
                t_detect: None,
                fitted_exponent: None,
                predicted_exponent: None,
                regime: None,
                bound_satisfied: None,
                error: format!("{e:#}"),
            })
        })
        .collect();

    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    let mut w = csv::Writer::from_path(out.join("sweep.csv"))?;
    w.write_record([
        axis_name(spec.axis),
        "outcome",
        "t_detect",
        "fitted_exponent",
        "predicted_exponent",
        "regime",
        "bound_satisfied",
        "error",
    ])?;
    for r in &rows {
        w.write_record([
            r.value.to_string(),
            r.outcome.clone(),
            opt(r.t_detect),
            opt(r.fitted_exponent),
            opt(r.predicted_exponent),
            r.regime.unwrap_or("").to_string(),
            r.bound_satisfied.map_or(String::new(), |b| b.to_string()),
            r.error.clone(),
        ])?;
    }
    w.flush()?;
    for r in &rows {
        println!("{} = {}: {}", axis_name(spec.axis), r.value, r.outcome);
    }
    Ok(if rows.iter().any(|r| !r.error.is_empty()) {
        EXIT_SCIENCE
    } else {
        0
    })
}
