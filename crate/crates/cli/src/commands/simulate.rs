use std::path::Path;

use serde::Serialize;
use triform::form::{residual_check, FormError, TriangularForm};
use triform::observer::{integrate_system, run_high_gain_observer, ObserverRun, StopReason};

use crate::error::CliError;
use crate::report::{columns, num, nums, Output, Provenance, Report, Verdict, REPORT_VERSION, print_verdicts};
use crate::Context;

#[derive(Serialize)]
struct RunSummary {
    traces_file: String,
    x0: Vec<f64>,
    z0: Vec<f64>,
    gain: f64,
    coefficients: Vec<f64>,
    initial_z_error: f64,
    peak_z_error: f64,
    final_z_error: f64,
    final_x_error: Option<f64>,
    saturated_steps: usize,
    skipped_reconstructions: usize,
    blowup: bool,
    degraded: bool,
    fallbacks: usize,
    stop: Option<StopReason>,
    /// `max_t |ż - F(z, u)|` along the plant trajectory, when it stays in the region.
    form_residual: Option<f64>,
}

#[derive(Serialize)]
struct Results {
    form_system_hash: String,
    form_config_hash: Option<String>,
    d_z: usize,
    n_t: usize,
    horizon: f64,
    dt: f64,
    runs: Vec<RunSummary>,
}

fn load_form(ctx: &Context, path: &Path) -> Result<TriangularForm, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read form {}: {e}", path.display())))?;
    TriangularForm::from_json(&text, Some(ctx.system.clone()))
        .map_err(|e| CliError::Config(format!("form {}: {e}", path.display())))
}

fn write_traces(out: &Output, name: &str, n: usize, d: usize, run: &ObserverRun) -> Result<(), CliError> {
    let header: Vec<String> = ["t".to_string()]
        .into_iter()
        .chain(columns("x", n))
        .chain(columns("z", d))
        .chain(columns("zhat", d))
        .chain(columns("xhat", n))
        .chain(["err_z", "err_x", "saturated"].map(String::from))
        .collect();
    let rows = run.rows.iter().map(|r| {
        let mut row = vec![num(r.t)];
        row.extend(nums(&r.x));
        row.extend(nums(&r.z));
        row.extend(nums(&r.z_hat));
        match &r.x_hat {
            Some(xh) => row.extend(nums(xh)),
            None => row.extend(std::iter::repeat(String::new()).take(n)),
        }
        row.push(num(r.z_error));
        row.push(r.x_error.map(num).unwrap_or_default());
        row.push(u8::from(r.saturated).to_string());
        row
    });
    out.write_csv(name, &header, rows)?;
    Ok(())
}

pub fn run(ctx: &Context, form_path: &Path) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let sys = &ctx.system;
    let form = load_form(ctx, form_path)?;
    let sim = &cfg.simulation;
    let Some(x0) = sim.x0.clone() else {
        return Err(CliError::Config("simulate needs simulation.x0".into()));
    };
    let input = cfg.input(sys.m())?;
    let out = Output::create(&ctx.out)?;
    let (n, d) = (sys.n(), form.d_z);
    if let Some(off) = &cfg.observer.z0_offset {
        if off.len() != d {
            return Err(CliError::Config(format!("observer.z0_offset needs {d} components")));
        }
    }

    let mut runs = Vec::new();
    let mut verdicts = Vec::new();
    let mut domain_error = None;
    for (k, start) in std::iter::once(&x0).chain(&sim.sweep).enumerate() {
        let traj = integrate_system(sys, start, &input, sim.horizon, sim.dt, Some(&form.region), sim.bound)
            .map_err(|e| CliError::Config(e.to_string()))?;
        if let Some(stop) = &traj.stop {
            domain_error = Some(format!("run {k}: plant trajectory {stop}"));
            break;
        }
        let z_true = form.lift(start).ok_or_else(|| CliError::Domain(format!("run {k}: H is undefined at x0")))?;
        let z0: Vec<f64> = match &cfg.observer.z0_offset {
            Some(off) => z_true.iter().zip(off).map(|(a, b)| a + b).collect(),
            None => z_true,
        };
        let run = run_high_gain_observer(&form, &cfg.observer.observer, start, Some(&z0), &input, sim.horizon, sim.dt)
            .map_err(|e| CliError::Config(e.to_string()))?;
        let form_residual = match residual_check(&form, start, &input, sim.horizon, sim.dt) {
            Ok(r) => Some(r.max),
            Err(FormError::LeftRegion { .. }) => None,
            Err(e) => return Err(CliError::Domain(e.to_string())),
        };
        let traces_file = if k == 0 { "traces.csv".to_string() } else { format!("traces_run{k}.csv") };
        write_traces(&out, &traces_file, n, d, &run)?;
        let subject = format!("run {k}");
        verdicts.push(Verdict::pass_if(
            !run.degraded,
            "observer z-error over the last tenth of the horizon stays below the degradation threshold",
            &subject,
            format!("initial {:.3e}, peak {:.3e}, final {:.3e}", run.initial_z_error, run.peak_z_error, run.final_z_error),
        ));
        verdicts.push(Verdict::new(
            "saturation of the estimate into the image box",
            &subject,
            crate::report::Status::Info,
            format!("active on {} steps", run.saturated_steps),
        ));
        runs.push(RunSummary {
            traces_file,
            x0: start.clone(),
            z0,
            gain: run.gain,
            coefficients: run.coefficients.clone(),
            initial_z_error: run.initial_z_error,
            peak_z_error: run.peak_z_error,
            final_z_error: run.final_z_error,
            final_x_error: run.final_x_error,
            saturated_steps: run.saturated_steps,
            skipped_reconstructions: run.skipped_reconstructions,
            blowup: run.blowup,
            degraded: run.degraded,
            fallbacks: run.fallbacks,
            stop: run.stop.clone(),
            form_residual,
        });
    }
    print_verdicts(&verdicts);
    let results = Results {
        form_system_hash: form.provenance.system_hash.clone(),
        form_config_hash: form.provenance.config_hash.clone(),
        d_z: form.d_z,
        n_t: form.n_t,
        horizon: sim.horizon,
        dt: sim.dt,
        runs,
    };
    let report = Report { report_version: REPORT_VERSION, command: "simulate", provenance: Provenance::new(sys, cfg), verdicts, results };
    out.write_report(&report)?;
    out.write_metadata("simulate")?;
    match domain_error {
        Some(msg) => Err(CliError::Domain(msg)),
        None => Ok(()),
    }
}
