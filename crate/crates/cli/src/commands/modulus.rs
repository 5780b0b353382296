use serde::Serialize;
use triform::analysis::{log_grid, modulus_estimate, ModulusOptions, ModulusReport};
use triform::lie::LieTable;
use triform::{parse_expression, Expr};

use crate::error::CliError;
use crate::report::{num, Output, Provenance, Report, Status, Verdict, REPORT_VERSION, print_verdicts};
use crate::Context;

#[derive(Serialize)]
struct Results {
    value: Vec<String>,
    key: Vec<String>,
    modulus: ModulusReport,
}

pub fn run(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let sys = &ctx.system;
    let mc = &cfg.modulus;
    let scope = sys.scope();
    let parse = |texts: &[String]| -> Result<Vec<Expr>, CliError> {
        texts
            .iter()
            .map(|t| parse_expression(t, &scope).map_err(|e| CliError::Config(format!("modulus expression '{t}': {e}"))))
            .collect()
    };
    let order = mc.order.or(cfg.orders.d_z).unwrap_or(sys.n());
    if order == 0 {
        return Err(CliError::Config("modulus.order must be at least 1".into()));
    }
    let mut table = LieTable::new(sys.clone());
    let map = table.observability_map(order);
    let value = match &mc.value {
        Some(v) => parse(v)?,
        None => vec![map.drift_next.clone()],
    };
    let key = match &mc.key {
        Some(k) => parse(k)?,
        None => map.components.clone(),
    };
    if value.iter().chain(&key).any(Expr::has_inputs) {
        return Err(CliError::Config("modulus maps must not depend on inputs".into()));
    }
    let region = cfg.region(sys.n())?;
    let s_grid = log_grid(mc.s_min, mc.s_max, mc.s_count);
    let opts = ModulusOptions { max_pairs: mc.max_pairs, seed: cfg.seed };
    let report = modulus_estimate(&value, &key, &region.points(), &s_grid, &opts)
        .map_err(|e| CliError::Domain(e.to_string()))?;
    let out = Output::create(&ctx.out)?;
    let rows = report.s.iter().zip(&report.rho).map(|(s, r)| vec![num(*s), num(*r)]);
    out.write_csv("modulus.csv", &["s".to_string(), "rho0".to_string()], rows)?;
    let show = |es: &[Expr]| -> Vec<String> { es.iter().map(|e| e.display(&sys.state_names, &sys.input_names).to_string()).collect() };
    let verdicts = vec![Verdict::new(
        "power-law exponent of the sampled modulus of continuity on the smallest decade of s",
        "rho0",
        Status::Info,
        report.exponent.map_or("no positive samples".to_string(), |e| format!("{e:.4}")),
    )];
    print_verdicts(&verdicts);
    let results = Results { value: show(&value), key: show(&key), modulus: report };
    let report = Report { report_version: REPORT_VERSION, command: "modulus", provenance: Provenance::new(sys, cfg), verdicts, results };
    out.write_report(&report)?;
    out.write_metadata("modulus")?;
    Ok(())
}
