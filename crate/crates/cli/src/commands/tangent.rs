use serde::Serialize;
use triform::analysis::{infinitesimal_rank_check, tangent_simulate, InfinitesimalRank, TangentError};

use crate::error::CliError;
use crate::report::{columns, num, nums, Output, Provenance, Report, Status, Verdict, REPORT_VERSION, print_verdicts};
use crate::Context;

/// `sup |w|` below this, with `v` bounded away from zero, is a witness.
const WITNESS_TOL: f64 = 1e-12;

#[derive(Serialize)]
struct Results {
    x0: Vec<f64>,
    v0: Vec<f64>,
    horizon: f64,
    dt: f64,
    sup_w: f64,
    min_v_norm: f64,
    final_v_norm: f64,
    witness: bool,
    rank_order: usize,
    infinitesimal_rank: InfinitesimalRank,
}

pub fn run(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let sys = &ctx.system;
    let sim = &cfg.simulation;
    let (Some(x0), Some(v0)) = (sim.x0.clone(), sim.v0.clone()) else {
        return Err(CliError::Config("tangent-sim needs simulation.x0 and simulation.v0".into()));
    };
    let input = cfg.input(sys.m())?;
    let trace = tangent_simulate(sys, &x0, &v0, &input, sim.horizon, sim.dt, None).map_err(|e| match e {
        TangentError::ZeroTangent | TangentError::Step | TangentError::Signal(_) => CliError::Config(e.to_string()),
        other => CliError::Domain(other.to_string()),
    })?;
    let out = Output::create(&ctx.out)?;
    let n = sys.n();
    let header: Vec<String> =
        ["t".to_string()].into_iter().chain(columns("x", n)).chain(columns("v", n)).chain(["w".to_string()]).collect();
    let rows = trace.states.iter().map(|s| {
        let mut r = vec![num(s.t)];
        r.extend(nums(&s.x));
        r.extend(nums(&s.v));
        r.push(num(s.w));
        r
    });
    out.write_csv("tangent_trace.csv", &header, rows)?;

    let order = cfg.orders.d_z.unwrap_or(n + 1);
    let u0 = input.at(0.0).map_err(|e| CliError::Config(e.to_string()))?;
    let rank = infinitesimal_rank_check(sys, &x0, &u0, order, cfg.tolerances.rank_tol)
        .map_err(|e| CliError::Domain(format!("infinitesimal rank at x0: {e}")))?;
    let witness = trace.sup_w < WITNESS_TOL && trace.min_v_norm > WITNESS_TOL;
    let verdicts = vec![
        Verdict::pass_if(
            !witness,
            "tangent output w = dh(x) v is not identically zero while v stays nonzero (uniform infinitesimal observability along this trajectory)",
            "trajectory",
            format!("sup|w| = {:.3e}, min|v| = {:.3e}, |v(T)| = {:.6}", trace.sup_w, trace.min_v_norm, trace.final_v_norm),
        ),
        Verdict::new(
            "rank of the gradients of L_(f+gu)^j h, j < K, at x0 with the input frozen at u(0)",
            format!("K = {order}"),
            if rank.rank == n { Status::Pass } else { Status::Fail },
            format!("rank {} of {n}", rank.rank),
        ),
    ];
    print_verdicts(&verdicts);
    let results = Results {
        x0,
        v0,
        horizon: sim.horizon,
        dt: sim.dt,
        sup_w: trace.sup_w,
        min_v_norm: trace.min_v_norm,
        final_v_norm: trace.final_v_norm,
        witness,
        rank_order: order,
        infinitesimal_rank: rank,
    };
    let report = Report { report_version: REPORT_VERSION, command: "tangent-sim", provenance: Provenance::new(sys, cfg), verdicts, results };
    out.write_report(&report)?;
    out.write_metadata("tangent-sim")?;
    Ok(())
}
