use serde::Serialize;
use triform::analysis::{
    fiber_pair_search, injectivity_scan, kernel_condition_check, lipschitz_ratio_scan, property_a_check, rank_profile,
    CellEstimate, CheckedPair, FiberOptions, OrderEvidence, OrderSearch, RatioProblem, SampleBox, SingularSlice,
};
use triform::lie::LieTable;
use triform::numeric::sub_seed;

use crate::error::CliError;
use crate::report::{columns, num, nums, Output, Provenance, Report, Status, Verdict, print_verdicts};
use crate::Context;

#[derive(Serialize)]
struct RankSummary {
    full_rank: usize,
    immersion: bool,
    deficient: usize,
    undefined: usize,
    min_rel_sigma: f64,
    singular_slices: Vec<SingularSlice>,
    isolated_deficient: usize,
}

#[derive(Serialize)]
struct InjectivitySummary {
    samples: usize,
    total_collisions: usize,
    candidates_refined: usize,
}

#[derive(Serialize)]
struct FiberSummary {
    pairs: usize,
    max_discrepancy: f64,
    pass: bool,
    vacuous: bool,
    witness: Option<CheckedPair>,
}

#[derive(Serialize)]
struct KernelSummary {
    deficient_points: usize,
    max_violation: f64,
    violations: usize,
}

#[derive(Serialize)]
struct LipschitzSummary {
    constant_gain: bool,
    global: f64,
    argmax: Option<(Vec<f64>, Vec<f64>)>,
    pairs_evaluated: usize,
    blowup: bool,
    flagged_cells: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct OrderSummary {
    order: usize,
    rank: RankSummary,
    injectivity: InjectivitySummary,
    fibers: Option<FiberSummary>,
    kernel: KernelSummary,
    lipschitz: LipschitzSummary,
}

#[derive(Serialize)]
struct Results {
    n: usize,
    m: usize,
    max_order: usize,
    region: SampleBox,
    neighbourhood: SampleBox,
    samples: usize,
    strong_order: Option<usize>,
    weak_order: Option<usize>,
    /// Largest `i` such that every gain up to `i` is constant on sampled fibers.
    fiber_constant_up_to: usize,
    orders: Vec<OrderSummary>,
    notes: Vec<String>,
}

pub fn run(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let sys = &ctx.system;
    let n = sys.n();
    let out = Output::create(&ctx.out)?;
    let region = cfg.region(n)?;
    let neighbourhood = region.inflate(cfg.analysis.margin);
    let points = region.points();
    let max_order = cfg.max_order(n);
    let rank_tol = cfg.tolerances.rank_tol;
    let mut table = LieTable::new(sys.clone());

    let mut orders = Vec::new();
    let mut evidence = Vec::new();
    let mut rank_rows: Vec<Vec<String>> = Vec::new();
    let mut fiber_rows: Vec<Vec<String>> = Vec::new();
    let mut lip_rows: Vec<Vec<String>> = Vec::new();
    let mut previous_full: Option<Vec<Vec<f64>>> = None;
    for i in 1..=max_order {
        let map = table.observability_map(i);
        let rank = rank_profile(&map, &points, rank_tol);
        for p in &rank.points {
            let mut row: Vec<String> = nums(&p.x).collect();
            row.push(i.to_string());
            row.push(p.rank.map(|r| r.to_string()).unwrap_or_default());
            row.push(num(p.sigma_min));
            rank_rows.push(row);
        }
        let inj = injectivity_scan(&map, &points, &neighbourhood, &cfg.injectivity());
        evidence.push(OrderEvidence::new(&rank, &inj));

        let fibers = (i <= n + 1).then(|| {
            let fopts = FiberOptions { seed: sub_seed(cfg.seed, i as u64), ..cfg.fiber() };
            let mut pairs = fiber_pair_search(&map, &region, &neighbourhood, &fopts);
            pairs.extend(inj.collisions.iter().cloned());
            let report = property_a_check(&map, &pairs, cfg.tolerances.a_tol, previous_full.as_deref());
            for c in &report.pairs {
                let mut row: Vec<String> = nums(&c.pair.xa).chain(nums(&c.pair.xb)).collect();
                row.extend([i.to_string(), num(c.pair.dh), num(c.pair.sep), num(c.dlg)]);
                fiber_rows.push(row);
            }
            FiberSummary {
                pairs: report.pairs.len(),
                max_discrepancy: report.max_discrepancy,
                pass: report.pass,
                vacuous: report.vacuous,
                witness: report.witness,
            }
        });

        let kernel = kernel_condition_check(&map, &points, rank_tol, cfg.tolerances.kernel_tol);
        let gain = &map.input_rows[i - 1];
        let constant_gain = gain.iter().all(|e| e.as_const().is_some());
        let lipschitz = if constant_gain {
            LipschitzSummary { constant_gain, global: 0.0, argmax: None, pairs_evaluated: 0, blowup: false, flagged_cells: Vec::new() }
        } else {
            let mut lopts = cfg.lipschitz();
            lopts.seed = sub_seed(cfg.seed, 50 + i as u64);
            let scan = lipschitz_ratio_scan(&RatioProblem::input_gain(&map), &region, &lopts);
            for c in &scan.cells {
                lip_rows.push(lipschitz_row(&format!("g{i}"), i, c));
            }
            LipschitzSummary {
                constant_gain,
                global: scan.global,
                argmax: scan.argmax.clone(),
                pairs_evaluated: scan.pairs_evaluated,
                blowup: scan.any_blowup(),
                flagged_cells: scan.flagged_cells().map(|c| c.center.clone()).collect(),
            }
        };
        previous_full = Some(rank.points.iter().filter(|p| p.rank == Some(rank.full_rank)).map(|p| p.x.clone()).collect());
        orders.push(OrderSummary {
            order: i,
            rank: RankSummary {
                full_rank: rank.full_rank,
                immersion: rank.immersion_everywhere(),
                deficient: rank.deficient.len(),
                undefined: rank.undefined,
                min_rel_sigma: rank.min_rel_sigma,
                singular_slices: rank.singular_slices.clone(),
                isolated_deficient: rank.isolated_deficient,
            },
            injectivity: InjectivitySummary {
                samples: inj.samples,
                total_collisions: inj.total_collisions,
                candidates_refined: inj.candidates_refined,
            },
            fibers,
            kernel: KernelSummary {
                deficient_points: kernel.points.len(),
                max_violation: kernel.max_violation,
                violations: kernel.violations,
            },
            lipschitz,
        });
    }
    let search = OrderSearch::from_evidence(evidence);
    let fiber_constant_up_to = orders.iter().take_while(|o| o.fibers.as_ref().is_some_and(|f| f.pass)).count();

    let mut verdicts = Vec::new();
    verdicts.push(Verdict::new(
        "smallest i with H_i an injective immersion on the samples (strong differential observability order)",
        "H_i",
        Status::Info,
        search.strong_order.map_or(format!("none up to {max_order}"), |o| o.to_string()),
    ));
    verdicts.push(Verdict::new(
        "smallest i with H_i injective on the samples (weak differential observability order)",
        "H_i",
        Status::Info,
        search.weak_order.map_or(format!("none up to {max_order}"), |o| o.to_string()),
    ));
    for o in &orders {
        let i = o.order;
        let h = format!("H_{i}");
        let g = format!("g{i}");
        verdicts.push(Verdict::pass_if(
            o.rank.immersion,
            "dH_i/dx has rank n at every sample",
            &h,
            format!(
                "generic rank {} of {n}, {} samples below it, min relative sigma {:.3e}",
                o.rank.full_rank, o.rank.deficient, o.rank.min_rel_sigma
            ),
        ));
        verdicts.push(Verdict::pass_if(
            o.injectivity.total_collisions == 0,
            "H_i separates all sampled states at least delta apart",
            &h,
            format!("{} collisions", o.injectivity.total_collisions),
        ));
        if let Some(f) = &o.fibers {
            verdicts.push(Verdict::pass_if(
                f.pass,
                "input gain L_g L_f^(i-1) h is constant on sampled fibers of H_i",
                &g,
                if f.vacuous {
                    "no fiber pairs found".to_string()
                } else {
                    format!("{} pairs, max gap {:.3e}", f.pairs, f.max_discrepancy)
                },
            ));
        }
        verdicts.push(Verdict::pass_if(
            o.kernel.violations == 0,
            "gradient of the input gain annihilates the kernel of dH_i/dx",
            &g,
            format!("{} rank-deficient samples, max violation {:.3e}", o.kernel.deficient_points, o.kernel.max_violation),
        ));
        verdicts.push(Verdict::pass_if(
            !o.lipschitz.blowup,
            "input gain is Lipschitz in H_i on the region (no ratio blowup as pairs shrink)",
            &g,
            if o.lipschitz.constant_gain {
                "constant gain".to_string()
            } else {
                format!("sup ratio {:.4e}, {} cells flagged", o.lipschitz.global, o.lipschitz.flagged_cells.len())
            },
        ));
    }
    let mut notes = vec![
        "all verdicts are evidence from finitely many samples".to_string(),
        "trajectory-based uniform observability is not tested directly; only fiber and tangent consequences are".to_string(),
        "uniform infinitesimal observability is necessary for Lipschitz gains; it is not assumed sufficient".to_string(),
    ];
    if let (Some(n_t), Some(d_z)) = (cfg.orders.n_t, cfg.orders.d_z) {
        let gains_ok = fiber_constant_up_to >= n_t.min(n + 1);
        let injective = orders.get(d_z - 1).map(|o| o.injectivity.total_collisions == 0);
        verdicts.push(Verdict::pass_if(
            gains_ok && injective.unwrap_or(false),
            "gains up to n_t constant on fibers and H_dz injective, so a triangular form of this shape is supported",
            format!("n_t = {n_t}, d_z = {d_z}"),
            match injective {
                Some(inj) => format!("fiber-constant up to {fiber_constant_up_to}, H_{d_z} injective: {inj}"),
                None => format!("d_z = {d_z} exceeds max_order {max_order}"),
            },
        ));
    } else {
        notes.push("set orders.n_t and orders.d_z to evaluate a specific triangular form".into());
    }

    let header: Vec<String> = columns("x", n).chain(["order", "rank", "sigma_min"].map(String::from)).collect();
    out.write_csv("rank_profile.csv", &header, rank_rows)?;
    let header: Vec<String> = columns("xa", n)
        .chain(columns("xb", n))
        .chain(["order", "dH", "sep", "dLg"].map(String::from))
        .collect();
    out.write_csv("fiber_pairs.csv", &header, fiber_rows)?;
    let header: Vec<String> = ["function", "order"]
        .map(String::from)
        .into_iter()
        .chain(columns("center", n))
        .chain(["L_r0", "L_r0_half", "L_r0_quarter", "flagged"].map(String::from))
        .collect();
    out.write_csv("lipschitz.csv", &header, lip_rows)?;

    let results = Results {
        n,
        m: sys.m(),
        max_order,
        region: region.clone(),
        neighbourhood,
        samples: points.len(),
        strong_order: search.strong_order,
        weak_order: search.weak_order,
        fiber_constant_up_to,
        orders,
        notes,
    };
    print_verdicts(&verdicts);
    let report = Report { report_version: crate::report::REPORT_VERSION, command: "analyze", provenance: Provenance::new(sys, cfg), verdicts, results };
    out.write_report(&report)?;
    out.write_metadata("analyze")?;
    Ok(())
}

pub fn lipschitz_row(label: &str, order: usize, c: &CellEstimate) -> Vec<String> {
    let mut row = vec![label.to_string(), order.to_string()];
    row.extend(nums(&c.center));
    row.extend(c.local.iter().map(|&v| num(v)));
    row.push(u8::from(c.flagged).to_string());
    row
}
