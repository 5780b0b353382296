use serde::Serialize;
use triform::analysis::{injectivity_scan, SampleBox};
use triform::form::{assemble_triangular_form, Extension, FitReport, FormError, LipschitzStatus, TriangularForm};

use crate::error::CliError;
use crate::report::{Output, Provenance, Report, Status, Verdict, REPORT_VERSION, print_verdicts};
use crate::Context;

#[derive(Serialize)]
struct FunctionSummary {
    label: String,
    key_order: usize,
    constant: Option<Vec<f64>>,
    extension: Extension,
    table_size: usize,
    lipschitz: LipschitzStatus,
    fit_error: f64,
}

#[derive(Serialize)]
struct Results {
    form_file: Option<String>,
    n_t: usize,
    d_z: usize,
    region: SampleBox,
    neighbourhood: Option<SampleBox>,
    image_lower: Vec<f64>,
    image_upper: Vec<f64>,
    functions: Vec<FunctionSummary>,
    full_dependence: Vec<String>,
    fit: Option<FitReport>,
    full_map_collisions: Option<usize>,
    refusal: Option<String>,
    notes: Vec<String>,
}

fn summarize(form: &TriangularForm) -> Vec<FunctionSummary> {
    form.functions()
        .map(|f| FunctionSummary {
            label: f.label.clone(),
            key_order: f.key_order,
            constant: f.constant.clone(),
            extension: f.table.extension.clone(),
            table_size: f.table.keys.len(),
            lipschitz: f.lipschitz.clone(),
            fit_error: form.fit.max_errors.iter().find(|e| e.0 == f.label).map_or(f64::NAN, |e| e.1),
        })
        .collect()
}

pub fn run(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let sys = &ctx.system;
    let (Some(n_t), Some(d_z)) = (cfg.orders.n_t, cfg.orders.d_z) else {
        return Err(CliError::Config("transform needs orders.n_t and orders.d_z".into()));
    };
    let out = Output::create(&ctx.out)?;
    let region = cfg.region(sys.n())?;
    let opts = cfg.form_options();
    let built = assemble_triangular_form(sys.clone(), n_t, d_z, &region, &opts, Some(cfg.hash()));
    let mut verdicts = Vec::new();
    let mut results = Results {
        form_file: None,
        n_t,
        d_z,
        region: region.clone(),
        neighbourhood: None,
        image_lower: Vec::new(),
        image_upper: Vec::new(),
        functions: Vec::new(),
        full_dependence: Vec::new(),
        fit: None,
        full_map_collisions: None,
        refusal: None,
        notes: Vec::new(),
    };
    let outcome = match built {
        Ok(form) => {
            let path = out.write_text("form.json", &form.to_json())?;
            let map = form.map(d_z);
            let inj = injectivity_scan(map, &region.points(), &form.neighbourhood, &cfg.injectivity());
            verdicts.push(Verdict::pass_if(
                inj.total_collisions == 0,
                "H_dz separates all sampled states, so keys of functions read on all of z are unambiguous",
                format!("H_{d_z}"),
                format!("{} collisions", inj.total_collisions),
            ));
            for f in form.functions() {
                let fit = form.fit.max_errors.iter().find(|e| e.0 == f.label).map_or(f64::NAN, |e| e.1);
                verdicts.push(Verdict::pass_if(
                    fit <= opts.fit_tol,
                    "function reproduces its Lie-derivative value on held-out samples within fit_tol",
                    &f.label,
                    format!("max error {fit:.3e}"),
                ));
                verdicts.push(Verdict::pass_if(
                    f.lipschitz.lipschitz(),
                    "function is Lipschitz on the region (table constant below cap, no ratio blowup)",
                    &f.label,
                    format!("table constant {:.4e}, scan sup {:.4e}", f.lipschitz.table_constant, f.lipschitz.scan_constant),
                ));
            }
            results.form_file = Some(path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default());
            results.neighbourhood = Some(form.neighbourhood.clone());
            results.image_lower = form.image_lower.clone();
            results.image_upper = form.image_upper.clone();
            results.functions = summarize(&form);
            results.full_dependence = form.full_dependence.clone();
            results.fit = Some(form.fit.clone());
            results.full_map_collisions = Some(inj.total_collisions);
            results.notes = form.notes.clone();
            Ok(())
        }
        Err(e @ (FormError::PropertyA { .. } | FormError::KeyCollision { .. })) => {
            let order = match &e {
                FormError::PropertyA { order, .. } | FormError::KeyCollision { order, .. } => *order,
                _ => unreachable!(),
            };
            verdicts.push(Verdict::new(
                "input gain is constant on fibers of H_i, as the triangular construction requires",
                format!("g{order}"),
                Status::Fail,
                e.to_string(),
            ));
            results.refusal = Some(e.to_string());
            Err(CliError::Refusal(format!("construction refused: {e}")))
        }
        Err(e @ FormError::Region(_)) | Err(e @ FormError::Orders { .. }) => return Err(CliError::Config(e.to_string())),
        Err(e) => return Err(CliError::Domain(e.to_string())),
    };
    results.notes.push("whether a full triangular form always exists is open; full_dependence lists the gains read on all of z".into());
    print_verdicts(&verdicts);
    let report = Report { report_version: REPORT_VERSION, command: "transform", provenance: Provenance::new(sys, cfg), verdicts, results };
    out.write_report(&report)?;
    out.write_metadata("transform")?;
    outcome
}
