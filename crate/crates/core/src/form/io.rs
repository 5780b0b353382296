use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{FitReport, FormFunction, FormOptions, LipschitzStatus, Provenance, SampledFunction, TriangularForm};
use crate::analysis::SampleBox;
use crate::expr::parse_expression;
use crate::lie::LieTable;
use crate::system::{parse_system, ControlAffineSystem, SystemError};

/// Bumped whenever the layout of a saved form changes.
pub const FORM_FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum FormFileError {
    #[error("form file is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("form file has format version {found}, expected {FORM_FORMAT_VERSION}")]
    Version { found: u32 },
    #[error("embedded system: {0}")]
    System(#[from] SystemError),
    #[error("form was built for system {expected}, given system hashes to {found}")]
    Hash { expected: String, found: String },
    #[error("{label}: cannot parse value expression: {message}")]
    Expression { label: String, message: String },
    #[error("form file is inconsistent: {0}")]
    Shape(String),
}

#[derive(Serialize, Deserialize)]
struct FunctionFile {
    label: String,
    key_order: usize,
    value: Vec<String>,
    constant: Option<Vec<f64>>,
    lipschitz: LipschitzStatus,
    table: SampledFunction,
    preimages: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct FormFile {
    format_version: u32,
    provenance: Provenance,
    system: String,
    n_t: usize,
    d_z: usize,
    region: SampleBox,
    neighbourhood: SampleBox,
    image_lower: Vec<f64>,
    image_upper: Vec<f64>,
    full_dependence: Vec<String>,
    fit: FitReport,
    notes: Vec<String>,
    options: FormOptions,
    functions: Vec<FunctionFile>,
}

impl TriangularForm {
    pub fn to_json(&self) -> String {
        let sys = &self.system;
        let functions = self
            .functions()
            .map(|f| FunctionFile {
                label: f.label.clone(),
                key_order: f.key_order,
                value: f.value.iter().map(|e| e.display(&sys.state_names, &sys.input_names).to_string()).collect(),
                constant: f.constant.clone(),
                lipschitz: f.lipschitz.clone(),
                table: f.table.clone(),
                preimages: f.preimages.clone(),
            })
            .collect();
        let file = FormFile {
            format_version: FORM_FORMAT_VERSION,
            provenance: self.provenance.clone(),
            system: sys.to_text(),
            n_t: self.n_t,
            d_z: self.d_z,
            region: self.region.clone(),
            neighbourhood: self.neighbourhood.clone(),
            image_lower: self.image_lower.clone(),
            image_upper: self.image_upper.clone(),
            full_dependence: self.full_dependence.clone(),
            fit: self.fit.clone(),
            notes: self.notes.clone(),
            options: self.options.clone(),
            functions,
        };
        let mut s = serde_json::to_string_pretty(&file).expect("form serializes");
        s.push('\n');
        s
    }

    /// Loads a saved form. With `system` given, its hash must match the one
    /// recorded at build time; otherwise the embedded system text is used.
    pub fn from_json(text: &str, system: Option<Arc<ControlAffineSystem>>) -> Result<Self, FormFileError> {
        let file: FormFile = serde_json::from_str(text)?;
        if file.format_version != FORM_FORMAT_VERSION {
            return Err(FormFileError::Version { found: file.format_version });
        }
        let system = match system {
            Some(s) => s,
            None => Arc::new(parse_system(&file.system)?),
        };
        let found = system.hash();
        if found != file.provenance.system_hash {
            return Err(FormFileError::Hash { expected: file.provenance.system_hash, found });
        }
        let d_z = file.d_z;
        if file.functions.len() != d_z + 1 || file.n_t == 0 || file.n_t >= d_z {
            return Err(FormFileError::Shape(format!("{} functions for d_z = {d_z}", file.functions.len())));
        }
        let scope = system.scope();
        let mut functions = Vec::with_capacity(d_z + 1);
        for ff in file.functions {
            let value = ff
                .value
                .iter()
                .map(|s| parse_expression(s, &scope))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| FormFileError::Expression { label: ff.label.clone(), message: e.to_string() })?;
            let ok = ff.key_order >= 1
                && ff.key_order <= d_z
                && !ff.table.keys.is_empty()
                && ff.table.keys.len() == ff.preimages.len()
                && ff.table.keys.iter().all(|k| k.len() == ff.key_order)
                && ff.table.values.len() == ff.table.keys.len()
                && ff.preimages.iter().all(|p| p.len() == system.n());
            if !ok {
                return Err(FormFileError::Shape(format!("table of {} does not match its key order", ff.label)));
            }
            functions.push(FormFunction {
                label: ff.label,
                key_order: ff.key_order,
                value,
                constant: ff.constant,
                table: ff.table,
                preimages: ff.preimages,
                lipschitz: ff.lipschitz,
            });
        }
        let phi = functions.pop().expect("d_z + 1 functions");
        let full = LieTable::new(system.clone()).observability_map(d_z);
        let maps = (1..=d_z).map(|k| full.truncated(k)).collect();
        Ok(TriangularForm {
            system,
            n_t: file.n_t,
            d_z,
            maps,
            g: functions,
            phi,
            region: file.region,
            neighbourhood: file.neighbourhood,
            image_lower: file.image_lower,
            image_upper: file.image_upper,
            full_dependence: file.full_dependence,
            fit: file.fit,
            notes: file.notes,
            options: file.options,
            provenance: file.provenance,
        })
    }
}
