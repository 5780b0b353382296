//! Run configuration: one JSON document, every field optional.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use triform::analysis::{Exclusion, FiberOptions, InjectivityOptions, LipschitzOptions, SampleBox};
use triform::form::FormOptions;
use triform::observer::ObserverConfig;
use triform::signal::InputSignal;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("invalid config JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("config: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    Uniform(usize),
    PerAxis(Vec<usize>),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionConfig {
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
    #[serde(default = "default_grid")]
    pub grid: GridSpec,
    #[serde(default = "default_random")]
    pub random: usize,
    #[serde(default)]
    pub exclusions: Vec<Exclusion>,
}

fn default_grid() -> GridSpec {
    GridSpec::Uniform(21)
}

fn default_random() -> usize {
    200
}

impl Default for RegionConfig {
    fn default() -> Self {
        Self { lower: None, upper: None, grid: default_grid(), random: default_random(), exclusions: Vec::new() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub rank_tol: f64,
    pub fiber_tol: f64,
    pub delta_min: f64,
    /// Minimum separation of an injectivity collision.
    pub delta: f64,
    pub a_tol: f64,
    pub kernel_tol: f64,
    pub fit_tol: f64,
    pub inv_tol: f64,
    pub l_cap: f64,
    pub blowup_threshold: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rank_tol: 1e-8,
            fiber_tol: 1e-9,
            delta_min: 1e-3,
            delta: 0.05,
            a_tol: 1e-6,
            kernel_tol: 1e-6,
            fit_tol: 1e-4,
            inv_tol: 1e-9,
            l_cap: 1e6,
            blowup_threshold: LipschitzOptions::default().blowup_threshold,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Orders {
    /// Largest `i` examined by `analyze`; `n + 2` when absent.
    pub max_order: Option<usize>,
    pub n_t: Option<usize>,
    pub d_z: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub fiber_anchors: usize,
    pub fiber_starts: usize,
    /// Relative margin of the neighbourhood around the region.
    pub margin: f64,
    pub injectivity_bucket: f64,
    pub lipschitz: LipschitzOptions,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        let f = FiberOptions::default();
        Self {
            fiber_anchors: f.anchors,
            fiber_starts: f.starts,
            margin: 0.05,
            injectivity_bucket: InjectivityOptions::default().bucket,
            lipschitz: LipschitzOptions::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InputConfig {
    Constant(Vec<f64>),
    Piecewise { breaks: Vec<f64>, values: Vec<Vec<f64>> },
    Expressions(Vec<String>),
}

impl InputConfig {
    pub fn signal(&self, m: usize) -> Result<InputSignal, ConfigError> {
        let s = match self {
            Self::Constant(v) => InputSignal::Constant(v.clone()),
            Self::Piecewise { breaks, values } => {
                InputSignal::PiecewiseConstant { breaks: breaks.clone(), values: values.clone() }
            }
            Self::Expressions(e) => InputSignal::expressions(e).map_err(|e| invalid(format!("input: {e}")))?,
        };
        s.validate(m).map_err(|e| invalid(format!("input: {e}")))?;
        Ok(s)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub x0: Option<Vec<f64>>,
    /// Further initial states simulated with the same settings.
    pub sweep: Vec<Vec<f64>>,
    /// Zero input when absent.
    pub input: Option<InputConfig>,
    pub horizon: f64,
    pub dt: f64,
    /// Tangent initial vector for `tangent-sim`.
    pub v0: Option<Vec<f64>>,
    pub bound: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self { x0: None, sweep: Vec::new(), input: None, horizon: 1.0, dt: 1e-3, v0: None, bound: 1e8 }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ObserverSection {
    #[serde(flatten)]
    pub observer: ObserverConfig,
    /// `ẑ0 = H(x0) + offset`.
    pub z0_offset: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModulusConfig {
    /// Value map `Φ`; `L_f^order h` when absent.
    pub value: Option<Vec<String>>,
    /// Key map `γ`; `H_order` when absent.
    pub key: Option<Vec<String>>,
    pub order: Option<usize>,
    pub s_min: f64,
    pub s_max: f64,
    pub s_count: usize,
    pub max_pairs: usize,
}

impl Default for ModulusConfig {
    fn default() -> Self {
        Self { value: None, key: None, order: None, s_min: 1e-3, s_max: 1.0, s_count: 31, max_pairs: 4_000_000 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FormSection {
    pub min_key_sep: f64,
    pub projection_radius: f64,
    pub validation_points: usize,
}

impl Default for FormSection {
    fn default() -> Self {
        let d = FormOptions::default();
        Self { min_key_sep: d.min_key_sep, projection_radius: d.projection_radius, validation_points: d.validation_points }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub region: RegionConfig,
    pub tolerances: Tolerances,
    pub orders: Orders,
    pub analysis: AnalysisConfig,
    pub form: FormSection,
    pub simulation: SimulationConfig,
    pub observer: ObserverSection,
    pub modulus: ModulusConfig,
    /// Overridden by `--out`; not part of the provenance hash.
    #[serde(skip_serializing)]
    pub output_dir: Option<String>,
}

impl RunConfig {
    pub fn load(path: Option<&str>) -> Result<Self, ConfigError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Read { path: p.into(), source })?;
                Ok(serde_json::from_str(&text)?)
            }
        }
    }

    /// SHA-256 of the serialized configuration.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn validate(&self, n: usize, m: usize) -> Result<(), ConfigError> {
        let t = &self.tolerances;
        let tols = [
            ("rank_tol", t.rank_tol),
            ("fiber_tol", t.fiber_tol),
            ("delta_min", t.delta_min),
            ("delta", t.delta),
            ("a_tol", t.a_tol),
            ("kernel_tol", t.kernel_tol),
            ("fit_tol", t.fit_tol),
            ("inv_tol", t.inv_tol),
            ("l_cap", t.l_cap),
            ("blowup_threshold", t.blowup_threshold),
        ];
        for (name, v) in tols {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("tolerance {name} must be positive, got {v}")));
            }
        }
        self.region(n)?;
        if let (Some(n_t), Some(d_z)) = (self.orders.n_t, self.orders.d_z) {
            if n_t == 0 || d_z < n_t + 1 {
                return Err(invalid(format!("orders need 1 <= n_t and d_z >= n_t + 1 (n_t = {n_t}, d_z = {d_z})")));
            }
        }
        if self.orders.max_order == Some(0) {
            return Err(invalid("max_order must be at least 1"));
        }
        let s = &self.simulation;
        if !(s.dt > 0.0 && s.horizon >= s.dt && s.horizon.is_finite()) {
            return Err(invalid("simulation needs dt > 0 and horizon >= dt"));
        }
        for x in s.x0.iter().chain(&s.sweep).chain(s.v0.iter()) {
            if x.len() != n {
                return Err(invalid(format!("simulation vectors need {n} components, got {}", x.len())));
            }
        }
        if let Some(input) = &s.input {
            input.signal(m)?;
        }
        let md = &self.modulus;
        if !(md.s_min > 0.0 && md.s_max > md.s_min && md.s_count >= 2) {
            return Err(invalid("modulus grid needs 0 < s_min < s_max and s_count >= 2"));
        }
        if !(self.form.projection_radius >= 0.0) {
            return Err(invalid("form projection_radius must be nonnegative"));
        }
        if !(self.analysis.margin >= 0.0) {
            return Err(invalid("analysis margin must be nonnegative"));
        }
        Ok(())
    }

    /// The analysis region as a sample box for an `n`-state system.
    pub fn region(&self, n: usize) -> Result<SampleBox, ConfigError> {
        let r = &self.region;
        let lower = r.lower.clone().unwrap_or_else(|| vec![-1.0; n]);
        let upper = r.upper.clone().unwrap_or_else(|| vec![1.0; n]);
        let grid = match &r.grid {
            GridSpec::Uniform(k) => vec![*k; n],
            GridSpec::PerAxis(v) => v.clone(),
        };
        let b = SampleBox { lower, upper, grid, random: r.random, seed: self.seed, exclusions: r.exclusions.clone() };
        b.validate(n).map_err(|e| invalid(format!("region: {e}")))?;
        Ok(b)
    }

    pub fn max_order(&self, n: usize) -> usize {
        self.orders.max_order.unwrap_or(n + 2)
    }

    pub fn input(&self, m: usize) -> Result<InputSignal, ConfigError> {
        match &self.simulation.input {
            Some(i) => i.signal(m),
            None => Ok(InputSignal::Constant(vec![0.0; m])),
        }
    }

    pub fn injectivity(&self) -> InjectivityOptions {
        InjectivityOptions {
            delta: self.tolerances.delta,
            fiber_tol: self.tolerances.fiber_tol,
            bucket: self.analysis.injectivity_bucket,
            ..InjectivityOptions::default()
        }
    }

    pub fn fiber(&self) -> FiberOptions {
        FiberOptions {
            anchors: self.analysis.fiber_anchors,
            starts: self.analysis.fiber_starts,
            fiber_tol: self.tolerances.fiber_tol,
            delta_min: self.tolerances.delta_min,
            rank_tol: self.tolerances.rank_tol,
            seed: self.seed,
            ..FiberOptions::default()
        }
    }

    pub fn lipschitz(&self) -> LipschitzOptions {
        LipschitzOptions { blowup_threshold: self.tolerances.blowup_threshold, seed: self.seed, ..self.analysis.lipschitz.clone() }
    }

    pub fn form_options(&self) -> FormOptions {
        let t = &self.tolerances;
        FormOptions {
            margin: self.analysis.margin,
            fit_tol: t.fit_tol,
            a_tol: t.a_tol,
            fiber_tol: t.fiber_tol,
            inv_tol: t.inv_tol,
            delta_min: t.delta_min,
            l_cap: t.l_cap,
            min_key_sep: self.form.min_key_sep,
            projection_radius: self.form.projection_radius,
            validation_points: self.form.validation_points,
            lipschitz: self.lipschitz(),
            fiber: self.fiber(),
            seed: self.seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let c: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(c.tolerances.rank_tol, 1e-8);
        c.validate(3, 1).unwrap();
        assert_eq!(c.region(3).unwrap().lower, vec![-1.0; 3]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"tolerances": {"rank_tl": 1}}"#).is_err());
    }

    #[test]
    fn nonpositive_tolerance_is_invalid() {
        let c: RunConfig = serde_json::from_str(r#"{"tolerances": {"fit_tol": 0}}"#).unwrap();
        assert!(c.validate(3, 1).is_err());
    }

    #[test]
    fn orders_must_leave_room_for_the_form() {
        let c: RunConfig = serde_json::from_str(r#"{"orders": {"n_t": 3, "d_z": 3}}"#).unwrap();
        assert!(c.validate(3, 1).is_err());
    }

    #[test]
    fn inputs_parse_in_all_forms() {
        let c: RunConfig = serde_json::from_str(
            r#"{"simulation": {"input": {"piecewise": {"breaks": [0.5], "values": [[1], [-1]]}}}}"#,
        )
        .unwrap();
        assert_eq!(c.input(1).unwrap().at(0.7).unwrap(), vec![-1.0]);
        let c: RunConfig = serde_json::from_str(r#"{"simulation": {"input": {"expressions": ["sin(t)"]}}}"#).unwrap();
        assert!((c.input(1).unwrap().at(1.0).unwrap()[0] - 1f64.sin()).abs() < 1e-15);
    }

    #[test]
    fn output_dir_does_not_change_the_hash() {
        let mut a = RunConfig::default();
        let h = a.hash();
        a.output_dir = Some("elsewhere".into());
        assert_eq!(a.hash(), h);
        a.seed = 4;
        assert_ne!(a.hash(), h);
    }
}
