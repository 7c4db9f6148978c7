//! TOML configuration, CSV emission, and run manifests.
//!
//! A config has five sections — `model`, `drive`, `lattice`, `solver`,
//! `experiment` — all optional except where a command needs them. Unknown
//! keys are hard errors; parse → serialize → parse is the identity.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{
    CylinderFunction, DriveSchedule, FieldFn, GradientDecomposition, GradientPart, RateModel,
    TimeFn,
};
use crate::pde::SolverParams;

/// One monomial of a cylinder function: `coeff · Π_{k ∈ offsets} η(k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    pub offsets: Vec<i64>,
    pub coeff: f64,
}

/// A cylinder function as constant plus monomials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CylinderSpec {
    #[serde(default)]
    pub constant: f64,
    #[serde(default)]
    pub terms: Vec<TermSpec>,
}

impl CylinderSpec {
    pub fn build(&self) -> CylinderFunction {
        let mut f = CylinderFunction::constant(self.constant);
        for t in &self.terms {
            f = f.term(&t.offsets, t.coeff);
        }
        f
    }
}

/// One `(μ_a, h_a)` pair of a gradient decomposition; the measure is a list
/// of `(site, weight)` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradientPartSpec {
    pub measure: Vec<(i64, f64)>,
    pub h: CylinderSpec,
}

/// Model section: a named preset or an explicit rate + decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<CylinderSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gradient: Vec<GradientPartSpec>,
}

impl ModelSection {
    pub fn build(&self) -> Result<RateModel> {
        if let Some(p) = &self.preset {
            if self.rate.is_some() || !self.gradient.is_empty() {
                return Err(Error::Validation(
                    "give either `preset` or an explicit rate, not both".into(),
                ));
            }
            return RateModel::preset(p);
        }
        let rate = self
            .rate
            .as_ref()
            .ok_or_else(|| Error::Validation("model section needs `preset` or `rate`".into()))?;
        if self.gradient.is_empty() {
            return Err(Error::Validation(
                "an explicit model needs its `gradient` decomposition".into(),
            ));
        }
        let parts = self
            .gradient
            .iter()
            .map(|p| GradientPart {
                measure: p.measure.clone(),
                h: p.h.build(),
            })
            .collect();
        RateModel::new(
            self.name.as_deref().unwrap_or("custom"),
            rate.build(),
            GradientDecomposition { parts },
        )
    }
}

fn default_one() -> f64 {
    1.0
}

/// Drive section: boundary densities, field, and scale factors. All times
/// are macroscopic; the chain speedup lives in the lattice section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveSection {
    pub alpha_left: TimeFn,
    pub alpha_right: TimeFn,
    #[serde(default = "FieldFn::zero")]
    pub field: FieldFn,
    #[serde(default = "default_one")]
    pub epsilon: f64,
    #[serde(default = "default_one")]
    pub ell: f64,
}

impl DriveSection {
    pub fn build(&self) -> DriveSchedule {
        DriveSchedule {
            alpha_left: self.alpha_left,
            alpha_right: self.alpha_right,
            field: self.field,
            epsilon: self.epsilon,
            ell: self.ell,
        }
    }
}

impl Default for DriveSection {
    fn default() -> Self {
        DriveSection {
            alpha_left: TimeFn::constant(0.5),
            alpha_right: TimeFn::constant(0.5),
            field: FieldFn::Zero,
            epsilon: 1.0,
            ell: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSection {
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_time: Option<f64>,
}

fn default_m() -> usize {
    256
}

fn default_newton_tol() -> f64 {
    1e-11
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default = "default_m")]
    pub m: usize,
    /// Macroscopic step; defaults to `1e-3/ℓ` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default = "default_newton_tol")]
    pub newton_tol: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            m: default_m(),
            dt: None,
            newton_tol: default_newton_tol(),
        }
    }
}

impl SolverSection {
    pub fn params(&self, ell: f64) -> SolverParams {
        let mut p = SolverParams::for_ell(ell);
        p.m = self.m;
        if let Some(dt) = self.dt {
            p.dt = dt;
        }
        p.newton_tol = self.newton_tol;
        p
    }
}

fn default_c_fit() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub checkpoints: Vec<f64>,
    #[serde(default)]
    pub replicas: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_block: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ns: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub nus: Vec<f64>,
    #[serde(default = "default_c_fit")]
    pub c_fit: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            checkpoints: Vec::new(),
            replicas: 0,
            base_seed: 0,
            k_block: None,
            ns: Vec::new(),
            nus: Vec::new(),
            c_fit: default_c_fit(),
            epsilon: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drive: Option<DriveSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lattice: Option<LatticeSection>,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
    /// Initial macroscopic profile, read as a function of `x ∈ [0,1]`
    /// (same closed forms as the time functions).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<TimeFn>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Validation(format!("config error: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Config::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn drive(&self) -> Result<DriveSchedule> {
        Ok(self
            .drive
            .as_ref()
            .ok_or_else(|| Error::Validation("missing [drive] section".into()))?
            .build())
    }

    pub fn lattice(&self) -> Result<&LatticeSection> {
        self.lattice
            .as_ref()
            .ok_or_else(|| Error::Validation("missing [lattice] section (key `n`)".into()))
    }
}

// ---------------------------------------------------------------------------
// Output helpers
// ---------------------------------------------------------------------------

/// Writes a CSV file with a header row and fixed 17-significant-digit
/// formatting, so regenerated outputs are bit-identical.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Writes `<name>.manifest.toml` next to an output: the full config text,
/// its content hash, the seed, and free-form notes. Everything needed to
/// regenerate the output bit-identically.
pub fn write_manifest(
    dir: &Path,
    name: &str,
    config_text: &str,
    seed: u64,
    notes: &[(&str, String)],
) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let mut hasher = Sha256::new();
    hasher.update(config_text.as_bytes());
    let hash = hasher.finalize();
    let hash_hex: String = hash.iter().map(|b| format!("{b:02x}")).collect();

    let path = dir.join(format!("{name}.manifest.toml"));
    let mut f = fs::File::create(&path)?;
    writeln!(f, "name = {name:?}")?;
    writeln!(f, "seed = {seed}")?;
    writeln!(f, "config_sha256 = {hash_hex:?}")?;
    for (k, v) in notes {
        writeln!(f, "{k} = {v:?}")?;
    }
    writeln!(f, "config = '''\n{config_text}'''")?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
[model]
preset = "ssep"

[drive]
alpha_left = { kind = "constant", value = 0.2 }
alpha_right = { kind = "linear", base = 0.6, slope = 0.1 }
epsilon = 0.5
ell = 2.0

[lattice]
n = 32
theta_time = 1024.0

[solver]
m = 128

[experiment]
checkpoints = [0.5, 1.0]
replicas = 100
base_seed = 7
"#;

    #[test]
    fn round_trip_is_identity() {
        let a = Config::parse(SAMPLE).unwrap();
        let text = a.to_toml();
        let b = Config::parse(&text).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unknown_keys_are_rejected_by_name() {
        let bad = SAMPLE.replace("replicas = 100", "replicsa = 100");
        let err = Config::parse(&bad).unwrap_err();
        assert!(err.to_string().contains("replicsa"), "{}", err);
    }

    #[test]
    fn missing_required_key_is_named() {
        let err = Config::parse("[lattice]\ntheta_time = 1.0\n").unwrap_err();
        assert!(err.to_string().contains('n'), "{}", err);
    }

    #[test]
    fn preset_model_builds() {
        let cfg = Config::parse(SAMPLE).unwrap();
        let model = cfg.model.build().unwrap();
        assert_eq!(model.name(), "ssep");
        let drive = cfg.drive().unwrap();
        assert_eq!(drive.ell, 2.0);
        assert_eq!(drive.alpha0(0.0), 0.2);
    }

    #[test]
    fn explicit_model_builds_and_verifies() {
        let text = r#"
[model]
name = "ssep-explicit"

[model.rate]
constant = 1.0

[[model.gradient]]
measure = [[0, 1.0], [-1, -1.0]]
h = { terms = [{ offsets = [0], coeff = 1.0 }] }
"#;
        let cfg = Config::parse(text).unwrap();
        let model = cfg.model.build().unwrap();
        assert!(model.verify_gradient());
    }

    #[test]
    fn manifest_and_csv_are_written() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("table.csv");
        write_csv(&csv, &["t", "value"], &[vec![0.0, 1.5], vec![1.0, 2.5]]).unwrap();
        let text = std::fs::read_to_string(&csv).unwrap();
        assert!(text.starts_with("t,value\n"));
        let manifest = write_manifest(
            dir.path(),
            "table",
            SAMPLE,
            99,
            &[("rows", "2".to_string())],
        )
        .unwrap();
        let mtext = std::fs::read_to_string(manifest).unwrap();
        assert!(mtext.contains("seed = 99"));
        assert!(mtext.contains("config_sha256"));
    }
}
