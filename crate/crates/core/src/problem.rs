//! Problem files: the single source of truth for a run.
//!
//! A problem is a JSON document holding the system matrix (exact rational or
//! decimal strings), the nonlinearity as term-grammar text, the component
//! mode, the initial condition, and the numeric configuration. Validation
//! either produces a fully resolved configuration or a list of precise
//! errors; the resolved form (every default filled in) is written back into
//! the run directory so each reported number can be reproduced from one file.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::linalg::Mat;
use crate::rational::{parse_rat, rat_to_f64};
use crate::termlang::{parser::parse_nonlinearity, NonlinearitySpec, SpecMode};

/// Component-list mode, mirroring the hypotheses a nonlinearity can satisfy:
/// an infinite component family given by a rule, an exact finite list, or a
/// finite list with a remainder bounded beyond `β_last + margin`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "kebab-case")]
pub enum ModeFlag {
    H1,
    H2,
    FiniteWithRemainder(String),
}

impl Default for ModeFlag {
    fn default() -> Self {
        ModeFlag::H1
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Integrator absolute tolerance.
    pub abs: f64,
    /// Integrator relative tolerance.
    pub rel: f64,
    /// Eigenvalue snapping tolerance.
    pub snap: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { abs: 1e-12, rel: 1e-12, snap: 1e-9 }
    }
}

fn default_horizon() -> f64 {
    20.0
}

fn default_n_terms() -> usize {
    6
}

fn default_resonance() -> String {
    "fit".into()
}

fn default_n_samples() -> usize {
    2001
}

/// On-disk problem document. Every field beyond the matrix and the initial
/// condition has a default, and the fully resolved form is what a run writes
/// back as `resolved-config.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemFile {
    /// Row-major square matrix; entries are rational or decimal strings.
    pub matrix: Vec<Vec<String>>,
    /// Term-grammar text; empty means a linear problem (`F = 0`).
    #[serde(default)]
    pub nonlinearity: String,
    #[serde(default)]
    pub mode: ModeFlag,
    pub initial_condition: Vec<f64>,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_n_terms")]
    pub n_terms: usize,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Resonant-constant policy: `fit` (match this trajectory) or `zero`
    /// (canonical formal series).
    #[serde(default = "default_resonance")]
    pub resonance: String,
    #[serde(default = "default_n_samples")]
    pub n_samples: usize,
    /// Output directory; a CLI `--out` flag overrides it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<String>,
}

/// A problem file checked field by field, with the grammar parsed.
#[derive(Debug)]
pub struct ValidatedProblem {
    pub file: ProblemFile,
    pub dim: usize,
    pub matrix: Mat,
    pub spec: NonlinearitySpec,
    pub fit_resonance: bool,
}

impl ProblemFile {
    pub fn from_path(path: &Path) -> Result<ProblemFile, Vec<String>> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| vec![format!("reading {}: {e}", path.display())])?;
        serde_json::from_str(&text)
            .map_err(|e| vec![format!("parsing {}: {e}", path.display())])
    }

    /// Checks every field and parses the grammar; collects all problems
    /// rather than stopping at the first.
    pub fn validate(self) -> Result<ValidatedProblem, Vec<String>> {
        let mut errors = Vec::new();

        let dim = self.matrix.len();
        if dim == 0 {
            errors.push("matrix is empty".into());
        }
        let mut matrix = Mat::zeros(dim.max(1), dim.max(1));
        for (i, row) in self.matrix.iter().enumerate() {
            if row.len() != dim {
                errors.push(format!(
                    "matrix row {} has {} entries, expected {dim}",
                    i + 1,
                    row.len()
                ));
                continue;
            }
            for (j, entry) in row.iter().enumerate() {
                match parse_rat(entry) {
                    Ok(r) => matrix[(i, j)] = rat_to_f64(&r),
                    Err(e) => errors.push(format!("matrix[{}][{}]: {e}", i + 1, j + 1)),
                }
            }
        }

        if self.initial_condition.len() != dim {
            errors.push(format!(
                "initial condition has dimension {}, matrix has {dim}",
                self.initial_condition.len()
            ));
        }
        if self.initial_condition.iter().any(|v| !v.is_finite()) {
            errors.push("initial condition has a non-finite entry".into());
        }
        if !self.horizon.is_finite() || self.horizon <= 0.0 {
            errors.push(format!("horizon {} is not a positive finite number", self.horizon));
        }
        if self.n_terms == 0 || self.n_terms > 64 {
            errors.push(format!("n_terms {} outside 1..=64", self.n_terms));
        }
        if self.n_samples < 16 || self.n_samples > 2_000_000 {
            errors.push(format!("n_samples {} outside 16..=2000000", self.n_samples));
        }
        for (name, v) in
            [("abs", self.tolerances.abs), ("rel", self.tolerances.rel), ("snap", self.tolerances.snap)]
        {
            if !v.is_finite() || v <= 0.0 || v >= 1.0 {
                errors.push(format!("tolerance {name} = {v} outside (0, 1)"));
            }
        }
        let fit_resonance = match self.resonance.as_str() {
            "fit" => true,
            "zero" => false,
            other => {
                errors.push(format!("resonance policy {other:?} is neither \"fit\" nor \"zero\""));
                true
            }
        };

        let spec_mode = match &self.mode {
            ModeFlag::H1 => SpecMode::Infinite,
            ModeFlag::H2 => SpecMode::Finite,
            ModeFlag::FiniteWithRemainder(margin) => match parse_rat(margin) {
                Ok(m) if m > num_traits::Zero::zero() => SpecMode::FiniteWithRemainder { margin: m },
                Ok(m) => {
                    errors.push(format!("remainder margin {m} is not positive"));
                    SpecMode::Finite
                }
                Err(e) => {
                    errors.push(format!("remainder margin: {e}"));
                    SpecMode::Finite
                }
            },
        };

        let trimmed = self.nonlinearity.trim();
        let spec = if trimmed.is_empty() || trimmed == "0" {
            NonlinearitySpec::zero(dim.max(1))
        } else {
            match parse_nonlinearity(trimmed, dim.max(1), spec_mode) {
                Ok(s) => s,
                Err(e) => {
                    errors.push(format!("nonlinearity: {e}"));
                    NonlinearitySpec::zero(dim.max(1))
                }
            }
        };

        if errors.is_empty() {
            Ok(ValidatedProblem { file: self, dim, matrix, spec, fit_resonance })
        } else {
            Err(errors)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cubic_json() -> serde_json::Value {
        serde_json::json!({
            "matrix": [["1"]],
            "nonlinearity": "[-x_1^3]",
            "initial_condition": [0.5],
        })
    }

    #[test]
    fn minimal_problem_fills_defaults() {
        let pf: ProblemFile = serde_json::from_value(cubic_json()).unwrap();
        assert_eq!(pf.horizon, 20.0);
        assert_eq!(pf.n_terms, 6);
        assert_eq!(pf.resonance, "fit");
        assert_eq!(pf.tolerances.abs, 1e-12);
        let vp = pf.validate().unwrap();
        assert_eq!(vp.dim, 1);
        assert!(vp.fit_resonance);
        assert_eq!(vp.spec.n_components(), 1);
    }

    #[test]
    fn rational_matrix_entries_parse_exactly() {
        let pf: ProblemFile = serde_json::from_value(serde_json::json!({
            "matrix": [["2", "1/2"], ["0.5", "2"]],
            "initial_condition": [1.0, 1.0],
        }))
        .unwrap();
        let vp = pf.validate().unwrap();
        assert_eq!(vp.matrix[(0, 1)], 0.5);
        assert_eq!(vp.matrix[(1, 0)], 0.5);
    }

    #[test]
    fn malformed_fields_are_each_reported() {
        let pf: ProblemFile = serde_json::from_value(serde_json::json!({
            "matrix": [["1", "oops"], ["2"]],
            "nonlinearity": "x_1 +",
            "initial_condition": [0.5],
            "horizon": -3.0,
            "n_terms": 0,
            "resonance": "perhaps",
        }))
        .unwrap();
        let errs = pf.validate().unwrap_err();
        let text = errs.join("\n");
        assert!(text.contains("matrix[1][2]"), "{text}");
        assert!(text.contains("row 2"), "{text}");
        assert!(text.contains("initial condition has dimension 1"), "{text}");
        assert!(text.contains("horizon"), "{text}");
        assert!(text.contains("n_terms"), "{text}");
        assert!(text.contains("resonance"), "{text}");
        assert!(text.contains("nonlinearity"), "{text}");
    }

    #[test]
    fn mode_flags_map_to_spec_modes() {
        let mut v = cubic_json();
        v["mode"] = serde_json::json!("h2");
        let pf: ProblemFile = serde_json::from_value(v.clone()).unwrap();
        assert_eq!(pf.mode, ModeFlag::H2);

        v["mode"] = serde_json::json!({"finite-with-remainder": "1/10"});
        let pf: ProblemFile = serde_json::from_value(v).unwrap();
        let vp = pf.validate().unwrap();
        assert_eq!(vp.file.mode, ModeFlag::FiniteWithRemainder("1/10".into()));
    }

    #[test]
    fn resolved_form_round_trips() {
        let pf: ProblemFile = serde_json::from_value(cubic_json()).unwrap();
        let text = serde_json::to_string_pretty(&pf).unwrap();
        let back: ProblemFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back.horizon, pf.horizon);
        assert_eq!(back.n_terms, pf.n_terms);
        assert_eq!(back.matrix, pf.matrix);
    }
}
