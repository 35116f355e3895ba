//! Problem files: system, initial and unsafe sets, and search parameters.

use std::fmt;
use std::path::Path;
use std::time::Duration;

use pwa_cbf::synth::{check_sets, CandidateCenter, SynthConfig};
use pwa_cbf::{BarrierKind, Polyhedron, SwitchedAffineSystem};
use serde::{Deserialize, Serialize};

use crate::fixtures;

/// Malformed or inconsistent user input; the CLI maps it to exit code 2.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputError(pub String);

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

fn input(msg: impl Into<String>) -> anyhow::Error {
    InputError(msg.into()).into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSpec {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SetSpec {
    Box(Vec<[f64; 2]>),
    Halfspaces(HalfspaceSpec),
    Point(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HalfspaceSpec {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

/// Per-kind decay rates overriding `params.lambda`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KindLambda {
    pub max: Option<f64>,
    pub min: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSpec {
    pub k: usize,
    pub lambda: f64,
    pub epsilon: f64,
    pub gamma: f64,
    pub r_min: f64,
    pub d_max: usize,
    pub kind: BarrierKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub candidate_center: CandidateCenter,
    #[serde(default)]
    pub lambda_by_kind: KindLambda,
    #[serde(default)]
    pub time_limit_secs: Option<f64>,
}

/// On-disk problem layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemFile {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub description: Option<String>,
    pub n: usize,
    pub modes: Vec<ModeSpec>,
    pub x0: SetSpec,
    pub xu: SetSpec,
    pub params: ParamsSpec,
    /// Benchmark test points (max kind, and min kind unless overridden).
    #[serde(default)]
    pub test_points: Vec<Vec<f64>>,
    #[serde(default)]
    pub test_points_min: Option<Vec<Vec<f64>>>,
}

/// A validated problem.
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemSpec {
    pub name: String,
    pub system: SwitchedAffineSystem,
    pub x0: Polyhedron,
    pub xu: Polyhedron,
    pub params: ParamsSpec,
    pub test_points: Vec<Vec<f64>>,
    pub test_points_min: Option<Vec<Vec<f64>>>,
}

impl ProblemSpec {
    pub fn n(&self) -> usize {
        self.system.dim()
    }

    pub fn lambda(&self, kind: BarrierKind) -> f64 {
        let over = match kind {
            BarrierKind::Max => self.params.lambda_by_kind.max,
            BarrierKind::Min => self.params.lambda_by_kind.min,
        };
        over.unwrap_or(self.params.lambda)
    }

    /// Synthesis configuration for `kind`.
    pub fn config(&self, kind: BarrierKind) -> SynthConfig {
        let p = &self.params;
        SynthConfig {
            k: p.k,
            lambda: self.lambda(kind),
            epsilon: p.epsilon,
            gamma: p.gamma,
            r_min: p.r_min,
            d_max: p.d_max,
            kind,
            candidate_center: p.candidate_center,
            seed: p.seed,
            time_limit: p.time_limit_secs.map(Duration::from_secs_f64),
            ..SynthConfig::default()
        }
    }

    pub fn points(&self, kind: BarrierKind) -> &[Vec<f64>] {
        match (kind, &self.test_points_min) {
            (BarrierKind::Min, Some(p)) => p,
            _ => &self.test_points,
        }
    }

    /// Same problem with the initial set replaced by `{x}`.
    pub fn with_initial_point(&self, x: &[f64]) -> anyhow::Result<Self> {
        if x.len() != self.n() {
            return Err(input(format!("initial point has {} entries, expected {}", x.len(), self.n())));
        }
        let x0 = Polyhedron::point(x).map_err(|e| input(format!("x0: {e}")))?;
        check_sets(&self.system, &x0, &self.xu).map_err(|e| input(e.to_string()))?;
        Ok(Self { x0, ..self.clone() })
    }
}

fn check_matrix(field: &str, m: &[Vec<f64>], rows: Option<usize>, cols: usize) -> anyhow::Result<()> {
    if let Some(r) = rows {
        if m.len() != r {
            return Err(input(format!("{field}: expected {r} rows, got {}", m.len())));
        }
    }
    for (i, row) in m.iter().enumerate() {
        if row.len() != cols {
            return Err(input(format!("{field}[{i}]: expected {cols} columns, got {}", row.len())));
        }
    }
    Ok(())
}

fn check_vector(field: &str, v: &[f64], len: usize) -> anyhow::Result<()> {
    if v.len() != len {
        return Err(input(format!("{field}: expected {len} entries, got {}", v.len())));
    }
    Ok(())
}

fn build_set(field: &str, spec: &SetSpec, n: usize) -> anyhow::Result<Polyhedron> {
    let set = match spec {
        SetSpec::Box(bounds) => {
            if bounds.len() != n {
                return Err(input(format!("{field}.box: expected {n} intervals, got {}", bounds.len())));
            }
            if let Some(i) = bounds.iter().position(|[lo, hi]| lo > hi) {
                return Err(input(format!("{field}.box[{i}]: lower bound exceeds upper bound")));
            }
            let pairs: Vec<(f64, f64)> = bounds.iter().map(|&[lo, hi]| (lo, hi)).collect();
            Polyhedron::from_box(&pairs)
        }
        SetSpec::Halfspaces(h) => {
            check_matrix(&format!("{field}.halfspaces.A"), &h.a, None, n)?;
            check_vector(&format!("{field}.halfspaces.b"), &h.b, h.a.len())?;
            Polyhedron::from_rows(&h.a, h.b.clone())
        }
        SetSpec::Point(x) => {
            check_vector(&format!("{field}.point"), x, n)?;
            Polyhedron::point(x)
        }
    };
    set.map_err(|e| input(format!("{field}: {e}")))
}

impl TryFrom<ProblemFile> for ProblemSpec {
    type Error = anyhow::Error;

    fn try_from(f: ProblemFile) -> anyhow::Result<Self> {
        let n = f.n;
        if n == 0 {
            return Err(input("n: must be positive"));
        }
        if f.modes.is_empty() {
            return Err(input("modes: at least one mode is required"));
        }
        for (l, m) in f.modes.iter().enumerate() {
            check_matrix(&format!("modes[{l}].A"), &m.a, Some(n), n)?;
            check_vector(&format!("modes[{l}].b"), &m.b, n)?;
        }
        let pairs: Vec<_> = f.modes.iter().map(|m| (m.a.clone(), m.b.clone())).collect();
        let system = SwitchedAffineSystem::from_pairs(&pairs).map_err(|e| input(format!("modes: {e}")))?;
        let x0 = build_set("x0", &f.x0, n)?;
        let xu = build_set("xu", &f.xu, n)?;
        check_sets(&system, &x0, &xu).map_err(|e| input(e.to_string()))?;
        for (field, pts) in [("test_points", Some(&f.test_points)), ("test_points_min", f.test_points_min.as_ref())] {
            for (i, p) in pts.into_iter().flatten().enumerate() {
                check_vector(&format!("{field}[{i}]"), p, n)?;
            }
        }
        let spec = Self {
            name: f.name.unwrap_or_else(|| "problem".into()),
            system,
            x0,
            xu,
            params: f.params,
            test_points: f.test_points,
            test_points_min: f.test_points_min,
        };
        for kind in [BarrierKind::Max, BarrierKind::Min] {
            spec.config(kind).validate().map_err(|e| input(format!("params: {e}")))?;
        }
        Ok(spec)
    }
}

/// Parses a problem from JSON text. Syntax and schema errors carry the
/// line and column reported by the parser.
pub fn parse_problem(text: &str) -> anyhow::Result<ProblemSpec> {
    let file: ProblemFile = serde_json::from_str(text).map_err(|e| input(e.to_string()))?;
    ProblemSpec::try_from(file)
}

/// Reads a problem file. A missing path naming a bundled example
/// (`ex5`, `ex6.json`, …) falls back to the bundled copy.
pub fn load_problem(path: impl AsRef<Path>) -> anyhow::Result<ProblemSpec> {
    let path = path.as_ref();
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => match fixtures::problem_text(&path.to_string_lossy()) {
            Some(t) if !path.exists() => t.to_string(),
            _ => return Err(input(format!("{}: {e}", path.display()))),
        },
    };
    parse_problem(&text).map_err(|e| input(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "n": 1,
        "modes": [{"A": [[-1.0]], "b": [0.0]}],
        "x0": {"point": [0.0]},
        "xu": {"box": [[2.0, 3.0]]},
        "params": {"k": 1, "lambda": 1.0, "epsilon": 0.01, "gamma": 10, "r_min": 0.001, "d_max": 4, "kind": "max"}
    }"#;

    #[test]
    fn minimal_problem_loads_with_defaults() {
        let p = parse_problem(MINIMAL).unwrap();
        assert_eq!(p.n(), 1);
        assert_eq!(p.params.seed, 0);
        assert_eq!(p.params.candidate_center, CandidateCenter::Mve);
        assert_eq!(p.xu.num_rows(), 2);
        assert_eq!(p.config(BarrierKind::Min).kind, BarrierKind::Min);
    }

    #[test]
    fn missing_field_is_named() {
        let text = MINIMAL.replace(r#""modes": [{"A": [[-1.0]], "b": [0.0]}],"#, "");
        let err = parse_problem(&text).unwrap_err().to_string();
        assert!(err.contains("missing field `modes`"), "{err}");
        let text = MINIMAL.replace(r#""r_min": 0.001, "#, "");
        let err = parse_problem(&text).unwrap_err().to_string();
        assert!(err.contains("r_min"), "{err}");
    }

    #[test]
    fn malformed_number_reports_line() {
        let text = MINIMAL.replace("\"gamma\": 10", "\"gamma\": 1e");
        let err = parse_problem(&text).unwrap_err().to_string();
        assert!(err.contains("line 6"), "{err}");
    }

    #[test]
    fn dimension_mismatch_names_field() {
        let text = MINIMAL.replace(r#""b": [0.0]}"#, r#""b": [0.0, 1.0]}"#);
        let err = parse_problem(&text).unwrap_err().to_string();
        assert!(err.contains("modes[0].b"), "{err}");
        let text = MINIMAL.replace(r#"{"box": [[2.0, 3.0]]}"#, r#"{"box": [[2.0, 3.0], [0, 1]]}"#);
        assert!(parse_problem(&text).unwrap_err().to_string().contains("xu.box"));
    }

    #[test]
    fn overlapping_sets_are_rejected() {
        let text = MINIMAL.replace(r#"{"point": [0.0]}"#, r#"{"point": [2.5]}"#);
        let err = parse_problem(&text).unwrap_err();
        assert!(err.downcast_ref::<InputError>().is_some());
        assert!(err.to_string().contains("intersect"), "{err}");
    }

    #[test]
    fn lambda_override_per_kind() {
        let text = MINIMAL.replace(r#""kind": "max""#, r#""kind": "max", "lambda_by_kind": {"min": 0.5}"#);
        let p = parse_problem(&text).unwrap();
        assert_eq!(p.lambda(BarrierKind::Max), 1.0);
        assert_eq!(p.lambda(BarrierKind::Min), 0.5);
    }
}
