//! Bundled benchmark problems and published coefficient tables.

use pwa_cbf::{BarrierKind, Piece, PiecewiseAffineBarrier};
use serde::Deserialize;

pub const EXAMPLES: [&str; 4] = ["ex5", "ex6", "ex7", "ex8"];

const PROBLEMS: [(&str, &str); 4] = [
    ("ex5", include_str!("../fixtures/ex5.json")),
    ("ex6", include_str!("../fixtures/ex6.json")),
    ("ex7", include_str!("../fixtures/ex7.json")),
    ("ex8", include_str!("../fixtures/ex8.json")),
];

const TABLES: [(&str, &str); 7] = [
    ("ex5_max", include_str!("../fixtures/tables/ex5_max.json")),
    ("ex5_min", include_str!("../fixtures/tables/ex5_min.json")),
    ("ex6_max", include_str!("../fixtures/tables/ex6_max.json")),
    ("ex6_min", include_str!("../fixtures/tables/ex6_min.json")),
    ("ex7_max", include_str!("../fixtures/tables/ex7_max.json")),
    ("ex7_min", include_str!("../fixtures/tables/ex7_min.json")),
    ("ex8_max", include_str!("../fixtures/tables/ex8_max.json")),
];

/// Text of a bundled problem, looked up by file stem (`ex5`, `path/to/ex5.json`).
pub fn problem_text(name: &str) -> Option<&'static str> {
    let stem = std::path::Path::new(name).file_stem()?.to_str()?;
    PROBLEMS.iter().find(|(k, _)| *k == stem).map(|(_, t)| *t)
}

/// Bundled problem, parsed and validated.
pub fn problem(name: &str) -> anyhow::Result<crate::ProblemSpec> {
    let text = problem_text(name).ok_or_else(|| anyhow::anyhow!("no bundled example named {name}"))?;
    crate::parse_problem(text)
}

#[derive(Clone, Debug, Deserialize)]
pub struct PieceRow {
    pub c: Vec<f64>,
    pub d: f64,
}

#[derive(Clone, Debug, Deserialize)]
pub struct TableRow {
    pub point: Vec<f64>,
    pub pieces: Vec<PieceRow>,
}

/// Published barrier coefficients for one example and kind.
#[derive(Clone, Debug, Deserialize)]
pub struct CoefficientTable {
    pub example: String,
    pub kind: BarrierKind,
    pub rows: Vec<TableRow>,
}

impl TableRow {
    pub fn barrier(&self, kind: BarrierKind, lambda: f64) -> pwa_cbf::Result<PiecewiseAffineBarrier> {
        let pieces = self.pieces.iter().map(|p| Piece::new(p.c.clone(), p.d)).collect();
        PiecewiseAffineBarrier::new(kind, lambda, pieces)
    }
}

/// Bundled coefficient table, e.g. `table("ex5", BarrierKind::Max)`.
pub fn table(example: &str, kind: BarrierKind) -> Option<CoefficientTable> {
    let key = format!(
        "{example}_{}",
        match kind {
            BarrierKind::Max => "max",
            BarrierKind::Min => "min",
        }
    );
    let text = TABLES.iter().find(|(k, _)| *k == key)?.1;
    Some(serde_json::from_str(text).expect("bundled table parses"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_problems_load() {
        for name in EXAMPLES {
            let p = problem(name).unwrap();
            assert_eq!(p.name, name);
            assert!(!p.test_points.is_empty());
            for pt in &p.test_points {
                assert!(!p.xu.contains(pt, 0.0), "{name} test point {pt:?} lies in the unsafe set");
            }
        }
    }

    #[test]
    fn ex5_shape() {
        let p = problem("ex5.json").unwrap();
        assert_eq!((p.system.num_modes(), p.n()), (3, 2));
        assert_eq!(p.xu.bounding_box().unwrap().unwrap(), vec![(-0.5, 0.5), (-0.5, 0.5)]);
        assert_eq!(p.test_points.len(), 11);
    }

    #[test]
    fn ex6_shape() {
        let p = problem("ex6").unwrap();
        assert_eq!(p.system.num_modes(), 2);
        assert_eq!(p.system.modes()[1].a.row(1), &[-0.0711, -0.0142]);
        assert_eq!(p.xu.bounding_box().unwrap().unwrap(), vec![(0.0, 1.0), (0.0, 1.0)]);
        assert_eq!((p.points(BarrierKind::Max).len(), p.points(BarrierKind::Min).len()), (16, 14));
    }

    #[test]
    fn ex7_modes_follow_brockett_equations() {
        let p = problem("ex7").unwrap();
        assert_eq!(p.system.num_modes(), 9);
        let x = [0.3, -0.7, 1.1];
        let inputs = [-1.0, 0.0, 1.0];
        for (a, &u1) in inputs.iter().enumerate() {
            for (b, &u2) in inputs.iter().enumerate() {
                let f = p.system.flow(3 * a + b, &x).unwrap();
                let want = [u1, u2, x[0] * u2 - x[1] * u1];
                for r in 0..3 {
                    assert!((f[r] - want[r]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn ex8_modes_track_reference_velocity() {
        let p = problem("ex8").unwrap();
        assert_eq!((p.system.num_modes(), p.n(), p.params.d_max), (6, 6, 14));
        // at V = Vref the velocity derivative vanishes and positions move at Vref
        let refs = [[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, -1.0]];
        for (l, v) in refs.iter().enumerate() {
            let x = [0.2, -0.4, 0.9, v[0], v[1], v[2]];
            let f = p.system.flow(l, &x).unwrap();
            for r in 0..3 {
                assert!((f[r] - v[r]).abs() < 1e-12);
                assert!(f[r + 3].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn tables_match_problem_dimensions() {
        for ex in EXAMPLES {
            let p = problem(ex).unwrap();
            for kind in [BarrierKind::Max, BarrierKind::Min] {
                let Some(t) = table(ex, kind) else { continue };
                assert_eq!((t.example.as_str(), t.kind), (ex, kind));
                for row in &t.rows {
                    let b = row.barrier(kind, 0.0).unwrap();
                    assert_eq!(b.dim(), p.n());
                }
            }
        }
    }
}
