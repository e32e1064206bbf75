use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::mesh::{generate_structured_cube, Mesh, MeshError};

/// Dimensions entering the count test of one mesh. `dim_v` is the number of
/// vertices, `dim_m` the number of tets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountEntry {
    pub label: u32,
    pub dim_v: usize,
    pub dim_m: usize,
    /// `dim D_alpha - dim D_lambda` with vertex damage only.
    pub count_without_bubble: i64,
    /// The same difference with the element bubble added.
    pub count_with_bubble: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CountReport {
    pub entries: Vec<CountEntry>,
}

/// Damage dofs minus multiplier dofs, with and without the bubble.
pub fn count_test(mesh: &Mesh, label: u32) -> CountEntry {
    let dim_v = mesh.n_vertices();
    let dim_m = mesh.n_tets();
    let multipliers = dim_m as i64;
    CountEntry {
        label,
        dim_v,
        dim_m,
        count_without_bubble: dim_v as i64 - multipliers,
        count_with_bubble: (dim_v + dim_m) as i64 - multipliers,
    }
}

/// Count test on unit cubes with `2^s` cells per axis for each `s` in `steps`.
pub fn cube_count_report(steps: impl IntoIterator<Item = u32>) -> Result<CountReport, MeshError> {
    let entries = steps
        .into_iter()
        .map(|s| generate_structured_cube(1 << s, 1.0).map(|m| count_test(&m, s)))
        .collect::<Result<_, _>>()?;
    Ok(CountReport { entries })
}

impl CountReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,dim_V,dim_M,without_bubble,with_bubble\n");
        for e in &self.entries {
            writeln!(
                out,
                "{},{},{},{},{}",
                e.label, e.dim_v, e.dim_m, e.count_without_bubble, e.count_with_bubble
            )
            .unwrap();
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{:>4} {:>8} {:>8} {:>16} {:>13}\n",
            "s", "dim V", "dim M", "without bubble", "with bubble"
        );
        for e in &self.entries {
            writeln!(
                out,
                "{:>4} {:>8} {:>8} {:>16} {:>13}",
                e.label, e.dim_v, e.dim_m, e.count_without_bubble, e.count_with_bubble
            )
            .unwrap();
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_quarter_plate_with_hole;

    #[test]
    fn cube_table() {
        let r = cube_count_report(1..=3).unwrap();
        let rows: Vec<_> = r
            .entries
            .iter()
            .map(|e| {
                (
                    e.dim_v,
                    e.dim_m,
                    e.count_without_bubble,
                    e.count_with_bubble,
                )
            })
            .collect();
        assert_eq!(
            rows,
            vec![
                (27, 40, -13, 27),
                (125, 320, -195, 125),
                (729, 2560, -1831, 729)
            ]
        );
    }

    #[test]
    fn closed_forms() {
        for e in cube_count_report(1..=4).unwrap().entries {
            let s = e.label;
            assert_eq!(e.dim_v, (2usize.pow(s) + 1).pow(3));
            assert_eq!(e.dim_m, 5 * 2usize.pow(3 * s));
        }
    }

    #[test]
    fn with_bubble_equals_vertices_on_other_meshes() {
        for r in 0..3 {
            let m = generate_quarter_plate_with_hole(50.0, 100.0, 10.0, r).unwrap();
            let e = count_test(&m, r);
            assert_eq!(e.count_with_bubble, m.n_vertices() as i64);
            assert_eq!(
                e.count_without_bubble,
                m.n_vertices() as i64 - m.n_tets() as i64
            );
        }
    }

    #[test]
    fn csv_layout() {
        let csv = cube_count_report([1]).unwrap().to_csv();
        assert_eq!(csv.lines().nth(1), Some("1,27,40,-13,27"));
    }
}
