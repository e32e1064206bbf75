use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use quick_xml::events::Event;
use quick_xml::Reader;
use serde::{Deserialize, Serialize};

use super::IoError;
use crate::element::gd::N_GAUSS;
use crate::material::damage_unchecked;
use crate::mesh::Mesh;
use crate::solver::{Formulation, Solver};

/// VTK cell type of the ten-node tet. Its node order (vertices, then edges
/// 01 12 02 03 13 23) is the one used by [`Mesh::p2_nodes`].
const VTK_QUADRATIC_TETRA: u8 = 24;

/// Fields of one state for external viewers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSnapshot {
    pub step: usize,
    /// Displacement of every P2 node.
    pub displacement: Vec<[f64; 3]>,
    /// `(1/|T| int_T D(alpha)^2 dX)^(1/2)` per element, in `[0, 1)`.
    pub damage: Vec<f64>,
    pub lambda: Vec<f64>,
    pub alpha_bar_min: Vec<f64>,
    pub alpha_bar_max: Vec<f64>,
}

impl FieldSnapshot {
    pub fn capture<F: Formulation>(solver: &Solver<'_, F>, step: usize) -> Self {
        let mesh = solver.mesh();
        let dofmap = solver.dofmap();
        let x = &solver.state().x;
        let displacement = (0..mesh.n_p2_nodes())
            .map(|n| std::array::from_fn(|c| x[dofmap.u(n, c)]))
            .collect();
        let alpha = solver.gauss_alpha();
        let geometry = solver.geometry();
        let damage = alpha
            .iter()
            .zip(geometry)
            .map(|(a, geo)| {
                let sq: f64 = (0..N_GAUSS)
                    .map(|g| geo.points[g].weight * damage_unchecked(a[g])[0].powi(2))
                    .sum();
                (sq / geo.volume).sqrt()
            })
            .collect();
        let f = solver.formulation();
        let state = solver.state();
        let lambda = state.internal.iter().map(|i| f.multiplier(i)).collect();
        let committed: Vec<[f64; N_GAUSS]> =
            state.history.iter().map(|h| f.committed_alpha(h)).collect();
        Self {
            step,
            displacement,
            damage,
            lambda,
            alpha_bar_min: committed
                .iter()
                .map(|a| a.iter().copied().fold(f64::INFINITY, f64::min))
                .collect(),
            alpha_bar_max: committed
                .iter()
                .map(|a| a.iter().copied().fold(f64::NEG_INFINITY, f64::max))
                .collect(),
        }
    }

    /// Snapshot of the undeformed, undamaged mesh.
    pub fn undeformed(mesh: &Mesh) -> Self {
        let n = mesh.n_tets();
        Self {
            step: 0,
            displacement: vec![[0.0; 3]; mesh.n_p2_nodes()],
            damage: vec![0.0; n],
            lambda: vec![0.0; n],
            alpha_bar_min: vec![0.0; n],
            alpha_bar_max: vec![0.0; n],
        }
    }
}

fn data_array(out: &mut String, name: &str, components: usize, values: impl Iterator<Item = f64>) {
    writeln!(out, r#"        <DataArray type="Float64" Name="{name}" NumberOfComponents="{components}" format="ascii">"#).unwrap();
    out.push_str("         ");
    for v in values {
        write!(out, " {v:e}").unwrap();
    }
    out.push_str("\n        </DataArray>\n");
}

/// ASCII VTU unstructured grid with quadratic tets, the point displacement
/// and the element fields of `snapshot`.
pub fn vtu_string(mesh: &Mesh, snapshot: &FieldSnapshot) -> Result<String, IoError> {
    if snapshot.displacement.len() != mesh.n_p2_nodes() || snapshot.damage.len() != mesh.n_tets() {
        return Err(IoError::Mismatch(format!(
            "snapshot has {} nodes / {} cells, mesh {} / {}",
            snapshot.displacement.len(),
            snapshot.damage.len(),
            mesh.n_p2_nodes(),
            mesh.n_tets()
        )));
    }
    let (np, nc) = (mesh.n_p2_nodes(), mesh.n_tets());
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\"?>\n");
    out.push_str(
        "<VTKFile type=\"UnstructuredGrid\" version=\"1.0\" byte_order=\"LittleEndian\">\n",
    );
    out.push_str("  <UnstructuredGrid>\n");
    writeln!(
        out,
        "    <Piece NumberOfPoints=\"{np}\" NumberOfCells=\"{nc}\">"
    )
    .unwrap();
    out.push_str("      <Points>\n");
    data_array(
        &mut out,
        "coordinates",
        3,
        (0..np).flat_map(|n| mesh.node_coords(n)),
    );
    out.push_str("      </Points>\n      <Cells>\n");
    out.push_str(
        "        <DataArray type=\"Int64\" Name=\"connectivity\" format=\"ascii\">\n         ",
    );
    for t in 0..nc {
        for n in mesh.p2_nodes(t) {
            write!(out, " {n}").unwrap();
        }
    }
    out.push_str("\n        </DataArray>\n        <DataArray type=\"Int64\" Name=\"offsets\" format=\"ascii\">\n         ");
    for t in 1..=nc {
        write!(out, " {}", 10 * t).unwrap();
    }
    out.push_str("\n        </DataArray>\n        <DataArray type=\"UInt8\" Name=\"types\" format=\"ascii\">\n         ");
    for _ in 0..nc {
        write!(out, " {VTK_QUADRATIC_TETRA}").unwrap();
    }
    out.push_str("\n        </DataArray>\n      </Cells>\n");
    out.push_str("      <PointData Vectors=\"displacement\">\n");
    data_array(
        &mut out,
        "displacement",
        3,
        snapshot.displacement.iter().flatten().copied(),
    );
    out.push_str("      </PointData>\n      <CellData Scalars=\"damage\">\n");
    data_array(&mut out, "damage", 1, snapshot.damage.iter().copied());
    data_array(&mut out, "lambda", 1, snapshot.lambda.iter().copied());
    data_array(
        &mut out,
        "alpha_bar_min",
        1,
        snapshot.alpha_bar_min.iter().copied(),
    );
    data_array(
        &mut out,
        "alpha_bar_max",
        1,
        snapshot.alpha_bar_max.iter().copied(),
    );
    out.push_str("      </CellData>\n    </Piece>\n  </UnstructuredGrid>\n</VTKFile>\n");
    Ok(out)
}

pub fn export_fields(snapshot: &FieldSnapshot, mesh: &Mesh, path: &Path) -> Result<(), IoError> {
    let text = vtu_string(mesh, snapshot)?;
    std::fs::write(path, text).map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })
}

/// Piece sizes and named arrays of an ASCII VTU file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VtuData {
    pub n_points: usize,
    pub n_cells: usize,
    pub arrays: BTreeMap<String, Vec<f64>>,
}

/// Reads back the ASCII data arrays of a single-piece VTU file.
pub fn read_vtu(text: &str) -> Result<VtuData, IoError> {
    let mut reader = Reader::from_str(text);
    let mut data = VtuData::default();
    let mut current: Option<String> = None;
    let bad = |e: &dyn std::fmt::Display| IoError::Parse(format!("VTU: {e}"));
    loop {
        match reader.read_event().map_err(|e| bad(&e))? {
            Event::Start(e) => {
                let attr = |key: &[u8]| -> Result<Option<String>, IoError> {
                    for a in e.attributes() {
                        let a = a.map_err(|e| bad(&e))?;
                        if a.key.as_ref() == key {
                            return Ok(Some(a.unescape_value().map_err(|e| bad(&e))?.into_owned()));
                        }
                    }
                    Ok(None)
                };
                match e.name().as_ref() {
                    b"Piece" => {
                        let count = |k: &[u8]| -> Result<usize, IoError> {
                            attr(k)?
                                .and_then(|v| v.parse().ok())
                                .ok_or_else(|| bad(&"Piece without sizes"))
                        };
                        data.n_points = count(b"NumberOfPoints")?;
                        data.n_cells = count(b"NumberOfCells")?;
                    }
                    b"DataArray" => current = attr(b"Name")?,
                    _ => {}
                }
            }
            Event::Text(t) => {
                if let Some(name) = current.take() {
                    let text = t.decode().map_err(|e| bad(&e))?;
                    let values = text
                        .split_whitespace()
                        .map(|v| v.parse::<f64>())
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(|e| bad(&format!("array {name}: {e}")))?;
                    data.arrays.insert(name, values);
                }
            }
            Event::End(_) => current = None,
            Event::Eof => break,
            _ => {}
        }
    }
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_structured_cube;

    #[test]
    fn undeformed_round_trip() {
        let mesh = generate_structured_cube(2, 1.0).unwrap();
        let snap = FieldSnapshot::undeformed(&mesh);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fields.vtu");
        export_fields(&snap, &mesh, &path).unwrap();
        let data = read_vtu(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(data.n_points, mesh.n_p2_nodes());
        assert_eq!(data.n_cells, mesh.n_tets());
        assert_eq!(data.arrays["displacement"].len(), 3 * mesh.n_p2_nodes());
        assert!(data.arrays["displacement"].iter().all(|v| *v == 0.0));
        assert_eq!(data.arrays["connectivity"].len(), 10 * mesh.n_tets());
        assert_eq!(data.arrays["damage"].len(), mesh.n_tets());
        assert!(data.arrays["types"].iter().all(|t| *t == 24.0));
    }

    #[test]
    fn size_mismatch() {
        let mesh = generate_structured_cube(1, 1.0).unwrap();
        let other = generate_structured_cube(2, 1.0).unwrap();
        assert!(matches!(
            vtu_string(&mesh, &FieldSnapshot::undeformed(&other)),
            Err(IoError::Mismatch(_))
        ));
    }

    #[test]
    fn malformed_array() {
        let text = r#"<VTKFile><UnstructuredGrid><Piece NumberOfPoints="1" NumberOfCells="0"><DataArray Name="a">1 x</DataArray></Piece></UnstructuredGrid></VTKFile>"#;
        assert!(read_vtu(text).is_err());
    }
}
