use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{Mesh, MeshError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeshFormat {
    SimpleNodesElements,
    GmshAscii,
}

pub fn import_mesh(path: &Path, format: MeshFormat) -> Result<Mesh, MeshError> {
    let text = std::fs::read_to_string(path)?;
    match format {
        MeshFormat::SimpleNodesElements => parse_simple(&text),
        MeshFormat::GmshAscii => parse_gmsh_v4(&text),
    }
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            inner: text.lines().enumerate(),
            last: 0,
        }
    }

    /// Next non-blank line with its 1-based number.
    fn next(&mut self) -> Result<(usize, &'a str), MeshError> {
        for (i, line) in self.inner.by_ref() {
            self.last = i + 1;
            let line = line.trim();
            if !line.is_empty() {
                return Ok((i + 1, line));
            }
        }
        Err(MeshError::Format {
            line: self.last + 1,
            msg: "unexpected end of file".into(),
        })
    }
}

fn fields<T: std::str::FromStr>(line: &str, lineno: usize, n: usize) -> Result<Vec<T>, MeshError> {
    let out: Vec<T> = line
        .split_whitespace()
        .map(|t| t.parse::<T>())
        .collect::<Result<_, _>>()
        .map_err(|_| MeshError::Format {
            line: lineno,
            msg: format!("cannot parse {line:?}"),
        })?;
    if out.len() < n {
        return Err(MeshError::Format {
            line: lineno,
            msg: format!("expected {n} fields, found {}", out.len()),
        });
    }
    Ok(out)
}

fn header(line: &str, lineno: usize, keyword: &str) -> Result<usize, MeshError> {
    let mut it = line.split_whitespace();
    match (it.next(), it.next().and_then(|c| c.parse::<usize>().ok())) {
        (Some(k), Some(n)) if k.eq_ignore_ascii_case(keyword) => Ok(n),
        _ => Err(MeshError::Format {
            line: lineno,
            msg: format!("expected \"{keyword} <count>\""),
        }),
    }
}

/// `nodes N` / `id x y z` lines, then `tets M` / `id v1 v2 v3 v4` (1-based ids).
pub fn parse_simple(text: &str) -> Result<Mesh, MeshError> {
    let mut lines = Lines::new(text);
    let (ln, line) = lines.next()?;
    let n_nodes = header(line, ln, "nodes")?;
    let mut ids = HashMap::with_capacity(n_nodes);
    let mut vertices = Vec::with_capacity(n_nodes);
    for _ in 0..n_nodes {
        let (ln, line) = lines.next()?;
        let f: Vec<f64> = fields(line, ln, 4)?;
        let id = f[0] as usize;
        if ids.insert(id, vertices.len()).is_some() {
            return Err(MeshError::Format {
                line: ln,
                msg: format!("duplicate node id {id}"),
            });
        }
        vertices.push([f[1], f[2], f[3]]);
    }
    let (ln, line) = lines.next()?;
    let n_tets = header(line, ln, "tets")?;
    let mut tets = Vec::with_capacity(n_tets);
    for _ in 0..n_tets {
        let (ln, line) = lines.next()?;
        let f: Vec<usize> = fields(line, ln, 5)?;
        tets.push(lookup(&ids, [f[1], f[2], f[3], f[4]], ln)?);
    }
    Mesh::new(vertices, tets)
}

fn lookup(
    ids: &HashMap<usize, usize>,
    nodes: [usize; 4],
    line: usize,
) -> Result<[usize; 4], MeshError> {
    let mut out = [0; 4];
    for (o, n) in out.iter_mut().zip(nodes) {
        *o = *ids.get(&n).ok_or_else(|| MeshError::Format {
            line,
            msg: format!("unknown node id {n}"),
        })?;
    }
    Ok(out)
}

pub fn write_simple(mesh: &Mesh) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "nodes {}", mesh.n_vertices());
    for (i, p) in mesh.vertices().iter().enumerate() {
        let _ = writeln!(s, "{} {:.17e} {:.17e} {:.17e}", i + 1, p[0], p[1], p[2]);
    }
    let _ = writeln!(s, "tets {}", mesh.n_tets());
    for (i, t) in mesh.tets().iter().enumerate() {
        let _ = writeln!(
            s,
            "{} {} {} {} {}",
            i + 1,
            t[0] + 1,
            t[1] + 1,
            t[2] + 1,
            t[3] + 1
        );
    }
    s
}

const GMSH_TET4: usize = 4;

/// Reads the `$Nodes` and `$Elements` sections of a version-4 ASCII file.
/// Element blocks other than 4-node tets are skipped.
pub fn parse_gmsh_v4(text: &str) -> Result<Mesh, MeshError> {
    let mut lines = Lines::new(text);
    let mut ids = HashMap::new();
    let mut vertices = Vec::new();
    let mut tets = Vec::new();
    let mut seen_nodes = false;
    let mut seen_elements = false;
    loop {
        let (ln, line) = match lines.next() {
            Ok(l) => l,
            Err(_) if seen_nodes && seen_elements => break,
            Err(e) => return Err(e),
        };
        match line {
            "$MeshFormat" => {
                let (ln, line) = lines.next()?;
                let version: Vec<f64> =
                    fields(line.split_whitespace().next().unwrap_or(""), ln, 1)?;
                if version[0] < 4.0 || version[0] >= 5.0 {
                    return Err(MeshError::Format {
                        line: ln,
                        msg: format!("unsupported version {}", version[0]),
                    });
                }
                if line.split_whitespace().nth(1) != Some("0") {
                    return Err(MeshError::Format {
                        line: ln,
                        msg: "only ASCII files are supported".into(),
                    });
                }
                let (ln, line) = lines.next()?;
                if line != "$EndMeshFormat" {
                    return Err(MeshError::Format {
                        line: ln,
                        msg: "expected $EndMeshFormat".into(),
                    });
                }
            }
            "$Nodes" => {
                let (ln, line) = lines.next()?;
                let h: Vec<usize> = fields(line, ln, 4)?;
                for _ in 0..h[0] {
                    let (ln, line) = lines.next()?;
                    let b: Vec<usize> = fields(line, ln, 4)?;
                    if b[2] != 0 {
                        return Err(MeshError::Format {
                            line: ln,
                            msg: "parametric nodes are not supported".into(),
                        });
                    }
                    let count = b[3];
                    let mut tags = Vec::with_capacity(count);
                    for _ in 0..count {
                        let (ln, line) = lines.next()?;
                        tags.push(fields::<usize>(line, ln, 1)?[0]);
                    }
                    for tag in tags {
                        let (ln, line) = lines.next()?;
                        let x: Vec<f64> = fields(line, ln, 3)?;
                        ids.insert(tag, vertices.len());
                        vertices.push([x[0], x[1], x[2]]);
                    }
                }
                let (ln, line) = lines.next()?;
                if line != "$EndNodes" {
                    return Err(MeshError::Format {
                        line: ln,
                        msg: "expected $EndNodes".into(),
                    });
                }
                seen_nodes = true;
            }
            "$Elements" => {
                let (ln, line) = lines.next()?;
                let h: Vec<usize> = fields(line, ln, 4)?;
                for _ in 0..h[0] {
                    let (ln, line) = lines.next()?;
                    let b: Vec<usize> = fields(line, ln, 4)?;
                    for _ in 0..b[3] {
                        let (ln, line) = lines.next()?;
                        if b[2] == GMSH_TET4 {
                            let e: Vec<usize> = fields(line, ln, 5)?;
                            tets.push(lookup(&ids, [e[1], e[2], e[3], e[4]], ln)?);
                        }
                    }
                }
                let (ln, line) = lines.next()?;
                if line != "$EndElements" {
                    return Err(MeshError::Format {
                        line: ln,
                        msg: "expected $EndElements".into(),
                    });
                }
                seen_elements = true;
            }
            s if s.starts_with("$End") => {
                return Err(MeshError::Format {
                    line: ln,
                    msg: format!("unmatched {s}"),
                });
            }
            s if s.starts_with('$') => {
                // skip unknown sections
                let end = format!("$End{}", &s[1..]);
                loop {
                    let (_, l) = lines.next()?;
                    if l == end {
                        break;
                    }
                }
            }
            _ => {
                return Err(MeshError::Format {
                    line: ln,
                    msg: format!("unexpected line {line:?}"),
                })
            }
        }
    }
    Mesh::new(vertices, tets)
}
