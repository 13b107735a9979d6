//! Plain-text mesh format:
//!
//! ```text
//! vertices N
//! x y            (N lines)
//! triangles M
//! i j k region   (M lines; refinement edge is j-k)
//! boundary B
//! i j tag        (B lines; tag is D or N<segment>)
//! ```

use std::collections::HashMap;
use std::fmt::Write as _;

use super::{edge_key, BoundaryTag, Mesh};
use crate::{Error, Result};

pub fn write_mesh(mesh: &Mesh) -> String {
    let mut s = String::new();
    writeln!(s, "vertices {}", mesh.num_vertices()).unwrap();
    for p in &mesh.vertices {
        writeln!(s, "{:.16e} {:.16e}", p[0], p[1]).unwrap();
    }
    writeln!(s, "triangles {}", mesh.num_triangles()).unwrap();
    for (t, tri) in mesh.triangles.iter().enumerate() {
        writeln!(s, "{} {} {} {}", tri[0], tri[1], tri[2], mesh.regions[t]).unwrap();
    }
    writeln!(s, "boundary {}", mesh.num_boundary_edges()).unwrap();
    for e in mesh.edges.iter().filter(|e| e.is_boundary()) {
        let tag = match e.tag {
            Some(BoundaryTag::Dirichlet) => "D".to_string(),
            Some(BoundaryTag::Neumann(k)) => format!("N{k}"),
            None => unreachable!("mesh invariant: boundary edges are tagged"),
        };
        writeln!(s, "{} {} {}", e.v[0], e.v[1], tag).unwrap();
    }
    s
}

pub fn read_mesh(text: &str) -> Result<Mesh> {
    let lines: Vec<Vec<&str>> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.split_whitespace().collect())
        .collect();
    let mut r = Reader { lines: &lines, pos: 0 };

    let nv = r.header("vertices")?;
    let mut vertices = Vec::with_capacity(nv);
    for f in r.body(nv, 2)? {
        vertices.push([parse_f(f[0])?, parse_f(f[1])?]);
    }
    let nt = r.header("triangles")?;
    let mut triangles = Vec::with_capacity(nt);
    let mut regions = Vec::with_capacity(nt);
    for f in r.body(nt, 4)? {
        triangles.push([parse_u(f[0])?, parse_u(f[1])?, parse_u(f[2])?]);
        regions.push(parse_u(f[3])? as u32);
    }
    let nb = r.header("boundary")?;
    let mut boundary = HashMap::new();
    for f in r.body(nb, 3)? {
        let tag = match f[2] {
            "D" => BoundaryTag::Dirichlet,
            t if t.starts_with('N') => BoundaryTag::Neumann(
                t[1..].parse().map_err(|_| Error::Parse(format!("bad boundary tag '{t}'")))?,
            ),
            t => return Err(Error::Parse(format!("bad boundary tag '{t}'"))),
        };
        if boundary.insert(edge_key(parse_u(f[0])?, parse_u(f[1])?), tag).is_some() {
            return Err(Error::Parse("boundary edge listed twice".into()));
        }
    }
    if r.pos != lines.len() {
        return Err(Error::Parse("trailing content after boundary section".into()));
    }
    let n = triangles.len();
    Mesh::new(vertices, triangles, regions, vec![0; n], &boundary, vec![])
}

struct Reader<'a, 'b> {
    lines: &'a [Vec<&'b str>],
    pos: usize,
}

impl<'a, 'b> Reader<'a, 'b> {
    fn header(&mut self, name: &str) -> Result<usize> {
        match self.lines.get(self.pos).map(|l| l.as_slice()) {
            Some([h, n]) if *h == name => {
                self.pos += 1;
                parse_u(n)
            }
            _ => Err(Error::Parse(format!("expected '{name} <count>'"))),
        }
    }

    fn body(&mut self, n: usize, fields: usize) -> Result<&'a [Vec<&'b str>]> {
        let out = self
            .lines
            .get(self.pos..self.pos + n)
            .ok_or_else(|| Error::Parse("truncated section".into()))?;
        if out.iter().any(|l| l.len() != fields) {
            return Err(Error::Parse(format!("expected {fields} fields per line")));
        }
        self.pos += n;
        Ok(out)
    }
}

fn parse_f(s: &str) -> Result<f64> {
    s.parse::<f64>().map_err(|e| Error::Parse(format!("'{s}': {e}")))
}

fn parse_u(s: &str) -> Result<usize> {
    s.parse::<usize>().map_err(|e| Error::Parse(format!("'{s}': {e}")))
}
