//! Conforming triangulations with boundary tags, vertex patches, and
//! newest-vertex bisection.
//!
//! Convention: the refinement edge of triangle `[v0, v1, v2]` is the edge
//! `v1 v2`, opposite its first vertex. Local edge `e` is the edge opposite
//! local vertex `e`.

mod generate;
mod io;
mod refine;

use std::collections::HashMap;

pub use generate::build_mesh;
pub use io::{read_mesh, write_mesh};
pub use refine::bisect;

use crate::geometry::{Point, TriGeom};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BoundaryTag {
    Dirichlet,
    /// Neumann/Robin edge lying on the given polygon segment.
    Neumann(u32),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Edge {
    /// Endpoints, lower index first. This fixes the global edge direction.
    pub v: [usize; 2],
    /// Adjacent triangles; the second is `None` on the boundary.
    pub tris: [Option<usize>; 2],
    pub tag: Option<BoundaryTag>,
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.tris[1].is_none()
    }

    pub fn contains(&self, v: usize) -> bool {
        self.v[0] == v || self.v[1] == v
    }
}

#[derive(Clone, Debug)]
pub struct Mesh {
    pub vertices: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
    pub regions: Vec<u32>,
    pub generation: Vec<u32>,
    pub edges: Vec<Edge>,
    /// Edge ids per triangle; entry `e` is the edge opposite local vertex `e`.
    pub tri_edges: Vec<[usize; 3]>,
    /// For vertices created by bisection, the endpoints of the bisected edge.
    pub vertex_parents: Vec<Option<[usize; 2]>>,
    vertex_tri_ptr: Vec<usize>,
    vertex_tri: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VertexKind {
    Interior,
    Neumann,
    Dirichlet,
}

/// Elements sharing a vertex, with the patch edges sorted by role.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VertexPatch {
    pub vertex: usize,
    pub elements: Vec<usize>,
    /// Edges containing the vertex and shared by two patch elements.
    pub interior_edges: Vec<usize>,
    /// Patch-boundary edges not containing the vertex.
    pub exterior_edges: Vec<usize>,
    /// Patch-boundary edges containing the vertex, on the Dirichlet boundary.
    pub dirichlet_edges: Vec<usize>,
    /// Patch-boundary edges containing the vertex, on the Neumann boundary.
    pub neumann_edges: Vec<usize>,
}

pub(crate) fn edge_key(a: usize, b: usize) -> [usize; 2] {
    if a < b {
        [a, b]
    } else {
        [b, a]
    }
}

pub(crate) fn local_edge(tri: &[usize; 3], e: usize) -> [usize; 2] {
    [tri[(e + 1) % 3], tri[(e + 2) % 3]]
}

impl Mesh {
    /// Builds the derived edge structure and checks all mesh invariants.
    /// Every boundary edge must appear in `boundary`.
    pub fn new(
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        regions: Vec<u32>,
        generation: Vec<u32>,
        boundary: &HashMap<[usize; 2], BoundaryTag>,
        vertex_parents: Vec<Option<[usize; 2]>>,
    ) -> Result<Self> {
        let nv = vertices.len();
        if regions.len() != triangles.len() || generation.len() != triangles.len() {
            return Err(Error::Mesh("per-triangle arrays have inconsistent lengths".into()));
        }
        let mut edges: Vec<Edge> = Vec::with_capacity(triangles.len() * 3 / 2 + nv);
        let mut tri_edges = Vec::with_capacity(triangles.len());
        let mut index: HashMap<[usize; 2], usize> = HashMap::with_capacity(triangles.len() * 2);
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= nv) {
                return Err(Error::Mesh(format!("triangle {t} references a missing vertex")));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::Mesh(format!("triangle {t} has repeated vertices")));
            }
            let g = TriGeom::new([vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]]);
            if !(g.area > 0.0) {
                return Err(Error::Mesh(format!("triangle {t} is not positively oriented")));
            }
            let mut te = [0; 3];
            for (e, slot) in te.iter_mut().enumerate() {
                let [a, b] = local_edge(tri, e);
                let key = edge_key(a, b);
                let id = *index.entry(key).or_insert_with(|| {
                    edges.push(Edge { v: key, tris: [None, None], tag: None });
                    edges.len() - 1
                });
                let edge = &mut edges[id];
                if edge.tris[0].is_none() {
                    edge.tris[0] = Some(t);
                } else if edge.tris[1].is_none() {
                    edge.tris[1] = Some(t);
                } else {
                    return Err(Error::Mesh(format!("edge {key:?} is shared by more than two triangles")));
                }
                *slot = id;
            }
            tri_edges.push(te);
        }
        for (key, tag) in boundary {
            match index.get(key) {
                Some(&id) if edges[id].is_boundary() => edges[id].tag = Some(*tag),
                Some(_) => return Err(Error::Mesh(format!("boundary tag on interior edge {key:?}"))),
                None => return Err(Error::Mesh(format!("boundary tag on missing edge {key:?}"))),
            }
        }
        if let Some(e) = edges.iter().find(|e| e.is_boundary() && e.tag.is_none()) {
            return Err(Error::Mesh(format!("boundary edge {:?} is untagged", e.v)));
        }
        let mut count = vec![0usize; nv + 1];
        for tri in &triangles {
            for &v in tri {
                count[v + 1] += 1;
            }
        }
        for i in 0..nv {
            count[i + 1] += count[i];
        }
        let mut fill = count.clone();
        let mut vertex_tri = vec![0; count[nv]];
        for (t, tri) in triangles.iter().enumerate() {
            for &v in tri {
                vertex_tri[fill[v]] = t;
                fill[v] += 1;
            }
        }
        let mut parents = vertex_parents;
        parents.resize(nv, None);
        Ok(Mesh {
            vertices,
            triangles,
            regions,
            generation,
            edges,
            tri_edges,
            vertex_parents: parents,
            vertex_tri_ptr: count,
            vertex_tri,
        })
    }

    /// Axis-aligned rectangle split into `nx × ny` cells, each cut along its
    /// rising diagonal. Sides are numbered bottom, right, top, left, and
    /// `side_tag` chooses the tag of each.
    pub fn rectangle_grid(
        corner: Point,
        size: [f64; 2],
        nx: usize,
        ny: usize,
        side_tag: impl Fn(usize) -> BoundaryTag,
    ) -> Mesh {
        let id = |i: usize, j: usize| j * (nx + 1) + i;
        let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                vertices.push([
                    corner[0] + size[0] * i as f64 / nx as f64,
                    corner[1] + size[1] * j as f64 / ny as f64,
                ]);
            }
        }
        let mut triangles = Vec::with_capacity(2 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
                triangles.push([a, b, c]);
                triangles.push([a, c, d]);
            }
        }
        let mut boundary = HashMap::new();
        for i in 0..nx {
            boundary.insert(edge_key(id(i, 0), id(i + 1, 0)), side_tag(0));
            boundary.insert(edge_key(id(i, ny), id(i + 1, ny)), side_tag(2));
        }
        for j in 0..ny {
            boundary.insert(edge_key(id(nx, j), id(nx, j + 1)), side_tag(1));
            boundary.insert(edge_key(id(0, j), id(0, j + 1)), side_tag(3));
        }
        let triangles: Vec<[usize; 3]> = triangles
            .into_iter()
            .map(|t| with_longest_edge_first(&vertices, t))
            .collect();
        let n = triangles.len();
        Mesh::new(vertices, triangles, vec![0; n], vec![0; n], &boundary, vec![])
            .expect("structured grid is a valid mesh")
    }

    /// The unit square as `n × n` cells with every side Dirichlet.
    pub fn unit_square(n: usize) -> Mesh {
        Mesh::rectangle_grid([0.0, 0.0], [1.0, 1.0], n, n, |_| BoundaryTag::Dirichlet)
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn geom(&self, t: usize) -> TriGeom {
        let [a, b, c] = self.triangles[t];
        TriGeom::new([self.vertices[a], self.vertices[b], self.vertices[c]])
    }

    /// Global edge id of the refinement edge of triangle `t`.
    pub fn refinement_edge(&self, t: usize) -> usize {
        self.tri_edges[t][0]
    }

    pub fn vertex_triangles(&self, v: usize) -> &[usize] {
        &self.vertex_tri[self.vertex_tri_ptr[v]..self.vertex_tri_ptr[v + 1]]
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        let [a, b] = self.edges[e].v;
        crate::geometry::dist(self.vertices[a], self.vertices[b])
    }

    pub fn total_area(&self) -> f64 {
        (0..self.num_triangles()).map(|t| self.geom(t).area).sum()
    }

    pub fn min_angle(&self) -> f64 {
        (0..self.num_triangles()).map(|t| self.geom(t).min_angle()).fold(f64::INFINITY, f64::min)
    }

    /// Outward unit normal of boundary edge `e` (with respect to its triangle).
    pub fn outward_normal(&self, e: usize) -> Point {
        let t = self.edges[e].tris[0].expect("edge has a triangle");
        let le = self.tri_edges[t].iter().position(|&x| x == e).unwrap();
        let [a, b] = local_edge(&self.triangles[t], le);
        let (pa, pb) = (self.vertices[a], self.vertices[b]);
        let len = crate::geometry::dist(pa, pb);
        [(pb[1] - pa[1]) / len, -(pb[0] - pa[0]) / len]
    }

    /// Unit normal of edge `e` fixed by its global direction (lower → higher
    /// vertex index), rotated clockwise from the tangent.
    pub fn edge_normal(&self, e: usize) -> Point {
        let [a, b] = self.edges[e].v;
        let (pa, pb) = (self.vertices[a], self.vertices[b]);
        let len = crate::geometry::dist(pa, pb);
        [(pb[1] - pa[1]) / len, -(pb[0] - pa[0]) / len]
    }

    /// Labels each vertex; a vertex touching any Dirichlet edge is Dirichlet.
    pub fn classify_vertices(&self) -> Result<Vec<VertexKind>> {
        let mut kind = vec![VertexKind::Interior; self.num_vertices()];
        for e in &self.edges {
            if !e.is_boundary() {
                continue;
            }
            let k = match e.tag {
                Some(BoundaryTag::Dirichlet) => VertexKind::Dirichlet,
                Some(BoundaryTag::Neumann(_)) => VertexKind::Neumann,
                None => return Err(Error::Mesh(format!("boundary edge {:?} is untagged", e.v))),
            };
            for &v in &e.v {
                if kind[v] != VertexKind::Dirichlet {
                    kind[v] = k;
                }
            }
        }
        Ok(kind)
    }

    pub fn vertex_patch(&self, a: usize) -> VertexPatch {
        let elements = self.vertex_triangles(a).to_vec();
        let mut patch = VertexPatch {
            vertex: a,
            elements,
            interior_edges: vec![],
            exterior_edges: vec![],
            dirichlet_edges: vec![],
            neumann_edges: vec![],
        };
        let mut seen: Vec<usize> = Vec::with_capacity(3 * patch.elements.len());
        for &t in &patch.elements {
            for &e in &self.tri_edges[t] {
                if seen.contains(&e) {
                    continue;
                }
                seen.push(e);
                let edge = &self.edges[e];
                if !edge.contains(a) {
                    patch.exterior_edges.push(e);
                } else {
                    match edge.tag {
                        None => patch.interior_edges.push(e),
                        Some(BoundaryTag::Dirichlet) => patch.dirichlet_edges.push(e),
                        Some(BoundaryTag::Neumann(_)) => patch.neumann_edges.push(e),
                    }
                }
            }
        }
        patch
    }

    /// Checks conformity, orientation, and tagging invariants.
    pub fn check(&self) -> Result<()> {
        for (t, _) in self.triangles.iter().enumerate() {
            if !(self.geom(t).area > 0.0) {
                return Err(Error::Mesh(format!("triangle {t} is not positively oriented")));
            }
        }
        for e in &self.edges {
            match (e.is_boundary(), e.tag) {
                (true, None) => return Err(Error::Mesh("untagged boundary edge".into())),
                (false, Some(_)) => return Err(Error::Mesh("tagged interior edge".into())),
                _ => {}
            }
        }
        // Hanging vertices show up as vertices lying in the interior of an edge.
        for (id, e) in self.edges.iter().enumerate() {
            if !e.is_boundary() {
                continue;
            }
            let [a, b] = e.v;
            let len = self.edge_length(id);
            for t in self.vertex_triangles(a) {
                for &v in &self.triangles[*t] {
                    if v != a && v != b {
                        let d = crate::geometry::segment_distance(self.vertices[v], self.vertices[a], self.vertices[b]);
                        if d < 1e-14 * len {
                            return Err(Error::Mesh(format!("vertex {v} hangs on edge {:?}", e.v)));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Number of boundary edges.
    pub fn num_boundary_edges(&self) -> usize {
        self.edges.iter().filter(|e| e.is_boundary()).count()
    }
}

/// Rotates a counter-clockwise triangle so its longest edge is opposite the
/// first vertex; ties go to the smallest opposite-vertex index.
pub(crate) fn with_longest_edge_first(vertices: &[Point], t: [usize; 3]) -> [usize; 3] {
    let mut best = 0;
    let mut best_len = -1.0;
    for e in 0..3 {
        let [a, b] = local_edge(&t, e);
        let len = crate::geometry::dist(vertices[a], vertices[b]);
        let better = len > best_len || (len == best_len && t[e] < t[best]);
        if better {
            best = e;
            best_len = len;
        }
    }
    [t[best], t[(best + 1) % 3], t[(best + 2) % 3]]
}
