use std::collections::{HashMap, HashSet};

use spade::{
    AngleLimit, ConstrainedDelaunayTriangulation, Point2, RefinementParameters, Triangulation,
};

use super::{edge_key, read_mesh, with_longest_edge_first, BoundaryTag, Mesh};
use crate::geometry::{contains_closed, orient, segment_distance, Point};
use crate::problem::{ProblemSpec, SegmentKind};
use crate::{Error, Result};

/// Initial mesh for a problem: loaded from the configured mesh file, or a
/// refined constrained Delaunay triangulation of the polygon.
pub fn build_mesh(spec: &ProblemSpec) -> Result<Mesh> {
    spec.validate()?;
    if let Some(path) = &spec.mesh.file {
        let text = std::fs::read_to_string(path)?;
        let mesh = read_mesh(&text)?;
        if mesh.regions.iter().any(|&r| r as usize >= spec.regions.len()) {
            return Err(Error::Mesh("mesh file references an undefined region".into()));
        }
        for e in &mesh.edges {
            if let Some(BoundaryTag::Neumann(s)) = e.tag {
                if !matches!(spec.segments.get(s as usize), Some(SegmentKind::Neumann { .. })) {
                    return Err(Error::Mesh(format!("mesh file tags segment {s} as Neumann but the problem does not")));
                }
            }
        }
        return Ok(mesh);
    }
    triangulate(spec)
}

fn triangulate(spec: &ProblemSpec) -> Result<Mesh> {
    let diam = spec.diameter();
    // Rounding of constrained vertices scales with |x|, not with the domain size.
    let reach = spec.vertices.iter().map(|v| v[0].abs().max(v[1].abs())).fold(0.0, f64::max);
    let tol = 1e-12 * diam + 64.0 * f64::EPSILON * reach;
    let mut points: Vec<Point2<f64>> = spec.vertices.iter().map(|p| Point2::new(p[0], p[1])).collect();
    let n = points.len();
    let mut constraints: Vec<[usize; 2]> = (0..n).map(|i| [i, (i + 1) % n]).collect();
    for region in &spec.regions {
        if let Some(poly) = &region.polygon {
            let base = points.len();
            points.extend(poly.iter().map(|p| Point2::new(p[0], p[1])));
            let k = poly.len();
            constraints.extend((0..k).map(|i| [base + i, base + (i + 1) % k]));
        }
    }
    let mut cdt = ConstrainedDelaunayTriangulation::<Point2<f64>>::bulk_load_cdt(points, constraints)
        .map_err(|e| Error::Geometry(format!("triangulation failed: {e:?}")))?;
    // Outer-face exclusion works by constraint parity, which region polygons
    // break; the centroid test below handles those meshes instead.
    let has_regions = spec.regions.iter().any(|r| r.polygon.is_some());
    let mut params = RefinementParameters::<f64>::new()
        .exclude_outer_faces(!has_regions)
        .with_angle_limit(AngleLimit::from_deg(spec.mesh.min_angle_deg.clamp(0.0, 30.0)));
    if spec.mesh.max_area.is_finite() {
        params = params.with_max_allowed_area(spec.mesh.max_area);
    }
    let result = cdt.refine(params);
    let excluded: HashSet<usize> = result.excluded_faces.iter().map(|f| f.index()).collect();

    let mut vertex_map: HashMap<usize, usize> = HashMap::new();
    let mut vertices: Vec<Point> = Vec::new();
    let mut triangles = Vec::new();
    for face in cdt.inner_faces() {
        if excluded.contains(&face.fix().index()) {
            continue;
        }
        let vs = face.vertices();
        let pos: Vec<Point> = vs.iter().map(|v| [v.position().x, v.position().y]).collect();
        let c = [(pos[0][0] + pos[1][0] + pos[2][0]) / 3.0, (pos[0][1] + pos[1][1] + pos[2][1]) / 3.0];
        if !contains_closed(&spec.vertices, c, tol) {
            continue;
        }
        let mut ids = [0usize; 3];
        for (k, v) in vs.iter().enumerate() {
            let key = v.fix().index();
            ids[k] = *vertex_map.entry(key).or_insert_with(|| {
                vertices.push(pos[k]);
                vertices.len() - 1
            });
        }
        if orient(pos[0], pos[1], pos[2]) < 0.0 {
            ids.swap(1, 2);
        }
        triangles.push(ids);
    }
    if triangles.is_empty() {
        return Err(Error::Geometry("triangulation produced no interior triangles".into()));
    }
    // Renumber vertices in spade order for a stable layout.
    let mut order: Vec<(usize, usize)> = vertex_map.iter().map(|(&s, &l)| (s, l)).collect();
    order.sort_unstable();
    let mut renum = vec![0; vertices.len()];
    let mut sorted = Vec::with_capacity(vertices.len());
    for (new, &(_, old)) in order.iter().enumerate() {
        renum[old] = new;
        sorted.push(vertices[old]);
    }
    let vertices = sorted;
    let triangles: Vec<[usize; 3]> = triangles
        .into_iter()
        .map(|t| with_longest_edge_first(&vertices, t.map(|v| renum[v])))
        .collect();
    let regions: Vec<u32> = triangles
        .iter()
        .map(|t| {
            let c = [
                (vertices[t[0]][0] + vertices[t[1]][0] + vertices[t[2]][0]) / 3.0,
                (vertices[t[0]][1] + vertices[t[1]][1] + vertices[t[2]][1]) / 3.0,
            ];
            spec.region_of(c)
        })
        .collect();

    let mut count: HashMap<[usize; 2], usize> = HashMap::new();
    for t in &triangles {
        for e in 0..3 {
            *count.entry(edge_key(t[(e + 1) % 3], t[(e + 2) % 3])).or_default() += 1;
        }
    }
    let mut boundary = HashMap::new();
    let mut keys: Vec<[usize; 2]> = count.iter().filter(|(_, &c)| c == 1).map(|(k, _)| *k).collect();
    keys.sort_unstable();
    for key in keys {
        let (a, b) = (vertices[key[0]], vertices[key[1]]);
        let seg = (0..n).find(|&i| {
            let (p, q) = (spec.vertices[i], spec.vertices[(i + 1) % n]);
            segment_distance(a, p, q) <= tol && segment_distance(b, p, q) <= tol
        });
        let seg = seg.ok_or_else(|| {
            Error::Geometry(format!("boundary edge {a:?}-{b:?} does not lie on the polygon boundary"))
        })?;
        let tag = match spec.segments[seg] {
            SegmentKind::Dirichlet => BoundaryTag::Dirichlet,
            SegmentKind::Neumann { .. } => BoundaryTag::Neumann(seg as u32),
        };
        boundary.insert(key, tag);
    }
    let nt = triangles.len();
    Mesh::new(vertices, triangles, regions, vec![0; nt], &boundary, vec![])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::polygon_area;
    use std::f64::consts::PI;

    pub(crate) fn dumbbell(m: f64) -> Vec<Point> {
        let y1 = 3.0 * m * PI / 32.0;
        let (a, b) = (PI, 5.0 * PI / 4.0);
        vec![
            [0.0, 0.0],
            [a, 0.0],
            [a, y1],
            [b, y1],
            [b, 0.0],
            [9.0 * PI / 4.0, 0.0],
            [9.0 * PI / 4.0, PI],
            [b, PI],
            [b, PI - y1],
            [a, PI - y1],
            [a, PI],
            [0.0, PI],
        ]
    }

    #[test]
    fn rectangle_area_is_exact() {
        let spec = ProblemSpec::rectangle(9.0 * PI / 4.0, PI).with_max_area(0.5);
        let mesh = build_mesh(&spec).unwrap();
        mesh.check().unwrap();
        let exact = 9.0 * PI * PI / 4.0;
        assert!((mesh.total_area() - exact).abs() <= 1e-12 * exact);
    }

    #[test]
    fn dumbbell_mesh_lies_in_polygon_and_covers_boundary() {
        let poly = dumbbell(4.0);
        let spec = ProblemSpec::dirichlet_laplacian(poly.clone()).with_max_area(0.3);
        let mesh = build_mesh(&spec).unwrap();
        mesh.check().unwrap();
        let tol = 1e-12 * spec.diameter();
        assert!(mesh.vertices.iter().all(|p| contains_closed(&poly, *p, tol)));
        let boundary_len: f64 =
            (0..mesh.num_edges()).filter(|&e| mesh.edges[e].is_boundary()).map(|e| mesh.edge_length(e)).sum();
        let perimeter: f64 = (0..poly.len()).map(|i| crate::geometry::dist(poly[i], poly[(i + 1) % poly.len()])).sum();
        assert!((boundary_len - perimeter).abs() < 1e-12 * perimeter);
        assert!((mesh.total_area() - polygon_area(&poly)).abs() < 1e-12 * polygon_area(&poly));
    }

    #[test]
    fn region_polygons_keep_every_face() {
        let text = "vertices = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]\n\
                    [[boundary]]\nsegments = [0, 1, 2, 3]\nkind = \"dirichlet\"\n\
                    [[region]]\n\
                    [[region]]\nweight = 2.0\npolygon = [[0.5, 0.5], [1.0, 0.5], [1.0, 1.0], [0.5, 1.0]]\n\
                    [[region]]\nweight = 3.0\npolygon = [[0.1, 0.1], [0.3, 0.1], [0.3, 0.3], [0.1, 0.3]]\n\
                    [mesh]\nmax_area = 0.02\n";
        let spec = ProblemSpec::from_toml_str(text, None).unwrap();
        let mesh = build_mesh(&spec).unwrap();
        mesh.check().unwrap();
        assert!((mesh.total_area() - 1.0).abs() < 1e-12);
        let area_of = |r: u32| -> f64 {
            (0..mesh.num_triangles()).filter(|&t| mesh.regions[t] == r).map(|t| mesh.geom(t).area).sum()
        };
        assert!((area_of(1) - 0.25).abs() < 1e-12);
        assert!((area_of(2) - 0.04).abs() < 1e-12);
    }

    #[test]
    fn self_intersecting_polygon_is_rejected() {
        let spec = ProblemSpec::dirichlet_laplacian(vec![[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]]);
        assert!(matches!(build_mesh(&spec), Err(Error::Geometry(_))));
    }

    #[test]
    fn refinement_edge_is_longest() {
        let spec = ProblemSpec::unit_square().with_max_area(0.01);
        let mesh = build_mesh(&spec).unwrap();
        for t in 0..mesh.num_triangles() {
            let r = mesh.edge_length(mesh.refinement_edge(t));
            for &e in &mesh.tri_edges[t] {
                assert!(mesh.edge_length(e) <= r);
            }
        }
    }

    #[test]
    fn meshing_is_deterministic() {
        let spec = ProblemSpec::dirichlet_laplacian(dumbbell(4.0)).with_max_area(0.2);
        let a = build_mesh(&spec).unwrap();
        let b = build_mesh(&spec).unwrap();
        assert_eq!(a.vertices, b.vertices);
        assert_eq!(a.triangles, b.triangles);
    }
}
