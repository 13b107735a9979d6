use std::collections::HashMap;

use super::{edge_key, Mesh};

/// Newest-vertex bisection of the marked elements plus the closure needed
/// for conformity. Vertex indices of `mesh` are preserved; new vertices are
/// appended in edge order and record their parent edge.
pub fn bisect(mesh: &Mesh, marked: &[usize]) -> Mesh {
    let ne = mesh.num_edges();
    let mut mark = vec![false; ne];
    for &t in marked {
        mark[mesh.refinement_edge(t)] = true;
    }
    // Closure: a triangle with any marked edge must also bisect its
    // refinement edge.
    loop {
        let mut changed = false;
        for te in &mesh.tri_edges {
            if !mark[te[0]] && (mark[te[1]] || mark[te[2]]) {
                mark[te[0]] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let mut vertices = mesh.vertices.clone();
    let mut parents: Vec<Option<[usize; 2]>> = vec![None; vertices.len()];
    let mut mid = vec![usize::MAX; ne];
    for (e, edge) in mesh.edges.iter().enumerate() {
        if mark[e] {
            let [a, b] = edge.v;
            let (pa, pb) = (mesh.vertices[a], mesh.vertices[b]);
            mid[e] = vertices.len();
            vertices.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
            parents.push(Some(edge.v));
        }
    }

    let mut boundary = HashMap::new();
    for (e, edge) in mesh.edges.iter().enumerate() {
        if let Some(tag) = edge.tag {
            let [a, b] = edge.v;
            if mark[e] {
                boundary.insert(edge_key(a, mid[e]), tag);
                boundary.insert(edge_key(mid[e], b), tag);
            } else {
                boundary.insert(edge.v, tag);
            }
        }
    }

    let mut triangles = Vec::with_capacity(mesh.num_triangles() * 2);
    let mut regions = Vec::with_capacity(mesh.num_triangles() * 2);
    let mut generation = Vec::with_capacity(mesh.num_triangles() * 2);
    for (t, &[p0, p1, p2]) in mesh.triangles.iter().enumerate() {
        let [e0, e1, e2] = mesh.tri_edges[t];
        let (reg, gen) = (mesh.regions[t], mesh.generation[t]);
        let mut push = |tri: [usize; 3], g: u32| {
            triangles.push(tri);
            regions.push(reg);
            generation.push(g);
        };
        if !mark[e0] {
            push([p0, p1, p2], gen);
            continue;
        }
        let m = mid[e0];
        // Children (m, p0, p1) and (m, p2, p0); the newest vertex m comes
        // first, so each child's refinement edge is an edge of the parent.
        if mark[e2] {
            let m1 = mid[e2];
            push([m1, m, p0], gen + 2);
            push([m1, p1, m], gen + 2);
        } else {
            push([m, p0, p1], gen + 1);
        }
        if mark[e1] {
            let m2 = mid[e1];
            push([m2, m, p2], gen + 2);
            push([m2, p0, m], gen + 2);
        } else {
            push([m, p2, p0], gen + 1);
        }
    }
    Mesh::new(vertices, triangles, regions, generation, &boundary, parents)
        .expect("newest-vertex bisection preserves mesh invariants")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_mesh;
    use crate::problem::ProblemSpec;
    use proptest::prelude::*;

    #[test]
    fn uniform_bisection_of_two_triangles() {
        let m = Mesh::unit_square(1);
        let r = bisect(&m, &[0, 1]);
        assert_eq!(r.num_triangles(), 4);
        r.check().unwrap();
        assert!((r.total_area() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn single_mark_closure_is_conforming() {
        let m = bisect(&Mesh::unit_square(1), &[0, 1]);
        let r = bisect(&m, &[2]);
        r.check().unwrap();
        assert!((r.total_area() - 1.0).abs() < 1e-14);
        // The marked element's children carry at least generation +1.
        let parent_gen = m.generation[2];
        assert!(r.generation.iter().any(|&g| g > parent_gen));
        for e in &r.edges {
            if !e.is_boundary() {
                assert!(e.tris[1].is_some());
            }
        }
    }

    #[test]
    fn repeated_uniform_refinement_keeps_angles() {
        let mut m = Mesh::unit_square(1);
        let a0 = m.min_angle();
        for k in 1..=8 {
            let all: Vec<usize> = (0..m.num_triangles()).collect();
            m = bisect(&m, &all);
            assert_eq!(m.num_triangles(), 2 * (1 << k));
            assert!(m.min_angle() >= a0 - 1e-12);
        }
        m.check().unwrap();
    }

    #[test]
    fn midpoints_record_parents() {
        let m = Mesh::unit_square(1);
        let r = bisect(&m, &[0]);
        let new = r.num_vertices() - 1;
        let [a, b] = r.vertex_parents[new].unwrap();
        let p = r.vertices[new];
        assert_eq!(p, [(r.vertices[a][0] + r.vertices[b][0]) / 2.0, (r.vertices[a][1] + r.vertices[b][1]) / 2.0]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn random_marking_preserves_invariants(seed in 0u64..1000, rounds in 1usize..6) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let spec = ProblemSpec::dirichlet_laplacian(vec![
                [0.0, 0.0], [2.0, 0.0], [2.0, 1.0], [1.0, 1.0], [1.0, 2.0], [0.0, 2.0],
            ]).with_max_area(0.3);
            let mut m = build_mesh(&spec).unwrap();
            let a0 = m.min_angle();
            for _ in 0..rounds {
                let marked: Vec<usize> = (0..m.num_triangles()).filter(|_| rng.gen_bool(0.3)).collect();
                m = bisect(&m, &marked);
                prop_assert!(m.check().is_ok());
                prop_assert!((m.total_area() - 3.0).abs() < 1e-10 * 3.0);
            }
            // Shape regularity: finitely many similarity classes keep the
            // minimum angle bounded away from zero.
            prop_assert!(m.min_angle() > 0.25 * a0);
        }
    }
}
