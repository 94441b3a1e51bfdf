//! Triangulations of a square with uniform refinement and face connectivity.
//!
//! The base mesh splits the square along its main diagonal into two
//! counterclockwise triangles. Each refinement splits every triangle into 4
//! congruent children through the edge midpoints, so `r` refinements give
//! `2 * 4^r` elements. Vertex deduplication works on an integer lattice
//! (doubled per level), never on floating-point coordinates.

use std::collections::HashMap;

use nalgebra::{Matrix2, Vector2};

/// Interior face shared by exactly two elements.
#[derive(Debug, Clone)]
pub struct InteriorFace {
    pub left: usize,
    pub right: usize,
    pub local_edge_left: usize,
    pub local_edge_right: usize,
    /// Unit normal pointing from `left` into `right`.
    pub normal: Vector2<f64>,
    pub length: f64,
    /// Endpoint vertex indices.
    pub vertices: [usize; 2],
}

/// Boundary face owned by a single element.
#[derive(Debug, Clone)]
pub struct BoundaryFace {
    pub element: usize,
    pub local_edge: usize,
    /// Outward unit normal.
    pub normal: Vector2<f64>,
    pub length: f64,
    pub vertices: [usize; 2],
}

/// Affine map from the reference triangle (0,0)-(1,0)-(0,1) to an element.
#[derive(Debug, Clone)]
pub struct AffineMap {
    pub origin: Vector2<f64>,
    pub jacobian: Matrix2<f64>,
    pub inverse: Matrix2<f64>,
    /// det(jacobian) = 2 * element area for counterclockwise elements.
    pub det: f64,
}

impl AffineMap {
    /// Map reference coordinates to physical coordinates.
    pub fn to_physical(&self, xi: f64, eta: f64) -> Vector2<f64> {
        self.origin + self.jacobian * Vector2::new(xi, eta)
    }

    /// Map physical coordinates to reference coordinates.
    pub fn to_reference(&self, x: &Vector2<f64>) -> Vector2<f64> {
        self.inverse * (x - self.origin)
    }
}

/// Conforming triangulation of `[-half_width, half_width]^2`.
#[derive(Debug, Clone)]
pub struct Mesh {
    pub vertices: Vec<Vector2<f64>>,
    /// Vertex index triples, counterclockwise.
    pub elements: Vec<[usize; 3]>,
    pub interior_faces: Vec<InteriorFace>,
    pub boundary_faces: Vec<BoundaryFace>,
    areas: Vec<f64>,
    maps: Vec<AffineMap>,
    half_width: f64,
}

impl Mesh {
    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn element_area(&self, element: usize) -> f64 {
        self.areas[element]
    }

    pub fn affine_map(&self, element: usize) -> &AffineMap {
        &self.maps[element]
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    /// Coordinates of the three vertices of an element.
    pub fn element_vertices(&self, element: usize) -> [Vector2<f64>; 3] {
        let [a, b, c] = self.elements[element];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }
}

/// Build the square mesh `[-half_width, half_width]^2` refined `refinements`
/// times; the base mesh is the square split along its main diagonal.
pub fn build_square_mesh(half_width: f64, refinements: u32) -> Mesh {
    assert!(half_width > 0.0, "half_width must be positive");

    // Integer lattice vertices on the grid {0..2^r}^2.
    let mut lattice: Vec<(i64, i64)> = vec![(0, 0), (1, 0), (1, 1), (0, 1)];
    let mut elements: Vec<[usize; 3]> = vec![[0, 1, 2], [0, 2, 3]];

    for _ in 0..refinements {
        for v in &mut lattice {
            v.0 *= 2;
            v.1 *= 2;
        }
        let mut midpoint_of: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(elements.len() * 4);
        for &[a, b, c] in &elements {
            let mut mid = |i: usize, j: usize, lattice: &mut Vec<(i64, i64)>| -> usize {
                let key = (i.min(j), i.max(j));
                *midpoint_of.entry(key).or_insert_with(|| {
                    let p = lattice[i];
                    let q = lattice[j];
                    lattice.push(((p.0 + q.0) / 2, (p.1 + q.1) / 2));
                    lattice.len() - 1
                })
            };
            let ab = mid(a, b, &mut lattice);
            let bc = mid(b, c, &mut lattice);
            let ca = mid(c, a, &mut lattice);
            next.push([a, ab, ca]);
            next.push([ab, b, bc]);
            next.push([ca, bc, c]);
            next.push([ab, bc, ca]);
        }
        elements = next;
    }

    let scale = 2.0 * half_width / f64::from(2u32.pow(refinements));
    let vertices: Vec<Vector2<f64>> = lattice
        .iter()
        .map(|&(i, j)| {
            Vector2::new(-half_width + scale * i as f64, -half_width + scale * j as f64)
        })
        .collect();

    let mut areas = Vec::with_capacity(elements.len());
    let mut maps = Vec::with_capacity(elements.len());
    for &[a, b, c] in &elements {
        let p0 = vertices[a];
        let p1 = vertices[b];
        let p2 = vertices[c];
        let jacobian = Matrix2::from_columns(&[p1 - p0, p2 - p0]);
        let det = jacobian[(0, 0)] * jacobian[(1, 1)] - jacobian[(0, 1)] * jacobian[(1, 0)];
        assert!(det > 0.0, "element is not counterclockwise");
        let inverse = Matrix2::new(
            jacobian[(1, 1)] / det,
            -jacobian[(0, 1)] / det,
            -jacobian[(1, 0)] / det,
            jacobian[(0, 0)] / det,
        );
        areas.push(0.5 * det);
        maps.push(AffineMap {
            origin: p0,
            jacobian,
            inverse,
            det,
        });
    }

    let (interior_faces, boundary_faces) = build_faces(&vertices, &elements);

    Mesh {
        vertices,
        elements,
        interior_faces,
        boundary_faces,
        areas,
        maps,
        half_width,
    }
}

fn build_faces(
    vertices: &[Vector2<f64>],
    elements: &[[usize; 3]],
) -> (Vec<InteriorFace>, Vec<BoundaryFace>) {
    // Local edge e of element (a,b,c): edge 0 = a->b, 1 = b->c, 2 = c->a.
    let mut owner: HashMap<(usize, usize), (usize, usize)> = HashMap::new();
    let mut interior = Vec::new();
    let mut boundary_candidates: HashMap<(usize, usize), (usize, usize)> = HashMap::new();

    for (e, &[a, b, c]) in elements.iter().enumerate() {
        for (local, (i, j)) in [(a, b), (b, c), (c, a)].into_iter().enumerate() {
            let key = (i.min(j), i.max(j));
            if let Some(&(left, left_edge)) = owner.get(&key) {
                boundary_candidates.remove(&key);
                let [la, lb, lc] = elements[left];
                let (i0, i1) = match left_edge {
                    0 => (la, lb),
                    1 => (lb, lc),
                    _ => (lc, la),
                };
                let t = vertices[i1] - vertices[i0];
                let length = t.norm();
                // Outward normal of the left element; points into the right one.
                let normal = Vector2::new(t.y, -t.x) / length;
                interior.push(InteriorFace {
                    left,
                    right: e,
                    local_edge_left: left_edge,
                    local_edge_right: local,
                    normal,
                    length,
                    vertices: [i0, i1],
                });
            } else {
                owner.insert(key, (e, local));
                boundary_candidates.insert(key, (e, local));
            }
        }
    }

    let mut boundary = Vec::new();
    for (&(_, _), &(e, local)) in &boundary_candidates {
        let [a, b, c] = elements[e];
        let (i0, i1) = match local {
            0 => (a, b),
            1 => (b, c),
            _ => (c, a),
        };
        let t = vertices[i1] - vertices[i0];
        let length = t.norm();
        let normal = Vector2::new(t.y, -t.x) / length;
        boundary.push(BoundaryFace {
            element: e,
            local_edge: local,
            normal,
            length,
            vertices: [i0, i1],
        });
    }
    boundary.sort_by_key(|f| (f.element, f.local_edge));

    (interior, boundary)
}

/// Result of a connectivity audit; defects are reported, not panicked on.
#[derive(Debug, Clone)]
pub struct ConnectivityReport {
    pub interior_faces: usize,
    pub boundary_faces: usize,
    pub defects: Vec<String>,
}

impl ConnectivityReport {
    pub fn is_ok(&self) -> bool {
        self.defects.is_empty()
    }
}

/// Audit face counts, normal orientation and the sharing invariants.
pub fn check_face_connectivity(mesh: &Mesh) -> ConnectivityReport {
    let mut defects = Vec::new();

    // Every undirected edge appears on at most two elements, and the face
    // lists must cover each exactly once.
    let mut edge_count: HashMap<(usize, usize), usize> = HashMap::new();
    for &[a, b, c] in &mesh.elements {
        for (i, j) in [(a, b), (b, c), (c, a)] {
            *edge_count.entry((i.min(j), i.max(j))).or_insert(0) += 1;
        }
    }
    let shared = edge_count.values().filter(|&&n| n == 2).count();
    let lone = edge_count.values().filter(|&&n| n == 1).count();
    if let Some((&edge, &n)) = edge_count.iter().find(|&(_, &n)| n > 2) {
        defects.push(format!("edge {edge:?} shared by {n} elements"));
    }
    if shared != mesh.interior_faces.len() {
        defects.push(format!(
            "interior face list has {} entries, expected {shared}",
            mesh.interior_faces.len()
        ));
    }
    if lone != mesh.boundary_faces.len() {
        defects.push(format!(
            "boundary face list has {} entries, expected {lone}",
            mesh.boundary_faces.len()
        ));
    }

    for (idx, face) in mesh.interior_faces.iter().enumerate() {
        let n = face.normal.norm();
        if (n - 1.0).abs() > 1e-14 {
            defects.push(format!("interior face {idx} normal has length {n}"));
        }
        // The normal must point from the left element towards the right one.
        let cl = centroid(mesh, face.left);
        let cr = centroid(mesh, face.right);
        if face.normal.dot(&(cr - cl)) <= 0.0 {
            defects.push(format!("interior face {idx} normal points the wrong way"));
        }
        if face.left == face.right {
            defects.push(format!("interior face {idx} connects an element to itself"));
        }
    }
    for (idx, face) in mesh.boundary_faces.iter().enumerate() {
        let n = face.normal.norm();
        if (n - 1.0).abs() > 1e-14 {
            defects.push(format!("boundary face {idx} normal has length {n}"));
        }
        let c = centroid(mesh, face.element);
        let mid = 0.5 * (mesh.vertices[face.vertices[0]] + mesh.vertices[face.vertices[1]]);
        if face.normal.dot(&(mid - c)) <= 0.0 {
            defects.push(format!("boundary face {idx} normal points inward"));
        }
    }

    ConnectivityReport {
        interior_faces: mesh.interior_faces.len(),
        boundary_faces: mesh.boundary_faces.len(),
        defects,
    }
}

fn centroid(mesh: &Mesh, element: usize) -> Vector2<f64> {
    let [a, b, c] = mesh.element_vertices(element);
    (a + b + c) / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shoelace_area(p: &[Vector2<f64>; 3]) -> f64 {
        0.5 * ((p[1].x - p[0].x) * (p[2].y - p[0].y) - (p[2].x - p[0].x) * (p[1].y - p[0].y))
    }

    #[test]
    fn base_mesh_counts() {
        let mesh = build_square_mesh(10.0, 0);
        assert_eq!(mesh.n_elements(), 2);
        assert_eq!(mesh.n_vertices(), 4);
        assert_eq!(mesh.interior_faces.len(), 1);
        assert_eq!(mesh.boundary_faces.len(), 4);
    }

    #[test]
    fn refinement_element_counts() {
        for r in 0..=5 {
            let mesh = build_square_mesh(10.0, r);
            assert_eq!(mesh.n_elements(), 2 * 4usize.pow(r));
        }
    }

    #[test]
    fn five_refinements_give_2048_elements() {
        let mesh = build_square_mesh(10.0, 5);
        assert_eq!(mesh.n_elements(), 2048);
    }

    #[test]
    fn total_area_matches_domain() {
        for r in [0, 1, 3] {
            let mesh = build_square_mesh(10.0, r);
            // Sum of per-element shoelace areas, independent of the stored areas.
            let shoelace: f64 = (0..mesh.n_elements())
                .map(|e| shoelace_area(&mesh.element_vertices(e)))
                .sum();
            assert!((shoelace - 400.0).abs() / 400.0 < 1e-12);
            assert!((mesh.total_area() - 400.0).abs() / 400.0 < 1e-12);
        }
    }

    #[test]
    fn areas_are_positive_and_match_jacobians() {
        let mesh = build_square_mesh(10.0, 2);
        for e in 0..mesh.n_elements() {
            assert!(mesh.element_area(e) > 0.0);
            assert!(
                (mesh.affine_map(e).det - 2.0 * mesh.element_area(e)).abs() < 1e-12,
                "det J must equal twice the area"
            );
        }
    }

    #[test]
    fn connectivity_counts_refinement_one() {
        // 8 elements: brute-force edge enumeration gives 8 interior, 8 boundary.
        let mesh = build_square_mesh(10.0, 1);
        let report = check_face_connectivity(&mesh);
        assert!(report.is_ok(), "defects: {:?}", report.defects);
        assert_eq!(report.interior_faces, 8);
        assert_eq!(report.boundary_faces, 8);
    }

    #[test]
    fn connectivity_counts_base_mesh() {
        let mesh = build_square_mesh(10.0, 0);
        let report = check_face_connectivity(&mesh);
        assert!(report.is_ok());
        assert_eq!(report.interior_faces, 1);
        assert_eq!(report.boundary_faces, 4);
    }

    #[test]
    fn euler_face_count_relation() {
        // 3 N_el = 2 I + B for any conforming triangulation.
        for r in 0..=4 {
            let mesh = build_square_mesh(10.0, r);
            assert_eq!(
                3 * mesh.n_elements(),
                2 * mesh.interior_faces.len() + mesh.boundary_faces.len()
            );
        }
    }

    #[test]
    fn refinement_halves_edge_lengths() {
        let coarse = build_square_mesh(10.0, 2);
        let fine = build_square_mesh(10.0, 3);
        let max_len = |m: &Mesh| {
            m.interior_faces
                .iter()
                .map(|f| f.length)
                .chain(m.boundary_faces.iter().map(|f| f.length))
                .fold(0.0f64, f64::max)
        };
        assert!((max_len(&coarse) / max_len(&fine) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn normals_are_unit_and_oriented() {
        let mesh = build_square_mesh(10.0, 3);
        for face in &mesh.interior_faces {
            assert!((face.normal.norm() - 1.0).abs() <= 1e-14);
        }
        let report = check_face_connectivity(&mesh);
        assert!(report.is_ok(), "defects: {:?}", report.defects);
    }

    #[test]
    fn affine_maps_round_trip() {
        let mesh = build_square_mesh(10.0, 2);
        for e in [0, 5, 17] {
            let map = mesh.affine_map(e);
            let x = map.to_physical(0.25, 0.5);
            let back = map.to_reference(&x);
            assert!((back.x - 0.25).abs() < 1e-13);
            assert!((back.y - 0.5).abs() < 1e-13);
        }
    }
}
