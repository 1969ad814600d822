//! Polygonal cross-sections and boundary-conforming triangulations of a
//! truncated disk around them.
//!
//! The exterior potentials live on all of the plane. We discretize a disk of
//! radius `R` centred on the bounding box of the section: a uniform
//! triangular lattice covers the section and a collar around it, graded rings
//! carry the far field out to the truncation circle, and the polygon edges are
//! inserted as constraints of a Delaunay triangulation so every triangle lies
//! either inside or outside the section.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};
use spade::{ConstrainedDelaunayTriangulation, Point2, Triangulation};

use crate::error::{Error, Result};
use crate::vector::{cross2, dist2, point_segment_distance, sub2, Vec2};

/// Lattice spacing relative to the requested maximum edge length.
const LATTICE_FRACTION: f64 = 0.55;
/// Lattice points closer than this (in lattice spacings) to the polygon are dropped.
const BOUNDARY_EXCLUSION: f64 = 0.45;
/// Growth factor of the ring spacing between consecutive far-field rings.
const RING_GRADING: f64 = 1.2;

/// A simple, counterclockwise polygon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSection")]
pub struct CrossSection {
    vertices: Vec<Vec2>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSection {
    vertices: Vec<Vec2>,
}

impl TryFrom<RawSection> for CrossSection {
    type Error = Error;

    fn try_from(raw: RawSection) -> Result<Self> {
        CrossSection::new(raw.vertices)
    }
}

/// Twice the signed (shoelace) area of a closed vertex loop.
fn shoelace2(vertices: &[Vec2]) -> f64 {
    let n = vertices.len();
    (0..n).map(|i| cross2(&vertices[i], &vertices[(i + 1) % n])).sum()
}

fn segments_intersect(a: &Vec2, b: &Vec2, c: &Vec2, d: &Vec2) -> bool {
    let orient = |p: &Vec2, q: &Vec2, r: &Vec2| cross2(&sub2(q, p), &sub2(r, p));
    let on_segment = |p: &Vec2, q: &Vec2, r: &Vec2| {
        r[0] >= p[0].min(q[0]) && r[0] <= p[0].max(q[0]) && r[1] >= p[1].min(q[1]) && r[1] <= p[1].max(q[1])
    };
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(c, d, a))
        || (d2 == 0.0 && on_segment(c, d, b))
        || (d3 == 0.0 && on_segment(a, b, c))
        || (d4 == 0.0 && on_segment(a, b, d))
}

impl CrossSection {
    /// Validates a counterclockwise vertex loop.
    pub fn new(vertices: Vec<Vec2>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::geometry(format!("polygon needs at least 3 vertices, got {}", vertices.len())));
        }
        if vertices.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::geometry("non-finite vertex coordinate"));
        }
        let area = 0.5 * shoelace2(&vertices);
        if area <= 0.0 {
            return Err(Error::geometry(format!(
                "signed area {area:e} is not positive (polygon must be counterclockwise and nondegenerate)"
            )));
        }
        let n = vertices.len();
        for i in 0..n {
            for j in (i + 1)..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                if adjacent {
                    continue;
                }
                if segments_intersect(&vertices[i], &vertices[(i + 1) % n], &vertices[j], &vertices[(j + 1) % n]) {
                    return Err(Error::geometry(format!("edges {i} and {j} intersect")));
                }
            }
        }
        Ok(Self { vertices })
    }

    /// Accepts either orientation and reverses clockwise input.
    pub fn from_unoriented(mut vertices: Vec<Vec2>) -> Result<Self> {
        if vertices.len() >= 3 && shoelace2(&vertices) < 0.0 {
            vertices.reverse();
        }
        Self::new(vertices)
    }

    /// Axis-aligned rectangle `[lo.0, hi.0] x [lo.1, hi.1]`.
    pub fn rectangle(lo: Vec2, hi: Vec2) -> Result<Self> {
        Self::new(vec![lo, [hi[0], lo[1]], hi, [lo[0], hi[1]]])
    }

    /// The unit square `]0,1[^2`.
    pub fn unit_square() -> Self {
        Self::rectangle([0.0, 0.0], [1.0, 1.0]).expect("unit square is valid")
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    pub fn area(&self) -> f64 {
        0.5 * shoelace2(&self.vertices)
    }

    /// Directed edges `(v_i, v_{i+1})`, interior on the left.
    pub fn edges(&self) -> impl Iterator<Item = (Vec2, Vec2)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    pub fn bounding_box(&self) -> (Vec2, Vec2) {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for v in &self.vertices {
            for k in 0..2 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        (lo, hi)
    }

    /// Largest distance between two vertices.
    pub fn diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for (i, a) in self.vertices.iter().enumerate() {
            for b in &self.vertices[i + 1..] {
                d = d.max(dist2(a, b));
            }
        }
        d
    }

    /// Crossing-number point-in-polygon test; boundary points are unspecified.
    pub fn contains(&self, p: &Vec2) -> bool {
        let mut inside = false;
        for (a, b) in self.edges() {
            if (a[1] > p[1]) != (b[1] > p[1]) {
                let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
                if p[0] < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    pub fn boundary_distance(&self, p: &Vec2) -> f64 {
        self.edges().map(|(a, b)| point_segment_distance(p, &a, &b)).fold(f64::INFINITY, f64::min)
    }

    pub fn translated(&self, shift: Vec2) -> Self {
        Self { vertices: self.vertices.iter().map(|v| [v[0] + shift[0], v[1] + shift[1]]).collect() }
    }

    /// Dilation about the origin by `t > 0`.
    pub fn scaled(&self, t: f64) -> Result<Self> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::arg(format!("dilation factor must be positive, got {t}")));
        }
        Ok(Self { vertices: self.vertices.iter().map(|v| [t * v[0], t * v[1]]).collect() })
    }

    /// Mirror image across the diagonal `x1 = x2` (orientation restored).
    pub fn reflected_diagonal(&self) -> Self {
        let mut vertices: Vec<Vec2> = self.vertices.iter().map(|v| [v[1], v[0]]).collect();
        vertices.reverse();
        Self { vertices }
    }
}

/// Regular `n_segments`-gon inscribed in the circle, first vertex at angle 0.
pub fn polygon_from_disc(center: Vec2, radius: f64, n_segments: usize) -> Result<CrossSection> {
    if n_segments < 3 {
        return Err(Error::arg(format!("n_segments must be >= 3, got {n_segments}")));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::arg(format!("radius must be positive, got {radius}")));
    }
    let vertices = (0..n_segments)
        .map(|k| {
            let t = 2.0 * PI * k as f64 / n_segments as f64;
            [center[0] + radius * t.cos(), center[1] + radius * t.sin()]
        })
        .collect();
    CrossSection::new(vertices)
}

/// Shoelace area of a validated section.
pub fn polygon_area(section: &CrossSection) -> f64 {
    section.area()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeMarker {
    None,
    Interface,
    Outer,
}

/// Triangulation of the truncated disk (or of the section alone, see
/// [`Mesh2D::inside_submesh`]).
#[derive(Debug, Clone)]
pub struct Mesh2D {
    vertices: Vec<Vec2>,
    triangles: Vec<[usize; 3]>,
    inside: Vec<bool>,
    interface_edges: Vec<[usize; 2]>,
    outer_edges: Vec<[usize; 2]>,
    on_outer: Vec<bool>,
    center: Vec2,
    truncation_radius: f64,
}

impl Mesh2D {
    /// Builds a mesh from raw parts, checking orientation and index ranges.
    pub fn from_parts(
        vertices: Vec<Vec2>,
        triangles: Vec<[usize; 3]>,
        inside: Vec<bool>,
        interface_edges: Vec<[usize; 2]>,
        outer_edges: Vec<[usize; 2]>,
    ) -> Result<Self> {
        if inside.len() != triangles.len() {
            return Err(Error::arg("one inside flag per triangle required"));
        }
        let nv = vertices.len();
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= nv) {
                return Err(Error::arg(format!("triangle {t} references a missing vertex")));
            }
            let area = signed_area(&vertices[tri[0]], &vertices[tri[1]], &vertices[tri[2]]);
            if area <= 0.0 {
                return Err(Error::geometry(format!("triangle {t} is not positively oriented")));
            }
        }
        if interface_edges.iter().chain(&outer_edges).flatten().any(|&i| i >= nv) {
            return Err(Error::arg("edge references a missing vertex"));
        }
        let mut on_outer = vec![false; nv];
        for e in &outer_edges {
            on_outer[e[0]] = true;
            on_outer[e[1]] = true;
        }
        let (center, truncation_radius) = bounding_circle(&vertices);
        Ok(Self { vertices, triangles, inside, interface_edges, outer_edges, on_outer, center, truncation_radius })
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn inside(&self) -> &[bool] {
        &self.inside
    }

    /// Polygon boundary edges, oriented with the section on the left.
    pub fn interface_edges(&self) -> &[[usize; 2]] {
        &self.interface_edges
    }

    pub fn outer_edges(&self) -> &[[usize; 2]] {
        &self.outer_edges
    }

    pub fn is_outer_vertex(&self, v: usize) -> bool {
        self.on_outer[v]
    }

    pub fn center(&self) -> Vec2 {
        self.center
    }

    pub fn truncation_radius(&self) -> f64 {
        self.truncation_radius
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        signed_area(&self.vertices[a], &self.vertices[b], &self.vertices[c])
    }

    /// Longest edge of triangle `t`.
    pub fn triangle_diameter(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t].map(|i| self.vertices[i]);
        dist2(&a, &b).max(dist2(&b, &c)).max(dist2(&c, &a))
    }

    /// Sum of the areas of inside-flagged triangles.
    pub fn inside_area(&self) -> f64 {
        (0..self.triangles.len()).filter(|&t| self.inside[t]).map(|t| self.triangle_area(t)).sum()
    }

    pub fn edge_marker(&self, a: usize, b: usize) -> EdgeMarker {
        let same = |e: &[usize; 2]| (e[0] == a && e[1] == b) || (e[0] == b && e[1] == a);
        if self.interface_edges.iter().any(same) {
            EdgeMarker::Interface
        } else if self.outer_edges.iter().any(same) {
            EdgeMarker::Outer
        } else {
            EdgeMarker::None
        }
    }

    /// 0 = none, 1 = on the interface, 2 = on the truncation circle.
    pub fn vertex_markers(&self) -> Vec<u8> {
        let mut markers: Vec<u8> = self.on_outer.iter().map(|&o| if o { 2 } else { 0 }).collect();
        for e in &self.interface_edges {
            markers[e[0]] = 1;
            markers[e[1]] = 1;
        }
        markers
    }

    /// Lumped (one third of each incident triangle) vertex areas.
    pub fn lumped_masses(&self) -> Vec<f64> {
        let mut mass = vec![0.0; self.vertices.len()];
        for (t, tri) in self.triangles.iter().enumerate() {
            let a = self.triangle_area(t) / 3.0;
            for &v in tri {
                mass[v] += a;
            }
        }
        mass
    }

    /// Restriction to the inside-flagged triangles, vertices renumbered in
    /// their original order. The interface becomes the outer boundary of the
    /// result and no edge carries the outer marker.
    pub fn inside_submesh(&self) -> Mesh2D {
        let mut used = vec![false; self.vertices.len()];
        for (t, tri) in self.triangles.iter().enumerate() {
            if self.inside[t] {
                for &v in tri {
                    used[v] = true;
                }
            }
        }
        let mut map = vec![usize::MAX; self.vertices.len()];
        let mut vertices = Vec::new();
        for (v, &u) in used.iter().enumerate() {
            if u {
                map[v] = vertices.len();
                vertices.push(self.vertices[v]);
            }
        }
        let triangles: Vec<[usize; 3]> = self
            .triangles
            .iter()
            .zip(&self.inside)
            .filter(|(_, &inside)| inside)
            .map(|(tri, _)| tri.map(|v| map[v]))
            .collect();
        let interface_edges = self.interface_edges.iter().map(|e| e.map(|v| map[v])).collect();
        let n = vertices.len();
        Mesh2D {
            inside: vec![true; triangles.len()],
            vertices,
            triangles,
            interface_edges,
            outer_edges: Vec::new(),
            on_outer: vec![false; n],
            center: self.center,
            truncation_radius: self.truncation_radius,
        }
    }

    /// Plain-text node/element dump: a count line, one `x y marker` line per
    /// vertex, then one `i j k inside_flag` line per triangle.
    pub fn write_text<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{} {}", self.vertices.len(), self.triangles.len())?;
        for (v, m) in self.vertices.iter().zip(self.vertex_markers()) {
            writeln!(out, "{} {} {}", v[0], v[1], m)?;
        }
        for (tri, &inside) in self.triangles.iter().zip(&self.inside) {
            writeln!(out, "{} {} {} {}", tri[0], tri[1], tri[2], u8::from(inside))?;
        }
        Ok(())
    }
}

fn signed_area(a: &Vec2, b: &Vec2, c: &Vec2) -> f64 {
    0.5 * cross2(&sub2(b, a), &sub2(c, a))
}

fn bounding_circle(vertices: &[Vec2]) -> (Vec2, f64) {
    if vertices.is_empty() {
        return ([0.0, 0.0], 0.0);
    }
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for v in vertices {
        for k in 0..2 {
            lo[k] = lo[k].min(v[k]);
            hi[k] = hi[k].max(v[k]);
        }
    }
    let c = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])];
    let r = vertices.iter().map(|v| dist2(v, &c)).fold(0.0, f64::max);
    (c, r)
}

/// Triangulates the disk of radius `truncation_radius` centred on the
/// bounding box of `section`, conforming to the polygon.
///
/// Edges inside and near the section are at most `target_h` long; beyond a
/// collar around the section the spacing grows by a factor 1.2 per ring.
pub fn triangulate(section: &CrossSection, truncation_radius: f64, target_h: f64) -> Result<Mesh2D> {
    if !(truncation_radius > 0.0 && truncation_radius.is_finite()) {
        return Err(Error::arg(format!("truncation radius must be positive, got {truncation_radius}")));
    }
    if !(target_h > 0.0 && target_h.is_finite()) || target_h >= truncation_radius {
        return Err(Error::arg(format!("target_h must lie in (0, R), got {target_h}")));
    }
    let (lo, hi) = section.bounding_box();
    let center = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])];
    if 0.5 * dist2(&lo, &hi) > 0.5 * truncation_radius {
        return Err(Error::arg(format!(
            "cross-section bounding box does not fit in the disk of radius {} (R/2)",
            0.5 * truncation_radius
        )));
    }

    let spacing = LATTICE_FRACTION * target_h;
    let mut points: Vec<Vec2> = Vec::new();

    // Polygon boundary, each edge split uniformly.
    for (a, b) in section.edges() {
        let k = (dist2(&a, &b) / spacing).ceil().max(1.0) as usize;
        for j in 0..k {
            let t = j as f64 / k as f64;
            points.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
        }
    }
    let n_boundary = points.len();
    let constraints: Vec<[usize; 2]> = (0..n_boundary).map(|i| [i, (i + 1) % n_boundary]).collect();

    // Uniform triangular lattice over the section and a collar around it.
    let section_radius = section.vertices().iter().map(|v| dist2(v, &center)).fold(0.0, f64::max);
    let collar = (0.25 * section_radius).max(4.0 * target_h);
    let fine_radius = (section_radius + collar).min(0.75 * truncation_radius);
    let row = spacing * 3f64.sqrt() / 2.0;
    let n_rows = (fine_radius / row).ceil() as i64;
    let n_cols = (fine_radius / spacing).ceil() as i64 + 1;
    for i in -n_rows..=n_rows {
        let y = center[1] + i as f64 * row;
        let shift = if i.rem_euclid(2) == 1 { 0.5 * spacing } else { 0.0 };
        for j in -n_cols..=n_cols {
            let p = [center[0] + j as f64 * spacing + shift, y];
            if dist2(&p, &center) < fine_radius && section.boundary_distance(&p) > BOUNDARY_EXCLUSION * spacing {
                points.push(p);
            }
        }
    }

    // Graded rings out to the truncation circle.
    let mut ring_spacing = spacing;
    let mut r = fine_radius;
    let mut ring_index = 0usize;
    loop {
        ring_spacing *= RING_GRADING;
        r += ring_spacing * 3f64.sqrt() / 2.0;
        if r > truncation_radius - 0.5 * ring_spacing {
            break;
        }
        let n = ((2.0 * PI * r / ring_spacing).ceil() as usize).max(12);
        let offset = if ring_index % 2 == 1 { 0.5 } else { 0.0 };
        for k in 0..n {
            let t = 2.0 * PI * (k as f64 + offset) / n as f64;
            points.push([center[0] + r * t.cos(), center[1] + r * t.sin()]);
        }
        ring_index += 1;
    }
    let n_outer = ((2.0 * PI * truncation_radius / ring_spacing).ceil() as usize).max(12);
    for k in 0..n_outer {
        let t = 2.0 * PI * k as f64 / n_outer as f64;
        points.push([center[0] + truncation_radius * t.cos(), center[1] + truncation_radius * t.sin()]);
    }

    let n_points = points.len();
    let spade_points: Vec<Point2<f64>> = points.iter().map(|p| Point2::new(p[0], p[1])).collect();
    let cdt = ConstrainedDelaunayTriangulation::<Point2<f64>>::bulk_load_cdt(spade_points, constraints.clone())
        .map_err(|e| Error::geometry(format!("triangulation failed: {e:?}")))?;
    if cdt.num_vertices() != n_points {
        return Err(Error::geometry("duplicate mesh points generated"));
    }

    let degenerate_area = 1e-12 * target_h * target_h;
    let mut triangles = Vec::with_capacity(cdt.num_inner_faces());
    let mut inside = Vec::with_capacity(cdt.num_inner_faces());
    for face in cdt.inner_faces() {
        let [a, b, c] = face.vertices().map(|v| v.fix().index());
        let area = signed_area(&points[a], &points[b], &points[c]);
        let tri = if area > 0.0 { [a, b, c] } else { [a, c, b] };
        if area.abs() <= degenerate_area {
            return Err(Error::geometry(format!("degenerate triangle generated (area {area:e})")));
        }
        let centroid =
            [(points[a][0] + points[b][0] + points[c][0]) / 3.0, (points[a][1] + points[b][1] + points[c][1]) / 3.0];
        triangles.push(tri);
        inside.push(section.contains(&centroid));
    }

    // Edges used by a single triangle form the hull, i.e. the circle chords.
    let mut directed: std::collections::HashMap<(usize, usize), usize> = std::collections::HashMap::new();
    for tri in &triangles {
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            *directed.entry((a.min(b), a.max(b))).or_insert(0) += 1;
        }
    }
    let mut outer_edges = Vec::new();
    for tri in &triangles {
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            if directed[&(a.min(b), a.max(b))] == 1 {
                outer_edges.push([a, b]);
            }
        }
    }
    outer_edges.sort_unstable();
    for e in &outer_edges {
        if e[0] < n_points - n_outer || e[1] < n_points - n_outer {
            return Err(Error::geometry("hull edge does not lie on the truncation circle"));
        }
    }
    for c in &constraints {
        if !directed.contains_key(&(c[0].min(c[1]), c[0].max(c[1]))) {
            return Err(Error::geometry("polygon edge missing from triangulation"));
        }
    }
    let mut on_outer = vec![false; n_points];
    for e in &outer_edges {
        on_outer[e[0]] = true;
        on_outer[e[1]] = true;
    }

    Ok(Mesh2D {
        vertices: points,
        triangles,
        inside,
        interface_edges: constraints,
        outer_edges,
        on_outer,
        center,
        truncation_radius,
    })
}

/// Conforming triangulation of the section alone (used for film footprints).
pub fn triangulate_section(section: &CrossSection, target_h: f64) -> Result<Mesh2D> {
    let (lo, hi) = section.bounding_box();
    let radius = 2.0 * dist2(&lo, &hi) + 4.0 * target_h;
    Ok(triangulate(section, radius, target_h)?.inside_submesh())
}
