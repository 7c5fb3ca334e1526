//! Conforming triangulations with newest-vertex bisection.
//!
//! Every triangle `[v0, v1, v2]` is stored counterclockwise with its
//! refinement edge `(v0, v1)` opposite the newest vertex `v2`. Bisection
//! inserts the midpoint `m` of the refinement edge and produces the children
//! `[v2, v0, m]` and `[v1, v2, m]`, so `m` becomes the newest vertex of both.

use std::collections::HashMap;
use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::geometry::orient;
use crate::surface::{Domain, Vec2};

pub type Edge = (u32, u32);

#[inline]
pub fn edge_key(a: u32, b: u32) -> Edge {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Parent edges of the vertices inserted by the most recent refinement.
#[derive(Debug, Clone, PartialEq)]
pub struct Parentage {
    pub old_vertex_count: usize,
    /// `parents[k]` are the endpoints of the edge bisected to create vertex
    /// `old_vertex_count + k`.
    pub parents: Vec<[u32; 2]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Vec2>,
    pub triangles: Vec<[u32; 3]>,
    /// Number of bisections separating each triangle from its macro element.
    pub generation: Vec<u32>,
    pub parentage: Option<Parentage>,
}

impl TriMesh {
    /// Builds a mesh from raw data; the longest edge of every triangle becomes
    /// its refinement edge and clockwise triangles are flipped.
    pub fn from_raw(vertices: Vec<Vec2>, triangles: Vec<[u32; 3]>) -> Result<Self> {
        let mut tris = Vec::with_capacity(triangles.len());
        for (k, t) in triangles.into_iter().enumerate() {
            if t.iter().any(|&v| v as usize >= vertices.len()) {
                return Err(Error::Mesh(format!("triangle {k} references a missing vertex")));
            }
            let [a, b, c] = t;
            let (a, b, c) = if orient(&vertices[a as usize], &vertices[b as usize], &vertices[c as usize]) < 0.0 {
                (a, c, b)
            } else {
                (a, b, c)
            };
            let p = |v: u32| vertices[v as usize];
            let lens = [(p(a) - p(b)).norm(), (p(b) - p(c)).norm(), (p(c) - p(a)).norm()];
            let longest = (0..3)
                .max_by(|&i, &j| lens[i].partial_cmp(&lens[j]).unwrap().then(j.cmp(&i)))
                .unwrap();
            let rotated = match longest {
                0 => [a, b, c],
                1 => [b, c, a],
                _ => [c, a, b],
            };
            tris.push(rotated);
        }
        let mesh = TriMesh {
            generation: vec![0; tris.len()],
            vertices,
            triangles: tris,
            parentage: None,
        };
        for k in 0..mesh.triangles.len() {
            if mesh.area(k) <= 0.0 {
                return Err(Error::Mesh(format!("triangle {k} has zero area")));
            }
        }
        Ok(mesh)
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn corners(&self, t: usize) -> [Vec2; 3] {
        let [a, b, c] = self.triangles[t];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.corners(t);
        0.5 * orient(&a, &b, &c)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangle_count()).map(|t| self.area(t)).sum()
    }

    /// Longest edge length.
    pub fn diameter(&self, t: usize) -> f64 {
        let [a, b, c] = self.corners(t);
        (a - b).norm().max((b - c).norm()).max((c - a).norm())
    }

    pub fn centroid(&self, t: usize) -> Vec2 {
        let [a, b, c] = self.corners(t);
        (a + b + c) / 3.0
    }

    pub fn min_angle(&self, t: usize) -> f64 {
        let [a, b, c] = self.corners(t);
        let angle = |p: Vec2, q: Vec2, r: Vec2| {
            let (u, v) = (q - p, r - p);
            (u.dot(&v) / (u.norm() * v.norm())).clamp(-1.0, 1.0).acos()
        };
        angle(a, b, c).min(angle(b, c, a)).min(angle(c, a, b))
    }

    pub fn min_angle_overall(&self) -> f64 {
        (0..self.triangle_count())
            .map(|t| self.min_angle(t))
            .fold(f64::INFINITY, f64::min)
    }

    /// Edge to incident triangles (one entry for boundary edges).
    pub fn edge_incidence(&self) -> HashMap<Edge, Vec<u32>> {
        let mut map: HashMap<Edge, Vec<u32>> = HashMap::with_capacity(self.triangles.len() * 2);
        for (k, t) in self.triangles.iter().enumerate() {
            for i in 0..3 {
                map.entry(edge_key(t[i], t[(i + 1) % 3]))
                    .or_default()
                    .push(k as u32);
            }
        }
        map
    }

    /// Edges with exactly one incident triangle, sorted.
    pub fn boundary_edges(&self) -> Vec<Edge> {
        let mut edges: Vec<Edge> = self
            .edge_incidence()
            .into_iter()
            .filter(|(_, tris)| tris.len() == 1)
            .map(|(e, _)| e)
            .collect();
        edges.sort_unstable();
        edges
    }

    /// Checks that no edge has more than two triangles and that there is no
    /// hanging node: boundary edges must not contain other vertices.
    pub fn check_conforming(&self) -> Result<()> {
        let incidence = self.edge_incidence();
        let key = |p: &Vec2| (p.x.to_bits(), p.y.to_bits());
        let by_position: HashMap<(u64, u64), usize> = self
            .vertices
            .iter()
            .enumerate()
            .map(|(i, p)| (key(p), i))
            .collect();
        for (e, tris) in &incidence {
            if tris.len() > 2 {
                return Err(Error::Mesh(format!("edge {e:?} shared by {} triangles", tris.len())));
            }
            if tris.len() == 1 {
                // bisection places a hanging node exactly at the edge midpoint
                let mid = (self.vertices[e.0 as usize] + self.vertices[e.1 as usize]) * 0.5;
                if let Some(v) = by_position.get(&key(&mid)) {
                    return Err(Error::Mesh(format!("hanging node {v} on edge {e:?}")));
                }
            }
        }
        for t in 0..self.triangle_count() {
            if self.area(t) <= 0.0 {
                return Err(Error::Mesh(format!("triangle {t} is not positively oriented")));
            }
        }
        Ok(())
    }

    /// Newest-vertex bisection of every marked triangle plus the closure needed
    /// for conformity. The returned mesh records the parent edge of each new
    /// vertex.
    pub fn refine(&self, marked: &[usize]) -> TriMesh {
        let incidence = self.edge_incidence();
        let mut marked_edges: HashMap<Edge, u32> = HashMap::new();
        let mut queue: Vec<Edge> = Vec::new();
        for &t in marked {
            let tri = self.triangles[t];
            let e = edge_key(tri[0], tri[1]);
            if marked_edges.insert(e, u32::MAX).is_none() {
                queue.push(e);
            }
        }
        // closure: a triangle with any marked edge must have its refinement
        // edge marked as well
        while let Some(e) = queue.pop() {
            for &t in &incidence[&e] {
                let tri = self.triangles[t as usize];
                let r = edge_key(tri[0], tri[1]);
                if !marked_edges.contains_key(&r) {
                    marked_edges.insert(r, u32::MAX);
                    queue.push(r);
                }
            }
        }

        let old_vertex_count = self.vertex_count();
        let mut vertices = self.vertices.clone();
        let mut parents = Vec::new();
        // assign midpoint ids in triangle order for determinism
        for tri in &self.triangles {
            for i in 0..3 {
                let e = edge_key(tri[i], tri[(i + 1) % 3]);
                if let Some(id) = marked_edges.get_mut(&e) {
                    if *id == u32::MAX {
                        *id = vertices.len() as u32;
                        let (a, b) = (self.vertices[e.0 as usize], self.vertices[e.1 as usize]);
                        vertices.push((a + b) * 0.5);
                        parents.push([e.0, e.1]);
                    }
                }
            }
        }

        let mut triangles = Vec::with_capacity(self.triangles.len() + 2 * parents.len());
        let mut generation = Vec::with_capacity(triangles.capacity());
        for (tri, &gen) in self.triangles.iter().zip(&self.generation) {
            bisect(*tri, gen, &marked_edges, &mut triangles, &mut generation);
        }
        TriMesh {
            vertices,
            triangles,
            generation,
            parentage: Some(Parentage {
                old_vertex_count,
                parents,
            }),
        }
    }
}

fn bisect(
    tri: [u32; 3],
    gen: u32,
    marked: &HashMap<Edge, u32>,
    out: &mut Vec<[u32; 3]>,
    generation: &mut Vec<u32>,
) {
    let [v0, v1, v2] = tri;
    match marked.get(&edge_key(v0, v1)) {
        Some(&m) => {
            bisect([v2, v0, m], gen + 1, marked, out, generation);
            bisect([v1, v2, m], gen + 1, marked, out, generation);
        }
        None => {
            out.push(tri);
            generation.push(gen);
        }
    }
}

/// Structured macro triangulation of a domain.
///
/// Rectangles use `n x n` crossed squares (four triangles per square around
/// its centre); disks use a centre vertex and `n` rings with `6k` vertices on
/// ring `k`, giving a polygonal approximation of the circle.
pub fn macro_mesh(domain: &Domain, n: usize) -> Result<TriMesh> {
    if n < 1 {
        return Err(Error::Mesh("subdivision count must be positive".into()));
    }
    match *domain {
        Domain::Rect { min, max } => {
            if !(max[0] > min[0] && max[1] > min[1]) {
                return Err(Error::Mesh("degenerate rectangle".into()));
            }
            Ok(crossed_rect(min, max, n))
        }
        Domain::Disk { center, radius } => {
            if !(radius > 0.0) {
                return Err(Error::Mesh("degenerate disk".into()));
            }
            ring_disk(Vec2::new(center[0], center[1]), radius, n)
        }
    }
}

fn crossed_rect(min: [f64; 2], max: [f64; 2], n: usize) -> TriMesh {
    let (hx, hy) = ((max[0] - min[0]) / n as f64, (max[1] - min[1]) / n as f64);
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1) + n * n);
    for j in 0..=n {
        for i in 0..=n {
            vertices.push(Vec2::new(min[0] + i as f64 * hx, min[1] + j as f64 * hy));
        }
    }
    let corner = |i: usize, j: usize| (j * (n + 1) + i) as u32;
    let mut triangles = Vec::with_capacity(4 * n * n);
    for j in 0..n {
        for i in 0..n {
            let c = vertices.len() as u32;
            vertices.push(Vec2::new(
                min[0] + (i as f64 + 0.5) * hx,
                min[1] + (j as f64 + 0.5) * hy,
            ));
            let (p00, p10, p11, p01) = (corner(i, j), corner(i + 1, j), corner(i + 1, j + 1), corner(i, j + 1));
            // square sides are the refinement edges, the centre is the peak
            triangles.push([p00, p10, c]);
            triangles.push([p10, p11, c]);
            triangles.push([p11, p01, c]);
            triangles.push([p01, p00, c]);
        }
    }
    TriMesh {
        generation: vec![0; triangles.len()],
        vertices,
        triangles,
        parentage: None,
    }
}

fn ring_disk(center: Vec2, radius: f64, n: usize) -> Result<TriMesh> {
    let mut vertices = vec![center];
    let mut rings: Vec<Vec<u32>> = vec![vec![0]];
    for k in 1..=n {
        let count = 6 * k;
        let r = radius * k as f64 / n as f64;
        // stagger alternate rings to avoid slivers
        let offset = if k % 2 == 0 { 0.5 } else { 0.0 };
        let ring = (0..count)
            .map(|i| {
                let t = TAU * (i as f64 + offset) / count as f64;
                vertices.push(center + Vec2::new(r * t.cos(), r * t.sin()));
                (vertices.len() - 1) as u32
            })
            .collect();
        rings.push(ring);
    }
    let angle = |v: u32| {
        let d = vertices[v as usize] - center;
        d.y.atan2(d.x).rem_euclid(TAU)
    };
    let mut triangles = Vec::new();
    // fan around the centre
    let first = &rings[1];
    for i in 0..first.len() {
        triangles.push([0, first[i], first[(i + 1) % first.len()]]);
    }
    for k in 2..=n {
        let (inner, outer) = (&rings[k - 1], &rings[k]);
        // merge the two rings by angle, advancing whichever next vertex comes first
        let start_inner = (0..inner.len())
            .min_by(|&a, &b| angle(inner[a]).partial_cmp(&angle(inner[b])).unwrap())
            .unwrap();
        let start_outer = (0..outer.len())
            .min_by(|&a, &b| angle(outer[a]).partial_cmp(&angle(outer[b])).unwrap())
            .unwrap();
        let (mut i, mut o) = (0usize, 0usize);
        let unwrap_angle = |v: u32, base: f64| {
            let a = angle(v);
            if a < base - 1e-12 {
                a + TAU
            } else {
                a
            }
        };
        let base = angle(inner[start_inner]).min(angle(outer[start_outer]));
        while i < inner.len() || o < outer.len() {
            let ci = inner[(start_inner + i) % inner.len()];
            let ni = inner[(start_inner + i + 1) % inner.len()];
            let co = outer[(start_outer + o) % outer.len()];
            let no = outer[(start_outer + o + 1) % outer.len()];
            let ai = if i < inner.len() { unwrap_angle(ni, base) + if i + 1 == inner.len() { TAU } else { 0.0 } } else { f64::INFINITY };
            let ao = if o < outer.len() { unwrap_angle(no, base) + if o + 1 == outer.len() { TAU } else { 0.0 } } else { f64::INFINITY };
            if ai <= ao {
                triangles.push([ci, co, ni]);
                i += 1;
            } else {
                triangles.push([ci, co, no]);
                o += 1;
            }
        }
    }
    TriMesh::from_raw(vertices, triangles)
}

/// Piecewise-linear nodal field on a mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalField {
    pub values: Vec<f64>,
}

impl NodalField {
    pub fn new(mesh: &TriMesh, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.vertex_count() {
            return Err(Error::Mesh(format!(
                "{} values for {} vertices",
                values.len(),
                mesh.vertex_count()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Mesh(format!("non-finite value at vertex {i}")));
        }
        Ok(NodalField { values })
    }

    pub fn from_fn(mesh: &TriMesh, f: impl Fn(&Vec2) -> f64) -> Self {
        NodalField {
            values: mesh.vertices.iter().map(f).collect(),
        }
    }

    pub fn constant(mesh: &TriMesh, value: f64) -> Self {
        NodalField {
            values: vec![value; mesh.vertex_count()],
        }
    }

    /// Transfers the field onto a mesh produced from its own mesh by
    /// [`TriMesh::refine`]: old vertices keep their values, new vertices take
    /// the mean of their parent edge.
    pub fn interpolate(&self, new_mesh: &TriMesh) -> Result<NodalField> {
        let parentage = new_mesh
            .parentage
            .as_ref()
            .ok_or(Error::Parentage(self.values.len()))?;
        if parentage.old_vertex_count != self.values.len()
            || parentage.old_vertex_count + parentage.parents.len() != new_mesh.vertex_count()
        {
            return Err(Error::Parentage(parentage.old_vertex_count));
        }
        let mut values = self.values.clone();
        values.reserve(parentage.parents.len());
        for [a, b] in &parentage.parents {
            values.push(0.5 * (self.values[*a as usize] + self.values[*b as usize]));
        }
        Ok(NodalField { values })
    }
}
