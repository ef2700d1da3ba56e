//! Triangulations of the unit square and the unit disk.
//!
//! A [`Mesh`] stores vertices, counter-clockwise triangles and the boundary
//! as a closed loop of directed edges (domain on the left).  The boundary
//! edges double as the one-dimensional surface mesh: restrictions of the
//! piecewise-linear bulk basis functions to the boundary form the surface
//! finite-element basis, so no separate surface connectivity is kept.
//!
//! Disk meshes place all boundary vertices exactly on the unit circle and
//! [`Mesh::refine`] projects new boundary midpoints back onto it, so the
//! refinement family keeps its vertices on the curved boundary while the
//! mesh itself remains a polygonal approximation.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// The geometry a mesh discretises.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DomainKind {
    /// Unit square `[0,1]²`.
    Square,
    /// Unit disk (vertices on the boundary lie exactly on the unit circle).
    Disk,
    /// Loaded from a file; no geometric information beyond the vertices.
    External,
}

/// A conforming triangulation with a closed boundary loop.
#[derive(Clone, Debug)]
pub struct Mesh {
    /// Vertex coordinates.
    pub vertices: Vec<[f64; 2]>,
    /// Triangles as vertex index triples, counter-clockwise.
    pub triangles: Vec<[usize; 3]>,
    /// Directed boundary edges in loop order (domain on the left); the
    /// second vertex of each edge is the first vertex of the next.
    pub boundary_edges: Vec<[usize; 2]>,
    /// Geometry tag controlling boundary projection during refinement.
    pub domain: DomainKind,
}

fn signed_area(p0: [f64; 2], p1: [f64; 2], p2: [f64; 2]) -> f64 {
    0.5 * ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]))
}

fn dist(p: [f64; 2], q: [f64; 2]) -> f64 {
    ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
}

impl Mesh {
    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn num_boundary_edges(&self) -> usize {
        self.boundary_edges.len()
    }

    /// Mesh width: the longest triangle edge.
    pub fn h(&self) -> f64 {
        let mut h: f64 = 0.0;
        for t in &self.triangles {
            for k in 0..3 {
                h = h.max(dist(self.vertices[t[k]], self.vertices[t[(k + 1) % 3]]));
            }
        }
        h
    }

    /// Ratio of the longest to the shortest triangle diameter
    /// (quasi-uniformity measure).
    pub fn quasi_uniformity(&self) -> f64 {
        let mut hmax: f64 = 0.0;
        let mut hmin = f64::INFINITY;
        for t in &self.triangles {
            let mut ht: f64 = 0.0;
            for k in 0..3 {
                ht = ht.max(dist(self.vertices[t[k]], self.vertices[t[(k + 1) % 3]]));
            }
            hmax = hmax.max(ht);
            hmin = hmin.min(ht);
        }
        hmax / hmin
    }

    /// Smallest interior angle over all triangles, in degrees.
    pub fn min_angle_deg(&self) -> f64 {
        let mut min = f64::INFINITY;
        for t in &self.triangles {
            let p = [self.vertices[t[0]], self.vertices[t[1]], self.vertices[t[2]]];
            for k in 0..3 {
                let a = p[k];
                let b = p[(k + 1) % 3];
                let c = p[(k + 2) % 3];
                let u = [b[0] - a[0], b[1] - a[1]];
                let v = [c[0] - a[0], c[1] - a[1]];
                let dot = u[0] * v[0] + u[1] * v[1];
                let cross = u[0] * v[1] - u[1] * v[0];
                min = min.min(cross.atan2(dot).abs());
            }
        }
        min.to_degrees()
    }

    /// Total triangle area.
    pub fn area(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| signed_area(self.vertices[t[0]], self.vertices[t[1]], self.vertices[t[2]]))
            .sum()
    }

    /// Total boundary length.
    pub fn perimeter(&self) -> f64 {
        self.boundary_arclengths().iter().sum()
    }

    /// Edge lengths of the boundary loop, in loop order.
    pub fn boundary_arclengths(&self) -> Vec<f64> {
        self.boundary_edges
            .iter()
            .map(|e| dist(self.vertices[e[0]], self.vertices[e[1]]))
            .collect()
    }

    /// `true` at indices of vertices lying on the boundary loop.
    pub fn boundary_flags(&self) -> Vec<bool> {
        let mut flags = vec![false; self.vertices.len()];
        for e in &self.boundary_edges {
            flags[e[0]] = true;
            flags[e[1]] = true;
        }
        flags
    }

    /// Boundary vertices in loop order (first vertex of each directed edge).
    pub fn boundary_loop(&self) -> Vec<usize> {
        self.boundary_edges.iter().map(|e| e[0]).collect()
    }

    /// Boundary vertex indices in increasing index order.
    pub fn boundary_dofs(&self) -> Vec<usize> {
        let flags = self.boundary_flags();
        (0..self.vertices.len()).filter(|&i| flags[i]).collect()
    }

    /// Interior vertex indices in increasing index order.
    pub fn interior_dofs(&self) -> Vec<usize> {
        let flags = self.boundary_flags();
        (0..self.vertices.len()).filter(|&i| !flags[i]).collect()
    }

    /// Check structural invariants: index ranges, positive triangle
    /// orientation, a single closed boundary loop, and conformity (interior
    /// edges shared by exactly two triangles with opposite orientation,
    /// boundary edges by exactly one with matching orientation).
    pub fn validate(&self) -> Result<()> {
        let nv = self.vertices.len();
        if self.triangles.is_empty() {
            return Err(Error::invalid("mesh has no triangles"));
        }
        for (i, t) in self.triangles.iter().enumerate() {
            if t.iter().any(|&v| v >= nv) {
                return Err(Error::invalid(format!("triangle {i} has out-of-range vertex")));
            }
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return Err(Error::invalid(format!("triangle {i} is degenerate")));
            }
            let area = signed_area(self.vertices[t[0]], self.vertices[t[1]], self.vertices[t[2]]);
            if area <= 0.0 {
                return Err(Error::invalid(format!(
                    "triangle {i} is not counter-clockwise (signed area {area:.3e})"
                )));
            }
        }
        if self.boundary_edges.is_empty() {
            return Err(Error::invalid("mesh has no boundary edges"));
        }
        let nb = self.boundary_edges.len();
        for (k, e) in self.boundary_edges.iter().enumerate() {
            if e[0] >= nv || e[1] >= nv {
                return Err(Error::invalid(format!("boundary edge {k} has out-of-range vertex")));
            }
            let next = self.boundary_edges[(k + 1) % nb];
            if e[1] != next[0] {
                return Err(Error::invalid(format!(
                    "boundary edges {k} and {} do not chain into a loop",
                    (k + 1) % nb
                )));
            }
        }
        // Count directed edges of triangles.
        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                let e = (t[k], t[(k + 1) % 3]);
                *directed.entry(e).or_insert(0) += 1;
                if directed[&e] > 1 {
                    return Err(Error::invalid(format!(
                        "directed edge ({}, {}) appears in more than one triangle",
                        e.0, e.1
                    )));
                }
            }
        }
        let boundary_set: HashMap<(usize, usize), ()> = self
            .boundary_edges
            .iter()
            .map(|e| ((e[0], e[1]), ()))
            .collect();
        if boundary_set.len() != nb {
            return Err(Error::invalid("duplicate boundary edge"));
        }
        for (&(a, b), _count) in directed.iter() {
            let twin = directed.contains_key(&(b, a));
            let on_boundary = boundary_set.contains_key(&(a, b));
            if twin && on_boundary {
                return Err(Error::invalid(format!(
                    "boundary edge ({a}, {b}) is shared by two triangles"
                )));
            }
            if !twin && !on_boundary {
                return Err(Error::invalid(format!(
                    "edge ({a}, {b}) is neither interior (twinned) nor a boundary-loop edge"
                )));
            }
        }
        for e in &self.boundary_edges {
            if !directed.contains_key(&(e[0], e[1])) {
                return Err(Error::invalid(format!(
                    "boundary edge ({}, {}) is not an oriented triangle edge",
                    e[0], e[1]
                )));
            }
        }
        Ok(())
    }

    /// Uniform red refinement: every triangle is split into four by its edge
    /// midpoints.  On [`DomainKind::Disk`] meshes, midpoints of boundary
    /// edges are projected radially onto the unit circle so the refined
    /// boundary stays on the curved geometry.
    pub fn refine(&self) -> Mesh {
        let mut vertices = self.vertices.clone();
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let boundary_set: HashMap<(usize, usize), ()> = self
            .boundary_edges
            .iter()
            .map(|e| ((e[0].min(e[1]), e[0].max(e[1])), ()))
            .collect();
        let mut mid = |a: usize, b: usize, vertices: &mut Vec<[f64; 2]>| -> usize {
            let key = (a.min(b), a.max(b));
            if let Some(&m) = midpoint.get(&key) {
                return m;
            }
            let pa = vertices[a];
            let pb = vertices[b];
            let mut p = [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])];
            if self.domain == DomainKind::Disk && boundary_set.contains_key(&key) {
                let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
                p = [p[0] / r, p[1] / r];
            }
            let idx = vertices.len();
            vertices.push(p);
            midpoint.insert(key, idx);
            idx
        };
        let mut triangles = Vec::with_capacity(4 * self.triangles.len());
        for t in &self.triangles {
            let [a, b, c] = *t;
            let mab = mid(a, b, &mut vertices);
            let mbc = mid(b, c, &mut vertices);
            let mca = mid(c, a, &mut vertices);
            triangles.push([a, mab, mca]);
            triangles.push([mab, b, mbc]);
            triangles.push([mca, mbc, c]);
            triangles.push([mab, mbc, mca]);
        }
        let mut boundary_edges = Vec::with_capacity(2 * self.boundary_edges.len());
        for e in &self.boundary_edges {
            let key = (e[0].min(e[1]), e[0].max(e[1]));
            let m = midpoint[&key];
            boundary_edges.push([e[0], m]);
            boundary_edges.push([m, e[1]]);
        }
        Mesh {
            vertices,
            triangles,
            boundary_edges,
            domain: self.domain,
        }
    }

    /// Serialise in the plain-text exchange format:
    ///
    /// ```text
    /// nv nt nb
    /// x y        (nv vertex lines, 17 significant digits)
    /// i j k      (nt triangle lines, counter-clockwise, 0-based)
    /// i j        (nb boundary edge lines in loop order, 0-based)
    /// ```
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} {} {}",
            self.vertices.len(),
            self.triangles.len(),
            self.boundary_edges.len()
        );
        for v in &self.vertices {
            let _ = writeln!(out, "{:.16e} {:.16e}", v[0], v[1]);
        }
        for t in &self.triangles {
            let _ = writeln!(out, "{} {} {}", t[0], t[1], t[2]);
        }
        for e in &self.boundary_edges {
            let _ = writeln!(out, "{} {}", e[0], e[1]);
        }
        out
    }

    /// Parse the plain-text exchange format produced by [`Mesh::to_text`].
    /// Loaded meshes are tagged [`DomainKind::External`] and validated.
    pub fn from_text(text: &str) -> Result<Mesh> {
        let mut lines = text.lines().enumerate();
        let (mut nv, mut nt, mut nb) = (0usize, 0usize, 0usize);
        let mut header_seen = false;
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        let mut boundary_edges = Vec::new();
        for (lineno, raw) in &mut lines {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let ctx = |what: &str| format!("mesh text line {}: {what}", lineno + 1);
            if !header_seen {
                if fields.len() != 3 {
                    return Err(Error::config(ctx("expected header `nv nt nb`")));
                }
                nv = fields[0].parse().map_err(|_| Error::config(ctx("bad nv")))?;
                nt = fields[1].parse().map_err(|_| Error::config(ctx("bad nt")))?;
                nb = fields[2].parse().map_err(|_| Error::config(ctx("bad nb")))?;
                header_seen = true;
            } else if vertices.len() < nv {
                if fields.len() != 2 {
                    return Err(Error::config(ctx("expected vertex line `x y`")));
                }
                let x: f64 = fields[0].parse().map_err(|_| Error::config(ctx("bad x")))?;
                let y: f64 = fields[1].parse().map_err(|_| Error::config(ctx("bad y")))?;
                vertices.push([x, y]);
            } else if triangles.len() < nt {
                if fields.len() != 3 {
                    return Err(Error::config(ctx("expected triangle line `i j k`")));
                }
                let mut t = [0usize; 3];
                for (k, f) in fields.iter().enumerate() {
                    t[k] = f.parse().map_err(|_| Error::config(ctx("bad triangle index")))?;
                }
                triangles.push(t);
            } else if boundary_edges.len() < nb {
                if fields.len() != 2 {
                    return Err(Error::config(ctx("expected boundary edge line `i j`")));
                }
                let i: usize = fields[0].parse().map_err(|_| Error::config(ctx("bad edge index")))?;
                let j: usize = fields[1].parse().map_err(|_| Error::config(ctx("bad edge index")))?;
                boundary_edges.push([i, j]);
            } else {
                return Err(Error::config(ctx("unexpected trailing content")));
            }
        }
        if !header_seen {
            return Err(Error::config("mesh text: empty input"));
        }
        if vertices.len() != nv || triangles.len() != nt || boundary_edges.len() != nb {
            return Err(Error::config(format!(
                "mesh text: truncated input (got {}/{} vertices, {}/{} triangles, {}/{} edges)",
                vertices.len(),
                nv,
                triangles.len(),
                nt,
                boundary_edges.len(),
                nb
            )));
        }
        let mesh = Mesh {
            vertices,
            triangles,
            boundary_edges,
            domain: DomainKind::External,
        };
        mesh.validate()?;
        Ok(mesh)
    }
}

/// Structured triangulation of the unit square with `n` cells per side,
/// `(n+1)²` vertices and `2n²` triangles.  The boundary loop starts at the
/// origin and runs counter-clockwise.
pub fn generate_square_mesh(n: usize) -> Result<Mesh> {
    if n == 0 {
        return Err(Error::invalid("square mesh requires n >= 1"));
    }
    let np = n + 1;
    let v = |i: usize, j: usize| j * np + i;
    let mut vertices = Vec::with_capacity(np * np);
    for j in 0..np {
        for i in 0..np {
            vertices.push([i as f64 / n as f64, j as f64 / n as f64]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (v00, v10, v01, v11) = (v(i, j), v(i + 1, j), v(i, j + 1), v(i + 1, j + 1));
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }
    let mut boundary_edges = Vec::with_capacity(4 * n);
    for i in 0..n {
        boundary_edges.push([v(i, 0), v(i + 1, 0)]);
    }
    for j in 0..n {
        boundary_edges.push([v(n, j), v(n, j + 1)]);
    }
    for i in 0..n {
        boundary_edges.push([v(n - i, n), v(n - i - 1, n)]);
    }
    for j in 0..n {
        boundary_edges.push([v(0, n - j), v(0, n - j - 1)]);
    }
    let mesh = Mesh {
        vertices,
        triangles,
        boundary_edges,
        domain: DomainKind::Square,
    };
    debug_assert!(mesh.validate().is_ok());
    Ok(mesh)
}

/// Quasi-uniform triangulation of the unit disk with exactly `n_boundary`
/// vertices on the unit circle (`n_boundary` even, at least 6).
///
/// The construction uses concentric rings: ring `k` of `m = round(n_boundary/6)`
/// sits at radius `k/m` and carries an even number of vertices roughly
/// proportional to its radius; adjacent rings are joined by a greedy
/// shortest-advance bridge, and the innermost ring is fanned around the
/// centre vertex.
pub fn generate_disk_mesh(n_boundary: usize) -> Result<Mesh> {
    if n_boundary < 6 || n_boundary % 2 != 0 {
        return Err(Error::invalid(format!(
            "disk mesh requires an even boundary vertex count >= 6, got {n_boundary}"
        )));
    }
    let m = ((n_boundary as f64 / 6.0).round() as usize).max(1);
    // Ring k = 1..=m at radius k/m with c_k vertices (even, ~ proportional
    // to the radius, outermost exactly n_boundary).
    let counts: Vec<usize> = (1..=m)
        .map(|k| {
            if k == m {
                n_boundary
            } else {
                2 * ((n_boundary * k) as f64 / (2 * m) as f64).ceil() as usize
            }
        })
        .collect();
    let mut vertices = vec![[0.0, 0.0]];
    let mut ring_start = Vec::with_capacity(m);
    for (k, &c) in counts.iter().enumerate() {
        let r = (k + 1) as f64 / m as f64;
        ring_start.push(vertices.len());
        for j in 0..c {
            let theta = 2.0 * std::f64::consts::PI * j as f64 / c as f64;
            vertices.push([r * theta.cos(), r * theta.sin()]);
        }
    }
    let mut triangles = Vec::new();
    // Central fan.
    let c0 = counts[0];
    for j in 0..c0 {
        triangles.push([0, ring_start[0] + j, ring_start[0] + (j + 1) % c0]);
    }
    // Bridge consecutive rings: advance the pointer whose next vertex comes
    // first in angle, producing c_in + c_out triangles per annulus.
    for k in 0..m - 1 {
        let (ci, co) = (counts[k], counts[k + 1]);
        let (si, so) = (ring_start[k], ring_start[k + 1]);
        let inner = |i: usize| si + i % ci;
        let outer = |o: usize| so + o % co;
        let (mut i, mut o) = (0usize, 0usize);
        while i < ci || o < co {
            let advance_outer = if o == co {
                false
            } else if i == ci {
                true
            } else {
                // Compare fractional angles of the candidate next vertices.
                (o + 1) * ci <= (i + 1) * co
            };
            if advance_outer {
                triangles.push([inner(i), outer(o), outer(o + 1)]);
                o += 1;
            } else {
                triangles.push([inner(i), outer(o), inner(i + 1)]);
                i += 1;
            }
        }
    }
    let sb = ring_start[m - 1];
    let boundary_edges: Vec<[usize; 2]> = (0..n_boundary)
        .map(|j| [sb + j, sb + (j + 1) % n_boundary])
        .collect();
    let mesh = Mesh {
        vertices,
        triangles,
        boundary_edges,
        domain: DomainKind::Disk,
    };
    mesh.validate()?;
    Ok(mesh)
}
