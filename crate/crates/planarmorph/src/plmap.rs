//! Piecewise-affine maps on triangulated rectangles: evaluation, Jacobians,
//! composition by mesh overlay, restriction to polylines, exact preimages,
//! and homeomorphism verification.
//!
//! A map may carry explicit *discontinuity vertices*: mesh vertices at which
//! each incident triangle may assign its own corner image (a "fan of
//! limits", encoding cavitation points). Such a map is affine on every
//! triangle and continuous across every interior edge not incident to a
//! discontinuity vertex; along incident edges the two traces agree at the
//! far endpoint and may differ linearly toward the fan vertex.

use crate::error::{PlanarError, Result};
use crate::geom::exact::{rat, rat_to_f64, RPoint, Rat};
use crate::geom::{orient, Point, Polyline, Rect};
use num::{Signed, Zero};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};

// ---------------------------------------------------------------------------
// 2×2 matrices
// ---------------------------------------------------------------------------

/// A 2×2 real matrix, row-major: [[a, b], [c, d]].
#[derive(Debug, Copy, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat2 {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Mat2 {
    pub const ZERO: Mat2 = Mat2 { a: 0.0, b: 0.0, c: 0.0, d: 0.0 };
    pub const ID: Mat2 = Mat2 { a: 1.0, b: 0.0, c: 0.0, d: 1.0 };

    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Mat2 { a, b, c, d }
    }
    /// Matrix with the given columns.
    pub fn from_columns(c1: Point, c2: Point) -> Self {
        Mat2 { a: c1.x, b: c2.x, c: c1.y, d: c2.y }
    }
    pub fn det(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }
    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        (self.a * self.a + self.b * self.b + self.c * self.c + self.d * self.d).sqrt()
    }
    pub fn sub(&self, o: &Mat2) -> Mat2 {
        Mat2::new(self.a - o.a, self.b - o.b, self.c - o.c, self.d - o.d)
    }
    pub fn scale(&self, s: f64) -> Mat2 {
        Mat2::new(self.a * s, self.b * s, self.c * s, self.d * s)
    }
    pub fn mul_vec(&self, v: Point) -> Point {
        Point::new(self.a * v.x + self.b * v.y, self.c * v.x + self.d * v.y)
    }
    pub fn mul(&self, o: &Mat2) -> Mat2 {
        Mat2::new(
            self.a * o.a + self.b * o.c,
            self.a * o.b + self.b * o.d,
            self.c * o.a + self.d * o.c,
            self.c * o.b + self.d * o.d,
        )
    }
    pub fn inverse(&self) -> Option<Mat2> {
        let det = self.det();
        if det == 0.0 {
            return None;
        }
        Some(Mat2::new(self.d / det, -self.b / det, -self.c / det, self.a / det))
    }
    /// Singular values, largest first.
    pub fn singular_values(&self) -> (f64, f64) {
        let m = nalgebra::Matrix2::new(self.a, self.b, self.c, self.d);
        let svd = m.svd(false, false);
        let s0 = svd.singular_values[0];
        let s1 = svd.singular_values[1];
        (s0.max(s1), s0.min(s1))
    }
    /// Nearest rank-1 matrix in Frobenius norm (zero the smaller singular
    /// value), together with the projection distance.
    pub fn nearest_rank1(&self) -> (Mat2, f64) {
        let m = nalgebra::Matrix2::new(self.a, self.b, self.c, self.d);
        let svd = m.svd(true, true);
        let (i_max, i_min) = if svd.singular_values[0] >= svd.singular_values[1] {
            (0, 1)
        } else {
            (1, 0)
        };
        let u = svd.u.unwrap();
        let vt = svd.v_t.unwrap();
        let s = svd.singular_values[i_max];
        let proj = nalgebra::Matrix2::from_fn(|r, c| s * u[(r, i_max)] * vt[(i_max, c)]);
        let p = Mat2::new(proj[(0, 0)], proj[(0, 1)], proj[(1, 0)], proj[(1, 1)]);
        (p, svd.singular_values[i_min])
    }
}

// ---------------------------------------------------------------------------
// Triangulation
// ---------------------------------------------------------------------------

/// A triangulation of an axis-aligned rectangle: counterclockwise triangles
/// with disjoint interiors covering the domain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Triangulation {
    pub vertices: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
    pub domain: Rect,
    #[serde(skip)]
    locator: once_buckets::Buckets,
}

mod once_buckets {
    //! Lazy uniform-grid point-location accelerator.
    use std::sync::OnceLock;

    #[derive(Debug, Default)]
    pub struct Buckets(pub OnceLock<Grid>);

    #[derive(Debug)]
    pub struct Grid {
        pub nx: usize,
        pub ny: usize,
        pub cells: Vec<Vec<u32>>,
    }

    impl Clone for Buckets {
        fn clone(&self) -> Self {
            Buckets(OnceLock::new())
        }
    }
}

impl Triangulation {
    /// Build and structurally check a triangulation: counterclockwise
    /// triangles, vertices inside the domain, finite coordinates.
    /// (Coverage and manifoldness are checked by [`Triangulation::validate`].)
    pub fn new(vertices: Vec<Point>, triangles: Vec<[usize; 3]>, domain: Rect) -> Result<Self> {
        for (i, p) in vertices.iter().enumerate() {
            if !p.is_finite() || !domain.contains(*p) {
                return Err(PlanarError::OutOfDomain {
                    detail: format!("vertex {i} ({}, {}) outside domain", p.x, p.y),
                });
            }
        }
        for (t, tri) in triangles.iter().enumerate() {
            let [i, j, k] = *tri;
            if i >= vertices.len() || j >= vertices.len() || k >= vertices.len() {
                return Err(PlanarError::OutOfDomain { detail: format!("triangle {t} index out of range") });
            }
            if orient(vertices[i], vertices[j], vertices[k]) <= 0 {
                return Err(PlanarError::NotInjective {
                    detail: format!("triangle {t} is not counterclockwise"),
                });
            }
        }
        Ok(Triangulation { vertices, triangles, domain, locator: Default::default() })
    }

    /// Regular `nx × ny` lattice triangulation with each cell split along
    /// its southwest–northeast diagonal.
    pub fn lattice(domain: Rect, nx: usize, ny: usize) -> Triangulation {
        assert!(nx >= 1 && ny >= 1);
        let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                vertices.push(Point::new(
                    domain.x0 + domain.width() * i as f64 / nx as f64,
                    domain.y0 + domain.height() * j as f64 / ny as f64,
                ));
            }
        }
        let idx = |i: usize, j: usize| j * (nx + 1) + i;
        let mut triangles = Vec::with_capacity(2 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
                triangles.push([a, b, c]);
                triangles.push([a, c, d]);
            }
        }
        Triangulation::new(vertices, triangles, domain).expect("lattice is valid")
    }

    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        let [i, j, k] = self.triangles[t];
        [self.vertices[i], self.vertices[j], self.vertices[k]]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_points(t);
        0.5 * (b.sub(a)).cross(c.sub(a))
    }

    /// Map from undirected edges (min, max) to the incident triangles.
    pub fn edge_map(&self) -> HashMap<(usize, usize), Vec<usize>> {
        let mut m: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (t, tri) in self.triangles.iter().enumerate() {
            for e in 0..3 {
                let a = tri[e];
                let b = tri[(e + 1) % 3];
                m.entry((a.min(b), a.max(b))).or_default().push(t);
            }
        }
        m
    }

    /// Ordered vertex indices of the boundary cycle (counterclockwise).
    pub fn boundary_cycle(&self) -> Result<Vec<usize>> {
        // Boundary edges appear in exactly one triangle; orient them as in
        // that triangle (domain on the left) and chain them.
        let mut next: HashMap<usize, usize> = HashMap::new();
        let edge_map = self.edge_map();
        for (t, tri) in self.triangles.iter().enumerate() {
            for e in 0..3 {
                let a = tri[e];
                let b = tri[(e + 1) % 3];
                if edge_map[&(a.min(b), a.max(b))].len() == 1 {
                    if next.insert(a, b).is_some() {
                        return Err(PlanarError::NotInjective {
                            detail: format!("boundary is not a single cycle at vertex {a} (triangle {t})"),
                        });
                    }
                }
            }
        }
        if next.is_empty() {
            return Err(PlanarError::NotInjective { detail: "no boundary edges".into() });
        }
        let start = *next.keys().next().unwrap();
        let mut cycle = vec![start];
        let mut cur = next[&start];
        while cur != start {
            cycle.push(cur);
            cur = *next.get(&cur).ok_or_else(|| PlanarError::NotInjective {
                detail: format!("boundary chain breaks at vertex {cur}"),
            })?;
            if cycle.len() > next.len() {
                return Err(PlanarError::NotInjective { detail: "boundary chain does not close".into() });
            }
        }
        if cycle.len() != next.len() {
            return Err(PlanarError::NotInjective {
                detail: "boundary has more than one cycle".into(),
            });
        }
        Ok(cycle)
    }

    /// Full structural validation: coverage of the domain by area, and
    /// edge-manifoldness (each interior edge shared by exactly 2 triangles,
    /// boundary edges by 1).
    pub fn validate(&self) -> Result<()> {
        let mut area = Rat::zero();
        for t in 0..self.triangles.len() {
            let [a, b, c] = self.triangle_points(t);
            let (ax, ay) = (rat(a.x), rat(a.y));
            let det = (rat(b.x) - &ax) * (rat(c.y) - &ay) - (rat(b.y) - &ay) * (rat(c.x) - &ax);
            area += det;
        }
        let total = rat(self.domain.width()) * rat(self.domain.height()) * rat(2.0);
        if area != total {
            let got = rat_to_f64(&area) / 2.0;
            let want = rat_to_f64(&total) / 2.0;
            if (got - want).abs() > 1e-9 * want.abs().max(1.0) {
                return Err(PlanarError::NotInjective {
                    detail: format!("triangles cover area {got}, domain has {want}"),
                });
            }
        }
        for ((a, b), ts) in self.edge_map() {
            if ts.len() > 2 {
                return Err(PlanarError::NotInjective {
                    detail: format!("edge ({a},{b}) shared by {} triangles", ts.len()),
                });
            }
        }
        self.boundary_cycle()?;
        Ok(())
    }

    fn grid(&self) -> &once_buckets::Grid {
        self.locator.0.get_or_init(|| {
            let n = (self.triangles.len() as f64).sqrt().ceil() as usize;
            let nx = n.clamp(1, 512);
            let ny = nx;
            let mut cells = vec![Vec::new(); nx * ny];
            let (w, h) = (self.domain.width(), self.domain.height());
            for (t, _) in self.triangles.iter().enumerate() {
                let ps = self.triangle_points(t);
                let xs = ps.iter().map(|p| p.x);
                let ys = ps.iter().map(|p| p.y);
                let x_min = xs.clone().fold(f64::INFINITY, f64::min);
                let x_max = xs.fold(f64::NEG_INFINITY, f64::max);
                let y_min = ys.clone().fold(f64::INFINITY, f64::min);
                let y_max = ys.fold(f64::NEG_INFINITY, f64::max);
                let i0 = (((x_min - self.domain.x0) / w * nx as f64).floor() as isize).clamp(0, nx as isize - 1) as usize;
                let i1 = (((x_max - self.domain.x0) / w * nx as f64).floor() as isize).clamp(0, nx as isize - 1) as usize;
                let j0 = (((y_min - self.domain.y0) / h * ny as f64).floor() as isize).clamp(0, ny as isize - 1) as usize;
                let j1 = (((y_max - self.domain.y0) / h * ny as f64).floor() as isize).clamp(0, ny as isize - 1) as usize;
                for j in j0..=j1 {
                    for i in i0..=i1 {
                        cells[j * nx + i].push(t as u32);
                    }
                }
            }
            once_buckets::Grid { nx, ny, cells }
        })
    }

    /// Index of a triangle containing `p` (closed triangles; points on
    /// shared edges return one of the incident triangles).
    pub fn locate(&self, p: Point) -> Option<usize> {
        if !self.domain.contains(p) {
            return None;
        }
        let g = self.grid();
        let i = (((p.x - self.domain.x0) / self.domain.width() * g.nx as f64).floor() as isize)
            .clamp(0, g.nx as isize - 1) as usize;
        let j = (((p.y - self.domain.y0) / self.domain.height() * g.ny as f64).floor() as isize)
            .clamp(0, g.ny as isize - 1) as usize;
        for &t in &g.cells[j * g.nx + i] {
            if self.triangle_contains(t as usize, p) {
                return Some(t as usize);
            }
        }
        // Bucket rounding can miss by one cell for boundary points; fall
        // back to a full scan before giving up.
        (0..self.triangles.len()).find(|&t| self.triangle_contains(t, p))
    }

    pub fn triangle_contains(&self, t: usize, p: Point) -> bool {
        let [a, b, c] = self.triangle_points(t);
        orient(a, b, p) >= 0 && orient(b, c, p) >= 0 && orient(c, a, p) >= 0
    }
}

// ---------------------------------------------------------------------------
// Piecewise-affine map
// ---------------------------------------------------------------------------

/// A piecewise-affine map: one image point per mesh vertex, plus optional
/// per-(triangle, corner) overrides at declared discontinuity vertices.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlMap {
    pub mesh: Triangulation,
    pub images: Vec<Point>,
    /// Corner-image overrides: (triangle index, corner 0..3) → image.
    /// Present only at discontinuity vertices.
    pub fans: BTreeMap<(usize, u8), Point>,
    /// Vertex indices carrying fans.
    pub discontinuities: Vec<usize>,
}

impl PlMap {
    pub fn new(mesh: Triangulation, images: Vec<Point>) -> Result<Self> {
        if images.len() != mesh.vertices.len() {
            return Err(PlanarError::OutOfDomain {
                detail: format!("{} images for {} vertices", images.len(), mesh.vertices.len()),
            });
        }
        Ok(PlMap { mesh, images, fans: BTreeMap::new(), discontinuities: Vec::new() })
    }

    /// Declare corner overrides making `vertex` a discontinuity fan.
    /// `corner_images` maps triangle index → image of this vertex's corner
    /// in that triangle.
    pub fn add_fan(&mut self, vertex: usize, corner_images: &[(usize, Point)]) {
        for &(t, img) in corner_images {
            let corner = self.mesh.triangles[t]
                .iter()
                .position(|&v| v == vertex)
                .expect("fan triangle must contain the vertex") as u8;
            self.fans.insert((t, corner), img);
        }
        if !self.discontinuities.contains(&vertex) {
            self.discontinuities.push(vertex);
        }
    }

    pub fn identity(mesh: Triangulation) -> PlMap {
        let images = mesh.vertices.clone();
        PlMap { mesh, images, fans: BTreeMap::new(), discontinuities: Vec::new() }
    }

    /// Geometric locations of the discontinuity vertices.
    pub fn discontinuity_points(&self) -> Vec<Point> {
        self.discontinuities.iter().map(|&v| self.mesh.vertices[v]).collect()
    }

    /// Image of corner `c` of triangle `t` (respecting fan overrides).
    pub fn corner_image(&self, t: usize, c: usize) -> Point {
        if let Some(p) = self.fans.get(&(t, c as u8)) {
            return *p;
        }
        self.images[self.mesh.triangles[t][c]]
    }

    pub fn triangle_images(&self, t: usize) -> [Point; 3] {
        [self.corner_image(t, 0), self.corner_image(t, 1), self.corner_image(t, 2)]
    }

    /// Constant Jacobian of the affine piece on triangle `t`.
    pub fn jacobian(&self, t: usize) -> Mat2 {
        let [a, b, c] = self.mesh.triangle_points(t);
        let [fa, fb, fc] = self.triangle_images(t);
        let d = Mat2::from_columns(b.sub(a), c.sub(a));
        let f = Mat2::from_columns(fb.sub(fa), fc.sub(fa));
        let dinv = d.inverse().expect("domain triangle is non-degenerate");
        f.mul(&dinv)
    }

    /// Affine value on triangle `t` at point `p` (no containment check).
    pub fn eval_in_triangle(&self, t: usize, p: Point) -> Point {
        let [a, b, c] = self.mesh.triangle_points(t);
        let [fa, fb, fc] = self.triangle_images(t);
        let d = Mat2::from_columns(b.sub(a), c.sub(a));
        let dinv = d.inverse().expect("domain triangle is non-degenerate");
        let w = dinv.mul_vec(p.sub(a));
        fa.add(fb.sub(fa).scale(w.x)).add(fc.sub(fa).scale(w.y))
    }

    /// Value at `p`. Errors at discontinuity vertices (the value there is a
    /// fan, not a point) and outside the domain.
    pub fn eval(&self, p: Point) -> Result<Point> {
        for &v in &self.discontinuities {
            if self.mesh.vertices[v] == p {
                return Err(PlanarError::AtDiscontinuity {
                    detail: format!("({}, {}) is a discontinuity vertex", p.x, p.y),
                });
            }
        }
        let t = self.mesh.locate(p).ok_or_else(|| PlanarError::OutOfDomain {
            detail: format!("({}, {}) outside domain", p.x, p.y),
        })?;
        Ok(self.eval_in_triangle(t, p))
    }

    /// Triangles incident to vertex `v`, in counterclockwise order around it.
    pub fn triangles_around_vertex(&self, v: usize) -> Vec<usize> {
        let mut incident: Vec<usize> = self
            .mesh
            .triangles
            .iter()
            .enumerate()
            .filter(|(_, tri)| tri.contains(&v))
            .map(|(t, _)| t)
            .collect();
        let center = self.mesh.vertices[v];
        incident.sort_by(|&s, &t| {
            let ang = |ti: usize| {
                let ps = self.mesh.triangle_points(ti);
                let centroid = Point::new(
                    (ps[0].x + ps[1].x + ps[2].x) / 3.0,
                    (ps[0].y + ps[1].y + ps[2].y) / 3.0,
                );
                let d = centroid.sub(center);
                d.y.atan2(d.x)
            };
            ang(s).partial_cmp(&ang(t)).unwrap()
        });
        incident
    }

    /// The fan sweep at a discontinuity vertex: corner images of the
    /// incident triangles in rotational order. For a continuity vertex this
    /// is a single point.
    pub fn fan_values(&self, v: usize) -> Vec<Point> {
        let mut out = Vec::new();
        for t in self.triangles_around_vertex(v) {
            let c = self.mesh.triangles[t].iter().position(|&w| w == v).unwrap();
            let img = self.corner_image(t, c);
            if out.last() != Some(&img) {
                out.push(img);
            }
        }
        out.dedup();
        out
    }

    /// Check continuity across interior edges (skipping edges incident to
    /// discontinuity vertices) and the fan bookkeeping.
    pub fn validate(&self) -> Result<()> {
        self.mesh.validate()?;
        let edge_map = self.mesh.edge_map();
        for ((a, b), ts) in edge_map {
            if ts.len() != 2 {
                continue;
            }
            if self.discontinuities.contains(&a) || self.discontinuities.contains(&b) {
                continue;
            }
            for &v in &[a, b] {
                let mut vals = Vec::new();
                for &t in &ts {
                    let c = self.mesh.triangles[t].iter().position(|&w| w == v).unwrap();
                    vals.push(self.corner_image(t, c));
                }
                if vals[0] != vals[1] {
                    return Err(PlanarError::NotInjective {
                        detail: format!("map discontinuous across edge ({a},{b}) at vertex {v}"),
                    });
                }
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Homeomorphism verification
// ---------------------------------------------------------------------------

/// Outcome of [`verify_homeomorphism`]: `ok` plus a witness when it fails.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HomeoVerdict {
    pub ok: bool,
    pub witness: Option<String>,
}

/// Verify that a piecewise-affine map is an orientation-preserving
/// homeomorphism onto its image: every triangle image strictly
/// counterclockwise, no discontinuity fans, and the boundary image a simple
/// closed curve of winding 1 around an interior image point. Together these
/// imply global injectivity (image areas sum to the area enclosed by the
/// boundary image, so no point can be covered twice).
pub fn verify_homeomorphism(m: &PlMap) -> HomeoVerdict {
    if !m.fans.is_empty() {
        return HomeoVerdict { ok: false, witness: Some("map has discontinuity fans".into()) };
    }
    for t in 0..m.mesh.triangles.len() {
        let [a, b, c] = m.triangle_images(t);
        if orient(a, b, c) <= 0 {
            return HomeoVerdict {
                ok: false,
                witness: Some(format!("triangle {t} image is degenerate or flipped")),
            };
        }
    }
    let cycle = match m.mesh.boundary_cycle() {
        Ok(c) => c,
        Err(e) => return HomeoVerdict { ok: false, witness: Some(e.to_string()) },
    };
    let mut boundary_image: Vec<Point> = Vec::with_capacity(cycle.len());
    for &v in &cycle {
        let p = m.images[v];
        if boundary_image.last() == Some(&p) {
            continue; // collapsed boundary vertices would break Polyline; catch below
        }
        boundary_image.push(p);
    }
    if boundary_image.len() < 3 {
        return HomeoVerdict { ok: false, witness: Some("boundary image collapsed".into()) };
    }
    if boundary_image.first() == boundary_image.last() {
        boundary_image.pop();
    }
    if boundary_image.len() != cycle.len() {
        return HomeoVerdict {
            ok: false,
            witness: Some("boundary image repeats consecutive vertices".into()),
        };
    }
    let curve = Polyline::closed(boundary_image);
    if !curve.is_simple() {
        return HomeoVerdict { ok: false, witness: Some("boundary image is not simple".into()) };
    }
    if curve.signed_area() <= 0.0 {
        return HomeoVerdict {
            ok: false,
            witness: Some("boundary image is clockwise".into()),
        };
    }
    // Winding of the boundary image around one interior image point.
    let t0 = 0;
    let [a, b, c] = m.triangle_images(t0);
    let centroid = Point::new((a.x + b.x + c.x) / 3.0, (a.y + b.y + c.y) / 3.0);
    match crate::geom::winding_number(&curve, centroid) {
        Ok(1) => HomeoVerdict { ok: true, witness: None },
        Ok(w) => HomeoVerdict {
            ok: false,
            witness: Some(format!("boundary image winds {w} times around an interior value")),
        },
        Err(_) => {
            // The probe hit the boundary image; try another triangle.
            for t in 1..m.mesh.triangles.len() {
                let [a, b, c] = m.triangle_images(t);
                let q = Point::new((a.x + b.x + c.x) / 3.0, (a.y + b.y + c.y) / 3.0);
                match crate::geom::winding_number(&curve, q) {
                    Ok(1) => return HomeoVerdict { ok: true, witness: None },
                    Ok(w) => {
                        return HomeoVerdict {
                            ok: false,
                            witness: Some(format!("boundary image winds {w} times around an interior value")),
                        }
                    }
                    Err(_) => continue,
                }
            }
            HomeoVerdict { ok: false, witness: Some("no interior probe point found".into()) }
        }
    }
}

// ---------------------------------------------------------------------------
// Restriction to a polyline
// ---------------------------------------------------------------------------

/// A piecewise-linear function along a polyline carrier: values at strictly
/// increasing normalized-arclength breakpoints.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeFunction {
    /// Normalized arclength parameters, `0 = t_0 < … < t_m = 1`.
    pub breakpoints: Vec<f64>,
    /// Image points at the breakpoints.
    pub values: Vec<Point>,
    /// The carrier polyline in the domain.
    pub carrier: Polyline,
}

impl EdgeFunction {
    pub fn total_length(&self) -> f64 {
        self.carrier.length()
    }

    /// Value at normalized arclength `t`.
    pub fn value_at(&self, t: f64) -> Point {
        let t = t.clamp(0.0, 1.0);
        match self.breakpoints.binary_search_by(|b| b.partial_cmp(&t).unwrap()) {
            Ok(i) => self.values[i],
            Err(i) => {
                let i1 = i.min(self.breakpoints.len() - 1);
                let i0 = i1.saturating_sub(1);
                let (t0, t1) = (self.breakpoints[i0], self.breakpoints[i1]);
                if t1 == t0 {
                    self.values[i0]
                } else {
                    self.values[i0].lerp(self.values[i1], (t - t0) / (t1 - t0))
                }
            }
        }
    }

    /// Per-piece data: (arclength of piece, derivative w.r.t. arclength,
    /// unit tangent of the carrier on the piece).
    pub fn pieces(&self) -> Vec<(f64, Point, Point)> {
        let total = self.total_length();
        let mut out = Vec::with_capacity(self.breakpoints.len().saturating_sub(1));
        for i in 0..self.breakpoints.len().saturating_sub(1) {
            let ds = (self.breakpoints[i + 1] - self.breakpoints[i]) * total;
            if ds <= 0.0 {
                continue;
            }
            let dv = self.values[i + 1].sub(self.values[i]).scale(1.0 / ds);
            let a = self.carrier.point_at(self.breakpoints[i]);
            let b = self.carrier.point_at(self.breakpoints[i + 1]);
            let tau = {
                let d = b.sub(a);
                let n = d.norm();
                if n == 0.0 {
                    Point::new(0.0, 0.0)
                } else {
                    d.scale(1.0 / n)
                }
            };
            out.push((ds, dv, tau));
        }
        out
    }
}

/// A normalized-arclength parameter span of a polyline lying inside one
/// closed triangle of a mesh.
#[derive(Debug, Clone, Copy)]
pub struct TraceSpan {
    pub t0: f64,
    pub t1: f64,
    pub triangle: usize,
}

/// Partition a polyline into parameter spans, each contained in a single
/// closed triangle (breaking wherever the polyline crosses a mesh edge).
pub fn trace_triangles(m: &PlMap, gamma: &Polyline) -> Result<Vec<TraceSpan>> {
    let total_len = gamma.length();
    let mut spans: Vec<TraceSpan> = Vec::new();
    let mut acc = 0.0f64; // arclength before the current segment

    let edge_map = m.mesh.edge_map();
    for si in 0..gamma.segment_count() {
        let (a, b) = gamma.segment(si);
        let seg_len = a.dist(b);
        // Collect crossing parameters with every mesh edge (exact solves,
        // then converted to f64).
        let ra = RPoint::from_point(a);
        let rb = RPoint::from_point(b);
        let mut ts: Vec<f64> = vec![0.0, 1.0];
        for (&(u, v), _) in edge_map.iter() {
            let pu = RPoint::from_point(m.mesh.vertices[u]);
            let pv = RPoint::from_point(m.mesh.vertices[v]);
            if let Some((t, _)) = crate::geom::exact::seg_seg_point_rat(&ra, &rb, &pu, &pv) {
                ts.push(rat_to_f64(&t));
            } else {
                // Collinear overlap: break at the projections of the edge
                // endpoints.
                let d = rb.sub(&ra);
                if d.cross(&pv.sub(&pu)).is_zero()
                    && crate::geom::exact::orient_rat(&ra, &rb, &pu) == 0
                {
                    for q in [&pu, &pv] {
                        let w = q.sub(&ra);
                        let len2 = d.dot(&d);
                        if !len2.is_zero() {
                            let t = w.dot(&d) / len2;
                            let tf = rat_to_f64(&t);
                            if (0.0..=1.0).contains(&tf) {
                                ts.push(tf);
                            }
                        }
                    }
                }
            }
        }
        ts.sort_by(|x, y| x.partial_cmp(y).unwrap());
        ts.dedup_by(|x, y| (*x - *y).abs() < 1e-15);
        for wi in 0..ts.len().saturating_sub(1) {
            let (t0, t1) = (ts[wi], ts[wi + 1]);
            if t1 <= t0 {
                continue;
            }
            let probe = a.lerp(b, 0.5 * (t0 + t1));
            let tri = m.mesh.locate(probe).ok_or_else(|| PlanarError::OutOfDomain {
                detail: format!("carrier leaves the domain near ({}, {})", probe.x, probe.y),
            })?;
            let g0 = if total_len == 0.0 { 0.0 } else { (acc + t0 * seg_len) / total_len };
            let g1 = if total_len == 0.0 { 0.0 } else { (acc + t1 * seg_len) / total_len };
            spans.push(TraceSpan { t0: g0, t1: g1, triangle: tri });
        }
        acc += seg_len;
    }
    if let Some(first) = spans.first_mut() {
        first.t0 = 0.0;
    }
    if let Some(last) = spans.last_mut() {
        last.t1 = 1.0;
    }
    Ok(spans)
}

/// Restrict a map to a polyline: a piecewise-linear function of arclength
/// with breakpoints wherever the polyline crosses a mesh edge. Errors if the
/// polyline passes through a discontinuity vertex.
pub fn restrict(m: &PlMap, gamma: &Polyline) -> Result<EdgeFunction> {
    for &v in &m.discontinuities {
        let p = m.mesh.vertices[v];
        if gamma.contains_point(p) {
            return Err(PlanarError::HitsDiscontinuity {
                detail: format!("carrier passes through discontinuity vertex ({}, {})", p.x, p.y),
            });
        }
    }
    let spans = trace_triangles(m, gamma)?;
    let mut breakpoints: Vec<f64> = Vec::new();
    let mut values: Vec<Point> = Vec::new();
    for span in &spans {
        let p0 = gamma.point_at(span.t0);
        let p1 = gamma.point_at(span.t1);
        let v0 = m.eval_in_triangle(span.triangle, p0);
        let v1 = m.eval_in_triangle(span.triangle, p1);
        if breakpoints.is_empty() {
            breakpoints.push(span.t0);
            values.push(v0);
        }
        // Off discontinuities the traces from adjoining spans agree at the
        // shared breakpoint; keep the earlier value.
        if span.t1 > *breakpoints.last().unwrap() + 1e-15 {
            breakpoints.push(span.t1);
            values.push(v1);
        }
    }
    if breakpoints.is_empty() {
        return Err(PlanarError::OutOfDomain { detail: "empty carrier".into() });
    }
    Ok(EdgeFunction { breakpoints, values, carrier: gamma.clone() })
}

// ---------------------------------------------------------------------------
// Composition by mesh overlay
// ---------------------------------------------------------------------------

/// Compose two piecewise-affine maps: the result is `outer ∘ inner` on the
/// overlay refinement of `inner`'s mesh with the pullback of `outer`'s mesh.
/// `inner` must verify as a homeomorphism whose image lies in `outer`'s
/// domain. New overlay vertices are snapped to existing ones within 1e−12.
pub fn compose(outer: &PlMap, inner: &PlMap) -> Result<PlMap> {
    let verdict = verify_homeomorphism(inner);
    if !verdict.ok {
        return Err(PlanarError::NotInjective {
            detail: format!("inner map: {}", verdict.witness.unwrap_or_default()),
        });
    }

    // Rational vertex pool with 1e-12 snapping (exact equality first, then
    // Euclidean merge).
    struct Pool {
        points: Vec<RPoint>,
        points_f64: Vec<Point>,
        index: HashMap<(i64, i64), Vec<usize>>,
    }
    impl Pool {
        fn key_of(p: Point) -> (i64, i64) {
            ((p.x / 1e-9).round() as i64, (p.y / 1e-9).round() as i64)
        }
        fn intern(&mut self, rp: RPoint) -> usize {
            let pf = rp.to_point();
            let k = Self::key_of(pf);
            for dx in -1..=1 {
                for dy in -1..=1 {
                    if let Some(cands) = self.index.get(&(k.0 + dx, k.1 + dy)) {
                        for &i in cands {
                            if self.points[i] == rp || self.points_f64[i].dist(pf) < 1e-12 {
                                return i;
                            }
                        }
                    }
                }
            }
            self.points.push(rp);
            self.points_f64.push(pf);
            self.index.entry(k).or_default().push(self.points.len() - 1);
            self.points.len() - 1
        }
    }
    let mut pool = Pool { points: Vec::new(), points_f64: Vec::new(), index: HashMap::new() };

    let mut triangles: Vec<[usize; 3]> = Vec::new();
    let mut corner_imgs: Vec<[Point; 3]> = Vec::new();

    // Precompute outer triangle bboxes.
    let outer_boxes: Vec<(f64, f64, f64, f64)> = (0..outer.mesh.triangles.len())
        .map(|s| {
            let ps = outer.mesh.triangle_points(s);
            (
                ps.iter().map(|p| p.x).fold(f64::INFINITY, f64::min),
                ps.iter().map(|p| p.y).fold(f64::INFINITY, f64::min),
                ps.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max),
                ps.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max),
            )
        })
        .collect();

    for t in 0..inner.mesh.triangles.len() {
        let dom = inner.mesh.triangle_points(t);
        let img = inner.triangle_images(t);
        // Affine piece of the inner map on this triangle and its inverse.
        let d = Mat2::from_columns(dom[1].sub(dom[0]), dom[2].sub(dom[0]));
        let f = Mat2::from_columns(img[1].sub(img[0]), img[2].sub(img[0]));
        let dinv = d.inverse().expect("non-degenerate domain triangle");
        let jac = f.mul(&dinv);
        let jac_inv = match jac.inverse() {
            Some(j) => j,
            None => {
                return Err(PlanarError::NotInjective {
                    detail: format!("inner map degenerate on triangle {t}"),
                })
            }
        };
        // Rational version of the inverse piece: x = dom0 + Jinv (y - img0).
        let r_img0 = RPoint::from_point(img[0]);
        let r_dom0 = RPoint::from_point(dom[0]);
        let r_jinv = [rat(jac_inv.a), rat(jac_inv.b), rat(jac_inv.c), rat(jac_inv.d)];
        let pull_back = |y: &RPoint| -> RPoint {
            let w = y.sub(&r_img0);
            RPoint::new(
                &r_dom0.x + (&r_jinv[0] * &w.x + &r_jinv[1] * &w.y),
                &r_dom0.y + (&r_jinv[2] * &w.x + &r_jinv[3] * &w.y),
            )
        };

        let ib = (
            img.iter().map(|p| p.x).fold(f64::INFINITY, f64::min),
            img.iter().map(|p| p.y).fold(f64::INFINITY, f64::min),
            img.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max),
            img.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max),
        );
        let img_tri: Vec<RPoint> = img.iter().map(|p| RPoint::from_point(*p)).collect();

        for s in 0..outer.mesh.triangles.len() {
            let ob = outer_boxes[s];
            if ob.2 < ib.0 || ib.2 < ob.0 || ob.3 < ib.1 || ib.3 < ob.1 {
                continue;
            }
            // Exact convex clip: inner image triangle ∩ outer domain triangle.
            let sp = outer.mesh.triangle_points(s);
            let mut region: Vec<RPoint> = img_tri.clone();
            for e in 0..3 {
                let a = RPoint::from_point(sp[e]);
                let b = RPoint::from_point(sp[(e + 1) % 3]);
                region = clip_halfplane_rat(&region, &a, &b);
                if region.is_empty() {
                    break;
                }
            }
            if region.len() < 3 {
                continue;
            }
            // Remove exactly-duplicate consecutive vertices.
            region.dedup();
            if region.len() >= 2 && region.first() == region.last() {
                region.pop();
            }
            if region.len() < 3 {
                continue;
            }
            // Pull the clipped polygon back to the inner domain and intern.
            let dom_poly: Vec<usize> = region.iter().map(|y| pool.intern(pull_back(y))).collect();
            let img_poly: Vec<RPoint> = region;

            // Outer affine piece on triangle s.
            let o_dom = outer.mesh.triangle_points(s);
            let o_img = outer.triangle_images(s);
            let od = Mat2::from_columns(o_dom[1].sub(o_dom[0]), o_dom[2].sub(o_dom[0]));
            let of = Mat2::from_columns(o_img[1].sub(o_img[0]), o_img[2].sub(o_img[0]));
            let odinv = od.inverse().expect("outer triangle non-degenerate");
            let ojac = of.mul(&odinv);
            let eval_outer = |y: &RPoint| -> Point {
                let yf = y.to_point();
                let w = yf.sub(o_dom[0]);
                o_img[0].add(ojac.mul_vec(w))
            };

            // Fan-triangulate (convex polygon).
            for i in 1..dom_poly.len() - 1 {
                let tri = [dom_poly[0], dom_poly[i], dom_poly[i + 1]];
                if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                    continue;
                }
                let pa = &pool.points[tri[0]];
                let pb = &pool.points[tri[1]];
                let pc = &pool.points[tri[2]];
                let area2 = pb.sub(pa).cross(&pc.sub(pa));
                if !area2.is_positive() {
                    continue; // exactly degenerate (or inverted by snapping)
                }
                // Snapping can leave a rationally-positive sliver whose f64
                // rounding degenerates; skip those as well.
                let (fa, fb, fc) =
                    (pool.points_f64[tri[0]], pool.points_f64[tri[1]], pool.points_f64[tri[2]]);
                if orient(fa, fb, fc) <= 0 {
                    continue;
                }
                let imgs = [
                    eval_outer(&img_poly[0]),
                    eval_outer(&img_poly[i]),
                    eval_outer(&img_poly[i + 1]),
                ];
                triangles.push(tri);
                corner_imgs.push(imgs);
            }
        }
    }

    // Assemble: per-vertex images, with fan overrides where corner values
    // genuinely disagree. Disagreements below the consistency tolerance are
    // floating-point noise from evaluating adjacent affine pieces at a
    // shared (snapped) vertex, not discontinuities.
    let scale = outer
        .images
        .iter()
        .map(|p| p.norm())
        .fold(1.0f64, f64::max);
    let fan_tol = 1e-9 * scale;
    let vertices: Vec<Point> = pool.points_f64.clone();
    let mut images: Vec<Point> = vec![Point::new(f64::NAN, f64::NAN); vertices.len()];
    let mut disagree: Vec<bool> = vec![false; vertices.len()];
    for (t, tri) in triangles.iter().enumerate() {
        for c in 0..3 {
            let v = tri[c];
            let img = corner_imgs[t][c];
            if images[v].x.is_nan() {
                images[v] = img;
            } else if images[v].dist(img) > fan_tol {
                disagree[v] = true;
            }
        }
    }
    let mesh = Triangulation::new(vertices, triangles.clone(), inner.mesh.domain)?;
    let mut out = PlMap::new(mesh, images)?;
    for v in 0..disagree.len() {
        if !disagree[v] {
            continue;
        }
        let mut entries = Vec::new();
        for (t, tri) in triangles.iter().enumerate() {
            if let Some(c) = tri.iter().position(|&w| w == v) {
                entries.push((t, corner_imgs[t][c]));
            }
        }
        out.add_fan(v, &entries);
    }
    Ok(out)
}

/// Exact Sutherland–Hodgman step: clip a convex rational polygon by the
/// closed half-plane left of `a → b`.
pub fn clip_halfplane_rat(poly: &[RPoint], a: &RPoint, b: &RPoint) -> Vec<RPoint> {
    let mut out = Vec::new();
    let n = poly.len();
    if n == 0 {
        return out;
    }
    let dir = b.sub(a);
    let side = |p: &RPoint| -> Rat { dir.cross(&p.sub(a)) };
    for i in 0..n {
        let cur = &poly[i];
        let nxt = &poly[(i + 1) % n];
        let sc = side(cur);
        let sn = side(nxt);
        let cur_in = !sc.is_negative();
        let nxt_in = !sn.is_negative();
        if cur_in {
            out.push(cur.clone());
        }
        if cur_in != nxt_in {
            let t = &sc / (&sc - &sn);
            out.push(cur.lerp(nxt, &t));
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Preimages
// ---------------------------------------------------------------------------

/// Exact preimage geometry: isolated points, segments, and two-dimensional
/// convex polygon pieces (each contained in one mesh triangle).
#[derive(Debug, Clone)]
pub struct PreimageSet {
    pub points: Vec<RPoint>,
    pub segments: Vec<(RPoint, RPoint)>,
    /// Convex polygons with counterclockwise rational vertices.
    pub polygons: Vec<Vec<RPoint>>,
}

impl PreimageSet {
    pub fn is_empty(&self) -> bool {
        self.points.is_empty() && self.segments.is_empty() && self.polygons.is_empty()
    }
}

/// Exact preimage of `q` under the map: per-triangle affine solves in
/// rational arithmetic. Discontinuity vertices are included as isolated
/// points when `q` lies on their fan sweep (the closed chain of corner
/// images around the vertex).
pub fn preimage_point(m: &PlMap, q: Point) -> PreimageSet {
    let rq = RPoint::from_point(q);
    let mut points: Vec<RPoint> = Vec::new();
    let mut segments: Vec<(RPoint, RPoint)> = Vec::new();
    let mut polygons: Vec<Vec<RPoint>> = Vec::new();

    for t in 0..m.mesh.triangles.len() {
        let dom = m.mesh.triangle_points(t);
        let img = m.triangle_images(t);
        let rd: Vec<RPoint> = dom.iter().map(|p| RPoint::from_point(*p)).collect();
        let ri: Vec<RPoint> = img.iter().map(|p| RPoint::from_point(*p)).collect();
        let e1 = ri[1].sub(&ri[0]);
        let e2 = ri[2].sub(&ri[0]);
        let det = e1.cross(&e2);
        let w = rq.sub(&ri[0]);
        if !det.is_zero() {
            // Invertible piece: unique barycentric solution.
            let l1 = w.cross(&e2) / &det;
            let l2 = e1.cross(&w) / &det;
            let one = crate::geom::exact::rat_i64(1);
            if !l1.is_negative() && !l2.is_negative() && (&l1 + &l2) <= one {
                let p = rd[0]
                    .add(&rd[1].sub(&rd[0]).scale(&l1))
                    .add(&rd[2].sub(&rd[0]).scale(&l2));
                if !points.contains(&p) {
                    points.push(p);
                }
            }
        } else if e1.x.is_zero() && e1.y.is_zero() && e2.x.is_zero() && e2.y.is_zero() {
            // Constant piece.
            if w.x.is_zero() && w.y.is_zero() {
                polygons.push(vec![rd[0].clone(), rd[1].clone(), rd[2].clone()]);
            }
        } else {
            // Rank-1 piece: the image is a segment; the preimage of q, if
            // consistent, is a line clipped to the triangle.
            match rank1_level_chord(&rd, &ri, &rq) {
                Some(LevelChord::Point(p)) => {
                    if !points.contains(&p) {
                        points.push(p);
                    }
                }
                Some(LevelChord::Segment(s0, s1)) => segments.push((s0, s1)),
                None => {}
            }
        }
    }

    // Discontinuity fans: include the vertex when q lies on the fan sweep.
    for &v in &m.discontinuities {
        let sweep = m.fan_values(v);
        let rv = RPoint::from_point(m.mesh.vertices[v]);
        let mut hit = sweep.iter().any(|s| RPoint::from_point(*s) == rq);
        if !hit {
            for wpair in sweep.windows(2) {
                let a = RPoint::from_point(wpair[0]);
                let b = RPoint::from_point(wpair[1]);
                if crate::geom::exact::on_segment_rat(&a, &b, &rq) {
                    hit = true;
                    break;
                }
            }
        }
        if hit && !points.contains(&rv) {
            points.push(rv);
        }
    }

    normalize_preimage(points, segments, polygons)
}

/// The level set of a rank-1 affine piece at one value: a chord of the
/// triangle, possibly degenerate.
enum LevelChord {
    Point(RPoint),
    Segment(RPoint, RPoint),
}

/// For a rank-one (nonzero, zero-determinant) affine piece with domain
/// corners `rd` and image corners `ri`, the preimage of value `q` within
/// the triangle, if any.
fn rank1_level_chord(rd: &[RPoint], ri: &[RPoint], q: &RPoint) -> Option<LevelChord> {
    let e1 = ri[1].sub(&ri[0]);
    let e2 = ri[2].sub(&ri[0]);
    let w = q.sub(&ri[0]);
    // Consistency: q − ri0 must be parallel to the common image direction.
    let dir = if !(e1.x.is_zero() && e1.y.is_zero()) { e1.clone() } else { e2.clone() };
    if !w.cross(&dir).is_zero() {
        return None;
    }
    // Solve a·l1 + b·l2 = c along the dominant coordinate of the direction.
    let (a_c, b_c, c_c) = if dir.x.clone().abs() >= dir.y.clone().abs() {
        (e1.x.clone(), e2.x.clone(), w.x.clone())
    } else {
        (e1.y.clone(), e2.y.clone(), w.y.clone())
    };
    let (p0, p1) = clip_line_to_barycentric(&a_c, &b_c, &c_c)?;
    let embed = |l: &(Rat, Rat)| -> RPoint {
        rd[0].add(&rd[1].sub(&rd[0]).scale(&l.0)).add(&rd[2].sub(&rd[0]).scale(&l.1))
    };
    let s0 = embed(&p0);
    let s1 = embed(&p1);
    if s0 == s1 {
        Some(LevelChord::Point(s0))
    } else {
        Some(LevelChord::Segment(s0, s1))
    }
}

/// Exact preimage of the closed segment `[q0, q1]` under the map: per
/// triangle, the affine piece's preimage of the segment is a point, a
/// segment, or a convex polygon, all in rational arithmetic.
pub fn preimage_segment(m: &PlMap, q0: Point, q1: Point) -> PreimageSet {
    use crate::geom::exact::{on_segment_rat, orient_rat};
    let r0 = RPoint::from_point(q0);
    let r1 = RPoint::from_point(q1);
    if r0 == r1 {
        return preimage_point(m, q0);
    }
    let mut points: Vec<RPoint> = Vec::new();
    let mut segments: Vec<(RPoint, RPoint)> = Vec::new();
    let mut polygons: Vec<Vec<RPoint>> = Vec::new();

    for t in 0..m.mesh.triangles.len() {
        let dom = m.mesh.triangle_points(t);
        let img = m.triangle_images(t);
        let rd: Vec<RPoint> = dom.iter().map(|p| RPoint::from_point(*p)).collect();
        let ri: Vec<RPoint> = img.iter().map(|p| RPoint::from_point(*p)).collect();
        let e1 = ri[1].sub(&ri[0]);
        let e2 = ri[2].sub(&ri[0]);
        let det = e1.cross(&e2);
        if !det.is_zero() {
            // Invertible piece: pull the segment endpoints back and clip the
            // resulting segment to the triangle.
            let pull = |y: &RPoint| -> RPoint {
                let w = y.sub(&ri[0]);
                let l1 = w.cross(&e2) / &det;
                let l2 = e1.cross(&w) / &det;
                rd[0].add(&rd[1].sub(&rd[0]).scale(&l1)).add(&rd[2].sub(&rd[0]).scale(&l2))
            };
            let x0 = pull(&r0);
            let x1 = pull(&r1);
            if let Some((s0, s1)) = clip_segment_to_convex_rat(&x0, &x1, &rd) {
                if s0 == s1 {
                    if !points.contains(&s0) {
                        points.push(s0);
                    }
                } else {
                    segments.push((s0, s1));
                }
            }
        } else if e1.x.is_zero() && e1.y.is_zero() && e2.x.is_zero() && e2.y.is_zero() {
            // Constant piece: the whole triangle iff the constant value lies
            // on the target segment.
            if on_segment_rat(&r0, &r1, &ri[0]) {
                polygons.push(rd.clone());
            }
        } else {
            // Rank-1 piece: the image is a segment on a line L. Intersect
            // the target segment with the image segment.
            let lo_hi = {
                // Extreme image corners along the direction.
                let dir = if !(e1.x.is_zero() && e1.y.is_zero()) { e1.clone() } else { e2.clone() };
                let proj = |p: &RPoint| -> Rat { dir.dot(&p.sub(&ri[0])) };
                let mut corners: Vec<(Rat, RPoint)> =
                    ri.iter().map(|p| (proj(p), p.clone())).collect();
                corners.sort_by(|a, b| a.0.cmp(&b.0));
                (corners[0].1.clone(), corners[2].1.clone())
            };
            let (ilo, ihi) = lo_hi;
            // Classify target ∩ [ilo, ihi].
            let collinear = orient_rat(&r0, &r1, &ilo) == 0 && orient_rat(&r0, &r1, &ihi) == 0;
            if collinear {
                // Overlap of two collinear rational segments along the
                // dominant axis of the image direction.
                let d = ihi.sub(&ilo);
                let key = |p: &RPoint| -> Rat { d.dot(&p.sub(&ilo)) };
                let (mut t0, mut t1) = (key(&r0), key(&r1));
                if t0 > t1 {
                    std::mem::swap(&mut t0, &mut t1);
                }
                let lo = if t0 > Rat::zero() { t0 } else { Rat::zero() };
                let len2 = d.dot(&d);
                let hi = if t1 < len2 { t1 } else { len2.clone() };
                if lo > hi {
                    // No overlap.
                } else if lo == hi {
                    let c = ilo.add(&d.scale(&(lo / &len2)));
                    match rank1_level_chord(&rd, &ri, &c) {
                        Some(LevelChord::Point(p)) => {
                            if !points.contains(&p) {
                                points.push(p);
                            }
                        }
                        Some(LevelChord::Segment(a, b)) => segments.push((a, b)),
                        None => {}
                    }
                } else {
                    // Positive-length value interval: its preimage is the
                    // part of the triangle between the two level lines.
                    // The value functional λ(x) = ⟨d, u(x) − ilo⟩ is affine
                    // in x; keep lo ≤ λ ≤ hi.
                    let lambda_at = |x: &RPoint| -> Rat {
                        // u(x) via barycentric solve on the domain triangle.
                        let dd1 = rd[1].sub(&rd[0]);
                        let dd2 = rd[2].sub(&rd[0]);
                        let den = dd1.cross(&dd2);
                        let wx = x.sub(&rd[0]);
                        let l1 = wx.cross(&dd2) / &den;
                        let l2 = dd1.cross(&wx) / &den;
                        let ux = ri[0]
                            .add(&ri[1].sub(&ri[0]).scale(&l1))
                            .add(&ri[2].sub(&ri[0]).scale(&l2));
                        d.dot(&ux.sub(&ilo))
                    };
                    let mut poly: Vec<RPoint> = rd.clone();
                    poly = clip_poly_by_functional(&poly, &|x| lambda_at(x) - &lo, false);
                    poly = clip_poly_by_functional(&poly, &|x| &hi - lambda_at(x), false);
                    push_polygon_or_degenerate(poly, &mut points, &mut segments, &mut polygons);
                }
            } else {
                // Transversal target: at most one common value.
                if let Some((_, c)) = crate::geom::exact::seg_seg_point_rat(&r0, &r1, &ilo, &ihi) {
                    match rank1_level_chord(&rd, &ri, &c) {
                        Some(LevelChord::Point(p)) => {
                            if !points.contains(&p) {
                                points.push(p);
                            }
                        }
                        Some(LevelChord::Segment(a, b)) => segments.push((a, b)),
                        None => {}
                    }
                }
            }
        }
    }

    // Discontinuity fans: include the vertex when the fan sweep meets the
    // target segment.
    for &v in &m.discontinuities {
        let sweep = m.fan_values(v);
        let rv = RPoint::from_point(m.mesh.vertices[v]);
        let mut hit = sweep
            .iter()
            .any(|s| on_segment_rat(&r0, &r1, &RPoint::from_point(*s)));
        if !hit {
            for wpair in sweep.windows(2) {
                let a = RPoint::from_point(wpair[0]);
                let b = RPoint::from_point(wpair[1]);
                if crate::geom::exact::seg_seg_point_rat(&r0, &r1, &a, &b).is_some()
                    || on_segment_rat(&a, &b, &r0)
                    || on_segment_rat(&a, &b, &r1)
                {
                    hit = true;
                    break;
                }
            }
        }
        if hit && !points.contains(&rv) {
            points.push(rv);
        }
    }
    normalize_preimage(points, segments, polygons)
}

/// Clip polygon `poly` to `{x : f(x) ≥ 0}` for an affine rational
/// functional (evaluated pointwise; intersections found by linearity).
fn clip_poly_by_functional(
    poly: &[RPoint],
    f: &dyn Fn(&RPoint) -> Rat,
    _strict: bool,
) -> Vec<RPoint> {
    let n = poly.len();
    let mut out = Vec::new();
    if n == 0 {
        return out;
    }
    let vals: Vec<Rat> = poly.iter().map(|p| f(p)).collect();
    for i in 0..n {
        let j = (i + 1) % n;
        let (vi, vj) = (&vals[i], &vals[j]);
        let i_in = !vi.is_negative();
        let j_in = !vj.is_negative();
        if i_in {
            out.push(poly[i].clone());
        }
        if i_in != j_in {
            let t = vi / (vi - vj);
            out.push(poly[i].lerp(&poly[j], &t));
        }
    }
    out.dedup();
    if out.len() >= 2 && out.first() == out.last() {
        out.pop();
    }
    out
}

/// Clip the rational segment `[a, b]` to a convex counterclockwise polygon.
fn clip_segment_to_convex_rat(
    a: &RPoint,
    b: &RPoint,
    poly: &[RPoint],
) -> Option<(RPoint, RPoint)> {
    // Parameter interval [t0, t1] ⊆ [0, 1] kept by every edge half-plane.
    let d = b.sub(a);
    let mut t0 = Rat::zero();
    let mut t1 = crate::geom::exact::rat_i64(1);
    for i in 0..poly.len() {
        let p = &poly[i];
        let q = &poly[(i + 1) % poly.len()];
        let edge = q.sub(p);
        // g(t) = cross(edge, a + t·d − p) ≥ 0.
        let g0 = edge.cross(&a.sub(p));
        let gd = edge.cross(&d);
        if gd.is_zero() {
            if g0.is_negative() {
                return None;
            }
            continue;
        }
        let bound = -&g0 / &gd;
        if gd.is_positive() {
            if bound > t0 {
                t0 = bound;
            }
        } else if bound < t1 {
            t1 = bound;
        }
    }
    if t0 > t1 {
        return None;
    }
    Some((a.lerp(b, &t0), a.lerp(b, &t1)))
}

/// Route a clipped polygon into the right bucket: polygons when it has
/// positive area, otherwise a segment or point.
fn push_polygon_or_degenerate(
    poly: Vec<RPoint>,
    points: &mut Vec<RPoint>,
    segments: &mut Vec<(RPoint, RPoint)>,
    polygons: &mut Vec<Vec<RPoint>>,
) {
    if poly.is_empty() {
        return;
    }
    if poly.len() >= 3 {
        let mut area2 = Rat::zero();
        for i in 1..poly.len() - 1 {
            area2 += poly[i].sub(&poly[0]).cross(&poly[i + 1].sub(&poly[0]));
        }
        if !area2.is_zero() {
            if area2.is_negative() {
                let mut rev = poly;
                rev.reverse();
                polygons.push(rev);
            } else {
                polygons.push(poly);
            }
            return;
        }
    }
    // Degenerate: take the two extreme points.
    let mut lo = poly[0].clone();
    let mut hi = poly[0].clone();
    for p in &poly[1..] {
        if *p < lo {
            lo = p.clone();
        }
        if *p > hi {
            hi = p.clone();
        }
    }
    if lo == hi {
        if !points.contains(&lo) {
            points.push(lo);
        }
    } else {
        segments.push((lo, hi));
    }
}

/// Shared cleanup: drop points covered by larger pieces, dedupe segments.
fn normalize_preimage(
    mut points: Vec<RPoint>,
    segments: Vec<(RPoint, RPoint)>,
    polygons: Vec<Vec<RPoint>>,
) -> PreimageSet {
    points.retain(|p| {
        !segments
            .iter()
            .any(|(a, b)| crate::geom::exact::on_segment_rat(a, b, p))
            && !polygons.iter().any(|poly| rpoint_in_convex_polygon(p, poly))
    });
    let mut uniq: Vec<(RPoint, RPoint)> = Vec::new();
    for (a, b) in segments {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        if !uniq.iter().any(|(x, y)| *x == lo && *y == hi) {
            uniq.push((lo, hi));
        }
    }
    PreimageSet { points, segments: uniq, polygons }
}

fn rpoint_in_convex_polygon(p: &RPoint, poly: &[RPoint]) -> bool {
    use crate::geom::exact::orient_rat;
    if poly.len() < 3 {
        return false;
    }
    let mut pos = false;
    let mut neg = false;
    for i in 0..poly.len() {
        match orient_rat(&poly[i], &poly[(i + 1) % poly.len()], p) {
            1 => pos = true,
            -1 => neg = true,
            _ => {}
        }
        if pos && neg {
            return false;
        }
    }
    true
}

/// Clip the rational line `a·l1 + b·l2 = c` to the barycentric triangle
/// `{l1 ≥ 0, l2 ≥ 0, l1 + l2 ≤ 1}`; returns the endpoints in (l1, l2).
fn clip_line_to_barycentric(a: &Rat, b: &Rat, c: &Rat) -> Option<((Rat, Rat), (Rat, Rat))> {
    // Parametrize the line. If b ≠ 0: l2 = (c − a·l1)/b over l1 ∈ ℝ.
    // Collect the param interval where all three constraints hold.
    let zero = Rat::zero();
    let one = crate::geom::exact::rat_i64(1);
    if a.is_zero() && b.is_zero() {
        return None; // degenerate equation (0 = c); the constant case is handled elsewhere
    }
    // Direction of the line in (l1, l2): (b, -a). Point on it:
    let p0 = if !b.is_zero() {
        (zero.clone(), c / b)
    } else {
        (c / a, zero.clone())
    };
    let dir = (b.clone(), -a.clone());
    // Constraints g_i(l) ≥ 0: l1 ≥ 0; l2 ≥ 0; 1 − l1 − l2 ≥ 0.
    // g(t) = g(p0) + t·g'(dir) linear in t.
    let mut tmin: Option<Rat> = None;
    let mut tmax: Option<Rat> = None;
    let constraints: [(Rat, Rat); 3] = [
        (p0.0.clone(), dir.0.clone()),
        (p0.1.clone(), dir.1.clone()),
        (&one - &p0.0 - &p0.1, -&dir.0 - &dir.1),
    ];
    for (g0, gd) in constraints {
        if gd.is_zero() {
            if g0.is_negative() {
                return None;
            }
            continue;
        }
        let bound = -&g0 / &gd;
        if gd.is_positive() {
            // t ≥ bound
            tmin = Some(match tmin {
                None => bound,
                Some(t) => {
                    if bound > t {
                        bound
                    } else {
                        t
                    }
                }
            });
        } else {
            tmax = Some(match tmax {
                None => bound,
                Some(t) => {
                    if bound < t {
                        bound
                    } else {
                        t
                    }
                }
            });
        }
    }
    let t0 = tmin?;
    let t1 = tmax?;
    if t0 > t1 {
        return None;
    }
    let at = |t: &Rat| -> (Rat, Rat) { (&p0.0 + &dir.0 * t, &p0.1 + &dir.1 * t) };
    Some((at(&t0), at(&t1)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_lattice_map() -> PlMap {
        PlMap::identity(Triangulation::lattice(Rect::unit(), 4, 4))
    }

    #[test]
    fn lattice_is_valid() {
        let t = Triangulation::lattice(Rect::unit(), 3, 5);
        t.validate().unwrap();
        assert_eq!(t.triangles.len(), 30);
        let cycle = t.boundary_cycle().unwrap();
        assert_eq!(cycle.len(), 2 * (3 + 5));
    }

    #[test]
    fn eval_identity_and_affine() {
        let m = unit_lattice_map();
        let p = Point::new(0.3, 0.7);
        assert_eq!(m.eval(p).unwrap(), p);
        // Affine map 2·Id on a single-cell mesh over [0, 0.5]²...
        let mesh = Triangulation::lattice(Rect::new(0., 0., 0.5, 0.5), 1, 1);
        let images: Vec<Point> = mesh.vertices.iter().map(|v| v.scale(2.0)).collect();
        let m2 = PlMap::new(mesh, images).unwrap();
        assert_eq!(m2.eval(Point::new(0.25, 0.25)).unwrap(), Point::new(0.5, 0.5));
    }

    #[test]
    fn jacobian_identity_and_squash() {
        let m = unit_lattice_map();
        for t in 0..m.mesh.triangles.len() {
            assert_eq!(m.jacobian(t), Mat2::ID);
        }
        let mesh = Triangulation::lattice(Rect::unit(), 2, 2);
        let images: Vec<Point> = mesh.vertices.iter().map(|v| Point::new(v.x, 0.0)).collect();
        let squash = PlMap::new(mesh, images).unwrap();
        let j = squash.jacobian(0);
        assert_eq!((j.a, j.b, j.c, j.d), (1.0, 0.0, 0.0, 0.0));
        assert_eq!(j.det(), 0.0);
    }

    #[test]
    fn verify_homeomorphism_cases() {
        assert!(verify_homeomorphism(&unit_lattice_map()).ok);
        // Reflect one vertex to flip triangles.
        let mesh = Triangulation::lattice(Rect::unit(), 2, 2);
        let mut images = mesh.vertices.clone();
        images[4] = Point::new(1.2, 0.5); // center vertex pushed past the east edge
        let m = PlMap::new(mesh, images).unwrap();
        let v = verify_homeomorphism(&m);
        assert!(!v.ok);
        assert!(v.witness.unwrap().contains("triangle"));
    }

    #[test]
    fn restrict_identity_and_squash() {
        let m = unit_lattice_map();
        let seg = Polyline::open(vec![Point::new(0.1, 0.2), Point::new(0.9, 0.6)]);
        let f = restrict(&m, &seg).unwrap();
        assert_eq!(f.values.first().copied(), Some(Point::new(0.1, 0.2)));
        assert_eq!(f.values.last().copied(), Some(Point::new(0.9, 0.6)));
        // All interior values on the segment itself.
        for (t, v) in f.breakpoints.iter().zip(&f.values) {
            let expect = Point::new(0.1, 0.2).lerp(Point::new(0.9, 0.6), *t);
            assert!(v.dist(expect) < 1e-12, "restrict value off segment");
        }

        let mesh = Triangulation::lattice(Rect::unit(), 2, 2);
        let images: Vec<Point> = mesh.vertices.iter().map(|v| Point::new(v.x, 0.0)).collect();
        let squash = PlMap::new(mesh, images).unwrap();
        let vertical = Polyline::open(vec![Point::new(0.3, 0.1), Point::new(0.3, 0.9)]);
        let g = restrict(&squash, &vertical).unwrap();
        for v in &g.values {
            assert_eq!(*v, Point::new(0.3, 0.0));
        }
    }

    #[test]
    fn compose_with_identity() {
        let m = unit_lattice_map();
        let id = PlMap::identity(Triangulation::lattice(Rect::unit(), 2, 2));
        let c = compose(&m, &id).unwrap();
        c.validate().unwrap();
        for p in [Point::new(0.33, 0.21), Point::new(0.7, 0.77)] {
            assert!(c.eval(p).unwrap().dist(p) < 1e-12);
        }
        // Id ∘ Φ = Φ for a nontrivial homeomorphism Φ.
        let mesh = Triangulation::lattice(Rect::unit(), 2, 2);
        let mut images = mesh.vertices.clone();
        images[4] = Point::new(0.55, 0.48);
        let phi = PlMap::new(mesh, images).unwrap();
        assert!(verify_homeomorphism(&phi).ok);
        let c2 = compose(&PlMap::identity(Triangulation::lattice(Rect::unit(), 1, 1)), &phi).unwrap();
        for p in [Point::new(0.5, 0.5), Point::new(0.2, 0.9), Point::new(0.9, 0.1)] {
            assert!(c2.eval(p).unwrap().dist(phi.eval(p).unwrap()) < 1e-12);
        }
    }

    #[test]
    fn preimage_identity_point() {
        let m = unit_lattice_map();
        let q = Point::new(0.33, 0.71);
        let pre = preimage_point(&m, q);
        assert_eq!(pre.points.len(), 1);
        assert!(pre.segments.is_empty() && pre.polygons.is_empty());
        assert_eq!(pre.points[0].to_point(), q);
    }

    #[test]
    fn preimage_squash_segment() {
        // (x, y) ↦ (x, 0): the preimage of (0.5, 0) is the vertical chord.
        let mesh = Triangulation::lattice(Rect::unit(), 2, 2);
        let images: Vec<Point> = mesh.vertices.iter().map(|v| Point::new(v.x, 0.0)).collect();
        let squash = PlMap::new(mesh, images).unwrap();
        let pre = preimage_point(&squash, Point::new(0.5, 0.0));
        assert!(pre.points.is_empty());
        assert!(!pre.segments.is_empty());
        // The union of segments covers x = 0.5, y from 0 to 1.
        let mut ys: Vec<f64> = Vec::new();
        for (a, b) in &pre.segments {
            assert_eq!(rat_to_f64(&a.x), 0.5);
            assert_eq!(rat_to_f64(&b.x), 0.5);
            ys.push(rat_to_f64(&a.y));
            ys.push(rat_to_f64(&b.y));
        }
        ys.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(*ys.first().unwrap(), 0.0);
        assert_eq!(*ys.last().unwrap(), 1.0);
    }

    #[test]
    fn preimage_constant_triangle_polygon() {
        // Collapse one cell's triangles to a point via fan overrides on a
        // 1×1 mesh: map everything to (0.5, 0.5).
        let mesh = Triangulation::lattice(Rect::unit(), 1, 1);
        let images: Vec<Point> = mesh.vertices.iter().map(|_| Point::new(0.5, 0.5)).collect();
        let m = PlMap::new(mesh, images).unwrap();
        let pre = preimage_point(&m, Point::new(0.5, 0.5));
        assert_eq!(pre.polygons.len(), 2);
        let pre2 = preimage_point(&m, Point::new(0.4, 0.5));
        assert!(pre2.is_empty());
    }

    #[test]
    fn fan_vertex_multivalue() {
        // A 2×2 lattice with a fan at the center vertex: the four cells'
        // corner images at the center spread along a segment.
        let mesh = Triangulation::lattice(Rect::unit(), 2, 2);
        let images = mesh.vertices.clone();
        let mut m = PlMap::new(mesh, images).unwrap();
        let center = 4usize; // vertex (0.5, 0.5)
        let tris = m.triangles_around_vertex(center);
        let entries: Vec<(usize, Point)> = tris
            .iter()
            .enumerate()
            .map(|(k, &t)| (t, Point::new(0.4 + 0.05 * k as f64, 0.5)))
            .collect();
        m.add_fan(center, &entries);
        assert!(m.eval(Point::new(0.5, 0.5)).is_err());
        let sweep = m.fan_values(center);
        assert!(sweep.len() >= 2);
        // A value strictly inside the sweep is claimed by the vertex.
        let pre = preimage_point(&m, Point::new(0.425, 0.5));
        assert!(pre
            .points
            .iter()
            .any(|p| p.to_point() == Point::new(0.5, 0.5)));
    }

    #[test]
    fn preimage_of_segment_targets() {
        use crate::geom::exact::{rat, rat_to_f64};

        // Identity: the preimage of a segment is that segment, possibly
        // split across triangles; the pieces' lengths add up.
        let mesh = Triangulation::lattice(Rect::unit(), 2, 2);
        let id = PlMap::identity(mesh);
        let (q0, q1) = (Point::new(0.2, 0.2), Point::new(0.7, 0.7));
        let pre = preimage_segment(&id, q0, q1);
        assert!(pre.polygons.is_empty());
        let total: f64 = pre
            .segments
            .iter()
            .map(|(a, b)| a.to_point().dist(b.to_point()))
            .sum();
        assert!((total - q0.dist(q1)).abs() < 1e-12);

        // Vertical squash (x, y) -> (x, 0): a segment on the collapse line
        // pulls back to the full strip above it.
        let mesh = Triangulation::lattice(Rect::unit(), 2, 2);
        let images: Vec<Point> = mesh.vertices.iter().map(|p| Point::new(p.x, 0.0)).collect();
        let squash = PlMap::new(mesh, images).unwrap();
        let pre = preimage_segment(&squash, Point::new(0.25, 0.0), Point::new(0.75, 0.0));
        let mut area = rat(0.0);
        for poly in &pre.polygons {
            let mut a = rat(0.0);
            for i in 1..poly.len() - 1 {
                let e1 = poly[i].sub(&poly[0]);
                let e2 = poly[i + 1].sub(&poly[0]);
                a += e1.cross(&e2);
            }
            area += a / rat(2.0);
        }
        // Strip [0.25, 0.75] x [0, 1] has area 1/2.
        assert!((rat_to_f64(&area) - 0.5).abs() < 1e-12);

        // A segment disjoint from the image is missed entirely.
        let miss = preimage_segment(&squash, Point::new(0.1, 0.5), Point::new(0.9, 0.5));
        assert!(miss.is_empty());
    }
}
