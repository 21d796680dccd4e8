//! Map-level diagnostics: image chains of closed curves with a winding
//! classifier, sampled injectivity checks over ball and curve families,
//! degree histograms, exact preimage connectivity, degree-guided preimage
//! location, and the oscillation-versus-energy audit.
//!
//! Everything here treats the map as a finished object and asks whether it
//! behaves like (a limit of) homeomorphisms. The checks are designed to
//! stay meaningful on maps that are *not* injective — that is exactly when
//! their verdicts are interesting — so violations are reported as data,
//! not as errors. Errors are reserved for queries that cannot be posed at
//! all (a curve running through a discontinuity vertex, a degree search
//! rooted at winding zero).

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::energy;
use crate::error::{PlanarError, Result};
use crate::geom::exact::{on_segment_rat, rat_i64, rat_to_f64, seg_seg_point_rat, RPoint, Rat};
use crate::geom::{on_segment, point_segment_distance, Point, Polyline, Rect};
use crate::plmap::{clip_halfplane_rat, preimage_point, preimage_segment, restrict, PlMap};

/// Samples drawn on each side of an audited curve.
pub const INV_SAMPLES: usize = 512;

/// Sides of the regular polygon standing in for a circle.
pub const CIRCLE_SIDES: usize = 64;

/// Deterministic radius perturbations tried when a ball's boundary runs
/// through a discontinuity vertex or out of the domain.
const RADIUS_JITTER: [f64; 8] =
    [1.0, 1.0 - 1e-3, 1.0 + 1e-3, 1.0 - 2e-3, 1.0 + 2e-3, 1.0 - 3e-3, 1.0 + 3e-3, 1.0 - 4e-3];

// ---------------------------------------------------------------------------
// Low-discrepancy sampling
// ---------------------------------------------------------------------------

/// Radical-inverse (van der Corput) value of `i` in the given base;
/// `(halton(i, 2), halton(i, 3))` is a two-dimensional low-discrepancy
/// sequence over the unit square.
pub fn halton(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0_f64;
    let mut r = 0.0_f64;
    let b = base as f64;
    while i > 0 {
        f /= b;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// `i`-th low-discrepancy sample of the closed disk around `center`.
fn disk_sample(i: u64, center: Point, r: f64) -> Point {
    let rad = r * halton(i, 2).sqrt();
    let th = 2.0 * std::f64::consts::PI * halton(i, 3);
    Point::new(center.x + rad * th.cos(), center.y + rad * th.sin())
}

/// `i`-th low-discrepancy sample of a rectangle.
fn rect_sample(i: u64, rect: Rect) -> Point {
    Point::new(
        rect.x0 + halton(i, 2) * rect.width(),
        rect.y0 + halton(i, 3) * rect.height(),
    )
}

// ---------------------------------------------------------------------------
// Image chains and membership
// ---------------------------------------------------------------------------

/// Where a value sits relative to a closed image chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Membership {
    /// On the chain carrier (within the classifier's tolerance).
    Boundary,
    /// Off the chain, with this winding number.
    Winding(i32),
}

/// Winding classification of `q` against a closed chain of points. Unlike
/// [`crate::geom::winding_number`], the chain may repeat consecutive points
/// (images of collapsed pieces do) and may be degenerate; zero-length
/// links contribute nothing. `Boundary` is returned when `q` lies on or
/// within `tol` of the carrier.
pub fn chain_membership(chain: &[Point], q: Point, tol: f64) -> Membership {
    assert!(!chain.is_empty(), "membership needs a nonempty chain");
    let n = chain.len();
    let mut any_link = false;
    for i in 0..n {
        let (a, b) = (chain[i], chain[(i + 1) % n]);
        if a == b {
            continue;
        }
        any_link = true;
        if on_segment(a, b, q) || point_segment_distance(q, a, b) <= tol {
            return Membership::Boundary;
        }
    }
    if !any_link {
        // The whole chain is one repeated value.
        return if q.dist(chain[0]) <= tol {
            Membership::Boundary
        } else {
            Membership::Winding(0)
        };
    }
    let mut total = 0.0_f64;
    for i in 0..n {
        let a = chain[i].sub(q);
        let b = chain[(i + 1) % n].sub(q);
        total += a.cross(b).atan2(a.dot(b));
    }
    Membership::Winding((total / (2.0 * std::f64::consts::PI)).round() as i32)
}

/// The image of a closed domain curve: a closed chain of image points with
/// a membership classifier. "Multivalued" refers to the ambient map — the
/// chain is single-valued along the curve, but the map behind it need not
/// be injective, so the chain may self-overlap or collapse.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MultivaluedImage {
    /// Image points in curve order; the last joins back to the first.
    pub chain: Vec<Point>,
    /// Absolute tolerance used by the membership classifier, derived from
    /// the chain's extent.
    pub tol: f64,
}

impl MultivaluedImage {
    pub fn membership(&self, q: Point) -> Membership {
        chain_membership(&self.chain, q, self.tol)
    }

    /// Winding number of the chain around `q`; errors when `q` is on the
    /// chain.
    pub fn winding(&self, q: Point) -> Result<i32> {
        match self.membership(q) {
            Membership::Boundary => Err(PlanarError::PointOnCurve {
                detail: format!("({}, {}) lies on the image chain", q.x, q.y),
            }),
            Membership::Winding(w) => Ok(w),
        }
    }
}

/// Image chain of a closed curve under the map. The curve must avoid the
/// map's discontinuity vertices; running through one is reported as
/// `BoundaryHitsDiscontinuity` so callers can jitter and retry.
pub fn multivalued_image(m: &PlMap, curve: &Polyline) -> Result<MultivaluedImage> {
    assert!(curve.closed, "image chains are for closed curves");
    let ef = match restrict(m, curve) {
        Ok(ef) => ef,
        Err(PlanarError::HitsDiscontinuity { detail }) => {
            return Err(PlanarError::BoundaryHitsDiscontinuity { detail })
        }
        Err(e) => return Err(e),
    };
    let mut chain = ef.values;
    if chain.len() >= 2 && chain.first() == chain.last() {
        chain.pop();
    }
    let (mut lo, mut hi) = (chain[0], chain[0]);
    for p in &chain {
        lo = Point::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Point::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    let tol = (1e-9 * hi.sub(lo).norm()).max(1e-12);
    Ok(MultivaluedImage { chain, tol })
}

// ---------------------------------------------------------------------------
// Injectivity-norm audits
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InvViolationKind {
    /// An interior sample's value landed outside the image region.
    InteriorEscape,
    /// An exterior sample's value landed strictly inside the image region.
    ExteriorIntrusion,
}

/// One sample that contradicts the ball/curve injectivity conditions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InvViolation {
    pub kind: InvViolationKind,
    /// Domain sample.
    pub sample: Point,
    /// Its value under the map.
    pub value: Point,
    /// Winding of the image chain around the value.
    pub winding: i32,
    pub detail: String,
}

/// Verdict for one audited curve: where interior and exterior samples
/// landed relative to the curve's image chain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DegreeAudit {
    /// The audited domain curve.
    pub curve: Polyline,
    /// Closed image chain of the curve.
    pub image: Vec<Point>,
    /// Winding numbers recorded at sample values off the image chain:
    /// (domain sample, winding of its value).
    pub degree_samples: Vec<(Point, i32)>,
    /// Every interior sample's value stayed in the closed image region.
    pub inside_ok: bool,
    /// No exterior sample's value entered the open image region.
    pub outside_ok: bool,
    /// Samples dropped because evaluation kept landing on discontinuities.
    pub skipped: usize,
    pub violations: Vec<InvViolation>,
}

/// Evaluate with deterministic nudges: discontinuity vertices are isolated
/// points, so a tiny shift recovers a value for almost-everywhere checks.
fn eval_with_jitter(m: &PlMap, q: Point, scale: f64) -> Option<Point> {
    if let Ok(v) = m.eval(q) {
        return Some(v);
    }
    const DIRS: [(f64, f64); 8] =
        [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0), (1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)];
    for (dx, dy) in DIRS {
        let eps = 1e-9 * scale;
        if let Ok(v) = m.eval(Point::new(q.x + dx * eps, q.y + dy * eps)) {
            return Some(v);
        }
    }
    None
}

/// Shared engine: classify prepared interior and exterior samples against
/// the curve's image chain. Interior values must stay in the closed image
/// region; exterior values must not enter the open image region (landing
/// on the chain itself is allowed — collapsed maps do that legitimately).
fn inv_audit(
    m: &PlMap,
    curve: &Polyline,
    interior: &[Point],
    exterior: &[Point],
) -> Result<DegreeAudit> {
    let mvi = multivalued_image(m, curve)?;
    let scale = m.mesh.domain.width().hypot(m.mesh.domain.height());
    let mut degree_samples = Vec::new();
    let mut violations = Vec::new();
    let mut skipped = 0usize;
    for &q in interior {
        let Some(v) = eval_with_jitter(m, q, scale) else {
            skipped += 1;
            continue;
        };
        match mvi.membership(v) {
            Membership::Boundary => {}
            Membership::Winding(w) => {
                degree_samples.push((q, w));
                if w == 0 {
                    violations.push(InvViolation {
                        kind: InvViolationKind::InteriorEscape,
                        sample: q,
                        value: v,
                        winding: w,
                        detail: format!(
                            "interior sample ({:.6}, {:.6}) maps to ({:.6}, {:.6}), outside the image region",
                            q.x, q.y, v.x, v.y
                        ),
                    });
                }
            }
        }
    }
    for &q in exterior {
        let Some(v) = eval_with_jitter(m, q, scale) else {
            skipped += 1;
            continue;
        };
        match mvi.membership(v) {
            Membership::Boundary => {}
            Membership::Winding(w) => {
                degree_samples.push((q, w));
                if w != 0 {
                    violations.push(InvViolation {
                        kind: InvViolationKind::ExteriorIntrusion,
                        sample: q,
                        value: v,
                        winding: w,
                        detail: format!(
                            "exterior sample ({:.6}, {:.6}) maps to ({:.6}, {:.6}), enclosed with winding {}",
                            q.x, q.y, v.x, v.y, w
                        ),
                    });
                }
            }
        }
    }
    let inside_ok = !violations.iter().any(|v| v.kind == InvViolationKind::InteriorEscape);
    let outside_ok = !violations.iter().any(|v| v.kind == InvViolationKind::ExteriorIntrusion);
    Ok(DegreeAudit {
        curve: curve.clone(),
        image: mvi.chain,
        degree_samples,
        inside_ok,
        outside_ok,
        skipped,
        violations,
    })
}

/// Regular polygon standing in for the circle of radius `r` around `c`.
pub fn circle_polygon(c: Point, r: f64, sides: usize) -> Polyline {
    assert!(r > 0.0 && sides >= 3);
    let verts = (0..sides)
        .map(|k| {
            let th = 2.0 * std::f64::consts::PI * k as f64 / sides as f64;
            Point::new(c.x + r * th.cos(), c.y + r * th.sin())
        })
        .collect();
    Polyline::closed(verts)
}

/// Ball-family injectivity check: for each ball, interior samples must map
/// into the region enclosed by the image of the ball's boundary, and
/// exterior samples must not map strictly inside it. Balls are regular
/// 64-gons; interior samples fill the polygon's inscribed disk, exterior
/// samples the rest of the domain. When a ball's boundary runs through a
/// discontinuity vertex the radius is nudged deterministically, up to
/// eight attempts, before the error is surfaced.
pub fn check_inv(m: &PlMap, centers: &[Point], radii: &[f64]) -> Result<Vec<DegreeAudit>> {
    assert_eq!(centers.len(), radii.len(), "one radius per center");
    let domain = m.mesh.domain;
    let inradius_factor = (std::f64::consts::PI / CIRCLE_SIDES as f64).cos();
    let mut out = Vec::with_capacity(centers.len());
    for (&c, &r) in centers.iter().zip(radii) {
        assert!(r > 0.0, "ball radius must be positive");
        let mut last_err = None;
        let mut audit = None;
        for f in RADIUS_JITTER {
            let rr = r * f;
            let curve = circle_polygon(c, rr, CIRCLE_SIDES);
            let interior: Vec<Point> = (1..=INV_SAMPLES as u64)
                .map(|i| disk_sample(i, c, rr * inradius_factor))
                .collect();
            let mut exterior = Vec::with_capacity(INV_SAMPLES);
            let mut i = 1u64;
            while exterior.len() < INV_SAMPLES && i <= 200 * INV_SAMPLES as u64 {
                let q = rect_sample(i, domain);
                i += 1;
                if q.dist(c) > rr {
                    exterior.push(q);
                }
            }
            match inv_audit(m, &curve, &interior, &exterior) {
                Ok(a) => {
                    audit = Some(a);
                    break;
                }
                Err(e) => last_err = Some(e),
            }
        }
        match audit {
            Some(a) => out.push(a),
            None => return Err(last_err.expect("jitter loop ran")),
        }
    }
    Ok(out)
}

/// Curve-family injectivity check: the same interior/exterior sampling as
/// [`check_inv`], over arbitrary simple closed curves. Interior samples
/// are drawn from the curve's bounding box and kept when the curve winds
/// around them; exterior samples from the whole domain where it does not.
/// Curves are the caller's responsibility — no jitter is applied, and a
/// curve through a discontinuity vertex is an error.
pub fn check_inv_plus(m: &PlMap, curves: &[Polyline]) -> Result<Vec<DegreeAudit>> {
    let domain = m.mesh.domain;
    let mut out = Vec::with_capacity(curves.len());
    for curve in curves {
        assert!(curve.closed, "injectivity audits need closed curves");
        let (mut lo, mut hi) = (curve.vertices[0], curve.vertices[0]);
        for p in &curve.vertices {
            lo = Point::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Point::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        let bbox = Rect::new(lo.x, lo.y, hi.x.max(lo.x + 1e-12), hi.y.max(lo.y + 1e-12));
        let tol = (1e-9 * hi.sub(lo).norm()).max(1e-12);
        let mut interior = Vec::with_capacity(INV_SAMPLES);
        let mut i = 1u64;
        while interior.len() < INV_SAMPLES && i <= 200 * INV_SAMPLES as u64 {
            let q = rect_sample(i, bbox);
            i += 1;
            if !domain.contains(q) {
                continue;
            }
            if let Membership::Winding(w) = chain_membership(&curve.vertices, q, tol) {
                if w != 0 {
                    interior.push(q);
                }
            }
        }
        let mut exterior = Vec::with_capacity(INV_SAMPLES);
        let mut i = 1u64;
        while exterior.len() < INV_SAMPLES && i <= 200 * INV_SAMPLES as u64 {
            let q = rect_sample(i, domain);
            i += 1;
            if let Membership::Winding(0) = chain_membership(&curve.vertices, q, tol) {
                exterior.push(q);
            }
        }
        out.push(inv_audit(m, curve, &interior, &exterior)?);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Degree histogram
// ---------------------------------------------------------------------------

/// Histogram of winding numbers the image of a curve attains over its
/// image-space bounding box.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DegreeRangeReport {
    /// Winding number → number of samples attaining it.
    pub histogram: BTreeMap<i32, usize>,
    /// Samples that fell on the image chain itself (not histogrammed).
    pub boundary_hits: usize,
    /// True iff every attained winding number is 0 or 1 — the range a
    /// limit of orientation-preserving homeomorphisms can have.
    pub ok: bool,
}

/// Sample the winding number of the curve's image chain over the chain's
/// (slightly padded) bounding box and histogram the values.
pub fn check_degree_range(m: &PlMap, curve: &Polyline, samples: usize) -> Result<DegreeRangeReport> {
    assert!(samples > 0);
    let mvi = multivalued_image(m, curve)?;
    let (mut lo, mut hi) = (mvi.chain[0], mvi.chain[0]);
    for p in &mvi.chain {
        lo = Point::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Point::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    let pad = (0.1 * hi.sub(lo).norm()).max(1e-6);
    let bbox = Rect::new(lo.x - pad, lo.y - pad, hi.x + pad, hi.y + pad);
    let mut histogram: BTreeMap<i32, usize> = BTreeMap::new();
    let mut boundary_hits = 0usize;
    for i in 1..=samples as u64 {
        match mvi.membership(rect_sample(i, bbox)) {
            Membership::Boundary => boundary_hits += 1,
            Membership::Winding(w) => *histogram.entry(w).or_insert(0) += 1,
        }
    }
    let ok = histogram.keys().all(|&k| k == 0 || k == 1);
    Ok(DegreeRangeReport { histogram, boundary_hits, ok })
}

// ---------------------------------------------------------------------------
// Exact preimage connectivity
// ---------------------------------------------------------------------------

/// What to pull back through the map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PreimageTarget {
    Point(Point),
    Segment(Point, Point),
}

/// Exact connectivity summary of a preimage set inside the domain, with
/// the set's pieces in floating point for reporting and rendering.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PreimageAudit {
    /// Connected components of the preimage.
    pub components: usize,
    /// Connected components of (domain ∖ preimage). A value above 1 means
    /// the preimage disconnects the domain.
    pub complement_components: usize,
    pub points: Vec<Point>,
    pub segments: Vec<(Point, Point)>,
    pub polygons: Vec<Vec<Point>>,
}

/// A rational segment arrangement: every input edge split at every vertex
/// and pairwise-crossing point lying on it, sub-edges deduplicated. Both
/// connectivity counts below are exact graph computations on it.
struct Arrangement {
    verts: Vec<RPoint>,
    index: HashMap<RPoint, usize>,
    edges: HashSet<(usize, usize)>,
}

impl Arrangement {
    fn intern(&mut self, p: &RPoint) -> usize {
        if let Some(&i) = self.index.get(p) {
            return i;
        }
        let i = self.verts.len();
        self.verts.push(p.clone());
        self.index.insert(p.clone(), i);
        i
    }

    fn build(raw_edges: &[(RPoint, RPoint)], isolated: &[RPoint]) -> Arrangement {
        let mut ar =
            Arrangement { verts: Vec::new(), index: HashMap::new(), edges: HashSet::new() };
        // Vertex pool: endpoints, isolated points, pairwise crossings.
        let mut pool: Vec<RPoint> = Vec::new();
        for (a, b) in raw_edges {
            pool.push(a.clone());
            pool.push(b.clone());
        }
        pool.extend(isolated.iter().cloned());
        // Floating bounding boxes prefilter the exact pair tests; rational
        // points round to within 1e-16 of themselves, so a 1e-9 pad never
        // rejects a true incidence at domain scale.
        const PAD: f64 = 1e-9;
        let boxes: Vec<[f64; 4]> = raw_edges
            .iter()
            .map(|(a, b)| {
                let (pa, pb) = (a.to_point(), b.to_point());
                [pa.x.min(pb.x), pa.y.min(pb.y), pa.x.max(pb.x), pa.y.max(pb.y)]
            })
            .collect();
        for i in 0..raw_edges.len() {
            for j in (i + 1)..raw_edges.len() {
                if boxes[i][2] + PAD < boxes[j][0]
                    || boxes[j][2] + PAD < boxes[i][0]
                    || boxes[i][3] + PAD < boxes[j][1]
                    || boxes[j][3] + PAD < boxes[i][1]
                {
                    continue;
                }
                if let Some((_, p)) = seg_seg_point_rat(
                    &raw_edges[i].0,
                    &raw_edges[i].1,
                    &raw_edges[j].0,
                    &raw_edges[j].1,
                ) {
                    pool.push(p);
                }
            }
        }
        let mut seen: HashSet<RPoint> = HashSet::new();
        pool.retain(|p| seen.insert(p.clone()));
        // Split edges at pool points on them (covers transversal crossings,
        // T-junctions, and partial collinear overlaps alike) and intern the
        // deduplicated sub-edges.
        for (a, b) in raw_edges {
            if a == b {
                continue;
            }
            let d = b.sub(a);
            let (pa, pb) = (a.to_point(), b.to_point());
            let (lox, hix) = (pa.x.min(pb.x) - PAD, pa.x.max(pb.x) + PAD);
            let (loy, hiy) = (pa.y.min(pb.y) - PAD, pa.y.max(pb.y) + PAD);
            let mut cuts: Vec<(Rat, RPoint)> = Vec::new();
            for p in &pool {
                let pf = p.to_point();
                if pf.x < lox || pf.x > hix || pf.y < loy || pf.y > hiy {
                    continue;
                }
                if on_segment_rat(a, b, p) {
                    cuts.push((d.dot(&p.sub(a)), p.clone()));
                }
            }
            cuts.sort_by(|x, y| x.0.cmp(&y.0));
            for w in cuts.windows(2) {
                if w[0].1 == w[1].1 {
                    continue;
                }
                let u = ar.intern(&w[0].1);
                let v = ar.intern(&w[1].1);
                ar.edges.insert((u.min(v), u.max(v)));
            }
        }
        for p in isolated {
            ar.intern(p);
        }
        ar
    }

    fn component_count(&self) -> usize {
        let mut parent: Vec<usize> = (0..self.verts.len()).collect();
        fn find(parent: &mut [usize], mut i: usize) -> usize {
            while parent[i] != i {
                parent[i] = parent[parent[i]];
                i = parent[i];
            }
            i
        }
        for &(u, v) in &self.edges {
            let (ru, rv) = (find(&mut parent, u), find(&mut parent, v));
            if ru != rv {
                parent[ru] = rv;
            }
        }
        (0..self.verts.len()).filter(|&i| find(&mut parent, i) == i).count()
    }
}

/// Exact connectivity of the preimage of a point or segment: the number of
/// connected components of the preimage, and of its complement in the
/// domain. The complement count comes from the Euler characteristic of the
/// split arrangement of the preimage's edges together with the domain
/// boundary: a plane graph with `C` components, `V` vertices, `E` edges
/// and `F` filled 2-cells leaves `C − V + E − F` bounded holes.
pub fn preimage_connectivity(m: &PlMap, target: PreimageTarget) -> Result<PreimageAudit> {
    let pre = match target {
        PreimageTarget::Point(q) => preimage_point(m, q),
        PreimageTarget::Segment(a, b) => preimage_segment(m, a, b),
    };
    let mut raw: Vec<(RPoint, RPoint)> = Vec::new();
    let mut isolated: Vec<RPoint> = Vec::new();
    isolated.extend(pre.points.iter().cloned());
    for (a, b) in &pre.segments {
        if a == b {
            isolated.push(a.clone());
        } else {
            raw.push((a.clone(), b.clone()));
        }
    }
    for poly in &pre.polygons {
        for i in 0..poly.len() {
            let j = (i + 1) % poly.len();
            if poly[i] != poly[j] {
                raw.push((poly[i].clone(), poly[j].clone()));
            }
        }
    }

    let components = Arrangement::build(&raw, &isolated).component_count();

    // Complement pass: the same arrangement with the domain boundary added.
    let corners = m.mesh.domain.corners();
    let rc: Vec<RPoint> = corners.iter().map(|p| RPoint::from_point(*p)).collect();
    let mut full = raw;
    for i in 0..4 {
        full.push((rc[i].clone(), rc[(i + 1) % 4].clone()));
    }
    let arr = Arrangement::build(&full, &isolated);
    let c = arr.component_count() as i64;
    let v = arr.verts.len() as i64;
    let e = arr.edges.len() as i64;
    let f2 = pre.polygons.iter().filter(|poly| poly.len() >= 3).count() as i64;
    let complement_components = (c - v + e - f2).max(0) as usize;

    Ok(PreimageAudit {
        components,
        complement_components,
        points: pre.points.iter().map(|p| p.to_point()).collect(),
        segments: pre.segments.iter().map(|(a, b)| (a.to_point(), b.to_point())).collect(),
        polygons: pre
            .polygons
            .iter()
            .map(|poly| poly.iter().map(|p| p.to_point()).collect())
            .collect(),
    })
}

// ---------------------------------------------------------------------------
// Degree-guided preimage location
// ---------------------------------------------------------------------------

/// Winding of the image of a rectangle's boundary around `target`.
fn rect_degree(m: &PlMap, rect: Rect, target: Point) -> Result<i32> {
    let mvi = multivalued_image(m, &rect.boundary())?;
    match mvi.membership(target) {
        Membership::Boundary => Err(PlanarError::PointOnCurve {
            detail: format!(
                "target ({}, {}) lies on the image of the rectangle boundary",
                target.x, target.y
            ),
        }),
        Membership::Winding(w) => Ok(w),
    }
}

/// Center offsets (as fractions of width/height) tried when a split line's
/// image runs through the target or a discontinuity.
const SPLIT_JITTER: [(f64, f64); 8] = [
    (0.0, 0.0),
    (1e-3, 1e-3),
    (-1e-3, -1e-3),
    (1e-3, -1e-3),
    (-1e-3, 1e-3),
    (2e-3, 0.0),
    (0.0, 2e-3),
    (-2e-3, 0.0),
];

/// Locate a preimage of `target` by degree bisection: starting from a
/// rectangle whose boundary image winds around `target` a nonzero number
/// of times, split into four, keep a quadrant with nonzero winding (degree
/// is additive across the split), and repeat until the rectangle is
/// smaller than `tol`. Split lines whose images graze the target are
/// nudged deterministically. Errors with `DegreeZero` when the starting
/// rectangle has winding zero — degree sees no preimage there.
pub fn locate_preimage_by_degree(m: &PlMap, target: Point, start: Rect, tol: f64) -> Result<Point> {
    assert!(tol > 0.0);
    // Root degree, shrinking slightly if the boundary image grazes the target.
    let mut root = None;
    let mut last_err = None;
    for k in 0..8 {
        let f = 1.0 - k as f64 * 1e-3;
        let c = start.center();
        let (hw, hh) = (0.5 * start.width() * f, 0.5 * start.height() * f);
        let rect = Rect::new(c.x - hw, c.y - hh, c.x + hw, c.y + hh);
        match rect_degree(m, rect, target) {
            Ok(d) => {
                root = Some((rect, d));
                break;
            }
            Err(e) => last_err = Some(e),
        }
    }
    let (mut rect, mut degree) = match root {
        Some(r) => r,
        None => return Err(last_err.expect("root attempts ran")),
    };
    if degree == 0 {
        return Err(PlanarError::DegreeZero {
            detail: format!(
                "image of the boundary of [{}, {}]×[{}, {}] does not wind around ({}, {})",
                rect.x0, rect.x1, rect.y0, rect.y1, target.x, target.y
            ),
        });
    }
    let mut guard = 0usize;
    while rect.width().max(rect.height()) > tol && guard < 512 {
        guard += 1;
        let mut advanced = false;
        'attempt: for (jx, jy) in SPLIT_JITTER {
            let cx = rect.x0 + rect.width() * (0.5 + jx);
            let cy = rect.y0 + rect.height() * (0.5 + jy);
            let quads = [
                Rect::new(rect.x0, rect.y0, cx, cy),
                Rect::new(cx, rect.y0, rect.x1, cy),
                Rect::new(cx, cy, rect.x1, rect.y1),
                Rect::new(rect.x0, cy, cx, rect.y1),
            ];
            let mut degs = [0i32; 4];
            for (qi, qr) in quads.iter().enumerate() {
                match rect_degree(m, *qr, target) {
                    Ok(d) => degs[qi] = d,
                    Err(_) => continue 'attempt,
                }
            }
            if degs.iter().sum::<i32>() != degree {
                // Numerically grazed the chain without detection; re-split.
                continue 'attempt;
            }
            if let Some(qi) = (0..4).find(|&qi| degs[qi] != 0) {
                rect = quads[qi];
                degree = degs[qi];
                advanced = true;
                break;
            }
            continue 'attempt;
        }
        if !advanced {
            return Err(PlanarError::SearchExhausted {
                detail: format!(
                    "degree bisection stalled on [{}, {}]×[{}, {}]",
                    rect.x0, rect.x1, rect.y0, rect.y1
                ),
            });
        }
    }
    Ok(rect.center())
}

// ---------------------------------------------------------------------------
// Oscillation audit
// ---------------------------------------------------------------------------

/// Sampled oscillation of the map over the ball `B(center, rho)` against
/// the continuity estimate from the gradient energy on the doubled ball:
/// returns `(oscillation, bound)`. The oscillation samples eight rings of
/// the ball plus every mesh vertex inside it, with discontinuity fans
/// expanded; the energy integral uses exact areas of triangle ∩ 64-gon
/// intersections (the inscribed polygon slightly under-reports the disk,
/// keeping the bound conservative). Requires `p > 2` — below that the
/// estimate carries no information — and the doubled ball inside the
/// domain.
pub fn oscillation_bound(m: &PlMap, center: Point, rho: f64, p: f64) -> Result<(f64, f64)> {
    assert!(p > 2.0, "the oscillation estimate needs p > 2");
    assert!(rho > 0.0);
    let d = m.mesh.domain;
    if center.x - 2.0 * rho < d.x0
        || center.x + 2.0 * rho > d.x1
        || center.y - 2.0 * rho < d.y0
        || center.y + 2.0 * rho > d.y1
    {
        return Err(PlanarError::OutOfDomain {
            detail: format!(
                "the doubled ball of radius {} at ({}, {}) leaves the domain",
                2.0 * rho,
                center.x,
                center.y
            ),
        });
    }
    // Image samples over the closed ball.
    let mut values: Vec<Point> = Vec::new();
    if let Ok(v) = m.eval(center) {
        values.push(v);
    }
    for ring in 1..=8u32 {
        let r = rho * ring as f64 / 8.0;
        for a in 0..32u32 {
            let th = 2.0 * std::f64::consts::PI * a as f64 / 32.0;
            let q = Point::new(center.x + r * th.cos(), center.y + r * th.sin());
            if let Ok(v) = m.eval(q) {
                values.push(v);
            }
        }
    }
    for (vi, &vp) in m.mesh.vertices.iter().enumerate() {
        if vp.dist(center) <= rho {
            if m.discontinuities.contains(&vi) {
                values.extend(m.fan_values(vi));
            } else {
                values.push(m.images[vi]);
            }
        }
    }
    let mut osc = 0.0_f64;
    for i in 0..values.len() {
        for j in (i + 1)..values.len() {
            osc = osc.max(values[i].dist(values[j]));
        }
    }
    // Gradient energy over the doubled ball, with exact intersection areas.
    let gon: Vec<RPoint> = (0..CIRCLE_SIDES)
        .map(|k| {
            let th = 2.0 * std::f64::consts::PI * k as f64 / CIRCLE_SIDES as f64;
            RPoint::from_point(Point::new(
                center.x + 2.0 * rho * th.cos(),
                center.y + 2.0 * rho * th.sin(),
            ))
        })
        .collect();
    let (glo_x, ghi_x) = (center.x - 2.0 * rho, center.x + 2.0 * rho);
    let (glo_y, ghi_y) = (center.y - 2.0 * rho, center.y + 2.0 * rho);
    let mut energy = 0.0_f64;
    for t in 0..m.mesh.triangles.len() {
        let [a, b, c] = m.mesh.triangle_points(t);
        let (tx0, tx1) = (a.x.min(b.x).min(c.x), a.x.max(b.x).max(c.x));
        let (ty0, ty1) = (a.y.min(b.y).min(c.y), a.y.max(b.y).max(c.y));
        if tx1 < glo_x || tx0 > ghi_x || ty1 < glo_y || ty0 > ghi_y {
            continue;
        }
        let (ra, rb, rc) =
            (RPoint::from_point(a), RPoint::from_point(b), RPoint::from_point(c));
        let mut cell = clip_halfplane_rat(&gon, &ra, &rb);
        if cell.is_empty() {
            continue;
        }
        cell = clip_halfplane_rat(&cell, &rb, &rc);
        if cell.is_empty() {
            continue;
        }
        cell = clip_halfplane_rat(&cell, &rc, &ra);
        if cell.len() < 3 {
            continue;
        }
        let mut area2 = rat_i64(0);
        for i in 1..cell.len() - 1 {
            let e1 = cell[i].sub(&cell[0]);
            let e2 = cell[i + 1].sub(&cell[0]);
            area2 += e1.cross(&e2);
        }
        let area = 0.5 * rat_to_f64(&area2);
        if area <= 0.0 {
            continue;
        }
        energy += m.jacobian(t).norm().powf(p) * area;
    }
    Ok((osc, energy::oscillation_estimate(p, rho, energy)))
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::raster_component_count;
    use crate::plmap::Triangulation;

    #[test]
    fn halton_prefix_values() {
        let base2: Vec<f64> = (1..=5).map(|i| halton(i, 2)).collect();
        assert_eq!(base2, vec![0.5, 0.25, 0.75, 0.125, 0.625]);
        let base3: Vec<f64> = (1..=4).map(|i| halton(i, 3)).collect();
        let expect = [1.0 / 3.0, 2.0 / 3.0, 1.0 / 9.0, 4.0 / 9.0];
        for (a, b) in base3.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn image_chain_membership_identity_circle() {
        let mesh = Triangulation::lattice(Rect::unit(), 4, 4);
        let id = PlMap::identity(mesh);
        let circle = circle_polygon(Point::new(0.5, 0.5), 0.3, CIRCLE_SIDES);
        let mvi = multivalued_image(&id, &circle).unwrap();
        assert_eq!(mvi.membership(Point::new(0.5, 0.5)), Membership::Winding(1));
        assert_eq!(mvi.membership(Point::new(0.95, 0.95)), Membership::Winding(0));
        // A chain vertex itself is boundary.
        let v = mvi.chain[0];
        assert_eq!(mvi.membership(v), Membership::Boundary);
        assert!(mvi.winding(v).is_err());
    }

    #[test]
    fn image_chain_refuses_discontinuity() {
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
        // A curve through the fan vertex cannot be imaged.
        let curve = Polyline::closed(vec![
            Point::new(0.25, 0.25),
            Point::new(0.75, 0.25),
            Point::new(0.5, 0.5),
        ]);
        match multivalued_image(&m, &curve) {
            Err(PlanarError::BoundaryHitsDiscontinuity { .. }) => {}
            other => panic!("expected BoundaryHitsDiscontinuity, got {other:?}"),
        }
    }

    #[test]
    fn inv_holds_for_identity() {
        let mesh = Triangulation::lattice(Rect::unit(), 4, 4);
        let id = PlMap::identity(mesh);
        let audits =
            check_inv(&id, &[Point::new(0.4, 0.5), Point::new(0.7, 0.3)], &[0.2, 0.15]).unwrap();
        assert_eq!(audits.len(), 2);
        for a in &audits {
            assert!(a.inside_ok && a.outside_ok, "homeomorphism must pass: {:?}", a.violations);
            assert!(a.violations.is_empty());
            assert_eq!(a.skipped, 0);
            // Interior samples of an orientation-preserving embedding see
            // winding one; exterior samples off the image see zero.
            assert!(a.degree_samples.iter().all(|&(_, w)| w == 0 || w == 1));
            assert!(a.degree_samples.iter().any(|&(_, w)| w == 1));
        }
    }

    #[test]
    fn inv_catches_a_fold() {
        // Fold the unit square onto its left half: (x, y) → (1−|2x−1|, y).
        let mesh = Triangulation::lattice(Rect::unit(), 2, 2);
        let images: Vec<Point> = mesh
            .vertices
            .iter()
            .map(|p| Point::new(1.0 - (2.0 * p.x - 1.0).abs(), p.y))
            .collect();
        let fold = PlMap::new(mesh, images).unwrap();
        let audits = check_inv(&fold, &[Point::new(0.25, 0.5)], &[0.15]).unwrap();
        let a = &audits[0];
        // Left-half exterior points map outside the image of the ball, but
        // right-half points fold back into it: condition (ii) must fail.
        assert!(a.inside_ok, "the fold preserves the ball's interior");
        assert!(!a.outside_ok, "the fold must be caught by exterior samples");
        assert!(a
            .violations
            .iter()
            .all(|v| v.kind == InvViolationKind::ExteriorIntrusion));
        assert!(!a.violations.is_empty());
        // Every violating sample comes from the folded half.
        assert!(a.violations.iter().all(|v| v.sample.x > 0.5));
    }

    #[test]
    fn inv_plus_flags_fold_on_rectangle_loops() {
        let mesh = Triangulation::lattice(Rect::unit(), 2, 2);
        let images: Vec<Point> = mesh
            .vertices
            .iter()
            .map(|p| Point::new(1.0 - (2.0 * p.x - 1.0).abs(), p.y))
            .collect();
        let fold = PlMap::new(mesh, images).unwrap();
        let loop1 = Rect::new(0.1, 0.3, 0.4, 0.7).boundary();
        let audits = check_inv_plus(&fold, &[loop1]).unwrap();
        assert!(!audits[0].outside_ok);
        // The identity passes the same loops.
        let mesh = Triangulation::lattice(Rect::unit(), 2, 2);
        let id = PlMap::identity(mesh);
        let audits = check_inv_plus(&id, &[Rect::new(0.1, 0.3, 0.4, 0.7).boundary()]).unwrap();
        assert!(audits[0].inside_ok && audits[0].outside_ok);
    }

    #[test]
    fn ball_boundary_through_fan_vertex_is_jittered() {
        let mesh = Triangulation::lattice(Rect::unit(), 2, 2);
        let images = mesh.vertices.clone();
        let mut m = PlMap::new(mesh, images).unwrap();
        let center = 4usize;
        let tris = m.triangles_around_vertex(center);
        let entries: Vec<(usize, Point)> = tris
            .iter()
            .enumerate()
            .map(|(k, &t)| (t, Point::new(0.4 + 0.05 * k as f64, 0.5)))
            .collect();
        m.add_fan(center, &entries);
        // 0.25 + 0.25 = 0.5 exactly: the 64-gon's first vertex hits the fan
        // vertex dead on, so only the radius jitter lets the audit run.
        let audits = check_inv(&m, &[Point::new(0.25, 0.5)], &[0.25]).unwrap();
        assert_eq!(audits.len(), 1);
    }

    #[test]
    fn degree_range_of_identity_reflection_and_double_cover() {
        let mesh = Triangulation::lattice(Rect::unit(), 2, 2);
        let id = PlMap::identity(mesh);
        let circle = circle_polygon(Point::new(0.5, 0.5), 0.3, CIRCLE_SIDES);
        let rep = check_degree_range(&id, &circle, 2000).unwrap();
        assert!(rep.ok, "identity histogram: {:?}", rep.histogram);
        assert!(rep.histogram.contains_key(&1) && rep.histogram.contains_key(&0));

        // A reflection attains winding −1.
        let mesh = Triangulation::lattice(Rect::unit(), 1, 1);
        let images: Vec<Point> =
            mesh.vertices.iter().map(|p| Point::new(1.0 - p.x, p.y)).collect();
        let refl = PlMap::new(mesh, images).unwrap();
        let rep = check_degree_range(&refl, &circle, 2000).unwrap();
        assert!(!rep.ok);
        assert!(rep.histogram.contains_key(&-1));

        // An angle-doubling fan covers its image twice: the histogram must
        // contain degree 2 (the chain winds twice by construction).
        let c = Point::new(0.5, 0.5);
        let mut verts = vec![c];
        for k in 0..8 {
            let th = 2.0 * std::f64::consts::PI * k as f64 / 8.0;
            verts.push(Point::new(c.x + 0.45 * th.cos(), c.y + 0.45 * th.sin()));
        }
        let tris: Vec<[usize; 3]> = (0..8).map(|k| [0, 1 + k, 1 + (k + 1) % 8]).collect();
        let mesh = Triangulation::new(verts.clone(), tris, Rect::unit()).unwrap();
        let images: Vec<Point> = (0..9)
            .map(|i| {
                if i == 0 {
                    c
                } else {
                    let th = 2.0 * std::f64::consts::PI * (i - 1) as f64 / 8.0;
                    Point::new(c.x + 0.45 * (2.0 * th).cos(), c.y + 0.45 * (2.0 * th).sin())
                }
            })
            .collect();
        let double = PlMap::new(mesh, images).unwrap();
        let small = circle_polygon(c, 0.3, CIRCLE_SIDES);
        let rep = check_degree_range(&double, &small, 2000).unwrap();
        assert!(!rep.ok);
        assert!(rep.histogram.contains_key(&2), "histogram: {:?}", rep.histogram);
        assert!(rep.histogram.keys().all(|&k| k == 0 || k == 2));
    }

    /// Rasterized complement/component counts as an independent oracle for
    /// the exact Euler-characteristic computation.
    fn raster_counts(audit: &PreimageAudit, domain: Rect, res: usize) -> (usize, usize) {
        let tol = 0.75 * (domain.width() / res as f64).hypot(domain.height() / res as f64);
        let on_set = |q: Point| -> bool {
            audit.points.iter().any(|p| p.dist(q) <= tol)
                || audit
                    .segments
                    .iter()
                    .any(|&(a, b)| point_segment_distance(q, a, b) <= tol)
                || audit.polygons.iter().any(|poly| {
                    Polyline::closed(poly.clone()).distance_to(q) <= tol
                        || chain_membership(poly, q, tol) != Membership::Winding(0)
                })
        };
        let set_components = raster_component_count(domain, res, &|q| on_set(q));
        let complement_components = raster_component_count(domain, res, &|q| !on_set(q));
        (set_components, complement_components)
    }

    #[test]
    fn preimage_connectivity_point_and_chord() {
        // Identity: a point preimage neither disconnects nor multiplies.
        let mesh = Triangulation::lattice(Rect::unit(), 2, 2);
        let id = PlMap::identity(mesh);
        let a = preimage_connectivity(&id, PreimageTarget::Point(Point::new(0.3, 0.7))).unwrap();
        assert_eq!((a.components, a.complement_components), (1, 1));
        // A value outside the image has an empty preimage.
        let b = preimage_connectivity(&id, PreimageTarget::Point(Point::new(2.0, 2.0))).unwrap();
        assert_eq!((b.components, b.complement_components), (0, 1));

        // Vertical squash (x, y) → (x, 0): the preimage of a point on the
        // collapse line is a full vertical chord — it cuts the square.
        let mesh = Triangulation::lattice(Rect::unit(), 2, 2);
        let images: Vec<Point> =
            mesh.vertices.iter().map(|p| Point::new(p.x, 0.0)).collect();
        let squash = PlMap::new(mesh, images).unwrap();
        let c =
            preimage_connectivity(&squash, PreimageTarget::Point(Point::new(0.5, 0.0))).unwrap();
        assert_eq!((c.components, c.complement_components), (1, 2));
        assert_eq!(raster_counts(&c, Rect::unit(), 81), (1, 2));

        // The strip over a segment of the collapse line also cuts it.
        let d = preimage_connectivity(
            &squash,
            PreimageTarget::Segment(Point::new(0.25, 0.0), Point::new(0.75, 0.0)),
        )
        .unwrap();
        assert_eq!((d.components, d.complement_components), (1, 2));
        assert_eq!(raster_counts(&d, Rect::unit(), 81), (1, 2));
    }

    #[test]
    fn preimage_connectivity_two_constant_cells() {
        // Southwest and northeast cells of a 2×2 lattice both collapse to
        // one value A; the triangles between them degenerate so that the
        // preimage of A is the two cells plus the two triangles bridging
        // them across the diagonal — one component whose complement is the
        // two off-diagonal pockets.
        let a = Point::new(0.5, 0.5);
        let mesh = Triangulation::lattice(Rect::unit(), 2, 2);
        let images: Vec<Point> = mesh
            .vertices
            .iter()
            .map(|p| {
                if (*p == Point::new(1.0, 0.0)) || (*p == Point::new(0.0, 1.0)) {
                    *p
                } else {
                    a
                }
            })
            .collect();
        let m = PlMap::new(mesh, images).unwrap();
        let audit = preimage_connectivity(&m, PreimageTarget::Point(a)).unwrap();
        assert_eq!(audit.components, 1);
        assert_eq!(audit.complement_components, 2);
        assert_eq!(audit.polygons.len(), 6);
        assert_eq!(raster_counts(&audit, Rect::unit(), 81), (1, 2));
    }

    #[test]
    fn locate_preimage_by_bisection() {
        let mesh = Triangulation::lattice(Rect::unit(), 4, 4);
        let id = PlMap::identity(mesh);
        let target = Point::new(0.37, 0.81);
        let found = locate_preimage_by_degree(&id, target, Rect::unit(), 1e-4).unwrap();
        assert!(found.dist(target) < 1e-4);
        // Consistent with the exact preimage.
        let pre = preimage_point(&id, target);
        assert!(pre.points.iter().any(|p| p.to_point().dist(found) < 1e-4));
        // A target outside the image: degree zero at the root.
        match locate_preimage_by_degree(&id, Point::new(1.5, 0.5), Rect::unit(), 1e-4) {
            Err(PlanarError::DegreeZero { .. }) => {}
            other => panic!("expected DegreeZero, got {other:?}"),
        }
    }

    #[test]
    fn oscillation_bound_identity_and_fan() {
        let mesh = Triangulation::lattice(Rect::unit(), 4, 4);
        let id = PlMap::identity(mesh);
        let (osc, bound) = oscillation_bound(&id, Point::new(0.5, 0.5), 0.1, 3.0).unwrap();
        // Antipodal ring samples realize the full diameter.
        assert!((osc - 0.2).abs() < 1e-12, "osc = {osc}");
        assert!(osc <= bound, "osc {osc} must be within bound {bound}");
        // The bound scales like the identity's closed form: energy on the
        // doubled ball ≈ 2^{p/2}·π(2ρ)², slightly less for the polygon.
        let disk_energy = 2.0_f64.powf(1.5) * std::f64::consts::PI * 0.04;
        let expect = energy::oscillation_estimate(3.0, 0.1, disk_energy);
        assert!(bound <= expect && bound > 0.98 * expect);

        // A fan at the ball's center forces the oscillation up to the fan's
        // spread no matter how small the ball.
        let mesh = Triangulation::lattice(Rect::unit(), 2, 2);
        let images = mesh.vertices.clone();
        let mut m = PlMap::new(mesh, images).unwrap();
        let tris = m.triangles_around_vertex(4);
        let entries: Vec<(usize, Point)> = tris
            .iter()
            .enumerate()
            .map(|(k, &t)| (t, Point::new(0.4 + 0.05 * k as f64, 0.5)))
            .collect();
        let spread = 0.05 * (entries.len() - 1) as f64;
        m.add_fan(4, &entries);
        let (osc, _) = oscillation_bound(&m, Point::new(0.5, 0.5), 0.05, 3.0).unwrap();
        assert!(osc >= spread - 1e-12, "osc {osc} must cover the fan spread {spread}");

        // The doubled ball must fit.
        assert!(oscillation_bound(&id, Point::new(0.1, 0.5), 0.1, 3.0).is_err());
    }
}
