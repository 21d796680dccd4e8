//! Independent reference implementations used to cross-check the main
//! algorithms: a crossing-count winding number, exact convex clipping for
//! triangle overlap, and a rasterized flood-fill connectivity test.
//!
//! Nothing here is on any production path; these routines deliberately take
//! different algorithmic routes from the code they audit.

use crate::error::{PlanarError, Result};
use crate::geom::exact::{RPoint, Rat};
use crate::geom::{on_segment, orient, Point, Polyline, Rect};
use num::{Signed, Zero};

/// Winding number by signed ray crossings: count, with sign, the edges of
/// the curve crossing the horizontal ray from `p` to +∞. Exact via the
/// orientation predicate; entirely independent of angle summation.
pub fn ray_cast_winding(curve: &Polyline, p: Point) -> Result<i32> {
    assert!(curve.closed, "winding number needs a closed curve");
    for (a, b) in curve.segments() {
        if on_segment(a, b, p) {
            return Err(PlanarError::PointOnCurve {
                detail: format!("query ({}, {}) lies on the curve", p.x, p.y),
            });
        }
    }
    let mut w = 0i32;
    for (a, b) in curve.segments() {
        if a.y <= p.y {
            // Upward edge strictly crossing the ray's level.
            if b.y > p.y && orient(a, b, p) > 0 {
                w += 1;
            }
        } else if b.y <= p.y && orient(a, b, p) < 0 {
            // Downward edge.
            w -= 1;
        }
    }
    Ok(w)
}

// ---------------------------------------------------------------------------
// Exact triangle overlap via rational convex clipping
// ---------------------------------------------------------------------------

/// Clip a convex rational polygon by the half-plane left of `a → b`
/// (Sutherland–Hodgman step, exact).
fn clip_halfplane(poly: &[RPoint], a: &RPoint, b: &RPoint) -> Vec<RPoint> {
    let mut out = Vec::new();
    let n = poly.len();
    if n == 0 {
        return out;
    }
    let side = |p: &RPoint| -> Rat { b.sub(a).cross(&p.sub(a)) };
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
            // Edge crosses the clip line; sc != sn here.
            let t = &sc / (&sc - &sn);
            out.push(cur.lerp(nxt, &t));
        }
    }
    out
}

fn rational_area2(poly: &[RPoint]) -> Rat {
    let mut acc = Rat::zero();
    let n = poly.len();
    for i in 0..n {
        acc += poly[i].cross(&poly[(i + 1) % n]);
    }
    acc
}

/// True iff the interiors of the two triangles intersect in a set of
/// positive area. Exact: the intersection region is computed by rational
/// convex clipping.
pub fn triangles_overlap(a: &[Point; 3], b: &[Point; 3]) -> bool {
    let ccw = |t: &[Point; 3]| -> Option<Vec<RPoint>> {
        let o = orient(t[0], t[1], t[2]);
        if o == 0 {
            return None; // degenerate: empty interior
        }
        let mut v: Vec<RPoint> = t.iter().map(|p| RPoint::from_point(*p)).collect();
        if o < 0 {
            v.reverse();
        }
        Some(v)
    };
    let (Some(pa), Some(pb)) = (ccw(a), ccw(b)) else {
        return false;
    };
    let mut region = pa;
    for i in 0..3 {
        let e1 = pb[i].clone();
        let e2 = pb[(i + 1) % 3].clone();
        region = clip_halfplane(&region, &e1, &e2);
        if region.is_empty() {
            return false;
        }
    }
    rational_area2(&region).is_positive()
}

/// Brute-force search for any pair of triangles with overlapping interiors;
/// returns the first offending index pair.
pub fn first_overlapping_pair(triangles: &[[Point; 3]]) -> Option<(usize, usize)> {
    for i in 0..triangles.len() {
        for j in (i + 1)..triangles.len() {
            if triangles_overlap(&triangles[i], &triangles[j]) {
                return Some((i, j));
            }
        }
    }
    None
}

// ---------------------------------------------------------------------------
// Rasterized flood-fill connectivity
// ---------------------------------------------------------------------------

/// BFS connectivity on a `res × res` pixelation of `rect`: true iff a
/// 4-connected path of pixels whose centers satisfy `passable` joins the
/// pixel of `a` to the pixel of `b`. A blunt instrument by design — used as
/// a topological oracle, never as the production connectivity test.
pub fn raster_path_exists(
    rect: Rect,
    res: usize,
    passable: &dyn Fn(Point) -> bool,
    a: Point,
    b: Point,
) -> bool {
    assert!(res >= 2);
    let dx = rect.width() / res as f64;
    let dy = rect.height() / res as f64;
    let cell_of = |p: Point| -> (usize, usize) {
        let i = (((p.x - rect.x0) / dx).floor() as isize).clamp(0, res as isize - 1) as usize;
        let j = (((p.y - rect.y0) / dy).floor() as isize).clamp(0, res as isize - 1) as usize;
        (i, j)
    };
    let center = |i: usize, j: usize| -> Point {
        Point::new(rect.x0 + (i as f64 + 0.5) * dx, rect.y0 + (j as f64 + 0.5) * dy)
    };
    let (ai, aj) = cell_of(a);
    let (bi, bj) = cell_of(b);
    if !passable(center(ai, aj)) || !passable(center(bi, bj)) {
        return false;
    }
    let idx = |i: usize, j: usize| j * res + i;
    let mut seen = vec![false; res * res];
    let mut queue = std::collections::VecDeque::new();
    seen[idx(ai, aj)] = true;
    queue.push_back((ai, aj));
    while let Some((i, j)) = queue.pop_front() {
        if (i, j) == (bi, bj) {
            return true;
        }
        let mut push = |ni: usize, nj: usize| {
            if !seen[idx(ni, nj)] && passable(center(ni, nj)) {
                seen[idx(ni, nj)] = true;
                queue.push_back((ni, nj));
            }
        };
        if i > 0 {
            push(i - 1, j);
        }
        if i + 1 < res {
            push(i + 1, j);
        }
        if j > 0 {
            push(i, j - 1);
        }
        if j + 1 < res {
            push(i, j + 1);
        }
    }
    false
}

/// Number of 4-connected components among the pixels of a `res × res`
/// pixelation of `rect` whose centers satisfy `passable`. The same blunt
/// instrument as [`raster_path_exists`]: a topological oracle for the exact
/// connectivity computations, never a production tool. Reliable only when
/// distinct components are separated by more than a pixel diagonal.
pub fn raster_component_count(rect: Rect, res: usize, passable: &dyn Fn(Point) -> bool) -> usize {
    assert!(res >= 2);
    let dx = rect.width() / res as f64;
    let dy = rect.height() / res as f64;
    let center = |i: usize, j: usize| -> Point {
        Point::new(rect.x0 + (i as f64 + 0.5) * dx, rect.y0 + (j as f64 + 0.5) * dy)
    };
    let idx = |i: usize, j: usize| j * res + i;
    let mut open = vec![false; res * res];
    for j in 0..res {
        for i in 0..res {
            open[idx(i, j)] = passable(center(i, j));
        }
    }
    let mut seen = vec![false; res * res];
    let mut components = 0;
    for j0 in 0..res {
        for i0 in 0..res {
            if !open[idx(i0, j0)] || seen[idx(i0, j0)] {
                continue;
            }
            components += 1;
            let mut queue = std::collections::VecDeque::new();
            seen[idx(i0, j0)] = true;
            queue.push_back((i0, j0));
            while let Some((i, j)) = queue.pop_front() {
                let mut push = |ni: usize, nj: usize| {
                    if open[idx(ni, nj)] && !seen[idx(ni, nj)] {
                        seen[idx(ni, nj)] = true;
                        queue.push_back((ni, nj));
                    }
                };
                if i > 0 {
                    push(i - 1, j);
                }
                if i + 1 < res {
                    push(i + 1, j);
                }
                if j > 0 {
                    push(i, j - 1);
                }
                if j + 1 < res {
                    push(i, j + 1);
                }
            }
        }
    }
    components
}

/// Gradient energy by midpoint quadrature: sample the map's Jacobian on an
/// `n × n` grid of cell centers and sum `|Du − M|^p · cell_area`, using
/// finite differences with step `h` entirely inside each cell. Independent
/// of the per-triangle exact integration it audits; converges as the mesh
/// is resolved, so comparisons should allow discretization slack.
pub fn quadrature_energy(
    eval: &dyn Fn(Point) -> Option<Point>,
    domain: Rect,
    n: usize,
    p: f64,
    m_ref: [[f64; 2]; 2],
) -> f64 {
    assert!(n >= 2);
    let dx = domain.width() / n as f64;
    let dy = domain.height() / n as f64;
    let h = 1e-3 * dx.min(dy);
    let mut total = 0.0;
    for j in 0..n {
        for i in 0..n {
            let c = Point::new(
                domain.x0 + (i as f64 + 0.5) * dx,
                domain.y0 + (j as f64 + 0.5) * dy,
            );
            let (fx0, fx1, fy0, fy1) = (
                eval(Point::new(c.x - h, c.y)),
                eval(Point::new(c.x + h, c.y)),
                eval(Point::new(c.x, c.y - h)),
                eval(Point::new(c.x, c.y + h)),
            );
            if let (Some(fx0), Some(fx1), Some(fy0), Some(fy1)) = (fx0, fx1, fy0, fy1) {
                let du = [
                    [(fx1.x - fx0.x) / (2.0 * h), (fy1.x - fy0.x) / (2.0 * h)],
                    [(fx1.y - fx0.y) / (2.0 * h), (fy1.y - fy0.y) / (2.0 * h)],
                ];
                let mut frob2 = 0.0;
                for r in 0..2 {
                    for s in 0..2 {
                        let d = du[r][s] - m_ref[r][s];
                        frob2 += d * d;
                    }
                }
                total += frob2.powf(p / 2.0) * dx * dy;
            }
        }
    }
    total
}
