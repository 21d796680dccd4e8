//! Gradient energies of piecewise-affine maps: exact two-dimensional
//! integrals (the integrand is constant on each triangle), one-dimensional
//! boundary integrals, linearization certificates comparing a boundary
//! function against the map it replaces, classification of grid squares by
//! the behaviour of the mean gradient, and the boundary-energy-to-oscillation
//! estimate.

use crate::error::{PlanarError, Result};
use crate::geom::{Point, Polyline};
use crate::plmap::{trace_triangles, EdgeFunction, Mat2, PlMap};
use serde::{Deserialize, Serialize};

/// `∫_Q |Du − M|^p dx`, exact because `Du` is constant per triangle.
/// `m_ref = None` integrates `|Du|^p`.
pub fn energy_2d(m: &PlMap, p: f64, m_ref: Option<Mat2>) -> f64 {
    let reference = m_ref.unwrap_or(Mat2::ZERO);
    let mut total = 0.0;
    for t in 0..m.mesh.triangles.len() {
        let area = m.mesh.triangle_area(t);
        let dev = m.jacobian(t).sub(&reference).norm();
        total += area * dev.powf(p);
    }
    total
}

/// Per-triangle gradient data: (area, Jacobian, centroid).
pub fn triangle_gradient_data(m: &PlMap) -> Vec<(f64, Mat2, Point)> {
    (0..m.mesh.triangles.len())
        .map(|t| {
            let [a, b, c] = m.mesh.triangle_points(t);
            let centroid = Point::new((a.x + b.x + c.x) / 3.0, (a.y + b.y + c.y) / 3.0);
            (m.mesh.triangle_area(t), m.jacobian(t), centroid)
        })
        .collect()
}

/// `∫ |f′(s) − M τ(s)|^p ds` along the carrier of `f`, where `f′` is the
/// derivative with respect to arclength and `τ` the carrier's unit tangent.
/// Exact per piece. `m_ref = None` integrates `|f′|^p`.
pub fn energy_1d(f: &EdgeFunction, p: f64, m_ref: Option<Mat2>) -> f64 {
    let mut total = 0.0;
    for (ds, dv, tau) in f.pieces() {
        let target = match m_ref {
            Some(m) => m.mul_vec(tau),
            None => Point::new(0.0, 0.0),
        };
        total += ds * dv.sub(target).norm().powf(p);
    }
    total
}

/// `∫_γ |Du(s) − M|^p ds`: the full-gradient deviation of the map,
/// integrated along a polyline (constant per traced span).
pub fn boundary_gradient_energy(m: &PlMap, gamma: &Polyline, p: f64, m_ref: Mat2) -> Result<f64> {
    let total_len = gamma.length();
    let spans = trace_triangles(m, gamma)?;
    let mut total = 0.0;
    for span in spans {
        let ds = (span.t1 - span.t0) * total_len;
        let dev = m.jacobian(span.triangle).sub(&m_ref).norm();
        total += ds * dev.powf(p);
    }
    Ok(total)
}

/// Certificate that a replacement boundary function stays energetically
/// close to the map it replaces on one grid-square boundary:
/// `∫_{∂R} |φ′ − Mτ|^p ≤ slack + 2 ∫_{∂R} |Du − M|^p`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearizationCertificate {
    pub square: (usize, usize),
    /// Left side: boundary energy of the replacement function.
    pub boundary_energy: f64,
    /// Additive slack granted to this square.
    pub slack: f64,
    /// `∫_{∂R} |Du − M|^p ds` of the underlying map.
    pub map_boundary_energy: f64,
    pub ok: bool,
}

/// Relative tolerance for certificate comparisons: floating-point noise in
/// two independently computed integrals of the same data.
pub const CERT_REL_TOL: f64 = 1e-9;

/// Check the linearization inequality for one square: `phi` replaces the
/// map `u` on the carrier of `phi` (the square boundary).
pub fn linearization_certificate(
    phi: &EdgeFunction,
    u: &PlMap,
    m_ref: Mat2,
    p: f64,
    slack: f64,
    square: (usize, usize),
) -> Result<LinearizationCertificate> {
    let lhs = energy_1d(phi, p, Some(m_ref));
    let rhs = boundary_gradient_energy(u, &phi.carrier, p, m_ref)?;
    let bound = slack + 2.0 * rhs;
    let ok = lhs <= bound * (1.0 + CERT_REL_TOL) + f64::MIN_POSITIVE;
    Ok(LinearizationCertificate {
        square,
        boundary_energy: lhs,
        slack,
        map_boundary_energy: rhs,
        ok,
    })
}

/// Batch form of [`linearization_certificate`] with slack `sigma_tol / k`
/// per square; errors with the worst offending square if any fails.
pub fn jensen_linearize(
    u: &PlMap,
    boundaries: &[((usize, usize), EdgeFunction, Mat2)],
    p: f64,
    sigma_tol: f64,
    k: usize,
) -> Result<Vec<LinearizationCertificate>> {
    let slack = sigma_tol / k as f64;
    let mut certs = Vec::with_capacity(boundaries.len());
    for (square, phi, m_ref) in boundaries {
        certs.push(linearization_certificate(phi, u, *m_ref, p, slack, *square)?);
    }
    if let Some(worst) = certs
        .iter()
        .filter(|c| !c.ok)
        .max_by(|a, b| {
            let ea = a.boundary_energy - (a.slack + 2.0 * a.map_boundary_energy);
            let eb = b.boundary_energy - (b.slack + 2.0 * b.map_boundary_energy);
            ea.partial_cmp(&eb).unwrap()
        })
    {
        return Err(PlanarError::EnergyBoundFailure {
            detail: format!(
                "square ({}, {}): boundary energy {} exceeds {} + 2·{}",
                worst.square.0, worst.square.1, worst.boundary_energy, worst.slack,
                worst.map_boundary_energy
            ),
        });
    }
    Ok(certs)
}

// ---------------------------------------------------------------------------
// Square classification
// ---------------------------------------------------------------------------

/// How a grid square is treated by the cellwise extension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SquareKind {
    /// Gradient oscillates too much on the square, or the mean gradient has
    /// extreme norm or determinant: no reference matrix (`M = 0`).
    Bad,
    /// Mean gradient vanishes: the map is nearly constant here.
    Zero,
    /// Mean gradient is essentially rank one (`M` = its nearest rank-1
    /// matrix).
    Rank1,
    /// Mean gradient is well-conditioned (`M` = the mean itself).
    General,
}

/// Classification record for one grid square.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SquareClass {
    pub i: usize,
    pub j: usize,
    pub kind: SquareKind,
    /// Mean gradient over the square.
    pub mean: Mat2,
    /// Reference matrix used downstream (0, rank-1 projection, or the mean).
    pub m: Mat2,
    /// `(1/|R|) ∫_R |Du − mean|^p`.
    pub deviation_mean: f64,
    /// `(1/|R|) ∫_R |Du − m|^p` for the chosen reference.
    pub deviation_ref: f64,
    /// Frobenius distance from the mean to the chosen reference (nonzero
    /// only for rank-1 squares).
    pub projection_penalty: f64,
}

/// Classify the `k × k` grid squares of the map's domain by mean-gradient
/// behaviour at scale `sigma` (threshold `κ = σ^{3p}` for the mean
/// deviation). Triangles are assigned to squares by centroid; the map's
/// mesh is expected to refine the grid.
pub fn classify_squares(u: &PlMap, k: usize, p: f64, sigma: f64) -> Result<Vec<SquareClass>> {
    assert!(k >= 1 && sigma > 0.0 && sigma < 1.0);
    let domain = u.mesh.domain;
    let kappa = sigma.powf(3.0 * p);
    let data = triangle_gradient_data(u);
    // Group triangles by square.
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); k * k];
    for (t, (_, _, c)) in data.iter().enumerate() {
        let i = (((c.x - domain.x0) / domain.width() * k as f64).floor() as isize)
            .clamp(0, k as isize - 1) as usize;
        let j = (((c.y - domain.y0) / domain.height() * k as f64).floor() as isize)
            .clamp(0, k as isize - 1) as usize;
        groups[j * k + i].push(t);
    }
    let mut out = Vec::with_capacity(k * k);
    for j in 0..k {
        for i in 0..k {
            let ts = &groups[j * k + i];
            if ts.is_empty() {
                return Err(PlanarError::OutOfDomain {
                    detail: format!("square ({i}, {j}) contains no triangles"),
                });
            }
            let area: f64 = ts.iter().map(|&t| data[t].0).sum();
            let mut mean = Mat2::ZERO;
            for &t in ts {
                mean = Mat2::new(
                    mean.a + data[t].0 * data[t].1.a,
                    mean.b + data[t].0 * data[t].1.b,
                    mean.c + data[t].0 * data[t].1.c,
                    mean.d + data[t].0 * data[t].1.d,
                );
            }
            mean = mean.scale(1.0 / area);
            let deviation = |m_ref: &Mat2| -> f64 {
                ts.iter()
                    .map(|&t| data[t].0 * data[t].1.sub(m_ref).norm().powf(p))
                    .sum::<f64>()
                    / area
            };
            let deviation_mean = deviation(&mean);
            let norm = mean.norm();
            let det = mean.det();
            let lebesgue = deviation_mean <= kappa * (1.0 + CERT_REL_TOL);
            let (kind, m, projection_penalty) = if !lebesgue {
                (SquareKind::Bad, Mat2::ZERO, 0.0)
            } else if norm < 1e-14 {
                (SquareKind::Zero, Mat2::ZERO, 0.0)
            } else if norm < sigma || norm > 1.0 / sigma || det > 1.0 / sigma || det < -sigma {
                (SquareKind::Bad, Mat2::ZERO, 0.0)
            } else if det.abs() <= sigma {
                let (proj, penalty) = mean.nearest_rank1();
                (SquareKind::Rank1, proj, penalty)
            } else {
                (SquareKind::General, mean, 0.0)
            };
            let deviation_ref = deviation(&m);
            out.push(SquareClass {
                i,
                j,
                kind,
                mean,
                m,
                deviation_mean,
                deviation_ref,
                projection_penalty,
            });
        }
    }
    Ok(out)
}

/// Oscillation of a Sobolev map on a ball of radius `ρ` in terms of its
/// gradient energy on the concentric ball of radius `2ρ`:
/// `osc ≤ (4π)^{1/p'} ρ^{1−2/p} E^{1/p}` with `1/p + 1/p' = 1`.
pub fn oscillation_estimate(p: f64, rho: f64, energy_on_double_ball: f64) -> f64 {
    assert!(p > 1.0 && rho > 0.0);
    let p_conj = p / (p - 1.0);
    (4.0 * std::f64::consts::PI).powf(1.0 / p_conj)
        * rho.powf(1.0 - 2.0 / p)
        * energy_on_double_ball.max(0.0).powf(1.0 / p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Rect;
    use crate::oracle;
    use crate::plmap::{restrict, Triangulation};

    fn map_with_images(k: usize, f: impl Fn(Point) -> Point) -> PlMap {
        let mesh = Triangulation::lattice(Rect::unit(), k, k);
        let images = mesh.vertices.iter().map(|&v| f(v)).collect();
        PlMap::new(mesh, images).unwrap()
    }

    #[test]
    fn energy_2d_closed_forms() {
        let id = map_with_images(3, |v| v);
        // |Id|_F = √2, so ∫ |Du|^p = 2^{p/2}.
        for p in [1.0, 1.5, 2.0] {
            let e = energy_2d(&id, p, None);
            assert!((e - 2.0f64.powf(p / 2.0)).abs() < 1e-12);
            assert_eq!(energy_2d(&id, p, Some(Mat2::ID)), 0.0);
        }
        let squash = map_with_images(3, |v| Point::new(v.x, 0.0));
        assert!((energy_2d(&squash, 2.0, None) - 1.0).abs() < 1e-12);
        // Du − Id = [[0,0],[0,−1]] everywhere: deviation 1.
        assert!((energy_2d(&squash, 2.0, Some(Mat2::ID)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn energy_2d_matches_quadrature_oracle() {
        // A genuinely non-affine map: perturb interior lattice vertices.
        let mesh = Triangulation::lattice(Rect::unit(), 4, 4);
        let images: Vec<Point> = mesh
            .vertices
            .iter()
            .map(|v| {
                let bump = 0.05 * (7.0 * v.x + 3.0 * v.y).sin();
                let interior = v.x > 0.0 && v.x < 1.0 && v.y > 0.0 && v.y < 1.0;
                if interior {
                    Point::new(v.x + bump, v.y - bump)
                } else {
                    *v
                }
            })
            .collect();
        let m = PlMap::new(mesh, images).unwrap();
        for p in [1.5, 2.0] {
            let exact = energy_2d(&m, p, None);
            let quad = oracle::quadrature_energy(
                &|q| m.eval(q).ok(),
                Rect::unit(),
                512,
                p,
                [[0.0, 0.0], [0.0, 0.0]],
            );
            assert!(
                (exact - quad).abs() < 0.02 * exact,
                "p={p}: exact {exact} vs quadrature {quad}"
            );
        }
    }

    #[test]
    fn energy_1d_boundary_of_identity() {
        let id = map_with_images(2, |v| v);
        let boundary = Rect::unit().boundary();
        let f = restrict(&id, &boundary).unwrap();
        // φ′ = τ exactly: zero deviation from Id, perimeter against 0.
        assert!(energy_1d(&f, 2.0, Some(Mat2::ID)) < 1e-24);
        assert!((energy_1d(&f, 2.0, None) - 4.0).abs() < 1e-12);
        assert!((energy_1d(&f, 1.5, None) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn linearization_certificate_pass_and_fail() {
        let id = map_with_images(2, |v| v);
        let boundary = Rect::unit().boundary();
        let phi = restrict(&id, &boundary).unwrap();
        let cert =
            linearization_certificate(&phi, &id, Mat2::ID, 2.0, 1e-6, (0, 0)).unwrap();
        assert!(cert.ok);
        // Distort the boundary values: lhs becomes positive while the map
        // side stays zero, so a small slack must fail.
        let mut bent = phi.clone();
        for (i, v) in bent.values.iter_mut().enumerate() {
            if i % 2 == 1 {
                *v = v.add(Point::new(0.0, 0.1));
            }
        }
        let cert2 =
            linearization_certificate(&bent, &id, Mat2::ID, 2.0, 1e-6, (0, 0)).unwrap();
        assert!(!cert2.ok);
        assert!(cert2.boundary_energy > cert2.slack);
    }

    #[test]
    fn classify_general_zero_rank1_bad() {
        let p = 2.0;
        let sigma = 0.1;
        // General: the identity.
        let id = map_with_images(2, |v| v);
        let c = &classify_squares(&id, 1, p, sigma).unwrap()[0];
        assert_eq!(c.kind, SquareKind::General);
        assert_eq!(c.m, Mat2::ID);
        assert_eq!(c.deviation_mean, 0.0);

        // Zero: a constant map.
        let constant = map_with_images(2, |_| Point::new(0.3, 0.4));
        let c = &classify_squares(&constant, 1, p, sigma).unwrap()[0];
        assert_eq!(c.kind, SquareKind::Zero);

        // Rank 1 via exactly singular mean: (x, y) ↦ (x, 0).
        let squash = map_with_images(2, |v| Point::new(v.x, 0.0));
        let c = &classify_squares(&squash, 1, p, sigma).unwrap()[0];
        assert_eq!(c.kind, SquareKind::Rank1);
        assert!((c.m.sub(&Mat2::new(1.0, 0.0, 0.0, 0.0))).norm() < 1e-12);
        assert_eq!(c.projection_penalty, 0.0);

        // Rank 1 via small positive determinant: diag(1, 0.05).
        let thin = map_with_images(2, |v| Point::new(v.x, 0.05 * v.y));
        let c = &classify_squares(&thin, 1, p, sigma).unwrap()[0];
        assert_eq!(c.kind, SquareKind::Rank1);
        assert!((c.projection_penalty - 0.05).abs() < 1e-12);
        // The projection keeps the dominant direction.
        assert!((c.m.sub(&Mat2::new(1.0, 0.0, 0.0, 0.0))).norm() < 1e-12);

        // Bad via extreme norm: diag(20, 20) has |M| > 1/σ.
        let big = map_with_images(2, |v| v.scale(20.0));
        let c = &classify_squares(&big, 1, p, sigma).unwrap()[0];
        assert_eq!(c.kind, SquareKind::Bad);
        assert_eq!(c.m, Mat2::ZERO);

        // Bad via oscillation: slopes alternating 2 and −1 keep the mean
        // moderate but the deviation far above κ = σ^{3p}.
        let zigzag = map_with_images(4, |v| {
            let x = v.x;
            let xh = match (x * 4.0).round() as i32 {
                0 => 0.0,
                1 => 0.5,
                2 => 0.25,
                3 => 0.75,
                _ => 0.5,
            };
            Point::new(xh, v.y)
        });
        let c = &classify_squares(&zigzag, 1, p, sigma).unwrap()[0];
        assert_eq!(c.kind, SquareKind::Bad);
        assert!(c.deviation_mean > sigma.powf(3.0 * p));
    }

    #[test]
    fn classify_respects_grid_resolution() {
        // Two behaviours split along a mesh line, on a K=2 grid whose cells
        // the 4×4 mesh refines: identity below y = 1/2, flattened above.
        // The map is continuous and exactly affine on each half, so each
        // square's triangles carry a single gradient.
        let mesh = Triangulation::lattice(Rect::unit(), 4, 4);
        let images: Vec<Point> = mesh
            .vertices
            .iter()
            .map(|v| Point::new(v.x, v.y.min(0.5)))
            .collect();
        let m = PlMap::new(mesh, images).unwrap();
        m.validate().unwrap();
        let classes = classify_squares(&m, 2, 2.0, 0.1).unwrap();
        assert_eq!(classes.len(), 4);
        let at = |i: usize, j: usize| classes.iter().find(|c| c.i == i && c.j == j).unwrap();
        assert_eq!(at(0, 0).kind, SquareKind::General);
        assert_eq!(at(1, 0).kind, SquareKind::General);
        assert_eq!(at(0, 1).kind, SquareKind::Rank1);
        assert_eq!(at(1, 1).kind, SquareKind::Rank1);
    }

    #[test]
    fn oscillation_estimate_formula() {
        // p = 2: (4π)^{1/2} ρ^0 E^{1/2}.
        let b = oscillation_estimate(2.0, 0.25, 0.09);
        assert!((b - (4.0 * std::f64::consts::PI).sqrt() * 0.3).abs() < 1e-12);
        // Monotone in the energy.
        assert!(oscillation_estimate(1.5, 0.1, 2.0) > oscillation_estimate(1.5, 0.1, 1.0));
    }
}
