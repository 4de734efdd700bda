//! Exponential map and parallel transport on spheres, in a (possibly
//! weighted) inner product `<u, v> = w * u'v`. All sphere-like manifolds
//! (unit sphere, cylinder circle factor, product-sphere factors, the
//! normalized field constraint) reduce to these two formulas.

use nalgebra::DVector;

/// Exp_x(t) = cos|t| x + sin|t|/|t| t for x on the weighted unit sphere and
/// t tangent at x.
pub(crate) fn sphere_exp(x: &DVector<f64>, t: &DVector<f64>, weight: f64) -> DVector<f64> {
    let nrm = (weight * t.dot(t)).sqrt();
    if nrm == 0.0 {
        return x.clone();
    }
    x * nrm.cos() + t * (nrm.sin() / nrm)
}

/// Parallel transport of v along the geodesic Exp_x(s t), s in [0, 1].
pub(crate) fn sphere_transport(
    x: &DVector<f64>,
    t: &DVector<f64>,
    v: &DVector<f64>,
    weight: f64,
) -> DVector<f64> {
    let nrm2 = weight * t.dot(t);
    let nrm = nrm2.sqrt();
    if nrm == 0.0 {
        return v.clone();
    }
    let tv = weight * t.dot(v);
    v + t * ((nrm.cos() - 1.0) / nrm2 * tv) - x * (nrm.sin() / nrm * tv)
}

/// Transport of w from Exp_x(t) back to x along the reversed geodesic.
pub(crate) fn sphere_transport_back(
    x: &DVector<f64>,
    t: &DVector<f64>,
    dest: &DVector<f64>,
    w: &DVector<f64>,
    weight: f64,
) -> DVector<f64> {
    // Tangent of the reversed geodesic at the destination.
    let t_rev = -sphere_transport(x, t, t, weight);
    sphere_transport(dest, &t_rev, w, weight)
}

/// Geodesic distance (great-circle angle) between two weighted-unit vectors.
pub(crate) fn sphere_angle(x: &DVector<f64>, y: &DVector<f64>, weight: f64) -> f64 {
    let c = weight * x.dot(y);
    let perp = y - x * c;
    let s = (weight * perp.dot(&perp)).sqrt();
    s.atan2(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn v(s: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(s)
    }

    #[test]
    fn exp_half_turn_on_circle() {
        let y = sphere_exp(&v(&[1.0, 0.0]), &v(&[0.0, PI]), 1.0);
        assert_relative_eq!(y[0], -1.0, epsilon = 1e-15);
        assert!(y[1].abs() < 1e-15);
    }

    #[test]
    fn exp_quarter_turn() {
        let y = sphere_exp(&v(&[1.0, 0.0, 0.0]), &v(&[0.0, FRAC_PI_2, 0.0]), 1.0);
        assert_relative_eq!(y[1], 1.0, epsilon = 1e-15);
        assert!(y[0].abs() < 1e-15 && y[2].abs() < 1e-15);
    }

    #[test]
    fn transport_rotates_with_the_geodesic() {
        // 90 degree rotation on the circle: v at (1,0) pointing along the
        // geodesic ends up pointing along (-1,0) at (0,1).
        let p = sphere_transport(&v(&[1.0, 0.0]), &v(&[0.0, FRAC_PI_2]), &v(&[0.0, 1.0]), 1.0);
        assert_relative_eq!(p[0], -1.0, epsilon = 1e-14);
        assert!(p[1].abs() < 1e-14);
    }

    #[test]
    fn transport_back_inverts_transport() {
        let x = v(&[0.6, 0.8, 0.0]);
        let t = v(&[0.8 * 0.3, -0.6 * 0.3, 0.4]);
        // t is tangent: x.t = 0
        assert!(x.dot(&t).abs() < 1e-15);
        let w = v(&[0.8, -0.6, -0.2]);
        let w_t = &w - &x * x.dot(&w); // project to tangent
        let dest = sphere_exp(&x, &t, 1.0);
        let fwd = sphere_transport(&x, &t, &w_t, 1.0);
        let back = sphere_transport_back(&x, &t, &dest, &fwd, 1.0);
        assert_relative_eq!(back, w_t, epsilon = 1e-13);
    }

    #[test]
    fn weighted_sphere_keeps_weighted_norm() {
        let w = 0.25;
        let mut x = v(&[1.0, 2.0, -0.5]);
        x /= (w * x.dot(&x)).sqrt();
        let mut t = v(&[0.3, -0.8, 1.1]);
        t -= &x * (w * x.dot(&t)); // tangent in the weighted metric
        let y = sphere_exp(&x, &t, w);
        assert_relative_eq!(w * y.dot(&y), 1.0, epsilon = 1e-14);
        let p = sphere_transport(&x, &t, &t, w);
        assert!(w * y.dot(&p) < 1e-13); // tangency at destination
    }
}
