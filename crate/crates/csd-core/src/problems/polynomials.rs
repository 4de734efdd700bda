//! Polynomial test energies on the sphere and the cylinder.

use nalgebra::DVector;

use super::{builder, KnownTarget, ProblemFamily, SaddleProblem};
use crate::geometry::Manifold;

/// f(x,y,z) = (x^2-1)^2 + a y^2 + 2a z^2 on the unit sphere. The point
/// (0,1,0) is an index-1 saddle whose conditioning is steered by `a`.
pub fn sphere_poly(a: f64) -> SaddleProblem {
    assert!(a > 0.0);
    builder(
        format!("sphere(a={a})"),
        ProblemFamily::SpherePoly,
        Manifold::unit_sphere(3),
        Box::new(move |x| {
            let q = x[0] * x[0] - 1.0;
            q * q + a * x[1] * x[1] + 2.0 * a * x[2] * x[2]
        }),
        Box::new(move |x| {
            DVector::from_column_slice(&[
                4.0 * x[0] * (x[0] * x[0] - 1.0),
                2.0 * a * x[1],
                4.0 * a * x[2],
            ])
        }),
    )
    .hess(Box::new(move |x, v| {
        DVector::from_column_slice(&[
            (12.0 * x[0] * x[0] - 4.0) * v[0],
            2.0 * a * v[1],
            4.0 * a * v[2],
        ])
    }))
    .target(KnownTarget::Point(DVector::from_column_slice(&[0.0, 1.0, 0.0])))
    .index(1)
    .param("a", a)
    .build()
}

/// f(x,y,z) = -y^2 - 0.05 z^2 with x^2 + y^2 = 1: a flat index-1 saddle at
/// (0,1,0) on the cylinder.
pub fn cylinder_poly() -> SaddleProblem {
    builder(
        "cylinder".to_string(),
        ProblemFamily::CylinderPoly,
        Manifold::cylinder(3),
        Box::new(|x| -x[1] * x[1] - 0.05 * x[2] * x[2]),
        Box::new(|x| DVector::from_column_slice(&[0.0, -2.0 * x[1], -0.1 * x[2]])),
    )
    .hess(Box::new(|_, v| {
        DVector::from_column_slice(&[0.0, -2.0 * v[1], -0.1 * v[2]])
    }))
    .target(KnownTarget::Point(DVector::from_column_slice(&[0.0, 1.0, 0.0])))
    .index(1)
    .build()
}
