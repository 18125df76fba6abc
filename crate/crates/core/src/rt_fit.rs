//! Route-tracing fit: recovers the mirror image `(U, g)` of a path from its
//! interaction points, then the angle form at the reference pair.
//!
//! Each interaction `k` has a reflecting plane whose normal is the change of
//! direction `v_{k+1} − v_k` and whose intercept follows from the interaction
//! point. The image recursion `z_k = V_k z_{k−1} + c_k` starting from the TX
//! gives `U = V_{K−1} ⋯ V_1` and `g = g_{K−1}` with `g_k = c_k + V_k g_{k−1}`.

use crate::error::{Error, Result};
use crate::geom::{Mat3, Plane, Vec3};
use crate::pathmodel::{image_to_angles, ReferencePair, RmImage, RmPath, SPEED_OF_LIGHT};
use crate::tracer::{route_length, Route, TracedPath};

const DEGENERATE_TOL: f64 = 1e-12;

/// The reflecting planes implied by a route, one per interior vertex.
pub fn route_planes(route: &Route) -> Result<Vec<Plane>> {
    let v = &route.vertices;
    if v.len() < 2 {
        return Err(Error::RouteTooShort(v.len()));
    }
    let steps = v
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let d = w[1] - w[0];
            let n = d.norm();
            if n <= 0.0 {
                Err(Error::DegenerateSegment(i))
            } else {
                Ok(d / n)
            }
        })
        .collect::<Result<Vec<Vec3>>>()?;

    steps
        .windows(2)
        .enumerate()
        .map(|(k, w)| {
            let turn = w[1] - w[0];
            let n = turn.norm();
            if n < DEGENERATE_TOL {
                return Err(Error::DegenerateInteraction(k + 1));
            }
            let normal = turn / n;
            Plane::new(normal, normal.dot(&v[k + 1]))
        })
        .collect()
}

pub fn fit_from_route(route: &Route) -> Result<RmImage> {
    let mut u = Mat3::identity();
    let mut g = Vec3::zeros();
    for plane in route_planes(route)? {
        let (v, c) = plane.mirror();
        u = v * u;
        g = c + v * g;
    }
    Ok(RmImage { u, g })
}

/// Full RM parameters of a traced path at the reference pair.
pub fn fit_rm_rt(path: &TracedPath, reference: &ReferencePair) -> Result<(RmPath, RmImage)> {
    let tol = 1e-9 * (1.0 + reference.rx.norm().max(reference.tx.norm()));
    if (path.route.tx() - reference.tx).norm() > tol || (path.route.rx() - reference.rx).norm() > tol {
        return Err(Error::EndpointMismatch);
    }
    let image = fit_from_route(&path.route)?;
    let geometry = image_to_angles(&image, reference)?;
    let length = route_length(&path.route);
    let image_len = geometry.delay * SPEED_OF_LIGHT;
    if (image_len - length).abs() > 1e-9 * length {
        return Err(Error::Inconsistent(format!(
            "image distance {image_len} does not match route length {length}"
        )));
    }
    let rm = RmPath {
        delay: path.delay,
        ..geometry.with_gain(path.gain)
    };
    Ok((rm, image))
}
