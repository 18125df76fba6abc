//! Specular ray tracer over planar facets using the method of images.
//!
//! Every ordered facet sequence up to the bounce limit is unfolded by
//! mirroring the receiver back through the facet planes. The candidate route
//! is kept only when each interaction lies inside its facet, arrives on the
//! reflective side, and no segment is blocked by another facet.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geom::{dir_to_angles, reflect_point, Plane, Vec3, UNIT_TOL};
use crate::pathmodel::{PwaPath, ReferencePair, SPEED_OF_LIGHT};

pub const MAX_BOUNCES: usize = 3;

/// Relative slack on segment parameters when intersecting with facets.
const SEG_EPS: f64 = 1e-9;

/// A rectangular (or unbounded) reflecting facet.
#[derive(Debug, Clone, PartialEq)]
pub struct Facet {
    pub center: Vec3,
    pub axis_u: Vec3,
    pub axis_v: Vec3,
    /// Half extents along `axis_u` / `axis_v`; `None` is unbounded.
    pub half_u: Option<f64>,
    pub half_v: Option<f64>,
    /// One-sided facets reflect only on the `axis_u × axis_v` side.
    pub two_sided: bool,
    plane: Plane,
}

impl Facet {
    pub fn new(
        center: Vec3,
        axis_u: Vec3,
        axis_v: Vec3,
        half_u: Option<f64>,
        half_v: Option<f64>,
        two_sided: bool,
    ) -> Result<Self> {
        let bad = |reason: &str| Error::InvalidFacet {
            index: 0,
            reason: reason.to_string(),
        };
        if (axis_u.norm() - 1.0).abs() > UNIT_TOL || (axis_v.norm() - 1.0).abs() > UNIT_TOL {
            return Err(bad("axes must be unit vectors"));
        }
        if axis_u.dot(&axis_v).abs() > UNIT_TOL {
            return Err(bad("axes must be orthogonal"));
        }
        for h in [half_u, half_v].into_iter().flatten() {
            if !(h > 0.0) {
                return Err(bad("half extents must be positive"));
            }
        }
        let normal = axis_u.cross(&axis_v).normalize();
        Ok(Self {
            plane: Plane::through(&center, normal)?,
            center,
            axis_u,
            axis_v,
            half_u,
            half_v,
            two_sided,
        })
    }

    /// Unbounded plane through `point` with the given normal; reflective on the normal side.
    pub fn infinite(point: Vec3, normal: Vec3, two_sided: bool) -> Result<Self> {
        let n = normal.normalize();
        let seed = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
        let u = n.cross(&seed).normalize();
        let v = n.cross(&u);
        Self::new(point, u, v, None, None, two_sided)
    }

    /// Axis-aligned rectangle `(center, normal, width along u, height along v)`.
    pub fn rectangle(
        center: Vec3,
        axis_u: Vec3,
        axis_v: Vec3,
        width: f64,
        height: f64,
        two_sided: bool,
    ) -> Result<Self> {
        Self::new(
            center,
            axis_u,
            axis_v,
            Some(width / 2.0),
            Some(height / 2.0),
            two_sided,
        )
    }

    pub fn plane(&self) -> &Plane {
        &self.plane
    }

    /// Whether an in-plane point lies within the facet bounds.
    pub fn contains(&self, p: &Vec3) -> bool {
        let d = p - self.center;
        let inside = |half: Option<f64>, axis: &Vec3| match half {
            None => true,
            Some(h) => d.dot(axis).abs() <= h * (1.0 + 1e-12) + 1e-12,
        };
        inside(self.half_u, &self.axis_u) && inside(self.half_v, &self.axis_v)
    }

    /// Parameter `t ∈ (0, 1)` where segment `a → b` crosses this facet, if it does.
    fn crossing(&self, a: &Vec3, b: &Vec3) -> Option<f64> {
        let da = self.plane.signed_distance(a);
        let db = self.plane.signed_distance(b);
        if da * db >= 0.0 {
            return None;
        }
        let t = da / (da - db);
        if t <= SEG_EPS || t >= 1.0 - SEG_EPS {
            return None;
        }
        let p = a + t * (b - a);
        self.contains(&p).then_some(t)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub facets: Vec<Facet>,
    pub carrier_freq: f64,
    /// Amplitude loss per bounce, dB.
    pub reflection_loss_db: f64,
}

impl Scene {
    pub fn new(facets: Vec<Facet>, carrier_freq: f64, reflection_loss_db: f64) -> Result<Self> {
        if !(carrier_freq > 0.0) {
            return Err(Error::InvalidArgument("carrier frequency must be positive".into()));
        }
        if !(reflection_loss_db >= 0.0) {
            return Err(Error::InvalidArgument("reflection loss must be >= 0 dB".into()));
        }
        Ok(Self {
            facets,
            carrier_freq,
            reflection_loss_db,
        })
    }

    pub fn empty(carrier_freq: f64) -> Self {
        Self {
            facets: Vec::new(),
            carrier_freq,
            reflection_loss_db: 3.0,
        }
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_freq
    }
}

/// Ordered interaction points of one path, TX first and RX last.
#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub vertices: Vec<Vec3>,
    /// Facet index of each interior vertex.
    pub facet_ids: Vec<usize>,
}

impl Route {
    pub fn new(vertices: Vec<Vec3>, facet_ids: Vec<usize>) -> Result<Self> {
        if vertices.len() < 2 {
            return Err(Error::RouteTooShort(vertices.len()));
        }
        if facet_ids.len() + 2 != vertices.len() {
            return Err(Error::InvalidArgument(format!(
                "route with {} vertices needs {} facet ids, got {}",
                vertices.len(),
                vertices.len() - 2,
                facet_ids.len()
            )));
        }
        Ok(Self { vertices, facet_ids })
    }

    /// Route from raw interaction points with no facet labels.
    pub fn from_points(vertices: Vec<Vec3>) -> Result<Self> {
        let n = vertices.len().saturating_sub(2);
        Self::new(vertices, vec![usize::MAX; n])
    }

    pub fn tx(&self) -> &Vec3 {
        &self.vertices[0]
    }

    pub fn rx(&self) -> &Vec3 {
        self.vertices.last().expect("route has at least two vertices")
    }

    pub fn bounces(&self) -> usize {
        self.vertices.len() - 2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TracedPath {
    pub route: Route,
    pub gain: Complex64,
    pub delay: f64,
}

impl TracedPath {
    pub fn length(&self) -> f64 {
        route_length(&self.route)
    }
}

pub fn route_length(route: &Route) -> f64 {
    route
        .vertices
        .windows(2)
        .map(|w| (w[1] - w[0]).norm())
        .sum()
}

/// Which validity checks to apply when unfolding a facet sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Validity {
    /// Facet bounds, reflective side and occlusion.
    Full,
    /// Treat every facet as its infinite plane and skip occlusion; only the
    /// specular geometry itself must be consistent.
    PlanesOnly,
}

/// Path gain: free-space amplitude over the unfolded length, a fixed loss per
/// bounce, and the carrier phase of the propagation delay.
pub fn path_gain(scene: &Scene, length: f64, bounces: usize) -> Complex64 {
    let lambda = scene.wavelength();
    let friis = lambda / (4.0 * PI * length);
    let loss = 10f64.powf(-scene.reflection_loss_db * bounces as f64 / 20.0);
    let phase = -2.0 * PI * scene.carrier_freq * length / SPEED_OF_LIGHT;
    Complex64::from_polar(friis * loss, phase)
}

/// Unfolds one ordered facet sequence between `tx` and `rx`.
pub fn trace_sequence(
    scene: &Scene,
    sequence: &[usize],
    tx: &Vec3,
    rx: &Vec3,
    validity: Validity,
) -> Option<Route> {
    if sequence.windows(2).any(|w| w[0] == w[1]) {
        return None;
    }
    let k = sequence.len();
    // images[i] = rx mirrored through facets k-1, ..., i (images[k] = rx)
    let mut images = vec![*rx; k + 1];
    for i in (0..k).rev() {
        images[i] = reflect_point(&images[i + 1], scene.facets[sequence[i]].plane());
    }

    let mut vertices = Vec::with_capacity(k + 2);
    vertices.push(*tx);
    for (i, &fid) in sequence.iter().enumerate() {
        let plane = scene.facets[fid].plane();
        let from = vertices[i];
        let target = images[i];
        let da = plane.signed_distance(&from);
        let db = plane.signed_distance(&target);
        if !(da * db < 0.0) {
            return None;
        }
        let t = da / (da - db);
        if t <= SEG_EPS || t >= 1.0 - SEG_EPS {
            return None;
        }
        vertices.push(from + t * (target - from));
    }
    vertices.push(*rx);

    for (i, &fid) in sequence.iter().enumerate() {
        let facet = &scene.facets[fid];
        let prev = &vertices[i];
        let next = &vertices[i + 2];
        let sp = facet.plane().signed_distance(prev);
        let sn = facet.plane().signed_distance(next);
        if !(sp * sn > 0.0) {
            return None;
        }
        if validity == Validity::Full {
            if !facet.two_sided && sp < 0.0 {
                return None;
            }
            if !facet.contains(&vertices[i + 1]) {
                return None;
            }
        }
    }

    if validity == Validity::Full {
        for (seg, w) in vertices.windows(2).enumerate() {
            let skip_a = seg.checked_sub(1).map(|j| sequence[j]);
            let skip_b = sequence.get(seg).copied();
            let blocked = scene.facets.iter().enumerate().any(|(fid, f)| {
                Some(fid) != skip_a && Some(fid) != skip_b && f.crossing(&w[0], &w[1]).is_some()
            });
            if blocked {
                return None;
            }
        }
    }

    Some(Route {
        vertices,
        facet_ids: sequence.to_vec(),
    })
}

fn check_endpoint(scene: &Scene, p: &Vec3) -> Result<()> {
    for (i, f) in scene.facets.iter().enumerate() {
        if f.plane().signed_distance(p).abs() < 1e-9 && f.contains(p) {
            return Err(Error::EndpointOnFacet([p.x, p.y, p.z], i));
        }
    }
    Ok(())
}

/// All ordered facet sequences of length `0..=max_bounces` without immediate repeats.
fn sequences(n_facets: usize, max_bounces: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..max_bounces {
        let mut next = Vec::new();
        for seq in &frontier {
            for f in 0..n_facets {
                if seq.last() != Some(&f) {
                    let mut s: Vec<usize> = seq.clone();
                    s.push(f);
                    next.push(s);
                }
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Enumerates every valid specular path with at most `max_bounces` reflections,
/// strongest first.
pub fn trace_paths(scene: &Scene, tx: &Vec3, rx: &Vec3, max_bounces: usize) -> Result<Vec<TracedPath>> {
    if max_bounces > MAX_BOUNCES {
        return Err(Error::TooManyBounces(max_bounces));
    }
    check_endpoint(scene, tx)?;
    check_endpoint(scene, rx)?;

    let mut paths: Vec<TracedPath> = sequences(scene.facets.len(), max_bounces)
        .into_iter()
        .filter_map(|seq| trace_sequence(scene, &seq, tx, rx, Validity::Full))
        .filter_map(|route| {
            let length = route_length(&route);
            (length > 0.0).then(|| TracedPath {
                gain: path_gain(scene, length, route.bounces()),
                delay: length / SPEED_OF_LIGHT,
                route,
            })
        })
        .collect();
    // stable: equal gains keep enumeration order (fewer bounces first)
    paths.sort_by(|a, b| b.gain.norm().total_cmp(&a.gain.norm()));
    Ok(paths)
}

/// PWA parameters of a traced path: the departure direction is the first
/// segment, the arrival direction points back along the last segment.
pub fn to_pwa(path: &TracedPath, reference: &ReferencePair) -> Result<PwaPath> {
    let tol = 1e-9 * (1.0 + reference.rx.norm().max(reference.tx.norm()));
    if (path.route.tx() - reference.tx).norm() > tol || (path.route.rx() - reference.rx).norm() > tol {
        return Err(Error::EndpointMismatch);
    }
    let v = &path.route.vertices;
    let first = v[1] - v[0];
    let last = v[v.len() - 1] - v[v.len() - 2];
    if first.norm() == 0.0 {
        return Err(Error::DegenerateSegment(0));
    }
    if last.norm() == 0.0 {
        return Err(Error::DegenerateSegment(v.len() - 2));
    }
    let (aod_az, aod_el) = dir_to_angles(&first.normalize())?;
    let (aoa_az, aoa_el) = dir_to_angles(&(-last).normalize())?;
    Ok(PwaPath {
        gain: path.gain,
        delay: path.delay,
        aoa_az,
        aoa_el,
        aod_az,
        aod_el,
    })
}
