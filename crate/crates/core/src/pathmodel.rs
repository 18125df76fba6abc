//! Path distance functions and the two reflection-model parametrizations.
//!
//! A path is described by its distance function `d(x_r, x_t)`. Three models
//! are provided:
//!
//! * LOS: the Euclidean distance, exact for direct paths.
//! * PWA: the plane-wave linearisation around a reference pair, six
//!   parameters per path `(g, τ, φ_r, θ_r, φ_t, θ_t)`.
//! * RM: the distance to a mirrored image of the transmitter,
//!   `‖x_r − U x_t − g‖` with `U` orthogonal. It is exact for any number of
//!   planar specular bounces and can equally be written with the PWA angles
//!   plus a roll `γ_t` and a binary reflection `s`.
//!
//! Sign convention: the arrival direction points from the receiver toward
//! the transmitter image, `u_r = −d₀/‖d₀‖` with `d₀ = x_r0 − U x_t0 − g`, so
//! that the PWA angles and the RM angles coincide.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geom::{
    align_to_x, dir_to_angles, euler_factor_so3, q_z, rot_x, spherical_dir, Mat3, Sign, Vec3,
};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Reference locations `(x_t0, x_r0)` around which path parameters are defined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferencePair {
    pub tx: Vec3,
    pub rx: Vec3,
}

impl ReferencePair {
    pub fn new(tx: Vec3, rx: Vec3) -> Result<Self> {
        if tx == rx {
            return Err(Error::InvalidArgument(
                "reference TX and RX coincide".into(),
            ));
        }
        Ok(Self { tx, rx })
    }
}

/// Plane-wave parameters of one path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PwaPath {
    pub gain: Complex64,
    pub delay: f64,
    pub aoa_az: f64,
    pub aoa_el: f64,
    pub aod_az: f64,
    pub aod_el: f64,
}

impl PwaPath {
    pub fn arrival_dir(&self) -> Vec3 {
        spherical_dir(self.aoa_az, self.aoa_el)
    }

    pub fn departure_dir(&self) -> Vec3 {
        spherical_dir(self.aod_az, self.aod_el)
    }
}

/// Image-form RM parameters: the TX image is `U x_t + g`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmImage {
    pub u: Mat3,
    pub g: Vec3,
}

impl RmImage {
    pub fn los() -> Self {
        Self {
            u: Mat3::identity(),
            g: Vec3::zeros(),
        }
    }

    pub fn image_of(&self, tx: &Vec3) -> Vec3 {
        self.u * tx + self.g
    }
}

/// Angle-form RM parameters: the PWA set plus the TX roll and the reflection sign.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmPath {
    pub gain: Complex64,
    pub delay: f64,
    pub aoa_az: f64,
    pub aoa_el: f64,
    pub aod_az: f64,
    pub aod_el: f64,
    pub roll: f64,
    pub s: Sign,
}

impl RmPath {
    pub fn from_pwa(p: &PwaPath, roll: f64, s: Sign) -> Self {
        Self {
            gain: p.gain,
            delay: p.delay,
            aoa_az: p.aoa_az,
            aoa_el: p.aoa_el,
            aod_az: p.aod_az,
            aod_el: p.aod_el,
            roll,
            s,
        }
    }

    pub fn pwa(&self) -> PwaPath {
        PwaPath {
            gain: self.gain,
            delay: self.delay,
            aoa_az: self.aoa_az,
            aoa_el: self.aoa_el,
            aod_az: self.aod_az,
            aod_el: self.aod_el,
        }
    }

    pub fn with_gain(mut self, gain: Complex64) -> Self {
        self.gain = gain;
        self
    }

    /// `W = Q_z(s) R_x(γ) R_y(θ_t) R_z(−φ_t)`, the TX-side frame of the path.
    fn tx_frame(&self) -> Mat3 {
        q_z(self.s) * rot_x(self.roll) * align_to_x(self.aod_az, self.aod_el)
    }
}

pub fn los_distance(rx: &Vec3, tx: &Vec3) -> f64 {
    (rx - tx).norm()
}

pub fn pwa_distance(rx: &Vec3, tx: &Vec3, reference: &ReferencePair, path: &PwaPath) -> f64 {
    SPEED_OF_LIGHT * path.delay
        + path.arrival_dir().dot(&(reference.rx - rx))
        + path.departure_dir().dot(&(reference.tx - tx))
}

pub fn rm_distance_image(rx: &Vec3, tx: &Vec3, img: &RmImage) -> f64 {
    (rx - img.u * tx - img.g).norm()
}

pub fn rm_distance_angles(rx: &Vec3, tx: &Vec3, reference: &ReferencePair, path: &RmPath) -> f64 {
    let z = SPEED_OF_LIGHT * path.delay * Vec3::x()
        + align_to_x(path.aoa_az, path.aoa_el) * (reference.rx - rx)
        + path.tx_frame() * (reference.tx - tx);
    z.norm()
}

/// Converts `(U, g)` to the angle form at a reference pair. The gain of the
/// returned path is zero; callers attach it with [`RmPath::with_gain`].
pub fn image_to_angles(img: &RmImage, reference: &ReferencePair) -> Result<RmPath> {
    let d0 = reference.rx - img.image_of(&reference.tx);
    let len = d0.norm();
    if !(len > 0.0) {
        return Err(Error::ZeroLengthPath);
    }
    let (aoa_az, aoa_el) = dir_to_angles(&(-d0 / len))?;
    let w = -align_to_x(aoa_az, aoa_el) * img.u;
    let s = Sign::from_det(w.determinant());
    let (roll, aod_el, aod_az) = euler_factor_so3(&(q_z(s) * w))?;
    Ok(RmPath {
        gain: Complex64::new(0.0, 0.0),
        delay: len / SPEED_OF_LIGHT,
        aoa_az,
        aoa_el,
        aod_az,
        aod_el,
        roll,
        s,
    })
}

pub fn angles_to_image(path: &RmPath, reference: &ReferencePair) -> RmImage {
    let u = -align_to_x(path.aoa_az, path.aoa_el).transpose() * path.tx_frame();
    let d0 = -SPEED_OF_LIGHT * path.delay * spherical_dir(path.aoa_az, path.aoa_el);
    let g = reference.rx - u * reference.tx - d0;
    RmImage { u, g }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::householder;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn rand_vec(rng: &mut impl Rng, r: f64) -> Vec3 {
        Vec3::new(rng.gen_range(-r..r), rng.gen_range(-r..r), rng.gen_range(-r..r))
    }

    fn rand_unit(rng: &mut impl Rng) -> Vec3 {
        loop {
            let v = rand_vec(rng, 1.0);
            if v.norm() > 0.1 {
                return v.normalize();
            }
        }
    }

    fn los_pwa(reference: &ReferencePair) -> PwaPath {
        let d = reference.rx - reference.tx;
        let (aoa_az, aoa_el) = dir_to_angles(&(-d / d.norm())).unwrap();
        let (aod_az, aod_el) = dir_to_angles(&(d / d.norm())).unwrap();
        PwaPath {
            gain: Complex64::new(1.0, 0.0),
            delay: d.norm() / SPEED_OF_LIGHT,
            aoa_az,
            aoa_el,
            aod_az,
            aod_el,
        }
    }

    /// Random orthogonal image with det = ±1, built from Householder mirrors.
    fn random_image(rng: &mut impl Rng, bounces: usize) -> RmImage {
        let mut u = Mat3::identity();
        let mut g = Vec3::zeros();
        for _ in 0..bounces {
            let n = rand_unit(rng);
            let v = householder(&n).unwrap();
            let c = 2.0 * rng.gen_range(-20.0..20.0) * n;
            u = v * u;
            g = v * g + c;
        }
        RmImage { u, g }
    }

    #[test]
    fn los_distance_examples() {
        assert_eq!(los_distance(&Vec3::new(3.0, 4.0, 0.0), &Vec3::zeros()), 5.0);
        let p = Vec3::new(1.0, -2.0, 3.5);
        assert_eq!(los_distance(&p, &p), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..50 {
            let (a, b) = (rand_vec(&mut rng, 10.0), rand_vec(&mut rng, 10.0));
            let direct = ((a.x - b.x).powi(2) + (a.y - b.y).powi(2) + (a.z - b.z).powi(2)).sqrt();
            assert!((los_distance(&a, &b) - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn pwa_at_reference_and_collinear() {
        let reference = ReferencePair::new(Vec3::zeros(), Vec3::new(30.0, 40.0, 0.0)).unwrap();
        let p = los_pwa(&reference);
        let ct = SPEED_OF_LIGHT * p.delay;
        assert_eq!(pwa_distance(&reference.rx, &reference.tx, &reference, &p), ct);
        let rx = reference.rx + 0.3 * p.arrival_dir();
        assert!((pwa_distance(&rx, &reference.tx, &reference, &p) - (ct - 0.3)).abs() < 1e-12);
    }

    #[test]
    fn pwa_error_is_second_order() {
        let reference =
            ReferencePair::new(Vec3::new(0.0, 0.0, 2.0), Vec3::new(180.0, 0.0, 2.0)).unwrap();
        let p = los_pwa(&reference);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let (dr, dt) = (rand_unit(&mut rng), rand_unit(&mut rng));
            let err = |delta: f64| {
                let rx = reference.rx + delta * dr;
                let tx = reference.tx + delta * dt;
                (pwa_distance(&rx, &tx, &reference, &p) - los_distance(&rx, &tx)).abs()
            };
            let ratio = err(0.01) / err(0.005);
            assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
        }
    }

    #[test]
    fn rm_image_reduces_to_los() {
        let (rx, tx) = (Vec3::new(1.0, 2.0, 3.0), Vec3::new(-4.0, 0.5, 1.0));
        assert_eq!(rm_distance_image(&rx, &tx, &RmImage::los()), los_distance(&rx, &tx));
    }

    #[test]
    fn rm_image_ground_bounce() {
        let img = RmImage {
            u: Mat3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0)),
            g: Vec3::zeros(),
        };
        let d = rm_distance_image(&Vec3::new(4.0, 0.0, 1.0), &Vec3::new(0.0, 0.0, 1.0), &img);
        // unfolded (0,0,1)->(2,0,0)->(4,0,1)
        let route = 2.0 * (4.0f64 + 1.0).sqrt();
        assert!((d - route).abs() < 1e-12);
        assert_abs_diff_eq!(d, 20f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn rm_image_parallel_mirrors() {
        // x = 0 then x = W: two reflections compose to a translation by 2W e_x
        let w = 5.0;
        let img = RmImage {
            u: Mat3::identity(),
            g: 2.0 * w * Vec3::x(),
        };
        let tx = Vec3::new(1.0, 0.0, 0.0);
        let rx = Vec3::new(2.0, 6.0, 0.0);
        // reflect off x=0 at p1, then off x=W at p2; unfolded length via images
        let z1 = Vec3::new(-1.0, 0.0, 0.0);
        let z2 = Vec3::new(2.0 * w + 1.0, 0.0, 0.0);
        // intersect rx -> z2 with x = W
        let t2 = (w - rx.x) / (z2.x - rx.x);
        let q2 = rx + t2 * (z2 - rx);
        // mirror the line back: q2 -> z1 intersects x = 0
        let t1 = (0.0 - q2.x) / (z1.x - q2.x);
        let q1 = q2 + t1 * (z1 - q2);
        let route = (q1 - tx).norm() + (q2 - q1).norm() + (rx - q2).norm();
        assert!((rm_distance_image(&rx, &tx, &img) - route).abs() < 1e-12);
    }

    #[test]
    fn los_image_to_angles() {
        let reference = ReferencePair::new(Vec3::zeros(), Vec3::new(100.0, 0.0, 0.0)).unwrap();
        let p = image_to_angles(&RmImage::los(), &reference).unwrap();
        assert_abs_diff_eq!(p.delay, 100.0 / SPEED_OF_LIGHT, epsilon = 1e-20);
        assert_eq!(p.aoa_az, PI);
        assert_eq!(p.aoa_el, 0.0);
        assert_eq!(p.s, Sign::Minus);
        assert_abs_diff_eq!(p.roll, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.aod_el, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.aod_az, 0.0, epsilon = 1e-15);

        let back = angles_to_image(&p, &reference);
        assert!((back.u - Mat3::identity()).abs().max() < 1e-9);
        assert!(back.g.norm() < 1e-9);
    }

    #[test]
    fn ground_bounce_image_to_angles() {
        let reference =
            ReferencePair::new(Vec3::new(0.0, 0.0, 1.0), Vec3::new(4.0, 0.0, 1.0)).unwrap();
        let img = RmImage {
            u: Mat3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0)),
            g: Vec3::zeros(),
        };
        let p = image_to_angles(&img, &reference).unwrap();
        assert_eq!(p.s, Sign::Plus);
        assert_abs_diff_eq!(p.delay * SPEED_OF_LIGHT, 20f64.sqrt(), epsilon = 1e-12);
        // departs downward toward the ground
        assert_abs_diff_eq!(p.aod_el, -(0.5f64).atan(), epsilon = 1e-12);
        let back = angles_to_image(&p, &reference);
        assert!((back.u - img.u).abs().max() < 1e-9);
        assert!((back.g - img.g).norm() < 1e-9);
    }

    #[test]
    fn degenerate_image_rejected() {
        let reference = ReferencePair::new(Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0)).unwrap();
        let img = RmImage {
            u: Mat3::identity(),
            g: Vec3::new(1.0, 0.0, 0.0),
        };
        assert!(matches!(image_to_angles(&img, &reference), Err(Error::ZeroLengthPath)));
    }

    #[test]
    fn angle_form_matches_image_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for bounces in 0..4 {
            for _ in 0..25 {
                let img = random_image(&mut rng, bounces);
                let reference =
                    ReferencePair::new(rand_vec(&mut rng, 10.0), rand_vec(&mut rng, 10.0)).unwrap();
                let p = image_to_angles(&img, &reference).unwrap();
                for _ in 0..40 {
                    let rx = reference.rx + rand_vec(&mut rng, 2.0);
                    let tx = reference.tx + rand_vec(&mut rng, 2.0);
                    let exact = rm_distance_image(&rx, &tx, &img);
                    let angles = rm_distance_angles(&rx, &tx, &reference, &p);
                    assert!((exact - angles).abs() <= 1e-9 * exact, "{exact} vs {angles}");
                }
                // fixed point of the round trip
                let back = angles_to_image(&p, &reference);
                assert!((back.u - img.u).abs().max() < 1e-9);
                assert!((back.g - img.g).norm() < 1e-9 * (1.0 + img.g.norm()));
            }
        }
    }

    #[test]
    fn reflection_sign_follows_determinant() {
        // det W = −det U, and det U = (−1)^bounces
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for bounces in 0..4 {
            let img = random_image(&mut rng, bounces);
            let reference =
                ReferencePair::new(rand_vec(&mut rng, 5.0), rand_vec(&mut rng, 5.0) + Vec3::x() * 20.0)
                    .unwrap();
            let p = image_to_angles(&img, &reference).unwrap();
            let expected = if bounces % 2 == 0 { Sign::Minus } else { Sign::Plus };
            assert_eq!(p.s, expected, "bounces {bounces}");
        }
    }

    #[test]
    fn gradient_property_of_angle_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let h = 1e-6;
        for bounces in 0..4 {
            let img = random_image(&mut rng, bounces);
            let reference =
                ReferencePair::new(rand_vec(&mut rng, 5.0), rand_vec(&mut rng, 5.0)).unwrap();
            let p = image_to_angles(&img, &reference).unwrap();
            let (ur, ut) = (p.pwa().arrival_dir(), p.pwa().departure_dir());
            for k in 0..3 {
                let e = Vec3::ith(k, h);
                let grx = (rm_distance_angles(&(reference.rx + e), &reference.tx, &reference, &p)
                    - rm_distance_angles(&(reference.rx - e), &reference.tx, &reference, &p))
                    / (2.0 * h);
                let gtx = (rm_distance_angles(&reference.rx, &(reference.tx + e), &reference, &p)
                    - rm_distance_angles(&reference.rx, &(reference.tx - e), &reference, &p))
                    / (2.0 * h);
                assert!((grx + ur[k]).abs() < 1e-5);
                assert!((gtx + ut[k]).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn los_angles_shift() {
        let reference = ReferencePair::new(Vec3::zeros(), Vec3::new(100.0, 0.0, 0.0)).unwrap();
        let p = image_to_angles(&RmImage::los(), &reference).unwrap();
        let rx = reference.rx + Vec3::x();
        let d = rm_distance_angles(&rx, &reference.tx, &reference, &p);
        // moving the receiver 1 m further away lengthens the path
        assert!((d - 101.0).abs() < 1e-12);
        assert!((los_distance(&rx, &reference.tx) - d).abs() < 1e-12);
        // moving along the arrival direction (toward the TX) shortens it
        let rx = reference.rx + p.pwa().arrival_dir();
        let d = rm_distance_angles(&rx, &reference.tx, &reference, &p);
        assert!((d - 99.0).abs() < 1e-12);
    }
}
