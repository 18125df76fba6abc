//! File formats: scene JSON, per-path export JSON, RM parameter JSON and the
//! experiment CSVs. Angles are degrees in files and radians everywhere else.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::{CapacityRow, ErrorRecord};
use crate::geom::{Mat3, Sign, Vec3};
use crate::pathmodel::{angles_to_image, rm_distance_angles, rm_distance_image, PwaPath, ReferencePair, RmImage, RmPath};
use crate::tracer::{route_length, Facet, Route, Scene, TracedPath};

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn arr(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

fn vec3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

fn gain_db_phase(g: Complex64) -> (f64, f64) {
    (20.0 * g.norm().log10(), g.arg().to_degrees())
}

fn gain_from(db: f64, phase_deg: f64) -> Complex64 {
    Complex64::from_polar(10f64.powf(db / 20.0), phase_deg.to_radians())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FacetFile {
    pub center: [f64; 3],
    pub axis_u: [f64; 3],
    pub axis_v: [f64; 3],
    pub half_u: Option<f64>,
    pub half_v: Option<f64>,
    pub two_sided: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFile {
    pub carrier_hz: f64,
    pub reflection_loss_db: f64,
    pub facets: Vec<FacetFile>,
}

impl From<&Scene> for SceneFile {
    fn from(s: &Scene) -> Self {
        Self {
            carrier_hz: s.carrier_freq,
            reflection_loss_db: s.reflection_loss_db,
            facets: s
                .facets
                .iter()
                .map(|f| FacetFile {
                    center: arr(&f.center),
                    axis_u: arr(&f.axis_u),
                    axis_v: arr(&f.axis_v),
                    half_u: f.half_u,
                    half_v: f.half_v,
                    two_sided: f.two_sided,
                })
                .collect(),
        }
    }
}

impl TryFrom<SceneFile> for Scene {
    type Error = Error;

    fn try_from(file: SceneFile) -> Result<Self> {
        let facets = file
            .facets
            .iter()
            .enumerate()
            .map(|(i, f)| {
                Facet::new(vec3(f.center), vec3(f.axis_u), vec3(f.axis_v), f.half_u, f.half_v, f.two_sided)
                    .map_err(|e| match e {
                        Error::InvalidFacet { reason, .. } => Error::InvalidFacet { index: i, reason },
                        other => other,
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        Scene::new(facets, file.carrier_hz, file.reflection_loss_db)
    }
}

pub fn read_scene(path: impl AsRef<Path>) -> Result<Scene> {
    read_json::<SceneFile>(path)?.try_into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub gain_db: f64,
    pub phase_deg: f64,
    pub delay_s: f64,
    pub aoa_az_deg: f64,
    pub aoa_el_deg: f64,
    pub aod_az_deg: f64,
    pub aod_el_deg: f64,
    /// Interaction points from TX to RX; empty when unknown.
    #[serde(default)]
    pub route: Vec<[f64; 3]>,
}

impl PathRecord {
    pub fn new(p: &PwaPath, route: Option<&Route>) -> Self {
        let (gain_db, phase_deg) = gain_db_phase(p.gain);
        Self {
            gain_db,
            phase_deg,
            delay_s: p.delay,
            aoa_az_deg: p.aoa_az.to_degrees(),
            aoa_el_deg: p.aoa_el.to_degrees(),
            aod_az_deg: p.aod_az.to_degrees(),
            aod_el_deg: p.aod_el.to_degrees(),
            route: route.map_or_else(Vec::new, |r| r.vertices.iter().map(arr).collect()),
        }
    }

    pub fn pwa(&self) -> PwaPath {
        PwaPath {
            gain: gain_from(self.gain_db, self.phase_deg),
            delay: self.delay_s,
            aoa_az: self.aoa_az_deg.to_radians(),
            aoa_el: self.aoa_el_deg.to_radians(),
            aod_az: self.aod_az_deg.to_radians(),
            aod_el: self.aod_el_deg.to_radians(),
        }
    }

    /// The traced path, if the record carries its route.
    pub fn traced(&self) -> Result<TracedPath> {
        let route = Route::from_points(self.route.iter().copied().map(vec3).collect())?;
        Ok(TracedPath {
            gain: gain_from(self.gain_db, self.phase_deg),
            delay: self.delay_s,
            route,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathFile {
    pub tx: [f64; 3],
    pub rx: [f64; 3],
    pub f0_hz: f64,
    pub paths: Vec<PathRecord>,
}

impl PathFile {
    pub fn from_traced(reference: &ReferencePair, f0: f64, paths: &[TracedPath]) -> Result<Self> {
        let paths = paths
            .iter()
            .map(|p| Ok(PathRecord::new(&crate::tracer::to_pwa(p, reference)?, Some(&p.route))))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            tx: arr(&reference.tx),
            rx: arr(&reference.rx),
            f0_hz: f0,
            paths,
        })
    }

    pub fn reference(&self) -> Result<ReferencePair> {
        ReferencePair::new(vec3(self.tx), vec3(self.rx))
    }

    pub fn observation(&self) -> crate::dp_fit::PairObservation {
        crate::dp_fit::PairObservation {
            tx: vec3(self.tx),
            rx: vec3(self.rx),
            paths: self.paths.iter().map(PathRecord::pwa).collect(),
        }
    }

    /// Route lengths, for checking exports against their delays.
    pub fn route_lengths(&self) -> Result<Vec<f64>> {
        self.paths.iter().map(|p| Ok(route_length(&p.traced()?.route))).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmRecord {
    pub tau_s: f64,
    pub aoa_az_deg: f64,
    pub aoa_el_deg: f64,
    pub aod_az_deg: f64,
    pub aod_el_deg: f64,
    pub roll_deg: f64,
    pub s: Sign,
    #[serde(rename = "U")]
    pub u: [[f64; 3]; 3],
    pub g: [f64; 3],
    pub gain_db: f64,
    pub phase_deg: f64,
    /// Set when the displaced-pair fit flagged the path.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<String>,
}

impl RmRecord {
    pub fn new(p: &RmPath, reference: &ReferencePair) -> Self {
        let img = angles_to_image(p, reference);
        let (gain_db, phase_deg) = gain_db_phase(p.gain);
        Self {
            tau_s: p.delay,
            aoa_az_deg: p.aoa_az.to_degrees(),
            aoa_el_deg: p.aoa_el.to_degrees(),
            aod_az_deg: p.aod_az.to_degrees(),
            aod_el_deg: p.aod_el.to_degrees(),
            roll_deg: p.roll.to_degrees(),
            s: p.s,
            u: [0, 1, 2].map(|i| [0, 1, 2].map(|j| img.u[(i, j)])),
            g: arr(&img.g),
            gain_db,
            phase_deg,
            status: None,
        }
    }

    pub fn path(&self) -> RmPath {
        RmPath {
            gain: gain_from(self.gain_db, self.phase_deg),
            delay: self.tau_s,
            aoa_az: self.aoa_az_deg.to_radians(),
            aoa_el: self.aoa_el_deg.to_radians(),
            aod_az: self.aod_az_deg.to_radians(),
            aod_el: self.aod_el_deg.to_radians(),
            roll: self.roll_deg.to_radians(),
            s: self.s,
        }
    }

    pub fn image(&self) -> RmImage {
        RmImage {
            u: Mat3::from_fn(|i, j| self.u[i][j]),
            g: vec3(self.g),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmFile {
    pub tx: [f64; 3],
    pub rx: [f64; 3],
    pub f0_hz: f64,
    pub paths: Vec<RmRecord>,
}

impl RmFile {
    pub fn new(reference: &ReferencePair, f0: f64, paths: &[RmPath]) -> Self {
        Self {
            tx: arr(&reference.tx),
            rx: arr(&reference.rx),
            f0_hz: f0,
            paths: paths.iter().map(|p| RmRecord::new(p, reference)).collect(),
        }
    }

    pub fn reference(&self) -> Result<ReferencePair> {
        ReferencePair::new(vec3(self.tx), vec3(self.rx))
    }

    pub fn paths(&self) -> Vec<RmPath> {
        self.paths.iter().map(RmRecord::path).collect()
    }

    /// Both stored parametrizations must give the same distance, to 1e-9
    /// relative, at ten seeded probe pairs within 1 m of the reference.
    pub fn check_consistency(&self) -> Result<()> {
        let reference = self.reference()?;
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let probes: Vec<(Vec3, Vec3)> = (0..10)
            .map(|_| {
                let mut v = || Vec3::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5));
                (reference.tx + v(), reference.rx + v())
            })
            .collect();
        for (i, rec) in self.paths.iter().enumerate() {
            let (path, image) = (rec.path(), rec.image());
            for (tx, rx) in &probes {
                let a = rm_distance_angles(rx, tx, &reference, &path);
                let b = rm_distance_image(rx, tx, &image);
                if (a - b).abs() > 1e-9 * a.abs().max(b.abs()) {
                    return Err(Error::Inconsistent(format!(
                        "path {i}: angle form gives {a} m, image form {b} m"
                    )));
                }
            }
        }
        Ok(())
    }
}

pub fn read_rm(path: impl AsRef<Path>) -> Result<RmFile> {
    let file: RmFile = read_json(path)?;
    file.check_consistency()?;
    Ok(file)
}

#[derive(Serialize)]
struct ErrorRow<'a> {
    model: &'a str,
    distance_m: f64,
    freq_hz: f64,
    epsilon: f64,
}

pub fn write_errors_csv<W: Write>(w: W, records: &[ErrorRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in records {
        out.serialize(ErrorRow {
            model: r.model.name(),
            distance_m: r.distance,
            freq_hz: r.frequency,
            epsilon: r.epsilon,
        })?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct CapacityCsvRow<'a> {
    rotation_deg: f64,
    model: &'a str,
    se_center_bpshz: f64,
    se_avg_bpshz: f64,
    rank_used: usize,
}

pub fn write_capacity_csv<W: Write>(w: W, rows: &[CapacityRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(CapacityCsvRow {
            rotation_deg: r.rotation_deg,
            model: r.model.name(),
            se_center_bpshz: r.se_center,
            se_avg_bpshz: r.se_avg,
            rank_used: r.rank_used,
        })?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::{CapacityModel, Estimator};
    use crate::rt_fit::fit_rm_rt;
    use crate::tracer::trace_paths;

    fn scene() -> Scene {
        let facets = vec![
            Facet::infinite(Vec3::zeros(), Vec3::z(), false).unwrap(),
            Facet::rectangle(
                Vec3::new(30.0, 12.0, 3.0),
                Vec3::x(),
                Vec3::z(),
                40.0,
                6.0,
                true,
            )
            .unwrap(),
        ];
        Scene::new(facets, 140e9, 3.0).unwrap()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()))
    }

    #[test]
    fn scene_round_trip() {
        let s = scene();
        let text = serde_json::to_string(&SceneFile::from(&s)).unwrap();
        assert!(text.contains("\"half_u\":null"));
        let back: Scene = serde_json::from_str::<SceneFile>(&text).unwrap().try_into().unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn bad_facet_reports_index() {
        let mut f = SceneFile::from(&scene());
        f.facets[1].axis_u = [1.0, 1.0, 0.0];
        let err = Scene::try_from(f).unwrap_err();
        assert!(matches!(err, Error::InvalidFacet { index: 1, .. }));
    }

    #[test]
    fn path_export_round_trip() {
        let s = scene();
        let reference = ReferencePair::new(Vec3::new(0.0, 0.0, 2.0), Vec3::new(50.0, 1.0, 1.5)).unwrap();
        let traced = trace_paths(&s, &reference.tx, &reference.rx, 2).unwrap();
        let file = PathFile::from_traced(&reference, 140e9, &traced).unwrap();
        let back: PathFile = serde_json::from_str(&serde_json::to_string(&file).unwrap()).unwrap();
        assert_eq!(back, file);
        for (rec, t) in back.paths.iter().zip(&traced) {
            let p = rec.traced().unwrap();
            assert!((p.gain - t.gain).norm() <= 1e-12 * t.gain.norm());
            assert_eq!(p.delay, t.delay);
            assert_eq!(p.route.vertices, t.route.vertices);
        }
        for (len, t) in back.route_lengths().unwrap().iter().zip(&traced) {
            assert!(close(*len, t.length()));
        }
    }

    #[test]
    fn rm_round_trip_and_consistency() {
        let s = scene();
        let reference = ReferencePair::new(Vec3::new(0.0, 0.0, 2.0), Vec3::new(50.0, 1.0, 1.5)).unwrap();
        let rm: Vec<RmPath> = trace_paths(&s, &reference.tx, &reference.rx, 2)
            .unwrap()
            .iter()
            .map(|p| fit_rm_rt(p, &reference).unwrap().0)
            .collect();
        let file = RmFile::new(&reference, 140e9, &rm);
        let text = serde_json::to_string(&file).unwrap();
        assert!(text.contains("\"U\":") && text.contains("\"s\":-1"));
        let back: RmFile = serde_json::from_str(&text).unwrap();
        back.check_consistency().unwrap();
        for (a, b) in back.paths().iter().zip(&rm) {
            assert_eq!(a.s, b.s);
            for (x, y) in [
                (a.delay, b.delay),
                (a.aoa_az, b.aoa_az),
                (a.aoa_el, b.aoa_el),
                (a.aod_az, b.aod_az),
                (a.aod_el, b.aod_el),
                (a.roll, b.roll),
                (a.gain.re, b.gain.re),
                (a.gain.im, b.gain.im),
            ] {
                assert!(close(x, y), "{x} {y}");
            }
        }

        let mut broken = back.clone();
        broken.paths[0].g[0] += 0.01;
        assert!(matches!(broken.check_consistency(), Err(Error::Inconsistent(_))));
        let mut bad_sign = text.clone();
        bad_sign = bad_sign.replacen("\"s\":-1", "\"s\":0", 1);
        assert!(serde_json::from_str::<RmFile>(&bad_sign).is_err());
    }

    #[test]
    fn csv_headers() {
        let mut buf = Vec::new();
        write_errors_csv(
            &mut buf,
            &[ErrorRecord {
                model: Estimator::RmDp,
                distance: 0.5,
                frequency: 140e9,
                epsilon: 1e-7,
                pair: 0,
            }],
        )
        .unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("model,distance_m,freq_hz,epsilon"));
        assert!(text.lines().nth(1).unwrap().starts_with("rm_dp,0.5,"));

        let mut buf = Vec::new();
        write_capacity_csv(
            &mut buf,
            &[CapacityRow {
                rotation_deg: -15.0,
                model: CapacityModel::RmImage,
                se_center: 3.0,
                se_avg: 2.9,
                rank_used: 4,
            }],
        )
        .unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text.lines().next(),
            Some("rotation_deg,model,se_center_bpshz,se_avg_bpshz,rank_used")
        );
        assert_eq!(text.lines().nth(1), Some("-15.0,rm_image,3.0,2.9,4"));
    }
}
