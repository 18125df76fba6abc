//! End-to-end runs through the public API: scene file to traced paths, both
//! fits, file round trips and channel prediction at displaced positions.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitSphere};
use tempfile::TempDir;

use rmchannel::channel::{scalar_channel, Tap};
use rmchannel::dp_fit::{fit_rm_dp, MatchConfig, PairObservation};
use rmchannel::experiments::true_taps;
use rmchannel::io::{read_json, read_rm, read_scene, write_json, PathFile, RmFile, SceneFile};
use rmchannel::pathmodel::rm_distance_angles;
use rmchannel::rt_fit::fit_rm_rt;
use rmchannel::tracer::{trace_paths, Facet, Scene};
use rmchannel::{ReferencePair, RmPath, Vec3};

fn street() -> Scene {
    let facets = vec![
        Facet::infinite(Vec3::zeros(), Vec3::z(), false).unwrap(),
        Facet::rectangle(Vec3::new(20.0, 8.0, 6.0), Vec3::x(), Vec3::z(), 80.0, 12.0, false).unwrap(),
        Facet::rectangle(Vec3::new(20.0, -7.0, 6.0), Vec3::z(), Vec3::x(), 12.0, 80.0, false).unwrap(),
    ];
    Scene::new(facets, 140e9, 3.0).unwrap()
}

fn unit(rng: &mut ChaCha8Rng) -> Vec3 {
    Vec3::from(UnitSphere.sample(rng))
}

fn rm_taps(paths: &[RmPath], reference: &ReferencePair, tx: &Vec3, rx: &Vec3) -> Vec<Tap> {
    paths
        .iter()
        .map(|p| Tap {
            gain: p.gain,
            ref_delay: p.delay,
            distance: rm_distance_angles(rx, tx, reference, p),
        })
        .collect()
}

#[test]
fn scene_file_to_prediction() {
    let dir = TempDir::new().unwrap();
    let scene_path = dir.path().join("scene.json");
    write_json(&scene_path, &SceneFile::from(&street())).unwrap();
    let scene = read_scene(&scene_path).unwrap();
    assert_eq!(scene.facets.len(), 3);

    let reference = ReferencePair::new(Vec3::new(0.0, 1.0, 3.0), Vec3::new(40.0, -2.0, 1.5)).unwrap();
    let traced = trace_paths(&scene, &reference.tx, &reference.rx, 2).unwrap();
    assert!(traced.len() >= 4, "{} paths", traced.len());

    let path_file = dir.path().join("paths.json");
    write_json(&path_file, &PathFile::from_traced(&reference, scene.carrier_freq, &traced).unwrap()).unwrap();
    let loaded: PathFile = read_json(&path_file).unwrap();
    let fitted: Vec<RmPath> = loaded
        .paths
        .iter()
        .map(|rec| fit_rm_rt(&rec.traced().unwrap(), &reference).unwrap().0)
        .collect();

    let rm_file = dir.path().join("rm.json");
    write_json(&rm_file, &RmFile::new(&reference, scene.carrier_freq, &fitted)).unwrap();
    let paths = read_rm(&rm_file).unwrap().paths();

    // small moves keep every path alive, so the sum matches the re-trace up
    // to the Friis amplitude change
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let tx = reference.tx + 0.05 * unit(&mut rng);
        let rx = reference.rx + 0.05 * unit(&mut rng);
        let f = scene.carrier_freq + rng.gen_range(-1e9..1e9);
        let truth = true_taps(&scene, &tx, &rx, 2).unwrap();
        assert_eq!(truth.len(), paths.len());
        let h = scalar_channel(&truth, f, scene.carrier_freq);
        let est = scalar_channel(&rm_taps(&paths, &reference, &tx, &rx), f, scene.carrier_freq);
        let e0: f64 = paths.iter().map(|p| p.gain.norm()).sum::<f64>().powi(2);
        assert!((est - h).norm_sqr() / e0 < 1e-6, "{est} vs {h}");
    }
}

#[test]
fn displaced_fit_matches_route_fit_through_files() {
    let dir = TempDir::new().unwrap();
    let scene = street();
    let reference = ReferencePair::new(Vec3::new(0.0, 1.0, 3.0), Vec3::new(40.0, -2.0, 1.5)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);

    let mut observations = Vec::new();
    for (i, step) in [0.0, 0.01, 0.02, 0.03].iter().enumerate() {
        let tx = reference.tx + *step * unit(&mut rng);
        let rx = reference.rx + *step * unit(&mut rng);
        let pair = ReferencePair::new(tx, rx).unwrap();
        let traced = trace_paths(&scene, &tx, &rx, 2).unwrap();
        let file = dir.path().join(format!("pair{i}.json"));
        write_json(&file, &PathFile::from_traced(&pair, scene.carrier_freq, &traced).unwrap()).unwrap();
        observations.push(read_json::<PathFile>(&file).unwrap().observation());
    }
    let dp = fit_rm_dp(&observations[0], &observations[1..], &MatchConfig::default()).unwrap();
    let rt: Vec<RmPath> = trace_paths(&scene, &reference.tx, &reference.rx, 2)
        .unwrap()
        .iter()
        .map(|p| fit_rm_rt(p, &reference).unwrap().0)
        .collect();
    assert_eq!(dp.len(), rt.len());
    for (d, r) in dp.iter().zip(&rt) {
        assert!(d.solution.is_solved());
        assert_eq!(d.path.s, r.s);
        // both fits must extrapolate to the same distance a metre away
        let tx = reference.tx + Vec3::new(0.3, -0.6, 0.2);
        let rx = reference.rx + Vec3::new(-0.5, 0.4, 0.7);
        let a = rm_distance_angles(&rx, &tx, &reference, &d.path);
        let b = rm_distance_angles(&rx, &tx, &reference, r);
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }
}

#[test]
fn observation_of_a_displaced_pair_is_self_consistent() {
    let scene = street();
    let obs = PairObservation::trace(&scene, Vec3::new(1.0, 0.0, 2.0), Vec3::new(30.0, 1.0, 2.5), 2).unwrap();
    let order = obs.strength_order();
    let gains: Vec<f64> = order.iter().map(|&i| obs.paths[i].gain.norm()).collect();
    assert!(gains.windows(2).all(|w| w[0] >= w[1]));
    let total: Complex64 = obs.paths.iter().map(|p| p.gain).sum();
    assert!(total.norm() > 0.0);
}
