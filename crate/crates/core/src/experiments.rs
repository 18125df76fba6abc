//! Displacement-error and capacity-vs-rotation experiments comparing the
//! constant, PWA and RM estimators against re-traced ground truth.
//!
//! Random draws happen sequentially up front and every parallel stage
//! collects in index order, so results depend only on the seed.

use log::{info, warn};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitSphere};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::capacity::{band_rate, singular_values, spectral_efficiency, LinkBudget, RateModel};
use crate::channel::{build_taps, scalar_channel, ArrayGeometry, ChannelContext, ChannelModel, ExhaustiveGains, Tap};
use crate::dp_fit::{fit_rm_dp, DpPath, MatchConfig, PairObservation};
use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::pathmodel::{pwa_distance, rm_distance_angles, ReferencePair, RmPath, SPEED_OF_LIGHT};
use crate::rt_fit::fit_rm_rt;
use crate::tracer::{trace_paths, Scene};

fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
    Vec3::from(UnitSphere.sample(rng))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DisplacementSpec {
    /// Displacement magnitudes, m, ascending.
    pub distances: Vec<f64>,
    /// Random direction pairs per distance.
    pub directions: usize,
    pub rng_seed: u64,
}

impl Default for DisplacementSpec {
    fn default() -> Self {
        Self {
            distances: vec![0.01, 0.02, 0.05, 0.10, 0.50, 1.00],
            directions: 100,
            rng_seed: 1,
        }
    }
}

impl DisplacementSpec {
    pub fn validate(&self) -> Result<()> {
        if self.distances.is_empty() || self.directions == 0 {
            return Err(Error::InvalidArgument("need at least one distance and one direction".into()));
        }
        if self.distances.iter().any(|d| !(*d > 0.0)) || self.distances.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidArgument("distances must be positive and ascending".into()));
        }
        Ok(())
    }
}

/// A TX-RX pair displaced from the reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisplacedPair {
    pub distance: f64,
    pub tx: Vec3,
    pub rx: Vec3,
}

/// TX and RX each moved by the same distance in independent random directions.
pub fn displaced_pairs(reference: &ReferencePair, spec: &DisplacementSpec, rng: &mut ChaCha8Rng) -> Vec<DisplacedPair> {
    let mut out = Vec::with_capacity(spec.distances.len() * spec.directions);
    for &d in &spec.distances {
        for _ in 0..spec.directions {
            let tx = reference.tx + d * random_unit(rng);
            let rx = reference.rx + d * random_unit(rng);
            out.push(DisplacedPair { distance: d, tx, rx });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Constant,
    Pwa,
    RmRt,
    RmDp,
}

impl Estimator {
    pub const ALL: [Estimator; 4] = [Estimator::Constant, Estimator::Pwa, Estimator::RmRt, Estimator::RmDp];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::Constant => "constant",
            Estimator::Pwa => "pwa",
            Estimator::RmRt => "rm_rt",
            Estimator::RmDp => "rm_dp",
        }
    }
}

/// Estimators fitted at a reference pair.
#[derive(Debug, Clone)]
pub struct FittedModels {
    pub reference: ReferencePair,
    /// RM-RT fit; also supplies the PWA and constant parameters.
    pub rt: Vec<RmPath>,
    /// RM-DP fit, in the same (strongest-first) order.
    pub dp: Vec<DpPath>,
}

impl FittedModels {
    /// Traces the reference pair once and each DP pair once.
    pub fn fit(scene: &Scene, reference: &ReferencePair, dp_pairs: &[(Vec3, Vec3)], max_bounces: usize) -> Result<Self> {
        let traced = trace_paths(scene, &reference.tx, &reference.rx, max_bounces)?;
        if traced.is_empty() {
            return Err(Error::NoPaths);
        }
        let rt = traced
            .iter()
            .map(|p| Ok(fit_rm_rt(p, reference)?.0))
            .collect::<Result<Vec<_>>>()?;
        let ref_obs = PairObservation {
            tx: reference.tx,
            rx: reference.rx,
            paths: rt.iter().map(RmPath::pwa).collect(),
        };
        let disp = dp_pairs
            .iter()
            .map(|(t, r)| PairObservation::trace(scene, *t, *r, max_bounces))
            .collect::<Result<Vec<_>>>()?;
        let dp = fit_rm_dp(&ref_obs, &disp, &MatchConfig::default())?;
        let flagged = dp.iter().filter(|p| !p.solution.is_solved()).count();
        if flagged > 0 {
            warn!("{flagged} of {} paths flagged by the displaced-pair fit", dp.len());
        }
        Ok(Self {
            reference: *reference,
            rt,
            dp,
        })
    }

    pub fn dp_paths(&self) -> Vec<RmPath> {
        self.dp.iter().map(|p| p.path).collect()
    }

    /// Extrapolated distance of path `l` between `tx` and `rx`.
    pub fn distance(&self, est: Estimator, l: usize, tx: &Vec3, rx: &Vec3) -> f64 {
        let p = &self.rt[l];
        match est {
            Estimator::Constant => SPEED_OF_LIGHT * p.delay,
            Estimator::Pwa => pwa_distance(rx, tx, &self.reference, &p.pwa()),
            Estimator::RmRt => rm_distance_angles(rx, tx, &self.reference, p),
            Estimator::RmDp => rm_distance_angles(rx, tx, &self.reference, &self.dp[l].path),
        }
    }

    pub fn taps(&self, est: Estimator, tx: &Vec3, rx: &Vec3) -> Vec<Tap> {
        self.rt
            .iter()
            .enumerate()
            .map(|(l, p)| Tap {
                gain: p.gain,
                ref_delay: p.delay,
                distance: self.distance(est, l, tx, rx),
            })
            .collect()
    }

    /// `E₀ = Σ|g_ℓ0|²`.
    pub fn reference_energy(&self) -> f64 {
        self.rt.iter().map(|p| p.gain.norm_sqr()).sum()
    }
}

/// True response taps at a pair: every re-traced path with its own gain and delay.
pub fn true_taps(scene: &Scene, tx: &Vec3, rx: &Vec3, max_bounces: usize) -> Result<Vec<Tap>> {
    Ok(trace_paths(scene, tx, rx, max_bounces)?
        .into_iter()
        .map(|p| Tap {
            gain: p.gain,
            ref_delay: p.delay,
            distance: p.length(),
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub model: Estimator,
    pub distance: f64,
    pub frequency: f64,
    pub epsilon: f64,
    /// Index of the displaced pair.
    pub pair: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DisplacementConfig {
    pub spec: DisplacementSpec,
    pub bandwidth_hz: f64,
    pub n_freq: usize,
    pub max_bounces: usize,
    pub models: Vec<Estimator>,
}

impl Default for DisplacementConfig {
    fn default() -> Self {
        Self {
            spec: DisplacementSpec::default(),
            bandwidth_hz: 2e9,
            n_freq: 10,
            max_bounces: 2,
            models: Estimator::ALL.to_vec(),
        }
    }
}

/// `ε = |Ĥ − H|² / E₀` at each frequency for each model and displaced pair.
pub fn evaluate_errors(
    scene: &Scene,
    fitted: &FittedModels,
    pairs: &[DisplacedPair],
    frequencies: &[Vec<f64>],
    models: &[Estimator],
    max_bounces: usize,
) -> Result<Vec<ErrorRecord>> {
    let e0 = fitted.reference_energy();
    if !(e0 > 0.0) {
        return Err(Error::ZeroEnergy);
    }
    if frequencies.len() != pairs.len() {
        return Err(Error::InvalidArgument("one frequency list per displaced pair".into()));
    }
    let f0 = scene.carrier_freq;
    let per_pair = pairs
        .par_iter()
        .enumerate()
        .map(|(i, pair)| {
            let truth = true_taps(scene, &pair.tx, &pair.rx, max_bounces)?;
            let mut out = Vec::with_capacity(models.len() * frequencies[i].len());
            for &model in models {
                let est = fitted.taps(model, &pair.tx, &pair.rx);
                for &f in &frequencies[i] {
                    let diff: Complex64 = scalar_channel(&est, f, f0) - scalar_channel(&truth, f, f0);
                    out.push(ErrorRecord {
                        model,
                        distance: pair.distance,
                        frequency: f,
                        epsilon: diff.norm_sqr() / e0,
                        pair: i,
                    });
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_pair.into_iter().flatten().collect())
}

#[derive(Debug, Clone)]
pub struct DisplacementResult {
    pub records: Vec<ErrorRecord>,
    pub fitted: FittedModels,
    pub pairs: Vec<DisplacedPair>,
}

/// The full experiment: fit every estimator at the reference (RM-DP from the
/// two displaced pairs closest to it), then score each displaced pair at
/// seeded random in-band frequencies.
pub fn displacement_experiment(scene: &Scene, reference: &ReferencePair, cfg: &DisplacementConfig) -> Result<DisplacementResult> {
    cfg.spec.validate()?;
    if cfg.n_freq == 0 || !(cfg.bandwidth_hz > 0.0) {
        return Err(Error::InvalidArgument("need n_freq >= 1 and a positive bandwidth".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.spec.rng_seed);
    let pairs = displaced_pairs(reference, &cfg.spec, &mut rng);
    if pairs.len() < 2 {
        return Err(Error::TooFewDisplacedPairs(pairs.len()));
    }
    let f0 = scene.carrier_freq;
    let half = cfg.bandwidth_hz / 2.0;
    let frequencies: Vec<Vec<f64>> = pairs
        .iter()
        .map(|_| (0..cfg.n_freq).map(|_| rng.gen_range(f0 - half..f0 + half)).collect())
        .collect();

    // pairs are generated in ascending distance, so the first two are closest
    let dp_pairs: Vec<(Vec3, Vec3)> = pairs[..2].iter().map(|p| (p.tx, p.rx)).collect();
    let fitted = FittedModels::fit(scene, reference, &dp_pairs, cfg.max_bounces)?;
    let records = evaluate_errors(scene, &fitted, &pairs, &frequencies, &cfg.models, cfg.max_bounces)?;
    info!("displacement experiment: {} pairs, {} records", pairs.len(), records.len());
    Ok(DisplacementResult { records, fitted, pairs })
}

/// Median `ε` per `(model, distance)`, in first-seen order.
pub fn median_errors(records: &[ErrorRecord]) -> Vec<(Estimator, f64, f64)> {
    let mut keys: Vec<(Estimator, f64)> = Vec::new();
    for r in records {
        if !keys.iter().any(|k| k.0 == r.model && k.1 == r.distance) {
            keys.push((r.model, r.distance));
        }
    }
    keys.into_iter()
        .map(|(m, d)| {
            let mut v: Vec<f64> = records
                .iter()
                .filter(|r| r.model == m && r.distance == d)
                .map(|r| r.epsilon)
                .collect();
            (m, d, median(&mut v))
        })
        .collect()
}

pub fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CapacityModel {
    Exhaustive,
    Constant,
    Pwa,
    RmImage,
    RmAngles,
    RmDp,
}

impl CapacityModel {
    pub const ALL: [CapacityModel; 6] = [
        CapacityModel::Exhaustive,
        CapacityModel::Constant,
        CapacityModel::Pwa,
        CapacityModel::RmImage,
        CapacityModel::RmAngles,
        CapacityModel::RmDp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CapacityModel::Exhaustive => "exhaustive",
            CapacityModel::Constant => "constant",
            CapacityModel::Pwa => "pwa",
            CapacityModel::RmImage => "rm_image",
            CapacityModel::RmAngles => "rm_angles",
            CapacityModel::RmDp => "rm_dp",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CapacityConfig {
    pub rows: usize,
    pub cols: usize,
    pub spacing_m: f64,
    pub tx_power_dbm: f64,
    pub noise_figure_db: f64,
    pub bandwidth_hz: f64,
    pub n_freq: usize,
    pub rotations_deg: Vec<f64>,
    pub max_bounces: usize,
    pub models: Vec<CapacityModel>,
    /// Displacements of the two RM-DP pairs, m.
    pub dp_distances: [f64; 2],
    pub rng_seed: u64,
}

impl Default for CapacityConfig {
    fn default() -> Self {
        Self {
            rows: 8,
            cols: 8,
            spacing_m: 0.14,
            tx_power_dbm: 23.0,
            noise_figure_db: 3.0,
            bandwidth_hz: 2e9,
            n_freq: 10,
            rotations_deg: default_rotations_deg(),
            max_bounces: 2,
            models: CapacityModel::ALL.to_vec(),
            dp_distances: [0.01, 0.02],
            rng_seed: 1,
        }
    }
}

/// 24 orientations, −180° to 165° in 15° steps.
pub fn default_rotations_deg() -> Vec<f64> {
    (0..24).map(|i| -180.0 + 15.0 * i as f64).collect()
}

impl CapacityConfig {
    pub fn budget(&self) -> Result<LinkBudget> {
        LinkBudget::new(self.tx_power_dbm, self.bandwidth_hz, self.noise_figure_db)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapacityRow {
    pub rotation_deg: f64,
    pub model: CapacityModel,
    /// SE at the carrier, bit/s/Hz.
    pub se_center: f64,
    /// Band-averaged SE, bit/s/Hz.
    pub se_avg: f64,
    /// Streams used at the carrier.
    pub rank_used: usize,
}

/// Ray traces needed by each way of producing the sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceReport {
    pub exhaustive: usize,
    pub rm_rt: usize,
    pub rm_dp: usize,
}

impl TraceReport {
    pub fn ratio(&self) -> f64 {
        self.exhaustive as f64 / self.rm_dp.max(self.rm_rt).max(1) as f64
    }
}

#[derive(Debug, Clone)]
pub struct CapacitySweep {
    pub rows: Vec<CapacityRow>,
    pub traces: TraceReport,
    pub fitted: FittedModels,
}

impl CapacitySweep {
    pub fn row(&self, rotation_deg: f64, model: CapacityModel) -> Option<&CapacityRow> {
        self.rows
            .iter()
            .find(|r| r.model == model && r.rotation_deg == rotation_deg)
    }
}

/// TX array rotated through `rotations_deg` relative to facing the RX; the RX
/// array faces the TX throughout.
pub fn capacity_sweep(scene: &Scene, reference: &ReferencePair, cfg: &CapacityConfig) -> Result<CapacitySweep> {
    if cfg.n_freq == 0 {
        return Err(Error::InvalidArgument("n_freq must be at least 1".into()));
    }
    let budget = cfg.budget()?;
    let rate = RateModel::default();
    let f0 = scene.carrier_freq;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let dp_pairs: Vec<(Vec3, Vec3)> = cfg
        .dp_distances
        .iter()
        .map(|&d| (reference.tx + d * random_unit(&mut rng), reference.rx + d * random_unit(&mut rng)))
        .collect();
    let fitted = FittedModels::fit(scene, reference, &dp_pairs, cfg.max_bounces)?;
    let dp_paths = fitted.dp_paths();

    let los = reference.rx - reference.tx;
    let tx_facing = los.y.atan2(los.x);
    let rx_facing = (-los.y).atan2(-los.x);
    let rx_array = ArrayGeometry::upa(cfg.rows, cfg.cols, cfg.spacing_m, reference.rx, rx_facing)?;

    let cells: Vec<(f64, CapacityModel)> = cfg
        .rotations_deg
        .iter()
        .flat_map(|&r| cfg.models.iter().map(move |&m| (r, m)))
        .collect();
    let results = cells
        .par_iter()
        .map(|&(rot, model)| {
            let tx_array =
                ArrayGeometry::upa(cfg.rows, cfg.cols, cfg.spacing_m, reference.tx, tx_facing + rot.to_radians())?;
            let (channel_model, paths) = match model {
                CapacityModel::Exhaustive => (ChannelModel::Exhaustive, &fitted.rt),
                CapacityModel::Constant => (ChannelModel::Constant, &fitted.rt),
                CapacityModel::Pwa => (ChannelModel::Pwa, &fitted.rt),
                CapacityModel::RmImage => (ChannelModel::RmImage, &fitted.rt),
                CapacityModel::RmAngles => (ChannelModel::RmAngles, &fitted.rt),
                CapacityModel::RmDp => (ChannelModel::RmAngles, &dp_paths),
            };
            let ctx = ChannelContext {
                reference,
                paths,
                scene: Some(scene),
                max_bounces: cfg.max_bounces,
                exhaustive_gains: ExhaustiveGains::PerPair,
                f0,
            };
            let taps = build_taps(&tx_array, &rx_array, channel_model, &ctx)?;
            let band = band_rate(|f| taps.matrix(f), f0, cfg.n_freq, &budget, &rate)?;
            let (se_center, rank_used) = spectral_efficiency(&singular_values(&taps.matrix(f0).entries), &budget, &rate);
            Ok((
                CapacityRow {
                    rotation_deg: rot,
                    model,
                    se_center,
                    se_avg: band.se_avg,
                    rank_used,
                },
                taps.traces,
            ))
        })
        .collect::<Result<Vec<_>>>()?;

    let exhaustive = results
        .iter()
        .filter(|(r, _)| r.model == CapacityModel::Exhaustive)
        .map(|(_, t)| *t)
        .sum();
    let traces = TraceReport {
        exhaustive,
        rm_rt: 1,
        rm_dp: 1 + dp_pairs.len(),
    };
    info!(
        "trace count: exhaustive {} ({} x {} x {}), RM-RT {}, RM-DP {}, ratio {:.0}",
        traces.exhaustive,
        rx_array.len(),
        rx_array.len(),
        cfg.rotations_deg.len(),
        traces.rm_rt,
        traces.rm_dp,
        traces.ratio()
    );
    Ok(CapacitySweep {
        rows: results.into_iter().map(|(r, _)| r).collect(),
        traces,
        fitted,
    })
}

/// Relative SE error of `model` against the exhaustive column at each rotation.
pub fn relative_se_errors(sweep: &CapacitySweep, model: CapacityModel) -> Vec<(f64, f64)> {
    sweep
        .rows
        .iter()
        .filter(|r| r.model == CapacityModel::Exhaustive)
        .filter_map(|exh| {
            sweep
                .row(exh.rotation_deg, model)
                .map(|r| (exh.rotation_deg, (r.se_avg - exh.se_avg) / exh.se_avg))
        })
        .collect()
}
