//! Scalar and MIMO frequency responses under the constant, PWA, RM and
//! exhaustive (re-traced) path models.
//!
//! Every model reduces to a list of taps `(g, τ_ref, d̂)` per element pair,
//! evaluated as `Σ g exp[j2π(τ_ref f₀ − f d̂ / c)]`. Building taps is the
//! expensive part (a full trace per pair for the exhaustive model), so a
//! [`TapGrid`] is built once and evaluated at as many frequencies as needed.

use std::f64::consts::PI;
use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{rot_z, Vec3};
use crate::pathmodel::{
    angles_to_image, pwa_distance, rm_distance_angles, rm_distance_image, ReferencePair, RmImage, RmPath,
    SPEED_OF_LIGHT,
};
use crate::rt_fit::fit_from_route;
use crate::tracer::{trace_paths, Scene};

/// Absolute element positions of an array.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    elements: Vec<Vec3>,
    center: Vec3,
}

impl ArrayGeometry {
    /// An array whose center is the centroid of `elements`.
    pub fn new(elements: Vec<Vec3>) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::InvalidArgument("array needs at least one element".into()));
        }
        let center = elements.iter().sum::<Vec3>() / elements.len() as f64;
        Ok(Self { elements, center })
    }

    pub fn single(position: Vec3) -> Self {
        Self {
            elements: vec![position],
            center: position,
        }
    }

    /// Uniform planar array in the local y-z plane (boresight local +x),
    /// turned about the global z axis by `azimuth`. Elements are listed row
    /// by row from the lowest row up.
    pub fn upa(rows: usize, cols: usize, spacing: f64, center: Vec3, azimuth: f64) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument("UPA needs rows, cols >= 1".into()));
        }
        if !(spacing > 0.0) {
            return Err(Error::InvalidArgument(format!("UPA spacing must be positive, got {spacing}")));
        }
        let r = rot_z(azimuth);
        let offset = |i: usize, n: usize| (i as f64 - (n - 1) as f64 / 2.0) * spacing;
        let elements = (0..rows)
            .flat_map(|i| (0..cols).map(move |j| (i, j)))
            .map(|(i, j)| center + r * Vec3::new(0.0, offset(j, cols), offset(i, rows)))
            .collect();
        Ok(Self { elements, center })
    }

    pub fn elements(&self) -> &[Vec3] {
        &self.elements
    }

    pub fn center(&self) -> &Vec3 {
        &self.center
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Largest distance between two elements.
    pub fn max_extent(&self) -> f64 {
        let mut best: f64 = 0.0;
        for (i, a) in self.elements.iter().enumerate() {
            for b in &self.elements[i + 1..] {
                best = best.max((a - b).norm());
            }
        }
        best
    }
}

/// One path's contribution to a scalar response.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tap {
    pub gain: Complex64,
    /// Delay at the reference pair, s.
    pub ref_delay: f64,
    /// Propagation distance at the evaluated pair, m.
    pub distance: f64,
}

pub fn scalar_channel(taps: &[Tap], f: f64, f0: f64) -> Complex64 {
    taps.iter()
        .map(|t| {
            // regrouped so the large carrier phases cancel before rounding
            let excess = t.ref_delay - t.distance / SPEED_OF_LIGHT;
            let cycles = f0 * excess - (f - f0) * t.distance / SPEED_OF_LIGHT;
            t.gain * Complex64::from_polar(1.0, 2.0 * PI * cycles)
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MimoMatrix {
    /// `N_rx × N_tx`.
    pub entries: DMatrix<Complex64>,
    pub frequency: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelModel {
    /// Distances frozen at the reference pair.
    Constant,
    Pwa,
    RmImage,
    RmAngles,
    /// Full trace between every element pair.
    Exhaustive,
}

impl ChannelModel {
    pub const ALL: [ChannelModel; 5] = [
        ChannelModel::Constant,
        ChannelModel::Pwa,
        ChannelModel::RmImage,
        ChannelModel::RmAngles,
        ChannelModel::Exhaustive,
    ];
}

/// Path gains used by the exhaustive model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExhaustiveGains {
    /// Gain recomputed from each pair's own route.
    #[default]
    PerPair,
    /// Gain of the same mirror image at the reference pair; isolates the
    /// distance model from the amplitude change across the array.
    Reference,
}

/// Everything a model may need beyond the element positions.
#[derive(Debug, Clone, Copy)]
pub struct ChannelContext<'a> {
    pub reference: &'a ReferencePair,
    /// Fitted paths at the reference pair; unused by the exhaustive model.
    pub paths: &'a [RmPath],
    pub scene: Option<&'a Scene>,
    pub max_bounces: usize,
    pub exhaustive_gains: ExhaustiveGains,
    pub f0: f64,
}

/// Taps for every `(rx, tx)` element pair, row-major over RX.
#[derive(Debug, Clone, PartialEq)]
pub struct TapGrid {
    pub n_rx: usize,
    pub n_tx: usize,
    pub f0: f64,
    pub taps: Vec<Vec<Tap>>,
    /// Ray traces performed while building the grid.
    pub traces: usize,
}

impl TapGrid {
    pub fn matrix(&self, f: f64) -> MimoMatrix {
        let entries = DMatrix::from_fn(self.n_rx, self.n_tx, |m, n| {
            scalar_channel(&self.taps[m * self.n_tx + n], f, self.f0)
        });
        MimoMatrix { entries, frequency: f }
    }
}

pub fn build_taps(tx: &ArrayGeometry, rx: &ArrayGeometry, model: ChannelModel, ctx: &ChannelContext) -> Result<TapGrid> {
    let pairs: Vec<(Vec3, Vec3)> = rx
        .elements()
        .iter()
        .flat_map(|r| tx.elements().iter().map(move |t| (*r, *t)))
        .collect();
    let traces = AtomicUsize::new(0);

    let taps: Vec<Vec<Tap>> = match model {
        ChannelModel::Exhaustive => {
            let scene = ctx.scene.ok_or(Error::MissingScene)?;
            let reference_gains = match ctx.exhaustive_gains {
                ExhaustiveGains::PerPair => None,
                ExhaustiveGains::Reference => {
                    traces.fetch_add(1, Ordering::Relaxed);
                    Some(
                        trace_paths(scene, &ctx.reference.tx, &ctx.reference.rx, ctx.max_bounces)?
                            .into_iter()
                            .map(|p| Ok((fit_from_route(&p.route)?, p.gain, p.delay)))
                            .collect::<Result<Vec<_>>>()?,
                    )
                }
            };
            pairs
                .par_iter()
                .map(|(r, t)| {
                    traces.fetch_add(1, Ordering::Relaxed);
                    trace_paths(scene, t, r, ctx.max_bounces)?
                        .into_iter()
                        .map(|p| {
                            let distance = p.length();
                            let (gain, ref_delay) = match &reference_gains {
                                Some(known) => {
                                    let image = fit_from_route(&p.route)?;
                                    known
                                        .iter()
                                        .find(|(k, _, _)| same_image(k, &image))
                                        .map_or((p.gain, p.delay), |&(_, g, d)| (g, d))
                                }
                                None => (p.gain, p.delay),
                            };
                            Ok(Tap {
                                gain,
                                ref_delay,
                                distance,
                            })
                        })
                        .collect()
                })
                .collect::<Result<_>>()?
        }
        _ => {
            let images: Vec<RmImage> = match model {
                ChannelModel::RmImage => ctx.paths.iter().map(|p| angles_to_image(p, ctx.reference)).collect(),
                _ => Vec::new(),
            };
            let pwa: Vec<_> = ctx.paths.iter().map(RmPath::pwa).collect();
            pairs
                .par_iter()
                .map(|(r, t)| {
                    ctx.paths
                        .iter()
                        .enumerate()
                        .map(|(l, p)| {
                            let distance = match model {
                                ChannelModel::Constant => SPEED_OF_LIGHT * p.delay,
                                ChannelModel::Pwa => pwa_distance(r, t, ctx.reference, &pwa[l]),
                                ChannelModel::RmImage => rm_distance_image(r, t, &images[l]),
                                ChannelModel::RmAngles => rm_distance_angles(r, t, ctx.reference, p),
                                ChannelModel::Exhaustive => unreachable!(),
                            };
                            Tap {
                                gain: p.gain,
                                ref_delay: p.delay,
                                distance,
                            }
                        })
                        .collect()
                })
                .collect()
        }
    };
    Ok(TapGrid {
        n_rx: rx.len(),
        n_tx: tx.len(),
        f0: ctx.f0,
        taps,
        traces: traces.into_inner(),
    })
}

/// Routes through different facet orders can share an image (commuting
/// reflections), so paths are identified by their image.
fn same_image(a: &RmImage, b: &RmImage) -> bool {
    (a.u - b.u).abs().max() < 1e-9 && (a.g - b.g).norm() < 1e-6 * (1.0 + a.g.norm())
}

pub fn mimo_matrix(
    tx: &ArrayGeometry,
    rx: &ArrayGeometry,
    model: ChannelModel,
    ctx: &ChannelContext,
    f: f64,
) -> Result<MimoMatrix> {
    Ok(build_taps(tx, rx, model, ctx)?.matrix(f))
}
