//! Displaced-pairs fit: recovers the reflection sign `s` and TX roll `γ` of
//! every path from PWA parameters observed at a reference pair and at `M ≥ 2`
//! displaced pairs, without access to the path routes.
//!
//! For each matched path and displaced pair `m` the squared delay obeys
//! `C_m = A_m(s) cos γ + B_m(s) sin γ`, so for each candidate `s` the pair
//! `(x, y) = (cos γ, sin γ)` is an ordinary two-unknown least-squares problem.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geom::{align_to_x, wrap_angle, Sign, Vec3};
use crate::pathmodel::{PwaPath, ReferencePair, RmPath, SPEED_OF_LIGHT};
use crate::tracer::{to_pwa, trace_paths, Scene};

/// PWA parameters observed between one TX-RX pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairObservation {
    pub tx: Vec3,
    pub rx: Vec3,
    pub paths: Vec<PwaPath>,
}

impl PairObservation {
    /// PWA parameters of every traced path between `tx` and `rx`, strongest first.
    pub fn trace(scene: &Scene, tx: Vec3, rx: Vec3, max_bounces: usize) -> Result<Self> {
        let pair = ReferencePair::new(tx, rx)?;
        let paths = trace_paths(scene, &tx, &rx, max_bounces)?
            .iter()
            .map(|p| to_pwa(p, &pair))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { tx, rx, paths })
    }

    pub fn reference_pair(&self) -> Result<ReferencePair> {
        ReferencePair::new(self.tx, self.rx)
    }

    /// Indices of the paths from strongest to weakest; ties keep input order.
    pub fn strength_order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.paths.len()).collect();
        idx.sort_by(|&a, &b| self.paths[b].gain.norm().total_cmp(&self.paths[a].gain.norm()));
        idx
    }

    fn delay_ranks(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.paths.len()).collect();
        idx.sort_by(|&a, &b| self.paths[a].delay.total_cmp(&self.paths[b].delay));
        let mut rank = vec![0; idx.len()];
        for (r, i) in idx.into_iter().enumerate() {
            rank[i] = r;
        }
        rank
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchConfig {
    /// Weight per radian of azimuth difference.
    pub c0: f64,
    /// Weight per radian of elevation difference.
    pub c1: f64,
    /// Only consider candidates whose delay rank differs by at most this much.
    pub max_delay_rank_gap: Option<usize>,
    /// Reject matches with a larger angular distance.
    pub max_distance: Option<f64>,
}

impl Default for MatchConfig {
    fn default() -> Self {
        // 1/180 per degree
        Self {
            c0: 1.0 / std::f64::consts::PI,
            c1: 1.0 / std::f64::consts::PI,
            max_delay_rank_gap: None,
            max_distance: None,
        }
    }
}

impl MatchConfig {
    /// Weighted angular distance between two paths; azimuths compared on the circle.
    pub fn distance(&self, a: &PwaPath, b: &PwaPath) -> f64 {
        let az = |x: f64, y: f64| wrap_angle(x - y).abs();
        self.c0 * (az(a.aoa_az, b.aoa_az) + az(a.aod_az, b.aod_az))
            + self.c1 * ((a.aoa_el - b.aoa_el).abs() + (a.aod_el - b.aod_el).abs())
    }
}

/// Greedy strongest-first matching of reference paths to displaced paths.
///
/// Entry `ℓ` of the result is the displaced index matched to reference path
/// `ℓ`, or `None` when no candidate is left (or all exceed the threshold).
pub fn match_paths(
    reference: &PairObservation,
    displaced: &PairObservation,
    cfg: &MatchConfig,
) -> Result<Vec<Option<usize>>> {
    if reference.paths.is_empty() || displaced.paths.is_empty() {
        return Err(Error::NoPaths);
    }
    let ref_rank = reference.delay_ranks();
    let disp_rank = displaced.delay_ranks();
    let mut used = vec![false; displaced.paths.len()];
    let mut sigma = vec![None; reference.paths.len()];

    for l in reference.strength_order() {
        let mut best: Option<(usize, f64)> = None;
        for (j, cand) in displaced.paths.iter().enumerate() {
            if used[j] {
                continue;
            }
            if let Some(gap) = cfg.max_delay_rank_gap {
                if ref_rank[l].abs_diff(disp_rank[j]) > gap {
                    continue;
                }
            }
            let d = cfg.distance(&reference.paths[l], cand);
            if cfg.max_distance.is_some_and(|max| d > max) {
                continue;
            }
            // strict < keeps the lowest index on ties
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((j, d));
            }
        }
        if let Some((j, _)) = best {
            used[j] = true;
            sigma[l] = Some(j);
        }
    }
    Ok(sigma)
}

/// One row of the per-path linear system, for a single displaced pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DpRow {
    pub a_r: Vec3,
    pub a_t: Vec3,
    /// `G = ‖Δr + cτ₀u_r‖² + ‖Δt + cτ₀u_t‖² − (cτ₀)²`, m².
    pub g: f64,
    /// `C = (cτ_m)² − G − 2 a_r1 a_t1`, m².
    pub c: f64,
}

impl DpRow {
    pub fn new(reference_path: &PwaPath, reference: &ReferencePair, tx: &Vec3, rx: &Vec3, delay: f64) -> Self {
        let d_r = reference.rx - rx;
        let d_t = reference.tx - tx;
        let a_r = align_to_x(reference_path.aoa_az, reference_path.aoa_el) * d_r;
        let a_t = align_to_x(reference_path.aod_az, reference_path.aod_el) * d_t;
        let ct0 = SPEED_OF_LIGHT * reference_path.delay;
        let ctm = SPEED_OF_LIGHT * delay;
        // G − (cτ₀)², kept separate so the large (cτ)² terms cancel exactly
        let g_excess = d_r.norm_squared()
            + d_t.norm_squared()
            + 2.0 * ct0 * (reference_path.arrival_dir().dot(&d_r) + reference_path.departure_dir().dot(&d_t));
        let c = (ctm - ct0) * (ctm + ct0) - g_excess - 2.0 * a_r.x * a_t.x;
        Self {
            a_r,
            a_t,
            g: ct0 * ct0 + g_excess,
            c,
        }
    }

    pub fn a(&self, s: Sign) -> f64 {
        2.0 * (self.a_r.y * self.a_t.y + s.value() * self.a_r.z * self.a_t.z)
    }

    pub fn b(&self, s: Sign) -> f64 {
        2.0 * (s.value() * self.a_r.z * self.a_t.y - self.a_r.y * self.a_t.z)
    }
}

/// Least-squares `(x, y)` minimising `Σ (c − a x − b y)²`, with the residual.
/// `None` when the columns are numerically dependent.
pub fn least_squares_xy(a: &[f64], b: &[f64], c: &[f64]) -> Option<(f64, f64, f64)> {
    least_squares_scaled(a, b, c, 0.0)
}

/// As [`least_squares_xy`], also rejecting columns that are tiny next to `scale`.
fn least_squares_scaled(a: &[f64], b: &[f64], c: &[f64], scale: f64) -> Option<(f64, f64, f64)> {
    let m = a.len();
    if m < 2 || b.len() != m || c.len() != m {
        return None;
    }
    let mat = DMatrix::from_fn(m, 2, |i, j| if j == 0 { a[i] } else { b[i] });
    let rhs = DVector::from_column_slice(c);
    let svd = mat.clone().svd(true, true);
    let sv = &svd.singular_values;
    let (hi, lo) = (sv.max(), sv.min());
    if !(hi > 0.0) || lo < 1e-9 * hi.max(scale) {
        return None;
    }
    let sol = svd.solve(&rhs, 0.0).ok()?;
    let resid = (rhs - mat * &sol).norm_squared();
    Some((sol[0], sol[1], resid))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Solved,
    /// Neither sign gives an identifiable `(x, y)`.
    RankDeficient,
    /// Both signs fit the data equally well and both land on the unit circle.
    Ambiguous,
    /// Fewer than two displaced pairs contained a match for this path.
    Unmatched,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaSolution {
    pub s: Sign,
    pub gamma: f64,
    /// `J` at the chosen sign, m⁴; infinite when flagged.
    pub residual: f64,
    pub status: SolveStatus,
}

impl GammaSolution {
    fn flagged(status: SolveStatus) -> Self {
        Self {
            s: Sign::Minus,
            gamma: 0.0,
            residual: f64::INFINITY,
            status,
        }
    }

    pub fn is_solved(&self) -> bool {
        self.status == SolveStatus::Solved
    }
}

/// Relative residual below which a sign is treated as fitting exactly.
const CONSISTENT_TOL: f64 = 1e-10;

/// Solves one path's rows for `(s, γ)`.
///
/// The sign with the smaller residual wins. When both signs fit exactly (the
/// usual case with `M = 2`, where each system is square) the sign whose
/// solution lies closer to the unit circle `x² + y² = 1` is taken.
pub fn solve_rows(rows: &[DpRow]) -> GammaSolution {
    let c: Vec<f64> = rows.iter().map(|r| r.c).collect();
    let scale: f64 = c.iter().map(|v| v * v).sum();
    // |A|, |B| ≤ 2‖a_r‖‖a_t‖, so columns far below that are rounding noise
    let magnitude = rows
        .iter()
        .map(|r| 2.0 * r.a_r.norm() * r.a_t.norm())
        .fold(0.0, f64::max);
    let mut candidates = Vec::with_capacity(2);
    for s in [Sign::Plus, Sign::Minus] {
        let a: Vec<f64> = rows.iter().map(|r| r.a(s)).collect();
        let b: Vec<f64> = rows.iter().map(|r| r.b(s)).collect();
        if let Some((x, y, j)) = least_squares_scaled(&a, &b, &c, magnitude) {
            let circle = ((x * x + y * y).sqrt() - 1.0).abs();
            candidates.push((s, x, y, j, circle));
        }
    }
    let pick = match candidates.as_slice() {
        [] => return GammaSolution::flagged(SolveStatus::RankDeficient),
        [only] => (*only, SolveStatus::Solved),
        [p, q] => {
            let exact = |j: f64| j <= CONSISTENT_TOL * scale;
            if exact(p.3) && exact(q.3) {
                let (best, other) = if p.4 <= q.4 { (p, q) } else { (q, p) };
                let status = if other.4 < 1e-6 {
                    SolveStatus::Ambiguous
                } else {
                    SolveStatus::Solved
                };
                (*best, status)
            } else if p.3 <= q.3 {
                (*p, SolveStatus::Solved)
            } else {
                (*q, SolveStatus::Solved)
            }
        }
        _ => unreachable!(),
    };
    let ((s, x, y, j, _), status) = pick;
    GammaSolution {
        s,
        gamma: wrap_angle(y.atan2(x)),
        residual: j,
        status,
    }
}

/// Matched rows for every reference path (in input order).
pub fn build_rows(
    reference: &PairObservation,
    displaced: &[PairObservation],
    cfg: &MatchConfig,
) -> Result<Vec<Vec<DpRow>>> {
    let geometry = reference.reference_pair()?;
    let mut rows = vec![Vec::with_capacity(displaced.len()); reference.paths.len()];
    for obs in displaced {
        let sigma = match_paths(reference, obs, cfg)?;
        for (l, matched) in sigma.into_iter().enumerate() {
            if let Some(j) = matched {
                rows[l].push(DpRow::new(
                    &reference.paths[l],
                    &geometry,
                    &obs.tx,
                    &obs.rx,
                    obs.paths[j].delay,
                ));
            }
        }
    }
    Ok(rows)
}

/// `(s, γ)` for every reference path, in the reference's input order.
pub fn solve_gamma_s(
    reference: &PairObservation,
    displaced: &[PairObservation],
    cfg: &MatchConfig,
) -> Result<Vec<GammaSolution>> {
    if displaced.len() < 2 {
        return Err(Error::TooFewDisplacedPairs(displaced.len()));
    }
    if reference.paths.is_empty() {
        return Err(Error::NoPaths);
    }
    Ok(build_rows(reference, displaced, cfg)?
        .iter()
        .map(|rows| {
            if rows.len() < 2 {
                GammaSolution::flagged(SolveStatus::Unmatched)
            } else {
                solve_rows(rows)
            }
        })
        .collect())
}

/// A path fitted by displaced pairs. Flagged paths keep the PWA parameters
/// with a best-effort `(s, γ)`; check `solution.status`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DpPath {
    pub path: RmPath,
    pub solution: GammaSolution,
}

/// RM parameters for every reference path, strongest first.
pub fn fit_rm_dp(
    reference: &PairObservation,
    displaced: &[PairObservation],
    cfg: &MatchConfig,
) -> Result<Vec<DpPath>> {
    let solutions = solve_gamma_s(reference, displaced, cfg)?;
    Ok(reference
        .strength_order()
        .into_iter()
        .map(|l| {
            let sol = solutions[l];
            DpPath {
                path: RmPath::from_pwa(&reference.paths[l], sol.gamma, sol.s),
                solution: sol,
            }
        })
        .collect())
}
