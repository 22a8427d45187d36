//! Exceptional sets for the independence argument: points whose lift
//! trajectories come back close to them, times at which two lift trajectories
//! approach each other, and the neighbourhoods swept by the trajectories of a point.
//!
//! Distances along a trajectory are 1-Lipschitz in time, so every search runs on
//! a time grid and refines the grid candidates by golden-section search, using
//! that the distance from a point to a geodesic is convex along the geodesic.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{distance_c, flow_c, DiskPoint, MobiusMap};
use crate::rng::{tag, Stream};
use crate::surface::{Lift, Surface, CIRCUMRADIUS, INRADIUS, NEIGHBOR_CAP};
use crate::wkb::PropagationJob;

const GOLDEN_ITERS: usize = 60;
const BISECT_ITERS: usize = 40;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ApproachIntervals {
    pub intervals: Vec<[f64; 2]>,
    pub total_length: f64,
}

impl ApproachIntervals {
    /// Sorted union of possibly overlapping intervals.
    pub fn union(mut v: Vec<[f64; 2]>) -> Self {
        v.sort_by(|a, b| a[0].total_cmp(&b[0]));
        let mut out: Vec<[f64; 2]> = Vec::new();
        for iv in v {
            match out.last_mut() {
                Some(last) if iv[0] <= last[1] => last[1] = last[1].max(iv[1]),
                _ => out.push(iv),
            }
        }
        let total_length = out.iter().map(|iv| iv[1] - iv[0]).sum();
        ApproachIntervals { intervals: out, total_length }
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }
}

fn golden_min<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (a, b);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..GOLDEN_ITERS {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    let (fa, fb) = (f(a), f(b));
    [(c, fc), (d, fd), (a, fa), (b, fb)]
        .into_iter()
        .fold((a, f64::INFINITY), |best, p| if p.1 < best.1 { p } else { best })
}

#[derive(Debug, Clone, Copy)]
struct Item {
    z: Complex64,
    /// Maps the cover trajectory onto this copy.
    map: MobiusMap,
    u: f64,
    tag: u32,
}

/// Grid nodes of geodesic segments `u -> flow(z0, d0, u)`, `u in [lo, hi]`,
/// reduced to the octagon and copied to the tiles within reach of it.
struct SegmentImages {
    segments: Vec<(Complex64, Complex64)>,
    lo: f64,
    hi: f64,
    step: f64,
    radius: f64,
    cell: f64,
    m: usize,
    cells: Vec<Vec<u32>>,
    items: Vec<Item>,
}

impl SegmentImages {
    /// Exact for query distances below `radius`.
    fn build(
        surface: &Surface,
        segments: Vec<(Complex64, Complex64)>,
        lo: f64,
        hi: f64,
        step: f64,
        radius: f64,
    ) -> Result<Self> {
        if radius + step > NEIGHBOR_CAP {
            return Err(Error::Validation(format!(
                "search radius {radius} plus grid step {step} exceeds the neighbour cap {NEIGHBOR_CAP}"
            )));
        }
        let tau = ((radius + step) / 2.0).tanh();
        let cell = (0.75 * tau).max(0.01);
        let m = (2.0 / cell).ceil() as usize;
        let mut me = SegmentImages {
            segments,
            lo,
            hi,
            step,
            radius,
            cell,
            m,
            cells: vec![Vec::new(); m * m],
            items: Vec::new(),
        };
        let reach = CIRCUMRADIUS + radius + step + 1e-9;
        let zero = Complex64::new(0.0, 0.0);
        let n = (((hi - lo) / step).ceil() as usize).max(1);
        for (tag, &(z0, d0)) in me.segments.clone().iter().enumerate() {
            let mut hint = MobiusMap::IDENTITY;
            for k in 0..=n {
                let u = lo + (hi - lo) * k as f64 / n as f64;
                let (z, _) = flow_c(z0, d0, u);
                let (zr, g) = surface.reduce_c(z, &hint)?;
                hint = g;
                let back = g.inverse();
                for nb in &surface.neighbors {
                    let w = nb.map.apply_c(zr);
                    if distance_c(zero, w) <= reach {
                        let slot = me.slot(w.im) * m + me.slot(w.re);
                        me.cells[slot].push(me.items.len() as u32);
                        me.items.push(Item { z: w, map: nb.map.compose(&back), u, tag: tag as u32 });
                    }
                }
            }
        }
        Ok(me)
    }

    fn slot(&self, x: f64) -> usize {
        (((x + 1.0) / self.cell).floor().max(0.0) as usize).min(self.m - 1)
    }

    /// Distance from a point of the octagon to the segments other than `exclude`,
    /// exact when below `radius`; `INFINITY` when no node is within reach.
    fn distance(&self, zq: Complex64, exclude: Option<u32>) -> f64 {
        let tau = ((self.radius + self.step) / 2.0).tanh();
        let r2 = zq.norm_sqr();
        let den = 1.0 - tau * tau * r2;
        let ec = zq * ((1.0 - tau * tau) / den);
        let er = tau * (1.0 - r2) / den;
        let (x0, x1) = (self.slot(ec.re - er), self.slot(ec.re + er));
        let (y0, y1) = (self.slot(ec.im - er), self.slot(ec.im + er));
        let mut best = f64::INFINITY;
        for iy in y0..=y1 {
            for ix in x0..=x1 {
                for &i in &self.cells[iy * self.m + ix] {
                    let it = &self.items[i as usize];
                    if Some(it.tag) == exclude {
                        continue;
                    }
                    let d = distance_c(zq, it.z);
                    if d >= self.radius + self.step || d - self.step >= best {
                        continue;
                    }
                    let (z0, d0) = self.segments[it.tag as usize];
                    let a = (it.u - self.step).max(self.lo);
                    let b = (it.u + self.step).min(self.hi);
                    let (_, v) = golden_min(|u| distance_c(zq, it.map.apply_c(flow_c(z0, d0, u).0)), a, b);
                    best = best.min(v.min(d));
                }
            }
        }
        best
    }
}

/// Times `s in [a, b]` with `f(s) < r0` for a 1-Lipschitz `f`, from a grid of
/// step at most `step` with bisection at the crossings.
fn sublevel_intervals<F: FnMut(f64) -> Result<f64>>(
    mut f: F,
    a: f64,
    b: f64,
    r0: f64,
    step: f64,
) -> Result<Vec<[f64; 2]>> {
    if !(b > a) {
        return Ok(Vec::new());
    }
    let n = (((b - a) / step).ceil() as usize).max(1);
    let nodes: Vec<f64> = (0..=n).map(|k| a + (b - a) * k as f64 / n as f64).collect();
    let vals = nodes.iter().map(|&s| f(s)).collect::<Result<Vec<f64>>>()?;
    let crossing = |mut lo: f64, mut hi: f64, lo_inside: bool, f: &mut F| -> Result<f64> {
        for _ in 0..BISECT_ITERS {
            let mid = 0.5 * (lo + hi);
            if (f(mid)? < r0) == lo_inside {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    };
    let mut out = Vec::new();
    let mut start = if vals[0] < r0 { Some(a) } else { None };
    for k in 0..n {
        let (s0, s1) = (nodes[k], nodes[k + 1]);
        let (in0, in1) = (vals[k] < r0, vals[k + 1] < r0);
        match (in0, in1) {
            (true, false) => {
                let c = crossing(s0, s1, true, &mut f)?;
                out.push([start.take().unwrap_or(s0), c]);
            }
            (false, true) => start = Some(crossing(s0, s1, false, &mut f)?),
            (false, false) if vals[k] + vals[k + 1] - (s1 - s0) < 2.0 * r0 => {
                // A dip between two outside nodes.
                let mut g = |s: f64| f(s).unwrap_or(f64::INFINITY);
                let (sm, vm) = golden_min(&mut g, s0, s1);
                if vm < r0 {
                    let lo = crossing(s0, sm, false, &mut f)?;
                    let hi = crossing(sm, s1, true, &mut f)?;
                    out.push([lo, hi]);
                }
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push([s, b]);
    }
    Ok(out)
}

fn close_radius(job: &PropagationJob, eps: f64) -> Result<f64> {
    let beta = job.params.beta;
    if !(eps >= 0.0 && eps < beta) {
        return Err(Error::Validation(format!("eps must lie in [0, beta), got {eps}")));
    }
    Ok(job.params.h.powf(beta - eps))
}

fn backward_segment(job: &PropagationJob, xt: Complex64) -> (Complex64, Complex64) {
    (xt, job.state.gradient_dir_c(xt))
}

/// For each lift in `from`, the times `s` at which `Phi^{-s}` of it comes within
/// `h^(beta - eps)` of `Phi^{-s'}` of a lift in `against`, `s' in [0, t]`.
/// With `same_set`, `from` and `against` are the same lifts and a lift is not
/// compared with itself.
pub fn approach_intervals(
    job: &PropagationJob,
    from: &[Lift],
    against: &[Lift],
    eps: f64,
    same_set: bool,
) -> Result<Vec<ApproachIntervals>> {
    let r0 = close_radius(job, eps)?;
    let t = job.t();
    let step = job.width() / 8.0;
    let segs = against.iter().map(|l| backward_segment(job, l.point.z())).collect();
    let index = SegmentImages::build(&job.surface, segs, -t, 0.0, step, r0)?;
    from.iter()
        .enumerate()
        .map(|(i, l)| {
            let (z0, d0) = backward_segment(job, l.point.z());
            let exclude = same_set.then_some(i as u32);
            let mut hint = MobiusMap::IDENTITY;
            let f = |s: f64| -> Result<f64> {
                let (z, _) = flow_c(z0, d0, -s);
                let (zr, g) = job.surface.reduce_c(z, &hint)?;
                hint = g;
                Ok(index.distance(zr, exclude))
            };
            Ok(ApproachIntervals::union(sublevel_intervals(f, 0.0, t, r0, step)?))
        })
        .collect()
}

/// Close-approach times of the trajectory of `xt` to that of `xt2`.
pub fn close_approach_intervals(
    job: &PropagationJob,
    xt: &DiskPoint,
    xt2: &DiskPoint,
    eps: f64,
) -> Result<ApproachIntervals> {
    xt.check()?;
    xt2.check()?;
    let lift = |p: &DiskPoint| Lift { map: MobiusMap::IDENTITY, word: Vec::new(), point: *p };
    Ok(approach_intervals(job, &[lift(xt)], &[lift(xt2)], eps, false)?.remove(0))
}

/// Union over ordered pairs of distinct lifts of their close-approach times.
pub fn excision_set(job: &PropagationJob, lifts: &[Lift], eps: f64) -> Result<ApproachIntervals> {
    if lifts.len() < 2 {
        return Ok(ApproachIntervals::default());
    }
    let per = approach_intervals(job, lifts, lifts, eps, true)?;
    Ok(ApproachIntervals::union(per.into_iter().flat_map(|a| a.intervals).collect()))
}

/// Smallest distance from `y` to the segments `Phi^s(rho_x~)`, `s in [-t, t]`,
/// over `lifts`, exact below `radius`.
fn swept_distance(job: &PropagationJob, lifts: &[Lift], y: &DiskPoint, t: f64, radius: f64) -> Result<f64> {
    if lifts.is_empty() {
        return Ok(f64::INFINITY);
    }
    let segs = lifts.iter().map(|l| backward_segment(job, l.point.z())).collect();
    let index = SegmentImages::build(&job.surface, segs, -t, t, radius / 4.0, radius)?;
    let (yr, _) = job.surface.reduce_c(y.z(), &MobiusMap::IDENTITY)?;
    Ok(index.distance(yr, None))
}

/// Whether some trajectory `Phi^s(rho_x~)`, `x~ in A_{x,t}`, `|s| <= t`, passes
/// within `h^(beta - eps)` of `y`.
pub fn in_v_neighborhood(job: &PropagationJob, x: &DiskPoint, y: &DiskPoint, eps: f64) -> Result<bool> {
    let r0 = close_radius(job, eps)?;
    let lifts = job.lifts(x)?;
    in_v_for_lifts(job, &lifts, y, job.t(), eps).map(|d| d < r0)
}

/// `swept_distance` for a given lift set and sweep time; the set test is `< h^(beta - eps)`.
pub fn in_v_for_lifts(job: &PropagationJob, lifts: &[Lift], y: &DiskPoint, t: f64, eps: f64) -> Result<f64> {
    y.check()?;
    let r0 = close_radius(job, eps)?;
    swept_distance(job, lifts, y, t, r0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BadWitness {
    pub word: Vec<u8>,
    pub lift: DiskPoint,
    /// A time in `[T0, T]` at which the lift is in `A_{x, t1}`.
    pub t1: f64,
    /// Return time in `[r_I, T]`.
    pub t2: f64,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BadPoint {
    pub bad: bool,
    pub witness: Option<BadWitness>,
}

/// Whether `x` is in the bad set: some lift in `A_{x, t1}`, `t1 in [T0, T]`,
/// returns within `h^gamma` of `x` under the forward flow at a time in `[r_I, T]`.
pub fn is_bad_point(job: &PropagationJob, x: &DiskPoint, t0: f64, tt: f64, gamma: f64) -> Result<BadPoint> {
    x.check()?;
    if !(t0 >= INRADIUS - 1e-12 && t0 <= tt && tt <= job.horizon() * (1.0 + 1e-12)) {
        return Err(Error::Validation(format!(
            "need r_I <= T0 <= T <= horizon, got T0 = {t0}, T = {tt}, horizon = {}",
            job.horizon()
        )));
    }
    if !(gamma > 0.0) {
        return Err(Error::Validation(format!("gamma must be positive, got {gamma}")));
    }
    let state = &job.state;
    let surface = &job.surface;
    let need = Surface::lift_radius(tt, state);
    if need > surface.ball_radius {
        return Err(Error::HorizonTooLarge { required: need, max: surface.ball_radius });
    }
    let r = job.params.h.powf(gamma);
    let step = r / 4.0;
    let c = state.amplitude_center.z();
    let (xr, _) = surface.reduce_c(x.z(), &MobiusMap::IDENTITY)?;
    for g in &surface.ball {
        let xt = g.map.apply_c(x.z());
        if distance_c(c, xt) - tt >= state.amplitude_radius {
            continue;
        }
        let d = state.gradient_dir_c(xt);
        let (t1, dist_c) = golden_min(|s| distance_c(c, flow_c(xt, d, -s).0), t0, tt);
        if dist_c >= state.amplitude_radius {
            continue;
        }
        let index = SegmentImages::build(surface, vec![(xt, d)], INRADIUS, tt, step, r)?;
        let dist = index.distance(xr, None);
        if dist < r {
            // Recover the return time on the grid for the witness.
            let n = (((tt - INRADIUS) / step).ceil() as usize).max(1);
            let t2 = (0..=n)
                .map(|k| INRADIUS + (tt - INRADIUS) * k as f64 / n as f64)
                .map(|u| (u, surface.dist_x(flow_c(xt, d, u).0, x.z()).unwrap_or(f64::INFINITY)))
                .fold((INRADIUS, f64::INFINITY), |b, p| if p.1 < b.1 { p } else { b })
                .0;
            return Ok(BadPoint {
                bad: true,
                witness: Some(BadWitness {
                    word: g.word.clone(),
                    lift: DiskPoint::from_complex(xt)?,
                    t1,
                    t2,
                    distance: dist,
                }),
            });
        }
    }
    Ok(BadPoint { bad: false, witness: None })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BadSetProbe {
    #[serde(rename = "T0")]
    pub t0: f64,
    #[serde(rename = "T")]
    pub t: f64,
    pub gamma: f64,
    pub n_probes: usize,
    pub bad_fraction: f64,
    pub examples: Vec<DiskPoint>,
}

/// Uniform random points of the surface; probe `k` uses stream `(PROBES, k)`.
pub fn random_points(surface: &Surface, seed: u64, n: usize) -> Vec<DiskPoint> {
    (0..n)
        .map(|k| surface.random_point(&mut Stream::tagged(seed, tag::PROBES, k as u64)))
        .collect()
}

/// Monte-Carlo fraction of bad points.
pub fn bad_set_probe(
    job: &PropagationJob,
    t0: f64,
    tt: f64,
    gamma: f64,
    n_probes: usize,
    seed: u64,
) -> Result<BadSetProbe> {
    let pts = random_points(&job.surface, seed, n_probes);
    let flags = pts
        .par_iter()
        .map(|p| is_bad_point(job, p, t0, tt, gamma).map(|b| b.bad))
        .collect::<Result<Vec<bool>>>()?;
    let examples: Vec<DiskPoint> = pts.iter().zip(&flags).filter(|(_, &b)| b).map(|(p, _)| *p).collect();
    Ok(BadSetProbe {
        t0,
        t: tt,
        gamma,
        n_probes,
        bad_fraction: if n_probes == 0 { 0.0 } else { examples.len() as f64 / n_probes as f64 },
        examples,
    })
}

/// The first `n` random points (stream `(POINTS, k)`) that have lifts at time
/// `t` and, when `gamma` is given and `t >= r_I`, are not in the bad set
/// with `T0 = r_I`, `T = t`. Candidates are screened in parallel in fixed-size
/// batches, so the result does not depend on the worker count.
pub fn good_points(job: &PropagationJob, n: usize, seed: u64, gamma: Option<f64>, max_candidates: usize) -> Result<Vec<DiskPoint>> {
    const BATCH: usize = 64;
    let mut out = Vec::with_capacity(n);
    let mut k = 0;
    while out.len() < n {
        if k >= max_candidates {
            return Err(Error::Resource(format!(
                "found {} of {n} usable points among {max_candidates} candidates",
                out.len()
            )));
        }
        let batch: Vec<usize> = (k..(k + BATCH).min(max_candidates)).collect();
        k += batch.len();
        let ok = batch
            .par_iter()
            .map(|&i| {
                let x = job.surface.random_point(&mut Stream::tagged(seed, tag::POINTS, i as u64));
                if job.lifts(&x)?.is_empty() {
                    return Ok(None);
                }
                if let Some(g) = gamma {
                    if job.t() >= INRADIUS && is_bad_point(job, &x, INRADIUS, job.t(), g)?.bad {
                        return Ok(None);
                    }
                }
                Ok(Some(x))
            })
            .collect::<Result<Vec<_>>>()?;
        out.extend(ok.into_iter().flatten().take(n - out.len()));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalStatistics {
    pub eps: f64,
    pub n_points: usize,
    pub mean_length: f64,
    pub max_length: f64,
    /// `h^(beta - 5 eps)`.
    pub bound: f64,
    /// Non-bad points whose excision set is longer than `bound`.
    pub violations: Vec<DiskPoint>,
}

/// Lengths of the own-lift excision sets at the given non-bad points.
pub fn interval_statistics(job: &PropagationJob, points: &[DiskPoint], eps: f64) -> Result<IntervalStatistics> {
    let lengths = points
        .par_iter()
        .map(|p| Ok(excision_set(job, &job.lifts(p)?, eps)?.total_length))
        .collect::<Result<Vec<f64>>>()?;
    let beta = job.params.beta;
    let bound = job.params.h.powf(beta - 5.0 * eps);
    let n = lengths.len();
    Ok(IntervalStatistics {
        eps,
        n_points: n,
        mean_length: if n == 0 { 0.0 } else { lengths.iter().sum::<f64>() / n as f64 },
        max_length: lengths.iter().cloned().fold(0.0, f64::max),
        bound,
        violations: points.iter().zip(&lengths).filter(|(_, &l)| l > bound).map(|(p, _)| *p).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub h: f64,
    pub beta: f64,
    pub t: f64,
    pub bad_fraction: f64,
    pub flagged: Vec<DiskPoint>,
    pub bad_set: BadSetProbe,
    pub intervals: IntervalStatistics,
}

/// Bad-set probe plus excision-set lengths at the non-bad probes. An empty
/// return-time window (`tt < t0`) gives an empty bad set.
pub fn diagnose(
    job: &PropagationJob,
    t0: f64,
    tt: f64,
    gamma: f64,
    eps: f64,
    n_probes: usize,
    seed: u64,
) -> Result<DiagnosticsReport> {
    let bad = if tt < t0 {
        BadSetProbe { t0, t: tt, gamma, n_probes, bad_fraction: 0.0, examples: Vec::new() }
    } else {
        bad_set_probe(job, t0, tt, gamma, n_probes, seed)?
    };
    let good: Vec<DiskPoint> = random_points(&job.surface, seed, n_probes)
        .into_iter()
        .filter(|p| !bad.examples.contains(p))
        .collect();
    let intervals = interval_statistics(job, &good, eps)?;
    Ok(DiagnosticsReport {
        h: job.params.h,
        beta: job.params.beta,
        t: job.t(),
        bad_fraction: bad.bad_fraction,
        flagged: bad.examples.clone(),
        bad_set: bad,
        intervals,
    })
}
