//! The Bolza surface: genus 2, regular octagon with interior angles pi/4.
//!
//! Letters 0..3 are the side pairings `g_k = R(k pi/4) T R(-k pi/4)` with
//! `T = [[1 + sqrt2, sqrt(2 + 2 sqrt2)], [., .]]`; letters 4..7 are their
//! inverses. Letter `j` moves the origin in direction `j pi/4`.

use std::collections::HashMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{distance_c, flow_c, DiskPoint, MobiusMap};
use crate::lagrangian::LagrangianState;

/// `arccosh(1 + sqrt 2)`: distance from the center of the octagon to its sides.
pub const INRADIUS: f64 = 1.528570919480998;
/// `arccosh((1 + sqrt 2)^2)`: distance from the center to the vertices.
pub const CIRCUMRADIUS: f64 = 2.448452447678076;
/// Minimum decrease of `d(0, .)` for a reduction step.
pub const REDUCE_SLACK: f64 = 1e-9;
/// Extra radius of the neighbour list beyond `2 * CIRCUMRADIUS`.
pub const NEIGHBOR_CAP: f64 = 1.0;
pub const DEFAULT_MAX_BALL_RADIUS: f64 = 18.0;
pub const DEFAULT_MAX_BALL_ELEMENTS: usize = 4_000_000;
const MAX_REDUCE_STEPS: usize = 10_000;

#[derive(Debug, Clone)]
pub struct FuchsianGroup {
    pub side_pairings: [MobiusMap; 8],
}

impl FuchsianGroup {
    pub fn bolza() -> Self {
        let s2 = 2f64.sqrt();
        let t = MobiusMap {
            a: Complex64::new(1.0 + s2, 0.0),
            b: Complex64::new((2.0 + 2.0 * s2).sqrt(), 0.0),
        };
        let g = |k: usize| {
            let th = k as f64 * PI / 4.0;
            MobiusMap::rotation(th).compose(&t).compose(&MobiusMap::rotation(-th))
        };
        let gens = [g(0), g(1), g(2), g(3)];
        FuchsianGroup {
            side_pairings: [
                gens[0],
                gens[1],
                gens[2],
                gens[3],
                gens[0].inverse(),
                gens[1].inverse(),
                gens[2].inverse(),
                gens[3].inverse(),
            ],
        }
    }

    /// Map of a word in the letters 0..7.
    pub fn word_map(&self, word: &[u8]) -> MobiusMap {
        word.iter()
            .fold(MobiusMap::IDENTITY, |m, &l| m.compose(&self.side_pairings[l as usize]))
    }

    /// Coefficient distance of `g0 g1^-1 g2 g3^-1 g0^-1 g1 g2^-1 g3` from the identity.
    pub fn relation_residual(&self) -> f64 {
        self.word_map(&[0, 5, 2, 7, 4, 1, 6, 3]).coefficient_distance(&MobiusMap::IDENTITY)
    }
}

pub fn inverse_letter(l: u8) -> u8 {
    (l + 4) % 8
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurfaceConfig {
    /// Injectivity radius, half the shortest displacement in `group_ball(6)`.
    pub r_i: f64,
    /// Gauss-Bonnet area of the octagon.
    pub volume: f64,
    pub circumradius: f64,
    pub domain_vertices: Vec<DiskPoint>,
}

#[derive(Debug, Clone)]
pub struct GroupElement {
    pub map: MobiusMap,
    pub word: Vec<u8>,
    pub displacement: f64,
}

impl GroupElement {
    fn order_key(&self) -> (usize, &[u8]) {
        (self.word.len(), &self.word)
    }
}

/// Elements with `d(0, g 0) <= radius`, complete and duplicate-free, sorted by
/// word length and then lexicographically.
///
/// The search walks tile adjacencies and prunes at `radius + CIRCUMRADIUS`: every
/// tile crossed by the segment from 0 to `g 0` has its center within that bound,
/// so no element of the ball is unreachable.
pub fn group_ball_with_limits(
    group: &FuchsianGroup,
    radius: f64,
    max_radius: f64,
    max_elements: usize,
) -> Result<Vec<GroupElement>> {
    if radius > max_radius {
        return Err(Error::HorizonTooLarge { required: radius, max: max_radius });
    }
    let prune = radius + CIRCUMRADIUS + 1e-9;
    let quant = 1e9;
    let key = |z: Complex64| ((z.re * quant).round() as i64, (z.im * quant).round() as i64);
    let mut seen: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    let mut all: Vec<GroupElement> = vec![GroupElement {
        map: MobiusMap::IDENTITY,
        word: Vec::new(),
        displacement: 0.0,
    }];
    seen.entry((0, 0)).or_default().push(0);
    let mut frontier = vec![0usize];
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for &i in &frontier {
            for l in 0..8u8 {
                if all[i].word.last() == Some(&inverse_letter(l)) {
                    continue;
                }
                let map = all[i].map.compose(&group.side_pairings[l as usize]);
                let z = map.apply_c(Complex64::new(0.0, 0.0));
                let disp = map.displacement();
                if disp > prune {
                    continue;
                }
                let (kx, ky) = key(z);
                let mut dup = false;
                'bins: for dx in -1..=1 {
                    for dy in -1..=1 {
                        if let Some(list) = seen.get(&(kx + dx, ky + dy)) {
                            for &j in list {
                                let w = all[j].map.apply_c(Complex64::new(0.0, 0.0));
                                if (w - z).norm() < 2.0 / quant {
                                    dup = true;
                                    break 'bins;
                                }
                            }
                        }
                    }
                }
                if dup {
                    continue;
                }
                let mut word = all[i].word.clone();
                word.push(l);
                all.push(GroupElement { map, word, displacement: disp });
                if all.len() > max_elements {
                    return Err(Error::Resource(format!(
                        "group ball of radius {radius} exceeds {max_elements} elements"
                    )));
                }
                seen.entry((kx, ky)).or_default().push(all.len() - 1);
                next.push(all.len() - 1);
            }
        }
        frontier = next;
    }
    let mut ball: Vec<GroupElement> =
        all.into_iter().filter(|g| g.displacement <= radius + 1e-12).collect();
    ball.sort_by(|a, b| a.order_key().cmp(&b.order_key()));
    Ok(ball)
}

pub fn group_ball(group: &FuchsianGroup, radius: f64) -> Result<Vec<GroupElement>> {
    group_ball_with_limits(group, radius, DEFAULT_MAX_BALL_RADIUS, DEFAULT_MAX_BALL_ELEMENTS)
}

/// The surface with a precomputed group ball used for lift enumeration.
#[derive(Debug, Clone)]
pub struct Surface {
    pub group: FuchsianGroup,
    pub config: SurfaceConfig,
    /// Elements with displacement at most `2 * CIRCUMRADIUS + NEIGHBOR_CAP`.
    pub neighbors: Vec<GroupElement>,
    pub ball: Vec<GroupElement>,
    pub ball_radius: f64,
}

impl Surface {
    pub fn bolza(ball_radius: f64) -> Result<Self> {
        let group = FuchsianGroup::bolza();
        let small = group_ball(&group, 6.0)?;
        let r_i = small
            .iter()
            .filter(|g| !g.word.is_empty())
            .map(|g| g.displacement)
            .fold(f64::INFINITY, f64::min)
            / 2.0;
        let domain_vertices = octagon_vertices(&group);
        let volume = polygon_area(&domain_vertices);
        let circumradius = domain_vertices
            .iter()
            .map(|v| distance_c(Complex64::new(0.0, 0.0), v.z()))
            .fold(0.0, f64::max);
        let neighbors = group_ball(&group, 2.0 * CIRCUMRADIUS + NEIGHBOR_CAP)?;
        let ball = group_ball(&group, ball_radius)?;
        Ok(Surface {
            group,
            config: SurfaceConfig { r_i, volume, circumradius, domain_vertices },
            neighbors,
            ball,
            ball_radius,
        })
    }

    /// Greedy reduction into the Dirichlet octagon. Returns `(z, g)` with `g z = z_tilde`.
    pub fn reduce(&self, zt: &DiskPoint) -> Result<(DiskPoint, MobiusMap)> {
        zt.check()?;
        let (z, g) = self.reduce_c(zt.z(), &MobiusMap::IDENTITY)?;
        Ok((DiskPoint::from_complex_unchecked(z), g))
    }

    /// Reduction starting from a guess `hint` for the deck map.
    pub fn reduce_c(&self, zt: Complex64, hint: &MobiusMap) -> Result<(Complex64, MobiusMap)> {
        let mut g = *hint;
        let mut z = g.inverse().apply_c(zt);
        let mut r = z.norm();
        for _ in 0..MAX_REDUCE_STEPS {
            let d0 = 2.0 * r.atanh();
            let mut best: Option<(usize, Complex64, f64)> = None;
            for (l, s) in self.group.side_pairings.iter().enumerate() {
                let w = s.apply_c(z);
                let rw = w.norm();
                if best.map_or(true, |(_, _, rb)| rw < rb - 1e-15) {
                    best = Some((l, w, rw));
                }
            }
            let (l, w, rw) = best.expect("eight side pairings");
            if 2.0 * rw.atanh() < d0 - REDUCE_SLACK {
                g = g.compose(&self.group.side_pairings[l].inverse());
                z = w;
                r = rw;
            } else {
                return Ok((z, g));
            }
        }
        Err(Error::BoundaryPathology { u: zt.re, v: zt.im, steps: MAX_REDUCE_STEPS })
    }

    /// True when no side pairing brings `z` closer to 0 by more than `tol`.
    pub fn in_domain(&self, z: &DiskPoint, tol: f64) -> bool {
        let d0 = distance_c(Complex64::new(0.0, 0.0), z.z());
        self.group
            .side_pairings
            .iter()
            .all(|s| distance_c(Complex64::new(0.0, 0.0), s.apply_c(z.z())) >= d0 - tol)
    }

    /// Distance on the surface between the projections of `a` and `b`, exact when
    /// it is below `NEIGHBOR_CAP` and otherwise at least that large.
    pub fn dist_x(&self, a: Complex64, b: Complex64) -> Result<f64> {
        let (ra, _) = self.reduce_c(a, &MobiusMap::IDENTITY)?;
        let (rb, _) = self.reduce_c(b, &MobiusMap::IDENTITY)?;
        Ok(self.dist_reduced(ra, rb))
    }

    /// As `dist_x` for points already in the domain.
    pub fn dist_reduced(&self, a: Complex64, b: Complex64) -> f64 {
        self.neighbors
            .iter()
            .map(|g| distance_c(a, g.map.apply_c(b)))
            .fold(f64::INFINITY, f64::min)
    }

    /// Uniform random point of the octagon (hyperbolic area measure).
    pub fn random_point(&self, rng: &mut crate::rng::Stream) -> DiskPoint {
        let cosh_max = CIRCUMRADIUS.cosh();
        loop {
            let r = (1.0 + rng.next_f64() * (cosh_max - 1.0)).acosh();
            let th = rng.next_f64() * std::f64::consts::TAU;
            let z = DiskPoint::from_complex_unchecked(Complex64::from_polar((r / 2.0).tanh(), th));
            if self.in_domain(&z, 0.0) {
                return z;
            }
        }
    }

    /// Ball radius that `enumerate_lifts` needs for horizon `t`.
    pub fn lift_radius(t: f64, state: &LagrangianState) -> f64 {
        t + state.amplitude_radius
            + distance_c(Complex64::new(0.0, 0.0), state.amplitude_center.z())
            + CIRCUMRADIUS
            + 1e-6
    }
}

/// Lifts `g x` of `x` whose backward characteristic of length `t` lands in `supp a0`.
#[derive(Debug, Clone)]
pub struct Lift {
    pub map: MobiusMap,
    pub word: Vec<u8>,
    pub point: DiskPoint,
}

#[derive(Debug, Clone)]
pub struct LiftSet {
    pub elements: Vec<Lift>,
    pub t: f64,
}

pub fn enumerate_lifts(
    surface: &Surface,
    x: &DiskPoint,
    t: f64,
    state: &LagrangianState,
) -> Result<LiftSet> {
    if !(t >= 0.0) {
        return Err(Error::Validation(format!("lift horizon must be nonnegative, got {t}")));
    }
    x.check()?;
    let need = Surface::lift_radius(t, state);
    if need > surface.ball_radius {
        return Err(Error::HorizonTooLarge { required: need, max: surface.ball_radius });
    }
    let mut elements = Vec::new();
    for g in &surface.ball {
        let xt = g.map.apply_c(x.z());
        if backward_lands_in_support(state, xt, t) {
            elements.push(Lift {
                map: g.map,
                word: g.word.clone(),
                point: DiskPoint::from_complex_unchecked(xt),
            });
        }
    }
    Ok(LiftSet { elements, t })
}

pub(crate) fn backward_lands_in_support(state: &LagrangianState, xt: Complex64, t: f64) -> bool {
    let (y, _) = flow_c(xt, state.gradient_dir_c(xt), -t);
    state.in_support_c(y)
}

/// Vertices of the Dirichlet octagon, between faces `j` and `j + 1`.
fn octagon_vertices(group: &FuchsianGroup) -> Vec<DiskPoint> {
    let zero = Complex64::new(0.0, 0.0);
    (0..8)
        .map(|j| {
            let dir = Complex64::from_polar(1.0, (2 * j + 1) as f64 * PI / 8.0);
            let s = group.side_pairings[j];
            // The vertex is where the ray meets the bisector of 0 and s(0).
            let f = |r: f64| {
                let z = dir * (r / 2.0).tanh();
                distance_c(zero, z) - distance_c(z, s.apply_c(zero))
            };
            let (mut lo, mut hi) = (0.0, 6.0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if f(mid) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            DiskPoint::from_complex_unchecked(dir * (0.5 * (lo + hi) / 2.0).tanh())
        })
        .collect()
}

/// Area of a star-shaped geodesic polygon about 0 as a sum of triangle defects.
fn polygon_area(vertices: &[DiskPoint]) -> f64 {
    let zero = Complex64::new(0.0, 0.0);
    let angle = |a: f64, b: f64, opposite: f64| {
        ((a.cosh() * b.cosh() - opposite.cosh()) / (a.sinh() * b.sinh())).clamp(-1.0, 1.0).acos()
    };
    let n = vertices.len();
    (0..n)
        .map(|k| {
            let (p, q) = (vertices[k].z(), vertices[(k + 1) % n].z());
            let (a, b, c) = (distance_c(zero, p), distance_c(zero, q), distance_c(p, q));
            PI - angle(a, b, c) - angle(a, c, b) - angle(b, c, a)
        })
        .sum()
}
