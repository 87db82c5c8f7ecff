//! Ribbon shears, the expansion of a flex in the shear basis, localisation
//! and ribbon directions.

use std::collections::{BTreeMap, VecDeque};
use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{perp, MultigridSpec, Vec2};
use crate::rigidity::{flex_residual, Framework, VelocityField};
use crate::tiling::{Patch, RibbonSet, Tiling};

/// The field that is zero on one side of a ribbon and `shear` on the other.
#[derive(Clone, Debug)]
pub struct RibbonShear {
    pub ribbon: usize,
    pub base_joint: usize,
    /// `true` for joints on the side away from the base joint.
    pub moving: Vec<bool>,
    /// Unit vector orthogonal to the ribbon's internal edges.
    pub shear: Vec2,
}

impl RibbonShear {
    pub fn field(&self) -> VelocityField {
        VelocityField::real(
            self.moving
                .iter()
                .map(|&m| if m { self.shear } else { Vec2::zeros() })
                .collect(),
        )
    }
}

/// Joint nearest the centroid of all joints (lowest id on ties).
pub fn default_base_joint(tiling: &Tiling) -> usize {
    let n = tiling.joints().len() as f64;
    let centre = tiling.joints().iter().map(|j| j.pos).sum::<Vec2>() / n;
    (0..tiling.joints().len())
        .min_by(|&a, &b| {
            (tiling.pos(a) - centre)
                .norm()
                .total_cmp(&(tiling.pos(b) - centre).norm())
                .then(a.cmp(&b))
        })
        .expect("tiling has joints")
}

/// Lowest-id tile containing `joint`.
pub fn default_base_tile(tiling: &Tiling, joint: usize) -> usize {
    tiling
        .joint_edges(joint)
        .iter()
        .flat_map(|&e| tiling.edge_tiles(e).iter().copied())
        .min()
        .expect("joint lies on a tile")
}

/// One shear per ribbon. Sides come from flood-filling the joint graph with
/// the ribbon's internal edges removed; the tiling must be simply connected
/// with a simple boundary curve.
pub fn build_ribbon_shears(tiling: &Tiling, ribbons: &RibbonSet, base_joint: usize) -> Result<Vec<RibbonShear>> {
    let patch = Patch::full(tiling);
    if !(patch.simply_connected && patch.simple_boundary) {
        return Err(Error::InvalidPatch(
            "shears need a simply connected patch with a simple boundary".into(),
        ));
    }
    if base_joint >= tiling.joints().len() {
        return Err(Error::InvalidPatch(format!("base joint {base_joint} is not in the patch")));
    }
    let fw = Framework::from_tiling(tiling, &Default::default())?;
    let n = tiling.joints().len();
    let mut shears = Vec::with_capacity(ribbons.len());
    for ribbon in ribbons.iter() {
        let mut cut = vec![false; tiling.edges().len()];
        for &e in &ribbon.edges {
            cut[e] = true;
        }
        let mut side = vec![None; n];
        let mut sides = 0;
        for start in std::iter::once(base_joint).chain(0..n) {
            if side[start].is_some() {
                continue;
            }
            side[start] = Some(sides);
            let mut queue = VecDeque::from([start]);
            while let Some(j) = queue.pop_front() {
                for &e in tiling.joint_edges(j) {
                    if cut[e] {
                        continue;
                    }
                    let [a, b] = tiling.edges()[e].joints;
                    let other = if a == j { b } else { a };
                    if side[other].is_none() {
                        side[other] = Some(sides);
                        queue.push_back(other);
                    }
                }
            }
            sides += 1;
        }
        if sides != 2 {
            return Err(Error::InvalidPatch(format!(
                "removing ribbon {} splits the joints into {sides} parts",
                ribbon.id
            )));
        }
        let shear = RibbonShear {
            ribbon: ribbon.id,
            base_joint,
            moving: side.into_iter().map(|s| s == Some(1)).collect(),
            shear: perp(ribbon.direction),
        };
        let residual = flex_residual(&fw, &shear.field());
        if residual >= 1e-10 {
            return Err(Error::InvalidPatch(format!(
                "shear of ribbon {} has residual {residual:e}",
                ribbon.id
            )));
        }
        shears.push(shear);
    }
    Ok(shears)
}

/// Order in which newly reached tiles are queued.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BfsOrder {
    LowestId,
    HighestId,
    Shuffled(u64),
}

/// Coefficients of a flex in the basis `{u^x, u^y} ∪ {ribbon shears}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Expansion {
    pub alpha_x: f64,
    pub alpha_y: f64,
    /// Indexed by ribbon id.
    pub ribbons: Vec<f64>,
    /// Largest joint error of the reconstruction.
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpansionDoc {
    pub alpha_x: f64,
    pub alpha_y: f64,
    pub ribbons: BTreeMap<u64, f64>,
    pub residual: f64,
}

impl Expansion {
    pub fn to_doc(&self) -> ExpansionDoc {
        ExpansionDoc {
            alpha_x: self.alpha_x,
            alpha_y: self.alpha_y,
            ribbons: self.ribbons.iter().enumerate().map(|(r, &a)| (r as u64, a)).collect(),
            residual: self.residual,
        }
    }

    /// Ribbons whose coefficient exceeds `tol` in magnitude.
    pub fn support(&self, tol: f64) -> Vec<usize> {
        (0..self.ribbons.len()).filter(|&r| self.ribbons[r].abs() > tol).collect()
    }
}

/// `α_x u^x + α_y u^y + Σ α_ρ u^ρ`.
pub fn reconstruct(shears: &[RibbonShear], expansion: &Expansion, joints: usize) -> VelocityField {
    let mut u = VelocityField::translation(joints, Vec2::new(expansion.alpha_x, expansion.alpha_y));
    for s in shears {
        let a = expansion.ribbons[s.ribbon];
        for (j, &m) in s.moving.iter().enumerate() {
            if m {
                u.re[j] += a * s.shear;
            }
        }
    }
    u
}

/// Expands a flex of the unbraced patch by growing a region on which the
/// residual has been cancelled, one tile at a time from `base_tile`.
///
/// Crossing an internal edge of a ribbon not yet used, the residual at the
/// new joint must be parallel to that ribbon's shear vector, and its
/// component fixes the ribbon's coefficient. Crossing a used ribbon, the
/// residual must already vanish.
pub fn expand_flex(
    tiling: &Tiling,
    ribbons: &RibbonSet,
    shears: &[RibbonShear],
    u: &VelocityField,
    base_tile: usize,
    order: BfsOrder,
) -> Result<Expansion> {
    let n = tiling.joints().len();
    if u.len() != n || u.is_complex() {
        return Err(Error::NotAFlex("expansion needs a real field on every joint".into()));
    }
    if shears.len() != ribbons.len() {
        return Err(Error::NotAFlex("one shear per ribbon is required".into()));
    }
    let base = shears.first().map_or_else(|| tiling.tile(base_tile).joints[0], |s| s.base_joint);
    if !tiling.tile(base_tile).joints.contains(&base) {
        return Err(Error::InvalidPatch(format!("base tile {base_tile} does not contain the base joint")));
    }
    let by_ribbon: BTreeMap<usize, &RibbonShear> = shears.iter().map(|s| (s.ribbon, s)).collect();
    let scale = u.max_norm().max(f64::MIN_POSITIVE);
    let tol = 1e-8 * scale;

    let origin = u.re[base];
    let mut r: Vec<Vec2> = u.re.iter().map(|&v| v - origin).collect();
    let mut alpha = vec![None::<f64>; ribbons.len()];
    let mut covered = vec![false; n];
    covered[base] = true;

    let mut rng = match order {
        BfsOrder::Shuffled(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
        _ => None,
    };
    let mut visited = vec![false; tiling.tiles().len()];
    let mut queue = VecDeque::from([base_tile]);
    visited[base_tile] = true;
    while let Some(t) = queue.pop_front() {
        let js = tiling.tile(t).joints;
        let edges = tiling.tile_edges(t);
        // Two sweeps reach the corner opposite a single covered joint.
        for _ in 0..2 {
            for s in 0..4 {
                let (a, b) = (js[s], js[(s + 1) % 4]);
                let (c, q) = match (covered[a], covered[b]) {
                    (true, false) => (a, b),
                    (false, true) => (b, a),
                    _ => continue,
                };
                let rho = ribbons.edge_ribbon[edges[s]];
                let shear = by_ribbon[&rho];
                match alpha[rho] {
                    None => {
                        let delta = f64::from(shear.moving[q] as i8 - shear.moving[c] as i8);
                        let along = r[q].dot(&ribbons[rho].direction);
                        if along.abs() > tol || delta == 0.0 {
                            return Err(Error::NotAFlex(format!(
                                "velocity jump across ribbon {rho} is not a shear (off by {along:e})"
                            )));
                        }
                        let a_rho = r[q].dot(&shear.shear) * delta;
                        for (j, &m) in shear.moving.iter().enumerate() {
                            if m {
                                r[j] -= a_rho * shear.shear;
                            }
                        }
                        alpha[rho] = Some(a_rho);
                    }
                    Some(_) => {
                        if r[q].norm() > tol {
                            return Err(Error::NotAFlex(format!(
                                "residual {:e} left across used ribbon {rho}",
                                r[q].norm()
                            )));
                        }
                    }
                }
                covered[q] = true;
            }
        }
        let mut next: Vec<usize> = tiling.neighbours(t).into_iter().filter(|&s| !visited[s]).collect();
        match order {
            BfsOrder::LowestId => {}
            BfsOrder::HighestId => next.reverse(),
            BfsOrder::Shuffled(_) => next.shuffle(rng.as_mut().expect("seeded")),
        }
        for s in next {
            visited[s] = true;
            queue.push_back(s);
        }
    }
    if let Some(rho) = alpha.iter().position(Option::is_none) {
        return Err(Error::InvalidPatch(format!("ribbon {rho} was never crossed")));
    }
    let final_residual = r.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if final_residual > tol {
        return Err(Error::NotAFlex(format!("residual {final_residual:e} remains after expansion")));
    }
    let mut expansion = Expansion {
        alpha_x: origin.x,
        alpha_y: origin.y,
        ribbons: alpha.into_iter().map(|a| a.expect("all ribbons used")).collect(),
        residual: 0.0,
    };
    let back = reconstruct(shears, &expansion, n);
    expansion.residual = (0..n).map(|j| (back.re[j] - u.re[j]).norm()).fold(0.0, f64::max);
    Ok(expansion)
}

/// A line `{p : ⟨p, n⟩ = offset}` with unit normal `n = direction^⊥`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub direction: Vec2,
    pub offset: f64,
}

impl Line {
    pub fn new(direction: Vec2, offset: f64) -> Self {
        Line {
            direction: direction.normalize(),
            offset,
        }
    }

    pub fn through_origin(direction: Vec2) -> Self {
        Line::new(direction, 0.0)
    }

    /// Line of the given direction through the mean of `points`.
    pub fn through_mean(direction: Vec2, points: &[Vec2]) -> Self {
        let d = direction.normalize();
        let mean = points.iter().sum::<Vec2>() / points.len().max(1) as f64;
        Line::new(d, mean.dot(&perp(d)))
    }

    pub fn distance(&self, p: Vec2) -> f64 {
        (p.dot(&perp(self.direction)) - self.offset).abs()
    }

    /// Angle of the direction in `[0, π)`.
    pub fn angle(&self) -> f64 {
        self.direction.y.atan2(self.direction.x).rem_euclid(PI)
    }
}

pub fn ribbon_centroids(tiling: &Tiling, ribbons: &RibbonSet, rho: usize) -> Vec<Vec2> {
    ribbons[rho].tiles.iter().map(|&t| tiling.centroid(t)).collect()
}

/// Total-least-squares line through the tile centroids of a ribbon.
pub fn fit_ribbon_line(tiling: &Tiling, ribbons: &RibbonSet, rho: usize) -> Line {
    let pts = ribbon_centroids(tiling, ribbons, rho);
    let n = pts.len() as f64;
    let mean = pts.iter().sum::<Vec2>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in &pts {
        let d = p - mean;
        sxx += d.x * d.x;
        sxy += d.x * d.y;
        syy += d.y * d.y;
    }
    let angle = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    Line::through_mean(Vec2::new(angle.cos(), angle.sin()), &pts)
}

/// Default localisation width: 1.5 times the largest tile diameter.
pub fn default_width(tiling: &Tiling) -> f64 {
    1.5 * (0..tiling.tiles().len()).map(|t| tiling.diameter(t)).fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocalisationVerdict {
    /// No translation part and every ribbon in the support stays near the line.
    pub localised: bool,
    /// Every ribbon in the support stays near the line (translation arbitrary).
    pub bulk_shear: bool,
    pub support: Vec<usize>,
    /// Ribbons in the support with a centroid farther than the width.
    pub outside: Vec<usize>,
}

pub fn classify_localised(
    expansion: &Expansion,
    tiling: &Tiling,
    ribbons: &RibbonSet,
    line: &Line,
    width: f64,
) -> LocalisationVerdict {
    let scale = expansion
        .ribbons
        .iter()
        .chain([&expansion.alpha_x, &expansion.alpha_y])
        .fold(0.0_f64, |m, a| m.max(a.abs()));
    let tol = 1e-9 * scale.max(f64::MIN_POSITIVE);
    let support = expansion.support(tol);
    let outside: Vec<usize> = support
        .iter()
        .copied()
        .filter(|&rho| ribbon_centroids(tiling, ribbons, rho).iter().any(|&c| line.distance(c) > width))
        .collect();
    let translation = expansion.alpha_x.abs().max(expansion.alpha_y.abs()) > tol;
    LocalisationVerdict {
        localised: outside.is_empty() && !translation,
        bulk_shear: outside.is_empty(),
        support,
        outside,
    }
}

/// Direction of the lines along which grid-`i` ribbons run:
/// `v_i = Σ_{j≠i} δ_ij σ_ij e_j`, with `δ_ij` the relative frequency of
/// grid-`j` crossings along a grid-`i` line and `σ_ij` their index sign.
pub fn ribbon_direction(spec: &MultigridSpec, i: usize) -> Vec2 {
    let d = spec.grid(i).line_direction();
    let mut v = Vec2::zeros();
    let mut total = 0.0;
    for j in (0..spec.r()).filter(|&j| j != i) {
        let rate = spec.grid(j).index_gradient().dot(&d);
        total += rate.abs();
        v += spec.dual_vector(j) * rate;
    }
    (v / total).normalize()
}

/// Angles in `[0, π)` of the distinct ribbon directions, ascending.
pub fn ribbon_figure(spec: &MultigridSpec) -> Vec<f64> {
    let mut angles: Vec<f64> = Vec::new();
    for i in 0..spec.r() {
        let v = ribbon_direction(spec, i);
        let a = v.y.atan2(v.x).rem_euclid(PI);
        let a = if PI - a < 1e-9 { 0.0 } else { a };
        if !angles.iter().any(|b| (a - b).abs() < 1e-9) {
            angles.push(a);
        }
    }
    angles.sort_by(f64::total_cmp);
    angles
}

/// Smallest angle between two directions, modulo π.
pub fn angle_between_lines(a: Vec2, b: Vec2) -> f64 {
    let t = crate::geometry::cross(a, b).abs().atan2(a.dot(&b).abs());
    t.min(PI - t)
}
