//! Regular multigrids as line arrangements.
//!
//! A grid is the image of the vertical integer lines `{x = m}` under an affine
//! map `z ↦ L z + t`. The band index of a point for that grid is
//! `floor((L⁻¹(z − t))_x)`, an affine function floored, so everything about a
//! grid can be phrased in terms of its index gradient `g = L⁻ᵀ (1, 0)`.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec2 = nalgebra::Vector2<f64>;
pub type Mat2 = nalgebra::Matrix2<f64>;

/// Distance below which a point counts as lying on a grid line.
pub const ON_LINE_EPS: f64 = 1e-11;

/// Quarter turn counter-clockwise.
#[inline]
pub fn perp(v: Vec2) -> Vec2 {
    Vec2::new(-v.y, v.x)
}

#[inline]
pub fn cross(a: Vec2, b: Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Clockwise rotation by `angle`.
pub fn clockwise_rotation(angle: f64) -> Mat2 {
    let (s, c) = angle.sin_cos();
    Mat2::new(c, s, -s, c)
}

/// Band-index vector `(m_1, …, m_r)` of a point or a face of the arrangement.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IndexVector(pub Vec<i64>);

impl IndexVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Returns a copy with coordinate `j` shifted by `delta`.
    pub fn step(&self, j: usize, delta: i64) -> IndexVector {
        let mut m = self.0.clone();
        m[j] += delta;
        IndexVector(m)
    }

    /// If `other - self` is a signed unit step `±δ_j`, returns `(j, ±1)`.
    pub fn unit_difference(&self, other: &IndexVector) -> Option<(usize, i64)> {
        if self.len() != other.len() {
            return None;
        }
        let mut found = None;
        for (j, (a, b)) in self.0.iter().zip(&other.0).enumerate() {
            let d = b - a;
            if d == 0 {
                continue;
            }
            if d.abs() != 1 || found.is_some() {
                return None;
            }
            found = Some((j, d));
        }
        found
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct RawGrid {
    linear: [[f64; 2]; 2],
    translation: [f64; 2],
}

/// One family of equally spaced parallel lines.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGrid", into = "RawGrid")]
pub struct AffineGrid {
    linear: Mat2,
    translation: Vec2,
    inverse: Mat2,
}

impl TryFrom<RawGrid> for AffineGrid {
    type Error = Error;

    fn try_from(raw: RawGrid) -> Result<Self> {
        let l = raw.linear;
        AffineGrid::new(
            Mat2::new(l[0][0], l[0][1], l[1][0], l[1][1]),
            Vec2::new(raw.translation[0], raw.translation[1]),
        )
    }
}

impl From<AffineGrid> for RawGrid {
    fn from(g: AffineGrid) -> Self {
        let l = g.linear;
        RawGrid {
            linear: [[l[(0, 0)], l[(0, 1)]], [l[(1, 0)], l[(1, 1)]]],
            translation: [g.translation.x, g.translation.y],
        }
    }
}

impl AffineGrid {
    /// The linear part must be invertible with positive determinant.
    pub fn new(linear: Mat2, translation: Vec2) -> Result<Self> {
        if !linear.iter().chain(translation.iter()).all(|x| x.is_finite()) {
            return Err(Error::InvalidSpec("non-finite grid coefficient".into()));
        }
        let det = linear.determinant();
        let scale = linear.norm_squared().max(f64::MIN_POSITIVE);
        if det.abs() <= 1e-12 * scale {
            return Err(Error::InvalidSpec(format!(
                "degenerate linear part (determinant {det:e})"
            )));
        }
        if det < 0.0 {
            return Err(Error::InvalidSpec(format!(
                "linear part has negative determinant {det}"
            )));
        }
        let inverse = linear
            .try_inverse()
            .ok_or_else(|| Error::InvalidSpec("linear part is not invertible".into()))?;
        Ok(AffineGrid {
            linear,
            translation,
            inverse,
        })
    }

    pub fn linear(&self) -> &Mat2 {
        &self.linear
    }

    pub fn translation(&self) -> &Vec2 {
        &self.translation
    }

    /// Gradient of the (unfloored) band-index function. Points in the
    /// direction of increasing line index.
    pub fn index_gradient(&self) -> Vec2 {
        self.inverse.transpose() * Vec2::new(1.0, 0.0)
    }

    /// Unfloored band index `(L⁻¹(z − t))_x`.
    pub fn index_value(&self, z: Vec2) -> f64 {
        (self.inverse * (z - self.translation)).x
    }

    /// Unit direction of the lines, the image of the y-axis.
    pub fn line_direction(&self) -> Vec2 {
        (self.linear * Vec2::new(0.0, 1.0)).normalize()
    }

    /// Perpendicular distance between consecutive lines.
    pub fn spacing(&self) -> f64 {
        1.0 / self.index_gradient().norm()
    }

    /// Indices of the lines meeting the closed disc of the given radius about
    /// the origin.
    pub fn lines_in_disc(&self, radius: f64) -> RangeInclusive<i64> {
        let f0 = self.index_value(Vec2::zeros());
        let reach = radius * self.index_gradient().norm();
        ((f0 - reach).ceil() as i64)..=((f0 + reach).floor() as i64)
    }

    /// Point of line `k` closest to the origin.
    pub fn line_foot(&self, k: i64) -> Vec2 {
        let g = self.index_gradient();
        let f0 = self.index_value(Vec2::zeros());
        g * ((k as f64 - f0) / g.norm_squared())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct RawSpec {
    grids: Vec<AffineGrid>,
    weights: Vec<f64>,
}

/// `r` affine grids with their dual edge lengths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct MultigridSpec {
    grids: Vec<AffineGrid>,
    weights: Vec<f64>,
}

impl TryFrom<RawSpec> for MultigridSpec {
    type Error = Error;

    fn try_from(raw: RawSpec) -> Result<Self> {
        MultigridSpec::new(raw.grids, raw.weights)
    }
}

impl From<MultigridSpec> for RawSpec {
    fn from(s: MultigridSpec) -> Self {
        RawSpec {
            grids: s.grids,
            weights: s.weights,
        }
    }
}

/// Lines whose directions differ by less than this (in radians) are parallel.
const PARALLEL_EPS: f64 = 1e-12;

impl MultigridSpec {
    pub fn new(grids: Vec<AffineGrid>, weights: Vec<f64>) -> Result<Self> {
        if grids.len() < 2 {
            return Err(Error::InvalidSpec(format!(
                "need at least 2 grids, got {}",
                grids.len()
            )));
        }
        if weights.len() != grids.len() {
            return Err(Error::InvalidSpec(format!(
                "{} grids but {} weights",
                grids.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::InvalidSpec(format!("weight {w} is not positive")));
        }
        let spec = MultigridSpec { grids, weights };
        if let Some((i, j)) = spec.parallel_pairs().first() {
            return Err(Error::InvalidSpec(format!(
                "grids {i} and {j} have parallel lines"
            )));
        }
        Ok(spec)
    }

    /// Number of grids.
    pub fn r(&self) -> usize {
        self.grids.len()
    }

    pub fn grids(&self) -> &[AffineGrid] {
        &self.grids
    }

    pub fn grid(&self, j: usize) -> &AffineGrid {
        &self.grids[j]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Copy of the spec with different weights.
    pub fn with_weights(&self, weights: Vec<f64>) -> Result<Self> {
        MultigridSpec::new(self.grids.clone(), weights)
    }

    fn parallel_pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.r() {
            for j in i + 1..self.r() {
                let s = cross(self.grids[i].line_direction(), self.grids[j].line_direction());
                if s.abs() < PARALLEL_EPS {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Dual edge vector `e_j`: unit normal of grid `j` towards increasing
    /// index, scaled by the weight `λ_j`.
    pub fn dual_vector(&self, j: usize) -> Vec2 {
        self.grids[j].index_gradient().normalize() * self.weights[j]
    }

    pub fn dual_vectors(&self) -> Vec<Vec2> {
        (0..self.r()).map(|j| self.dual_vector(j)).collect()
    }

    /// Band index of `z` for grid `j`: the unique `m` with `z ∈ A_j([m, m+1) × ℝ)`.
    pub fn grid_index(&self, j: usize, z: Vec2) -> Result<i64> {
        let grid = &self.grids[j];
        let f = grid.index_value(z);
        let nearest = f.round();
        if (f - nearest).abs() * grid.spacing() < ON_LINE_EPS {
            return Err(Error::OnLine {
                grid: j,
                line: nearest as i64,
            });
        }
        Ok(f.floor() as i64)
    }

    pub fn index_vector(&self, z: Vec2) -> Result<IndexVector> {
        (0..self.r())
            .map(|j| self.grid_index(j, z))
            .collect::<Result<Vec<_>>>()
            .map(IndexVector)
    }

    /// Tiling position `Σ m_j e_j` of the vertex dual to the face with index `m`.
    pub fn position(&self, m: &IndexVector) -> Vec2 {
        m.0.iter()
            .enumerate()
            .map(|(j, &mj)| self.dual_vector(j) * mj as f64)
            .sum()
    }

    /// Intersection point of line `k` of grid `i` with line `l` of grid `j`.
    pub fn intersection(&self, i: usize, k: i64, j: usize, l: i64) -> Vec2 {
        let (gi, gj) = (self.grids[i].index_gradient(), self.grids[j].index_gradient());
        let rhs = Vec2::new(
            k as f64 - self.grids[i].index_value(Vec2::zeros()),
            l as f64 - self.grids[j].index_value(Vec2::zeros()),
        );
        let m = Mat2::new(gi.x, gi.y, gj.x, gj.y);
        m.lu().solve(&rhs).expect("non-parallel grids")
    }

    /// Every intersection of two lines inside the closed disc, ordered by
    /// grid pair then line indices.
    pub fn intersections_in_disc(&self, radius: f64) -> Vec<GridIntersection> {
        let mut out = Vec::new();
        for i in 0..self.r() {
            for k in self.grids[i].lines_in_disc(radius) {
                let line = self.crossings(i, k, radius);
                out.extend(line.into_iter().filter(|x| x.grid_pair.0 == i));
            }
        }
        out.sort_by_key(|a| (a.grid_pair, a.line_indices));
        out
    }

    /// Crossings of line `(i, k)` with all other grids inside the disc, sorted
    /// by arclength from the foot of the perpendicular from the origin.
    fn crossings(&self, i: usize, k: i64, radius: f64) -> Vec<GridIntersection> {
        let grid = &self.grids[i];
        let foot = grid.line_foot(k);
        let dist2 = foot.norm_squared();
        if dist2 > radius * radius {
            return Vec::new();
        }
        let half = (radius * radius - dist2).sqrt();
        let dir = grid.line_direction();
        let mut out = Vec::new();
        for j in (0..self.r()).filter(|&j| j != i) {
            let other = &self.grids[j];
            let rate = other.index_gradient().dot(&dir);
            let at_foot = other.index_value(foot);
            let (lo, hi) = (at_foot - half * rate.abs(), at_foot + half * rate.abs());
            for l in (lo.ceil() as i64)..=(hi.floor() as i64) {
                let s = (l as f64 - at_foot) / rate;
                let point = foot + dir * s;
                let (grid_pair, line_indices) = if i < j { ((i, j), (k, l)) } else { ((j, i), (l, k)) };
                out.push(GridIntersection {
                    grid_pair,
                    line_indices,
                    point,
                    arclength: s,
                });
            }
        }
        out.sort_by(|a, b| a.arclength.total_cmp(&b.arclength));
        out
    }
}

/// Crossing of two grid lines.
#[derive(Clone, Debug, PartialEq)]
pub struct GridIntersection {
    /// `(i, j)` with `i < j`.
    pub grid_pair: (usize, usize),
    /// Line index in grid `i`, then in grid `j`.
    pub line_indices: (i64, i64),
    pub point: Vec2,
    /// Arclength along the line being enumerated, measured from the point of
    /// that line closest to the origin.
    pub arclength: f64,
}

impl GridIntersection {
    /// The `(grid, line)` on the other side of the crossing from `grid`.
    pub fn other(&self, grid: usize) -> (usize, i64) {
        if self.grid_pair.0 == grid {
            (self.grid_pair.1, self.line_indices.1)
        } else {
            (self.grid_pair.0, self.line_indices.0)
        }
    }
}

/// Where one foreign grid crosses a given line: `s ∈ {spacing·n + phase}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ForeignSpacing {
    pub grid: usize,
    pub spacing: f64,
    /// Offset in `[0, spacing)`.
    pub phase: f64,
    /// Sign of the grid-`j` index increment when walking along the line.
    pub sign: i8,
}

#[derive(Clone, Debug)]
pub struct LineIntersections {
    pub grid: usize,
    pub line: i64,
    pub foot: Vec2,
    pub direction: Vec2,
    pub intersections: Vec<GridIntersection>,
    pub foreign: Vec<ForeignSpacing>,
}

/// Spacing, phase and index-increment sign of grid `j` along the lines of grid `i`.
pub fn foreign_spacing(spec: &MultigridSpec, i: usize, k: i64, j: usize) -> ForeignSpacing {
    let grid = spec.grid(i);
    let foot = grid.line_foot(k);
    let rate = spec.grid(j).index_gradient().dot(&grid.line_direction());
    let spacing = 1.0 / rate.abs();
    let first = -spec.grid(j).index_value(foot) / rate;
    ForeignSpacing {
        grid: j,
        spacing,
        phase: first.rem_euclid(spacing),
        sign: if rate > 0.0 { 1 } else { -1 },
    }
}

/// All crossings on line `k` of grid `i` within the window, sorted by arclength.
pub fn intersections_on_line(
    spec: &MultigridSpec,
    i: usize,
    k: i64,
    window_radius: f64,
) -> Result<LineIntersections> {
    let intersections = spec.crossings(i, k, window_radius);
    let eps = default_eps(window_radius);
    for pair in intersections.windows(2) {
        if pair[1].arclength - pair[0].arclength < eps {
            return Err(Error::Irregular(format!(
                "line {k} of grid {i} passes through a triple point near ({:.6}, {:.6})",
                pair[0].point.x, pair[0].point.y
            )));
        }
    }
    let foreign = (0..spec.r())
        .filter(|&j| j != i)
        .map(|j| foreign_spacing(spec, i, k, j))
        .collect();
    Ok(LineIntersections {
        grid: i,
        line: k,
        foot: spec.grid(i).line_foot(k),
        direction: spec.grid(i).line_direction(),
        intersections,
        foreign,
    })
}

/// Default regularity tolerance for a window.
pub fn default_eps(window_radius: f64) -> f64 {
    1e-9 * window_radius.max(1.0)
}

/// Near-coincidences within this multiple of `eps` make a spec fragile.
pub const FRAGILE_FACTOR: f64 = 1e3;

/// Three lines `(grid, line)` meeting (numerically) at one point.
pub type TriplePoint = [(usize, i64); 3];

#[derive(Clone, Debug, Serialize)]
pub struct RegularityReport {
    pub window_radius: f64,
    pub eps: f64,
    pub parallel_pairs: Vec<(usize, usize)>,
    /// Triples of lines meeting within `eps`.
    pub triple_points: Vec<TriplePoint>,
    /// Triples meeting within `FRAGILE_FACTOR · eps` (a superset of the above).
    pub fragile_points: Vec<TriplePoint>,
    /// Smallest angle between lines of two different grids, in `(0, π/2]`.
    pub min_angle: f64,
    /// Smallest distance between consecutive parallel lines.
    pub min_spacing: f64,
    /// Smallest gap between consecutive crossings on any line in the window.
    pub min_point_gap: f64,
}

impl RegularityReport {
    pub fn is_regular(&self) -> bool {
        self.parallel_pairs.is_empty() && self.triple_points.is_empty()
    }

    /// Regular with no near-triple points; downstream construction requires this.
    pub fn is_robust(&self) -> bool {
        self.is_regular() && self.fragile_points.is_empty()
    }
}

/// Scans every line meeting the window for triple points.
pub fn validate_regular(spec: &MultigridSpec, window_radius: f64, eps: f64) -> Result<RegularityReport> {
    if window_radius.is_nan() || eps.is_nan() || window_radius <= 0.0 || eps <= 0.0 {
        return Err(Error::InvalidSpec(format!(
            "window radius {window_radius} and eps {eps} must be positive"
        )));
    }
    let r = spec.r();
    let mut triples = BTreeSet::new();
    let mut fragile = BTreeSet::new();
    let mut min_point_gap = f64::INFINITY;
    for i in 0..r {
        for k in spec.grid(i).lines_in_disc(window_radius) {
            let line = spec.crossings(i, k, window_radius);
            for pair in line.windows(2) {
                let gap = pair[1].arclength - pair[0].arclength;
                min_point_gap = min_point_gap.min(gap);
                if gap < FRAGILE_FACTOR * eps {
                    let mut t = [(i, k), pair[0].other(i), pair[1].other(i)];
                    t.sort();
                    fragile.insert(t);
                    if gap < eps {
                        triples.insert(t);
                    }
                }
            }
        }
    }
    let mut min_angle = PI / 2.0;
    for i in 0..r {
        for j in i + 1..r {
            let s = cross(spec.grid(i).line_direction(), spec.grid(j).line_direction());
            min_angle = min_angle.min(s.abs().clamp(0.0, 1.0).asin());
        }
    }
    let min_spacing = spec
        .grids()
        .iter()
        .map(AffineGrid::spacing)
        .fold(f64::INFINITY, f64::min);
    Ok(RegularityReport {
        window_radius,
        eps,
        parallel_pairs: spec.parallel_pairs(),
        triple_points: triples.into_iter().collect(),
        fragile_points: fragile.into_iter().collect(),
        min_angle,
        min_spacing,
        min_point_gap,
    })
}

/// Grids `A_k(z) = R_k z + (γ_k, 0)` with `R_k` the clockwise rotation by
/// `angles[k]`.
pub fn rotated_multigrid(angles: &[f64], gammas: &[f64], weights: &[f64]) -> Result<MultigridSpec> {
    if angles.len() != gammas.len() {
        return Err(Error::InvalidSpec(format!(
            "{} angles but {} offsets",
            angles.len(),
            gammas.len()
        )));
    }
    let grids = angles
        .iter()
        .zip(gammas)
        .map(|(&a, &g)| AffineGrid::new(clockwise_rotation(a), Vec2::new(g, 0.0)))
        .collect::<Result<Vec<_>>>()?;
    MultigridSpec::new(grids, weights.to_vec())
}

/// Tolerance on `Σγ_k` for the pentagrid preset.
pub const GAMMA_SUM_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct Pentagrid {
    pub spec: MultigridSpec,
    /// Set when the offsets do not sum to zero.
    pub sum_warning: bool,
}

/// De Bruijn pentagrid: grid `k` rotated clockwise by `2π(k−1)/5`, shifted by
/// `(γ_k, 0)`, all weights 1.
pub fn pentagrid_preset(gammas: [f64; 5]) -> Pentagrid {
    let angles: Vec<f64> = (0..5).map(|k| 2.0 * PI * k as f64 / 5.0).collect();
    let spec = rotated_multigrid(&angles, &gammas, &[1.0; 5]).expect("pentagrid preset is valid");
    Pentagrid {
        spec,
        sum_warning: gammas.iter().sum::<f64>().abs() > GAMMA_SUM_TOL,
    }
}

/// Four grids rotated clockwise by multiples of `π/4`, all weights 1.
pub fn tetragrid_preset(gammas: [f64; 4]) -> MultigridSpec {
    let angles: Vec<f64> = (0..4).map(|k| PI * k as f64 / 4.0).collect();
    rotated_multigrid(&angles, &gammas, &[1.0; 4]).expect("tetragrid preset is valid")
}

/// Two perpendicular unit grids (vertical and horizontal lines).
pub fn orthogonal_preset(gammas: [f64; 2]) -> MultigridSpec {
    rotated_multigrid(&[0.0, PI / 2.0], &gammas, &[1.0; 2]).expect("orthogonal preset is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn identity_spec() -> MultigridSpec {
        orthogonal_preset([0.0, 0.0])
    }

    #[test]
    fn grid_index_floor_convention() {
        let spec = identity_spec();
        assert_eq!(spec.grid_index(0, Vec2::new(0.5, 7.0)).unwrap(), 0);
        assert_eq!(spec.grid_index(0, Vec2::new(-0.5, 0.0)).unwrap(), -1);
        match spec.grid_index(0, Vec2::new(3.0, 0.2)) {
            Err(Error::OnLine { grid: 0, line: 3 }) => {}
            other => panic!("expected on-line error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_specs() {
        let singular = AffineGrid::new(Mat2::new(1.0, 2.0, 2.0, 4.0), Vec2::zeros());
        assert!(matches!(singular, Err(Error::InvalidSpec(_))));
        let flipped = AffineGrid::new(Mat2::new(-1.0, 0.0, 0.0, 1.0), Vec2::zeros());
        assert!(matches!(flipped, Err(Error::InvalidSpec(_))));
        let g = AffineGrid::new(Mat2::identity(), Vec2::zeros()).unwrap();
        assert!(MultigridSpec::new(vec![g.clone()], vec![1.0]).is_err());
        assert!(MultigridSpec::new(vec![g.clone(), g.clone()], vec![1.0, 1.0]).is_err());
        let h = AffineGrid::new(clockwise_rotation(1.0), Vec2::zeros()).unwrap();
        assert!(MultigridSpec::new(vec![g, h], vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn json_round_trip() {
        let spec = pentagrid_preset([0.1, 0.15, 0.2, 0.25, -0.7]).spec;
        let text = serde_json::to_string(&spec).unwrap();
        assert!(text.starts_with("{\"grids\":[{\"linear\":[["));
        let back: MultigridSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
        let bad = r#"{"grids":[{"linear":[[1,0],[0,1]],"translation":[0,0]}],"weights":[1]}"#;
        assert!(serde_json::from_str::<MultigridSpec>(bad).is_err());
    }

    #[test]
    fn orthogonal_grids_are_regular() {
        let report = validate_regular(&identity_spec(), 5.0, 1e-9).unwrap();
        assert!(report.is_regular());
        assert_abs_diff_eq!(report.min_angle, PI / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(report.min_spacing, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn symmetric_pentagrid_is_singular() {
        let spec = pentagrid_preset([0.0; 5]).spec;
        let report = validate_regular(&spec, 3.0, default_eps(3.0)).unwrap();
        assert!(!report.is_regular());
        assert!(report
            .triple_points
            .iter()
            .any(|t| t.iter().all(|&(_, line)| line == 0)));
    }

    #[test]
    fn generic_pentagrid_is_regular() {
        let spec = pentagrid_preset([0.1, 0.15, 0.2, 0.25, -0.7]).spec;
        let report = validate_regular(&spec, 10.0, default_eps(10.0)).unwrap();
        assert!(report.is_robust(), "{:?}", report.fragile_points);
        assert_abs_diff_eq!(report.min_angle, PI / 5.0, epsilon = 1e-12);
    }

    #[test]
    fn tetragrid_presets() {
        let spec = tetragrid_preset([0.11, 0.23, 0.36, 0.05]);
        assert!(validate_regular(&spec, 10.0, default_eps(10.0)).unwrap().is_robust());
        let singular = tetragrid_preset([0.0; 4]);
        assert!(!validate_regular(&singular, 3.0, default_eps(3.0)).unwrap().is_regular());
        // Grid directions at 0°, 45°, 90°, 135° from the vertical.
        for (k, grid) in spec.grids().iter().enumerate() {
            let d = grid.line_direction();
            let angle = d.y.atan2(d.x).rem_euclid(PI);
            let expected = (PI / 2.0 - k as f64 * PI / 4.0).rem_euclid(PI);
            assert_abs_diff_eq!(angle, expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn pentagrid_preset_directions_and_warning() {
        let p = pentagrid_preset([0.2, 0.2, 0.2, 0.2, -0.8]);
        assert!(!p.sum_warning);
        let d0 = p.spec.grid(0).line_direction();
        assert_abs_diff_eq!(d0.x, 0.0, epsilon = 1e-15);
        for k in 0..5 {
            let dk = p.spec.grid(k).line_direction();
            let angle = cross(d0, dk).atan2(d0.dot(&dk)).rem_euclid(2.0 * PI);
            let steps = angle / (2.0 * PI / 5.0);
            assert_abs_diff_eq!(steps, steps.round(), epsilon = 1e-12);
        }
        assert!(pentagrid_preset([0.1, 0.1, 0.1, 0.0, 0.0]).sum_warning);
    }

    #[test]
    fn orthogonal_line_spacing_is_unit() {
        let spec = orthogonal_preset([0.5, 0.5]);
        let k = spec.grid(1).lines_in_disc(4.0).next().unwrap();
        let line = intersections_on_line(&spec, 1, k, 4.0).unwrap();
        assert_eq!(line.foreign.len(), 1);
        assert_abs_diff_eq!(line.foreign[0].spacing, 1.0, epsilon = 1e-12);
        for w in line.intersections.windows(2) {
            assert_abs_diff_eq!(w[1].arclength - w[0].arclength, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn pentagrid_spacing_matches_closed_form() {
        let spec = pentagrid_preset([0.1, 0.15, 0.2, 0.25, -0.7]).spec;
        let line = intersections_on_line(&spec, 0, 1, 8.0).unwrap();
        for f in &line.foreign {
            let angle = cross(spec.grid(0).line_direction(), spec.grid(f.grid).line_direction()).abs();
            assert_abs_diff_eq!(f.spacing, 1.0 / angle, epsilon = 1e-12);
            // Measured gaps between consecutive crossings with the same grid.
            let s: Vec<f64> = line
                .intersections
                .iter()
                .filter(|x| x.other(0).0 == f.grid)
                .map(|x| x.arclength)
                .collect();
            assert!(s.len() > 3);
            for w in s.windows(2) {
                assert_abs_diff_eq!(w[1] - w[0], f.spacing, epsilon = 1e-9);
            }
            let off = (s[0] - f.phase) / f.spacing;
            assert_abs_diff_eq!(off, off.round(), epsilon = 1e-9);
        }
        // 1/sin 72° for the neighbouring grids.
        let neighbour = line.foreign.iter().find(|f| f.grid == 1).unwrap();
        assert_abs_diff_eq!(neighbour.spacing, 1.0 / (2.0 * PI / 5.0).sin(), epsilon = 1e-12);
        for w in line.intersections.windows(2) {
            assert!(w[1].arclength > w[0].arclength);
        }
    }

    #[test]
    fn intersections_lie_on_both_lines() {
        let spec = pentagrid_preset([0.1, 0.15, 0.2, 0.25, -0.7]).spec;
        for x in spec.intersections_in_disc(4.0) {
            let (i, j) = x.grid_pair;
            let (k, l) = x.line_indices;
            assert_abs_diff_eq!(spec.grid(i).index_value(x.point), k as f64, epsilon = 1e-9);
            assert_abs_diff_eq!(spec.grid(j).index_value(x.point), l as f64, epsilon = 1e-9);
            assert!(x.point.norm() <= 4.0 + 1e-12);
        }
    }

    /// Counts grid lines strictly between a far reference point and `z`.
    fn crossings_from_far_left(spec: &MultigridSpec, j: usize, z: Vec2) -> i64 {
        let g = spec.grid(j).index_gradient();
        let far = z - g.normalize() * 100.0;
        let (a, b) = (spec.grid(j).index_value(far), spec.grid(j).index_value(z));
        (a.floor() as i64 + 1..=b.floor() as i64).count() as i64
    }

    proptest! {
        #[test]
        fn grid_index_matches_counting_oracle(x in -5.0..5.0f64, y in -5.0..5.0f64, j in 0usize..5) {
            let spec = pentagrid_preset([0.1, 0.15, 0.2, 0.25, -0.7]).spec;
            let z = Vec2::new(x, y);
            let g = spec.grid(j).index_gradient().normalize();
            let far = z - g * 100.0;
            let base = spec.grid_index(j, far);
            prop_assume!(base.is_ok());
            if let Ok(m) = spec.grid_index(j, z) {
                prop_assert_eq!(m - base.unwrap(), crossings_from_far_left(&spec, j, z));
            }
        }

        #[test]
        fn grid_index_steps_by_one(x0 in -4.0..4.0f64, y0 in -4.0..4.0f64, x1 in -4.0..4.0f64, y1 in -4.0..4.0f64) {
            let spec = tetragrid_preset([0.11, 0.23, 0.36, 0.05]);
            let (a, b) = (Vec2::new(x0, y0), Vec2::new(x1, y1));
            for j in 0..spec.r() {
                let mut prev = None;
                for t in 0..=2000 {
                    let z = a + (b - a) * (t as f64 / 2000.0);
                    if let Ok(m) = spec.grid_index(j, z) {
                        if let Some(p) = prev {
                            let d: i64 = m - p;
                            prop_assert!(d.abs() <= 1);
                        }
                        prev = Some(m);
                    }
                }
            }
        }

        #[test]
        fn regularity_is_symmetric_in_grid_order(seed in 0u64..50) {
            let gammas: Vec<f64> = (0..4).map(|k| ((seed * 7 + k * 13) % 17) as f64 / 17.0).collect();
            let spec = tetragrid_preset([gammas[0], gammas[1], gammas[2], gammas[3]]);
            let mut grids = spec.grids().to_vec();
            grids.rotate_left((seed % 4) as usize);
            grids.swap(0, 2);
            let permuted = MultigridSpec::new(grids, vec![1.0; 4]).unwrap();
            let a = validate_regular(&spec, 4.0, default_eps(4.0)).unwrap();
            let b = validate_regular(&permuted, 4.0, default_eps(4.0)).unwrap();
            prop_assert_eq!(a.is_regular(), b.is_regular());
            prop_assert_eq!(a.triple_points.len(), b.triple_points.len());
        }
    }
}
