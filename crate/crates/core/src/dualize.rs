//! The parallelogram tiling dual to a regular multigrid.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{default_eps, validate_regular, GridIntersection, IndexVector, MultigridSpec, RegularityReport, Vec2};
use crate::tiling::{maximal_closure, Joint, Patch, Tile, Tiling};

/// Fraction of the window inside which intersections seed the working patch.
pub const WORKING_FRACTION: f64 = 0.8;

/// A dual tiling together with the multigrid data it came from.
#[derive(Clone, Debug)]
pub struct DualTiling {
    pub tiling: Tiling,
    pub spec: MultigridSpec,
    pub window_radius: f64,
    /// Multigrid-plane intersection point dual to each tile.
    pub points: Vec<Vec2>,
    pub regularity: RegularityReport,
}

/// Maps every line intersection inside the disc of radius `window_radius`
/// to a tile, and every face of the arrangement to the joint `Σ m_j e_j`.
pub fn dualize(spec: &MultigridSpec, window_radius: f64) -> Result<DualTiling> {
    let check_radius = 1.05 * window_radius;
    let regularity = validate_regular(spec, check_radius, default_eps(check_radius))?;
    if !regularity.parallel_pairs.is_empty() {
        return Err(Error::Irregular("parallel grids".into()));
    }
    if !regularity.is_robust() {
        return Err(Error::Irregular(format!(
            "{} near-triple points within the window, e.g. {:?}",
            regularity.fragile_points.len(),
            regularity.fragile_points[0]
        )));
    }
    let crossings = spec.intersections_in_disc(window_radius);
    if crossings.is_empty() {
        return Err(Error::EmptyWindow(window_radius));
    }
    // Far below any feature of the arrangement, far above rounding noise.
    let nudge = (1e-6 * regularity.min_spacing).min(1e-3 * regularity.min_point_gap * regularity.min_angle.sin());

    let bases: Vec<IndexVector> = crossings
        .par_iter()
        .map(|x| base_vertex(spec, x, nudge))
        .collect::<Result<_>>()?;

    let mut ids: BTreeSet<IndexVector> = BTreeSet::new();
    for (x, base) in crossings.iter().zip(&bases) {
        let (i, j) = x.grid_pair;
        ids.insert(base.clone());
        ids.insert(base.step(i, 1));
        ids.insert(base.step(j, 1));
        ids.insert(base.step(i, 1).step(j, 1));
    }
    let lookup: BTreeMap<&IndexVector, usize> = ids.iter().enumerate().map(|(n, m)| (m, n)).collect();
    let tiles = crossings
        .iter()
        .zip(&bases)
        .map(|(x, base)| {
            let (i, j) = x.grid_pair;
            let corners = [base.clone(), base.step(i, 1), base.step(i, 1).step(j, 1), base.step(j, 1)];
            Tile {
                joints: corners.map(|m| lookup[&m]),
                grid_pair: Some((i, j)),
                line_indices: Some(x.line_indices),
            }
        })
        .collect();
    let joints = ids
        .iter()
        .map(|m| Joint {
            pos: spec.position(m),
            index: Some(m.clone()),
        })
        .collect();
    let tiling = Tiling::with_class_vectors(joints, tiles, spec.dual_vectors())?;
    Ok(DualTiling {
        tiling,
        spec: spec.clone(),
        window_radius,
        points: crossings.iter().map(|x| x.point).collect(),
        regularity,
    })
}

/// Index vector of the face below both lines through `x` (the one with
/// `m_i = k − 1`, `m_j = l − 1`), after checking all four faces agree.
fn base_vertex(spec: &MultigridSpec, x: &GridIntersection, nudge: f64) -> Result<IndexVector> {
    let (i, j) = x.grid_pair;
    let (k, l) = x.line_indices;
    let (gi, gj) = (spec.grid(i).index_gradient(), spec.grid(j).index_gradient());
    let (di, dj) = (spec.grid(i).line_direction(), spec.grid(j).line_direction());
    // Moving along line j changes only the grid-i index, and vice versa.
    let across_i = dj * gi.dot(&dj).signum();
    let across_j = di * gj.dot(&di).signum();
    let mut faces = Vec::with_capacity(4);
    for (si, sj) in [(-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0), (1.0, 1.0)] {
        let z = x.point + (across_i * si + across_j * sj) * nudge;
        faces.push(spec.index_vector(z)?);
    }
    let base = faces[0].clone();
    let expected = [
        base.clone(),
        base.step(i, 1),
        base.step(j, 1),
        base.step(i, 1).step(j, 1),
    ];
    if base.0[i] != k - 1 || base.0[j] != l - 1 || faces != expected {
        return Err(Error::Irregular(format!(
            "faces around intersection {:?} of grids {:?} are inconsistent",
            x.line_indices, x.grid_pair
        )));
    }
    Ok(base)
}

/// Tiles dual to intersections within `WORKING_FRACTION` of the window,
/// reduced to their largest connected piece and closed to a maximal patch
/// inside the full window.
pub fn working_patch(dual: &DualTiling) -> Result<Patch> {
    let tiling = &dual.tiling;
    let inner: BTreeSet<usize> = dual
        .points
        .iter()
        .enumerate()
        .filter(|(_, p)| p.norm() <= WORKING_FRACTION * dual.window_radius)
        .map(|(t, _)| t)
        .collect();
    if inner.is_empty() {
        return Err(Error::EmptyWindow(WORKING_FRACTION * dual.window_radius));
    }
    let mut best: Vec<usize> = Vec::new();
    let mut seen = BTreeSet::new();
    for &start in &inner {
        if !seen.insert(start) {
            continue;
        }
        let mut comp = vec![start];
        let mut n = 0;
        while n < comp.len() {
            for s in tiling.neighbours(comp[n]) {
                if inner.contains(&s) && seen.insert(s) {
                    comp.push(s);
                }
            }
            n += 1;
        }
        if comp.len() > best.len() {
            best = comp;
        }
    }
    let seed = Patch::new(tiling, best)?;
    maximal_closure(tiling, &seed)
}

/// Dualizes and restricts to the working patch, renumbered as a standalone
/// tiling.
pub fn working_tiling(spec: &MultigridSpec, window_radius: f64) -> Result<Tiling> {
    let dual = dualize(spec, window_radius)?;
    let patch = working_patch(&dual)?;
    if !patch.simply_connected {
        return Err(Error::InvalidPatch("working patch is not simply connected".into()));
    }
    dual.tiling.restrict(&patch)
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct ConsistencyReport {
    pub interior_edges: usize,
    pub boundary_edges: usize,
    /// Edges used by a number of tiles other than 1 or 2.
    pub edge_multiplicity: Vec<usize>,
    /// Edges whose endpoints do not differ by a single unit index step.
    pub non_unit_edges: Vec<usize>,
    /// Tiles whose edge vectors are not `±e_i, ±e_j` of their grid pair.
    pub edge_vector: Vec<usize>,
    /// Tiles without a grid pair, skipped by the edge-vector check.
    pub unlabelled_tiles: usize,
    /// Pairs of distinct joints at the same position.
    pub coincident_joints: Vec<(usize, usize)>,
    pub non_positive_area: Vec<usize>,
    /// Interior joints whose incident tile angles do not sum to 2π.
    pub angle_sum: Vec<usize>,
}

impl ConsistencyReport {
    pub fn passed(&self) -> bool {
        self.edge_multiplicity.is_empty()
            && self.non_unit_edges.is_empty()
            && self.edge_vector.is_empty()
            && self.coincident_joints.is_empty()
            && self.non_positive_area.is_empty()
            && self.angle_sum.is_empty()
    }
}

/// Checks the tiling against the geometry its labels promise.
pub fn verify_dual_consistency(tiling: &Tiling) -> ConsistencyReport {
    let mut report = ConsistencyReport::default();
    let scale = tiling.joints().iter().map(|j| j.pos.abs().max()).fold(1.0, f64::max);
    let tol = 1e-9 * scale;

    for (e, edge) in tiling.edges().iter().enumerate() {
        match tiling.edge_tiles(e).len() {
            1 => report.boundary_edges += 1,
            2 => report.interior_edges += 1,
            _ => report.edge_multiplicity.push(e),
        }
        if tiling.has_index_vectors() && edge.class.is_none() {
            report.non_unit_edges.push(e);
        }
    }

    let vectors = tiling.class_vectors();
    for (t, tile) in tiling.tiles().iter().enumerate() {
        if tiling.signed_area(t) <= 0.0 {
            report.non_positive_area.push(t);
        }
        let (Some((i, j)), Some(vectors)) = (tile.grid_pair, vectors) else {
            report.unlabelled_tiles += 1;
            continue;
        };
        let p = tile.joints.map(|q| tiling.pos(q));
        let sides: Vec<Vec2> = (0..4).map(|s| p[(s + 1) % 4] - p[s]).collect();
        let matches = |v: Vec2, e: Vec2| (v - e).norm() < tol || (v + e).norm() < tol;
        let ok = (0..2).all(|s| (sides[s] + sides[s + 2]).norm() < tol)
            && ((matches(sides[0], vectors[i]) && matches(sides[1], vectors[j]))
                || (matches(sides[0], vectors[j]) && matches(sides[1], vectors[i])));
        if !ok {
            report.edge_vector.push(t);
        }
    }

    let mut order: Vec<usize> = (0..tiling.joints().len()).collect();
    order.sort_by(|&a, &b| tiling.pos(a).x.total_cmp(&tiling.pos(b).x));
    for (n, &a) in order.iter().enumerate() {
        for &b in &order[n + 1..] {
            if tiling.pos(b).x - tiling.pos(a).x > tol {
                break;
            }
            if (tiling.pos(b) - tiling.pos(a)).norm() <= tol {
                report.coincident_joints.push((a.min(b), a.max(b)));
            }
        }
    }
    report.coincident_joints.sort_unstable();

    let mut angle = vec![0.0; tiling.joints().len()];
    for tile in tiling.tiles() {
        let p = tile.joints.map(|q| tiling.pos(q));
        for s in 0..4 {
            let a = p[(s + 1) % 4] - p[s];
            let b = p[(s + 3) % 4] - p[s];
            angle[tile.joints[s]] += crate::geometry::cross(a, b).atan2(a.dot(&b));
        }
    }
    for (q, &sum) in angle.iter().enumerate() {
        let interior = tiling.joint_edges(q).iter().all(|&e| tiling.edge_tiles(e).len() == 2);
        if interior && (sum - TAU).abs() > 1e-9 {
            report.angle_sum.push(q);
        }
    }
    report
}
