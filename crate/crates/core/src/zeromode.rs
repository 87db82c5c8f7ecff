//! Phase-periodic flexes: star and edge translation classes, the symbol
//! matrix, spectrum sampling and band zero modes.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::TAU;
use std::str::FromStr;

use faer::{c64, Mat};

pub use faer::c64 as Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{perp, IndexVector, MultigridSpec, Vec2};
use crate::rigidity::{sequential_kernels, VelocityField};
use crate::tiling::Tiling;

/// Unit-modulus `(ω_1, …, ω_r)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Multiphase {
    omega: Vec<c64>,
}

impl Multiphase {
    pub fn new(omega: Vec<c64>) -> Result<Self> {
        if let Some(j) = omega.iter().position(|w| (w.norm() - 1.0).abs() > 1e-12) {
            return Err(Error::InvalidSpec(format!("multiphase component {j} is not of unit modulus")));
        }
        Ok(Multiphase { omega })
    }

    /// `ω_j = e^{2πi γ_j}`.
    pub fn from_turns(turns: &[f64]) -> Self {
        Multiphase {
            omega: turns.iter().map(|&g| c64::from_polar(1.0, TAU * g)).collect(),
        }
    }

    pub fn identity(r: usize) -> Self {
        Multiphase::from_turns(&vec![0.0; r])
    }

    pub fn omega(&self) -> &[c64] {
        &self.omega
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    /// `ω^m = Π ω_j^{m_j}`, accumulated in angle to avoid drift.
    pub fn power(&self, m: &IndexVector) -> c64 {
        let angle: f64 = self.omega.iter().zip(&m.0).map(|(w, &mj)| w.arg() * mj as f64).sum();
        c64::from_polar(1.0, angle)
    }
}

/// Signed unit steps `(grid, ±1)` of the edges at a joint, sorted.
pub type StarKey = Vec<(usize, i8)>;

#[derive(Clone, Debug, Serialize)]
pub struct StarClass {
    pub id: usize,
    pub star: StarKey,
    pub representative: usize,
    pub count: usize,
}

/// Edge from a class-`a` joint to a class-`b` joint along `+e_j`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct EdgeClass {
    pub a: usize,
    pub b: usize,
    pub j: usize,
}

/// Translation classes of the interior joints of a tiling.
#[derive(Clone, Debug, Serialize)]
pub struct Classes {
    pub rank: usize,
    pub classes: Vec<StarClass>,
    /// Class of each joint; `None` for boundary joints.
    pub class_of: Vec<Option<usize>>,
    pub edge_classes: Vec<EdgeClass>,
    /// Dual edge vector of each grid.
    pub vectors: Vec<Vec2>,
}

impl Classes {
    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn is_interior(&self, joint: usize) -> bool {
        self.class_of[joint].is_some()
    }

    /// Edge classes keyed by star shapes rather than class ids, for
    /// comparing class sets harvested from different patches.
    pub fn edge_signatures(&self) -> BTreeSet<(StarKey, StarKey, usize)> {
        self.edge_classes
            .iter()
            .map(|e| (self.classes[e.a].star.clone(), self.classes[e.b].star.clone(), e.j))
            .collect()
    }

    pub fn star_signatures(&self) -> BTreeSet<StarKey> {
        self.classes.iter().map(|c| c.star.clone()).collect()
    }
}

/// Joints whose every incident edge has two tiles, grouped by star.
pub fn star_classes(tiling: &Tiling) -> Result<Classes> {
    let rank = tiling
        .rank()
        .filter(|_| tiling.has_index_vectors())
        .ok_or_else(|| Error::MissingLabels("zero modes need joint index vectors".into()))?;
    let vectors = tiling
        .class_vectors()
        .ok_or_else(|| Error::MissingLabels("tiling has no dual edge vectors".into()))?
        .to_vec();
    let n = tiling.joints().len();
    let mut keys: Vec<Option<StarKey>> = vec![None; n];
    for (q, key) in keys.iter_mut().enumerate() {
        let incident = tiling.joint_edges(q);
        if incident.iter().any(|&e| tiling.edge_tiles(e).len() != 2) {
            continue;
        }
        let mut star: StarKey = incident
            .iter()
            .map(|&e| {
                let edge = &tiling.edges()[e];
                let j = edge.class.expect("indexed tiling has edge classes");
                (j, if edge.joints[0] == q { 1 } else { -1 })
            })
            .collect();
        star.sort_unstable();
        *key = Some(star);
    }
    let mut groups: BTreeMap<StarKey, Vec<usize>> = BTreeMap::new();
    for (q, key) in keys.iter().enumerate() {
        if let Some(k) = key {
            groups.entry(k.clone()).or_default().push(q);
        }
    }
    if groups.is_empty() {
        return Err(Error::InvalidPatch("no interior joints".into()));
    }
    let mut class_of = vec![None; n];
    let classes: Vec<StarClass> = groups
        .into_iter()
        .enumerate()
        .map(|(id, (star, members))| {
            for &q in &members {
                class_of[q] = Some(id);
            }
            StarClass {
                id,
                star,
                representative: members[0],
                count: members.len(),
            }
        })
        .collect();
    let edge_classes: BTreeSet<EdgeClass> = tiling
        .edges()
        .iter()
        .filter_map(|e| {
            let [a, b] = e.joints;
            Some(EdgeClass {
                a: class_of[a]?,
                b: class_of[b]?,
                j: e.class?,
            })
        })
        .collect();
    Ok(Classes {
        rank,
        classes,
        class_of,
        edge_classes: edge_classes.into_iter().collect(),
        vectors,
    })
}

/// Rows `⟨b_a − ω_j b_b, e_j⟩` over the unknowns `(b_1, …, b_n) ∈ ℂ^{2n}`.
pub fn symbol_matrix(classes: &Classes, omega: &Multiphase) -> Result<Mat<c64>> {
    if omega.len() != classes.rank {
        return Err(Error::InvalidSpec(format!(
            "multiphase has {} components, tiling has {} grids",
            omega.len(),
            classes.rank
        )));
    }
    let mut m = Mat::<c64>::zeros(classes.edge_classes.len(), 2 * classes.len());
    for (row, ec) in classes.edge_classes.iter().enumerate() {
        let e = classes.vectors[ec.j];
        let w = omega.omega()[ec.j];
        for (c, x) in [e.x, e.y].into_iter().enumerate() {
            m[(row, 2 * ec.a + c)] += c64::new(x, 0.0);
            m[(row, 2 * ec.b + c)] -= w * x;
        }
    }
    Ok(m)
}

/// Scale for the spectrum threshold: the spectral norm, floored by the
/// longest dual edge so the all-zero symbol at `ω = 1` still has a scale.
fn reference_norm(classes: &Classes, sigma_max: f64) -> f64 {
    classes.vectors.iter().map(|v| v.norm()).fold(sigma_max, f64::max)
}

/// Relative size below which a singular value counts as zero.
pub const SPECTRUM_THRESHOLD: f64 = 1e-8;

#[derive(Clone, Debug, Serialize)]
pub struct SymbolEvaluation {
    pub min_sv: f64,
    pub norm: f64,
    pub kernel_dim: usize,
    pub member: bool,
    /// Smallest nonzero over largest zero singular value (infinite when one
    /// side is empty).
    pub gap_ratio: f64,
}

pub fn evaluate_symbol(classes: &Classes, omega: &Multiphase) -> Result<SymbolEvaluation> {
    let m = symbol_matrix(classes, omega)?;
    sequential_kernels();
    let sv = if m.nrows() == 0 {
        Vec::new()
    } else {
        m.singular_values()
            .map_err(|e| Error::Numerical(format!("SVD did not converge: {e:?}")))?
    };
    Ok(summarise(classes, &sv, m.ncols()))
}

fn summarise(classes: &Classes, sv: &[f64], cols: usize) -> SymbolEvaluation {
    let norm = reference_norm(classes, sv.first().copied().unwrap_or(0.0));
    let threshold = SPECTRUM_THRESHOLD * norm;
    let nonzero = sv.iter().filter(|&&s| s >= threshold).count();
    let kernel_dim = cols - nonzero;
    let min_sv = if sv.len() < cols { 0.0 } else { sv.last().copied().unwrap_or(0.0) };
    let retained = sv[..nonzero].last().copied();
    let discarded = sv.get(nonzero).copied().unwrap_or(0.0).max(f64::EPSILON * norm);
    let gap_ratio = match retained {
        Some(r) if kernel_dim > 0 => r / discarded,
        _ => f64::INFINITY,
    };
    SymbolEvaluation {
        min_sv,
        norm,
        kernel_dim,
        member: kernel_dim > 0,
        gap_ratio,
    }
}

/// Orthonormal kernel of the symbol matrix, one `(b_1, …, b_n)` per column.
pub fn symbol_kernel(classes: &Classes, omega: &Multiphase) -> Result<Vec<Vec<c64>>> {
    let m = symbol_matrix(classes, omega)?;
    sequential_kernels();
    let n = m.ncols();
    if m.nrows() == 0 {
        return Ok((0..n).map(|c| (0..n).map(|r| c64::new(f64::from(u8::from(r == c)), 0.0)).collect()).collect());
    }
    let svd = m
        .svd()
        .map_err(|e| Error::Numerical(format!("SVD did not converge: {e:?}")))?;
    let s = svd.S().column_vector();
    let sv: Vec<f64> = (0..s.nrows()).map(|i| s[i].re).collect();
    let eval = summarise(classes, &sv, n);
    let v = svd.V();
    Ok((n - eval.kernel_dim..n)
        .map(|c| (0..n).map(|r| v[(r, c)]).collect())
        .collect())
}

/// `‖Φ(ω) b‖ / (‖Φ‖ ‖b‖)`.
pub fn symbol_residual(classes: &Classes, omega: &Multiphase, b: &[c64]) -> Result<f64> {
    let m = symbol_matrix(classes, omega)?;
    let bn = b.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    let mut worst: f64 = 0.0;
    for row in 0..m.nrows() {
        let mut acc = c64::new(0.0, 0.0);
        for (c, x) in b.iter().enumerate() {
            acc += m[(row, c)] * x;
        }
        worst = worst.max(acc.norm());
    }
    Ok(worst / (reference_norm(classes, 0.0) * bn.max(f64::MIN_POSITIVE)))
}

/// `u(p_m) = ω^m b_{class(m)}` on interior joints, zero elsewhere.
pub fn phase_field(tiling: &Tiling, classes: &Classes, omega: &Multiphase, b: &[c64]) -> VelocityField {
    let n = tiling.joints().len();
    let mut re = vec![Vec2::zeros(); n];
    let mut im = vec![Vec2::zeros(); n];
    for q in 0..n {
        let Some(a) = classes.class_of[q] else { continue };
        let phase = omega.power(tiling.joint(q).index.as_ref().expect("indexed"));
        let (x, y) = (phase * b[2 * a], phase * b[2 * a + 1]);
        re[q] = Vec2::new(x.re, y.re);
        im[q] = Vec2::new(x.im, y.im);
    }
    VelocityField::complex(re, im)
}

/// Class representation `b_a = t_i` of a band zero mode.
pub fn band_class_vector(classes: &Classes, i: usize) -> Vec<c64> {
    let t = band_direction(classes.vectors[i]);
    (0..classes.len())
        .flat_map(|_| [c64::new(t.x, 0.0), c64::new(t.y, 0.0)])
        .collect()
}

fn band_direction(e: Vec2) -> Vec2 {
    perp(e).normalize()
}

/// `u(p_m) = λ^{m_i} t_i` with `t_i` the unit vector orthogonal to `e_i`.
pub fn band_zero_mode(tiling: &Tiling, i: usize, lambda: c64) -> Result<VelocityField> {
    let vectors = tiling
        .class_vectors()
        .filter(|_| tiling.has_index_vectors())
        .ok_or_else(|| Error::MissingLabels("band zero modes need joint index vectors".into()))?;
    if i >= vectors.len() {
        return Err(Error::InvalidSpec(format!("grid {i} does not exist")));
    }
    let t = band_direction(vectors[i]);
    let (modulus, angle) = (lambda.norm(), lambda.arg());
    let mut re = Vec::with_capacity(tiling.joints().len());
    let mut im = Vec::with_capacity(tiling.joints().len());
    for joint in tiling.joints() {
        let m = joint.index.as_ref().expect("indexed").0[i] as f64;
        let z = c64::from_polar(modulus.powf(m), angle * m);
        re.push(t * z.re);
        im.push(t * z.im);
    }
    Ok(VelocityField::complex(re, im))
}

/// Largest `|⟨u_v − u_w, p_v − p_w⟩| / |p_v − p_w|` over edges joining two
/// interior joints, relative to the largest velocity there.
pub fn interior_bar_residual(tiling: &Tiling, classes: &Classes, u: &VelocityField) -> f64 {
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for edge in tiling.edges() {
        let [v, w] = edge.joints;
        if !(classes.is_interior(v) && classes.is_interior(w)) {
            continue;
        }
        let d = tiling.pos(v) - tiling.pos(w);
        let re = (u.re[v] - u.re[w]).dot(&d);
        let im = u.im.as_ref().map_or(0.0, |im| (im[v] - im[w]).dot(&d));
        worst = worst.max(re.hypot(im) / d.norm());
        for q in [v, w] {
            let m = u.re[q].norm_squared() + u.im.as_ref().map_or(0.0, |im| im[q].norm_squared());
            scale = scale.max(m.sqrt());
        }
    }
    if scale == 0.0 {
        0.0
    } else {
        worst / scale
    }
}

/// Where to evaluate the symbol, in turns (`ω_j = e^{2πi t_j}`).
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Slice {
    /// `n × n` grid over the 2-torus (two grids only).
    Torus { n: usize },
    /// `ω_i = e^{2πik/n}`, all other components 1.
    Circle { i: usize, n: usize },
    /// Uniform points with every coordinate in `[margin, 1 − margin]`.
    Random { count: usize, seed: u64, margin: f64 },
}

impl FromStr for Slice {
    type Err = Error;

    /// `torus:n=64`, `circle:i=1:n=256` (grid ids 1-based) or
    /// `random:n=10000[:seed=0][:margin=0.01]`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidSpec(format!("unrecognised slice '{s}'"));
        let mut parts = s.split(':');
        let kind = parts.next().unwrap_or_default();
        let mut fields = BTreeMap::new();
        for p in parts {
            let (k, v) = p.split_once('=').ok_or_else(bad)?;
            fields.insert(k, v);
        }
        let int = |k: &str| -> Result<Option<usize>> { fields.get(k).map(|v| v.parse().map_err(|_| bad())).transpose() };
        match kind {
            "torus" => Ok(Slice::Torus {
                n: int("n")?.unwrap_or(64),
            }),
            "circle" => {
                let i = int("i")?.ok_or_else(bad)?;
                if i == 0 {
                    return Err(bad());
                }
                Ok(Slice::Circle {
                    i: i - 1,
                    n: int("n")?.unwrap_or(256),
                })
            }
            "random" => Ok(Slice::Random {
                count: int("n")?.unwrap_or(10_000),
                seed: int("seed")?.unwrap_or(0) as u64,
                margin: fields
                    .get("margin")
                    .map(|v| v.parse().map_err(|_| bad()))
                    .transpose()?
                    .unwrap_or(0.01),
            }),
            _ => Err(bad()),
        }
    }
}

impl Slice {
    pub fn points(&self, r: usize) -> Result<Vec<Vec<f64>>> {
        match *self {
            Slice::Torus { n } => {
                if r != 2 {
                    return Err(Error::InvalidSpec(format!("torus slices need 2 grids, not {r}")));
                }
                Ok((0..n * n)
                    .map(|k| vec![(k / n) as f64 / n as f64, (k % n) as f64 / n as f64])
                    .collect())
            }
            Slice::Circle { i, n } => {
                if i >= r {
                    return Err(Error::InvalidSpec(format!("grid {} does not exist", i + 1)));
                }
                Ok((0..n)
                    .map(|k| {
                        let mut t = vec![0.0; r];
                        t[i] = k as f64 / n as f64;
                        t
                    })
                    .collect())
            }
            Slice::Random { count, seed, margin } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                Ok((0..count)
                    .map(|_| (0..r).map(|_| rng.gen_range(margin..=1.0 - margin)).collect())
                    .collect())
            }
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectrumPoint {
    pub turns: Vec<f64>,
    pub min_sv: f64,
    pub kernel_dim: usize,
    pub member: bool,
    /// `min_sv` came from a full SVD rather than the screening estimate.
    pub exact: bool,
}

/// Relative level certified by the Cholesky screen. Far above the
/// membership threshold, so a passed screen settles non-membership.
pub const SCREEN_LEVEL: f64 = 1e-4;

/// `Φ^H Φ`, assembled row by row (each symbol row has at most four entries).
fn gram(classes: &Classes, omega: &Multiphase) -> Mat<c64> {
    let n = 2 * classes.len();
    let mut g = Mat::<c64>::zeros(n, n);
    for ec in &classes.edge_classes {
        let e = classes.vectors[ec.j];
        let w = omega.omega()[ec.j];
        let mut row = [(0, c64::new(0.0, 0.0)); 4];
        for (c, x) in [e.x, e.y].into_iter().enumerate() {
            row[c] = (2 * ec.a + c, c64::new(x, 0.0));
            row[2 + c] = (2 * ec.b + c, -(w * x));
        }
        for &(p, x) in &row {
            for &(q, y) in &row {
                g[(p, q)] += x.conj() * y;
            }
        }
    }
    g
}

/// `Some(σ_min estimate)` when `σ_min > SCREEN_LEVEL · norm` is certified by
/// a Cholesky factorisation of `Φ^H Φ − s²`; the estimate is the Rayleigh
/// quotient of inverse iteration on the same factors (never below `σ_min`).
fn screen(classes: &Classes, omega: &Multiphase) -> Option<f64> {
    use faer::linalg::solvers::Solve;
    let n = 2 * classes.len();
    if n == 0 || classes.edge_classes.len() < n {
        return None;
    }
    let mut g = gram(classes, omega);
    // ‖Φ‖² ≤ max row sum of |G|, cheap and sufficient for the screen scale.
    let bound = (0..n)
        .map(|p| (0..n).map(|q| g[(p, q)].norm()).sum::<f64>())
        .fold(0.0, f64::max)
        .sqrt();
    let shift = (SCREEN_LEVEL * reference_norm(classes, bound)).powi(2);
    for p in 0..n {
        g[(p, p)] -= c64::new(shift, 0.0);
    }
    let llt = g.llt(faer::Side::Lower).ok()?;
    for p in 0..n {
        g[(p, p)] += c64::new(shift, 0.0);
    }
    let mut x = Mat::<c64>::from_fn(n, 1, |p, _| c64::new(1.0 + (p % 7) as f64 / 7.0, 0.0));
    let mut lambda = f64::INFINITY;
    for _ in 0..200 {
        let norm = x.norm_l2();
        x /= faer::Scale(c64::new(norm, 0.0));
        let gx = &g * &x;
        let rq = (x.adjoint() * &gx)[(0, 0)].re;
        let converged = (lambda - rq).abs() <= 1e-10 * rq;
        lambda = rq;
        if converged {
            break;
        }
        llt.solve_in_place(&mut x);
    }
    Some(lambda.max(shift).sqrt())
}

pub fn spectrum_sample(classes: &Classes, slice: &Slice) -> Result<Vec<SpectrumPoint>> {
    slice
        .points(classes.rank)?
        .into_par_iter()
        .map(|turns| {
            let omega = Multiphase::from_turns(&turns);
            if let Some(min_sv) = screen(classes, &omega) {
                return Ok(SpectrumPoint {
                    turns,
                    min_sv,
                    kernel_dim: 0,
                    member: false,
                    exact: false,
                });
            }
            let eval = evaluate_symbol(classes, &omega)?;
            Ok(SpectrumPoint {
                turns,
                min_sv: eval.min_sv,
                kernel_dim: eval.kernel_dim,
                member: eval.member,
                exact: true,
            })
        })
        .collect()
}

/// Whether the class data harvested at one window survives at a larger one.
#[derive(Clone, Debug, Serialize)]
pub struct StabilityReport {
    pub windows: (f64, f64),
    pub star_classes: (usize, usize),
    pub edge_classes: (usize, usize),
    /// Classes at the smaller window all reappear at the larger one.
    pub nested: bool,
    /// Identical class sets: the symbol matrix is no longer provisional.
    pub stable: bool,
}

pub fn class_stability(small: &Classes, large: &Classes, windows: (f64, f64)) -> StabilityReport {
    let (s_stars, l_stars) = (small.star_signatures(), large.star_signatures());
    let (s_edges, l_edges) = (small.edge_signatures(), large.edge_signatures());
    StabilityReport {
        windows,
        star_classes: (s_stars.len(), l_stars.len()),
        edge_classes: (s_edges.len(), l_edges.len()),
        nested: s_stars.is_subset(&l_stars) && s_edges.is_subset(&l_edges),
        stable: s_stars == l_stars && s_edges == l_edges,
    }
}

/// Star classes of the dual tiling at two windows.
pub fn classes_at_windows(spec: &MultigridSpec, windows: (f64, f64)) -> Result<(Classes, Classes, StabilityReport)> {
    let small = star_classes(&crate::dualize::dualize(spec, windows.0)?.tiling)?;
    let large = star_classes(&crate::dualize::dualize(spec, windows.1)?.tiling)?;
    let report = class_stability(&small, &large, windows);
    Ok((small, large, report))
}

/// The square lattice in closed form: the symbol is `diag(1 − ω_1, 1 − ω_2)`
/// and degenerates exactly on `({1} × 𝕋) ∪ (𝕋 × {1})`.
#[derive(Clone, Copy, Debug, Default)]
pub struct GridSymbolReference;

impl GridSymbolReference {
    pub fn symbol(&self, w1: c64, w2: c64) -> [[c64; 2]; 2] {
        let one = c64::new(1.0, 0.0);
        let zero = c64::new(0.0, 0.0);
        [[one - w1, zero], [zero, one - w2]]
    }

    pub fn min_singular_value(&self, w1: c64, w2: c64) -> f64 {
        (c64::new(1.0, 0.0) - w1).norm().min((c64::new(1.0, 0.0) - w2).norm())
    }

    pub fn kernel_dim(&self, w1: c64, w2: c64, tol: f64) -> usize {
        [w1, w2].iter().filter(|w| (c64::new(1.0, 0.0) - **w).norm() < tol).count()
    }

    pub fn is_degenerate(&self, w1: c64, w2: c64, tol: f64) -> bool {
        self.kernel_dim(w1, w2, tol) > 0
    }
}

pub fn grid_symbol_reference() -> GridSymbolReference {
    GridSymbolReference
}
