//! Bar-joint frameworks on tilings and the SVD rigidity oracle.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::Once;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{cross, perp, Vec2};
use crate::tiling::Tiling;

/// Bars and joint positions. Bars are unordered joint pairs.
#[derive(Clone, Debug)]
pub struct Framework {
    positions: Vec<Vec2>,
    bars: Vec<[usize; 2]>,
}

impl Framework {
    pub fn new(positions: Vec<Vec2>, bars: Vec<[usize; 2]>) -> Result<Self> {
        let mut seen = HashSet::new();
        for (b, &[v, w]) in bars.iter().enumerate() {
            if v >= positions.len() || w >= positions.len() {
                return Err(Error::InvalidFramework(format!("bar {b} refers to a missing joint")));
            }
            if v == w {
                return Err(Error::InvalidFramework(format!("bar {b} is a loop")));
            }
            if (positions[v] - positions[w]).norm() == 0.0 {
                return Err(Error::InvalidFramework(format!("bar {b} has zero length")));
            }
            if !seen.insert((v.min(w), v.max(w))) {
                return Err(Error::InvalidFramework(format!("bar {b} repeats joints {v}, {w}")));
            }
        }
        Ok(Framework { positions, bars })
    }

    /// Every tile edge of `tiling` as a bar (in edge-id order), followed by
    /// one brace per tile of `braced` (in tile-id order).
    pub fn from_tiling(tiling: &Tiling, braced: &BTreeSet<usize>) -> Result<Self> {
        let mut bars: Vec<[usize; 2]> = tiling.edges().iter().map(|e| e.joints).collect();
        for &t in braced {
            if t >= tiling.tiles().len() {
                return Err(Error::InvalidPattern(format!("braced tile {t} is not in the patch")));
            }
            bars.push(brace_diagonal(tiling, t));
        }
        Framework::new(tiling.joints().iter().map(|j| j.pos).collect(), bars)
    }

    pub fn positions(&self) -> &[Vec2] {
        &self.positions
    }

    pub fn bars(&self) -> &[[usize; 2]] {
        &self.bars
    }

    pub fn joint_count(&self) -> usize {
        self.positions.len()
    }

    /// Same bars with every position mapped through `f`.
    pub fn map_positions(&self, f: impl Fn(Vec2) -> Vec2) -> Result<Self> {
        Framework::new(self.positions.iter().map(|&p| f(p)).collect(), self.bars.clone())
    }

    fn collinear(&self) -> bool {
        let Some(&a) = self.positions.first() else { return true };
        let Some(b) = self.positions.iter().copied().max_by(|p, q| (p - a).norm().total_cmp(&(q - a).norm())) else {
            return true;
        };
        let d = b - a;
        let scale = d.norm();
        scale == 0.0 || self.positions.iter().all(|&p| cross(d, p - a).abs() <= 1e-12 * scale * scale)
    }
}

/// Brace of tile `t`: the diagonal from its lowest-id joint to the opposite
/// corner.
pub fn brace_diagonal(tiling: &Tiling, t: usize) -> [usize; 2] {
    let js = tiling.tile(t).joints;
    let s = (0..4).min_by_key(|&s| js[s]).expect("four corners");
    [js[s], js[(s + 2) % 4]]
}

/// Row per bar `vw`: `p_v − p_w` in the columns of `v`, `p_w − p_v` in those of `w`.
pub fn assemble_rigidity_matrix(fw: &Framework) -> Mat<f64> {
    let mut m = Mat::zeros(fw.bars.len(), 2 * fw.positions.len());
    for (row, &[v, w]) in fw.bars.iter().enumerate() {
        let d = fw.positions[v] - fw.positions[w];
        m[(row, 2 * v)] = d.x;
        m[(row, 2 * v + 1)] = d.y;
        m[(row, 2 * w)] = -d.x;
        m[(row, 2 * w + 1)] = -d.y;
    }
    m
}

/// How singular values are split into zero and nonzero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankPolicy {
    /// Threshold is `relative · σ_max · max(rows, cols)`.
    pub relative: f64,
    /// Smallest acceptable ratio between the smallest retained and the
    /// largest discarded singular value.
    pub min_gap: f64,
}

impl Default for RankPolicy {
    fn default() -> Self {
        RankPolicy {
            relative: 1e-10,
            min_gap: 1e3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RankDecision {
    pub rank: usize,
    pub threshold: f64,
    /// Smallest retained over largest discarded singular value; infinite
    /// when either side is empty.
    pub gap_ratio: f64,
}

/// Rank from singular values sorted in nonincreasing order. Discarded values
/// are floored at `ε · σ_max` so an exact zero still yields a finite ratio.
pub fn decide_rank(singular: &[f64], rows: usize, cols: usize, policy: &RankPolicy) -> Result<RankDecision> {
    let sigma_max = singular.first().copied().unwrap_or(0.0);
    if !sigma_max.is_finite() {
        return Err(Error::Numerical("non-finite singular value".into()));
    }
    let threshold = policy.relative * sigma_max * rows.max(cols) as f64;
    let rank = singular.iter().take_while(|&&s| s > threshold).count();
    let gap_ratio = if rank == 0 || sigma_max == 0.0 {
        f64::INFINITY
    } else {
        let discarded = singular.get(rank).copied().unwrap_or(0.0);
        let floor = f64::EPSILON * sigma_max;
        if rank == singular.len() && rank == cols {
            f64::INFINITY
        } else {
            singular[rank - 1] / discarded.max(floor)
        }
    };
    if gap_ratio < policy.min_gap {
        return Err(Error::IllConditioned {
            gap_ratio,
            required: policy.min_gap,
        });
    }
    Ok(RankDecision {
        rank,
        threshold,
        gap_ratio,
    })
}

static SEQUENTIAL: Once = Once::new();

/// Dense kernels run single-threaded so results are bit-reproducible;
/// callers parallelise across independent problems instead.
pub(crate) fn sequential_kernels() {
    SEQUENTIAL.call_once(|| faer::set_global_parallelism(faer::Par::Seq));
}

pub(crate) fn singular_values_of(m: &Mat<f64>) -> Result<Vec<f64>> {
    sequential_kernels();
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(Vec::new());
    }
    m.singular_values()
        .map_err(|e| Error::Numerical(format!("SVD did not converge: {e:?}")))
}

#[derive(Clone, Debug, Serialize)]
pub struct FlexDimension {
    pub dimension: usize,
    pub gap_ratio: f64,
}

#[derive(Clone, Debug)]
pub struct FlexSpace {
    pub dimension: usize,
    pub gap_ratio: f64,
    /// Orthonormal basis of the kernel (as real fields).
    pub basis: Vec<VelocityField>,
}

/// Dimension of the space of infinitesimal flexes, from singular values only.
pub fn flex_dimension(fw: &Framework, policy: &RankPolicy) -> Result<FlexDimension> {
    let m = assemble_rigidity_matrix(fw);
    let sv = singular_values_of(&m)?;
    let d = decide_rank(&sv, m.nrows(), m.ncols(), policy)?;
    Ok(FlexDimension {
        dimension: m.ncols() - d.rank,
        gap_ratio: d.gap_ratio,
    })
}

/// Kernel of the rigidity matrix with an orthonormal basis.
pub fn flex_space(fw: &Framework, policy: &RankPolicy) -> Result<FlexSpace> {
    sequential_kernels();
    let m = assemble_rigidity_matrix(fw);
    let n = m.ncols();
    let (sv, v) = if m.nrows() == 0 {
        (Vec::new(), Mat::<f64>::identity(n, n))
    } else {
        let svd = m
            .svd()
            .map_err(|e| Error::Numerical(format!("SVD did not converge: {e:?}")))?;
        let s = svd.S().column_vector();
        let sv: Vec<f64> = (0..s.nrows()).map(|i| s[i]).collect();
        (sv, svd.V().to_owned())
    };
    let d = decide_rank(&sv, m.nrows(), n, policy)?;
    let basis = (d.rank..n)
        .map(|c| {
            VelocityField::real(
                (0..fw.joint_count())
                    .map(|j| Vec2::new(v[(2 * j, c)], v[(2 * j + 1, c)]))
                    .collect(),
            )
        })
        .collect();
    Ok(FlexSpace {
        dimension: n - d.rank,
        gap_ratio: d.gap_ratio,
        basis,
    })
}

/// Flex dimension after adding `extra` bars to the framework whose kernel
/// is `base`: the new kernel is the part of `base` the extra rows annihilate,
/// so only the small matrix `B·K` needs decomposing. The reported gap is the
/// smaller of the two certificates.
pub fn constrained_dimension(
    base: &FlexSpace,
    positions: &[Vec2],
    extra: &[[usize; 2]],
    policy: &RankPolicy,
) -> Result<FlexDimension> {
    if extra.is_empty() {
        return Ok(FlexDimension {
            dimension: base.dimension,
            gap_ratio: base.gap_ratio,
        });
    }
    let k = base.basis.len();
    let mut bk = Mat::<f64>::zeros(extra.len(), k);
    for (row, &[v, w]) in extra.iter().enumerate() {
        let d = positions[v] - positions[w];
        if d.norm() == 0.0 {
            return Err(Error::InvalidFramework(format!("bar {v}-{w} has zero length")));
        }
        for (c, u) in base.basis.iter().enumerate() {
            bk[(row, c)] = (u.re[v] - u.re[w]).dot(&d);
        }
    }
    let sv = singular_values_of(&bk)?;
    let d = decide_rank(&sv, bk.nrows(), k, policy)?;
    Ok(FlexDimension {
        dimension: k - d.rank,
        gap_ratio: d.gap_ratio.min(base.gap_ratio),
    })
}

/// Flex dimension equals 3 (only rigid motions).
pub fn is_infinitesimally_rigid(fw: &Framework, policy: &RankPolicy) -> Result<bool> {
    if fw.joint_count() < 2 {
        return Err(Error::InvalidFramework("fewer than two joints".into()));
    }
    if fw.collinear() {
        return Err(Error::InvalidFramework(
            "all joints are collinear; the rigid motions do not span three dimensions".into(),
        ));
    }
    Ok(flex_dimension(fw, policy)?.dimension == 3)
}

/// Per-bar `|⟨u_v − u_w, p_v − p_w⟩| / |p_v − p_w|`, complex parts combined
/// in modulus.
pub fn bar_residuals(fw: &Framework, u: &VelocityField) -> Vec<f64> {
    fw.bars
        .iter()
        .map(|&[v, w]| {
            let d = fw.positions[v] - fw.positions[w];
            let len = d.norm();
            let re = (u.re[v] - u.re[w]).dot(&d);
            let im = u.im.as_ref().map_or(0.0, |im| (im[v] - im[w]).dot(&d));
            re.hypot(im) / len
        })
        .collect()
}

/// Largest bar residual relative to the largest joint velocity; 0 for the
/// zero field.
pub fn flex_residual(fw: &Framework, u: &VelocityField) -> f64 {
    let norm = u.max_norm();
    if norm == 0.0 {
        return 0.0;
    }
    bar_residuals(fw, u).into_iter().fold(0.0, f64::max) / norm
}

/// Velocity per joint, with an optional imaginary part.
#[derive(Clone, Debug, PartialEq)]
pub struct VelocityField {
    pub re: Vec<Vec2>,
    pub im: Option<Vec<Vec2>>,
}

impl VelocityField {
    pub fn real(values: Vec<Vec2>) -> Self {
        VelocityField { re: values, im: None }
    }

    pub fn complex(re: Vec<Vec2>, im: Vec<Vec2>) -> Self {
        assert_eq!(re.len(), im.len());
        VelocityField { re, im: Some(im) }
    }

    pub fn zeros(n: usize) -> Self {
        VelocityField::real(vec![Vec2::zeros(); n])
    }

    pub fn translation(n: usize, v: Vec2) -> Self {
        VelocityField::real(vec![v; n])
    }

    /// Infinitesimal rotation `u(p) = (p − centre)^⊥`.
    pub fn rotation(positions: &[Vec2], centre: Vec2) -> Self {
        VelocityField::real(positions.iter().map(|&p| perp(p - centre)).collect())
    }

    pub fn len(&self) -> usize {
        self.re.len()
    }

    pub fn is_empty(&self) -> bool {
        self.re.is_empty()
    }

    pub fn is_complex(&self) -> bool {
        self.im.is_some()
    }

    /// Largest joint velocity modulus.
    pub fn max_norm(&self) -> f64 {
        (0..self.len())
            .map(|j| {
                let im = self.im.as_ref().map_or(0.0, |im| im[j].norm_squared());
                (self.re[j].norm_squared() + im).sqrt()
            })
            .fold(0.0, f64::max)
    }

    /// `self += a · other` for real fields.
    pub fn add_scaled(&mut self, a: f64, other: &VelocityField) {
        for (x, y) in self.re.iter_mut().zip(&other.re) {
            *x += a * y;
        }
        if let (Some(im), Some(oim)) = (self.im.as_mut(), other.im.as_ref()) {
            for (x, y) in im.iter_mut().zip(oim) {
                *x += a * y;
            }
        }
    }

    pub fn to_doc(&self) -> VelocityDoc {
        let fields = (0..self.len())
            .map(|j| {
                let r = self.re[j];
                let entry = match &self.im {
                    None => FieldEntry::Real([r.x, r.y]),
                    Some(im) => FieldEntry::Complex([[r.x, im[j].x], [r.y, im[j].y]]),
                };
                (j as u64, entry)
            })
            .collect();
        VelocityDoc { fields }
    }

    /// Reads a document that must define exactly the joints `0..joints`.
    pub fn from_doc(doc: &VelocityDoc, joints: usize) -> Result<Self> {
        if doc.fields.len() != joints || doc.fields.keys().any(|&k| k as usize >= joints) {
            return Err(Error::InvalidFramework(format!(
                "velocity field defines {} joints, framework has {joints}",
                doc.fields.len()
            )));
        }
        let complex = doc.fields.values().any(|e| matches!(e, FieldEntry::Complex(_)));
        let mut re = Vec::with_capacity(joints);
        let mut im = Vec::with_capacity(joints);
        for entry in doc.fields.values() {
            match *entry {
                FieldEntry::Real([x, y]) => {
                    re.push(Vec2::new(x, y));
                    im.push(Vec2::zeros());
                }
                FieldEntry::Complex([[xr, xi], [yr, yi]]) => {
                    re.push(Vec2::new(xr, yr));
                    im.push(Vec2::new(xi, yi));
                }
            }
        }
        if re.iter().chain(&im).any(|v| !(v.x.is_finite() && v.y.is_finite())) {
            return Err(Error::InvalidFramework("non-finite velocity".into()));
        }
        Ok(VelocityField {
            re,
            im: complex.then_some(im),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldEntry {
    Real([f64; 2]),
    /// `[[re_x, im_x], [re_y, im_y]]`.
    Complex([[f64; 2]; 2]),
}

/// JSON form: `{"fields": {"<joint id>": [ux, uy] | [[re, im], [re, im]]}}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VelocityDoc {
    pub fields: BTreeMap<u64, FieldEntry>,
}
