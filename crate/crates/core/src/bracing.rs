//! Bracing patterns, the braces graph and prediction-vs-oracle experiments.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::str::FromStr;

use petgraph::unionfind::UnionFind;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rigidity::{
    brace_diagonal, constrained_dimension, flex_dimension, flex_space, FlexSpace, Framework, RankPolicy,
};
use crate::tiling::{RibbonSet, Tiling};

/// Tiles selected by the acute angle between their edge directions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TileClass {
    /// π/5 rhomb.
    Thin,
    /// 2π/5 rhomb.
    Thick,
    /// π/2.
    Square,
    /// π/4 rhomb.
    Rhomb,
    /// Any acute angle, in radians.
    Angle(f64),
}

impl TileClass {
    pub fn angle(self) -> f64 {
        match self {
            TileClass::Thin => PI / 5.0,
            TileClass::Thick => 2.0 * PI / 5.0,
            TileClass::Square => PI / 2.0,
            TileClass::Rhomb => PI / 4.0,
            TileClass::Angle(a) => a,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Generator {
    Checkered { p: i64 },
    CongruenceClass { class: TileClass },
    Random { seed: u64, density: f64 },
    None,
}

impl FromStr for Generator {
    type Err = Error;

    /// `checkered:<p>`, `thin`, `thick`, `square`, `rhomb`,
    /// `angle:<radians>`, `random:<density>[:<seed>]` or `none`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidPattern(format!("unrecognised pattern '{s}'"));
        let mut parts = s.split(':');
        let head = parts.next().unwrap_or_default();
        let rest: Vec<&str> = parts.collect();
        let class = |c| Ok(Generator::CongruenceClass { class: c });
        match (head, rest.as_slice()) {
            ("checkered", [p]) => Ok(Generator::Checkered {
                p: p.parse().map_err(|_| bad())?,
            }),
            ("thin", []) => class(TileClass::Thin),
            ("thick", []) => class(TileClass::Thick),
            ("square", []) => class(TileClass::Square),
            ("rhomb", []) => class(TileClass::Rhomb),
            ("angle", [a]) => class(TileClass::Angle(a.parse().map_err(|_| bad())?)),
            ("random", [d]) => Ok(Generator::Random {
                density: d.parse().map_err(|_| bad())?,
                seed: 0,
            }),
            ("random", [d, seed]) => Ok(Generator::Random {
                density: d.parse().map_err(|_| bad())?,
                seed: seed.parse().map_err(|_| bad())?,
            }),
            ("none", []) => Ok(Generator::None),
            _ => Err(bad()),
        }
    }
}

/// A set of braced tiles, with the rule that produced it when known.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct BracingPattern {
    pub braced: BTreeSet<usize>,
    pub generator: Option<Generator>,
    pub warnings: Vec<String>,
}

/// JSON form: `{"braced_tiles": [...]}` or `{"generator": {...}}`.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub braced_tiles: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<Generator>,
}

impl BracingPattern {
    pub fn explicit(tiles: impl IntoIterator<Item = usize>) -> Self {
        BracingPattern {
            braced: tiles.into_iter().collect(),
            ..Default::default()
        }
    }

    pub fn to_doc(&self) -> PatternDoc {
        PatternDoc {
            braced_tiles: Some(self.braced.iter().copied().collect()),
            generator: self.generator.clone(),
        }
    }

    /// Resolves a document against a tiling; an explicit tile list wins over
    /// a generator when both are present and must agree with it.
    pub fn from_doc(doc: &PatternDoc, tiling: &Tiling) -> Result<Self> {
        let generated = doc.generator.as_ref().map(|g| generate(tiling, g)).transpose()?;
        match (&doc.braced_tiles, generated) {
            (None, None) => Err(Error::InvalidPattern("pattern has neither tiles nor a generator".into())),
            (None, Some(p)) => Ok(p),
            (Some(tiles), generated) => {
                let pattern = BracingPattern::explicit(tiles.iter().copied());
                if pattern.braced.len() != tiles.len() {
                    return Err(Error::InvalidPattern("a tile is braced twice".into()));
                }
                if let Some(g) = generated {
                    if g.braced != pattern.braced {
                        return Err(Error::InvalidPattern("tile list disagrees with its generator".into()));
                    }
                    return Ok(BracingPattern { generator: g.generator, ..pattern });
                }
                validate(&pattern, tiling)?;
                Ok(pattern)
            }
        }
    }
}

fn validate(pattern: &BracingPattern, tiling: &Tiling) -> Result<()> {
    match pattern.braced.iter().find(|&&t| t >= tiling.tiles().len()) {
        Some(t) => Err(Error::InvalidPattern(format!("braced tile {t} is not in the patch"))),
        None => Ok(()),
    }
}

pub fn generate(tiling: &Tiling, generator: &Generator) -> Result<BracingPattern> {
    match *generator {
        Generator::Checkered { p } => checkered_pattern(tiling, p),
        Generator::CongruenceClass { class } => Ok(congruence_class_pattern(tiling, class)),
        Generator::Random { seed, density } => random_pattern(tiling, density, seed),
        Generator::None => Ok(BracingPattern {
            generator: Some(Generator::None),
            ..Default::default()
        }),
    }
}

/// Braces the tiles `T(i, j, k, l)` with `k ≡ l (mod p)`.
pub fn checkered_pattern(tiling: &Tiling, p: i64) -> Result<BracingPattern> {
    if p < 2 {
        return Err(Error::InvalidPattern(format!("checkered period {p} must be at least 2")));
    }
    let mut braced = BTreeSet::new();
    for (t, tile) in tiling.tiles().iter().enumerate() {
        let (k, l) = tile
            .line_indices
            .ok_or_else(|| Error::MissingLabels(format!("tile {t} has no line indices")))?;
        if (k - l).rem_euclid(p) == 0 {
            braced.insert(t);
        }
    }
    Ok(BracingPattern {
        braced,
        generator: Some(Generator::Checkered { p }),
        warnings: Vec::new(),
    })
}

/// Braces every tile whose acute angle matches the class within 1e-6 rad.
pub fn congruence_class_pattern(tiling: &Tiling, class: TileClass) -> BracingPattern {
    let target = class.angle();
    let braced: BTreeSet<usize> = (0..tiling.tiles().len())
        .filter(|&t| (tiling.acute_angle(t) - target).abs() < 1e-6)
        .collect();
    let warnings = if braced.is_empty() {
        vec![format!("no tile has acute angle {target:.6} rad; nothing braced")]
    } else {
        Vec::new()
    };
    BracingPattern {
        braced,
        generator: Some(Generator::CongruenceClass { class }),
        warnings,
    }
}

/// Each tile braced independently with probability `density`.
pub fn random_pattern(tiling: &Tiling, density: f64, seed: u64) -> Result<BracingPattern> {
    if !(0.0..=1.0).contains(&density) {
        return Err(Error::InvalidPattern(format!("density {density} is outside [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(BracingPattern {
        braced: (0..tiling.tiles().len()).filter(|_| rng.gen_bool(density)).collect(),
        generator: Some(Generator::Random { seed, density }),
        warnings: Vec::new(),
    })
}

/// Vertices are ribbons; each braced tile joins its two ribbons.
#[derive(Clone, Debug, Serialize)]
pub struct BracesGraph {
    pub vertices: usize,
    /// `(ribbon, ribbon, tile)`; parallel edges allowed.
    pub edges: Vec<(usize, usize, usize)>,
    /// Component count, isolated ribbons included.
    pub components: usize,
    /// Component of each ribbon, numbered by first appearance.
    pub component_of: Vec<usize>,
}

pub fn braces_graph(tiling: &Tiling, ribbons: &RibbonSet, pattern: &BracingPattern) -> Result<BracesGraph> {
    validate(pattern, tiling)?;
    let n = ribbons.len();
    let mut uf: UnionFind<usize> = UnionFind::new(n);
    let edges: Vec<(usize, usize, usize)> = pattern
        .braced
        .iter()
        .map(|&t| {
            let [a, b] = ribbons.tile_ribbons[t];
            uf.union(a, b);
            (a, b, t)
        })
        .collect();
    let mut label = vec![usize::MAX; n];
    let mut component_of = Vec::with_capacity(n);
    let mut components = 0;
    for v in 0..n {
        let root = uf.find(v);
        if label[root] == usize::MAX {
            label[root] = components;
            components += 1;
        }
        component_of.push(label[root]);
    }
    Ok(BracesGraph {
        vertices: n,
        edges,
        components,
        component_of,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Prediction {
    pub components: usize,
    pub rigid: bool,
    /// Conjectured flex dimension `c + 2`.
    pub predicted_dim: usize,
}

pub fn predict_rigidity(graph: &BracesGraph) -> Prediction {
    Prediction {
        components: graph.components,
        rigid: graph.components == 1,
        predicted_dim: graph.components + 2,
    }
}

/// Prediction and oracle verdict for one pattern.
#[derive(Clone, Debug, Serialize)]
pub struct BraceReport {
    pub braces: usize,
    pub c: usize,
    pub predicted_rigid: bool,
    pub predicted_dim: usize,
    pub oracle_dim: usize,
    pub oracle_rigid: bool,
    pub gap_ratio: f64,
    pub agree: bool,
    pub warnings: Vec<String>,
}

pub fn evaluate_pattern(
    tiling: &Tiling,
    ribbons: &RibbonSet,
    pattern: &BracingPattern,
    policy: &RankPolicy,
) -> Result<BraceReport> {
    let prediction = predict_rigidity(&braces_graph(tiling, ribbons, pattern)?);
    let oracle = flex_dimension(&Framework::from_tiling(tiling, &pattern.braced)?, policy)?;
    Ok(BraceReport {
        braces: pattern.braced.len(),
        c: prediction.components,
        predicted_rigid: prediction.rigid,
        predicted_dim: prediction.predicted_dim,
        oracle_dim: oracle.dimension,
        oracle_rigid: oracle.dimension == 3,
        gap_ratio: oracle.gap_ratio,
        agree: oracle.dimension == prediction.predicted_dim && (oracle.dimension == 3) == prediction.rigid,
        warnings: pattern.warnings.clone(),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub trials: usize,
    pub density: f64,
    pub seed: u64,
    pub policy: RankPolicy,
    /// The first this-many trials are also decided by a direct SVD of the
    /// braced framework, which must agree with the kernel-restriction path.
    pub cross_check: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub braces: usize,
    pub c: usize,
    /// `None` when the oracle refused an ill-conditioned spectrum.
    pub oracle_dim: Option<usize>,
    pub gap_ratio: Option<f64>,
    pub rigid_agree: bool,
    pub dim_agree: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentReport {
    pub trials: usize,
    pub density: f64,
    pub seed: u64,
    pub ribbons: usize,
    pub ill_conditioned: usize,
    pub rigid_disagreements: usize,
    pub dim_disagreements: usize,
    pub cross_checked: usize,
    pub cross_check_mismatches: usize,
    pub min_gap_ratio: f64,
    pub median_gap_ratio: f64,
    pub rigid_trials: usize,
    pub records: Vec<TrialRecord>,
}

/// Random patterns against the oracle. The unbraced kernel is computed once;
/// each trial then only decomposes the brace rows restricted to it.
/// Trial `n` draws from stream `n` of a generator seeded with `seed`, so the
/// report does not depend on scheduling.
pub fn run_bracing_experiment(tiling: &Tiling, ribbons: &RibbonSet, config: &ExperimentConfig) -> Result<ExperimentReport> {
    if !(0.0..=1.0).contains(&config.density) {
        return Err(Error::InvalidPattern(format!("density {} is outside [0, 1]", config.density)));
    }
    let base_fw = Framework::from_tiling(tiling, &BTreeSet::new())?;
    let base: FlexSpace = flex_space(&base_fw, &config.policy)?;
    let positions = base_fw.positions().to_vec();

    let outcomes: Vec<Result<(TrialRecord, Option<bool>)>> = (0..config.trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(trial as u64);
            let pattern = BracingPattern::explicit((0..tiling.tiles().len()).filter(|_| rng.gen_bool(config.density)));
            let c = braces_graph(tiling, ribbons, &pattern)?.components;
            let extra: Vec<[usize; 2]> = pattern.braced.iter().map(|&t| brace_diagonal(tiling, t)).collect();
            let oracle = match constrained_dimension(&base, &positions, &extra, &config.policy) {
                Ok(d) => Some(d),
                Err(Error::IllConditioned { .. }) => None,
                Err(e) => return Err(e),
            };
            let cross = if trial < config.cross_check {
                let direct = flex_dimension(&Framework::from_tiling(tiling, &pattern.braced)?, &config.policy).ok();
                Some(direct.map(|d| d.dimension) == oracle.as_ref().map(|d| d.dimension))
            } else {
                None
            };
            let dim = oracle.as_ref().map(|d| d.dimension);
            Ok((
                TrialRecord {
                    trial,
                    braces: pattern.braced.len(),
                    c,
                    oracle_dim: dim,
                    gap_ratio: oracle.map(|d| d.gap_ratio),
                    rigid_agree: dim.is_none_or(|d| (d == 3) == (c == 1)),
                    dim_agree: dim.is_none_or(|d| d == c + 2),
                },
                cross,
            ))
        })
        .collect();
    let mut records = Vec::with_capacity(config.trials);
    let mut cross_checked = 0;
    let mut cross_check_mismatches = 0;
    for outcome in outcomes {
        let (record, cross) = outcome?;
        if let Some(ok) = cross {
            cross_checked += 1;
            cross_check_mismatches += usize::from(!ok);
        }
        records.push(record);
    }
    let mut gaps: Vec<f64> = records.iter().filter_map(|r| r.gap_ratio).collect();
    gaps.sort_by(f64::total_cmp);
    Ok(ExperimentReport {
        trials: config.trials,
        density: config.density,
        seed: config.seed,
        ribbons: ribbons.len(),
        ill_conditioned: records.iter().filter(|r| r.oracle_dim.is_none()).count(),
        rigid_disagreements: records.iter().filter(|r| !r.rigid_agree).count(),
        dim_disagreements: records.iter().filter(|r| !r.dim_agree).count(),
        cross_checked,
        cross_check_mismatches,
        min_gap_ratio: gaps.first().copied().unwrap_or(f64::INFINITY),
        median_gap_ratio: gaps.get(gaps.len() / 2).copied().unwrap_or(f64::INFINITY),
        rigid_trials: records.iter().filter(|r| r.oracle_dim == Some(3)).count(),
        records,
    })
}
