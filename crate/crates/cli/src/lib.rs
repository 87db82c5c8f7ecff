//! Command surface of the `quasirigid` tool. Every run is a pure function of
//! its [`RunConfig`]; `main` only parses arguments and writes the outputs.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use quasirigid::bracing::{self, BracingPattern, ExperimentConfig, Generator, PatternDoc};
use quasirigid::dualize::{dualize, verify_dual_consistency, working_patch, ConsistencyReport};
use quasirigid::flexbasis::{
    angle_between_lines, build_ribbon_shears, default_base_joint, default_base_tile, expand_flex, fit_ribbon_line,
    reconstruct, ribbon_direction, ribbon_figure, BfsOrder, ExpansionDoc,
};
use quasirigid::geometry::{pentagrid_preset, tetragrid_preset, MultigridSpec};
use quasirigid::rigidity::{flex_dimension, flex_space, Framework, RankPolicy, VelocityDoc, VelocityField};
use quasirigid::svg::{render, SvgOptions};
use quasirigid::tiling::{export_tiling, extract_ribbons, import_tiling, ribbon_overlap_check, square_grid, RibbonSet, Tiling, TilingDoc};
use quasirigid::zeromode::{self, band_zero_mode, interior_bar_residual, star_classes, Slice};
use quasirigid::{ErrorKind, Vec2};
use serde::Serialize;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Parser, Clone, Debug, Serialize)]
#[command(name = "quasirigid", version, about = "Rigidity and flexibility of parallelogram frameworks from multigrids")]
pub struct RunConfig {
    #[command(subcommand)]
    pub command: Command,
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Relative singular-value threshold for rank decisions.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Window radius for dualization.
    #[arg(long, global = true, default_value_t = 6.0)]
    pub window: f64,
    /// Write the primary output here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Also render the tiling as SVG.
    #[arg(long, global = true)]
    pub svg: Option<PathBuf>,
}

#[derive(Args, Clone, Debug, Default, Serialize)]
#[group(required = true, multiple = false)]
pub struct Source {
    /// Pentagrid offsets γ_1,…,γ_5.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub pentagrid: Option<Vec<f64>>,
    /// Tetragrid offsets γ_1,…,γ_4 (Ammann-Beenker).
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub tetragrid: Option<Vec<f64>>,
    /// Multigrid specification in JSON.
    #[arg(long)]
    pub multigrid: Option<PathBuf>,
    /// Tiling in JSON, used as is.
    #[arg(long)]
    pub tiling: Option<PathBuf>,
    /// Rectangular patch of the square grid, `ROWSxCOLS`.
    #[arg(long)]
    pub square_grid: Option<String>,
}

#[derive(Subcommand, Clone, Debug, Serialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Command {
    /// Dualize a multigrid and emit the working patch.
    Generate {
        #[command(flatten)]
        source: Source,
    },
    /// List ribbons and check pairwise overlaps.
    Ribbons {
        #[command(flatten)]
        source: Source,
        /// Ribbon ids to outline in the SVG.
        #[arg(long, value_delimiter = ',')]
        highlight: Vec<usize>,
    },
    /// Flex dimension of the (optionally braced) framework.
    Rigidity {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        pattern: Option<String>,
    },
    /// Braces graph prediction against the rigidity oracle.
    Brace {
        #[command(flatten)]
        source: Source,
        /// Generator: checkered:p, thin, thick, square, rhomb, angle:x, random:d[:seed], none.
        #[arg(long, conflicts_with = "pattern_file")]
        pattern: Option<String>,
        #[arg(long)]
        pattern_file: Option<PathBuf>,
        /// Run this many random trials instead of one pattern.
        #[arg(long, conflicts_with_all = ["pattern", "pattern_file"])]
        trials: Option<usize>,
        #[arg(long, default_value_t = 0.3)]
        density: f64,
        /// Trials also decided by a direct decomposition.
        #[arg(long, default_value_t = 0)]
        cross_check: usize,
    },
    /// Expand a flex in the ribbon-shear basis.
    Expand {
        #[command(flatten)]
        source: Source,
        /// Velocity field JSON; without it the first flex basis vector is used.
        #[arg(long)]
        field: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Order::Lowest)]
        order: Order,
    },
    /// Ribbon directions of a multigrid, optionally against centroid fits.
    RibbonFigure {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        fit: bool,
    },
    /// Sample the symbol matrix; CSV of (t, min_sv, kernel_dim).
    Spectrum {
        #[command(flatten)]
        source: Source,
        /// torus:n=64, circle:i=1:n=256 or random:n=10000[:seed=0][:margin=0.01].
        #[arg(long)]
        slice: Option<String>,
    },
    /// Band zero mode u(p_m) = λ^{m_i} t_i.
    ZeroMode {
        #[command(flatten)]
        source: Source,
        /// 1-based grid id.
        #[arg(long)]
        grid_id: usize,
        /// `0.25turns`, `1.2rad`, or `re,im` of unit modulus.
        #[arg(long, allow_hyphen_values = true)]
        lambda: String,
    },
    /// Consolidated analysis with a claim-by-claim check matrix.
    Report {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        pattern: Option<String>,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Order {
    Lowest,
    Highest,
    Shuffled,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] quasirigid::Error),
    #[error("{0}")]
    Input(String),
    #[error("check failed: {0}")]
    CheckFailed(String),
}

impl CliError {
    /// 1 bad input, 2 geometric failure, 3 ill-conditioned verdict,
    /// 4 a requested check failed.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) => match e.kind() {
                ErrorKind::Input => 1,
                ErrorKind::Geometry => 2,
                ErrorKind::IllConditioned => 3,
            },
            CliError::Input(_) => 1,
            CliError::CheckFailed(_) => 4,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Clone, Debug, Default)]
pub struct Output {
    pub primary: String,
    pub svg: Option<String>,
    /// Failed checks; the process exits nonzero when any are present.
    pub failures: Vec<String>,
    pub warnings: Vec<String>,
}

impl RunConfig {
    pub fn policy(&self) -> RankPolicy {
        let mut policy = RankPolicy::default();
        if let Some(tol) = self.tol {
            policy.relative = tol;
        }
        policy
    }
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn parse_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    serde_json::from_str(&read(path)?).map_err(|e| CliError::Core(e.into()))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialise");
    s.push('\n');
    s
}

impl Source {
    pub fn spec(&self) -> CliResult<Option<MultigridSpec>> {
        if let Some(g) = &self.pentagrid {
            let g: [f64; 5] = g.as_slice().try_into().map_err(|_| CliError::Input("--pentagrid takes 5 offsets".into()))?;
            return Ok(Some(pentagrid_preset(g).spec));
        }
        if let Some(g) = &self.tetragrid {
            let g: [f64; 4] = g.as_slice().try_into().map_err(|_| CliError::Input("--tetragrid takes 4 offsets".into()))?;
            return Ok(Some(tetragrid_preset(g)));
        }
        if let Some(path) = &self.multigrid {
            return parse_json(path).map(Some);
        }
        Ok(None)
    }

    fn warnings(&self) -> Vec<String> {
        match &self.pentagrid {
            Some(g) if g.iter().sum::<f64>().abs() > quasirigid::geometry::GAMMA_SUM_TOL => {
                vec!["pentagrid offsets do not sum to zero".into()]
            }
            _ => Vec::new(),
        }
    }

    /// The working patch: maximal closure of the core of the dual tiling,
    /// or the given tiling unchanged.
    pub fn tiling(&self, window: f64) -> CliResult<Tiling> {
        if let Some(spec) = self.spec()? {
            let dual = dualize(&spec, window)?;
            let patch = working_patch(&dual)?;
            return Ok(dual.tiling.restrict(&patch)?);
        }
        if let Some(path) = &self.tiling {
            let doc: TilingDoc = parse_json(path)?;
            return Ok(import_tiling(&doc)?);
        }
        if let Some(dims) = &self.square_grid {
            let bad = || CliError::Input(format!("--square-grid expects ROWSxCOLS, got '{dims}'"));
            let (r, c) = dims.split_once('x').ok_or_else(bad)?;
            let (r, c): (usize, usize) = (r.parse().map_err(|_| bad())?, c.parse().map_err(|_| bad())?);
            if r == 0 || c == 0 {
                return Err(bad());
            }
            return Ok(square_grid(r, c));
        }
        Err(CliError::Input("no tiling source given".into()))
    }
}

fn resolve_pattern(tiling: &Tiling, text: &str, seed: u64) -> CliResult<BracingPattern> {
    let mut generator: Generator = text.parse()?;
    if let Generator::Random { seed: s, .. } = &mut generator {
        if text.split(':').count() == 2 {
            *s = seed;
        }
    }
    Ok(bracing::generate(tiling, &generator)?)
}

fn svg_for(config: &RunConfig, tiling: &Tiling, ribbons: Option<&RibbonSet>, options: SvgOptions) -> Option<String> {
    config.svg.as_ref().map(|_| render(tiling, ribbons, &options))
}

pub fn run(config: &RunConfig) -> CliResult<Output> {
    match &config.command {
        Command::Generate { source } => cmd_generate(config, source),
        Command::Ribbons { source, highlight } => cmd_ribbons(config, source, highlight),
        Command::Rigidity { source, pattern } => cmd_rigidity(config, source, pattern.as_deref()),
        Command::Brace {
            source,
            pattern,
            pattern_file,
            trials,
            density,
            cross_check,
        } => match trials {
            Some(trials) => cmd_brace_experiment(config, source, *trials, *density, *cross_check),
            None => cmd_brace(config, source, pattern.as_deref(), pattern_file.as_deref()),
        },
        Command::Expand { source, field, order } => cmd_expand(config, source, field.as_deref(), *order),
        Command::RibbonFigure { source, fit } => cmd_ribbon_figure(config, source, *fit),
        Command::Spectrum { source, slice } => cmd_spectrum(config, source, slice.as_deref()),
        Command::ZeroMode { source, grid_id, lambda } => cmd_zero_mode(config, source, *grid_id, lambda),
        Command::Report { source, pattern } => cmd_report(config, source, pattern.as_deref()),
    }
}

pub fn cmd_generate(config: &RunConfig, source: &Source) -> CliResult<Output> {
    let tiling = source.tiling(config.window)?;
    let report: ConsistencyReport = verify_dual_consistency(&tiling);
    if tiling.has_index_vectors() && !report.passed() {
        return Err(quasirigid::Error::InvalidTiling(format!("dual tiling failed its consistency checks: {report:?}")).into());
    }
    Ok(Output {
        primary: to_json(&export_tiling(&tiling)),
        svg: svg_for(config, &tiling, None, SvgOptions::default()),
        warnings: source.warnings(),
        ..Default::default()
    })
}

#[derive(Serialize)]
struct RibbonEntry {
    id: usize,
    /// 1-based grid id and line index of the generating line.
    grid: Option<usize>,
    line: Option<i64>,
    direction: [f64; 2],
    tiles: Vec<usize>,
}

#[derive(Serialize)]
struct RibbonsOutput {
    schema_version: u32,
    count: usize,
    pairs_checked: usize,
    crossing_pairs: usize,
    overlap_violations: usize,
    ribbons: Vec<RibbonEntry>,
}

pub fn cmd_ribbons(config: &RunConfig, source: &Source, highlight: &[usize]) -> CliResult<Output> {
    let tiling = source.tiling(config.window)?;
    let ribbons = extract_ribbons(&tiling)?;
    let overlap = ribbon_overlap_check(&ribbons);
    let out = RibbonsOutput {
        schema_version: SCHEMA_VERSION,
        count: ribbons.len(),
        pairs_checked: overlap.pairs_checked,
        crossing_pairs: overlap.crossing_pairs,
        overlap_violations: overlap.violations.len(),
        ribbons: ribbons
            .iter()
            .map(|r| RibbonEntry {
                id: r.id,
                grid: r.label.map(|(g, _)| g + 1),
                line: r.label.map(|(_, l)| l),
                direction: [r.direction.x, r.direction.y],
                tiles: r.tiles.clone(),
            })
            .collect(),
    };
    let failures = if overlap.violations.is_empty() {
        Vec::new()
    } else {
        vec![format!("{} ribbon pairs share more than one tile", overlap.violations.len())]
    };
    let options = SvgOptions {
        highlight_ribbons: highlight.to_vec(),
        ..Default::default()
    };
    Ok(Output {
        primary: to_json(&out),
        svg: svg_for(config, &tiling, Some(&ribbons), options),
        failures,
        warnings: source.warnings(),
    })
}

#[derive(Serialize)]
struct RigidityOutput {
    schema_version: u32,
    joints: usize,
    bars: usize,
    braces: usize,
    flex_dim: usize,
    rigid: bool,
    gap_ratio: f64,
}

pub fn cmd_rigidity(config: &RunConfig, source: &Source, pattern: Option<&str>) -> CliResult<Output> {
    let tiling = source.tiling(config.window)?;
    let braced = match pattern {
        Some(p) => resolve_pattern(&tiling, p, config.seed)?.braced,
        None => BTreeSet::new(),
    };
    let fw = Framework::from_tiling(&tiling, &braced)?;
    let dim = flex_dimension(&fw, &config.policy())?;
    let out = RigidityOutput {
        schema_version: SCHEMA_VERSION,
        joints: fw.joint_count(),
        bars: fw.bars().len(),
        braces: braced.len(),
        flex_dim: dim.dimension,
        rigid: dim.dimension == 3,
        gap_ratio: dim.gap_ratio,
    };
    Ok(Output {
        primary: to_json(&out),
        svg: svg_for(config, &tiling, None, SvgOptions { braced, ..Default::default() }),
        warnings: source.warnings(),
        ..Default::default()
    })
}

#[derive(Serialize)]
struct BraceOutput {
    schema_version: u32,
    pattern: PatternDoc,
    #[serde(flatten)]
    report: bracing::BraceReport,
    rigid: bool,
}

pub fn cmd_brace(config: &RunConfig, source: &Source, pattern: Option<&str>, pattern_file: Option<&Path>) -> CliResult<Output> {
    let tiling = source.tiling(config.window)?;
    let ribbons = extract_ribbons(&tiling)?;
    let pattern = match (pattern, pattern_file) {
        (Some(p), _) => resolve_pattern(&tiling, p, config.seed)?,
        (None, Some(path)) => BracingPattern::from_doc(&parse_json(path)?, &tiling)?,
        (None, None) => return Err(CliError::Input("brace needs --pattern, --pattern-file or --trials".into())),
    };
    let report = bracing::evaluate_pattern(&tiling, &ribbons, &pattern, &config.policy())?;
    let failures = if report.agree {
        Vec::new()
    } else {
        vec![format!("prediction dim {} but oracle dim {}", report.predicted_dim, report.oracle_dim)]
    };
    let mut warnings = source.warnings();
    warnings.extend(report.warnings.iter().cloned());
    let out = BraceOutput {
        schema_version: SCHEMA_VERSION,
        pattern: pattern.to_doc(),
        rigid: report.oracle_rigid,
        report,
    };
    Ok(Output {
        primary: to_json(&out),
        svg: svg_for(config, &tiling, None, SvgOptions { braced: pattern.braced, ..Default::default() }),
        failures,
        warnings,
    })
}

pub fn cmd_brace_experiment(config: &RunConfig, source: &Source, trials: usize, density: f64, cross_check: usize) -> CliResult<Output> {
    let tiling = source.tiling(config.window)?;
    let ribbons = extract_ribbons(&tiling)?;
    let report = bracing::run_bracing_experiment(
        &tiling,
        &ribbons,
        &ExperimentConfig {
            trials,
            density,
            seed: config.seed,
            policy: config.policy(),
            cross_check,
        },
    )?;
    let mut failures = Vec::new();
    if report.rigid_disagreements + report.dim_disagreements + report.cross_check_mismatches > 0 {
        failures.push(format!(
            "{} rigidity and {} dimension disagreements, {} cross-check mismatches",
            report.rigid_disagreements, report.dim_disagreements, report.cross_check_mismatches
        ));
    }
    #[derive(Serialize)]
    struct Wrapped {
        schema_version: u32,
        #[serde(flatten)]
        report: bracing::ExperimentReport,
    }
    Ok(Output {
        primary: to_json(&Wrapped {
            schema_version: SCHEMA_VERSION,
            report,
        }),
        failures,
        warnings: source.warnings(),
        ..Default::default()
    })
}

fn bfs_order(order: Order, seed: u64) -> BfsOrder {
    match order {
        Order::Lowest => BfsOrder::LowestId,
        Order::Highest => BfsOrder::HighestId,
        Order::Shuffled => BfsOrder::Shuffled(seed),
    }
}

pub fn cmd_expand(config: &RunConfig, source: &Source, field: Option<&Path>, order: Order) -> CliResult<Output> {
    let tiling = source.tiling(config.window)?;
    let ribbons = extract_ribbons(&tiling)?;
    let base_joint = default_base_joint(&tiling);
    let shears = build_ribbon_shears(&tiling, &ribbons, base_joint)?;
    let u = match field {
        Some(path) => VelocityField::from_doc(&parse_json::<VelocityDoc>(path)?, tiling.joints().len())?,
        None => {
            let fw = Framework::from_tiling(&tiling, &BTreeSet::new())?;
            flex_space(&fw, &config.policy())?.basis.swap_remove(0)
        }
    };
    let expansion = expand_flex(&tiling, &ribbons, &shears, &u, default_base_tile(&tiling, base_joint), bfs_order(order, config.seed))?;
    let doc: ExpansionDoc = expansion.to_doc();
    Ok(Output {
        primary: to_json(&doc),
        warnings: source.warnings(),
        ..Default::default()
    })
}

#[derive(Serialize)]
struct FitEntry {
    grid: usize,
    ribbon: usize,
    tiles: usize,
    angle_error: f64,
    tolerance: f64,
    passed: bool,
}

#[derive(Serialize)]
struct FigureOutput {
    schema_version: u32,
    /// Distinct line angles in [0, π), radians.
    angles: Vec<f64>,
    /// Per grid (1-based order): ribbon direction and the grid line direction.
    directions: Vec<[f64; 2]>,
    line_directions: Vec<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fits: Option<Vec<FitEntry>>,
}

/// Longest labelled ribbon of each grid against its predicted direction;
/// the fit may deviate by the slope resolution `2 / tiles`.
fn ribbon_fits(spec: &MultigridSpec, tiling: &Tiling, ribbons: &RibbonSet) -> Vec<FitEntry> {
    (0..spec.r())
        .filter_map(|i| {
            let rho = ribbons
                .iter()
                .filter(|r| r.label.map(|(g, _)| g) == Some(i))
                .max_by_key(|r| (r.tiles.len(), std::cmp::Reverse(r.id)))?;
            let line = fit_ribbon_line(tiling, ribbons, rho.id);
            let angle_error = angle_between_lines(line.direction, ribbon_direction(spec, i));
            let tolerance = 2.0 / rho.tiles.len() as f64;
            Some(FitEntry {
                grid: i + 1,
                ribbon: rho.id,
                tiles: rho.tiles.len(),
                angle_error,
                tolerance,
                passed: angle_error < tolerance,
            })
        })
        .collect()
}

pub fn cmd_ribbon_figure(config: &RunConfig, source: &Source, fit: bool) -> CliResult<Output> {
    let spec = source
        .spec()?
        .ok_or_else(|| CliError::Input("ribbon-figure needs a multigrid source".into()))?;
    let fits = if fit {
        let tiling = dualize(&spec, config.window)?.tiling;
        let ribbons = extract_ribbons(&tiling)?;
        Some(ribbon_fits(&spec, &tiling, &ribbons))
    } else {
        None
    };
    let failures = fits
        .iter()
        .flatten()
        .filter(|f| !f.passed)
        .map(|f| format!("grid {} ribbon fit off by {:.3e} rad", f.grid, f.angle_error))
        .collect();
    let v2 = |v: Vec2| [v.x, v.y];
    let out = FigureOutput {
        schema_version: SCHEMA_VERSION,
        angles: ribbon_figure(&spec),
        directions: (0..spec.r()).map(|i| v2(ribbon_direction(&spec, i))).collect(),
        line_directions: spec.grids().iter().map(|g| v2(g.line_direction())).collect(),
        fits,
    };
    Ok(Output {
        primary: to_json(&out),
        failures,
        warnings: source.warnings(),
        ..Default::default()
    })
}

/// Star classes of the source; for a multigrid, also whether they survive
/// doubling the window.
fn classes_for(config: &RunConfig, source: &Source) -> CliResult<(zeromode::Classes, Vec<String>)> {
    match source.spec()? {
        Some(spec) => {
            let (small, _, report) = zeromode::classes_at_windows(&spec, (config.window, 2.0 * config.window))?;
            let warnings = if report.stable {
                Vec::new()
            } else {
                vec![format!(
                    "class sets changed between windows {} and {} ({:?} stars, {:?} edges); spectrum is provisional",
                    report.windows.0, report.windows.1, report.star_classes, report.edge_classes
                )]
            };
            Ok((small, warnings))
        }
        None => Ok((star_classes(&source.tiling(config.window)?)?, Vec::new())),
    }
}

pub fn cmd_spectrum(config: &RunConfig, source: &Source, slice: Option<&str>) -> CliResult<Output> {
    let (classes, mut warnings) = classes_for(config, source)?;
    let slice: Slice = match slice {
        Some(s) => s.parse()?,
        None if classes.rank == 2 => Slice::Torus { n: 64 },
        None => Slice::Circle { i: 0, n: 256 },
    };
    let points = zeromode::spectrum_sample(&classes, &slice)?;
    let mut csv = String::new();
    let varying: Vec<usize> = match slice {
        Slice::Circle { i, .. } => vec![i],
        _ => (0..classes.rank).collect(),
    };
    let header: Vec<String> = if varying.len() == 1 {
        vec!["t".into()]
    } else {
        varying.iter().map(|j| format!("t{}", j + 1)).collect()
    };
    csv.push_str(&format!("{},min_sv,kernel_dim\n", header.join(",")));
    for p in &points {
        let ts: Vec<String> = varying.iter().map(|&j| format!("{}", p.turns[j])).collect();
        csv.push_str(&format!("{},{:e},{}\n", ts.join(","), p.min_sv, p.kernel_dim));
    }
    warnings.extend(source.warnings());
    Ok(Output {
        primary: csv,
        warnings,
        ..Default::default()
    })
}

/// `0.25turns`, `1.5rad` or `re,im`.
pub fn parse_lambda(text: &str) -> CliResult<quasirigid::zeromode::Complex> {
    use quasirigid::zeromode::Complex;
    let bad = || CliError::Input(format!("unrecognised λ '{text}'"));
    let t = text.trim();
    let z = if let Some(x) = t.strip_suffix("turns") {
        Complex::from_polar(1.0, std::f64::consts::TAU * x.trim().parse::<f64>().map_err(|_| bad())?)
    } else if let Some(x) = t.strip_suffix("rad") {
        Complex::from_polar(1.0, x.trim().parse::<f64>().map_err(|_| bad())?)
    } else {
        let (re, im) = t.split_once(',').ok_or_else(bad)?;
        Complex::new(re.trim().parse().map_err(|_| bad())?, im.trim().parse().map_err(|_| bad())?)
    };
    if (z.norm() - 1.0).abs() > 1e-12 {
        return Err(CliError::Input(format!("λ = {text} is not of unit modulus")));
    }
    Ok(z)
}

pub fn cmd_zero_mode(config: &RunConfig, source: &Source, grid_id: usize, lambda: &str) -> CliResult<Output> {
    if grid_id == 0 {
        return Err(CliError::Input("grid ids are 1-based".into()));
    }
    let lambda = parse_lambda(lambda)?;
    let tiling = source.tiling(config.window)?;
    let u = band_zero_mode(&tiling, grid_id - 1, lambda)?;
    let classes = star_classes(&tiling)?;
    let residual = interior_bar_residual(&tiling, &classes, &u);
    let failures = if residual < 1e-12 {
        Vec::new()
    } else {
        vec![format!("interior bar residual {residual:e}")]
    };
    Ok(Output {
        primary: to_json(&u.to_doc()),
        failures,
        warnings: source.warnings(),
        ..Default::default()
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub claim: &'static str,
    /// Acceptance test exercising the claim at scale.
    pub test: &'static str,
    /// `None` when the check does not apply to this input.
    pub passed: Option<bool>,
    pub detail: String,
}

#[derive(Serialize)]
struct BracingSummary {
    pattern: PatternDoc,
    c: usize,
    oracle_dim: usize,
    predicted_dim: usize,
    rigid: bool,
    agree: bool,
    gap_ratio: f64,
}

#[derive(Serialize)]
struct ExpansionSummary {
    fields: usize,
    max_error: f64,
    order_deviation: f64,
}

#[derive(Serialize)]
struct Report {
    schema_version: u32,
    config: RunConfig,
    tiles: usize,
    joints: usize,
    ribbons: usize,
    flex_dim: usize,
    gap_ratio: f64,
    prediction_dim: usize,
    agree: bool,
    overlap_violations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    expansion: Option<ExpansionSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bracing: Option<BracingSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ribbon_figure: Option<Vec<f64>>,
    checks: Vec<Check>,
    warnings: Vec<String>,
}

/// Expansion of up to `count` basis flexes in three BFS orders.
fn expansion_round_trip(tiling: &Tiling, ribbons: &RibbonSet, basis: &[VelocityField], seed: u64) -> quasirigid::Result<ExpansionSummary> {
    let base_joint = default_base_joint(tiling);
    let shears = build_ribbon_shears(tiling, ribbons, base_joint)?;
    let base_tile = default_base_tile(tiling, base_joint);
    let mut max_error: f64 = 0.0;
    let mut order_deviation: f64 = 0.0;
    let fields = basis.len().min(10);
    for u in &basis[..fields] {
        let runs = [BfsOrder::LowestId, BfsOrder::HighestId, BfsOrder::Shuffled(seed)]
            .map(|order| expand_flex(tiling, ribbons, &shears, u, base_tile, order));
        let [a, b, c] = runs;
        let (a, b, c) = (a?, b?, c?);
        let back = reconstruct(&shears, &a, tiling.joints().len());
        for (x, y) in back.re.iter().zip(&u.re) {
            max_error = max_error.max((x - y).norm());
        }
        for other in [&b, &c] {
            for (x, y) in a.ribbons.iter().zip(&other.ribbons) {
                order_deviation = order_deviation.max((x - y).abs());
            }
            order_deviation = order_deviation.max((a.alpha_x - other.alpha_x).abs()).max((a.alpha_y - other.alpha_y).abs());
        }
    }
    Ok(ExpansionSummary {
        fields,
        max_error,
        order_deviation,
    })
}

pub fn cmd_report(config: &RunConfig, source: &Source, pattern: Option<&str>) -> CliResult<Output> {
    let tiling = source.tiling(config.window)?;
    let ribbons = extract_ribbons(&tiling)?;
    let policy = config.policy();
    let fw = Framework::from_tiling(&tiling, &BTreeSet::new())?;
    let space = flex_space(&fw, &policy)?;
    let overlap = ribbon_overlap_check(&ribbons);
    let mut warnings = source.warnings();
    let mut checks = vec![
        Check {
            claim: "unbraced flex dimension equals ribbon count plus 2",
            test: "unbraced_dimension_law",
            passed: Some(space.dimension == ribbons.len() + 2),
            detail: format!("flex dim {}, {} ribbons", space.dimension, ribbons.len()),
        },
        Check {
            claim: "two ribbons share at most one tile",
            test: "two_ribbon_lemma",
            passed: Some(overlap.violations.is_empty()),
            detail: format!("{} pairs checked", overlap.pairs_checked),
        },
    ];

    let expansion = match expansion_round_trip(&tiling, &ribbons, &space.basis, config.seed) {
        Ok(summary) => {
            checks.push(Check {
                claim: "translations and ribbon shears form a free basis of the flexes",
                test: "expansion_round_trip",
                passed: Some(summary.max_error < 1e-8 && summary.order_deviation < 1e-10),
                detail: format!("max error {:e}, order deviation {:e}", summary.max_error, summary.order_deviation),
            });
            Some(summary)
        }
        Err(e) => {
            warnings.push(format!("expansion skipped: {e}"));
            checks.push(Check {
                claim: "translations and ribbon shears form a free basis of the flexes",
                test: "expansion_round_trip",
                passed: None,
                detail: e.to_string(),
            });
            None
        }
    };

    let bracing = match pattern {
        Some(p) => {
            let pattern = resolve_pattern(&tiling, p, config.seed)?;
            let r = bracing::evaluate_pattern(&tiling, &ribbons, &pattern, &policy)?;
            warnings.extend(r.warnings.iter().cloned());
            checks.push(Check {
                claim: "braced framework is rigid iff its braces graph is connected and spanning",
                test: "braced_rigidity_criterion",
                passed: Some(r.predicted_rigid == r.oracle_rigid),
                detail: format!("c = {}, oracle rigid {}", r.c, r.oracle_rigid),
            });
            checks.push(Check {
                claim: "braced flex dimension equals component count plus 2",
                test: "braced_rigidity_criterion",
                passed: Some(r.oracle_dim == r.predicted_dim),
                detail: format!("oracle dim {}, c + 2 = {}", r.oracle_dim, r.predicted_dim),
            });
            Some(BracingSummary {
                pattern: pattern.to_doc(),
                c: r.c,
                oracle_dim: r.oracle_dim,
                predicted_dim: r.predicted_dim,
                rigid: r.oracle_rigid,
                agree: r.agree,
                gap_ratio: r.gap_ratio,
            })
        }
        None => None,
    };

    let ribbon_figure = source.spec()?.map(|spec| ribbon_figure(&spec));

    let failures: Vec<String> = checks
        .iter()
        .filter(|c| c.passed == Some(false))
        .map(|c| format!("{}: {}", c.claim, c.detail))
        .collect();
    let report = Report {
        schema_version: SCHEMA_VERSION,
        config: config.clone(),
        tiles: tiling.tiles().len(),
        joints: tiling.joints().len(),
        ribbons: ribbons.len(),
        flex_dim: space.dimension,
        gap_ratio: space.gap_ratio,
        prediction_dim: ribbons.len() + 2,
        agree: space.dimension == ribbons.len() + 2,
        overlap_violations: overlap.violations.len(),
        expansion,
        bracing,
        ribbon_figure,
        checks,
        warnings: warnings.clone(),
    };
    let braced = pattern
        .map(|p| resolve_pattern(&tiling, p, config.seed).map(|p| p.braced))
        .transpose()?
        .unwrap_or_default();
    Ok(Output {
        primary: to_json(&report),
        svg: svg_for(config, &tiling, Some(&ribbons), SvgOptions { braced, ..Default::default() }),
        failures,
        warnings,
    })
}

/// Caps rayon's pool at `QUASIRIGID_THREADS` when set.
pub fn init_threads() -> CliResult<()> {
    if let Ok(v) = std::env::var("QUASIRIGID_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| CliError::Input(format!("QUASIRIGID_THREADS must be a positive integer, got '{v}'")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Input(e.to_string()))?;
    }
    Ok(())
}
