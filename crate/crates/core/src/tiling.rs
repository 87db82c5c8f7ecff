//! Parallelogram tiling patches: joints, edges, tiles, ribbons and patches.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use petgraph::unionfind::UnionFind;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{cross, IndexVector, Vec2};

#[derive(Clone, Debug, PartialEq)]
pub struct Joint {
    pub pos: Vec2,
    pub index: Option<IndexVector>,
}

/// A tile edge. When both endpoints carry index vectors, `joints` runs in the
/// direction of increasing index and `class` is the grid id; otherwise the
/// endpoints are in increasing id order.
#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub joints: [usize; 2],
    pub class: Option<usize>,
}

/// A parallelogram tile with joints in counter-clockwise order.
#[derive(Clone, Debug, PartialEq)]
pub struct Tile {
    pub joints: [usize; 4],
    pub grid_pair: Option<(usize, usize)>,
    pub line_indices: Option<(i64, i64)>,
}

impl Tile {
    pub fn unlabelled(joints: [usize; 4]) -> Self {
        Tile {
            joints,
            grid_pair: None,
            line_indices: None,
        }
    }
}

/// A finite parallelogram tiling, validated on construction and immutable
/// afterwards.
#[derive(Clone, Debug)]
pub struct Tiling {
    joints: Vec<Joint>,
    edges: Vec<Edge>,
    tiles: Vec<Tile>,
    /// `tile_edges[t][s]` joins corners `s` and `s + 1 (mod 4)` of tile `t`.
    tile_edges: Vec<[usize; 4]>,
    edge_tiles: Vec<Vec<usize>>,
    joint_edges: Vec<Vec<usize>>,
    edge_lookup: HashMap<(usize, usize), usize>,
    class_vectors: Option<Vec<Vec2>>,
}

fn key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

impl Tiling {
    /// Builds and fully validates a tiling. Tiles given clockwise are
    /// reoriented.
    pub fn new(joints: Vec<Joint>, tiles: Vec<Tile>) -> Result<Self> {
        Self::build(joints, tiles, None, true)
    }

    /// As [`Tiling::new`], with the dual edge vector of every grid supplied.
    pub fn with_class_vectors(joints: Vec<Joint>, tiles: Vec<Tile>, vectors: Vec<Vec2>) -> Result<Self> {
        Self::build(joints, tiles, Some(vectors), true)
    }

    /// Builds the combinatorial structure only, skipping every geometric
    /// check. Used to feed deliberately broken tilings to the consistency
    /// checker.
    pub fn new_unchecked(joints: Vec<Joint>, tiles: Vec<Tile>, vectors: Option<Vec<Vec2>>) -> Result<Self> {
        Self::build(joints, tiles, vectors, false)
    }

    fn build(joints: Vec<Joint>, mut tiles: Vec<Tile>, vectors: Option<Vec<Vec2>>, check: bool) -> Result<Self> {
        if tiles.is_empty() {
            return Err(Error::InvalidTiling("no tiles".into()));
        }
        let n = joints.len();
        if let Some(p) = joints.iter().position(|j| !(j.pos.x.is_finite() && j.pos.y.is_finite())) {
            return Err(Error::InvalidTiling(format!("joint {p} has a non-finite position")));
        }
        let rank = joints.iter().find_map(|j| j.index.as_ref().map(IndexVector::len));
        if joints.iter().any(|j| j.index.as_ref().map(IndexVector::len) != rank && j.index.is_some()) {
            return Err(Error::InvalidTiling("index vectors of different lengths".into()));
        }
        let scale = joints.iter().map(|j| j.pos.abs().max()).fold(1.0, f64::max);

        for (t, tile) in tiles.iter_mut().enumerate() {
            let js = tile.joints;
            if js.iter().any(|&j| j >= n) {
                return Err(Error::BadTile { tile: t, reason: "refers to a missing joint".into() });
            }
            if js.iter().collect::<BTreeSet<_>>().len() != 4 {
                return Err(Error::BadTile { tile: t, reason: "joints are not distinct".into() });
            }
            if let Some((i, j)) = tile.grid_pair {
                if i == j {
                    return Err(Error::BadTile { tile: t, reason: "grid pair repeats a grid".into() });
                }
            }
            if !check {
                continue;
            }
            let p: Vec<Vec2> = js.iter().map(|&j| joints[j].pos).collect();
            let a = p[1] - p[0];
            let b = p[3] - p[0];
            let area = cross(a, b);
            let edge_scale = a.norm().max(b.norm());
            if area.abs() <= 1e-9 * edge_scale * edge_scale || edge_scale == 0.0 {
                return Err(Error::BadTile { tile: t, reason: "degenerate (zero-area) parallelogram".into() });
            }
            if (p[0] + p[2] - p[1] - p[3]).norm() > 1e-9 * scale {
                return Err(Error::BadTile { tile: t, reason: "not a parallelogram".into() });
            }
            if area < 0.0 {
                tile.joints = [js[0], js[3], js[2], js[1]];
            }
        }

        let mut edges: Vec<Edge> = Vec::new();
        let mut edge_lookup = HashMap::new();
        let mut tile_edges = Vec::with_capacity(tiles.len());
        let mut edge_tiles: Vec<Vec<usize>> = Vec::new();
        for (t, tile) in tiles.iter().enumerate() {
            let te: [usize; 4] = std::array::from_fn(|s| {
                let (a, b) = (tile.joints[s], tile.joints[(s + 1) % 4]);
                let id = *edge_lookup.entry(key(a, b)).or_insert_with(|| {
                    edges.push(orient_edge(&joints, a, b));
                    edge_tiles.push(Vec::new());
                    edges.len() - 1
                });
                edge_tiles[id].push(t);
                id
            });
            tile_edges.push(te);
        }
        if let Some(e) = edge_tiles.iter().position(|ts| ts.len() > 2) {
            return Err(Error::InvalidTiling(format!(
                "edge {:?} is shared by {} tiles",
                edges[e].joints,
                edge_tiles[e].len()
            )));
        }
        let mut joint_edges = vec![Vec::new(); n];
        for (e, edge) in edges.iter().enumerate() {
            joint_edges[edge.joints[0]].push(e);
            joint_edges[edge.joints[1]].push(e);
        }

        let mut tiling = Tiling {
            joints,
            edges,
            tiles,
            tile_edges,
            edge_tiles,
            joint_edges,
            edge_lookup,
            class_vectors: None,
        };
        for (e, ts) in tiling.edge_tiles.iter().enumerate() {
            if let [s, t] = ts[..] {
                let shared = tiling.tiles[s].joints.iter().filter(|j| tiling.tiles[t].joints.contains(j)).count();
                if shared != 2 {
                    return Err(Error::InvalidTiling(format!(
                        "tiles {s} and {t} share edge {e} but {shared} joints"
                    )));
                }
            }
        }
        if tiling.tile_components().len() != 1 {
            return Err(Error::InvalidTiling("tiles are not connected through shared edges".into()));
        }
        tiling.class_vectors = match vectors {
            Some(v) => Some(v),
            None => tiling.infer_class_vectors(rank, check)?,
        };
        Ok(tiling)
    }

    fn infer_class_vectors(&self, rank: Option<usize>, check: bool) -> Result<Option<Vec<Vec2>>> {
        let Some(r) = rank else { return Ok(None) };
        if self.joints.iter().any(|j| j.index.is_none()) {
            return Ok(None);
        }
        let mut found: Vec<Option<Vec2>> = vec![None; r];
        for edge in &self.edges {
            let Some(j) = edge.class else {
                return Err(Error::InvalidTiling(format!(
                    "edge {:?} does not join index vectors differing by one unit step",
                    edge.joints
                )));
            };
            let v = self.joints[edge.joints[1]].pos - self.joints[edge.joints[0]].pos;
            match found[j] {
                None => found[j] = Some(v),
                Some(w) if check && (v - w).norm() > 1e-9 * w.norm().max(1.0) => {
                    return Err(Error::InvalidTiling(format!(
                        "edges of grid {j} are not translates of one vector"
                    )))
                }
                _ => {}
            }
        }
        Ok(Some(found.into_iter().map(|v| v.unwrap_or_else(Vec2::zeros)).collect()))
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn joint(&self, j: usize) -> &Joint {
        &self.joints[j]
    }

    pub fn pos(&self, j: usize) -> Vec2 {
        self.joints[j].pos
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn tiles(&self) -> &[Tile] {
        &self.tiles
    }

    pub fn tile(&self, t: usize) -> &Tile {
        &self.tiles[t]
    }

    pub fn tile_edges(&self, t: usize) -> [usize; 4] {
        self.tile_edges[t]
    }

    pub fn edge_tiles(&self, e: usize) -> &[usize] {
        &self.edge_tiles[e]
    }

    pub fn joint_edges(&self, j: usize) -> &[usize] {
        &self.joint_edges[j]
    }

    pub fn edge_between(&self, a: usize, b: usize) -> Option<usize> {
        self.edge_lookup.get(&key(a, b)).copied()
    }

    /// Dual edge vector of every grid, when the tiling is multigrid-labelled.
    pub fn class_vectors(&self) -> Option<&[Vec2]> {
        self.class_vectors.as_deref()
    }

    pub fn has_index_vectors(&self) -> bool {
        self.joints.iter().all(|j| j.index.is_some())
    }

    pub fn has_labels(&self) -> bool {
        self.tiles.iter().all(|t| t.grid_pair.is_some() && t.line_indices.is_some())
    }

    /// Number of grids, when the joints carry index vectors.
    pub fn rank(&self) -> Option<usize> {
        self.joints.first().and_then(|j| j.index.as_ref()).map(IndexVector::len)
    }

    pub fn is_boundary_edge(&self, e: usize) -> bool {
        self.edge_tiles[e].len() == 1
    }

    /// Tiles sharing an edge with `t`, in increasing id order.
    pub fn neighbours(&self, t: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self.tile_edges[t]
            .iter()
            .flat_map(|&e| self.edge_tiles[e].iter().copied())
            .filter(|&s| s != t)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn centroid(&self, t: usize) -> Vec2 {
        self.tiles[t].joints.iter().map(|&j| self.joints[j].pos).sum::<Vec2>() / 4.0
    }

    pub fn signed_area(&self, t: usize) -> f64 {
        let p = self.tiles[t].joints.map(|j| self.joints[j].pos);
        cross(p[1] - p[0], p[3] - p[0])
    }

    /// Longer diagonal of the tile.
    pub fn diameter(&self, t: usize) -> f64 {
        let p = self.tiles[t].joints.map(|j| self.joints[j].pos);
        (p[2] - p[0]).norm().max((p[3] - p[1]).norm())
    }

    /// Interior angle of the tile in `(0, π/2]`, i.e. the acute angle between
    /// its two edge directions.
    pub fn acute_angle(&self, t: usize) -> f64 {
        let p = self.tiles[t].joints.map(|j| self.joints[j].pos);
        let (a, b) = (p[1] - p[0], p[3] - p[0]);
        let angle = cross(a, b).abs().atan2(a.dot(&b).abs());
        angle.clamp(0.0, std::f64::consts::FRAC_PI_2)
    }

    fn tile_components(&self) -> Vec<Vec<usize>> {
        components_of(self, &(0..self.tiles.len()).collect())
    }

    /// Sub-tiling on the tiles of `patch`, with joints renumbered in
    /// increasing order of their old ids.
    pub fn restrict(&self, patch: &Patch) -> Result<Tiling> {
        let used: BTreeSet<usize> = patch
            .tiles
            .iter()
            .flat_map(|&t| self.tiles[t].joints)
            .collect();
        let renumber: HashMap<usize, usize> = used.iter().enumerate().map(|(new, &old)| (old, new)).collect();
        let joints = used.iter().map(|&j| self.joints[j].clone()).collect();
        let tiles = patch
            .tiles
            .iter()
            .map(|&t| {
                let tile = &self.tiles[t];
                Tile {
                    joints: tile.joints.map(|j| renumber[&j]),
                    ..tile.clone()
                }
            })
            .collect();
        Tiling::build(joints, tiles, self.class_vectors.clone(), true)
    }
}

fn orient_edge(joints: &[Joint], a: usize, b: usize) -> Edge {
    if let (Some(ma), Some(mb)) = (&joints[a].index, &joints[b].index) {
        if let Some((j, d)) = ma.unit_difference(mb) {
            let joints = if d > 0 { [a, b] } else { [b, a] };
            return Edge { joints, class: Some(j) };
        }
    }
    Edge {
        joints: [a.min(b), a.max(b)],
        class: None,
    }
}

/// Connected components (through shared edges) of a set of tiles, each
/// sorted, ordered by smallest member.
fn components_of(tiling: &Tiling, tiles: &BTreeSet<usize>) -> Vec<Vec<usize>> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for &start in tiles {
        if !seen.insert(start) {
            continue;
        }
        let mut comp = vec![start];
        let mut queue = VecDeque::from([start]);
        while let Some(t) = queue.pop_front() {
            for s in tiling.neighbours(t) {
                if tiles.contains(&s) && seen.insert(s) {
                    comp.push(s);
                    queue.push_back(s);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// A finite set of tiles of an ambient tiling.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    pub tiles: BTreeSet<usize>,
    /// Edges used by exactly one tile of the patch.
    pub boundary: Vec<usize>,
    pub connected: bool,
    /// Connected with Euler characteristic `V − E + F = 1`.
    pub simply_connected: bool,
    /// The boundary edges form a single simple closed curve.
    pub simple_boundary: bool,
    /// No ambient tile outside the patch has three or more joints on the
    /// patch boundary.
    pub maximal: bool,
}

impl Patch {
    pub fn new(tiling: &Tiling, tiles: impl IntoIterator<Item = usize>) -> Result<Patch> {
        let tiles: BTreeSet<usize> = tiles.into_iter().collect();
        if tiles.is_empty() {
            return Err(Error::InvalidPatch("empty patch".into()));
        }
        if let Some(&t) = tiles.iter().find(|&&t| t >= tiling.tiles().len()) {
            return Err(Error::InvalidPatch(format!("tile {t} is not in the tiling")));
        }
        let mut use_count: BTreeMap<usize, usize> = BTreeMap::new();
        let mut verts = BTreeSet::new();
        for &t in &tiles {
            for e in tiling.tile_edges(t) {
                *use_count.entry(e).or_default() += 1;
            }
            verts.extend(tiling.tile(t).joints);
        }
        let boundary: Vec<usize> = use_count.iter().filter(|(_, &c)| c == 1).map(|(&e, _)| e).collect();
        let connected = components_of(tiling, &tiles).len() == 1;
        let euler = verts.len() as i64 - use_count.len() as i64 + tiles.len() as i64;

        let mut boundary_degree: BTreeMap<usize, usize> = BTreeMap::new();
        for &e in &boundary {
            for j in tiling.edges()[e].joints {
                *boundary_degree.entry(j).or_default() += 1;
            }
        }
        let simple_boundary = boundary_degree.values().all(|&d| d == 2) && boundary_is_one_cycle(tiling, &boundary);

        let boundary_joints: BTreeSet<usize> = boundary_degree.keys().copied().collect();
        let maximal = !(0..tiling.tiles().len()).any(|t| {
            !tiles.contains(&t) && tiling.tile(t).joints.iter().filter(|j| boundary_joints.contains(j)).count() >= 3
        });
        Ok(Patch {
            tiles,
            boundary,
            connected,
            simply_connected: connected && euler == 1,
            simple_boundary,
            maximal,
        })
    }

    /// The patch consisting of every tile.
    pub fn full(tiling: &Tiling) -> Patch {
        Patch::new(tiling, 0..tiling.tiles().len()).expect("tiling has tiles")
    }

    pub fn boundary_joints(&self, tiling: &Tiling) -> BTreeSet<usize> {
        self.boundary.iter().flat_map(|&e| tiling.edges()[e].joints).collect()
    }
}

fn boundary_is_one_cycle(tiling: &Tiling, boundary: &[usize]) -> bool {
    if boundary.is_empty() {
        return false;
    }
    let mut uf: UnionFind<usize> = UnionFind::new(tiling.joints().len());
    for &e in boundary {
        let [a, b] = tiling.edges()[e].joints;
        uf.union(a, b);
    }
    let root = uf.find(tiling.edges()[boundary[0]].joints[0]);
    boundary.iter().all(|&e| uf.find(tiling.edges()[e].joints[0]) == root)
}

/// Repeatedly adds every outside tile with at least three joints on the
/// patch boundary.
///
/// A tile missing from the ambient tiling can only have joints whose stars
/// are incomplete, i.e. joints on the ambient boundary. The closure is
/// therefore refused when its boundary touches the ambient boundary, unless
/// the patch is the whole tiling.
pub fn maximal_closure(tiling: &Tiling, patch: &Patch) -> Result<Patch> {
    if patch.tiles.len() == tiling.tiles().len() {
        return Ok(patch.clone());
    }
    let mut current = patch.clone();
    loop {
        let boundary_joints = current.boundary_joints(tiling);
        let mut candidates: BTreeSet<usize> = BTreeSet::new();
        for &j in &boundary_joints {
            for &e in tiling.joint_edges(j) {
                candidates.extend(tiling.edge_tiles(e).iter().copied());
            }
        }
        let additions: Vec<usize> = candidates
            .into_iter()
            .filter(|t| !current.tiles.contains(t))
            .filter(|&t| tiling.tile(t).joints.iter().filter(|j| boundary_joints.contains(j)).count() >= 3)
            .collect();
        if additions.is_empty() {
            break;
        }
        current = Patch::new(tiling, current.tiles.iter().copied().chain(additions))?;
    }
    if current.tiles.len() < tiling.tiles().len() {
        let ambient: BTreeSet<usize> = (0..tiling.edges().len())
            .filter(|&e| tiling.is_boundary_edge(e))
            .flat_map(|e| tiling.edges()[e].joints)
            .collect();
        if current.boundary_joints(tiling).iter().any(|j| ambient.contains(j)) {
            return Err(Error::ClosureEscaped);
        }
    }
    Ok(current)
}

/// A maximal chain of tiles glued along parallel edges.
#[derive(Clone, Debug, PartialEq)]
pub struct Ribbon {
    pub id: usize,
    /// Tiles in path order.
    pub tiles: Vec<usize>,
    /// The parallel edges crossed by the ribbon, in path order (one more
    /// than the number of tiles).
    pub edges: Vec<usize>,
    /// Unit direction of the internal edges.
    pub direction: Vec2,
    /// `(grid, line)` of the generating multigrid line, when labelled.
    pub label: Option<(usize, i64)>,
}

#[derive(Clone, Debug)]
pub struct RibbonSet {
    pub ribbons: Vec<Ribbon>,
    /// The two ribbons through each tile: `[ribbon through edges 0/2, ribbon through edges 1/3]`.
    pub tile_ribbons: Vec<[usize; 2]>,
    /// Ribbon whose internal-edge class contains each edge.
    pub edge_ribbon: Vec<usize>,
}

impl RibbonSet {
    pub fn len(&self) -> usize {
        self.ribbons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ribbons.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Ribbon> {
        self.ribbons.iter()
    }

    pub fn by_label(&self, label: (usize, i64)) -> Option<&Ribbon> {
        self.ribbons.iter().find(|r| r.label == Some(label))
    }
}

impl std::ops::Index<usize> for RibbonSet {
    type Output = Ribbon;

    fn index(&self, i: usize) -> &Ribbon {
        &self.ribbons[i]
    }
}

/// Partitions the tile edges into ribbons: opposite edges of each tile
/// belong to the same ribbon.
pub fn extract_ribbons(tiling: &Tiling) -> Result<RibbonSet> {
    let ne = tiling.edges().len();
    let mut uf: UnionFind<usize> = UnionFind::new(ne);
    for t in 0..tiling.tiles().len() {
        let te = tiling.tile_edges(t);
        uf.union(te[0], te[2]);
        uf.union(te[1], te[3]);
    }
    let mut classes: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for e in 0..ne {
        classes.entry(uf.find(e)).or_default().push(e);
    }

    struct Raw {
        tiles: Vec<usize>,
        edges: Vec<usize>,
        label: Option<(usize, i64)>,
    }
    let mut raws = Vec::new();
    for members in classes.values() {
        let member_set: BTreeSet<usize> = members.iter().copied().collect();
        // Tiles on this ribbon, keyed by which opposite pair it uses.
        let mut tiles_of_edge: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        let mut tiles = BTreeSet::new();
        for &e in members {
            for &t in tiling.edge_tiles(e) {
                let te = tiling.tile_edges(t);
                let pairs_here = [te[0], te[1]].iter().filter(|x| member_set.contains(x)).count();
                if pairs_here == 2 {
                    return Err(Error::BadTile {
                        tile: t,
                        reason: "both edge pairs lie on the same ribbon".into(),
                    });
                }
                tiles.insert(t);
                tiles_of_edge.entry(e).or_default().push(t);
            }
        }
        let start = members
            .iter()
            .copied()
            .find(|e| tiles_of_edge.get(e).map_or(0, Vec::len) == 1)
            .ok_or_else(|| Error::InvalidTiling("ribbon closes on itself".into()))?;
        let mut path_edges = vec![start];
        let mut path_tiles = Vec::new();
        let mut prev_tile = None;
        let mut edge = start;
        loop {
            let next_tile = tiles_of_edge[&edge].iter().copied().find(|&t| Some(t) != prev_tile);
            let Some(t) = next_tile else { break };
            let te = tiling.tile_edges(t);
            let s = te.iter().position(|&x| x == edge).expect("edge on tile");
            edge = te[(s + 2) % 4];
            path_tiles.push(t);
            path_edges.push(edge);
            prev_tile = Some(t);
        }
        if path_tiles.len() != tiles.len() {
            return Err(Error::InvalidTiling("ribbon is not a simple path of tiles".into()));
        }

        let mut label = None;
        let mut consistent = true;
        for &t in &path_tiles {
            let tile = tiling.tile(t);
            let (Some((i, j)), Some((k, l))) = (tile.grid_pair, tile.line_indices) else {
                consistent = false;
                break;
            };
            let class = tiling.edges()[edge_in(tiling, t, &member_set)].class;
            let this = match class {
                Some(c) if c == i => (i, k),
                Some(c) if c == j => (j, l),
                _ => {
                    consistent = false;
                    break;
                }
            };
            match label {
                None => label = Some(this),
                Some(prev) if prev != this => {
                    return Err(Error::BadTile {
                        tile: t,
                        reason: format!("ribbon labels {prev:?} and {this:?} disagree"),
                    })
                }
                _ => {}
            }
        }
        raws.push(Raw {
            tiles: path_tiles,
            edges: path_edges,
            label: if consistent { label } else { None },
        });
    }

    raws.sort_by_key(|r| (r.label.is_none(), r.label, *r.tiles.iter().min().expect("nonempty")));
    let mut edge_ribbon = vec![usize::MAX; ne];
    let mut tile_ribbons = vec![[usize::MAX; 2]; tiling.tiles().len()];
    let mut ribbons = Vec::with_capacity(raws.len());
    for (id, raw) in raws.into_iter().enumerate() {
        for &e in &raw.edges {
            edge_ribbon[e] = id;
        }
        for &t in &raw.tiles {
            let te = tiling.tile_edges(t);
            let slot = if edge_ribbon[te[0]] == id { 0 } else { 1 };
            tile_ribbons[t][slot] = id;
        }
        let [a, b] = tiling.edges()[raw.edges[0]].joints;
        ribbons.push(Ribbon {
            id,
            direction: (tiling.pos(b) - tiling.pos(a)).normalize(),
            tiles: raw.tiles,
            edges: raw.edges,
            label: raw.label,
        });
    }
    Ok(RibbonSet {
        ribbons,
        tile_ribbons,
        edge_ribbon,
    })
}

fn edge_in(tiling: &Tiling, t: usize, members: &BTreeSet<usize>) -> usize {
    tiling
        .tile_edges(t)
        .into_iter()
        .find(|e| members.contains(e))
        .expect("tile lies on ribbon")
}

#[derive(Clone, Debug, Serialize)]
pub struct OverlapViolation {
    pub ribbons: (usize, usize),
    pub tiles: Vec<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct OverlapReport {
    /// Unordered ribbon pairs checked.
    pub pairs_checked: usize,
    /// Pairs sharing exactly one tile.
    pub crossing_pairs: usize,
    /// Pairs sharing more than one tile.
    pub violations: Vec<OverlapViolation>,
}

impl OverlapReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks that no two ribbons share more than one tile.
pub fn ribbon_overlap_check(ribbons: &RibbonSet) -> OverlapReport {
    let mut shared: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (t, &[a, b]) in ribbons.tile_ribbons.iter().enumerate() {
        shared.entry((a.min(b), a.max(b))).or_default().push(t);
    }
    let n = ribbons.len();
    let violations: Vec<OverlapViolation> = shared
        .iter()
        .filter(|(&(a, b), tiles)| tiles.len() > 1 || a == b)
        .map(|(&pair, tiles)| OverlapViolation {
            ribbons: pair,
            tiles: tiles.clone(),
        })
        .collect();
    OverlapReport {
        pairs_checked: n * n.saturating_sub(1) / 2,
        crossing_pairs: shared.values().filter(|t| t.len() == 1).count(),
        violations,
    }
}

/// Unit-square grid with `rows × cols` tiles, labelled as the dual of two
/// perpendicular unit grids (`e_0 = (1, 0)`, `e_1 = (0, 1)`).
pub fn square_grid(rows: usize, cols: usize) -> Tiling {
    assert!(rows > 0 && cols > 0, "square grid needs at least one tile");
    let id = |x: usize, y: usize| y * (cols + 1) + x;
    let mut joints = Vec::new();
    for y in 0..=rows {
        for x in 0..=cols {
            joints.push(Joint {
                pos: Vec2::new(x as f64, y as f64),
                index: Some(IndexVector(vec![x as i64, y as i64])),
            });
        }
    }
    let mut tiles = Vec::new();
    for y in 0..rows {
        for x in 0..cols {
            tiles.push(Tile {
                joints: [id(x, y), id(x + 1, y), id(x + 1, y + 1), id(x, y + 1)],
                grid_pair: Some((0, 1)),
                line_indices: Some((x as i64 + 1, y as i64 + 1)),
            });
        }
    }
    Tiling::with_class_vectors(joints, tiles, vec![Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)])
        .expect("square grid is a valid tiling")
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct JointDoc {
    pub id: i64,
    pub pos: [f64; 2],
    pub index: Option<Vec<i64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TileDoc {
    pub joints: [i64; 4],
    #[serde(default)]
    pub grid_pair: Option<[usize; 2]>,
    #[serde(default)]
    pub line_indices: Option<[i64; 2]>,
}

/// JSON interchange form of a tiling.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TilingDoc {
    pub joints: Vec<JointDoc>,
    #[serde(default)]
    pub edges: Vec<[i64; 2]>,
    pub tiles: Vec<TileDoc>,
}

/// Validates a document and builds the tiling. Joint ids are renumbered
/// densely in increasing id order. The edge list, when present, must match
/// the tile edges exactly.
pub fn import_tiling(doc: &TilingDoc) -> Result<Tiling> {
    let mut ids: Vec<i64> = doc.joints.iter().map(|j| j.id).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidTiling("duplicate joint id".into()));
    }
    let dense: HashMap<i64, usize> = ids.iter().enumerate().map(|(n, &id)| (id, n)).collect();
    let mut joints = vec![None; ids.len()];
    for j in &doc.joints {
        joints[dense[&j.id]] = Some(Joint {
            pos: Vec2::new(j.pos[0], j.pos[1]),
            index: j.index.clone().map(IndexVector),
        });
    }
    let joints: Vec<Joint> = joints.into_iter().map(|j| j.expect("every id filled")).collect();
    let lookup = |id: i64| {
        dense
            .get(&id)
            .copied()
            .ok_or_else(|| Error::InvalidTiling(format!("unknown joint id {id}")))
    };
    let tiles = doc
        .tiles
        .iter()
        .map(|t| {
            Ok(Tile {
                joints: [lookup(t.joints[0])?, lookup(t.joints[1])?, lookup(t.joints[2])?, lookup(t.joints[3])?],
                grid_pair: t.grid_pair.map(|[i, j]| (i, j)),
                line_indices: t.line_indices.map(|[k, l]| (k, l)),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let tiling = Tiling::new(joints, tiles)?;
    if !doc.edges.is_empty() {
        let given = doc
            .edges
            .iter()
            .map(|&[a, b]| Ok(key(lookup(a)?, lookup(b)?)))
            .collect::<Result<BTreeSet<_>>>()?;
        let derived: BTreeSet<_> = tiling.edges().iter().map(|e| key(e.joints[0], e.joints[1])).collect();
        if given != derived {
            return Err(Error::InvalidTiling("edge list does not match the tile edges".into()));
        }
    }
    Ok(tiling)
}

pub fn export_tiling(tiling: &Tiling) -> TilingDoc {
    let mut edges: Vec<[i64; 2]> = tiling
        .edges()
        .iter()
        .map(|e| {
            let (a, b) = key(e.joints[0], e.joints[1]);
            [a as i64, b as i64]
        })
        .collect();
    edges.sort_unstable();
    TilingDoc {
        joints: tiling
            .joints()
            .iter()
            .enumerate()
            .map(|(id, j)| JointDoc {
                id: id as i64,
                pos: [j.pos.x, j.pos.y],
                index: j.index.as_ref().map(|m| m.0.clone()),
            })
            .collect(),
        edges,
        tiles: tiling
            .tiles()
            .iter()
            .map(|t| TileDoc {
                joints: t.joints.map(|j| j as i64),
                grid_pair: t.grid_pair.map(|(i, j)| [i, j]),
                line_indices: t.line_indices.map(|(k, l)| [k, l]),
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_grid_ribbons_are_rows_and_columns() {
        for (m, n) in [(1, 1), (2, 3), (4, 5)] {
            let grid = square_grid(m, n);
            let ribbons = extract_ribbons(&grid).unwrap();
            assert_eq!(ribbons.len(), m + n);
            let mut count = vec![0; grid.tiles().len()];
            for r in ribbons.iter() {
                for &t in &r.tiles {
                    count[t] += 1;
                }
                assert_eq!(r.edges.len(), r.tiles.len() + 1);
            }
            assert!(count.iter().all(|&c| c == 2));
        }
    }

    #[test]
    fn square_grid_overlaps() {
        let grid = square_grid(3, 4);
        let ribbons = extract_ribbons(&grid).unwrap();
        let report = ribbon_overlap_check(&ribbons);
        assert!(report.passed());
        // Every row meets every column once; parallel ribbons never meet.
        assert_eq!(report.crossing_pairs, 12);
    }

    #[test]
    fn ribbon_labels_follow_lines() {
        let grid = square_grid(2, 3);
        let ribbons = extract_ribbons(&grid).unwrap();
        // Grid-0 ribbons are columns (internal edges along e_0 = (1, 0)).
        let column = ribbons.by_label((0, 2)).unwrap();
        assert_eq!(column.tiles.len(), 2);
        assert!(column.tiles.iter().all(|&t| grid.tile(t).line_indices.unwrap().0 == 2));
        assert!((column.direction - Vec2::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn euler_and_maximality() {
        let grid = square_grid(6, 6);
        let at = |x: usize, y: usize| y * 6 + x;
        let inner: Vec<usize> = (1..5).flat_map(|y| (1..5).map(move |x| at(x, y))).collect();
        let patch = Patch::new(&grid, inner.clone()).unwrap();
        assert!(patch.simply_connected && patch.simple_boundary && patch.maximal);
        assert_eq!(maximal_closure(&grid, &patch).unwrap(), patch);

        let notched = Patch::new(&grid, inner.iter().copied().filter(|&t| t != at(4, 4))).unwrap();
        assert!(!notched.maximal);
        let closed = maximal_closure(&grid, &notched).unwrap();
        assert_eq!(closed.tiles, patch.tiles);

        let ring: Vec<usize> = inner.iter().copied().filter(|&t| t != at(2, 2)).collect();
        let holed = Patch::new(&grid, ring).unwrap();
        assert!(holed.connected && !holed.simply_connected);
    }

    #[test]
    fn closure_reports_escape() {
        let grid = square_grid(3, 3);
        let patch = Patch::new(&grid, [0, 1, 3]).unwrap();
        assert!(matches!(maximal_closure(&grid, &patch), Err(Error::ClosureEscaped)));
        let grid = square_grid(5, 5);
        let at = |x: usize, y: usize| y * 5 + x;
        let patch = Patch::new(&grid, [at(1, 1), at(2, 1), at(1, 2)]).unwrap();
        assert_eq!(maximal_closure(&grid, &patch).unwrap().tiles.len(), 4);
    }

    #[test]
    fn whole_grid_is_a_fixed_point() {
        let grid = square_grid(3, 2);
        let full = Patch::full(&grid);
        assert!(full.maximal && full.simply_connected);
        assert_eq!(maximal_closure(&grid, &full).unwrap(), full);
    }

    #[test]
    fn import_export_round_trip() {
        let grid = square_grid(2, 2);
        let doc = export_tiling(&grid);
        let text = serde_json::to_string(&doc).unwrap();
        let back: TilingDoc = serde_json::from_str(&text).unwrap();
        let again = export_tiling(&import_tiling(&back).unwrap());
        assert_eq!(again, doc);
    }

    #[test]
    fn import_renumbers_and_reorients() {
        // Two tiles of a bent ribbon: a square and a sheared parallelogram
        // sharing a vertical edge, given clockwise with sparse ids.
        let doc: TilingDoc = serde_json::from_str(
            r#"{"joints":[
                {"id":10,"pos":[0,0],"index":null},{"id":20,"pos":[1,0],"index":null},
                {"id":30,"pos":[1,1],"index":null},{"id":40,"pos":[0,1],"index":null},
                {"id":50,"pos":[2,0.5],"index":null},{"id":60,"pos":[2,1.5],"index":null}],
              "tiles":[{"joints":[10,40,30,20]},{"joints":[20,30,60,50]}]}"#,
        )
        .unwrap();
        let tiling = import_tiling(&doc).unwrap();
        assert!(tiling.tiles().iter().enumerate().all(|(t, _)| tiling.signed_area(t) > 0.0));
        let ribbons = extract_ribbons(&tiling).unwrap();
        // One horizontal ribbon through both tiles, plus one per tile vertically.
        assert_eq!(ribbons.len(), 3);
        assert_eq!(ribbons.iter().filter(|r| r.tiles.len() == 2).count(), 1);
        let out = export_tiling(&tiling);
        assert_eq!(out.joints[0].id, 0);
        assert_eq!(out.edges.len(), 7);
    }

    #[test]
    fn import_rejects_degenerate_tile() {
        let doc: TilingDoc = serde_json::from_str(
            r#"{"joints":[
                {"id":0,"pos":[0,0],"index":null},{"id":1,"pos":[1,0],"index":null},
                {"id":2,"pos":[2,0],"index":null},{"id":3,"pos":[1,0.0],"index":null},
                {"id":4,"pos":[0,1],"index":null},{"id":5,"pos":[1,1],"index":null}],
              "tiles":[{"joints":[0,1,5,4]},{"joints":[1,2,2,3]}]}"#,
        )
        .unwrap();
        assert!(matches!(import_tiling(&doc), Err(Error::BadTile { tile: 1, .. })));
        let flat: TilingDoc = serde_json::from_str(
            r#"{"joints":[
                {"id":0,"pos":[0,0],"index":null},{"id":1,"pos":[1,0],"index":null},
                {"id":2,"pos":[2,0],"index":null},{"id":3,"pos":[1,0],"index":null}],
              "tiles":[{"joints":[0,1,2,3]}]}"#,
        )
        .unwrap();
        assert!(matches!(import_tiling(&flat), Err(Error::BadTile { tile: 0, .. })));
    }

    #[test]
    fn import_rejects_mismatched_edges_and_schema() {
        let mut doc = export_tiling(&square_grid(1, 2));
        doc.edges.pop();
        assert!(import_tiling(&doc).is_err());
        assert!(serde_json::from_str::<TilingDoc>(r#"{"joints":[],"tiles":[],"extra":1}"#).is_err());
        assert!(serde_json::from_str::<TilingDoc>(r#"{"joints":[{"id":0}],"tiles":[]}"#).is_err());
    }

    #[test]
    fn disconnected_tiles_rejected() {
        let mut doc = export_tiling(&square_grid(1, 1));
        let mut far = doc.clone();
        for j in &mut far.joints {
            j.id += 10;
            j.pos[0] += 5.0;
        }
        for t in &mut far.tiles {
            for j in &mut t.joints {
                *j += 10;
            }
        }
        doc.joints.extend(far.joints);
        doc.tiles.extend(far.tiles);
        doc.edges.clear();
        assert!(matches!(import_tiling(&doc), Err(Error::InvalidTiling(_))));
    }
}
