mod common;

use std::collections::BTreeSet;

use common::*;
use quasirigid::dualize::{dualize, verify_dual_consistency, working_patch};
use quasirigid::geometry::{intersections_on_line, AffineGrid, MultigridSpec, Vec2};
use quasirigid::tiling::{extract_ribbons, maximal_closure, ribbon_overlap_check, Patch, Tiling};

fn edge_vectors(t: &Tiling) -> Vec<(i64, i64)> {
    let mut v: Vec<(i64, i64)> = t
        .edges()
        .iter()
        .map(|e| {
            let d = t.pos(e.joints[1]) - t.pos(e.joints[0]);
            ((d.x * 1e8).round() as i64, (d.y * 1e8).round() as i64)
        })
        .collect();
    v.sort_unstable();
    v
}

/// Shifts grid `j` by one of its own periods: same lines, indices off by one.
fn shift_period(spec: &MultigridSpec, j: usize) -> MultigridSpec {
    let grids: Vec<AffineGrid> = spec
        .grids()
        .iter()
        .enumerate()
        .map(|(k, g)| {
            let t = if k == j { g.translation() + g.linear() * Vec2::new(1.0, 0.0) } else { *g.translation() };
            AffineGrid::new(*g.linear(), t).unwrap()
        })
        .collect();
    MultigridSpec::new(grids, spec.weights().to_vec()).unwrap()
}

#[test]
fn period_shift_translates_the_tiling() {
    for spec in [pentagrid(), tetragrid()] {
        let a = dualize(&spec, 5.0).unwrap().tiling;
        for j in 0..spec.r() {
            let b = dualize(&shift_period(&spec, j), 5.0).unwrap().tiling;
            assert_eq!(a.tiles().len(), b.tiles().len());
            assert_eq!(edge_vectors(&a), edge_vectors(&b));
            // Indices drop by one, so every joint moves by −e_j.
            let ea = spec.dual_vector(j);
            let pa: BTreeSet<(i64, i64)> = a.joints().iter().map(|q| ((q.pos.x * 1e8).round() as i64, (q.pos.y * 1e8).round() as i64)).collect();
            let pb: BTreeSet<(i64, i64)> = b
                .joints()
                .iter()
                .map(|q| (((q.pos.x + ea.x) * 1e8).round() as i64, ((q.pos.y + ea.y) * 1e8).round() as i64))
                .collect();
            let common = pa.intersection(&pb).count();
            assert_eq!(common, pa.len(), "grid {j}");
        }
    }
}

#[test]
fn first_pentagrid_offset_is_a_period() {
    let mut g = PENTA;
    g[0] += 1.0;
    let a = dualize(&pentagrid(), 5.0).unwrap().tiling;
    let b = dualize(&quasirigid::geometry::pentagrid_preset(g).spec, 5.0).unwrap().tiling;
    assert_eq!(edge_vectors(&a), edge_vectors(&b));
}

#[test]
fn tile_count_grows_with_window() {
    for spec in [pentagrid(), tetragrid()] {
        let counts: Vec<usize> = [2.0, 4.0, 8.0, 16.0].iter().map(|&w| dualize(&spec, w).unwrap().tiling.tiles().len()).collect();
        assert!(counts.windows(2).all(|c| c[0] < c[1]), "{counts:?}");
        // Quadratic growth: doubling the window roughly quadruples the count.
        let ratio = counts[3] as f64 / counts[2] as f64;
        assert!((3.0..5.0).contains(&ratio), "{counts:?}");
    }
}

#[test]
fn dual_tilings_are_consistent() {
    for spec in [pentagrid(), tetragrid(), quasirigid::geometry::pentagrid_preset(PENTA_ALT).spec] {
        let d = dualize(&spec, 8.0).unwrap();
        let report = verify_dual_consistency(&d.tiling);
        assert!(report.passed(), "{report:?}");
    }
}

#[test]
fn ribbon_length_equals_crossings_on_its_line() {
    for spec in [pentagrid(), tetragrid()] {
        let w = 5.0;
        let d = dualize(&spec, w).unwrap();
        let ribbons = extract_ribbons(&d.tiling).unwrap();
        let mut seen = 0;
        for r in ribbons.iter() {
            let (i, k) = r.label.expect("dual ribbons are labelled");
            let line = intersections_on_line(&spec, i, k, w).unwrap();
            assert_eq!(r.tiles.len(), line.intersections.len(), "ribbon of line ({i}, {k})");
            seen += 1;
        }
        // One ribbon per line that meets the window at a crossing.
        let lines: usize = (0..spec.r())
            .map(|i| {
                spec.grid(i)
                    .lines_in_disc(w)
                    .filter(|&k| !intersections_on_line(&spec, i, k, w).unwrap().intersections.is_empty())
                    .count()
            })
            .sum();
        assert_eq!(seen, lines);
    }
}

#[test]
fn two_ribbon_lemma_on_generated_tilings() {
    for spec in [pentagrid(), tetragrid(), quasirigid::geometry::pentagrid_preset(PENTA_ALT).spec] {
        let d = dualize(&spec, 10.0).unwrap();
        let report = ribbon_overlap_check(&extract_ribbons(&d.tiling).unwrap());
        assert!(report.violations.is_empty());
        assert!(report.crossing_pairs > 0);
    }
}

#[test]
fn closure_is_idempotent_and_monotone() {
    let d = dualize(&pentagrid(), WINDOW).unwrap();
    let closed = working_patch(&d).unwrap();
    assert!(closed.maximal && closed.simply_connected && closed.simple_boundary);
    let again = maximal_closure(&d.tiling, &closed).unwrap();
    assert_eq!(again.tiles, closed.tiles);

    // A small convex seed near the centre.
    let seed: BTreeSet<usize> = (0..d.tiling.tiles().len())
        .filter(|&t| d.tiling.centroid(t).norm() < 2.0)
        .collect();
    let seed = Patch::new(&d.tiling, seed).unwrap();
    let grown = maximal_closure(&d.tiling, &seed).unwrap();
    assert!(grown.tiles.is_superset(&seed.tiles));
    assert_eq!(maximal_closure(&d.tiling, &grown).unwrap().tiles, grown.tiles);
}
