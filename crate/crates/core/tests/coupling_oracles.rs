//! The resummation checked against a from-scratch double loop, plus the
//! lattice constants reachable in seconds and the structure every coupling
//! matrix must have.

use lrorder::couplings::{coupling_matrix, extrapolate, resum, ResumParams};
use lrorder::geometry::{builtin_lattice, embed, EmbeddedCell};
use lrorder::models::{mu_bar, Engine};
use lrorder::zcell::{representatives, ZVector, ZVectorPair};

fn cell_of(lattice: &str, pair: ((i64, i64), (i64, i64))) -> EmbeddedCell<f64> {
    let spec = builtin_lattice::<f64>(lattice).unwrap();
    let zc = representatives(ZVectorPair::new(
        ZVector::new(pair.0 .0, pair.0 .1),
        ZVector::new(pair.1 .0, pair.1 .1),
    ))
    .unwrap();
    embed(&spec, &zc)
}

/// Plain unsorted image sum over (k, l) ∈ [−K, K]²; nothing shared with the
/// module's ring bookkeeping, kernel dispatch, or compensated accumulation.
fn naive_sum(cell: &EmbeddedCell<f64>, i: usize, j: usize, alpha: f64, k: i64) -> f64 {
    let delta = cell.sites[i] - cell.sites[j];
    let mut total = 0.0;
    for kk in -k..=k {
        for ll in -k..=k {
            if i == j && kk == 0 && ll == 0 {
                continue;
            }
            let dx = delta.x + kk as f64 * cell.t1.x - ll as f64 * cell.t2.x;
            let dy = delta.y + kk as f64 * cell.t1.y - ll as f64 * cell.t2.y;
            total += (dx * dx + dy * dy).powf(-alpha / 2.0);
        }
    }
    total
}

#[test]
fn finite_cutoff_sums_match_the_direct_double_loop() {
    let cells = [
        cell_of("triangular", ((1, 0), (0, 1))),
        cell_of("triangular", ((1, 1), (0, 3))),
        cell_of("kagome_site", ((1, 0), (0, 1))),
    ];
    for cell in &cells {
        let p = cell.sites.len();
        for alpha in [3.0, 4.5, 6.0] {
            for i in 0..p {
                for j in 0..p {
                    let got = resum(cell, i, j, alpha, 10).unwrap();
                    let want = naive_sum(cell, i, j, alpha, 10);
                    assert!(
                        (got - want).abs() <= 1e-12 * want.abs(),
                        "{} sites {i},{j} alpha {alpha}: {got} vs {want}",
                        cell.lattice
                    );
                }
            }
        }
    }
}

#[test]
fn triangular_chemical_potential_alpha_6_and_10() {
    let engine = Engine::default();
    let lattice = builtin_lattice::<f64>("triangular").unwrap();
    let mu6 = mu_bar(&engine, &lattice, 6.0).unwrap();
    assert!((mu6 - 6.37588).abs() < 1e-5, "mu_bar(6) = {mu6}");
    let mu10 = mu_bar(&engine, &lattice, 10.0).unwrap();
    assert!((mu10 - 6.03144).abs() < 1e-5, "mu_bar(10) = {mu10}");
}

#[test]
fn extrapolation_beats_the_best_finite_cutoff() {
    let cell = cell_of("triangular", ((1, 0), (0, 1)));
    let alpha = 3.0;
    let coarse: Vec<(u32, f64)> = [16u32, 32, 64, 128]
        .iter()
        .map(|&k| (k, resum(&cell, 0, 0, alpha, k).unwrap()))
        .collect();
    let fine: Vec<(u32, f64)> = [256u32, 512, 1024]
        .iter()
        .map(|&k| (k, resum(&cell, 0, 0, alpha, k).unwrap()))
        .collect();
    let truth = extrapolate(&fine, alpha, 3).unwrap().value;
    let fitted = extrapolate(&coarse, alpha, 3).unwrap().value;
    let raw_err = (coarse.last().unwrap().1 - truth).abs();
    let fit_err = (fitted - truth).abs();
    assert!(
        fit_err * 50.0 < raw_err,
        "extrapolation gains less than 50x: raw {raw_err:.3e}, fitted {fit_err:.3e}"
    );
}

#[test]
fn row_sums_are_uniform_across_basis_sites() {
    // all sites of a lattice see the same total interaction; on the link
    // kagome this pins the inequivalent-orientation bookkeeping
    let params = ResumParams::new(6.0).with_schedule(&[32, 64, 128, 256]);
    for lattice in ["kagome_site", "kagome_link"] {
        let cell = cell_of(lattice, ((1, 0), (0, 1)));
        let cm = coupling_matrix(&cell, &params).unwrap();
        let first = cm.row_sum(0);
        for i in 1..cm.dim() {
            let row = cm.row_sum(i);
            assert!(
                (row - first).abs() <= 1e-9 * first.abs(),
                "{lattice} row {i}: {row} vs {first}"
            );
        }
    }
}

#[test]
fn matrices_are_symmetric_and_positive() {
    // the K^{1−α} next-order term leaves a ~1e-7 fit residual at this
    // schedule and α; the tolerance must say so
    let params = ResumParams {
        tol_rel: 1e-6,
        ..ResumParams::new(4.0).with_schedule(&[32, 64, 128, 256])
    };
    let cm = coupling_matrix(&cell_of("triangular", ((2, 1), (0, 3))), &params).unwrap();
    for i in 0..cm.dim() {
        assert!(cm.get(i, i) > 0.0);
        for j in 0..cm.dim() {
            assert_eq!(cm.get(i, j), cm.get(j, i), "exact symmetry by shared class sums");
            assert!(cm.get(i, j) > 0.0);
        }
    }
    assert!(cm.converged, "residual {}", cm.max_residual_rel);
}
