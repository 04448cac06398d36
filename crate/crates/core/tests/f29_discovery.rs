//! One-off derivation of the f = 2/9 site-kagome fixtures frozen in
//! `models::kagome_f29_stripe` / `models::kagome_f29_kinked`.
//!
//! Truncating the interaction after the third neighbour shell (r ≤ 2 bond
//! lengths) leaves a degenerate manifold of string states at f = 2/9. The
//! full interaction splits that manifold and picks the straight string;
//! second-order perturbation theory in a transverse drive picks the maximally
//! kinked string (the most negative ε⁽²⁾) instead. This test enumerates every
//! index-3/6/9 Hermite cell, exhausts all C(p, 2p/9) hardcore states against
//! both matrices, and prints the manifold classes so the two frozen patterns
//! can be read off together with their energy gap.
//!
//! Run with:
//!   cargo test -p lrorder --test f29_discovery -- --ignored --nocapture

use std::collections::BTreeMap;

use lrorder::energy::{energy_per_site, ModelParams, Occupation};
use lrorder::geometry::{builtin_lattice, embed};
use lrorder::models::{second_order_correction, Engine};
use lrorder::pattern::{canonical_pattern, lattice_ops, PatternKey};
use lrorder::zcell::{representatives, ZCell, ZVector, ZVectorPair};
use lrorder::CouplingMatrix;

const ALPHA: f64 = 6.0;
/// Third-neighbour kagome shell: r ∈ {1, √3, 2} kept, r² ≤ 4.
const TRUNC_R2: f64 = 4.0 + 1e-9;

/// All Hermite classes of the given index: a·c = index, 0 ≤ b < c.
fn hermite_cells(index: i64) -> Vec<ZCell> {
    let mut out = Vec::new();
    for a in 1..=index {
        if index % a != 0 {
            continue;
        }
        let c = index / a;
        for b in 0..c {
            let pair = ZVectorPair::new(ZVector::new(a, b), ZVector::new(0, c));
            out.push(representatives(pair).unwrap());
        }
    }
    out
}

/// Direct truncated coupling matrix: Σ over torus images with |Δ| ≤ 2,
/// nothing shared with the resummation code. Image bounds follow from the
/// supercell heights: |k·T₁ + l·T₂| ≥ |k|·h₁ with h₁ = |T₁×T₂|/|T₂|.
fn truncated_matrix(cm: &CouplingMatrix) -> Vec<f64> {
    let cell = &cm.cell;
    let p = cell.num_sites();
    let (t1, t2) = (cell.t1, cell.t2);
    let area = (t1.cross(t2)).abs();
    let d_max = (0..p)
        .flat_map(|i| (0..p).map(move |j| (i, j)))
        .map(|(i, j)| (cell.sites[i] - cell.sites[j]).norm())
        .fold(0.0f64, f64::max);
    let reach = 2.0 + d_max + 1.0;
    let kw = (reach / (area / t2.norm())).ceil() as i64;
    let lw = (reach / (area / t1.norm())).ceil() as i64;
    let mut w = vec![0.0f64; p * p];
    for i in 0..p {
        for j in 0..p {
            let delta = cell.sites[j] - cell.sites[i];
            let mut s = 0.0;
            for k in -kw..=kw {
                for l in -lw..=lw {
                    if i == j && k == 0 && l == 0 {
                        continue;
                    }
                    let r2 = (delta + t1 * (k as f64) + t2 * (l as f64)).norm2();
                    if r2 <= TRUNC_R2 {
                        s += 1.0 / (r2 * r2 * r2);
                    }
                }
            }
            w[i * p + j] = s;
        }
    }
    w
}

/// Cell pair-energy of an occupied subset: Σ_{a<b} W[a][b] + ½ Σ_a W[a][a].
struct SubsetScan<'a> {
    p: usize,
    wf: &'a [f64],
    wt: &'a [f64],
    chosen: Vec<usize>,
    visit: &'a mut dyn FnMut(&[usize], f64, f64),
}

impl SubsetScan<'_> {
    fn go(&mut self, start: usize, left: usize, ef: f64, et: f64) {
        if left == 0 {
            (self.visit)(&self.chosen, ef, et);
            return;
        }
        for i in start..=(self.p - left) {
            let mut df = 0.5 * self.wf[i * self.p + i];
            let mut dt = 0.5 * self.wt[i * self.p + i];
            for &c in &self.chosen {
                df += self.wf[c * self.p + i];
                dt += self.wt[c * self.p + i];
            }
            self.chosen.push(i);
            self.go(i + 1, left - 1, ef + df, et + dt);
            self.chosen.pop();
        }
    }
}

#[derive(Debug)]
struct ClassInfo {
    host: usize,
    occ: Occupation,
    eps_full: f64,
    members: u64,
}

#[test]
#[ignore = "one-off fixture derivation; prints the frozen constants"]
fn derive_f29_fixtures() {
    let lattice = builtin_lattice::<f64>("kagome_site").unwrap();
    let ops = lattice_ops(&lattice);
    // thin index-9 cells leave ~1.6e-9 residuals at K ≤ 256; one more octave
    let engine = Engine {
        k_schedule: vec![64, 128, 256, 512],
        tol_rel: 1e-9,
        ..Engine::default()
    };

    let cells: Vec<ZCell> = [3i64, 6, 9].iter().flat_map(|&n| hermite_cells(n)).collect();
    let matrices: Vec<CouplingMatrix> = cells
        .iter()
        .map(|zc| engine.matrix(&lattice, zc.pair, ALPHA).unwrap())
        .collect();

    // global full-interaction minimum and the truncated-degenerate manifold,
    // merged across cells by canonical pattern
    let mut best_global: Option<(f64, usize, Vec<usize>)> = None;
    let mut classes: BTreeMap<PatternKey, ClassInfo> = BTreeMap::new();

    for (ci, cm) in matrices.iter().enumerate() {
        let p = cm.dim();
        let n_particles = 2 * p / 9;
        assert_eq!(2 * p % 9, 0);
        let wt = truncated_matrix(cm);
        let wf: Vec<f64> = (0..p)
            .flat_map(|i| (0..p).map(move |j| cm.get(i, j)))
            .collect();

        // pass 1: minima of both energies
        let (mut min_f, mut min_t) = (f64::INFINITY, f64::INFINITY);
        let mut arg_f: Vec<usize> = Vec::new();
        {
            let mut visit = |s: &[usize], ef: f64, et: f64| {
                if ef < min_f {
                    min_f = ef;
                    arg_f = s.to_vec();
                }
                if et < min_t {
                    min_t = et;
                }
            };
            let mut scan = SubsetScan { p, wf: &wf, wt: &wt, chosen: Vec::new(), visit: &mut visit };
            scan.go(0, n_particles, 0.0, 0.0);
        }
        let eps_min = min_f / p as f64;
        println!(
            "cell {:8} p={:2} N={}  min eps_full={:+.12}  min e_trunc={:+.12}",
            cm.cell.zcell.id(), p, n_particles, eps_min, min_t / p as f64,
        );
        if best_global.as_ref().is_none_or(|(e, _, _)| eps_min < *e) {
            best_global = Some((eps_min, ci, arg_f.clone()));
        }

        // pass 2: collect the manifold and fold into canonical classes
        let tol = 1e-10 * min_t.abs().max(1.0);
        let mut manifold: Vec<(Vec<usize>, f64)> = Vec::new();
        {
            let mut visit = |s: &[usize], ef: f64, et: f64| {
                if et <= min_t + tol {
                    manifold.push((s.to_vec(), ef));
                }
            };
            let mut scan = SubsetScan { p, wf: &wf, wt: &wt, chosen: Vec::new(), visit: &mut visit };
            scan.go(0, n_particles, 0.0, 0.0);
        }
        for (subset, ef) in manifold {
            let mut n = vec![0u32; p];
            for &s in &subset {
                n[s] = 1;
            }
            let occ = Occupation { n };
            let key = canonical_pattern(&cm.cell, &occ, &ops).unwrap();
            let eps = ef / p as f64;
            classes
                .entry(key)
                .and_modify(|c| {
                    c.members += 1;
                    if eps < c.eps_full {
                        c.eps_full = eps;
                        c.host = ci;
                        c.occ = occ.clone();
                    }
                })
                .or_insert(ClassInfo { host: ci, occ, eps_full: eps, members: 1 });
        }
    }

    let (eps_stripe, host_stripe, arg_stripe) = best_global.unwrap();
    let stripe_occ = {
        let p = matrices[host_stripe].dim();
        let mut n = vec![0u32; p];
        for &s in &arg_stripe {
            n[s] = 1;
        }
        Occupation { n }
    };
    let stripe_key = canonical_pattern(&matrices[host_stripe].cell, &stripe_occ, &ops).unwrap();
    println!("\nglobal full-interaction minimum: cell {} eps={:+.12}", matrices[host_stripe].cell.zcell.id(), eps_stripe);
    println!("stripe key: {}", stripe_key.describe());
    assert!(classes.contains_key(&stripe_key), "full-interaction winner must be a string state");

    println!("\n{} manifold classes (energy-sorted, gaps per site in V):", classes.len());
    let mut sorted: Vec<(&PatternKey, &ClassInfo)> = classes.iter().collect();
    sorted.sort_by(|a, b| a.1.eps_full.total_cmp(&b.1.eps_full));
    for (key, info) in &sorted {
        let cm = &matrices[info.host];
        // diagonal single-flip response; ranks straight vs kinked families but
        // cannot order states inside the exactly degenerate manifold (that
        // would need degenerate perturbation theory with string resonances)
        let eps2: Vec<String> = [0.07, 0.08, 0.09]
            .iter()
            .map(|&delta| {
                let params = ModelParams::hardcore(delta, 1.0, ALPHA);
                match second_order_correction(&info.occ, cm, &params, 1.0) {
                    Ok(v) => format!("{v:+.6}"),
                    Err(_) => "gapless".into(),
                }
            })
            .collect();
        let gap = info.eps_full - eps_stripe;
        println!(
            "  gap={:+.6e}  members={:4}  eps2(0.07,0.08,0.09)=[{}]  {}",
            gap, info.members, eps2.join(", "), key.describe(),
        );
        let pair = ZVectorPair::new(ZVector::new(key.cell.0, key.cell.1), ZVector::new(0, key.cell.2));
        let cell = embed(&lattice, &representatives(pair).unwrap());
        let coords: Vec<String> = key
            .values
            .iter()
            .enumerate()
            .filter(|&(_, &v)| v > 0)
            .map(|(i, _)| format!("({:+.3},{:+.3})", cell.sites[i].x, cell.sites[i].y))
            .collect();
        println!("      occupied: {}", coords.join(" "));
    }

    // the frozen fixtures must be exactly what this derivation produces: the
    // stripe is the global minimum, the kinked partner a manifold member
    let stripe_frozen = lrorder::models::kagome_f29_stripe();
    let kinked_frozen = lrorder::models::kagome_f29_kinked();
    assert_eq!(stripe_key, stripe_frozen, "frozen stripe fixture drifted from the derivation");
    assert!(
        classes.contains_key(&kinked_frozen),
        "frozen kinked fixture is not in the truncated-degenerate manifold"
    );

    let eval = |engine: &Engine, key: &PatternKey| -> f64 {
        let pair = ZVectorPair::new(ZVector::new(key.cell.0, key.cell.1), ZVector::new(0, key.cell.2));
        let cm = engine.matrix(&lattice, pair, ALPHA).unwrap();
        let occ = Occupation { n: key.values.clone() };
        let params = ModelParams::hardcore(0.0, 1.0, ALPHA);
        energy_per_site(&occ, &cm, &params).unwrap().eps_total
    };
    let gap = eval(&engine, &kinked_frozen) - eval(&engine, &stripe_frozen);
    let heavy = Engine::default();
    let gap_heavy = eval(&heavy, &kinked_frozen) - eval(&heavy, &stripe_frozen);
    println!("\nfrozen stripe:  {}", stripe_frozen.describe());
    println!("frozen kinked:  {}", kinked_frozen.describe());
    println!("gap, K=[64..512]:   {gap:+.10e} V per site");
    println!("gap, K=[128..1024]: {gap_heavy:+.10e} V per site");
    assert!(
        (gap - gap_heavy).abs() < 1e-11,
        "splitting must be schedule-independent at the 1e-11 level"
    );
}
