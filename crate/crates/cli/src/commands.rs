//! The five subcommands. Shared conventions: stdout carries the human
//! summary, files carry the machine-readable results, and every file starts
//! with (or embeds) a provenance object holding the full run configuration
//! and the code version.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use serde_json::{json, Value};

use lrorder::couplings::{CouplingMatrix, CouplingStore};
use lrorder::geometry::{embed, LatticeSpec};
use lrorder::models::{
    locate_boundaries, solve_point, Engine, ModelError, PhaseDiagram, PhasePoint, SweepSpec,
};
use lrorder::pattern::{lattice_ops, PatternKey};
use lrorder::report::{diagram_csv, diagram_jsonl, pattern_svg};
use lrorder::zcell::{enumerate_cells, representatives, ZCell, ZVector, ZVectorPair};

use crate::config::RunConfig;
use crate::CliError;

fn provenance(cmd: &str, cfg: &RunConfig) -> Value {
    json!({
        "tool": "lrorder",
        "version": env!("CARGO_PKG_VERSION"),
        "command": cmd,
        "config": cfg,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn classify_model(e: ModelError) -> CliError {
    match e {
        ModelError::Unconverged { .. } => CliError::unconverged(anyhow!(e)),
        other => CliError::module(anyhow!(other)),
    }
}

/// Enumerate cell classes in the extent and dump them as JSON lines.
pub fn cmd_enumerate(cfg: &RunConfig, out_dir: &Path) -> Result<(), CliError> {
    let extent = cfg.extent().map_err(CliError::usage)?;
    let cells = enumerate_cells(&extent.vectors());
    if cells.is_empty() {
        eprintln!(
            "warning: extent {} admits no unit cells; writing an empty cell set",
            cfg.extent
        );
    }

    let mut lines = vec![provenance("enumerate-cells", cfg).to_string()];
    for cell in &cells {
        lines.push(json!({ "record": "cell", "cell": cell }).to_string());
    }
    let path = out_dir.join("cells.jsonl");
    write_text(&path, &(lines.join("\n") + "\n")).map_err(CliError::module)?;

    let mut per_index: BTreeMap<u64, usize> = BTreeMap::new();
    for cell in &cells {
        *per_index.entry(cell.index).or_default() += 1;
    }
    outln!("extent {}: {} cell classes", cfg.extent, cells.len());
    for (index, count) in &per_index {
        outln!("  index {index:>3}: {count} classes");
    }
    outln!("wrote {}", path.display());
    Ok(())
}

fn read_cells(path: &Path) -> Result<Vec<ZCell>> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut cells = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v: Value = serde_json::from_str(&line).context("parsing cell record")?;
        if v["record"] == "cell" {
            cells.push(serde_json::from_value(v["cell"].clone()).context("parsing cell")?);
        }
    }
    Ok(cells)
}

/// Resum coupling matrices for a cell set, extending the cache file in place.
pub fn cmd_resum(cfg: &RunConfig, cells_file: Option<&Path>, out_dir: &Path) -> Result<(), CliError> {
    let params = cfg.resum_params().map_err(CliError::usage)?;
    let lattice = cfg.lattice_spec().map_err(CliError::usage)?;
    let cells = match cells_file {
        Some(p) => read_cells(p).map_err(CliError::module)?,
        None => enumerate_cells(&cfg.extent().map_err(CliError::usage)?.vectors()),
    };

    fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))
        .map_err(CliError::module)?;
    let cache_path = out_dir.join("couplings.jsonl");
    let mut store: CouplingStore<f64> =
        CouplingStore::open(&cache_path).map_err(|e| CliError::module(anyhow!(e)))?;

    let mut max_residual = 0.0f64;
    let mut unconverged = Vec::new();
    outln!(
        "resumming {} cells at alpha={} K={:?} into {}",
        cells.len(),
        params.alpha,
        params.k_schedule,
        cache_path.display()
    );
    for zc in &cells {
        let cell = embed(&lattice, zc);
        let cached = store.get(&cell, &params).is_some();
        let t0 = Instant::now();
        let cm = store
            .get_or_compute(&cell, &params)
            .map_err(|e| CliError::module(anyhow!(e)))?;
        let ms = t0.elapsed().as_secs_f64() * 1e3;
        outln!(
            "  cell {:<12} index {:>3}  residual {:.3e}  {}",
            zc.id(),
            zc.index,
            cm.max_residual_rel,
            if cached { "cached".to_string() } else { format!("computed in {ms:.1} ms") }
        );
        max_residual = max_residual.max(cm.max_residual_rel);
        if !cm.converged {
            unconverged.push(zc.id());
        }
        if zc.index == 1 {
            outln!("  mu_bar(alpha={}) = {:.5}", params.alpha, cm.row_sum(0));
        }
    }
    outln!("max relative residual: {max_residual:.3e}");
    if !unconverged.is_empty() && !cfg.allow_unconverged {
        return Err(CliError::unconverged(anyhow!(
            "{} cells exceed tol_rel={:.1e}: {}",
            unconverged.len(),
            params.tol_rel,
            unconverged.join(", ")
        )));
    }
    Ok(())
}

/// `Engine::prepare` routed through the on-disk coupling cache so reruns and
/// resumed sweeps skip the resummation work.
fn prepare_cached(
    engine: &Engine,
    spec: &SweepSpec<f64>,
    store: &mut CouplingStore<f64>,
) -> Result<Vec<CouplingMatrix<f64>>, ModelError> {
    let params = engine.resum_params(spec.alpha);
    let cells = enumerate_cells(&spec.extent.vectors());
    let mut out = Vec::with_capacity(cells.len());
    for zc in &cells {
        let cm = store.get_or_compute(&embed(&spec.lattice, zc), &params)?;
        if !cm.converged && !engine.allow_unconverged {
            return Err(ModelError::Unconverged {
                cell: cm.cell.zcell.id(),
                residual: cm.max_residual_rel,
                tol: engine.tol_rel,
            });
        }
        out.push(cm);
    }
    Ok(out)
}

/// Ground state at a single parameter point: result.json + pattern.svg.
pub fn cmd_ground_state(cfg: &RunConfig, out_dir: &Path) -> Result<(), CliError> {
    let (spec, x) = cfg.point_spec().map_err(CliError::usage)?;
    let engine = cfg.engine();
    fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))
        .map_err(CliError::module)?;
    let mut store: CouplingStore<f64> = CouplingStore::open(out_dir.join("couplings.jsonl"))
        .map_err(|e| CliError::module(anyhow!(e)))?;
    let matrices = prepare_cached(&engine, &spec, &mut store).map_err(classify_model)?;
    let ops = lattice_ops(&spec.lattice);
    let point = solve_point(&engine, &spec, &matrices, &ops, x).map_err(classify_model)?;

    let prov = provenance("ground-state", cfg);
    let result = json!({ "provenance": prov, "spec": spec, "point": point });
    let json_path = out_dir.join("result.json");
    write_text(
        &json_path,
        &(serde_json::to_string_pretty(&result).map_err(|e| CliError::module(anyhow!(e)))? + "\n"),
    )
    .map_err(CliError::module)?;
    let svg = pattern_svg(&matrices[point.cell_slot].cell, &point.occ, &prov)
        .map_err(|e| CliError::module(anyhow!(e)))?;
    let svg_path = out_dir.join("pattern.svg");
    write_text(&svg_path, &svg).map_err(CliError::module)?;

    outln!("x = {x}");
    outln!(
        "ground state: cell {} (index {}), {}",
        point.cell_id,
        point.cell_index,
        point.pattern.describe()
    );
    outln!("eps = {:.12}  degeneracy = {}  exact = {}", point.eps, point.degeneracy_count, point.exact);
    outln!("wrote {} and {}", json_path.display(), svg_path.display());
    Ok(())
}

fn point_path(out_dir: &Path, i: usize) -> PathBuf {
    out_dir.join("points").join(format!("point_{i:05}.json"))
}

/// A completed grid point from a previous run, if it matches the current
/// spec and abscissa bit-for-bit.
fn load_point(path: &Path, spec_value: &Value, x: f64) -> Option<PhasePoint<f64>> {
    let text = fs::read_to_string(path).ok()?;
    let v: Value = serde_json::from_str(&text).ok()?;
    if v["spec"] != *spec_value {
        return None;
    }
    let point: PhasePoint<f64> = serde_json::from_value(v["point"].clone()).ok()?;
    (point.x.to_bits() == x.to_bits()).then_some(point)
}

fn canonical_cell(key: &PatternKey) -> Result<ZCell, ModelError> {
    let (a, b, c) = key.cell;
    let pair = ZVectorPair::new(ZVector::new(a, b), ZVector::new(0, c));
    Ok(representatives(pair)?)
}

fn canonical_pattern_svg(
    lattice: &LatticeSpec<f64>,
    key: &PatternKey,
    prov: &Value,
) -> Result<String, CliError> {
    let zc = canonical_cell(key).map_err(classify_model)?;
    let cell = embed(lattice, &zc);
    let occ = lrorder::energy::Occupation { n: key.values.clone() };
    pattern_svg(&cell, &occ, prov).map_err(|e| CliError::module(anyhow!(e)))
}

fn print_diagram_summary(diagram: &PhaseDiagram<f64>) {
    outln!("phase sequence:");
    let pts = &diagram.points;
    let mut start = 0;
    while start < pts.len() {
        let label = pts[start].label();
        let mut end = start;
        while end + 1 < pts.len() && pts[end + 1].label() == label {
            end += 1;
        }
        outln!(
            "  x in [{:.4}, {:.4}]  {}",
            pts[start].x,
            pts[end].x,
            label.describe()
        );
        start = end + 1;
    }
    outln!("boundaries:");
    for b in &diagram.boundaries {
        outln!(
            "  [{:.6}, {:.6}]  {}  ->  {}  refined={} validated={}",
            b.x_lo,
            b.x_hi,
            b.left.describe(),
            b.right.describe(),
            b.refined,
            b.validated
        );
    }
    if diagram.boundaries.is_empty() {
        outln!("  (none)");
    }
}

fn write_diagram_outputs(
    diagram: &PhaseDiagram<f64>,
    prov: &Value,
    out_dir: &Path,
    cells: Option<&[CouplingMatrix<f64>]>,
) -> Result<(), CliError> {
    let csv = diagram_csv(diagram, prov);
    write_text(&out_dir.join("diagram.csv"), &csv).map_err(CliError::module)?;
    let jsonl = diagram_jsonl(diagram, prov).map_err(|e| CliError::module(anyhow!(e)))?;
    write_text(&out_dir.join("diagram.jsonl"), &jsonl).map_err(CliError::module)?;

    // one pattern plot per distinct phase; drawn on the as-found cell when the
    // matrices are still in memory, else re-embedded from the canonical key
    let mut seen = BTreeMap::new();
    for pt in &diagram.points {
        seen.entry(pt.pattern.id()).or_insert_with(|| pt.clone());
    }
    for (id, pt) in &seen {
        let svg = match cells {
            Some(matrices) => pattern_svg(&matrices[pt.cell_slot].cell, &pt.occ, prov)
                .map_err(|e| CliError::module(anyhow!(e)))?,
            None => canonical_pattern_svg(&diagram.spec.lattice, &pt.pattern, prov)?,
        };
        write_text(&out_dir.join(format!("pattern_{id:016x}.svg")), &svg)
            .map_err(CliError::module)?;
    }
    Ok(())
}

/// Full sweep. Per-point results land in out/points/ as they complete, and a
/// rerun reuses any whose spec and abscissa match, so an interrupted sweep
/// resumes where it stopped.
pub fn cmd_sweep(cfg: &RunConfig, out_dir: &Path) -> Result<(), CliError> {
    let spec = cfg.sweep_spec().map_err(CliError::usage)?;
    let engine = cfg.engine();
    let xs = spec.grid.points().map_err(|e| CliError::usage(anyhow!(e)))?;
    fs::create_dir_all(out_dir.join("points"))
        .with_context(|| format!("creating {}", out_dir.display()))
        .map_err(CliError::module)?;

    let mut store: CouplingStore<f64> = CouplingStore::open(out_dir.join("couplings.jsonl"))
        .map_err(|e| CliError::module(anyhow!(e)))?;
    let t0 = Instant::now();
    let matrices = prepare_cached(&engine, &spec, &mut store).map_err(classify_model)?;
    outln!(
        "prepared {} cell matrices in {:.1} s ({} cached on disk)",
        matrices.len(),
        t0.elapsed().as_secs_f64(),
        store.len()
    );
    let ops = lattice_ops(&spec.lattice);
    let prov = provenance("sweep", cfg);
    let spec_value = serde_json::to_value(&spec).map_err(|e| CliError::module(anyhow!(e)))?;

    let mut points: Vec<Option<PhasePoint<f64>>> = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| load_point(&point_path(out_dir, i), &spec_value, x))
        .collect();
    let todo: Vec<usize> = (0..xs.len()).filter(|&i| points[i].is_none()).collect();
    outln!(
        "{} grid points: {} already done, {} to compute",
        xs.len(),
        xs.len() - todo.len(),
        todo.len()
    );

    // grid points are independent; workers share nothing, writes are serial
    let t0 = Instant::now();
    let solved: Vec<(usize, Result<PhasePoint<f64>, ModelError>)> = {
        use rayon::prelude::*;
        todo.par_iter()
            .map(|&i| (i, solve_point(&engine, &spec, &matrices, &ops, xs[i])))
            .collect()
    };
    let mut first_err: Option<ModelError> = None;
    for (i, res) in solved {
        match res {
            Ok(pt) => {
                let rec = json!({ "spec": spec_value, "point": pt });
                write_text(
                    &point_path(out_dir, i),
                    &(serde_json::to_string(&rec).map_err(|e| CliError::module(anyhow!(e)))? + "\n"),
                )
                .map_err(CliError::module)?;
                points[i] = Some(pt);
            }
            Err(e) => first_err = first_err.or(Some(e)),
        }
    }
    if let Some(e) = first_err {
        // completed points are already on disk; the next run picks them up
        return Err(classify_model(e));
    }
    if !todo.is_empty() {
        outln!("solved {} points in {:.1} s", todo.len(), t0.elapsed().as_secs_f64());
    }

    let points: Vec<PhasePoint<f64>> = points.into_iter().map(Option::unwrap).collect();
    let boundaries =
        locate_boundaries(&engine, &spec, &matrices, &ops, &points).map_err(classify_model)?;
    let diagram = PhaseDiagram {
        spec: spec.clone(),
        points,
        boundaries,
    };
    write_diagram_outputs(&diagram, &prov, out_dir, Some(&matrices))?;
    print_diagram_summary(&diagram);
    outln!("wrote {}", out_dir.join("diagram.csv").display());
    Ok(())
}

/// Re-render CSV and pattern SVGs from a diagram.jsonl, no recomputation.
pub fn cmd_plot(input: &Path, out_dir: &Path) -> Result<(), CliError> {
    let file = fs::File::open(input)
        .with_context(|| format!("opening {}", input.display()))
        .map_err(CliError::usage)?;
    let mut prov = json!({"tool": "lrorder", "version": env!("CARGO_PKG_VERSION"), "command": "plot"});
    let mut spec: Option<SweepSpec<f64>> = None;
    let mut points = Vec::new();
    let mut boundaries = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| CliError::module(anyhow!(e)))?;
        if line.trim().is_empty() {
            continue;
        }
        let v: Value = serde_json::from_str(&line)
            .context("parsing diagram record")
            .map_err(CliError::usage)?;
        match v["record"].as_str() {
            Some("provenance") => prov["source"] = v["provenance"].clone(),
            Some("spec") => {
                spec = Some(
                    serde_json::from_value(v["spec"].clone())
                        .context("parsing spec record")
                        .map_err(CliError::usage)?,
                )
            }
            Some("point") => points.push(
                serde_json::from_value(v["point"].clone())
                    .context("parsing point record")
                    .map_err(CliError::usage)?,
            ),
            Some("boundary") => boundaries.push(
                serde_json::from_value(v["boundary"].clone())
                    .context("parsing boundary record")
                    .map_err(CliError::usage)?,
            ),
            other => {
                return Err(CliError::usage(anyhow!(
                    "unknown record type {other:?} in {}",
                    input.display()
                )))
            }
        }
    }
    let spec = spec.ok_or_else(|| CliError::usage(anyhow!("no spec record in input")))?;
    let diagram = PhaseDiagram {
        spec,
        points,
        boundaries,
    };
    write_diagram_outputs(&diagram, &prov, out_dir, None)?;
    print_diagram_summary(&diagram);
    outln!("re-rendered into {}", out_dir.display());
    Ok(())
}

