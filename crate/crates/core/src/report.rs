//! Diagram and pattern emitters: CSV and JSON-lines for sweep results, SVG
//! for occupation patterns. Every emitted artifact embeds the caller's
//! provenance record (run configuration + code version), so no output file
//! is mute about where it came from.

use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::energy::Occupation;
use crate::geometry::EmbeddedCell;
use crate::models::PhaseDiagram;
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("serialization: {0}")]
    Serialize(#[from] serde_json::Error),
    #[error("occupation has {0} entries but the cell has {1} sites")]
    DimensionMismatch(usize, usize),
}

/// CSV rendering of a phase diagram: one row per grid point, boundaries in
/// trailing comment lines, provenance in leading `#` comments.
pub fn diagram_csv<S: Scalar>(diagram: &PhaseDiagram<S>, provenance: &Value) -> String {
    let mut out = String::new();
    out.push_str(&format!("# provenance: {provenance}\n"));
    out.push_str("x,filling,eps,cell_index,cell_id,pattern_id,degeneracy,exact\n");
    for pt in &diagram.points {
        out.push_str(&format!(
            "{x:.12e},{fnum}/{fden},{eps:.16e},{idx},{cid},{pid:016x},{deg},{exact}\n",
            x = pt.x.to_f64_lossy(),
            fnum = pt.f.numer(),
            fden = pt.f.denom(),
            eps = pt.eps.to_f64_lossy(),
            idx = pt.cell_index,
            cid = pt.cell_id,
            pid = pt.pattern.id(),
            deg = pt.degeneracy_count,
            exact = pt.exact,
        ));
    }
    for b in &diagram.boundaries {
        out.push_str(&format!(
            "# boundary: [{lo:.12e}, {hi:.12e}] {left} -> {right} refined={r} validated={v}\n",
            lo = b.x_lo.to_f64_lossy(),
            hi = b.x_hi.to_f64_lossy(),
            left = b.left.describe(),
            right = b.right.describe(),
            r = b.refined,
            v = b.validated,
        ));
    }
    out
}

/// JSON-lines rendering: a provenance record, the sweep spec, then one
/// record per point and per boundary. Machine-complete: every occupation
/// is recoverable from this file alone.
pub fn diagram_jsonl<S: Scalar + Serialize>(
    diagram: &PhaseDiagram<S>,
    provenance: &Value,
) -> Result<String, ReportError> {
    let mut lines = Vec::with_capacity(diagram.points.len() + diagram.boundaries.len() + 2);
    lines.push(json!({ "record": "provenance", "provenance": provenance }).to_string());
    lines.push(json!({ "record": "spec", "spec": &diagram.spec }).to_string());
    for pt in &diagram.points {
        lines.push(json!({ "record": "point", "point": pt }).to_string());
    }
    for b in &diagram.boundaries {
        lines.push(json!({ "record": "boundary", "boundary": b }).to_string());
    }
    Ok(lines.join("\n") + "\n")
}

/// SVG rendering of one occupation pattern: a 3×3 tiling of the cell with
/// circles shaded by occupation and the central unit cell shaded red.
pub fn pattern_svg<S: Scalar>(
    cell: &EmbeddedCell<S>,
    occ: &Occupation,
    provenance: &Value,
) -> Result<String, ReportError> {
    if occ.n.len() != cell.num_sites() {
        return Err(ReportError::DimensionMismatch(occ.n.len(), cell.num_sites()));
    }
    let t1 = (cell.t1.x.to_f64_lossy(), cell.t1.y.to_f64_lossy());
    let t2 = (cell.t2.x.to_f64_lossy(), cell.t2.y.to_f64_lossy());
    let sites: Vec<(f64, f64)> = cell
        .sites
        .iter()
        .map(|s| (s.x.to_f64_lossy(), s.y.to_f64_lossy()))
        .collect();

    // all drawn positions: 3×3 tiles (SVG y grows downward, so flip y)
    let mut drawn: Vec<(f64, f64, u32)> = Vec::with_capacity(sites.len() * 9);
    for dx in -1i32..=1 {
        for dy in -1i32..=1 {
            for (s, &n) in sites.iter().zip(&occ.n) {
                let x = s.0 + f64::from(dx) * t1.0 + f64::from(dy) * t2.0;
                let y = s.1 + f64::from(dx) * t1.1 + f64::from(dy) * t2.1;
                drawn.push((x, -y, n));
            }
        }
    }
    let min_dist = drawn
        .iter()
        .enumerate()
        .flat_map(|(i, a)| drawn[i + 1..].iter().map(move |b| (a, b)))
        .map(|(a, b)| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt())
        .filter(|&d| d > 1e-9)
        .fold(f64::INFINITY, f64::min);
    let radius = if min_dist.is_finite() { 0.35 * min_dist } else { 0.35 };

    let max_n = occ.n.iter().copied().max().unwrap_or(0).max(1);
    let (mut x_lo, mut x_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_lo, mut y_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y, _) in &drawn {
        x_lo = x_lo.min(x - 2.0 * radius);
        x_hi = x_hi.max(x + 2.0 * radius);
        y_lo = y_lo.min(y - 2.0 * radius);
        y_hi = y_hi.max(y + 2.0 * radius);
    }

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"{:.4} {:.4} {:.4} {:.4}\" width=\"640\">\n",
        x_lo,
        y_lo,
        x_hi - x_lo,
        y_hi - y_lo
    ));
    svg.push_str(&format!("<!-- provenance: {provenance} -->\n"));
    // red-shaded central unit cell
    svg.push_str(&format!(
        "<polygon points=\"0,0 {:.4},{:.4} {:.4},{:.4} {:.4},{:.4}\" \
         fill=\"#d62728\" fill-opacity=\"0.15\" stroke=\"#d62728\" stroke-width=\"{:.4}\"/>\n",
        t1.0,
        -t1.1,
        t1.0 + t2.0,
        -(t1.1 + t2.1),
        t2.0,
        -t2.1,
        0.08 * radius / 0.35,
    ));
    for &(x, y, n) in &drawn {
        let fill = if n == 0 {
            "#ffffff".to_string()
        } else {
            // darker blue with higher occupation
            let lum = 78 - (48 * n / max_n) as i32;
            format!("hsl(216,70%,{lum}%)")
        };
        svg.push_str(&format!(
            "<circle cx=\"{x:.4}\" cy=\"{y:.4}\" r=\"{radius:.4}\" fill=\"{fill}\" \
             stroke=\"#444444\" stroke-width=\"{w:.4}\"/>\n",
            w = 0.1 * radius,
        ));
        if n > 1 {
            svg.push_str(&format!(
                "<text x=\"{x:.4}\" y=\"{ty:.4}\" font-size=\"{fs:.4}\" text-anchor=\"middle\" \
                 fill=\"#ffffff\">{n}</text>\n",
                ty = y + 0.35 * radius,
                fs = radius,
            ));
        }
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{builtin_lattice, embed};
    use crate::models::{sweep, Engine, ExtentSpec, GridSpec, SweepAxis, SweepSpec};
    use crate::optimizer::Ensemble;
    use crate::zcell::{representatives, ZVector, ZVectorPair};

    fn tiny_diagram() -> PhaseDiagram<f64> {
        let engine = Engine {
            k_schedule: vec![16, 32, 64, 128],
            tol_rel: 1e-5,
            ..Engine::default()
        };
        let spec = SweepSpec {
            lattice: builtin_lattice("triangular").unwrap(),
            alpha: 10.0,
            ensemble: Ensemble::GrandCanonical,
            axis: SweepAxis::DeltaOverV,
            grid: GridSpec::new(2.0, 4.0, 1.0),
            refine: true,
            extent: ExtentSpec::B(1),
        };
        sweep(&engine, &spec).unwrap()
    }

    #[test]
    fn csv_carries_provenance_and_all_points() {
        let d = tiny_diagram();
        let prov = serde_json::json!({"version": "test", "seed": 7});
        let csv = diagram_csv(&d, &prov);
        let lines: Vec<&str> = csv.lines().collect();
        assert!(lines[0].starts_with("# provenance:"));
        assert!(lines[0].contains("\"seed\":7"));
        assert_eq!(lines[1], "x,filling,eps,cell_index,cell_id,pattern_id,degeneracy,exact");
        let rows: Vec<&str> = lines.iter().skip(2).take_while(|l| !l.starts_with('#')).copied().collect();
        assert_eq!(rows.len(), d.points.len());
        for row in rows {
            assert_eq!(row.split(',').count(), 8);
        }
        assert!(lines.last().unwrap().starts_with("# boundary:"));
        // byte-identical on re-render
        assert_eq!(csv, diagram_csv(&d, &prov));
    }

    #[test]
    fn jsonl_round_trips_every_record() {
        let d = tiny_diagram();
        let prov = serde_json::json!({"version": "test"});
        let text = diagram_jsonl(&d, &prov).unwrap();
        let values: Vec<Value> = text
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(values.len(), 2 + d.points.len() + d.boundaries.len());
        assert_eq!(values[0]["record"], "provenance");
        assert_eq!(values[1]["record"], "spec");
        let points: Vec<&Value> = values.iter().filter(|v| v["record"] == "point").collect();
        assert_eq!(points.len(), d.points.len());
        assert_eq!(points[0]["point"]["x"], d.points[0].x);
    }

    #[test]
    fn svg_draws_nine_tiles_and_the_cell() {
        let lat = builtin_lattice::<f64>("kagome_site").unwrap();
        let zc = representatives(ZVectorPair::new(ZVector::new(1, 0), ZVector::new(0, 1))).unwrap();
        let cell = embed(&lat, &zc);
        let occ = Occupation { n: vec![1, 0, 0] };
        let prov = serde_json::json!({"cmd": "plot"});
        let svg = pattern_svg(&cell, &occ, &prov).unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<circle").count(), 27);
        assert_eq!(svg.matches("<polygon").count(), 1);
        assert!(svg.contains("provenance"));
        let bad = Occupation { n: vec![1] };
        assert!(pattern_svg(&cell, &bad, &prov).is_err());
    }

    #[test]
    fn svg_labels_multiple_occupancy() {
        let lat = builtin_lattice::<f64>("triangular").unwrap();
        let zc = representatives(ZVectorPair::new(ZVector::new(2, 0), ZVector::new(0, 2))).unwrap();
        let cell = embed(&lat, &zc);
        let occ = Occupation { n: vec![3, 0, 0, 0] };
        let svg = pattern_svg(&cell, &occ, &serde_json::json!({})).unwrap();
        assert_eq!(svg.matches("<text").count(), 9);
        assert!(svg.contains(">3</text>"));
    }
}
