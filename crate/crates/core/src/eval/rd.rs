use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use plotters::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{NvcError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RDPoint {
    pub label: String,
    pub idx: Option<usize>,
    pub bpp: f64,
    pub psnr: f64,
}

impl RDPoint {
    pub fn new(label: &str, idx: Option<usize>, bpp: f64, psnr: f64) -> Self {
        Self { label: label.to_string(), idx, bpp, psnr }
    }
}

/// One codec's operating points, sorted by strictly increasing bpp.
#[derive(Debug, Clone, PartialEq)]
pub struct RDCurve {
    pub label: String,
    pub points: Vec<RDPoint>,
}

impl RDCurve {
    pub const MIN_POINTS: usize = 4;

    pub fn new(label: &str, mut points: Vec<RDPoint>) -> Result<Self> {
        if points.len() < Self::MIN_POINTS {
            return Err(NvcError::Argument(format!(
                "curve '{label}' needs at least {} points, got {}",
                Self::MIN_POINTS,
                points.len()
            )));
        }
        if let Some(p) = points.iter().find(|p| !(p.bpp > 0.0 && p.bpp.is_finite()) || p.psnr.is_nan()) {
            return Err(NvcError::Argument(format!("curve '{label}' has invalid point {p:?}")));
        }
        points.sort_by(|a, b| a.bpp.total_cmp(&b.bpp));
        if points.windows(2).any(|w| w[1].bpp <= w[0].bpp) {
            return Err(NvcError::Argument(format!("curve '{label}' repeats a bpp value")));
        }
        for p in &mut points {
            p.label = label.to_string();
        }
        Ok(Self { label: label.to_string(), points })
    }
}

#[derive(Serialize, Deserialize)]
struct Row {
    label: String,
    idx: Option<usize>,
    bpp: f64,
    psnr: f64,
}

pub fn write_rd_csv(points: &[RDPoint], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| NvcError::Io(format!("{}: {e}", path.display())))?;
    for p in points {
        w.serialize(Row { label: p.label.clone(), idx: p.idx, bpp: p.bpp, psnr: p.psnr })
            .map_err(|e| NvcError::Io(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(|e| NvcError::io(path.display(), e))
}

/// Reads `label,idx,bpp,psnr` rows (idx may be empty) grouped by label in
/// order of first appearance.
pub fn read_rd_csv(path: &Path) -> Result<Vec<(String, Vec<RDPoint>)>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| NvcError::Io(format!("{}: {e}", path.display())))?;
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, Vec<RDPoint>> = BTreeMap::new();
    for (line, row) in r.deserialize::<Row>().enumerate() {
        let row = row.map_err(|e| NvcError::Data(format!("{} row {}: {e}", path.display(), line + 2)))?;
        if !groups.contains_key(&row.label) {
            order.push(row.label.clone());
        }
        groups.entry(row.label.clone()).or_default().push(RDPoint {
            label: row.label,
            idx: row.idx,
            bpp: row.bpp,
            psnr: row.psnr,
        });
    }
    if order.is_empty() {
        return Err(NvcError::Data(format!("{} holds no RD points", path.display())));
    }
    Ok(order
        .into_iter()
        .map(|l| {
            let pts = groups.remove(&l).unwrap_or_default();
            (l, pts)
        })
        .collect())
}

pub fn plot_rd(curves: &[RDCurve], path: &Path) -> Result<()> {
    let finite = || curves.iter().flat_map(|c| &c.points).filter(|p| p.psnr.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for p in finite() {
        x0 = x0.min(p.bpp);
        x1 = x1.max(p.bpp);
        y0 = y0.min(p.psnr);
        y1 = y1.max(p.psnr);
    }
    if x0 > x1 {
        return Err(NvcError::Argument("nothing finite to plot".into()));
    }
    let (px, py) = (((x1 - x0) * 0.05).max(1e-3), ((y1 - y0) * 0.05).max(0.1));
    let draw_err = |e: &dyn std::fmt::Display| NvcError::Io(format!("{}: {e}", path.display()));
    let root = SVGBackend::new(path, (800, 600)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| draw_err(&e))?;
    let mut chart = ChartBuilder::on(&root)
        .caption("Rate-distortion", ("sans-serif", 24))
        .margin(16)
        .x_label_area_size(40)
        .y_label_area_size(56)
        .build_cartesian_2d((x0 - px)..(x1 + px), (y0 - py)..(y1 + py))
        .map_err(|e| draw_err(&e))?;
    chart.configure_mesh().x_desc("bpp").y_desc("weighted PSNR (dB)").draw().map_err(|e| draw_err(&e))?;
    for (i, c) in curves.iter().enumerate() {
        let color = Palette99::pick(i).to_rgba();
        let pts: Vec<(f64, f64)> = c.points.iter().filter(|p| p.psnr.is_finite()).map(|p| (p.bpp, p.psnr)).collect();
        chart
            .draw_series(LineSeries::new(pts.clone(), color.stroke_width(2)))
            .map_err(|e| draw_err(&e))?
            .label(c.label.clone())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color));
        chart.draw_series(pts.into_iter().map(|p| Circle::new(p, 3, color.filled()))).map_err(|e| draw_err(&e))?;
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(|e| draw_err(&e))?;
    root.present().map_err(|e| draw_err(&e))?;
    Ok(())
}

/// Writes `path` as CSV and a sibling `.svg` plot; returns the plot path.
pub fn emit_rd(curves: &[RDCurve], path: &Path) -> Result<PathBuf> {
    let all: Vec<RDPoint> = curves.iter().flat_map(|c| c.points.iter().cloned()).collect();
    write_rd_csv(&all, path)?;
    let svg = path.with_extension("svg");
    plot_rd(curves, &svg)?;
    Ok(svg)
}
