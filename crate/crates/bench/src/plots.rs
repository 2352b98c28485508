//! Static SVG charts with CSV mirrors of every plotted series.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use amp2_core::energy::estimate_energy;

use crate::error::{BenchError, Result};
use crate::experiment::{mean, RunRecord};

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: (f64, f64, f64, f64) = (60.0, 20.0, 30.0, 50.0); // left, right, top, bottom
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        let span = (self.x.1 - self.x.0).max(1e-12);
        MARGIN.0 + (x - self.x.0) / span * (W - MARGIN.0 - MARGIN.1)
    }

    fn py(&self, y: f64) -> f64 {
        let span = (self.y.1 - self.y.0).max(1e-12);
        H - MARGIN.3 - (y - self.y.0) / span * (H - MARGIN.2 - MARGIN.3)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn svg_open(title: &str, xlabel: &str, ylabel: &str, f: &Frame) -> String {
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
        W / 2.0,
        escape(title)
    );
    let (x0, x1, y0, y1) = (f.px(f.x.0), f.px(f.x.1), f.py(f.y.0), f.py(f.y.1));
    let _ = writeln!(s, "<path d=\"M{x0},{y1} L{x0},{y0} L{x1},{y0}\" stroke=\"black\" fill=\"none\"/>");
    for i in 0..=4 {
        let v = f.y.0 + (f.y.1 - f.y.0) * i as f64 / 4.0;
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>",
            x0 - 6.0,
            f.py(v) + 4.0,
            trim(v)
        );
        let v = f.x.0 + (f.x.1 - f.x.0) * i as f64 / 4.0;
        let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>", f.px(v), y0 + 16.0, trim(v));
    }
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
        (x0 + x1) / 2.0,
        H - 12.0,
        escape(xlabel)
    );
    let _ = writeln!(
        s,
        "<text transform=\"translate(16,{}) rotate(-90)\" text-anchor=\"middle\">{}</text>",
        (y0 + y1) / 2.0,
        escape(ylabel)
    );
    s
}

fn trim(v: f64) -> String {
    if (v - v.round()).abs() < 1e-9 {
        format!("{}", v.round())
    } else {
        format!("{v:.1}")
    }
}

fn legend(s: &mut String, labels: &[String]) {
    for (i, l) in labels.iter().enumerate() {
        let y = MARGIN.2 + 14.0 + 16.0 * i as f64;
        let c = PALETTE[i % PALETTE.len()];
        let x = W - MARGIN.1 - 200.0;
        let _ = writeln!(s, "<rect x=\"{x}\" y=\"{}\" width=\"12\" height=\"3\" fill=\"{c}\"/>", y - 4.0);
        let _ = writeln!(s, "<text x=\"{}\" y=\"{y}\">{}</text>", x + 18.0, escape(l));
    }
}

/// Seed-averaged test accuracy per epoch, keyed by run name.
pub fn mean_curves(records: &[RunRecord]) -> BTreeMap<String, Vec<(usize, f64)>> {
    let mut grouped: BTreeMap<String, BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
    for r in records {
        let g = grouped.entry(r.name.clone()).or_default();
        for (e, a) in r.test_curve() {
            g.entry(e).or_default().push(a);
        }
    }
    grouped
        .into_iter()
        .map(|(k, g)| (k, g.into_iter().map(|(e, v)| (e, mean(v))).collect()))
        .collect()
}

/// Accuracy-versus-epoch SVG plus `accuracy_curves.csv`.
pub fn accuracy_chart(records: &[RunRecord], out: &Path) -> Result<Vec<PathBuf>> {
    let curves = mean_curves(records);
    let max_epoch = curves.values().flatten().map(|p| p.0).max().unwrap_or(1).max(1);
    let f = Frame {
        x: (0.0, max_epoch as f64),
        y: (0.0, 100.0),
    };
    let mut s = svg_open("Test accuracy per epoch", "epoch", "accuracy (%)", &f);
    let mut csv = String::from("label,epoch,accuracy\n");
    let labels: Vec<String> = curves.keys().cloned().collect();
    for (i, (label, pts)) in curves.iter().enumerate() {
        let path: Vec<String> = pts.iter().map(|(e, a)| format!("{:.2},{:.2}", f.px(*e as f64), f.py(*a))).collect();
        let _ = writeln!(
            s,
            "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"2\" points=\"{}\"><title>{}</title></polyline>",
            PALETTE[i % PALETTE.len()],
            path.join(" "),
            escape(label)
        );
        for (e, a) in pts {
            let _ = writeln!(csv, "{label},{e},{a}");
        }
    }
    legend(&mut s, &labels);
    s.push_str("</svg>\n");
    let (svg_path, csv_path) = (out.join("accuracy_curves.svg"), out.join("accuracy_curves.csv"));
    fs::write(&svg_path, s)?;
    fs::write(&csv_path, csv)?;
    Ok(vec![svg_path, csv_path])
}

/// Per-element energy for `T = 1..=max_t` and the first `T` at which the
/// ADD variant is cheaper than timestep LIF.
pub fn energy_series(max_t: usize) -> Result<(Vec<(usize, f64, f64, f64)>, Option<usize>)> {
    let rows = (1..=max_t)
        .map(|t| estimate_energy(t, 1, 1, 1).map(|r| (t, r.lif_pj, r.amp2_add_pj, r.amp2_mul_pj)))
        .collect::<amp2_core::Result<Vec<_>>>()?;
    let crossover = rows.iter().find(|r| r.2 < r.1).map(|r| r.0);
    Ok((rows, crossover))
}

/// Energy-versus-T bar chart plus `energy_vs_t.csv`.
pub fn energy_chart(out: &Path, max_t: usize) -> Result<Vec<PathBuf>> {
    let (rows, crossover) = energy_series(max_t)?;
    let top = rows.iter().map(|r| r.1.max(r.3)).fold(0.0, f64::max) * 1.1;
    let f = Frame {
        x: (0.5, max_t as f64 + 0.5),
        y: (0.0, top),
    };
    let mut s = svg_open("Energy per neuron update", "timesteps T", "energy (pJ)", &f);
    let bar = (f.px(1.0) - f.px(0.0)) * 0.6;
    let mut csv = String::from("t,lif_pj,amp2_add_pj,amp2_mul_pj\n");
    for &(t, lif, add, mul) in &rows {
        let x = f.px(t as f64) - bar / 2.0;
        let _ = writeln!(
            s,
            "<rect x=\"{x:.2}\" y=\"{:.2}\" width=\"{bar:.2}\" height=\"{:.2}\" fill=\"{}\"><title>T={t}: {lif} pJ</title></rect>",
            f.py(lif),
            f.py(0.0) - f.py(lif),
            PALETTE[0]
        );
        let _ = writeln!(csv, "{t},{lif},{add},{mul}");
    }
    for (i, (label, v)) in [("AMP2 ADD", rows[0].2), ("AMP2 AND", rows[0].3)].iter().enumerate() {
        let _ = writeln!(
            s,
            "<line x1=\"{}\" x2=\"{}\" y1=\"{y:.2}\" y2=\"{y:.2}\" stroke=\"{}\" stroke-width=\"2\" stroke-dasharray=\"6 4\"><title>{label}</title></line>",
            f.px(f.x.0),
            f.px(f.x.1),
            PALETTE[i + 1],
            y = f.py(*v)
        );
    }
    if let Some(t) = crossover {
        let x = f.px(t as f64);
        let _ = writeln!(
            s,
            "<line x1=\"{x:.2}\" x2=\"{x:.2}\" y1=\"{}\" y2=\"{}\" stroke=\"black\" stroke-dasharray=\"2 2\"/>\n<text x=\"{:.2}\" y=\"{}\">crossover T={t}</text>",
            f.py(0.0),
            f.py(top),
            x + 4.0,
            f.py(top) + 14.0
        );
    }
    legend(
        &mut s,
        &["timestep LIF".to_string(), "AMP2 ADD".to_string(), "AMP2 AND".to_string()],
    );
    s.push_str("</svg>\n");
    let (svg_path, csv_path) = (out.join("energy_vs_t.svg"), out.join("energy_vs_t.csv"));
    fs::write(&svg_path, s)?;
    fs::write(&csv_path, csv)?;
    Ok(vec![svg_path, csv_path])
}

/// Writes both charts into `out`, returning every file written.
pub fn emit_plots(records: &[RunRecord], out: &Path) -> Result<Vec<PathBuf>> {
    if records.is_empty() {
        return Err(BenchError::NoRecords);
    }
    fs::create_dir_all(out)?;
    let mut files = accuracy_chart(records, out)?;
    files.extend(energy_chart(out, 8)?);
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crossover_is_at_three() {
        let (rows, cross) = energy_series(8).unwrap();
        assert_eq!(rows.len(), 8);
        assert_eq!(cross, Some(3));
    }

    #[test]
    fn empty_records_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(emit_plots(&[], dir.path()), Err(BenchError::NoRecords)));
    }
}
