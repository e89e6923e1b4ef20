//! CSV and SVG outputs.
//!
//! Numbers are written with Rust's shortest round-trip float formatting, and
//! no file carries a timestamp, so identical runs give byte-identical files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::data::save_dataset;
use crate::error::{Error, Result};
use crate::metrics::{DistributionSummary, EpochRecord, MetricsSeries, QuadrantReport};
use crate::runner::{HistoryRow, RunResult, WeightDump};

pub const METRICS_HEADER: [&str; 8] = [
    "epoch",
    "lr",
    "train_loss",
    "test_acc",
    "label_precision",
    "zeroed_frac",
    "mean_w_clean",
    "mean_w_noisy",
];

pub const HISTORY_HEADER: [&str; 4] = ["sample_id", "epoch", "prob_given_label", "predicted_label"];

pub const WEIGHTS_HEADER: [&str; 4] = ["sample_id", "weight", "zeroed", "is_clean"];

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn finish<W: std::io::Write>(mut w: csv::Writer<W>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

fn bool01(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

pub fn write_metrics_csv(series: &MetricsSeries, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(METRICS_HEADER)?;
    for r in &series.records {
        w.write_record([
            r.epoch.to_string(),
            r.learning_rate.to_string(),
            r.mean_train_loss.to_string(),
            r.test_accuracy.to_string(),
            r.label_precision.to_string(),
            r.zeroed_fraction.to_string(),
            r.mean_weight_clean.to_string(),
            r.mean_weight_noisy.to_string(),
        ])?;
    }
    finish(w, path)
}

/// File name used for a run's metrics: `metrics_<method>_seed<seed>.csv`.
pub fn metrics_file_name(method: &str, seed: u64) -> String {
    format!("metrics_{method}_seed{seed}.csv")
}

/// Recovers `(method, seed)` from a metrics file name, if it follows the convention.
pub fn parse_metrics_file_name(path: &Path) -> Option<(String, u64)> {
    let stem = path.file_stem()?.to_str()?;
    let rest = stem.strip_prefix("metrics_")?;
    let (method, seed) = rest.rsplit_once("_seed")?;
    Some((method.to_string(), seed.parse().ok()?))
}

/// Reads a metrics CSV. Method and seed come from the file name when possible.
pub fn read_metrics_csv(path: &Path) -> Result<MetricsSeries> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    if r.headers()?.iter().ne(METRICS_HEADER) {
        return Err(Error::config(format!("{} is not a metrics CSV", path.display())));
    }
    let (method, seed) = parse_metrics_file_name(path).unwrap_or_else(|| {
        let stem = path.file_stem().map_or("run".into(), |s| s.to_string_lossy().into_owned());
        (stem, 0)
    });
    let mut series = MetricsSeries::new(method, seed);
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let num = |c: usize| -> Result<f64> {
            rec[c]
                .parse()
                .map_err(|_| Error::config(format!("{} row {}: bad {}", path.display(), i + 1, METRICS_HEADER[c])))
        };
        let epoch = rec[0]
            .parse()
            .map_err(|_| Error::config(format!("{} row {}: bad epoch", path.display(), i + 1)))?;
        series.push(EpochRecord {
            epoch,
            learning_rate: num(1)?,
            mean_train_loss: num(2)?,
            test_accuracy: num(3)?,
            label_precision: num(4)?,
            zeroed_fraction: num(5)?,
            mean_weight_clean: num(6)?,
            mean_weight_noisy: num(7)?,
        })?;
    }
    Ok(series)
}

pub fn write_quadrant_csv(report: &QuadrantReport, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["epoch", "loss_cut", "uncertainty_cut"];
    header.extend(QuadrantReport::NAMES);
    w.write_record(&header)?;
    let mut row = vec![
        report.epoch.to_string(),
        report.loss_cut.to_string(),
        report.uncertainty_cut.to_string(),
    ];
    row.extend(report.proportions().iter().map(f64::to_string));
    w.write_record(&row)?;
    finish(w, path)
}

pub fn write_history_csv(rows: &[HistoryRow], path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(HISTORY_HEADER)?;
    for r in rows {
        w.write_record([
            r.sample_id.to_string(),
            r.epoch.to_string(),
            r.prob_given_label.to_string(),
            r.predicted_label.to_string(),
        ])?;
    }
    finish(w, path)
}

pub fn read_history_csv(path: &Path) -> Result<Vec<HistoryRow>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    if r.headers()?.iter().ne(HISTORY_HEADER) {
        return Err(Error::config(format!("{} is not a history dump", path.display())));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = || Error::config(format!("{} row {}: malformed", path.display(), i + 1));
        rows.push(HistoryRow {
            sample_id: rec[0].parse().map_err(|_| bad())?,
            epoch: rec[1].parse().map_err(|_| bad())?,
            prob_given_label: rec[2].parse().map_err(|_| bad())?,
            predicted_label: rec[3].parse().map_err(|_| bad())?,
        });
    }
    Ok(rows)
}

pub fn write_weights_csv(dump: &WeightDump, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(WEIGHTS_HEADER)?;
    for r in &dump.rows {
        w.write_record([
            r.sample_id.to_string(),
            r.weight.to_string(),
            bool01(r.zeroed).to_string(),
            bool01(r.is_clean).to_string(),
        ])?;
    }
    finish(w, path)
}

/// `bin_lo,bin_hi,clean_density,noisy_density`, one row per bin.
pub fn write_distribution_csv(summary: &DistributionSummary, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["bin_lo", "bin_hi", "clean_density", "noisy_density"])?;
    for b in 0..summary.clean.density.len() {
        w.write_record([
            summary.edges[b].to_string(),
            summary.edges[b + 1].to_string(),
            summary.clean.density[b].to_string(),
            summary.noisy.density[b].to_string(),
        ])?;
    }
    finish(w, path)
}

/// Mean and standard deviation of final and best accuracy for one method.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: String,
    pub runs: usize,
    pub final_mean: f64,
    pub final_std: f64,
    pub best_mean: f64,
    pub best_std: f64,
    pub final_precision_mean: f64,
}

/// Population mean and standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// One row per method, methods in first-seen order, seeds sorted.
pub fn summarize(series: &[MetricsSeries]) -> Vec<SummaryRow> {
    let mut order: Vec<&str> = Vec::new();
    let mut groups: BTreeMap<&str, Vec<&MetricsSeries>> = BTreeMap::new();
    for s in series {
        if !groups.contains_key(s.method.as_str()) {
            order.push(&s.method);
        }
        groups.entry(&s.method).or_default().push(s);
    }
    order
        .into_iter()
        .map(|m| {
            let mut runs = groups[m].clone();
            runs.sort_by_key(|s| s.seed);
            let finals: Vec<f64> = runs.iter().filter_map(|s| s.final_accuracy()).collect();
            let bests: Vec<f64> = runs.iter().filter_map(|s| s.best_accuracy()).collect();
            let precisions: Vec<f64> = runs
                .iter()
                .filter_map(|s| s.records.last().map(|r| r.label_precision))
                .collect();
            let (final_mean, final_std) = mean_std(&finals);
            let (best_mean, best_std) = mean_std(&bests);
            SummaryRow {
                method: m.to_string(),
                runs: runs.len(),
                final_mean,
                final_std,
                best_mean,
                best_std,
                final_precision_mean: mean_std(&precisions).0,
            }
        })
        .collect()
}

pub fn write_summary_csv(rows: &[SummaryRow], path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record([
        "method",
        "runs",
        "final_acc_mean",
        "final_acc_std",
        "best_acc_mean",
        "best_acc_std",
        "final_precision_mean",
    ])?;
    for r in rows {
        w.write_record([
            r.method.clone(),
            r.runs.to_string(),
            r.final_mean.to_string(),
            r.final_std.to_string(),
            r.best_mean.to_string(),
            r.best_std.to_string(),
            r.final_precision_mean.to_string(),
        ])?;
    }
    finish(w, path)
}

/// Plain-text version of the summary, accuracies in percent.
pub fn format_summary_table(rows: &[SummaryRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<18} {:>4} {:>16} {:>16} {:>10}",
        "method", "runs", "final acc (%)", "best acc (%)", "precision"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<18} {:>4} {:>9.2} ± {:<4.2} {:>9.2} ± {:<4.2} {:>10.4}",
            r.method,
            r.runs,
            100.0 * r.final_mean,
            100.0 * r.final_std,
            100.0 * r.best_mean,
            100.0 * r.best_std,
            r.final_precision_mean
        );
    }
    out
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2",
];

/// Line chart of one per-epoch quantity, one polyline per series. The y axis spans [0, 1].
pub fn line_chart_svg(title: &str, y_label: &str, series: &[MetricsSeries], value: impl Fn(&EpochRecord) -> f64) -> String {
    let (w, h) = (720.0, 420.0);
    let (left, right, top, bottom) = (60.0, 190.0, 40.0, 50.0);
    let plot_w = w - left - right;
    let plot_h = h - top - bottom;
    let max_epoch = series
        .iter()
        .flat_map(|s| s.records.iter().map(|r| r.epoch))
        .max()
        .unwrap_or(1)
        .max(2) as f64;
    let x_of = |e: f64| left + (e - 1.0) / (max_epoch - 1.0) * plot_w;
    let y_of = |v: f64| top + (1.0 - v.clamp(0.0, 1.0)) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        left + plot_w / 2.0,
        xml_escape(title)
    );
    for i in 0..=5 {
        let v = i as f64 / 5.0;
        let y = y_of(v);
        let _ = writeln!(
            svg,
            r##"<line x1="{left}" y1="{y}" x2="{}" y2="{y}" stroke="#ddd"/><text x="{}" y="{}" text-anchor="end">{v:.1}</text>"##,
            left + plot_w,
            left - 6.0,
            y + 4.0
        );
    }
    let ticks = 5usize;
    for i in 0..=ticks {
        let e = 1.0 + (max_epoch - 1.0) * i as f64 / ticks as f64;
        let x = x_of(e);
        let _ = writeln!(
            svg,
            r#"<text x="{x}" y="{}" text-anchor="middle">{}</text>"#,
            top + plot_h + 18.0,
            e.round()
        );
    }
    let _ = writeln!(
        svg,
        r##"<rect x="{left}" y="{top}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#333"/>"##
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">epoch</text>"#,
        left + plot_w / 2.0,
        h - 12.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        top + plot_h / 2.0,
        top + plot_h / 2.0,
        xml_escape(y_label)
    );
    for (i, s) in series.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let points: Vec<String> = s
            .records
            .iter()
            .map(|r| format!("{:.2},{:.2}", x_of(r.epoch as f64), y_of(value(r))))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#,
            points.join(" ")
        );
        let ly = top + 12.0 + 18.0 * i as f64;
        let lx = left + plot_w + 14.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{colour}" stroke-width="3"/><text x="{}" y="{}">{} (seed {})</text>"#,
            lx + 18.0,
            lx + 24.0,
            ly + 4.0,
            xml_escape(&s.method),
            s.seed
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Summary CSV plus accuracy and label-precision charts for a set of series.
pub fn emit_summary(series: &[MetricsSeries], out_dir: &Path) -> Result<Vec<PathBuf>> {
    if series.is_empty() {
        return Err(Error::config("nothing to report"));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    let summary = out_dir.join("summary.csv");
    write_summary_csv(&summarize(series), &summary)?;
    written.push(summary);
    let acc = out_dir.join("accuracy.svg");
    write_text(&acc, &line_chart_svg("Test accuracy", "accuracy", series, |r| r.test_accuracy))?;
    written.push(acc);
    let prec = out_dir.join("label_precision.svg");
    write_text(
        &prec,
        &line_chart_svg("Label precision", "precision", series, |r| r.label_precision),
    )?;
    written.push(prec);
    Ok(written)
}

/// Writes every output of a set of runs into `out_dir`.
pub fn emit_report(results: &[RunResult], out_dir: &Path) -> Result<Vec<PathBuf>> {
    if results.is_empty() {
        return Err(Error::config("nothing to report"));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    for r in results {
        let (m, s) = (r.method(), r.seed());
        let path = out_dir.join(metrics_file_name(m, s));
        write_metrics_csv(&r.series, &path)?;
        written.push(path);
        if let Some(q) = &r.quadrant {
            let path = out_dir.join(format!("quadrant_{m}_seed{s}.csv"));
            write_quadrant_csv(q, &path)?;
            written.push(path);
        }
        if !r.history_dump.is_empty() {
            let path = out_dir.join(format!("history_{m}_seed{s}.csv"));
            write_history_csv(&r.history_dump, &path)?;
            written.push(path);
            let path = out_dir.join(format!("train_{m}_seed{s}.csv"));
            save_dataset(&r.train, &path)?;
            written.push(path);
        }
        for dump in &r.weight_dumps {
            let path = out_dir.join(format!("weights_{m}_seed{s}_epoch{}.csv", dump.epoch));
            write_weights_csv(dump, &path)?;
            written.push(path);
        }
    }
    let series: Vec<MetricsSeries> = results.iter().map(|r| r.series.clone()).collect();
    written.extend(emit_summary(&series, out_dir)?);
    Ok(written)
}
