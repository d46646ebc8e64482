//! Metric tables and figures.
//!
//! Tables are written first; figures are then drawn from the table files
//! alone, so a figure can always be regenerated from `tables/`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use genderprobe_core::analysis::{
    context_rows, mental_physical_comparison, rank_illnesses, size_trend, AnalysisError,
    ModelMetrics, ScatterRow,
};
use genderprobe_core::format::format_export;
use genderprobe_core::lexicon::Lexicon;
use genderprobe_core::metrics::ScoreIndex;
use genderprobe_core::scoring::ModelDescriptor;
use genderprobe_core::stats::kde_scott;
use plotters::coord::Shift;
use plotters::prelude::*;
use serde::Serialize;

/// Illnesses shown on each side of a ranking.
pub const RANKING_K: usize = 3;

/// Points in each density curve.
pub const DENSITY_GRID: usize = 128;

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("nothing to report; missing views: {}", .0.join(", "))]
    Empty(Vec<String>),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("storage error: {0}")]
    Storage(String),
    #[error("rendering failed: {0}")]
    Render(String),
}

fn io<E: std::fmt::Display>(path: &Path) -> impl FnOnce(E) -> ReportError + '_ {
    move |e| ReportError::Storage(format!("{}: {e}", path.display()))
}

/// Everything known about one model going into a report.
pub struct ModelReport {
    pub descriptor: ModelDescriptor,
    pub run_ids: Vec<String>,
    pub index: ScoreIndex,
    pub metrics: ModelMetrics,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportSummary {
    pub toolkit_version: String,
    pub lexicon_version: String,
    pub models: Vec<ModelSummary>,
    /// View name to `emitted` or the reason it was skipped.
    pub views: BTreeMap<String, String>,
    pub tables: Vec<String>,
    pub figures: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelSummary {
    pub model_id: String,
    pub parameter_count: u64,
    pub run_ids: Vec<String>,
    pub metric_count: usize,
}

struct Table {
    name: &'static str,
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: &'static str, header: &[&'static str]) -> Self {
        Self { name, header: header.to_vec(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }
}

fn num(v: f64) -> String {
    format_export(v)
}

pub const VIEWS: [&str; 5] = [
    "context_probabilities",
    "folk_subversive",
    "matched_pairs",
    "illness_density",
    "illness_ranking",
];

/// Writes `tables/`, `figures/`, `metrics.jsonl` and `summary.json` under `out`.
pub fn render_report(models: &[ModelReport], lexicon: &Lexicon, out: &Path) -> Result<ReportSummary, ReportError> {
    let mut views: BTreeMap<String, String> = BTreeMap::new();
    let tables = build_tables(models, lexicon, &mut views)?;
    if tables.is_empty() {
        return Err(ReportError::Empty(VIEWS.iter().map(|v| v.to_string()).collect()));
    }

    let tables_dir = out.join("tables");
    fs::create_dir_all(&tables_dir).map_err(io(&tables_dir))?;
    let mut table_files = Vec::new();
    for t in &tables {
        let path = tables_dir.join(format!("{}.csv", t.name));
        fs::write(&path, t.to_csv()).map_err(io(&path))?;
        table_files.push(format!("tables/{}.csv", t.name));
    }

    let mut metrics = String::new();
    for m in models {
        for r in m.metrics.all() {
            metrics.push_str(&serde_json::to_string(r).expect("metric serializes"));
            metrics.push('\n');
        }
    }
    let path = out.join("metrics.jsonl");
    fs::write(&path, metrics).map_err(io(&path))?;

    let figures = render_figures(&tables_dir, &out.join("figures"))?;
    let summary = ReportSummary {
        toolkit_version: genderprobe_core::TOOLKIT_VERSION.into(),
        lexicon_version: lexicon.version().into(),
        models: models
            .iter()
            .map(|m| ModelSummary {
                model_id: m.descriptor.model_id.clone(),
                parameter_count: m.descriptor.parameter_count,
                run_ids: m.run_ids.clone(),
                metric_count: m.metrics.all().count(),
            })
            .collect(),
        views,
        tables: table_files,
        figures: figures.iter().map(|f| format!("figures/{f}")).collect(),
    };
    let path = out.join("summary.json");
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
    fs::write(&path, text).map_err(io(&path))?;
    Ok(summary)
}

fn build_tables(
    models: &[ModelReport],
    lexicon: &Lexicon,
    views: &mut BTreeMap<String, String>,
) -> Result<Vec<Table>, ReportError> {
    let mut out = Vec::new();
    let with_sex: Vec<&ModelReport> = models.iter().filter(|m| m.metrics.folk_subversive.is_some()).collect();
    let with_illness: Vec<&ModelReport> =
        models.iter().filter(|m| !m.metrics.gender_illness.is_empty()).collect();
    let with_baseline: Vec<&ModelReport> =
        models.iter().filter(|m| !m.metrics.baseline_medians.is_empty()).collect();

    if with_sex.is_empty() {
        for v in ["context_probabilities", "folk_subversive", "matched_pairs"] {
            views.insert(v.into(), "skipped: no sex_gender scores".into());
        }
    } else {
        let mut ctx = Table::new(
            "context_probabilities",
            &["model_id", "context", "gender", "log_prob", "baseline_median", "below_baseline"],
        );
        for m in &with_sex {
            for r in context_rows(&m.index, lexicon, &m.metrics)? {
                ctx.push(vec![
                    r.model_id,
                    r.context,
                    r.gender,
                    num(r.log_prob),
                    r.baseline_median.map(num).unwrap_or_default(),
                    r.below_baseline.map(|b| b.to_string()).unwrap_or_default(),
                ]);
            }
        }
        out.push(ctx);
        views.insert("context_probabilities".into(), "emitted".into());

        let mut folk = Table::new(
            "folk_subversive",
            &["model_id", "parameter_count", "identifier_count", "value", "balanced_value"],
        );
        let mut points = Vec::new();
        for m in &with_sex {
            let f = m.metrics.folk_subversive.as_ref().expect("filtered");
            let b = m.metrics.folk_subversive_balanced.as_ref().expect("computed with folk");
            let ids = f.parameters.get("identifiers").map_or(0, |s| s.split('|').count());
            folk.push(vec![
                m.descriptor.model_id.clone(),
                m.descriptor.parameter_count.to_string(),
                ids.to_string(),
                num(f.value),
                num(b.value),
            ]);
            points.push(ScatterRow {
                model_id: m.descriptor.model_id.clone(),
                parameter_count: m.descriptor.parameter_count,
                value: f.value,
            });
        }
        folk.rows.sort_by(|a, b| {
            let pa: u64 = a[1].parse().expect("integer");
            let pb: u64 = b[1].parse().expect("integer");
            pa.cmp(&pb).then_with(|| a[0].cmp(&b[0]))
        });
        out.push(folk);
        views.insert("folk_subversive".into(), "emitted".into());
        if points.len() >= 3 {
            let trend = size_trend(&points)?;
            let mut t = Table::new("size_trend", &["n_models", "rho", "p_value", "method", "stars"]);
            t.push(vec![
                trend.rows.len().to_string(),
                num(trend.test.statistic),
                num(trend.test.p_value),
                method_name(trend.test.method),
                genderprobe_core::analysis::significance_stars(trend.test.p_value).into(),
            ]);
            out.push(t);
            views.insert("size_trend".into(), "emitted".into());
        } else {
            views.insert("size_trend".into(), format!("skipped: needs 3 models, have {}", points.len()));
        }

        let mut pairs = Table::new("sex_gender", &["model_id", "gender", "female_context", "male_context", "value"]);
        for m in &with_sex {
            for r in &m.metrics.sex_gender {
                pairs.push(vec![
                    r.model_id.clone(),
                    r.parameters["gender"].clone(),
                    r.parameters["female"].clone(),
                    r.parameters["male"].clone(),
                    num(r.value),
                ]);
            }
        }
        out.push(pairs);
        views.insert("matched_pairs".into(), "emitted".into());
    }

    if with_baseline.is_empty() {
        views.insert("baseline_median".into(), "skipped: no sex_baseline scores".into());
    } else {
        let mut t = Table::new("baseline_median", &["model_id", "context", "value"]);
        for m in &with_baseline {
            for r in &m.metrics.baseline_medians {
                t.push(vec![r.model_id.clone(), r.parameters["context"].clone(), num(r.value)]);
            }
        }
        out.push(t);
        views.insert("baseline_median".into(), "emitted".into());
    }

    if with_illness.is_empty() {
        for v in ["illness_density", "illness_ranking"] {
            views.insert(v.into(), "skipped: no gender_illness scores".into());
        }
    } else {
        let mut lprs = Table::new("gender_illness", &["model_id", "gender", "illness", "illness_class", "value"]);
        let mut tests = Table::new(
            "mental_physical",
            &["model_id", "gender", "n_mental", "n_physical", "u_statistic", "p_value", "method", "stars"],
        );
        let mut density = Table::new(
            "illness_density",
            &["model_id", "gender", "illness_class", "bandwidth", "x", "density"],
        );
        let mut ranking = Table::new("illness_ranking", &["model_id", "gender", "side", "rank", "illness", "value"]);
        let reference = lexicon.reference_identifier();
        for m in &with_illness {
            let model_id = &m.descriptor.model_id;
            for r in &m.metrics.gender_illness {
                lprs.push(vec![
                    model_id.clone(),
                    r.parameters["gender"].clone(),
                    r.parameters["illness"].clone(),
                    r.parameters["class"].clone(),
                    num(r.value),
                ]);
            }
            for g in lexicon.gender_identifiers().iter().filter(|g| g.term != reference.term) {
                let by_illness = m.metrics.illness_lprs(&g.term);
                let cmp = mental_physical_comparison(model_id, &g.term, &by_illness, lexicon)?;
                tests.push(vec![
                    model_id.clone(),
                    g.term.clone(),
                    cmp.mental.len().to_string(),
                    cmp.physical.len().to_string(),
                    num(cmp.test.statistic),
                    num(cmp.test.p_value),
                    method_name(cmp.test.method),
                    cmp.stars.clone(),
                ]);
                for (class, values) in [("mental", &cmp.mental), ("physical", &cmp.physical)] {
                    let curve = kde_scott(values, DENSITY_GRID).map_err(AnalysisError::from)?;
                    for (x, d) in curve.grid.iter().zip(&curve.density) {
                        density.push(vec![
                            model_id.clone(),
                            g.term.clone(),
                            class.into(),
                            num(curve.bandwidth),
                            num(*x),
                            num(*d),
                        ]);
                    }
                }
                let ordered: Vec<(String, f64)> =
                    lexicon.illnesses().iter().map(|i| (i.term.clone(), by_illness[&i.term])).collect();
                let rank = rank_illnesses(model_id, &g.term, &ordered, RANKING_K);
                for (side, entries) in [("top", &rank.top), ("bottom", &rank.bottom)] {
                    for (i, (illness, v)) in entries.iter().enumerate() {
                        ranking.push(vec![
                            model_id.clone(),
                            g.term.clone(),
                            side.into(),
                            (i + 1).to_string(),
                            illness.clone(),
                            num(*v),
                        ]);
                    }
                }
            }
        }
        out.extend([lprs, tests, density, ranking]);
        views.insert("illness_density".into(), "emitted".into());
        views.insert("illness_ranking".into(), "emitted".into());
    }
    Ok(out)
}

fn method_name(m: genderprobe_core::stats::Method) -> String {
    serde_json::to_value(m).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
}

type Row = BTreeMap<String, String>;

fn read_table(dir: &Path, name: &str) -> Result<Option<Vec<Row>>, ReportError> {
    let path = dir.join(format!("{name}.csv"));
    if !path.exists() {
        return Ok(None);
    }
    let mut r = csv::Reader::from_path(&path).map_err(io(&path))?;
    let header = r.headers().map_err(io(&path))?.clone();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(io(&path))?;
        rows.push(header.iter().map(String::from).zip(rec.iter().map(String::from)).collect());
    }
    Ok(Some(rows))
}

fn f(row: &Row, key: &str) -> f64 {
    row[key].parse().unwrap_or(f64::NAN)
}

/// Draws every figure whose source table exists in `tables_dir`; returns
/// the file names written to `figures_dir`.
pub fn render_figures(tables_dir: &Path, figures_dir: &Path) -> Result<Vec<String>, ReportError> {
    fs::create_dir_all(figures_dir).map_err(io(figures_dir))?;
    let mut written = Vec::new();
    let mut emit = |name: &str, svg: String| -> Result<(), ReportError> {
        let svg_path = figures_dir.join(format!("{name}.svg"));
        fs::write(&svg_path, &svg).map_err(io(&svg_path))?;
        let png_path = figures_dir.join(format!("{name}.png"));
        fs::write(&png_path, svg_to_png(&svg)?).map_err(io(&png_path))?;
        written.push(format!("{name}.svg"));
        written.push(format!("{name}.png"));
        Ok(())
    };
    if let Some(rows) = read_table(tables_dir, "context_probabilities")? {
        emit("context_probabilities", context_figure(&rows)?)?;
    }
    if let Some(rows) = read_table(tables_dir, "folk_subversive")? {
        let trend = read_table(tables_dir, "size_trend")?.and_then(|t| t.into_iter().next());
        emit("folk_subversive", folk_figure(&rows, trend.as_ref())?)?;
    }
    if let Some(rows) = read_table(tables_dir, "sex_gender")? {
        emit("matched_pairs", matched_pairs_figure(&rows)?)?;
    }
    if let (Some(rows), Some(tests)) =
        (read_table(tables_dir, "illness_density")?, read_table(tables_dir, "mental_physical")?)
    {
        emit("illness_density", density_figure(&rows, &tests)?)?;
    }
    if let Some(rows) = read_table(tables_dir, "illness_ranking")? {
        emit("illness_ranking", ranking_figure(&rows)?)?;
    }
    Ok(written)
}

const PALETTE: [RGBColor; 10] = [
    RGBColor(31, 119, 180),
    RGBColor(255, 127, 14),
    RGBColor(44, 160, 44),
    RGBColor(214, 39, 40),
    RGBColor(148, 103, 189),
    RGBColor(140, 86, 75),
    RGBColor(227, 119, 194),
    RGBColor(127, 127, 127),
    RGBColor(188, 189, 34),
    RGBColor(23, 190, 207),
];

const FONT: &str = "DejaVu Sans";

fn render_err<E: std::fmt::Display>(e: E) -> ReportError {
    ReportError::Render(e.to_string())
}

/// Distinct values of `key` in first-seen order.
fn ordered(rows: &[Row], key: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for r in rows {
        if !out.contains(&r[key]) {
            out.push(r[key].clone());
        }
    }
    out
}

fn padded_range(values: impl Iterator<Item = f64>, include_zero: bool) -> (f64, f64) {
    let (mut lo, mut hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    if !lo.is_finite() {
        (lo, hi) = (-1.0, 1.0);
    }
    if include_zero {
        lo = lo.min(0.0);
        hi = hi.max(0.0);
    }
    let pad = ((hi - lo) * 0.08).max(1e-3);
    (lo - pad, hi + pad)
}

fn with_svg(
    size: (u32, u32),
    draw: impl FnOnce(&DrawingArea<SVGBackend, Shift>) -> Result<(), ReportError>,
) -> Result<String, ReportError> {
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, size).into_drawing_area();
        root.fill(&WHITE).map_err(render_err)?;
        draw(&root)?;
        root.present().map_err(render_err)?;
    }
    Ok(svg)
}

/// Bars for `groups` x `series`, with an optional per-group reference line.
struct GroupedBars<'a> {
    title: String,
    groups: &'a [String],
    series: &'a [String],
    value: &'a dyn Fn(usize, usize) -> Option<f64>,
    reference: &'a dyn Fn(usize) -> Option<f64>,
    y_desc: &'a str,
}

fn grouped_bars(area: &DrawingArea<SVGBackend, Shift>, spec: &GroupedBars) -> Result<(), ReportError> {
    let (ng, ns) = (spec.groups.len(), spec.series.len().max(1));
    let values = (0..ng).flat_map(|g| (0..ns).filter_map(move |s| (spec.value)(g, s)));
    let refs = (0..ng).filter_map(|g| (spec.reference)(g));
    let (lo, hi) = padded_range(values.chain(refs), true);
    let groups = spec.groups.to_vec();
    let label = move |v: &f64| {
        let i = v.round();
        if (v - i).abs() < 1e-6 && i >= 0.0 && (i as usize) < groups.len() {
            groups[i as usize].clone()
        } else {
            String::new()
        }
    };
    let mut chart = ChartBuilder::on(area)
        .caption(&spec.title, (FONT, 16))
        .margin(10)
        .x_label_area_size(36)
        .y_label_area_size(56)
        .build_cartesian_2d(-0.5f64..(ng as f64 - 0.5), lo..hi)
        .map_err(render_err)?;
    chart
        .configure_mesh()
        .disable_x_mesh()
        .x_labels(ng + 1)
        .x_label_formatter(&label)
        .x_label_style((FONT, 11))
        .y_label_style((FONT, 11))
        .y_desc(spec.y_desc)
        .draw()
        .map_err(render_err)?;
    let width = 0.84 / ns as f64;
    for (s, name) in spec.series.iter().enumerate() {
        let color = PALETTE[s % PALETTE.len()];
        let bars: Vec<_> = (0..ng)
            .filter_map(|g| {
                let v = (spec.value)(g, s)?;
                let x0 = g as f64 - 0.42 + s as f64 * width;
                Some(Rectangle::new([(x0, 0.0), (x0 + width, v)], color.filled()))
            })
            .collect();
        chart
            .draw_series(bars)
            .map_err(render_err)?
            .label(name.as_str())
            .legend(move |(x, y)| Rectangle::new([(x, y - 5), (x + 10, y + 5)], color.filled()));
    }
    for g in 0..ng {
        if let Some(m) = (spec.reference)(g) {
            let line = vec![(g as f64 - 0.46, m), (g as f64 + 0.46, m)];
            chart.draw_series(LineSeries::new(line, BLACK.stroke_width(2))).map_err(render_err)?;
        }
    }
    chart
        .configure_series_labels()
        .position(SeriesLabelPosition::LowerRight)
        .label_font((FONT, 11))
        .background_style(WHITE.mix(0.85))
        .border_style(BLACK)
        .draw()
        .map_err(render_err)?;
    Ok(())
}

fn context_figure(rows: &[Row]) -> Result<String, ReportError> {
    let models = ordered(rows, "model_id");
    with_svg((1400, 420 * models.len() as u32), |root| {
        for (area, model) in root.split_evenly((models.len(), 1)).iter().zip(&models) {
            let mine: Vec<&Row> = rows.iter().filter(|r| &r["model_id"] == model).collect();
            let mine_owned: Vec<Row> = mine.iter().map(|r| (*r).clone()).collect();
            let contexts = ordered(&mine_owned, "context");
            let genders = ordered(&mine_owned, "gender");
            let cell = |g: usize, s: usize| {
                mine.iter()
                    .find(|r| r["context"] == contexts[g] && r["gender"] == genders[s])
                    .map(|r| f(r, "log_prob"))
            };
            let baseline = |g: usize| {
                mine.iter()
                    .find(|r| r["context"] == contexts[g])
                    .and_then(|r| r["baseline_median"].parse::<f64>().ok())
            };
            grouped_bars(
                area,
                &GroupedBars {
                    title: format!("{model}: log P(gender | context), line = non-human baseline median"),
                    groups: &contexts,
                    series: &genders,
                    value: &cell,
                    reference: &baseline,
                    y_desc: "log probability",
                },
            )?;
        }
        Ok(())
    })
}

fn matched_pairs_figure(rows: &[Row]) -> Result<String, ReportError> {
    let models = ordered(rows, "model_id");
    with_svg((1400, 420 * models.len() as u32), |root| {
        for (area, model) in root.split_evenly((models.len(), 1)).iter().zip(&models) {
            let mine: Vec<Row> = rows.iter().filter(|r| &r["model_id"] == model).cloned().collect();
            let genders = ordered(&mine, "gender");
            let pairs: Vec<String> = {
                let mut p: Vec<String> = Vec::new();
                for r in &mine {
                    let name = format!("{} vs {}", r["female_context"], r["male_context"]);
                    if !p.contains(&name) {
                        p.push(name);
                    }
                }
                p
            };
            let cell = |g: usize, s: usize| {
                mine.iter()
                    .find(|r| {
                        r["gender"] == genders[g]
                            && format!("{} vs {}", r["female_context"], r["male_context"]) == pairs[s]
                    })
                    .map(|r| f(r, "value"))
            };
            grouped_bars(
                area,
                &GroupedBars {
                    title: format!("{model}: matched-pair LPR (female minus male context)"),
                    groups: &genders,
                    series: &pairs,
                    value: &cell,
                    reference: &|_| None,
                    y_desc: "log probability ratio",
                },
            )?;
        }
        Ok(())
    })
}

fn folk_figure(rows: &[Row], trend: Option<&Row>) -> Result<String, ReportError> {
    let points: Vec<(String, f64, f64)> = rows
        .iter()
        .map(|r| (r["model_id"].clone(), f(r, "parameter_count"), f(r, "value")))
        .collect();
    let (xlo, xhi) = {
        let lo = points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min).max(1.0);
        let hi = points.iter().map(|p| p.1).fold(0.0, f64::max).max(lo);
        (lo / 3.0, hi * 3.0)
    };
    let (ylo, yhi) = padded_range(points.iter().map(|p| p.2), true);
    let title = match trend {
        Some(t) => format!(
            "Folk-Subversive LPR vs size (Spearman rho = {:.3}, p = {:.3}{})",
            f(t, "rho"),
            f(t, "p_value"),
            if t["stars"].is_empty() { String::new() } else { format!(" {}", t["stars"]) }
        ),
        None => "Folk-Subversive LPR vs size".to_string(),
    };
    with_svg((900, 600), |root| {
        let mut chart = ChartBuilder::on(root)
            .caption(title, (FONT, 16))
            .margin(14)
            .x_label_area_size(40)
            .y_label_area_size(56)
            .build_cartesian_2d((xlo..xhi).log_scale(), ylo..yhi)
            .map_err(render_err)?;
        chart
            .configure_mesh()
            .x_desc("parameters (log scale)")
            .y_desc("Folk-Subversive LPR")
            .x_label_formatter(&|v| format!("{v:.0e}"))
            .label_style((FONT, 11))
            .draw()
            .map_err(render_err)?;
        chart
            .draw_series(LineSeries::new(vec![(xlo, 0.0), (xhi, 0.0)], BLACK.mix(0.4)))
            .map_err(render_err)?;
        chart
            .draw_series(points.iter().map(|(name, x, y)| {
                EmptyElement::at((*x, *y))
                    + Circle::new((0, 0), 5, PALETTE[0].filled())
                    + Text::new(name.clone(), (7, -12), (FONT, 11))
            }))
            .map_err(render_err)?;
        Ok(())
    })
}

fn density_figure(rows: &[Row], tests: &[Row]) -> Result<String, ReportError> {
    let panels: Vec<(String, String)> = {
        let mut p = Vec::new();
        for t in tests {
            p.push((t["model_id"].clone(), t["gender"].clone()));
        }
        p
    };
    let cols = 3usize;
    let nrows = panels.len().div_ceil(cols).max(1);
    with_svg((1200, 320 * nrows as u32), |root| {
        for (area, (model, gender)) in root.split_evenly((nrows, cols)).iter().zip(&panels) {
            let test = tests
                .iter()
                .find(|t| &t["model_id"] == model && &t["gender"] == gender)
                .expect("panel comes from tests");
            let curve = |class: &str| -> Vec<(f64, f64)> {
                rows.iter()
                    .filter(|r| &r["model_id"] == model && &r["gender"] == gender && r["illness_class"] == class)
                    .map(|r| (f(r, "x"), f(r, "density")))
                    .collect()
            };
            let (mental, physical) = (curve("mental"), curve("physical"));
            let (xlo, xhi) = padded_range(mental.iter().chain(&physical).map(|p| p.0), false);
            let (_, yhi) = padded_range(mental.iter().chain(&physical).map(|p| p.1), true);
            let stars = &test["stars"];
            let mut chart = ChartBuilder::on(area)
                .caption(
                    format!("{model}: {gender} {}", if stars.is_empty() { "(n.s.)" } else { stars }),
                    (FONT, 14),
                )
                .margin(8)
                .x_label_area_size(30)
                .y_label_area_size(44)
                .build_cartesian_2d(xlo..xhi, 0.0..yhi)
                .map_err(render_err)?;
            chart
                .configure_mesh()
                .x_desc("gender-illness LPR")
                .label_style((FONT, 10))
                .draw()
                .map_err(render_err)?;
            for (i, (name, pts)) in [("mental", mental), ("physical", physical)].into_iter().enumerate() {
                let color = PALETTE[i + 3];
                chart
                    .draw_series(LineSeries::new(pts, color.stroke_width(2)))
                    .map_err(render_err)?
                    .label(name)
                    .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 14, y)], color.stroke_width(2)));
            }
            chart
                .configure_series_labels()
                .label_font((FONT, 10))
                .background_style(WHITE.mix(0.85))
                .border_style(BLACK)
                .draw()
                .map_err(render_err)?;
        }
        Ok(())
    })
}

fn ranking_figure(rows: &[Row]) -> Result<String, ReportError> {
    let mut panels: Vec<(String, String)> = Vec::new();
    for r in rows {
        let key = (r["model_id"].clone(), r["gender"].clone());
        if !panels.contains(&key) {
            panels.push(key);
        }
    }
    let cols = 3usize;
    let nrows = panels.len().div_ceil(cols).max(1);
    with_svg((1500, 340 * nrows as u32), |root| {
        for (area, (model, gender)) in root.split_evenly((nrows, cols)).iter().zip(&panels) {
            let mut entries: Vec<&Row> =
                rows.iter().filter(|r| &r["model_id"] == model && &r["gender"] == gender).collect();
            // top in descending order, then bottom from the least negative down
            let top: Vec<&Row> = entries.iter().copied().filter(|r| r["side"] == "top").collect();
            let mut bottom: Vec<&Row> = entries.iter().copied().filter(|r| r["side"] == "bottom").collect();
            bottom.reverse();
            entries = top.into_iter().chain(bottom).collect();
            let names: Vec<String> = entries.iter().map(|r| r["illness"].clone()).collect();
            let values: Vec<f64> = entries.iter().map(|r| f(r, "value")).collect();
            let cell = |g: usize, _s: usize| values.get(g).copied();
            grouped_bars(
                area,
                &GroupedBars {
                    title: format!("{model}: {gender}"),
                    groups: &names,
                    series: &["LPR".to_string()],
                    value: &cell,
                    reference: &|_| None,
                    y_desc: "gender-illness LPR",
                },
            )?;
        }
        Ok(())
    })
}

fn font_options() -> &'static resvg::usvg::Options<'static> {
    static OPTIONS: OnceLock<resvg::usvg::Options<'static>> = OnceLock::new();
    OPTIONS.get_or_init(|| {
        let mut opt = resvg::usvg::Options::default();
        let mut db = resvg::usvg::fontdb::Database::new();
        db.load_system_fonts();
        db.set_sans_serif_family(FONT);
        opt.fontdb = Arc::new(db);
        opt.font_family = FONT.into();
        opt
    })
}

/// Rasterizes an SVG document at its natural size.
pub fn svg_to_png(svg: &str) -> Result<Vec<u8>, ReportError> {
    let tree = resvg::usvg::Tree::from_str(svg, font_options()).map_err(render_err)?;
    let size = tree.size().to_int_size();
    let mut pixmap = resvg::tiny_skia::Pixmap::new(size.width(), size.height())
        .ok_or_else(|| ReportError::Render("empty figure".into()))?;
    resvg::render(&tree, resvg::tiny_skia::Transform::default(), &mut pixmap.as_mut());
    pixmap.encode_png().map_err(render_err)
}

/// Paths of the files a report writes, relative to its directory.
pub fn report_files(summary: &ReportSummary) -> Vec<PathBuf> {
    summary
        .tables
        .iter()
        .chain(&summary.figures)
        .map(PathBuf::from)
        .chain([PathBuf::from("metrics.jsonl"), PathBuf::from("summary.json")])
        .collect()
}
