//! SVG figures rendered from the CSV files earlier runs wrote.
//!
//! Recognised layouts (by header): histograms `left,right,count`; overlap
//! curves `k,ao,agreement`; bar profiles `rank,fraction`; the gap/accuracy
//! curve; and `beta_correct,beta_wrong,...` grids drawn as heatmaps of
//! the loss, total shrinkage or measured gap change. Other CSV files are ignored.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::manifest::RunRecord;
use crate::CliError;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 48.0;

/// Column drawn by a beta-grid heatmap, first match wins.
const HEATMAP_VALUES: [&str; 3] = ["loss", "total", "measured_mean"];

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn parse(name: &str, bytes: &[u8]) -> Result<Self, CliError> {
        let mut r = csv::Reader::from_reader(bytes);
        let bad = |e: csv::Error| CliError::Input(format!("{name}: {e}"));
        let header = r.headers().map_err(bad)?.iter().map(str::to_string).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|r| r.iter().map(str::to_string).collect()))
            .collect::<Result<Vec<Vec<String>>, _>>()
            .map_err(bad)?;
        Ok(Self { header, rows })
    }

    fn col(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    fn numbers(&self, name: &str, file: &str, col: usize) -> Result<Vec<Option<f64>>, CliError> {
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let cell = r.get(col).map(String::as_str).unwrap_or("");
                if cell.is_empty() {
                    return Ok(None);
                }
                cell.parse::<f64>().map(Some).map_err(|_| {
                    CliError::Input(format!("{file}: row {}: column {name} is not a number: {cell:?}", i + 1))
                })
            })
            .collect()
    }

    fn required(&self, name: &str, file: &str) -> Result<Vec<f64>, CliError> {
        let col = self.col(name).expect("layout checked by caller");
        self.numbers(name, file, col)?
            .into_iter()
            .enumerate()
            .map(|(i, v)| v.ok_or_else(|| CliError::Input(format!("{file}: row {}: empty {name}", i + 1))))
            .collect()
    }
}

fn f(v: f64) -> String {
    format!("{v:.3}")
}

fn open_svg(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = WIDTH,
        h = HEIGHT
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
        f(WIDTH / 2.0),
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<line x1="{m}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/><line x1="{m}" y1="{t}" x2="{m}" y2="{b}" stroke="black"/>"#,
        m = f(MARGIN),
        b = f(HEIGHT - MARGIN),
        r = f(WIDTH - MARGIN),
        t = f(MARGIN)
    );
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn axis_labels(s: &mut String, x: &str, x_lo: f64, x_hi: f64, y: &str, y_lo: f64, y_hi: f64) {
    let base = HEIGHT - MARGIN;
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#,
        f(WIDTH / 2.0),
        f(HEIGHT - 12.0),
        escape(x)
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="10">{}</text><text x="{}" y="{}" font-family="sans-serif" font-size="10" text-anchor="end">{}</text>"#,
        f(MARGIN),
        f(base + 14.0),
        x_lo,
        f(WIDTH - MARGIN),
        f(base + 14.0),
        x_hi
    );
    let _ = writeln!(
        s,
        r#"<text x="12" y="{}" font-family="sans-serif" font-size="11" transform="rotate(-90 12 {})" text-anchor="middle">{}</text>"#,
        f(HEIGHT / 2.0),
        f(HEIGHT / 2.0),
        escape(y)
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="10" text-anchor="end">{}</text><text x="{}" y="{}" font-family="sans-serif" font-size="10" text-anchor="end">{}</text>"#,
        f(MARGIN - 4.0),
        f(base),
        y_lo,
        f(MARGIN - 4.0),
        f(MARGIN + 4.0),
        y_hi
    );
}

fn plot_w() -> f64 {
    WIDTH - 2.0 * MARGIN
}

fn plot_h() -> f64 {
    HEIGHT - 2.0 * MARGIN
}

/// Bar `i` of `n` gets equal width; height is `value / max * plot height`.
fn bars(s: &mut String, values: &[f64], attrs: &[String]) {
    let n = values.len().max(1) as f64;
    let top = values.iter().copied().fold(0.0, f64::max);
    let w = plot_w() / n;
    for (i, (&v, a)) in values.iter().zip(attrs).enumerate() {
        let h = if top > 0.0 { v.max(0.0) / top * plot_h() } else { 0.0 };
        let _ = writeln!(
            s,
            r##"<rect class="bar" x="{}" y="{}" width="{}" height="{}" fill="#4878a8" {a}/>"##,
            f(MARGIN + w * i as f64),
            f(HEIGHT - MARGIN - h),
            f(w * 0.9),
            f(h)
        );
    }
}

fn histogram(t: &Table, file: &str) -> Result<String, CliError> {
    let left = t.required("left", file)?;
    let right = t.required("right", file)?;
    let count = t.required("count", file)?;
    let mut s = open_svg(file);
    let attrs: Vec<String> = (0..count.len())
        .map(|i| format!(r#"data-left="{}" data-right="{}" data-count="{}""#, left[i], right[i], count[i]))
        .collect();
    bars(&mut s, &count, &attrs);
    let (lo, hi) = (left.first().copied().unwrap_or(0.0), right.last().copied().unwrap_or(0.0));
    let top = count.iter().copied().fold(0.0, f64::max);
    axis_labels(&mut s, "value", lo, hi, "count", 0.0, top);
    s.push_str("</svg>\n");
    Ok(s)
}

fn profile(t: &Table, file: &str) -> Result<String, CliError> {
    let rank = t.required("rank", file)?;
    let frac = t.required("fraction", file)?;
    let mut s = open_svg(file);
    let attrs: Vec<String> = rank
        .iter()
        .zip(&frac)
        .map(|(r, v)| format!(r#"data-rank="{r}" data-value="{v}""#))
        .collect();
    bars(&mut s, &frac, &attrs);
    axis_labels(&mut s, "rank", 1.0, rank.len() as f64, "fraction", 0.0, frac.iter().copied().fold(0.0, f64::max));
    s.push_str("</svg>\n");
    Ok(s)
}

fn gap_accuracy(t: &Table, file: &str) -> Result<String, CliError> {
    let lo = t.required("gap_low", file)?;
    let hi = t.required("gap_high", file)?;
    let n = t.required("n_samples", file)?;
    let col = t.col("adversarial_accuracy").expect("layout checked");
    let acc = t.numbers("adversarial_accuracy", file, col)?;
    let mut s = open_svg(file);
    let values: Vec<f64> = acc.iter().map(|a| a.unwrap_or(0.0)).collect();
    let attrs: Vec<String> = (0..n.len())
        .map(|i| {
            format!(
                r#"data-left="{}" data-right="{}" data-count="{}" data-value="{}""#,
                lo[i],
                hi[i],
                n[i],
                acc[i].map(|a| a.to_string()).unwrap_or_default()
            )
        })
        .collect();
    bars(&mut s, &values, &attrs);
    axis_labels(
        &mut s,
        "logit gap",
        lo.first().copied().unwrap_or(0.0),
        hi.last().copied().unwrap_or(0.0),
        "adversarial accuracy",
        0.0,
        values.iter().copied().fold(0.0, f64::max),
    );
    s.push_str("</svg>\n");
    Ok(s)
}

fn curves(t: &Table, file: &str) -> Result<String, CliError> {
    let k = t.required("k", file)?;
    let series = [("ao", t.required("ao", file)?, "#4878a8"), ("agreement", t.required("agreement", file)?, "#d0663a")];
    let (k_lo, k_hi) = (k.first().copied().unwrap_or(0.0), k.last().copied().unwrap_or(1.0));
    let span = if k_hi > k_lo { k_hi - k_lo } else { 1.0 };
    let mut s = open_svg(file);
    for (name, ys, colour) in &series {
        let pts: Vec<String> = k
            .iter()
            .zip(ys)
            .map(|(x, y)| {
                let px = MARGIN + (x - k_lo) / span * plot_w();
                let py = HEIGHT - MARGIN - y.clamp(0.0, 1.0) * plot_h();
                format!("{},{}", f(px), f(py))
            })
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline class="series" data-name="{name}" data-count="{}" fill="none" stroke="{colour}" points="{}"/>"#,
            pts.len(),
            pts.join(" ")
        );
    }
    axis_labels(&mut s, "k", k_lo, k_hi, "overlap", 0.0, 1.0);
    s.push_str("</svg>\n");
    Ok(s)
}

fn heatmap(t: &Table, file: &str, value_col: usize) -> Result<String, CliError> {
    let value_name = t.header[value_col].clone();
    let bc = t.required("beta_correct", file)?;
    let bw = t.required("beta_wrong", file)?;
    let vals = t.numbers(&value_name, file, value_col)?;
    let mut xs: Vec<f64> = bc.clone();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let mut ys: Vec<f64> = bw.clone();
    ys.sort_by(f64::total_cmp);
    ys.dedup();
    let present: Vec<f64> = vals.iter().flatten().copied().collect();
    let lo = present.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = present.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let cw = plot_w() / xs.len().max(1) as f64;
    let ch = plot_h() / ys.len().max(1) as f64;
    let mut s = open_svg(&format!("{file}: {value_name}"));
    for ((x, y), v) in bc.iter().zip(&bw).zip(&vals) {
        let i = xs.partition_point(|a| a < x);
        let j = ys.partition_point(|a| a < y);
        let fill = match v {
            Some(v) => {
                let u = if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
                let r = (255.0 * u).round() as u8;
                let b = (255.0 * (1.0 - u)).round() as u8;
                format!("rgb({r},64,{b})")
            }
            None => "#dddddd".to_string(),
        };
        let _ = writeln!(
            s,
            r#"<rect class="cell" x="{}" y="{}" width="{}" height="{}" fill="{fill}" data-x="{x}" data-y="{y}" data-value="{}"/>"#,
            f(MARGIN + cw * i as f64),
            f(HEIGHT - MARGIN - ch * (j + 1) as f64),
            f(cw),
            f(ch),
            v.map(|v| v.to_string()).unwrap_or_default()
        );
    }
    axis_labels(
        &mut s,
        "beta_correct",
        xs.first().copied().unwrap_or(0.0),
        xs.last().copied().unwrap_or(0.0),
        "beta_wrong",
        ys.first().copied().unwrap_or(0.0),
        ys.last().copied().unwrap_or(0.0),
    );
    s.push_str("</svg>\n");
    Ok(s)
}

fn render(t: &Table, file: &str) -> Result<Option<String>, CliError> {
    let h: Vec<&str> = t.header.iter().map(String::as_str).collect();
    let svg = match h.as_slice() {
        ["left", "right", "count"] => histogram(t, file)?,
        ["rank", "fraction"] => profile(t, file)?,
        ["k", "ao", "agreement"] => curves(t, file)?,
        ["gap_low", "gap_high", "n_samples", "adversarial_accuracy"] => gap_accuracy(t, file)?,
        ["beta_correct", "beta_wrong", ..] => match HEATMAP_VALUES.iter().find_map(|v| t.col(v)) {
            Some(col) => heatmap(t, file, col)?,
            None => return Ok(None),
        },
        _ => return Ok(None),
    };
    Ok(Some(svg))
}

/// Render every recognised CSV in `input` to `<stem>.svg` in `out`.
pub fn emit(input: &Path, out: &Path) -> Result<(), CliError> {
    let entries = fs::read_dir(input).map_err(|e| CliError::Input(format!("{}: {e}", input.display())))?;
    let mut csvs: Vec<_> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "csv"))
        .collect();
    csvs.sort();
    if csvs.is_empty() {
        return Err(CliError::Input(format!("{}: no CSV files to render", input.display())));
    }
    let mut rec = RunRecord::new("report", out, None)?;
    let mut rendered = 0;
    for path in &csvs {
        let bytes = rec.read(path)?;
        let name = path.file_name().expect("file path").to_string_lossy().into_owned();
        let table = Table::parse(&name, &bytes)?;
        if let Some(svg) = render(&table, &name)? {
            let stem = path.file_stem().expect("file path").to_string_lossy();
            rec.write(&format!("{stem}.svg"), svg.as_bytes())?;
            rendered += 1;
        }
    }
    if rendered == 0 {
        return Err(CliError::Input(format!("{}: no CSV file with a known layout", input.display())));
    }
    rec.finish()
}
