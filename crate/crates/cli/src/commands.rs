use std::path::Path;

use rayon::prelude::*;

use logitlab::forge::{self, ManipulationKind, ManipulationSpec};
use logitlab::mftma::{self, ManifoldSet};
use logitlab::response::{self, ExperimentConfig};
use logitlab::stats;
use logitlab::store::{self, validate_bundle, Format, LabelVector, LogitMatrix, RobustFlags};
use logitlab::surrogate::{self, Branch, Case, GapShiftInput, MeanFieldParams, SurrogateSpec};

use crate::args::*;
use crate::manifest::{num, opt, RunRecord};
use crate::{report, CliError};

pub fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Stats(a) => stats_cmd(a),
        Command::Overlap(a) => overlap_cmd(a),
        Command::Manipulate(a) => manipulate_cmd(a),
        Command::Analytic(a) => analytic_cmd(a),
        Command::Response(a) => response_cmd(a),
        Command::Mftma(a) => mftma_cmd(a),
        Command::Report(a) => report::emit(&a.input, &a.out),
    }
}

fn at(path: &Path, e: logitlab::Error) -> CliError {
    match CliError::from(e) {
        CliError::Input(m) => CliError::Input(format!("{}: {m}", path.display())),
        other => other,
    }
}

fn format_name(f: FormatArg) -> &'static str {
    match f {
        FormatArg::Text => "text",
        FormatArg::Binary => "binary",
    }
}

fn load_logits(rec: &mut RunRecord, path: &Path, format: FormatArg) -> Result<LogitMatrix, CliError> {
    let bytes = rec.read(path)?;
    let parsed = match Format::from(format) {
        Format::Text => match std::str::from_utf8(&bytes) {
            Ok(text) => store::parse_text(text),
            Err(e) => return Err(CliError::Input(format!("{}: not UTF-8 text: {e}", path.display()))),
        },
        Format::Binary => store::decode_binary(&bytes),
    };
    parsed.map_err(|e| at(path, e))
}

fn load_labels(rec: &mut RunRecord, path: &Path) -> Result<LabelVector, CliError> {
    rec.read(path)?;
    store::load_labels(path).map_err(|e| at(path, e))
}

fn load_flags(rec: &mut RunRecord, path: &Path) -> Result<RobustFlags, CliError> {
    rec.read(path)?;
    store::load_flags(path).map_err(|e| at(path, e))
}

fn histogram_rows(h: &[stats::HistogramBin]) -> Vec<Vec<String>> {
    h.iter()
        .map(|b| vec![num(b.left), num(b.right), b.count.to_string()])
        .collect()
}

/// `n` evenly spaced points on `[lo, hi]`, endpoints included.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>, CliError> {
    if n == 0 || !lo.is_finite() || !hi.is_finite() || hi < lo {
        return Err(CliError::Usage(format!("invalid grid [{lo}, {hi}] with {n} points")));
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    let step = (hi - lo) / (n - 1) as f64;
    Ok((0..n).map(|i| if i + 1 == n { hi } else { lo + step * i as f64 }).collect())
}

fn stats_cmd(a: StatsArgs) -> Result<(), CliError> {
    let mut rec = RunRecord::new("stats", &a.output.out, None)?;
    rec.set("bin_width", a.bin_width);
    rec.set("gap_bin_width", a.gap_bin_width);
    rec.set("min_count", a.min_count);
    rec.set("format", format_name(a.output.format));

    let logits = load_logits(&mut rec, &a.logits, a.output.format)?;
    let labels = a.labels.as_deref().map(|p| load_labels(&mut rec, p)).transpose()?;
    let flags = a.flags.as_deref().map(|p| load_flags(&mut rec, p)).transpose()?;

    let maxima = stats::max_logit_distribution(&logits, a.bin_width)?;
    let gaps = stats::logit_gaps(&logits);
    let gap_summary = stats::summarize(&gaps, a.bin_width)?;

    rec.write_csv("max_logit.csv", &["left", "right", "count"], &histogram_rows(&maxima.histogram))?;
    let gap_rows: Vec<Vec<String>> = gaps.iter().enumerate().map(|(i, g)| vec![i.to_string(), num(*g)]).collect();
    rec.write_csv("gaps.csv", &["sample", "gap"], &gap_rows)?;
    rec.write_csv("gap_hist.csv", &["left", "right", "count"], &histogram_rows(&gap_summary.histogram))?;
    let summary_rows: Vec<Vec<String>> = [("max_logit", &maxima), ("gap", &gap_summary)]
        .iter()
        .map(|(name, s)| vec![name.to_string(), s.n.to_string(), num(s.mean), num(s.std), num(s.skewness)])
        .collect();
    rec.write_csv("summary.csv", &["statistic", "n", "mean", "std", "skewness"], &summary_rows)?;

    if let Some(labels) = &labels {
        let bundle = validate_bundle(logits.clone(), labels.clone(), None)?;
        let profile = stats::error_prediction_profile(&bundle)?;
        let rows: Vec<Vec<String>> = profile
            .fractions
            .iter()
            .enumerate()
            .map(|(k, f)| vec![(k + 1).to_string(), num(*f)])
            .collect();
        rec.write_csv("error_profile.csv", &["rank", "fraction"], &rows)?;
        rec.set("n_errors", profile.n_errors);
    }
    if let Some(flags) = flags {
        // The curve only reads gaps and flags; labels are placeholders when absent.
        let labels = labels.unwrap_or_else(|| LabelVector(vec![0; logits.rows()]));
        let bundle = validate_bundle(logits, labels, Some(flags))?;
        let curve = stats::gap_accuracy_curve(&bundle, a.gap_bin_width, a.min_count)?;
        let rows: Vec<Vec<String>> = curve
            .bins
            .iter()
            .map(|b| vec![num(b.gap_low), num(b.gap_high), b.n_samples.to_string(), opt(b.adversarial_accuracy)])
            .collect();
        rec.write_csv("gap_accuracy.csv", &["gap_low", "gap_high", "n_samples", "adversarial_accuracy"], &rows)?;
    }
    rec.finish()
}

fn overlap_cmd(a: OverlapArgs) -> Result<(), CliError> {
    if a.logits.len() != 2 {
        return Err(CliError::Usage(format!("overlap takes --logits exactly twice, got {}", a.logits.len())));
    }
    if a.labels.is_some() && a.seed.is_none() {
        return Err(CliError::Usage("--seed is required when --labels is given".into()));
    }
    let mut rec = RunRecord::new("overlap", &a.output.out, a.seed)?;
    rec.set("format", format_name(a.output.format));
    rec.set("threshold", a.threshold);
    let m1 = load_logits(&mut rec, &a.logits[0], a.output.format)?;
    let m2 = load_logits(&mut rec, &a.logits[1], a.output.format)?;
    let k_max = a.k_max.unwrap_or(m1.cols());
    rec.set("k_max", k_max);

    let curve_rows = |c: &stats::OverlapCurve| -> Vec<Vec<String>> {
        c.k_values
            .iter()
            .zip(&c.ao_at_k)
            .zip(&c.agreement_at_k)
            .map(|((k, ao), ag)| vec![k.to_string(), num(*ao), num(*ag)])
            .collect()
    };
    let curve = stats::average_overlap(&m1, &m2, k_max)?;
    rec.write_csv("overlap.csv", &["k", "ao", "agreement"], &curve_rows(&curve))?;

    if let (Some(path), Some(seed)) = (a.labels.as_deref(), a.seed) {
        let labels = load_labels(&mut rec, path)?;
        let b1 = validate_bundle(m1.clone(), labels.clone(), None)?;
        let b2 = validate_bundle(m2, labels, None)?;
        let permuted = stats::within_class_permuted_overlap(&b1, &b2, k_max, seed)?;
        rec.write_csv("permuted_overlap.csv", &["k", "ao", "agreement"], &curve_rows(&permuted))?;

        let mut rows = Vec::new();
        for class in 0..b1.n_classes() {
            if !b1.labels.as_slice().contains(&class) {
                continue;
            }
            let r1 = stats::confidence_ranks(&b1, class)?;
            let r2 = stats::confidence_ranks(&b2, class)?;
            let d = stats::rank_divergence(&r1, &r2, a.threshold)?;
            rows.push(vec![class.to_string(), r1.sample_ids.len().to_string(), num(d)]);
        }
        rec.write_csv("rank_divergence.csv", &["class", "n_samples", "divergence"], &rows)?;
    }
    if let Some(seed_row) = a.seed_row {
        rec.set("seed_row", seed_row);
        rec.set("neighbors", a.neighbors);
        let nb = stats::cosine_neighbors(&m1, seed_row, a.neighbors)?;
        let rows: Vec<Vec<String>> = nb
            .iter()
            .enumerate()
            .map(|(r, (row, cos))| vec![(r + 1).to_string(), row.to_string(), num(*cos)])
            .collect();
        rec.write_csv("neighbors.csv", &["rank", "row", "cosine"], &rows)?;
    }
    rec.finish()
}

fn manipulate_cmd(a: ManipulateArgs) -> Result<(), CliError> {
    let kind = match a.kind {
        KindArg::FixKPermute => ManipulationKind::FixKPermute,
        KindArg::FixKAverage => ManipulationKind::FixKAverage,
        KindArg::CorrectFix1 => ManipulationKind::CorrectFix1,
        KindArg::Hybrid => ManipulationKind::Hybrid,
    };
    let needs_k = matches!(kind, ManipulationKind::FixKPermute | ManipulationKind::FixKAverage);
    if needs_k && a.k.is_none() {
        return Err(CliError::Usage(format!("--k is required for {kind}")));
    }
    if kind == ManipulationKind::FixKPermute && a.seed.is_none() {
        return Err(CliError::Usage("--seed is required for fix_k_permute".into()));
    }
    if kind == ManipulationKind::CorrectFix1 && a.labels.is_none() {
        return Err(CliError::Usage("--labels is required for correct_fix_1".into()));
    }
    let expected = if kind == ManipulationKind::Hybrid { 2 } else { 1 };
    if a.logits.len() != expected {
        return Err(CliError::Usage(format!(
            "{kind} takes --logits {expected} time(s), got {}",
            a.logits.len()
        )));
    }

    let seed = if kind == ManipulationKind::FixKPermute { a.seed } else { None };
    let mut rec = RunRecord::new("manipulate", &a.output.out, seed)?;
    rec.set("kind", kind.to_string());
    rec.set("format", format_name(a.output.format));
    if let Some(k) = a.k.filter(|_| needs_k) {
        rec.set("k", k);
    }
    let source = load_logits(&mut rec, &a.logits[0], a.output.format)?;
    let other = match a.logits.get(1) {
        Some(p) => Some(load_logits(&mut rec, p, a.output.format)?),
        None => None,
    };
    let labels = match (kind, a.labels.as_deref()) {
        (ManipulationKind::CorrectFix1, Some(p)) => Some(load_labels(&mut rec, p)?),
        _ => None,
    };
    let spec = ManipulationSpec {
        kind,
        k: a.k.unwrap_or(0),
        seed: seed.unwrap_or(0),
    };
    let out = forge::apply(&spec, &source, labels.as_ref(), other.as_ref())?;
    let (name, bytes) = match Format::from(a.output.format) {
        Format::Text => ("targets.txt", store::encode_text(&out).into_bytes()),
        Format::Binary => ("targets.lgt", store::encode_binary(&out)),
    };
    rec.write(name, &bytes)?;
    rec.finish()
}

fn analytic_cmd(a: AnalyticArgs) -> Result<(), CliError> {
    if !(a.surface || a.thresholds || a.shrinkage) {
        return Err(CliError::Usage("select at least one of --surface, --thresholds, --shrinkage".into()));
    }
    let branch = Branch::from(a.branch);
    let mut rec = RunRecord::new("analytic", &a.output.out, None)?;
    rec.set("branch", branch.to_string());
    rec.set("n_classes", a.n_classes);
    rec.set("error_rate", a.error_rate);
    rec.set("beta_min", a.beta_min);
    rec.set("beta_max", a.beta_max);
    rec.set("grid_points", a.grid_points);
    let grid = linspace(a.beta_min, a.beta_max, a.grid_points)?;

    if a.surface {
        let s = surrogate::mean_field_loss_surface(&grid, &grid, a.n_classes, a.error_rate, branch)?;
        rec.write_csv("loss_surface.csv", &["beta_correct", "beta_wrong", "loss"], &surface_rows(&s))?;
    }
    if a.thresholds {
        if a.n_max < 3 {
            return Err(CliError::Usage("--n-max must be at least 3".into()));
        }
        rec.set("n_max", a.n_max);
        let rows = (3..=a.n_max)
            .into_par_iter()
            .map(|n| {
                let c = surrogate::admissibility_threshold(n, Case::Correct, branch)?;
                let w = surrogate::admissibility_threshold(n, Case::Misclassified, branch)?;
                Ok(vec![n.to_string(), num(c), num(w)])
            })
            .collect::<Result<Vec<_>, logitlab::Error>>()?;
        rec.write_csv("thresholds.csv", &["n_classes", "threshold_correct", "threshold_wrong"], &rows)?;
    }
    if a.shrinkage {
        rec.set("epsilon", a.epsilon);
        rec.set("omega_correct", a.omega_correct);
        rec.set("omega_wrong", a.omega_wrong);
        let mut rows = Vec::new();
        for &bc in &grid {
            for &bw in &grid {
                let input = GapShiftInput {
                    params: MeanFieldParams { beta_correct: bc, beta_wrong: bw, n_classes: a.n_classes, error_rate: a.error_rate },
                    epsilon: a.epsilon,
                    omega_correct: a.omega_correct,
                    omega_wrong: a.omega_wrong,
                    branch,
                };
                let mut row = vec![num(bc), num(bw)];
                if cell_admissible(a.n_classes, bc, bw, branch)? {
                    let t = surrogate::gap_shrinkage_terms(&input)?;
                    row.extend([num(t.correct), num(t.wrong), num(t.cross), num(t.total())]);
                } else {
                    row.extend(std::iter::repeat_n(String::new(), 4));
                }
                rows.push(row);
            }
        }
        rec.write_csv(
            "shrinkage.csv",
            &["beta_correct", "beta_wrong", "correct", "wrong", "cross", "total"],
            &rows,
        )?;
    }
    rec.finish()
}

pub fn surface_rows(s: &surrogate::LossSurface) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for (i, bc) in s.beta_correct.iter().enumerate() {
        for (j, bw) in s.beta_wrong.iter().enumerate() {
            rows.push(vec![num(*bc), num(*bw), opt(s.values[i][j])]);
        }
    }
    rows
}

fn cell_admissible(n: usize, bc: f64, bw: f64, branch: Branch) -> Result<bool, logitlab::Error> {
    let spec = |beta, case| SurrogateSpec { n_classes: n, beta, case, branch };
    Ok(surrogate::admissible(&spec(bc, Case::Correct))? && surrogate::admissible(&spec(bw, Case::Misclassified))?)
}

fn response_cmd(a: ResponseArgs) -> Result<(), CliError> {
    let branch = Branch::from(a.branch);
    let mut rec = RunRecord::new("response", &a.output.out, Some(a.seed))?;
    rec.set("n_data", a.n_data);
    rec.set("n_feats", a.n_feats);
    rec.set("n_classes", a.n_classes);
    rec.set("error_rate", a.error_rate);
    rec.set("epsilon", a.epsilon);
    rec.set("sigma0", a.sigma0);
    rec.set("c", a.c);
    rec.set("branch", branch.to_string());
    rec.set("beta_min", a.beta_min);
    rec.set("beta_max", a.beta_max);
    rec.set("grid_points", a.grid_points);
    let grid = linspace(a.beta_min, a.beta_max, a.grid_points)?;
    let cfg = ExperimentConfig {
        n_data: a.n_data,
        n_feats: a.n_feats,
        epsilon: a.epsilon,
        sigma0: a.sigma0,
        c: a.c,
        seed: a.seed,
        branch,
    };
    let mut cells = Vec::new();
    for &bc in &grid {
        for &bw in &grid {
            if cell_admissible(a.n_classes, bc, bw, branch)? {
                cells.push((bc, bw));
            }
        }
    }
    if cells.is_empty() {
        return Err(CliError::Numeric("no admissible cell on the beta grid".into()));
    }
    let rows = cells
        .par_iter()
        .map(|&(bc, bw)| {
            let params = MeanFieldParams { beta_correct: bc, beta_wrong: bw, n_classes: a.n_classes, error_rate: a.error_rate };
            let r = response::gap_shift_experiment(&params, &cfg)?;
            Ok(vec![
                num(bc),
                num(bw),
                num(r.predicted),
                num(r.measured_mean),
                num(r.measured_std),
                num(r.relative_change),
                r.n_correct.to_string(),
                r.n_wrong.to_string(),
                num(r.omega_correct),
                num(r.omega_wrong),
                num(r.lambda_star),
            ])
        })
        .collect::<Result<Vec<_>, logitlab::Error>>()?;
    rec.write_csv(
        "gap_shift.csv",
        &[
            "beta_correct",
            "beta_wrong",
            "predicted",
            "measured_mean",
            "measured_std",
            "relative_change",
            "n_correct",
            "n_wrong",
            "omega_correct",
            "omega_wrong",
            "lambda_star",
        ],
        &rows,
    )?;
    rec.finish()
}

fn mftma_cmd(a: MftmaArgs) -> Result<(), CliError> {
    let mut rec = RunRecord::new("mftma", &a.output.out, Some(a.seed))?;
    rec.set("n_samples", a.n_samples);
    rec.set("kappa", a.kappa);
    rec.set("project", a.project);
    rec.set("dichotomies", a.dichotomies);
    rec.set("format", format_name(a.output.format));

    let listing = rec.read(&a.manifest)?;
    let listing = String::from_utf8(listing)
        .map_err(|e| CliError::Input(format!("{}: not UTF-8 text: {e}", a.manifest.display())))?;
    let base = a.manifest.parent().unwrap_or(Path::new("."));
    for line in listing.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
        rec.read(&base.join(line))?;
    }
    let mut set = ManifoldSet::load_manifest(&a.manifest, Format::from(a.output.format))
        .map_err(|e| at(&a.manifest, e))?;
    if a.project {
        set = mftma::project_null_centers(&set)?;
    }
    let res = mftma::mftma_capacity(&set, a.n_samples, a.kappa, a.seed)?;
    let empirical = if a.dichotomies > 0 {
        Some(mftma::empirical_capacity(&set, a.dichotomies, a.seed)?.capacity)
    } else {
        None
    };
    rec.write_csv(
        "mftma.csv",
        &[
            "n_manifolds",
            "ambient_dim",
            "alpha_mftma",
            "alpha_inv_std_err",
            "radius",
            "dimension",
            "center_correlation",
            "alpha_ball",
            "empirical_capacity",
        ],
        &[vec![
            set.n_manifolds().to_string(),
            set.ambient_dim().to_string(),
            num(res.alpha_mftma),
            num(res.alpha_inv_std_err),
            num(res.radius),
            num(res.dimension),
            num(res.center_correlation),
            opt(mftma::alpha_ball(res.radius, res.dimension).ok()),
            opt(empirical),
        ]],
    )?;
    let rows: Vec<Vec<String>> = res
        .per_manifold
        .iter()
        .enumerate()
        .map(|(i, m)| {
            vec![
                i.to_string(),
                num(m.alpha_inv),
                num(m.radius),
                num(m.dimension),
                m.subspace_dim.to_string(),
                m.n_anchored.to_string(),
            ]
        })
        .collect();
    rec.write_csv(
        "mftma_manifolds.csv",
        &["manifold", "alpha_inv", "radius", "dimension", "subspace_dim", "n_anchored"],
        &rows,
    )?;
    rec.finish()
}
