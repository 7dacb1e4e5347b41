//! Linear probing: frozen-encoder representations regressed onto the six
//! traffic variables with ridge regression, scored by held-out R².

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::nn::{encode, forward, init_params, Architecture, ModelParams, Tensor};
use crate::rng::{derive_seed, Xoshiro256};
use crate::scene::TrafficVariables;

/// Fraction of rows in the training split.
pub const TRAIN_FRACTION: f64 = 0.8;
pub const MIN_PROBE_ROWS: usize = 100;

/// Frozen-encoder features: `f(X)` by default, the normalized projector
/// output when `use_embedding` is set.
pub fn extract_representations(
    params: &ModelParams<f32>,
    images: &[Image],
    use_embedding: bool,
) -> Result<Tensor<f64>> {
    if use_embedding {
        let fwd = forward(params, images)?;
        Ok(fwd.embeddings(params.arch().embed_dim).cast())
    } else {
        Ok(encode(params, images)?.cast())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RidgeFit {
    pub weights: Vec<f64>,
    pub intercept: f64,
}

impl RidgeFit {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.intercept + x.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn predict(&self, x: &Tensor<f64>) -> Vec<f64> {
        (0..x.rows()).map(|i| self.predict_row(x.row(i))).collect()
    }
}

/// In-place Cholesky factorization of a symmetric positive-definite
/// row-major `n × n` matrix into its lower factor.
fn cholesky(a: &mut [f64], n: usize) -> Result<()> {
    let scale = (0..n).map(|i| a[i * n + i].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if d <= scale * 1e-12 {
            return Err(Error::SingularSystem);
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    Ok(())
}

fn cholesky_solve(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Ridge regression with an unregularized intercept:
/// `w = (X_cᵀX_c + λI)⁻¹ X_cᵀ y_c`, `b = ȳ − x̄ᵀw`.
pub fn fit_ridge(x: &Tensor<f64>, y: &[f64], lambda: f64) -> Result<RidgeFit> {
    let (n, d) = (x.rows(), x.cols());
    if y.len() != n {
        return Err(Error::ShapeMismatch(format!("{n} rows but {} targets", y.len())));
    }
    if n == 0 {
        return Err(Error::ShapeMismatch("no rows".into()));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Config(format!("ridge lambda must be finite and >= 0, got {lambda}")));
    }
    let mut x_mean = vec![0.0; d];
    for i in 0..n {
        for (m, v) in x_mean.iter_mut().zip(x.row(i)) {
            *m += v;
        }
    }
    x_mean.iter_mut().for_each(|m| *m /= n as f64);
    let y_mean = y.iter().sum::<f64>() / n as f64;
    // targets are standardized for conditioning and the weights rescaled after
    let y_sd = (y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    let y_scale = if y_sd > 0.0 { y_sd } else { 1.0 };

    let mut gram = vec![0.0; d * d];
    let mut rhs = vec![0.0; d];
    let mut xc = vec![0.0; d];
    for i in 0..n {
        for ((c, v), m) in xc.iter_mut().zip(x.row(i)).zip(&x_mean) {
            *c = v - m;
        }
        let yc = (y[i] - y_mean) / y_scale;
        for a in 0..d {
            let xa = xc[a];
            if xa == 0.0 {
                continue;
            }
            rhs[a] += xa * yc;
            for b in 0..=a {
                gram[a * d + b] += xa * xc[b];
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            gram[b * d + a] = gram[a * d + b];
        }
        gram[a * d + a] += lambda;
    }
    cholesky(&mut gram, d)?;
    cholesky_solve(&gram, d, &mut rhs);
    let weights: Vec<f64> = rhs.iter().map(|w| w * y_scale).collect();
    let intercept = y_mean - x_mean.iter().zip(&weights).map(|(m, w)| m * w).sum::<f64>();
    Ok(RidgeFit { weights, intercept })
}

/// Coefficient of determination `1 − SS_res/SS_tot`. Not clamped.
pub fn r_squared(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    if y_true.len() != y_pred.len() || y_true.len() < 2 {
        return Err(Error::ShapeMismatch(format!(
            "r_squared needs equal lengths >= 2, got {} and {}",
            y_true.len(),
            y_pred.len()
        )));
    }
    let mean = y_true.iter().sum::<f64>() / y_true.len() as f64;
    let ss_tot: f64 = y_true.iter().map(|v| (v - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::ConstantTarget);
    }
    let ss_res: f64 = y_true.iter().zip(y_pred).map(|(t, p)| (t - p).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Images with their traffic targets.
#[derive(Debug, Clone)]
pub struct ProbeDataset {
    pub images: Vec<Image>,
    pub targets: Vec<TrafficVariables>,
}

impl ProbeDataset {
    pub fn new(images: Vec<Image>, targets: Vec<TrafficVariables>) -> Result<Self> {
        if images.len() != targets.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} images, {} targets",
                images.len(),
                targets.len()
            )));
        }
        if images.len() < MIN_PROBE_ROWS {
            return Err(Error::Config(format!(
                "probe dataset needs at least {MIN_PROBE_ROWS} rows, got {}",
                images.len()
            )));
        }
        Ok(Self { images, targets })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Disjoint, exhaustive train/test indices drawn from `seed`.
    pub fn split(&self, seed: u64) -> (Vec<usize>, Vec<usize>) {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        Xoshiro256::seed_from_u64(seed).shuffle(&mut idx);
        let cut = (self.len() as f64 * TRAIN_FRACTION).round() as usize;
        let test = idx.split_off(cut);
        (idx, test)
    }
}

/// A checkpoint to probe. The untrained baseline can be re-initialized per
/// run from a seed.
#[derive(Debug, Clone, Copy)]
pub enum ProbeModel<'a> {
    Fixed(&'a ModelParams<f32>),
    Seeded(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeConfig {
    pub runs: usize,
    pub lambda: f64,
    pub seed: u64,
    pub use_embedding: bool,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            runs: 5,
            lambda: 1.0,
            seed: 7,
            use_embedding: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunScore {
    pub variable: String,
    pub model: String,
    pub run: usize,
    pub r2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub variable: String,
    pub model: String,
    pub mean: f64,
    /// Half-width of the 95% Student-t interval; 0 when only one run.
    pub ci95: f64,
    /// Welch two-sided p-value against the `simclr` model.
    pub p_vs_simclr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProbeReport {
    pub runs: Vec<RunScore>,
    pub summary: Vec<SummaryRow>,
}

pub const REFERENCE_MODEL: &str = "simclr";

/// Probe every named model on `runs` fresh splits.
pub fn run_probe(models: &[(&str, ProbeModel<'_>)], data: &ProbeDataset, cfg: &ProbeConfig) -> Result<ProbeReport> {
    if cfg.runs == 0 {
        return Err(Error::Config("probe runs must be >= 1".into()));
    }
    let fixed: Vec<Option<Tensor<f64>>> = models
        .iter()
        .map(|(_, m)| match m {
            ProbeModel::Fixed(p) => extract_representations(p, &data.images, cfg.use_embedding).map(Some),
            ProbeModel::Seeded(_) => Ok(None),
        })
        .collect::<Result<_>>()?;
    let mut runs = Vec::new();
    for run in 0..cfg.runs {
        runs.extend(probe_run_with(models, &fixed, data, cfg, run)?);
    }
    let summary = summarize(&runs);
    Ok(ProbeReport { runs, summary })
}

/// Scores of a single run `run`: its split and its untrained init.
pub fn probe_run(
    models: &[(&str, ProbeModel<'_>)],
    data: &ProbeDataset,
    cfg: &ProbeConfig,
    run: usize,
) -> Result<Vec<RunScore>> {
    probe_run_with(models, &vec![None; models.len()], data, cfg, run)
}

fn probe_run_with(
    models: &[(&str, ProbeModel<'_>)],
    cached: &[Option<Tensor<f64>>],
    data: &ProbeDataset,
    cfg: &ProbeConfig,
    run: usize,
) -> Result<Vec<RunScore>> {
    let targets: Vec<[f64; 6]> = data.targets.iter().map(|t| t.to_array()).collect();
    let (train_idx, test_idx) = data.split(derive_seed(cfg.seed, &[0, run as u64]));
    let mut out = Vec::new();
    for ((name, model), cached) in models.iter().zip(cached) {
        let computed;
        let features = match (cached, model) {
            (Some(f), _) => f,
            (None, ProbeModel::Fixed(p)) => {
                computed = extract_representations(p, &data.images, cfg.use_embedding)?;
                &computed
            }
            (None, ProbeModel::Seeded(s)) => {
                let p: ModelParams<f32> = init_params(Architecture::default(), derive_seed(*s, &[run as u64]));
                computed = extract_representations(&p, &data.images, cfg.use_embedding)?;
                &computed
            }
        };
        let mut x_train = select_rows(features, &train_idx);
        let mut x_test = select_rows(features, &test_idx);
        standardize_columns(&mut x_train, &mut x_test);
        for (v, var) in TrafficVariables::NAMES.iter().enumerate() {
            let y_train: Vec<f64> = train_idx.iter().map(|&i| targets[i][v]).collect();
            let y_test: Vec<f64> = test_idx.iter().map(|&i| targets[i][v]).collect();
            let fit = fit_ridge(&x_train, &y_train, cfg.lambda)?;
            out.push(RunScore {
                variable: var.to_string(),
                model: name.to_string(),
                run,
                r2: r_squared(&y_test, &fit.predict(&x_test))?,
            });
        }
    }
    Ok(out)
}

fn select_rows(x: &Tensor<f64>, idx: &[usize]) -> Tensor<f64> {
    let mut data = Vec::with_capacity(idx.len() * x.cols());
    for &i in idx {
        data.extend_from_slice(x.row(i));
    }
    Tensor::from_vec(&[idx.len(), x.cols()], data).expect("consistent")
}

/// Z-score every column with training-split statistics so the ridge penalty
/// is on a common scale. Constant columns are only centered.
pub fn standardize_columns(train: &mut Tensor<f64>, test: &mut Tensor<f64>) {
    let (n, d) = (train.rows(), train.cols());
    if n == 0 {
        return;
    }
    for j in 0..d {
        let col: Vec<f64> = (0..n).map(|i| train.row(i)[j]).collect();
        let mean = col.iter().sum::<f64>() / n as f64;
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        let inv = if sd > 1e-12 { 1.0 / sd } else { 1.0 };
        for t in [&mut *train, &mut *test] {
            for i in 0..t.rows() {
                let v = &mut t.row_mut(i)[j];
                *v = (*v - mean) * inv;
            }
        }
    }
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = if xs.len() > 1 {
        xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (m, v)
}

/// Half-width of the two-sided 95% Student-t confidence interval.
pub fn ci95_half_width(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let (_, v) = mean_var(xs);
    let t = StudentsT::new(0.0, 1.0, (xs.len() - 1) as f64)
        .expect("dof > 0")
        .inverse_cdf(0.975);
    t * (v / xs.len() as f64).sqrt()
}

/// Two-sided Welch t-test p-value for a difference in means.
pub fn welch_p_value(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() < 2 || b.len() < 2 {
        return None;
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (sa, sb) = (va / a.len() as f64, vb / b.len() as f64);
    let se2 = sa + sb;
    if se2 == 0.0 {
        return Some(if ma == mb { 1.0 } else { 0.0 });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (a.len() as f64 - 1.0) + sb * sb / (b.len() as f64 - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).ok()?;
    Some((2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0))
}

fn ordered_unique<'a>(it: impl Iterator<Item = &'a str>) -> Vec<&'a str> {
    let mut out: Vec<&str> = Vec::new();
    for s in it {
        if !out.contains(&s) {
            out.push(s);
        }
    }
    out
}

pub fn summarize(runs: &[RunScore]) -> Vec<SummaryRow> {
    let variables = ordered_unique(runs.iter().map(|r| r.variable.as_str()));
    let models = ordered_unique(runs.iter().map(|r| r.model.as_str()));
    let scores = |v: &str, m: &str| -> Vec<f64> {
        runs.iter()
            .filter(|r| r.variable == v && r.model == m)
            .map(|r| r.r2)
            .collect()
    };
    let mut out = Vec::new();
    for v in &variables {
        let reference = scores(v, REFERENCE_MODEL);
        for m in &models {
            let s = scores(v, m);
            let (mean, _) = mean_var(&s);
            out.push(SummaryRow {
                variable: v.to_string(),
                model: m.to_string(),
                mean,
                ci95: ci95_half_width(&s),
                p_vs_simclr: if *m == REFERENCE_MODEL || reference.is_empty() {
                    None
                } else {
                    welch_p_value(&s, &reference)
                },
            });
        }
    }
    out
}

impl ProbeReport {
    pub fn variables(&self) -> Vec<&str> {
        ordered_unique(self.summary.iter().map(|r| r.variable.as_str()))
    }

    pub fn models(&self) -> Vec<&str> {
        ordered_unique(self.summary.iter().map(|r| r.model.as_str()))
    }

    pub fn row(&self, variable: &str, model: &str) -> Option<&SummaryRow> {
        self.summary
            .iter()
            .find(|r| r.variable == variable && r.model == model)
    }

    /// Mean R² of `model` averaged over variables.
    pub fn overall_mean(&self, model: &str) -> Option<f64> {
        let v: Vec<f64> = self
            .summary
            .iter()
            .filter(|r| r.model == model)
            .map(|r| r.mean)
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn run_count(&self) -> usize {
        self.runs.iter().map(|r| r.run + 1).max().unwrap_or(0)
    }
}

pub const LONG_HEADER: &str = "variable,model,run,r2";
pub const SUMMARY_HEADER: &str = "variable,model,mean,ci95,p_vs_simclr";

/// Companion paths written next to the long-form CSV.
pub fn report_paths(path: &Path) -> (PathBuf, PathBuf) {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
    let dir = path.parent().unwrap_or(Path::new(""));
    (dir.join(format!("{stem}_summary.csv")), dir.join(format!("{stem}.txt")))
}

pub fn format_long_csv(report: &ProbeReport) -> String {
    let mut s = format!("{LONG_HEADER}\n");
    for r in &report.runs {
        writeln!(s, "{},{},{},{}", r.variable, r.model, r.run, r.r2).unwrap();
    }
    s
}

pub fn format_summary_csv(report: &ProbeReport) -> String {
    let mut s = format!("{SUMMARY_HEADER}\n");
    for r in &report.summary {
        let p = r.p_vs_simclr.map(|p| p.to_string()).unwrap_or_default();
        writeln!(s, "{},{},{},{},{}", r.variable, r.model, r.mean, r.ci95, p).unwrap();
    }
    s
}

/// Text grid: one row per variable, one `mean ± ci` column per model, `*`
/// after the highest mean in each row.
pub fn format_table(report: &ProbeReport) -> String {
    let models = report.models();
    let mut s = format!("{:<12}", "variable");
    for m in &models {
        write!(s, " | {m:>16}").unwrap();
    }
    s.push('\n');
    for v in report.variables() {
        let means: Vec<f64> = models
            .iter()
            .map(|m| report.row(v, m).map_or(f64::NEG_INFINITY, |r| r.mean))
            .collect();
        let best = means
            .iter()
            .enumerate()
            .fold(0, |b, (i, &m)| if m > means[b] { i } else { b });
        write!(s, "{v:<12}").unwrap();
        for (i, m) in models.iter().enumerate() {
            let r = report.row(v, m).expect("summary complete");
            let mark = if i == best { "*" } else { " " };
            let cell = format!("{:.3} ± {:.3}{mark}", r.mean, r.ci95);
            write!(s, " | {cell:>16}").unwrap();
        }
        s.push('\n');
    }
    s
}

/// Write the long-form CSV at `path` plus `<stem>_summary.csv` and `<stem>.txt`.
pub fn render_report(report: &ProbeReport, path: &Path) -> Result<()> {
    let (summary, table) = report_paths(path);
    fs::write(path, format_long_csv(report)).map_err(|e| Error::io(path, e))?;
    fs::write(&summary, format_summary_csv(report)).map_err(|e| Error::io(&summary, e))?;
    fs::write(&table, format_table(report)).map_err(|e| Error::io(&table, e))
}

/// Read back what [`render_report`] wrote.
pub fn read_report(path: &Path) -> Result<ProbeReport> {
    let (summary_path, _) = report_paths(path);
    let read = |p: &Path| fs::read_to_string(p).map_err(|e| Error::io(p, e));
    let rows = |text: &str, p: &Path, header: &str, cols: usize| -> Result<Vec<Vec<String>>> {
        let mut lines = text.lines();
        if lines.next() != Some(header) {
            return Err(Error::parse(p, format!("expected header `{header}`")));
        }
        lines
            .filter(|l| !l.is_empty())
            .map(|l| {
                let c: Vec<String> = l.split(',').map(String::from).collect();
                if c.len() != cols {
                    return Err(Error::parse(p, format!("expected {cols} columns in `{l}`")));
                }
                Ok(c)
            })
            .collect()
    };
    let num = |s: &str, p: &Path| -> Result<f64> { s.parse().map_err(|_| Error::parse(p, format!("bad number `{s}`"))) };

    let runs = rows(&read(path)?, path, LONG_HEADER, 4)?
        .into_iter()
        .map(|c| {
            Ok(RunScore {
                variable: c[0].clone(),
                model: c[1].clone(),
                run: c[2].parse().map_err(|_| Error::parse(path, format!("bad run `{}`", c[2])))?,
                r2: num(&c[3], path)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let sp = summary_path.as_path();
    let summary = rows(&read(sp)?, sp, SUMMARY_HEADER, 5)?
        .into_iter()
        .map(|c| {
            Ok(SummaryRow {
                variable: c[0].clone(),
                model: c[1].clone(),
                mean: num(&c[2], sp)?,
                ci95: num(&c[3], sp)?,
                p_vs_simclr: if c[4].is_empty() { None } else { Some(num(&c[4], sp)?) },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ProbeReport { runs, summary })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: usize, cols: usize, seed: u64) -> Tensor<f64> {
        let mut r = Xoshiro256::seed_from_u64(seed);
        Tensor::from_vec(&[rows, cols], (0..rows * cols).map(|_| r.normal()).collect()).unwrap()
    }

    #[test]
    fn exact_linear_data_is_recovered() {
        let x = matrix(40, 5, 1);
        let w = [0.5, -1.0, 2.0, 0.0, 3.5];
        let y: Vec<f64> = (0..40)
            .map(|i| 1.25 + x.row(i).iter().zip(&w).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        let fit = fit_ridge(&x, &y, 0.0).unwrap();
        for (a, b) in fit.weights.iter().zip(&w) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!((fit.intercept - 1.25).abs() < 1e-9);
        assert!((r_squared(&y, &fit.predict(&x)).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn huge_lambda_predicts_the_mean() {
        let x = matrix(30, 4, 2);
        let y: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let fit = fit_ridge(&x, &y, 1e9).unwrap();
        assert!(fit.weights.iter().all(|w| w.abs() < 1e-6));
        let mean = y.iter().sum::<f64>() / 30.0;
        assert!(fit.predict(&x).iter().all(|p| (p - mean).abs() < 1e-3));
    }

    #[test]
    fn rank_deficient_without_ridge_is_singular() {
        let mut x = matrix(20, 3, 3);
        for i in 0..20 {
            let v = x.row(i)[0];
            x.row_mut(i)[2] = 2.0 * v;
        }
        let y: Vec<f64> = (0..20).map(|i| i as f64).collect();
        assert!(matches!(fit_ridge(&x, &y, 0.0), Err(Error::SingularSystem)));
        assert!(fit_ridge(&x, &y, 0.5).is_ok());
    }

    #[test]
    fn r_squared_examples() {
        assert_eq!(r_squared(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert_eq!(r_squared(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0]).unwrap(), 0.0);
        assert_eq!(r_squared(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap(), 0.5);
        assert!(r_squared(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() < 0.0);
        assert!(matches!(r_squared(&[2.0, 2.0], &[1.0, 2.0]), Err(Error::ConstantTarget)));
    }

    #[test]
    fn t_quantile_for_five_runs() {
        let xs = [0.0, 1.0, 2.0, 3.0, 4.0];
        // sd = sqrt(2.5), t(0.975, 4) = 2.776
        let expected = 2.776 * (2.5f64 / 5.0).sqrt();
        assert!((ci95_half_width(&xs) - expected).abs() < 1e-3);
        assert_eq!(ci95_half_width(&[0.3]), 0.0);
    }

    #[test]
    fn welch_reference_value() {
        // scipy.stats.ttest_ind(a, b, equal_var=False).pvalue = 0.0117...
        let a = [0.60, 0.61, 0.59, 0.62, 0.60];
        let b = [0.50, 0.53, 0.49, 0.56, 0.51];
        let p = welch_p_value(&a, &b).unwrap();
        assert!(p < 0.01, "{p}");
        assert_eq!(welch_p_value(&a, &a), Some(1.0));
    }

    #[test]
    fn split_is_disjoint_and_exhaustive() {
        let ds = ProbeDataset::new(vec![Image::new(2, 2); 100], vec![TrafficVariables::from_array([0.0; 6]); 100]).unwrap();
        let (tr, te) = ds.split(4);
        assert_eq!(tr.len(), 80);
        assert_eq!(te.len(), 20);
        let mut all: Vec<usize> = tr.iter().chain(&te).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn report_round_trip_and_markers() {
        let mut runs = Vec::new();
        for (vi, v) in TrafficVariables::NAMES.iter().enumerate() {
            for (mi, m) in ["untrained", "simclr", "gameclr"].iter().enumerate() {
                for run in 0..3 {
                    runs.push(RunScore {
                        variable: v.to_string(),
                        model: m.to_string(),
                        run,
                        r2: 0.1 * mi as f64 + 0.01 * run as f64 + 0.001 * vi as f64 + 1.0 / 3.0,
                    });
                }
            }
        }
        let report = ProbeReport {
            summary: summarize(&runs),
            runs,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.csv");
        render_report(&report, &path).unwrap();
        assert_eq!(read_report(&path).unwrap(), report);
        let table = fs::read_to_string(report_paths(&path).1).unwrap();
        assert_eq!(table.matches('*').count(), 6);

        render_report(&ProbeReport::default(), &path).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), format!("{LONG_HEADER}\n"));
    }
}
