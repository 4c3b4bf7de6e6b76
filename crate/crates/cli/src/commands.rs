use std::collections::BTreeMap;
use std::path::Path;

use wermlab::dgp::{DgpSpec, Latent};
use wermlab::diagnostics::rates::median;
use wermlab::diagnostics::{
    bernstein_probe, bernstein_probe_monte_carlo, bernstein_table, lowerbound_experiment, rate_experiment,
    BernsteinCheckSpec, BernsteinRow, RateFit,
};
use wermlab::exec::map_indexed;
use wermlab::models::{FnPredictor, Hypothesis, LossKind, Predictor};
use wermlab::pipeline::{two_step, MarginConvention, Task, WeightKind, WeightModel};
use wermlab::risk::{random_thresholds, sweep, SweepOptions};
use wermlab::rng::derive_seed;
use wermlab::table::{ProvenanceTag, Table};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::svg::{write_svg_curve, Axes, Series};

pub const SWEEP_CELLS: &str = "sweep.csv";
pub const SWEEP_AGG: &str = "sweep_agg.csv";
pub const SWEEP_SVG: &str = "sweep.svg";
pub const RATES_CSV: &str = "rates.csv";
pub const RATES_SVG: &str = "rates.svg";

fn tag(cfg: &ExperimentConfig) -> ProvenanceTag {
    ProvenanceTag::new(cfg.digest(), cfg.base_seed)
}

fn prepare_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Validation(format!("output_dir {} is not writable: {e}", dir.display())))
}

fn seeds(cfg: &ExperimentConfig, default: usize) -> Result<Vec<u64>, CliError> {
    let n = cfg.eval.n_seeds.unwrap_or(default);
    if n == 0 {
        return Err(CliError::Validation("n_seeds must be >= 1".into()));
    }
    Ok((0..n as u64).map(|k| derive_seed(cfg.base_seed, k)).collect())
}

fn task_for(dgp: &DgpSpec) -> Task {
    match dgp {
        DgpSpec::Regression(_) => Task::Regression,
        _ => Task::Classification,
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

pub fn gen(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let dgp = cfg.dgp()?;
    let n = cfg.eval.n.ok_or_else(|| CliError::Validation("gen needs eval.n".into()))?;
    if n == 0 {
        return Err(CliError::Validation("gen needs eval.n >= 1".into()));
    }
    let dir = cfg.output_dir()?;
    let data = dgp.sample(n, cfg.base_seed)?;
    let mut header: Vec<String> = (0..data.dim()).map(|j| format!("x{j}")).collect();
    header.extend(["y".to_string(), "latent".to_string()]);
    let mut t = Table { header, rows: Vec::with_capacity(n) };
    for i in 0..data.len() {
        let mut row: Vec<String> = data.x(i).iter().map(f64::to_string).collect();
        row.push(data.y(i).to_string());
        row.push(data.latent_at(i).map(Latent::to_string).unwrap_or_default());
        t.push(row);
    }
    prepare_dir(dir)?;
    let path = dir.join("dataset.csv");
    t.write(&path, &tag(cfg))?;
    println!("gen: wrote {n} rows to {}", path.display());
    Ok(())
}

pub fn fit(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let dgp = cfg.dgp()?;
    cfg.fit.validate()?;
    let dir = cfg.output_dir()?;
    let n = cfg.eval.n_train.unwrap_or(SweepOptions::default().n_train);
    let train = dgp.sample(n, derive_seed(cfg.base_seed, 0))?;
    let fit_cfg = wermlab::pipeline::FitConfig { seed: derive_seed(cfg.base_seed, 3), ..cfg.fit.clone() };
    let result = two_step(&train, task_for(dgp), &fit_cfg)?;
    prepare_dir(dir)?;
    write_json(&dir.join("model.json"), &result)?;
    let mut provenance = result.provenance_json();
    provenance["config_digest"] = format!("{:016x}", cfg.digest()).into();
    provenance["base_seed"] = cfg.base_seed.into();
    provenance["dgp"] = serde_json::to_value(dgp).expect("spec serializes");
    write_json(&dir.join("provenance.json"), &provenance)?;
    let l = result.final_losses;
    println!("fit: final losses erm={} weight={} werm={}", l.erm, l.weight, l.werm);
    Ok(())
}

pub fn run_sweep(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let dgp = cfg.dgp()?;
    let dir = cfg.output_dir()?;
    let opts = SweepOptions {
        n_train: cfg.eval.n_train.unwrap_or(SweepOptions::default().n_train),
        n_val: cfg.eval.n_val,
        n_test: cfg.eval.n_test,
        selection: cfg.eval.selection(),
        execution: cfg.fit.execution,
    };
    let curve = sweep(dgp, &cfg.eval.alphas(), &seeds(cfg, 10)?, &cfg.fit, &opts)?;
    prepare_dir(dir)?;
    let tag = tag(cfg);
    curve.cells_table().write(&dir.join(SWEEP_CELLS), &tag)?;
    let agg = curve.aggregate_table();
    agg.write(&dir.join(SWEEP_AGG), &tag)?;
    sweep_svg(&agg, &tag.line(), &dir.join(SWEEP_SVG))?;
    for p in &curve.aggregate {
        println!(
            "sweep: alpha={} erm={:.6}±{:.6} werm={:.6}±{:.6} seeds={}",
            p.alpha, p.mean_erm, p.std_erm, p.mean_werm, p.std_werm, p.count
        );
    }
    Ok(())
}

fn parse_cell(t: &Table, row: &[String], name: &str) -> Result<Option<f64>, CliError> {
    let col = t.column(name).ok_or_else(|| CliError::Validation(format!("missing column {name}")))?;
    let cell = &row[col];
    if cell.is_empty() {
        return Ok(None);
    }
    cell.parse().map(Some).map_err(|_| CliError::Validation(format!("column {name}: cannot parse '{cell}'")))
}

/// Mean lines with one-standard-deviation bands from `sweep_agg.csv`.
pub fn sweep_svg(agg: &Table, provenance: &str, path: &Path) -> Result<(), CliError> {
    let mut series = Vec::new();
    for (label, mean, std) in [("ERM", "mean_erm", "std_erm"), ("wERM", "mean_werm", "std_werm")] {
        let mut points = Vec::new();
        let mut band = Vec::new();
        for row in &agg.rows {
            let (Some(a), Some(m)) = (parse_cell(agg, row, "alpha")?, parse_cell(agg, row, mean)?) else {
                continue;
            };
            let s = parse_cell(agg, row, std)?.unwrap_or(0.0);
            points.push((a, m));
            band.push((m - s, m + s));
        }
        series.push(Series { label: label.into(), points, band: Some(band) });
    }
    let axes = Axes { title: "Selective risk vs coverage", x_label: "coverage alpha", y_label: "selective risk" };
    write_svg_curve(&series, &axes, Some(provenance), path)
}

struct Probe {
    id: String,
    predictor: Box<dyn Predictor>,
    /// Set when the probe can be enumerated exactly.
    exact: Option<Hypothesis>,
    weight: WeightModel,
    loss: LossKind,
    b: f64,
}

fn bernstein_probes(cfg: &ExperimentConfig, dgp: &DgpSpec) -> Vec<Probe> {
    let mut probes = Vec::new();
    match dgp {
        DgpSpec::Basis(spec) => {
            let omega = WeightModel::oracle_margin(dgp.clone(), MarginConvention::Raw);
            for k in 0..cfg.eval.n_thresholds.unwrap_or(1000) {
                let h =
                    Hypothesis::Threshold(random_thresholds(spec.d, -2.5, 2.5, derive_seed(cfg.base_seed, k as u64)));
                let mut push = |tail: &str, weight: WeightModel, b: f64| {
                    probes.push(Probe {
                        id: format!("t{k}/{tail}"),
                        predictor: Box::new(h.clone()),
                        exact: Some(h.clone()),
                        weight,
                        loss: LossKind::ZeroOne,
                        b,
                    })
                };
                push("omega_weighted", omega.clone(), 1.0);
                // With gamma = 0 the unweighted claim has no finite multiplier.
                if spec.gamma > 0.0 {
                    push("unweighted", WeightModel::constant(1.0), 1.0 / spec.gamma);
                }
            }
        }
        DgpSpec::Regression(spec) => {
            let c3 = spec.min_variance();
            let c = 1.0 / (2.0 * (1.0 + 4.0 / c3));
            let precision = WeightModel::new(WeightKind::OraclePrecision { dgp: dgp.clone() }).with_scale(c);
            for &s in cfg.eval.shifts.as_deref().unwrap_or(&[0.1, 0.5, 1.0]) {
                let f = move |x: &[f64]| x[0] * x[0].sin() + s;
                let mut push = |tail: &str, weight: WeightModel, b: f64| {
                    probes.push(Probe {
                        id: format!("shift={s}/{tail}"),
                        predictor: Box::new(FnPredictor::new(1, f)),
                        exact: None,
                        weight,
                        loss: LossKind::Squared,
                        b,
                    })
                };
                push("unweighted", WeightModel::constant(1.0), 8.0 * spec.max_variance());
                push("precision_weighted", precision.clone(), 1.0);
            }
        }
        DgpSpec::Classification(spec) => {
            let gamma = 1.0 - 2.0 * spec.p_flip;
            let omega = WeightModel::oracle_margin(dgp.clone(), MarginConvention::Raw);
            for &s in cfg.eval.shifts.as_deref().unwrap_or(&[-1.0, 0.0, 1.0]) {
                let f = move |x: &[f64]| x[0] - s;
                let mut push = |tail: &str, weight: WeightModel, b: f64| {
                    probes.push(Probe {
                        id: format!("boundary={s}/{tail}"),
                        predictor: Box::new(FnPredictor::new(2, f)),
                        exact: None,
                        weight,
                        loss: LossKind::ZeroOne,
                        b,
                    })
                };
                push("omega_weighted", omega.clone(), 1.0);
                push("unweighted", WeightModel::constant(1.0), 1.0 / gamma);
            }
        }
    }
    probes
}

pub fn bernstein(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let dgp = cfg.dgp()?;
    let dir = cfg.output_dir()?;
    let n_mc = cfg.eval.n_mc.unwrap_or(100_000);
    let name = match dgp {
        DgpSpec::Basis(_) => "basis",
        DgpSpec::Regression(_) => "regression",
        DgpSpec::Classification(_) => "classification",
    };
    let probes = bernstein_probes(cfg, dgp);
    if probes.is_empty() {
        return Err(CliError::Validation("no Bernstein probes to run".into()));
    }
    let mc_base = derive_seed(cfg.base_seed, u64::MAX);
    let reports = map_indexed(probes.len(), cfg.fit.execution, |k| {
        let p = &probes[k];
        let spec = BernsteinCheckSpec::with_b(p.b);
        let seed = derive_seed(mc_base, k as u64);
        match &p.exact {
            Some(h) => bernstein_probe(dgp, h, &p.weight, p.loss, &spec, n_mc, seed),
            None => bernstein_probe_monte_carlo(dgp, p.predictor.as_ref(), &p.weight, p.loss, &spec, n_mc, seed),
        }
    });
    let mut rows = Vec::with_capacity(probes.len());
    for (p, r) in probes.iter().zip(reports) {
        rows.push(BernsteinRow { dgp: name.into(), hypothesis_id: p.id.clone(), report: r? });
    }
    prepare_dir(dir)?;
    bernstein_table(&rows).write(&dir.join("bernstein.csv"), &tag(cfg))?;
    let mut groups: BTreeMap<&str, (usize, usize, f64)> = BTreeMap::new();
    for r in &rows {
        let kind = r.hypothesis_id.rsplit('/').next().unwrap_or("");
        let g = groups.entry(kind).or_insert((0, 0, f64::INFINITY));
        g.0 += usize::from(r.report.pass);
        g.1 += 1;
        g.2 = g.2.min(r.report.slack);
    }
    for (kind, (pass, total, slack)) in groups {
        println!("bernstein: dgp={name} probes={kind} pass={pass}/{total} min_slack={slack:e}");
    }
    Ok(())
}

pub fn rates(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let dgp = cfg.dgp()?;
    let dir = cfg.output_dir()?;
    let seeds = seeds(cfg, 50)?;
    let grid = cfg.eval.n_grid();
    let mut table = Table::new(&["n", "seed", "estimator", "excess_risk"]);
    let mut lines = Vec::new();
    for est in cfg.eval.estimators() {
        let r = rate_experiment(dgp, &grid, &seeds, est, &cfg.fit)?;
        table.rows.extend(r.table().rows);
        lines.push(match r.fit {
            RateFit::Line { slope, intercept } => format!(
                "rates: estimator={} slope={slope:.4} intercept={intercept:.4} excluded={:?}",
                est.name(),
                r.excluded
            ),
            RateFit::Degenerate => format!("rates: estimator={} degenerate (all medians zero)", est.name()),
        });
    }
    prepare_dir(dir)?;
    let tag = tag(cfg);
    table.write(&dir.join(RATES_CSV), &tag)?;
    rates_svg(&table, &tag.line(), &dir.join(RATES_SVG))?;
    for l in lines {
        println!("{l}");
    }
    Ok(())
}

/// log10 median risk against log10 n, one line per estimator; zero medians are skipped.
pub fn rates_svg(table: &Table, provenance: &str, path: &Path) -> Result<(), CliError> {
    let col = |name: &str| table.column(name).ok_or_else(|| CliError::Validation(format!("rates table lacks {name}")));
    let (n_col, est_col) = (col("n")?, col("estimator")?);
    let mut by_est: BTreeMap<String, BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
    for row in &table.rows {
        let n: usize = row[n_col].parse().map_err(|_| CliError::Validation(format!("bad n '{}'", row[n_col])))?;
        let risk = parse_cell(table, row, "excess_risk")?.unwrap_or(f64::NAN);
        by_est.entry(row[est_col].clone()).or_default().entry(n).or_default().push(risk);
    }
    let mut series = Vec::new();
    for (est, cells) in by_est {
        let mut points = Vec::new();
        for (n, risks) in cells {
            let m = median(&risks)?;
            if m > 0.0 {
                points.push(((n as f64).log10(), m.log10()));
            }
        }
        if !points.is_empty() {
            series.push(Series { label: est, points, band: None });
        }
    }
    if series.is_empty() {
        println!("rates: every median is zero; no chart written");
        return Ok(());
    }
    let axes =
        Axes { title: "Median excess risk vs sample size", x_label: "log10 n", y_label: "log10 median excess risk" };
    write_svg_curve(&series, &axes, Some(provenance), path)
}

pub fn lowerbound(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let dgp = cfg.dgp()?;
    let DgpSpec::Basis(spec) = dgp else {
        return Err(CliError::Validation("lowerbound needs the basis generator".into()));
    };
    let dir = cfg.output_dir()?;
    let r = lowerbound_experiment(
        spec,
        cfg.eval.n.unwrap_or(6000),
        cfg.eval.trials.unwrap_or(400),
        cfg.eval.weight_eps.unwrap_or(0.0),
        cfg.base_seed,
        cfg.fit.execution,
    )?;
    prepare_dir(dir)?;
    r.table().write(&dir.join("lowerbound.csv"), &tag(cfg))?;
    let [q50, q90, q95] = r.werm_err_quantiles;
    println!("lowerbound: trials={} erm_fail_freq={:.4}", r.trials.len(), r.erm_fail_freq);
    println!("lowerbound: mean_err erm={:.6} werm={:.6}", r.mean_err_erm, r.mean_err_werm);
    println!("lowerbound: werm_err quantiles 0.5={q50:.6} 0.9={q90:.6} 0.95={q95:.6}");
    println!("lowerbound: werm wins={} losses={} sign_test_p={:.3e}", r.wins, r.losses, r.sign_test_p);
    Ok(())
}

/// Rebuild every chart whose CSV exists in `dir`.
pub fn report(dir: &Path) -> Result<(), CliError> {
    let mut made = 0;
    let agg_path = dir.join(SWEEP_AGG);
    if agg_path.exists() {
        let (prov, agg) = Table::read(&agg_path)?;
        sweep_svg(&agg, prov.as_deref().unwrap_or(""), &dir.join(SWEEP_SVG))?;
        println!("report: wrote {}", dir.join(SWEEP_SVG).display());
        made += 1;
    }
    let rates_path = dir.join(RATES_CSV);
    if rates_path.exists() {
        let (prov, t) = Table::read(&rates_path)?;
        rates_svg(&t, prov.as_deref().unwrap_or(""), &dir.join(RATES_SVG))?;
        println!("report: wrote {}", dir.join(RATES_SVG).display());
        made += 1;
    }
    if made == 0 {
        return Err(CliError::Validation(format!("no {SWEEP_AGG} or {RATES_CSV} in {}", dir.display())));
    }
    Ok(())
}
