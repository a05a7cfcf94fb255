//! Command dispatch and report emission.

use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::config::{Command, ExperimentConfig, FamilyChoice};
use super::io::{read_matrix, read_matrix_dir, write_matrix};
use crate::amg2::{self, AmgProblem};
use crate::densela::{norm2, rank_k_residual, DenseMatrix};
use crate::error::{Error, Result};
use crate::gjtrace::programs::{
    argmin_all_pairs, knapsack_greedy, power_iterate, trace_csanky_projection, trace_proxy_loss, Projector,
    CSANKY_DEGREE_CONSTANT, PROXY_DEGREE_CONSTANT,
};
use crate::gjtrace::{FMat, GjReport, GjTrace};
use crate::ivy_train::{empirical_loss, safeguard, sgd_train, Dataset, SpikedDistribution, TrainConfig};
use crate::par;
use crate::proxy_loss::{proxy_loss_detailed, q_iterations};
use crate::rng::SeedStreams;
use crate::shatterlab::{gen_block_family, gen_dense_family, gen_rank1_family, verify_scw_shattering};
use crate::sketch_scw::{sample_oblivious_sketch_with, scw_loss, SparseSketch};

/// Slack on both ends of the proxy sandwich.
pub const SANDWICH_SLACK: f64 = 1e-9;
/// Safeguarding may exceed the better input sketch by this much.
pub const SAFEGUARD_SLACK: f64 = 1e-8;
/// Relative tolerance of the AMG formula/explicit comparison.
pub const AMG_IDENTITY_RTOL: f64 = 1e-8;
/// Absolute tolerance on `x*` being a fixed point of one AMG step.
pub const AMG_FIXED_POINT_TOL: f64 = 1e-10;

/// Tabular part of a report, written as CSV.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let fail = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(&self.header).map_err(fail)?;
        for r in &self.rows {
            w.write_record(r).map_err(fail)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub command: Command,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub pass: bool,
    pub metrics: Value,
    pub wall_clock_seconds: f64,
    #[serde(skip)]
    pub table: Table,
}

impl Report {
    /// The report with the wall-clock field zeroed, for determinism checks.
    pub fn without_timing(&self) -> Self {
        Self { wall_clock_seconds: 0.0, ..self.clone() }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// `report.json` and `summary.csv` in `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.json"), self.to_json()?)?;
        fs::write(dir.join("summary.csv"), self.table.to_csv()?)?;
        Ok(())
    }
}

struct Outcome {
    pass: bool,
    metrics: Value,
    table: Table,
}

/// Validate, run `command`, and write the report when `cfg.out` is set.
pub fn run_experiment(command: Command, cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate(command)?;
    let start = Instant::now();
    let out = match command {
        Command::GenData => gen_data(cfg)?,
        Command::Train => train(cfg)?,
        Command::Eval => eval(cfg)?,
        Command::ProxyCheck => proxy_check(cfg)?,
        Command::ShatterVerify => shatter_verify(cfg)?,
        Command::GjTrace => gj_trace(cfg)?,
        Command::AmgCheck => amg_check(cfg)?,
    };
    let report = Report {
        command,
        seed: cfg.seed,
        config: cfg.clone(),
        pass: out.pass,
        metrics: out.metrics,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        table: out.table,
    };
    if let Some(dir) = &cfg.out {
        report.write(dir)?;
    }
    Ok(report)
}

fn gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn collect<T>(results: Vec<Result<T>>) -> Result<Vec<T>> {
    results.into_iter().collect()
}

fn spiked(cfg: &ExperimentConfig) -> Result<(SpikedDistribution, SeedStreams)> {
    let seeds = SeedStreams::new(cfg.seed);
    let dist = SpikedDistribution::new(cfg.n, cfg.d, cfg.k, cfg.noise, &mut seeds.stream("spiked-signal"))?;
    Ok((dist, seeds))
}

fn generated(cfg: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    let (dist, seeds) = spiked(cfg)?;
    let train = dist.dataset(cfg.instances, &mut seeds.stream("spiked-train"))?;
    let test = dist.dataset(cfg.test_instances.max(1), &mut seeds.stream("spiked-test"))?;
    Ok((train, test))
}

/// Train and test sets from `cfg.data`, or freshly generated from the spiked
/// distribution. A dataset without `test/` is evaluated on its training set.
fn datasets(cfg: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    let Some(dir) = &cfg.data else {
        return generated(cfg);
    };
    let train = Dataset::new(read_matrix_dir(&dir.join("train"))?)?;
    let test_dir = dir.join("test");
    let test = if test_dir.is_dir() { Dataset::new(read_matrix_dir(&test_dir)?)? } else { train.clone() };
    for (name, set) in [("train", &train), ("test", &test)] {
        if set.shape() != (cfg.n, cfg.d) {
            return Err(Error::DimensionMismatch(format!(
                "{name} matrices are {:?} but the config says n={}, d={}",
                set.shape(),
                cfg.n,
                cfg.d
            )));
        }
    }
    Ok((train, test))
}

fn gen_data(cfg: &ExperimentConfig) -> Result<Outcome> {
    let dir = cfg.out.as_ref().expect("validated");
    let (train, test) = generated(cfg)?;
    let mut table = Table::new(&["split", "index", "file"]);
    for (name, set) in [("train", &train), ("test", &test)] {
        let sub = dir.join(name);
        fs::create_dir_all(&sub)?;
        for (i, a) in set.matrices().iter().enumerate() {
            let file = format!("{i:05}.sklb");
            write_matrix(&sub.join(&file), a)?;
            table.push(vec![name.into(), i.to_string(), format!("{name}/{file}")]);
        }
    }
    let metrics = json!({
        "train_count": train.len(),
        "test_count": test.len(),
        "shape": [cfg.n, cfg.d],
        "noise": cfg.noise,
    });
    Ok(Outcome { pass: true, metrics, table })
}

fn train(cfg: &ExperimentConfig) -> Result<Outcome> {
    let (train, test) = datasets(cfg)?;
    let seeds = SeedStreams::new(cfg.seed);
    let init = sample_oblivious_sketch_with(cfg.m, cfg.n, cfg.s, &mut seeds.stream("init-sketch"))?;
    let tc: TrainConfig = cfg.train.with_seed(cfg.seed);
    let out = sgd_train(&init, &train, cfg.k, &tc)?;
    let initial = out.history[0];
    let fin = *out.history.last().expect("history holds the initial loss");
    if let Some(dir) = &cfg.out {
        fs::create_dir_all(dir)?;
        write_matrix(&dir.join("sketch.sklb"), &out.sketch.to_dense())?;
    }
    let mut table = Table::new(&["epoch", "train_loss"]);
    for (e, l) in out.history.iter().enumerate() {
        table.push(vec![e.to_string(), l.to_string()]);
    }
    let metrics = json!({
        "train_count": train.len(),
        "test_count": test.len(),
        "initial_loss": initial,
        "final_loss": fin,
        "history": out.history,
        "test_loss_initial_sketch": empirical_loss(&init, &test, cfg.k)?,
        "test_loss_trained_sketch": empirical_loss(&out.sketch, &test, cfg.k)?,
    });
    Ok(Outcome { pass: fin <= initial, metrics, table })
}

fn eval(cfg: &ExperimentConfig) -> Result<Outcome> {
    let (_, test) = datasets(cfg)?;
    let learned = SparseSketch::from_dense(&read_matrix(cfg.sketch.as_ref().expect("validated"))?);
    if learned.n() != cfg.n {
        return Err(Error::DimensionMismatch(format!("sketch has {} columns, expected n = {}", learned.n(), cfg.n)));
    }
    let seeds = SeedStreams::new(cfg.seed);
    let oblivious = sample_oblivious_sketch_with(cfg.m, cfg.n, cfg.s, &mut seeds.stream("eval-oblivious"))?;
    let guarded = safeguard(&learned, &oblivious)?;
    let k = cfg.k;
    let rows = collect(par::map_slice(test.matrices(), |a| -> Result<[f64; 4]> {
        Ok([scw_loss(&learned, a, k)?, scw_loss(&oblivious, a, k)?, scw_loss(&guarded, a, k)?, rank_k_residual(a, k)?])
    }))?;
    let mut table = Table::new(&["index", "learned", "oblivious", "safeguarded", "optimal"]);
    let mut pass = true;
    for (i, r) in rows.iter().enumerate() {
        pass &= r[2] <= r[0].min(r[1]) + SAFEGUARD_SLACK;
        table.push(std::iter::once(i.to_string()).chain(r.iter().map(f64::to_string)).collect());
    }
    let col = |j: usize| mean(&rows.iter().map(|r| r[j]).collect::<Vec<_>>());
    let metrics = json!({
        "test_count": rows.len(),
        "mean_learned_loss": col(0),
        "mean_oblivious_loss": col(1),
        "mean_safeguarded_loss": col(2),
        "mean_optimal_loss": col(3),
        "safeguard_never_worse": pass,
    });
    Ok(Outcome { pass, metrics, table })
}

fn proxy_check(cfg: &ExperimentConfig) -> Result<Outcome> {
    let pc = cfg.proxy_config();
    let seeds = SeedStreams::new(cfg.seed);
    let matrices: Vec<DenseMatrix> = match &cfg.data {
        Some(_) => datasets(cfg)?.0.matrices().to_vec(),
        None => (0..cfg.instances)
            .map(|i| gaussian(cfg.n, cfg.d, &mut seeds.indexed("proxy-instance", i as u64)))
            .collect(),
    };
    let rows = collect(par::map_indexed(matrices.len(), |i| -> Result<(f64, f64, usize)> {
        let sketch = sample_oblivious_sketch_with(cfg.m, cfg.n, cfg.s, &mut seeds.indexed("proxy-sketch", i as u64))?;
        let exact = scw_loss(&sketch, &matrices[i], cfg.k)?;
        let proxy = proxy_loss_detailed(&sketch, &matrices[i], cfg.k, &pc)?;
        Ok((exact, proxy.loss, proxy.n_candidates))
    }))?;
    let mut table = Table::new(&["index", "scw_loss", "proxy_loss", "gap"]);
    let (mut min_gap, mut max_gap, mut max_violation) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
    for (i, &(exact, proxy, _)) in rows.iter().enumerate() {
        let gap = proxy - exact;
        min_gap = min_gap.min(gap);
        max_gap = max_gap.max(gap);
        max_violation = max_violation.max(-SANDWICH_SLACK - gap).max(gap - cfg.epsilon - SANDWICH_SLACK);
        table.push(vec![i.to_string(), exact.to_string(), proxy.to_string(), gap.to_string()]);
    }
    let metrics = json!({
        "instances": rows.len(),
        "epsilon": cfg.epsilon,
        "q": q_iterations(cfg.epsilon, cfg.d, pc.q_constant),
        "candidates_per_instance": rows.first().map(|r| r.2),
        "min_gap": min_gap,
        "max_gap": max_gap,
        "max_violation": max_violation,
    });
    Ok(Outcome { pass: max_violation == 0.0, metrics, table })
}

fn shatter_verify(cfg: &ExperimentConfig) -> Result<Outcome> {
    let sh = &cfg.shatter;
    let family = match sh.family {
        FamilyChoice::Rank1 => gen_rank1_family(cfg.n, cfg.d)?,
        FamilyChoice::Dense => gen_dense_family(cfg.n, cfg.k)?,
        FamilyChoice::Block => gen_block_family(cfg.n, cfg.k, cfg.s)?,
    };
    let report = verify_scw_shattering(&family, sh.subsets, sh.gamma(), cfg.seed)?;
    let pass = report.all_pass && report.all_zero_patterns_match;
    let k = family.k as f64;
    let mut table = Table::new(&["family", "N", "subsets_checked", "min_margin", "max_low_loss", "min_high_loss", "pass"]);
    table.push(vec![
        report.family.clone(),
        report.n_members.to_string(),
        report.subsets_checked.to_string(),
        report.min_margin.to_string(),
        report.max_low_loss.to_string(),
        report.min_high_loss.to_string(),
        pass.to_string(),
    ]);
    let mut metrics = serde_json::to_value(&report)?;
    metrics["off_subset_loss"] = json!(report.min_high_loss);
    metrics["reference_inv_k"] = json!(1.0 / k);
    metrics["reference_inv_sqrt_k"] = json!(1.0 / k.sqrt());
    Ok(Outcome { pass, metrics, table })
}

fn gj_row(table: &mut Table, demo: &str, param: String, r: &GjReport, expected: String, ok: bool) {
    table.push(vec![
        demo.into(),
        param,
        r.max_degree.to_string(),
        r.predicate_count.to_string(),
        expected,
        ok.to_string(),
    ]);
}

fn gj_trace(cfg: &ExperimentConfig) -> Result<Outcome> {
    let seeds = SeedStreams::new(cfg.seed);
    let mut table = Table::new(&["demo", "parameter", "max_degree", "predicates", "expected", "ok"]);
    let mut pass = true;

    let mut power = Vec::new();
    for q in 0..=cfg.gj.max_power {
        let t = GjTrace::new();
        let zero = t.constant(0.0);
        let mut rng = seeds.indexed("gj-power", q as u64);
        let m = FMat::new(3, 3, (0..9).map(|i| t.input(&format!("m{i}"), rng.random_range(-1.0..1.0))).collect::<Result<_>>()?, zero);
        let pi = FMat::new(3, 1, (0..3).map(|i| t.input(&format!("p{i}"), rng.random_range(-1.0..1.0))).collect::<Result<_>>()?, zero);
        let _ = power_iterate(&m, &pi, q);
        let r = t.finish(12)?;
        let ok = r.max_degree as usize == q + 1;
        pass &= ok;
        gj_row(&mut table, "power", format!("q={q}"), &r, (q + 1).to_string(), ok);
        power.push(r);
    }

    let mut min_of_r = Vec::new();
    for r_count in 1..=cfg.gj.max_r {
        let t = GjTrace::new();
        let mut rng = seeds.indexed("gj-min", r_count as u64);
        let vals = (0..r_count).map(|i| t.input(&format!("v{i}"), rng.random_range(-1.0..1.0))).collect::<Result<Vec<_>>>()?;
        let _ = argmin_all_pairs(&vals);
        let r = t.finish(r_count)?;
        let expected = r_count * (r_count - 1) / 2;
        let ok = r.predicate_count == expected;
        pass &= ok;
        gj_row(&mut table, "min-of-r", format!("r={r_count}"), &r, expected.to_string(), ok);
        min_of_r.push(r);
    }

    let mut csanky = Vec::new();
    for kk in 1..=cfg.k {
        let z = gaussian(kk, kk, &mut seeds.indexed("gj-csanky", kk as u64));
        let plain = trace_csanky_projection(&z, Projector::Plain)?;
        let equil = trace_csanky_projection(&z, Projector::Equilibrated)?;
        let bound = CSANKY_DEGREE_CONSTANT as usize * kk;
        let ok = plain.max_degree as usize <= bound;
        pass &= ok;
        gj_row(&mut table, "csanky-plain", format!("k={kk}"), &plain, format!("<={bound}"), ok);
        gj_row(&mut table, "csanky-equilibrated", format!("k={kk}"), &equil, "-".into(), true);
        csanky.push(json!({"k": kk, "plain": plain, "equilibrated": equil, "bound": bound}));
    }

    let values: Vec<f64> = {
        let mut rng = seeds.stream("gj-knapsack");
        (0..6).map(|_| rng.random_range(1.0..5.0)).collect()
    };
    let costs: Vec<f64> = {
        let mut rng = seeds.stream("gj-knapsack-costs");
        (0..6).map(|_| rng.random_range(0.5..3.0)).collect()
    };
    let t = GjTrace::new();
    let rho = t.input("rho", 1.0)?;
    let _ = knapsack_greedy(rho, &values, &costs, 6.0);
    let knapsack = t.finish(1)?;
    let ok = knapsack.max_degree == 1 && knapsack.predicate_count <= 15;
    pass &= ok;
    gj_row(&mut table, "knapsack", "items=6".into(), &knapsack, "degree 1, <=15 predicates".into(), ok);

    let q = cfg.gj.proxy_q;
    let a = gaussian(cfg.n, cfg.d, &mut seeds.stream("gj-proxy-instance"));
    let sketch = sample_oblivious_sketch_with(cfg.m.min(cfg.n), cfg.n, cfg.s.min(cfg.m), &mut seeds.stream("gj-proxy-sketch"))?;
    let (proxy, value) = trace_proxy_loss(&sketch, &a, cfg.k.min(cfg.d), q, 0.5, Projector::Plain)?;
    let bound = PROXY_DEGREE_CONSTANT as usize * sketch.m() * cfg.k * (q + 1);
    let ok = proxy.max_degree as usize <= bound;
    pass &= ok;
    gj_row(&mut table, "proxy", format!("q={q}"), &proxy, format!("<={bound}"), ok);

    let metrics = json!({
        "power": power,
        "min_of_r": min_of_r,
        "csanky": csanky,
        "csanky_degree_constant": CSANKY_DEGREE_CONSTANT,
        "knapsack": knapsack,
        "proxy": {"report": proxy, "q": q, "loss": value, "degree_bound": bound, "degree_constant": PROXY_DEGREE_CONSTANT},
    });
    Ok(Outcome { pass, metrics, table })
}

struct AmgCase {
    formula_gap: f64,
    fixed_point_error: f64,
    losses: Option<Vec<f64>>,
}

fn amg_case(cfg: &ExperimentConfig, i: usize) -> Result<(AmgProblem, AmgCase)> {
    let seeds = SeedStreams::new(cfg.seed);
    let mut rng = seeds.indexed("amg-instance", i as u64);
    let prob = amg2::random_problem(cfg.n, cfg.amg.coarse, cfg.amg.s1, cfg.amg.s2, &mut rng)?;
    let x: Vec<f64> = (0..cfg.n).map(|_| rng.sample(StandardNormal)).collect();
    let x_star = prob.exact_solution()?;
    let explicit = amg2::amg_step_explicit(&prob, &x)?;
    let formula = amg2::amg_step_formula(&prob, &x, &x_star)?;
    let gap = explicit.iter().zip(&formula).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let fixed = amg2::amg_step_explicit(&prob, &x_star)?;
    let fixed_err = fixed.iter().zip(&x_star).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let losses = (0..=cfg.amg.q).map(|q| amg2::amg_loss(&prob, q)).collect::<Result<Vec<_>>>();
    let losses = match losses {
        Ok(l) => Some(l),
        Err(Error::Divergence(_)) => None,
        Err(e) => return Err(e),
    };
    Ok((prob, AmgCase { formula_gap: gap / (1.0 + norm2(&x)), fixed_point_error: fixed_err, losses }))
}

fn amg_check(cfg: &ExperimentConfig) -> Result<Outcome> {
    let cases = collect(par::map_indexed(cfg.instances, |i| amg_case(cfg, i)))?;
    let mut table = Table::new(&["index", "formula_gap", "fixed_point_error", "final_loss", "monotone"]);
    let (mut max_gap, mut max_fixed) = (0.0f64, 0.0f64);
    let (mut monotone, mut diverged) = (0usize, 0usize);
    for (i, (_, c)) in cases.iter().enumerate() {
        max_gap = max_gap.max(c.formula_gap);
        max_fixed = max_fixed.max(c.fixed_point_error);
        let (fin, mono) = match &c.losses {
            Some(l) => {
                let mono = l.windows(2).all(|w| w[1] < w[0]);
                monotone += usize::from(mono);
                (l.last().copied().unwrap_or(f64::NAN), mono)
            }
            None => {
                diverged += 1;
                (f64::INFINITY, false)
            }
        };
        table.push(vec![
            i.to_string(),
            c.formula_gap.to_string(),
            c.fixed_point_error.to_string(),
            fin.to_string(),
            mono.to_string(),
        ]);
    }
    let pass = max_gap <= AMG_IDENTITY_RTOL && max_fixed <= AMG_FIXED_POINT_TOL;
    let mut metrics = json!({
        "instances": cases.len(),
        "max_formula_gap_relative": max_gap,
        "max_fixed_point_error": max_fixed,
        "strictly_decreasing_loss_fraction": monotone as f64 / cases.len() as f64,
        "diverged": diverged,
    });

    if cfg.amg.train_epochs > 0 {
        let problems: Vec<AmgProblem> = cases.into_iter().map(|(p, _)| p).collect();
        let split = (problems.len() / 2).max(1);
        let (tr, te) = problems.split_at(split);
        let te = if te.is_empty() { tr } else { te };
        let tc = TrainConfig {
            epochs: cfg.amg.train_epochs,
            step_size: cfg.amg.step_size,
            batch_size: cfg.train.batch_size,
            fd_step: cfg.train.fd_step,
            seed: cfg.seed,
        };
        let init = tr[0].p_values();
        let before = amg2::mean_amg_loss(te, &init, cfg.amg.q)?;
        let out = amg2::train_prolongation(tr, cfg.amg.q, &tc)?;
        let after = amg2::mean_amg_loss(te, &out.values, cfg.amg.q)?;
        metrics["training"] = json!({
            "train_count": tr.len(),
            "test_count": te.len(),
            "history": out.history,
            "test_loss_before": before,
            "test_loss_after": after,
        });
    }
    Ok(Outcome { pass, metrics, table })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentConfig {
        ExperimentConfig { n: 6, d: 5, m: 3, k: 2, s: 1, instances: 4, test_instances: 3, ..Default::default() }
    }

    #[test]
    fn reports_are_deterministic() {
        let cfg = tiny();
        for cmd in [Command::ProxyCheck, Command::AmgCheck, Command::GjTrace] {
            let a = run_experiment(cmd, &cfg).unwrap();
            let b = run_experiment(cmd, &cfg).unwrap();
            assert_eq!(a.without_timing().to_json().unwrap(), b.without_timing().to_json().unwrap());
            assert!(a.pass, "{cmd:?}: {}", a.metrics);
        }
    }

    #[test]
    fn invalid_config_lists_everything() {
        let cfg = ExperimentConfig { n: 0, k: 9, ..tiny() };
        match run_experiment(Command::Train, &cfg) {
            Err(Error::Config(p)) => assert!(p.len() >= 2, "{p:?}"),
            other => panic!("expected a config error, got {other:?}"),
        }
    }
}
