//! The four subcommands. Each writes its outputs into the run directory and
//! returns the report.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use variance_forge_core::metrics::{accuracy, c_cdd, EvaluationRecord, Evaluator};
use variance_forge_core::net::train;
use variance_forge_core::perturb::{
    check_robustness_conditions, perturb, FactorKind, LevelParam, OutputCheck, PNorm, PerturbationStrategy,
    RobustnessQuery,
};
use variance_forge_core::search::{run_engine, SearchBudget, SearchTrace, Session};
use variance_forge_core::{Error, Result};

use crate::config::ExperimentConfig;
use crate::report::{
    BaselineSummary, CheckReport, GridRow, Interaction, LabelVerdict, RunReport, StrategySummary, Timing,
};

pub const PARALLELISM_ENV: &str = "VF_PARALLELISM";
pub const MAX_GRID_FACTORS: usize = 4;

/// Evaluation threads: `VF_PARALLELISM` if set, else the config value.
pub fn parallelism(cfg: &ExperimentConfig) -> Result<usize> {
    match std::env::var(PARALLELISM_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(Error::Config(format!(
                "{PARALLELISM_ENV} must be a positive integer, got `{v}`"
            ))),
        },
        Err(_) => Ok(cfg.parallelism),
    }
}

/// Run directory: the config's `output_dir`, else `runs/<command>`.
pub fn output_dir(cfg: &ExperimentConfig, command: &str) -> PathBuf {
    cfg.output_dir
        .clone()
        .unwrap_or_else(|| Path::new("runs").join(command))
}

fn prepare(cfg: &ExperimentConfig, command: &str) -> Result<(PathBuf, Evaluator)> {
    let dir = output_dir(cfg, command);
    fs::create_dir_all(&dir).map_err(|e| Error::Io {
        path: dir.clone(),
        source: e,
    })?;
    let evaluator =
        Evaluator::with_cache_file(cfg.context()?, dir.join("cache.jsonl"))?.with_parallelism(parallelism(cfg)?);
    Ok((dir, evaluator))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_summary(dir: &Path, report: &RunReport) -> Result<()> {
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    write(&dir.join("summary.json"), text.as_bytes())
}

/// `trace.jsonl` (one entry per line) and `trace.csv` (step, strategy, pv, incumbent).
pub fn write_trace(dir: &Path, trace: &SearchTrace) -> Result<()> {
    let mut jsonl = String::new();
    for e in &trace.entries {
        jsonl.push_str(&serde_json::to_string(e)?);
        jsonl.push('\n');
    }
    write(&dir.join("trace.jsonl"), jsonl.as_bytes())?;

    let path = dir.join("trace.csv");
    let csv_err = |e: csv::Error| Error::Data(format!("cannot write {}: {e}", path.display()));
    let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
    w.write_record(["step", "strategy", "pv", "incumbent_best_pv"])
        .map_err(csv_err)?;
    for e in &trace.entries {
        w.write_record([
            e.step.to_string(),
            e.strategy.encoding(),
            e.pv.to_string(),
            e.incumbent_best_pv.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Io {
        path: path.clone(),
        source: e,
    })
}

fn baseline_summary(evaluator: &Evaluator) -> Result<BaselineSummary> {
    let b = evaluator.baseline()?;
    let s = &evaluator.context().split;
    Ok(BaselineSummary {
        accuracy: b.accuracy,
        ccdd: b.ccdd.value,
        train_accuracy: accuracy(&b.model, s.train.features(), s.train.labels())?,
        train_ccdd: c_cdd(&b.model, s.train.features(), s.train.labels())?.value,
        test_samples: s.test.len(),
        train_samples: s.train.len(),
    })
}

fn report(command: &str, evaluator: &Evaluator, started: Instant) -> Result<RunReport> {
    Ok(RunReport {
        command: command.to_string(),
        fingerprint: evaluator.fingerprint().to_string(),
        master_seed: evaluator.context().master_seed,
        baseline: baseline_summary(evaluator)?,
        engine: None,
        best: None,
        evaluations: None,
        trace: None,
        marginals: Vec::new(),
        grid: Vec::new(),
        non_additivity: Vec::new(),
        check: None,
        timing: Timing {
            wall_seconds: started.elapsed().as_secs_f64(),
        },
    })
}

pub fn cmd_baseline(cfg: &ExperimentConfig) -> Result<RunReport> {
    let started = Instant::now();
    let (dir, evaluator) = prepare(cfg, "baseline")?;
    let mut r = report("baseline", &evaluator, started)?;
    r.timing.wall_seconds = started.elapsed().as_secs_f64();
    write_summary(&dir, &r)?;
    Ok(r)
}

/// Every on/off combination of `factors` (each "on" at its grid level), and
/// the gap between each combination's pv and the sum of its singles.
pub fn cmd_grid(cfg: &ExperimentConfig, factors: Option<Vec<FactorKind>>) -> Result<RunReport> {
    let started = Instant::now();
    let pool = &cfg.pool;
    let factors = match factors.or_else(|| cfg.grid.factors.clone()) {
        Some(f) => f,
        None => pool.factors().iter().map(|f| f.kind).collect(),
    };
    if factors.is_empty() || factors.len() > MAX_GRID_FACTORS {
        return Err(Error::Config(format!(
            "grid takes 1 to {MAX_GRID_FACTORS} factors, got {}",
            factors.len()
        )));
    }
    let mut slots = Vec::with_capacity(factors.len());
    for (i, kind) in factors.iter().enumerate() {
        if factors[..i].contains(kind) {
            return Err(Error::Config(format!("grid factor {kind} listed twice")));
        }
        let pos = pool
            .position(*kind)
            .ok_or_else(|| Error::Config(format!("grid factor {kind} is not in the pool")))?;
        let levels = pool.factors()[pos].levels.len();
        let on = cfg.grid.levels.get(kind).copied().unwrap_or(levels - 1);
        if on == 0 || on >= levels {
            return Err(Error::Config(format!(
                "grid level for {kind} must be an \"on\" level in 1..{levels}, got {on}"
            )));
        }
        slots.push((pos, on));
    }

    let (dir, evaluator) = prepare(cfg, "grid")?;
    // All-off first, then by number of factors switched on.
    let mut masks: Vec<usize> = (0..1usize << factors.len()).collect();
    masks.sort_by_key(|m| (m.count_ones(), m.reverse_bits()));
    let strategies: Vec<PerturbationStrategy> = masks
        .iter()
        .map(|&m| {
            let mut idx = vec![0; pool.k()];
            for (bit, &(pos, on)) in slots.iter().enumerate() {
                if m & (1 << bit) != 0 {
                    idx[pos] = on;
                }
            }
            PerturbationStrategy::from_indices(idx)
        })
        .collect();
    let mut session = Session::new(&evaluator, "grid", &SearchBudget::evaluations(strategies.len())?)?;
    let records: Vec<EvaluationRecord> = session
        .evaluate_batch(&strategies)?
        .into_iter()
        .map(|r| r.expect("grid budget covers every combination"))
        .collect();
    let result = session.finish()?;

    let on_factors = |m: usize| -> Vec<FactorKind> {
        (0..factors.len())
            .filter(|b| m & (1 << b) != 0)
            .map(|b| factors[b])
            .collect()
    };
    let pv_of = |m: usize| records[masks.iter().position(|&x| x == m).expect("mask present")].pv;
    let grid: Vec<GridRow> = masks
        .iter()
        .zip(&records)
        .map(|(&m, r)| GridRow {
            factors: on_factors(m),
            result: StrategySummary::new(pool, r),
        })
        .collect();
    let non_additivity: Vec<Interaction> = masks
        .iter()
        .filter(|m| m.count_ones() >= 2)
        .map(|&m| {
            let singles: f64 = (0..factors.len())
                .filter(|b| m & (1 << b) != 0)
                .map(|b| pv_of(1 << b))
                .sum();
            Interaction {
                factors: on_factors(m),
                combined_pv: pv_of(m),
                sum_of_singles: singles,
                difference: pv_of(m) - singles,
            }
        })
        .collect();

    write_trace(&dir, &result.trace)?;
    let mut r = report("grid", &evaluator, started)?;
    r.best = Some(StrategySummary::new(pool, &result.best));
    r.evaluations = Some(result.trace.evaluations);
    r.trace = Some("trace.jsonl".into());
    r.grid = grid;
    r.non_additivity = non_additivity;
    r.timing.wall_seconds = started.elapsed().as_secs_f64();
    write_summary(&dir, &r)?;
    Ok(r)
}

pub fn cmd_search(cfg: &ExperimentConfig) -> Result<RunReport> {
    let started = Instant::now();
    let (dir, evaluator) = prepare(cfg, "search")?;
    let result = run_engine(cfg.engine, &evaluator, &cfg.engines, &cfg.budget()?)?;
    write_trace(&dir, &result.trace)?;

    let pool = &cfg.pool;
    let singles: Vec<PerturbationStrategy> = (0..pool.k())
        .flat_map(|i| (1..pool.factors()[i].levels.len()).map(move |l| (i, l)))
        .map(|(i, l)| pool.single(i, l))
        .collect();
    let marginals = evaluator
        .evaluate_many(&singles)?
        .iter()
        .map(|r| StrategySummary::new(pool, r))
        .collect();

    let mut r = report("search", &evaluator, started)?;
    r.engine = Some(cfg.engine);
    r.best = Some(StrategySummary::new(pool, &result.best));
    r.evaluations = Some(result.trace.evaluations);
    r.trace = Some("trace.jsonl".into());
    r.marginals = marginals;
    r.timing.wall_seconds = started.elapsed().as_secs_f64();
    write_summary(&dir, &r)?;
    Ok(r)
}

#[derive(Debug, Clone)]
pub struct CheckArgs {
    pub strategy: String,
    /// Input radius; defaults to the strategy's FGSM strength (0 when off).
    pub sigma: Option<f64>,
    /// Output radius for the noisy-label condition; skipped when absent.
    pub delta: Option<f64>,
    /// Parameter radius for the configuration condition.
    pub eta: f64,
    pub norm: PNorm,
}

pub fn cmd_check(cfg: &ExperimentConfig, args: &CheckArgs) -> Result<RunReport> {
    let started = Instant::now();
    let (dir, evaluator) = prepare(cfg, "check")?;
    let ctx = evaluator.context();
    let pool = &ctx.pool;
    let ps = pool.parse_strategy(&args.strategy)?;
    let base = evaluator.baseline()?;
    let s = &ctx.split;

    let bundle = perturb(pool, &ps, s, &ctx.model_config, &ctx.train_config, ctx.master_seed)?;
    let unchanged = bundle.train_y == s.train.labels()
        && bundle.model_config == ctx.model_config
        && bundle.train_config == ctx.train_config;
    let trained = if unchanged {
        base.model.clone()
    } else {
        train(
            s.train.features(),
            &bundle.train_y,
            &bundle.model_config,
            &bundle.train_config,
        )?
    };
    let model = bundle.modify_model(&trained)?;
    let attacked = bundle.attack_inputs(&model, s.test.labels(), s.test.feature_ranges())?;

    let sigma =
        args.sigma.unwrap_or_else(
            || match pool.position(FactorKind::AdversarialAttack).map(|i| pool.level(&ps, i)) {
                Some(LevelParam::Sigma(v)) => *v,
                _ => 0.0,
            },
        );
    let test = check_robustness_conditions(&RobustnessQuery {
        base: &base.model,
        perturbed: &model,
        inputs: s.test.features(),
        perturbed_inputs: &attacked,
        sigma,
        eta: args.eta,
        norm: args.norm,
        output: None,
    })?;
    let labels = match args.delta {
        Some(delta) => {
            let v = check_robustness_conditions(&RobustnessQuery {
                base: &base.model,
                perturbed: &model,
                inputs: s.train.features(),
                perturbed_inputs: s.train.features(),
                sigma,
                eta: args.eta,
                norm: args.norm,
                output: Some(OutputCheck {
                    true_labels: s.train.labels(),
                    noisy_labels: &bundle.train_y,
                    delta,
                }),
            })?;
            Some(LabelVerdict {
                delta,
                robust: v.output_robust == Some(true),
                violations: v.samples.iter().filter(|x| x.output_robust == Some(false)).count(),
                max_distance: v.samples.iter().filter_map(|x| x.output_distance).fold(0.0, f64::max),
            })
        }
        None => None,
    };

    let mut r = report("check", &evaluator, started)?;
    r.check = Some(CheckReport {
        strategy: ps.clone(),
        description: pool.describe(&ps),
        sigma_bound_satisfied: test.max_input_distance <= sigma,
        test,
        labels,
    });
    r.timing.wall_seconds = started.elapsed().as_secs_f64();
    write_summary(&dir, &r)?;
    Ok(r)
}
