use std::fmt::Write as _;
use std::path::Path;

use dqaem::harness::{run_comparison, run_monotonicity, ComparisonResult, MonotonicityReport};
use dqaem::io::{read_dataset, read_params, trace_csv, write_dataset, write_json, write_params, write_trace};
use dqaem::oracle::gates::{run_gates, GateOptions};
use dqaem::quantum::{run_daem, run_dqaem};
use dqaem::{random_init, run_em, sample_dataset, AnnealState, Outcome};

use crate::config::{
    load, prepare_dir, prepare_output, require_file, DataSource, Experiment, ExperimentConfig, FitConfig,
    GenerateConfig, Solver, VerifyConfig,
};
use crate::CliError;

fn pool(threads: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {threads} worker threads: {e}")))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

pub fn generate(path: &Path, overrides: &[String]) -> Result<(), CliError> {
    let cfg: GenerateConfig = load(path, overrides)?;
    if cfg.n == 0 {
        return Err(CliError::Config("n must be at least 1".into()));
    }
    let truth = cfg.model.resolve()?;
    prepare_output(&cfg.data_out)?;
    prepare_output(&cfg.truth_out)?;
    let data = sample_dataset(&truth, cfg.n, cfg.seed)?;
    write_dataset(&data, &cfg.data_out, Some(&cfg.truth_out))?;
    eprintln!("wrote {} points to {}", cfg.n, cfg.data_out.display());
    Ok(())
}

pub fn fit(path: &Path, overrides: &[String]) -> Result<(), CliError> {
    let cfg: FitConfig = load(path, overrides)?;
    require_file(&cfg.data)?;
    if let Some(init) = &cfg.init {
        require_file(init)?;
    }
    if cfg.m == 0 || cfg.k == 0 || cfg.beads == 0 || cfg.threads == 0 {
        return Err(CliError::Config("m, k, beads and threads must all be at least 1".into()));
    }
    let opts = cfg.limits.to_options()?;
    let schedule = cfg.schedule.to_schedule()?;
    prepare_output(&cfg.trace_out)?;
    prepare_output(&cfg.params_out)?;

    let data = read_dataset(&cfg.data, None)?;
    let init = match &cfg.init {
        Some(p) => read_params(p)?,
        None => random_init(&data, cfg.m, cfg.k, cfg.seed)?,
    };
    if init.m() != cfg.m || init.k() != cfg.k {
        return Err(CliError::Config(format!(
            "init has m={}, k={} but the config asks for m={}, k={}",
            init.m(),
            init.k(),
            cfg.m,
            cfg.k
        )));
    }
    let trace = pool(cfg.threads)?.install(|| match cfg.solver {
        Solver::Em => run_em(&data, &init, &opts),
        Solver::Daem => run_daem(&data, &init, &schedule, &opts),
        Solver::Dqaem => run_dqaem(&data, &init, &schedule, cfg.beads, &opts),
    })?;
    write_trace(&trace, &cfg.trace_out)?;
    write_params(&trace.final_params, &cfg.params_out)?;
    for w in &trace.warnings {
        eprintln!("warning: {w}");
    }
    let summary = format!(
        "{} after {} iterations, objective {:?}",
        trace.outcome.label(),
        trace.iterations(),
        trace.final_objective().unwrap_or(f64::NAN)
    );
    match &trace.outcome {
        Outcome::Converged => {
            eprintln!("{summary}");
            Ok(())
        }
        Outcome::MaxIterations => Err(CliError::MaxIterations(summary)),
        Outcome::NumericalFailure(msg) => Err(CliError::Numerical(format!("{summary}: {msg}"))),
    }
}

pub fn experiment(path: &Path, overrides: &[String]) -> Result<(), CliError> {
    let cfg: ExperimentConfig = load(path, overrides)?;
    match cfg.experiment {
        Experiment::Comparison => comparison(&cfg),
        Experiment::Monotonicity => monotonicity(&cfg),
    }
}

fn comparison(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let section = cfg
        .comparison
        .as_ref()
        .ok_or_else(|| CliError::Config("experiment=comparison needs a `comparison` section".into()))?;
    if cfg.monotonicity.is_some() {
        return Err(CliError::Config("experiment=comparison does not take a `monotonicity` section".into()));
    }
    let trial_cfg = section.to_trial_config()?;
    prepare_dir(&cfg.output_dir)?;
    let traces_dir = cfg.output_dir.join("traces");
    if section.write_traces {
        prepare_dir(&traces_dir)?;
    }

    let mut result = pool(cfg.threads)?.install(|| run_comparison(&trial_cfg))?;
    for r in &mut result.records {
        for (name, solver) in [("em", &mut r.em), ("dqaem", &mut r.dqaem)] {
            if let Some(trace) = solver.trace.take() {
                let file = traces_dir.join(format!("trial_{:04}_{name}.csv", r.trial));
                write_text(&file, &trace_csv(&trace))?;
            }
        }
    }
    write_json(&cfg.output_dir.join("comparison.json"), &result)?;
    write_text(&cfg.output_dir.join("comparison.md"), &comparison_markdown(&result))?;
    print!("{}", result.table.render());
    Ok(())
}

fn fmt_mean(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.2}"))
}

pub fn comparison_markdown(r: &ComparisonResult) -> String {
    let t = &r.table;
    let mut s = String::new();
    let _ = writeln!(s, "# EM vs DQAEM comparison\n");
    let _ = writeln!(s, "Trials: {}\n", t.trials);
    let _ = writeln!(s, "| EM \\ DQAEM | success | fail | total |");
    let _ = writeln!(s, "|---|---|---|---|");
    let pct = |c: usize| t.pct(c);
    let _ = writeln!(
        s,
        "| success | {} ({:.1}%) | {} ({:.1}%) | {} ({:.1}%) |",
        t.both_success,
        pct(t.both_success),
        t.em_only,
        pct(t.em_only),
        t.em_successes(),
        pct(t.em_successes())
    );
    let em_fail = t.dqaem_only + t.both_fail;
    let _ = writeln!(
        s,
        "| fail | {} ({:.1}%) | {} ({:.1}%) | {} ({:.1}%) |",
        t.dqaem_only,
        pct(t.dqaem_only),
        t.both_fail,
        pct(t.both_fail),
        em_fail,
        pct(em_fail)
    );
    let dq_fail = t.em_only + t.both_fail;
    let _ = writeln!(
        s,
        "| total | {} ({:.1}%) | {} ({:.1}%) | {} (100.0%) |\n",
        t.dqaem_successes(),
        pct(t.dqaem_successes()),
        dq_fail,
        pct(dq_fail),
        t.trials
    );
    let _ = writeln!(s, "## Iterations until the success criterion holds\n");
    let _ = writeln!(s, "| set | trials | DQAEM mean | EM mean |");
    let _ = writeln!(s, "|---|---|---|---|");
    let _ = writeln!(
        s,
        "| each solver's successes | {} / {} | {} | {} |",
        r.dqaem_iterations.trials,
        r.em_iterations.trials,
        fmt_mean(r.dqaem_iterations.mean_iterations),
        fmt_mean(r.em_iterations.mean_iterations)
    );
    let _ = writeln!(
        s,
        "| joint successes | {} | {} | {} |",
        r.joint_em_iterations.trials,
        fmt_mean(r.joint_dqaem_iterations.mean_iterations),
        fmt_mean(r.joint_em_iterations.mean_iterations)
    );
    s
}

fn monotonicity(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let section = cfg
        .monotonicity
        .as_ref()
        .ok_or_else(|| CliError::Config("experiment=monotonicity needs a `monotonicity` section".into()))?;
    if cfg.comparison.is_some() {
        return Err(CliError::Config("experiment=monotonicity does not take a `comparison` section".into()));
    }
    if section.models.iter().any(|&m| m == 0) || section.fit_k == 0 || section.restarts == 0 {
        return Err(CliError::Config("models, fit_k and restarts must all be at least 1".into()));
    }
    let anneal = AnnealState::new(section.beta, section.gamma, section.beads)?;
    let data = match &section.data {
        DataSource::File(p) => {
            require_file(p)?;
            read_dataset(p, None)?
        }
        DataSource::Generate { model, n, seed } => sample_dataset(&model.resolve()?, *n, *seed)?,
    };
    prepare_dir(&cfg.output_dir)?;
    let mono_cfg = dqaem::harness::MonotonicityConfig {
        models: section.models.clone(),
        anneal,
        iters: section.iters,
        restarts: section.restarts,
        fit_k: section.fit_k,
        init_seed: section.init_seed,
        tol: section.tol,
    };
    let report = pool(cfg.threads)?.install(|| run_monotonicity(&data, &mono_cfg))?;
    write_json(&cfg.output_dir.join("monotonicity.json"), &report)?;
    write_text(&cfg.output_dir.join("monotonicity.md"), &monotonicity_markdown(&report))?;
    for model in &report.models {
        let mut csv = String::from("restart,iteration,neg_free_energy,delta\n");
        for run in &model.runs {
            for (t, v) in run.neg_free_energy.iter().enumerate() {
                let delta = if t == 0 { String::new() } else { format!("{:?}", run.deltas[t - 1]) };
                let _ = writeln!(csv, "{},{},{:?},{}", run.restart, t, v, delta);
            }
        }
        write_text(&cfg.output_dir.join(format!("monotonicity_m{}.csv", model.m)), &csv)?;
    }
    if report.passed {
        eprintln!("all traces monotone");
        Ok(())
    } else {
        let mut bad: Vec<String> = report
            .models
            .iter()
            .flat_map(|m| {
                m.runs
                    .iter()
                    .filter(|r| !r.violations.is_empty())
                    .map(move |r| format!("m={} restart {} at iteration {}", m.m, r.restart, r.violations[0]))
            })
            .collect();
        for m in report.models.iter().filter(|m| m.converged_to_unique == Some(false)) {
            bad.push(format!(
                "m={} restarts end {:.3e} apart",
                m.m,
                m.final_spread.unwrap_or(f64::NAN)
            ));
        }
        Err(CliError::Verification(format!("monotonicity check failed: {}", bad.join("; "))))
    }
}

pub fn monotonicity_markdown(r: &MonotonicityReport) -> String {
    let mut s = String::from("# Fixed-state monotonicity\n\n");
    let _ = writeln!(s, "| m | restarts | max step dF | final F spread | monotone | unique optimum |");
    let _ = writeln!(s, "|---|---|---|---|---|---|");
    for m in &r.models {
        let _ = writeln!(
            s,
            "| {} | {} | {:.3e} | {} | {} | {} |",
            m.m,
            m.runs.len(),
            m.max_delta,
            m.final_spread.map_or_else(|| "n/a".into(), |v| format!("{v:.3e}")),
            m.monotone,
            m.converged_to_unique.map_or_else(|| "n/a".into(), |v| v.to_string())
        );
    }
    let _ = writeln!(s, "\nOverall: {}", if r.passed { "pass" } else { "fail" });
    s
}

pub fn verify(path: &Path, overrides: &[String]) -> Result<(), CliError> {
    let cfg: VerifyConfig = load(path, overrides)?;
    prepare_output(&cfg.report_out)?;
    let report = run_gates(&GateOptions {
        gates: cfg.gates.clone(),
        seed: cfg.seed,
        perturb_log_partition: cfg.perturb_log_partition,
    })?;
    write_json(&cfg.report_out, &report)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    for g in &report.gates {
        println!(
            "{:<18} {} max error {:.3e} (tolerance {:.0e}, {} checks)",
            g.name,
            if g.passed { "PASS" } else { "FAIL" },
            g.max_error,
            g.tolerance,
            g.checks
        );
    }
    if report.all_passed {
        Ok(())
    } else {
        Err(CliError::Verification("one or more oracle gates failed".into()))
    }
}
