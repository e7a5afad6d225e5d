//! The four verbs: `run`, `compare`, `plan`, `sweep`.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use hybrid_epr_core::decoherence::{apply_budget, damping_penalty, mismatch_penalty};
use hybrid_epr_core::names::{ATOM, MECH};
use hybrid_epr_core::oracle::{build_model, conditional_epr, propagate_moments, OracleOptions};
use hybrid_epr_core::protocols::{
    predicted_report, run_epr_generation, teleport, verify_epr, verify_epr_sampled, Outcomes,
};
use hybrid_epr_core::{GaussianState, ModeLabel, ModeSpec, ProtocolParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{CliError, CliResult, Context};
use crate::report::{
    write_rows, write_trajectory, CompareResult, EprResult, ExcessCheck, Metadata, ProtocolResult, Report,
    SweepPoint, SweepResult, TeleportResult, VerifyResult, SCHEMA_VERSION,
};
use crate::scenario::{from_tree, load_tree, set_numeric, Format, ProtocolKind, Resolved, Scenario};

/// Command-line overrides shared by all verbs.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub seed: Option<u64>,
    pub oracle_steps: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verb {
    Run,
    Compare,
    Plan,
    Sweep,
}

impl Verb {
    fn name(self) -> &'static str {
        match self {
            Verb::Run => "run",
            Verb::Compare => "compare",
            Verb::Plan => "plan",
            Verb::Sweep => "sweep",
        }
    }
}

fn apply_overrides(tree: &mut toml::Table, o: &Overrides) -> CliResult<()> {
    if let Some(seed) = o.seed {
        let seed = i64::try_from(seed).map_err(|_| CliError::validation("--seed: must fit in a signed 64-bit integer"))?;
        tree.insert("seed".into(), toml::Value::Integer(seed));
    }
    if let Some(steps) = o.oracle_steps {
        let oracle = tree
            .entry("oracle")
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        let toml::Value::Table(t) = oracle else {
            return Err(CliError::validation("key `oracle`: expected a table"));
        };
        t.insert("steps_per_period".into(), toml::Value::Integer(steps as i64));
    }
    Ok(())
}

/// Load, run and write the report for one verb. Returns the report.
pub fn execute(verb: Verb, scenario_path: &Path, o: &Overrides) -> CliResult<Report> {
    let mut tree = load_tree(scenario_path)?;
    apply_overrides(&mut tree, o)?;
    let scenario = from_tree(tree.clone())?;
    let report = build_report(verb, &scenario, &tree)?;

    let format = o.format.or(scenario.output.format).unwrap_or_default();
    let out = o.out.clone().or_else(|| scenario.output.path.clone());
    write_report(&report, format, out.as_deref())?;

    if let (Some(path), Some(ProtocolResult::OracleCompare(c))) = (&scenario.output.trajectory, &report.result) {
        write_trajectory(create(path)?, &c.trajectory)?;
    }
    Ok(report)
}

/// Run a verb on an already parsed scenario. `tree` is the raw TOML the
/// scenario came from, used to derive sweep points.
pub fn build_report(verb: Verb, scenario: &Scenario, tree: &toml::Table) -> CliResult<Report> {
    let protocol = match verb {
        Verb::Plan => scenario.protocol,
        Verb::Compare => match scenario.protocol {
            None | Some(ProtocolKind::OracleCompare) => Some(ProtocolKind::OracleCompare),
            Some(_) => {
                return Err(CliError::validation(
                    "key `protocol`: compare needs `oracle_compare` (or no protocol)",
                ))
            }
        },
        Verb::Run | Verb::Sweep => Some(scenario.protocol()?),
    };
    let mut resolved = resolve_for(scenario, protocol, verb)?;
    let feasibility = resolved.feasibility.take();

    let mut report = Report {
        schema_version: SCHEMA_VERSION,
        command: verb.name(),
        protocol,
        seed: scenario.seed,
        resolved,
        feasibility,
        result: None,
        sweep: None,
        metadata: Metadata::now(),
    };

    match verb {
        Verb::Plan => {
            if report.feasibility.is_none() {
                return Err(CliError::validation("key `setup`: plan needs a hardware `setup` section"));
            }
        }
        Verb::Sweep if scenario.sweep.is_none() => {
            return Err(CliError::validation("key `sweep`: missing"));
        }
        _ => {
            let kind = protocol.expect("protocol is set for run, sweep and compare");
            match &scenario.sweep {
                Some(sweep) => {
                    report.sweep = Some(run_sweep(verb, kind, scenario.seed, tree, &sweep.parameter, &sweep.values)?);
                }
                None => report.result = Some(run_protocol(kind, &report.resolved, scenario.seed)?),
            }
        }
    }
    Ok(report)
}

fn resolve_for(scenario: &Scenario, protocol: Option<ProtocolKind>, verb: Verb) -> CliResult<Resolved> {
    let mut resolved = scenario.resolve(protocol)?;
    if verb == Verb::Compare || protocol == Some(ProtocolKind::OracleCompare) {
        resolved.oracle = trajectory_options(resolved.oracle, scenario);
    }
    Ok(resolved)
}

fn trajectory_options(mut opts: OracleOptions, scenario: &Scenario) -> OracleOptions {
    if scenario.output.trajectory.is_some() && opts.record_every == 0 {
        opts.record_every = 1;
    }
    opts
}

fn run_sweep(
    verb: Verb,
    kind: ProtocolKind,
    seed: u64,
    tree: &toml::Table,
    parameter: &str,
    values: &[f64],
) -> CliResult<SweepResult> {
    // Build every point up front so path and validation errors surface in order.
    let mut points = Vec::with_capacity(values.len());
    for (i, &value) in values.iter().enumerate() {
        let mut t = tree.clone();
        t.remove("sweep");
        set_numeric(&mut t, parameter, value)?;
        let s = from_tree(t)?;
        let resolved = resolve_for(&s, Some(kind), verb)?;
        points.push((value, seed.wrapping_add(i as u64), resolved));
    }
    let results: Vec<CliResult<SweepPoint>> = points
        .into_par_iter()
        .map(|(value, seed, resolved)| {
            let result = run_protocol(kind, &resolved, seed)?;
            Ok(SweepPoint {
                value,
                seed,
                params: resolved.params,
                row: result.row(),
                result,
            })
        })
        .collect();
    Ok(SweepResult {
        parameter: parameter.to_owned(),
        points: results.into_iter().collect::<CliResult<_>>()?,
    })
}

fn initial_state(params: &ProtocolParams) -> CliResult<GaussianState> {
    GaussianState::make_state(&[
        ModeSpec::thermal(ModeLabel::mechanical(MECH), params.n_i),
        ModeSpec::vacuum(ModeLabel::atomic(ATOM)),
    ])
    .ctx("model.n_i")
}

/// Execute one protocol for fully resolved inputs.
pub fn run_protocol(kind: ProtocolKind, r: &Resolved, seed: u64) -> CliResult<ProtocolResult> {
    Ok(match kind {
        ProtocolKind::EprConditional | ProtocolKind::EprFeedback => ProtocolResult::Epr(generate(r, seed)?),
        ProtocolKind::Verify => {
            let generated = generate(r, seed)?;
            let v = verify_epr(&generated.state, &r.params).ctx("verify")?;
            let shots = match r.verify_shots {
                None => None,
                Some(n) => {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
                    Some(verify_epr_sampled(&generated.state, &r.params, n, &mut rng).ctx("verify.shots")?)
                }
            };
            ProtocolResult::Verify(VerifyResult {
                predicted: generated.predicted.clone(),
                inferred: v.inferred,
                post: v.post_report,
                shots,
                generated,
            })
        }
        ProtocolKind::Teleport => {
            let generated = generate(r, seed)?;
            let out = teleport(&generated.state, &r.teleport).ctx("teleport")?;
            ProtocolResult::Teleport(TeleportResult {
                predicted: generated.predicted,
                resource: generated.idealized,
                fidelity: out.fidelity,
                added_noise: out.added_noise,
                output_state: out.state,
            })
        }
        ProtocolKind::OracleCompare => ProtocolResult::OracleCompare(compare(r)?),
    })
}

fn generate(r: &Resolved, seed: u64) -> CliResult<EprResult> {
    let p = &r.params;
    let initial = initial_state(p)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let outcomes = match r.outcomes {
        Some(o) => Outcomes::Given(o),
        None => Outcomes::Sampled(&mut rng),
    };
    let run = run_epr_generation(&initial, p, r.feedback, outcomes).ctx("model")?;
    let kappa = p.effective_kappa();
    let achieved = apply_budget(&run.report, &r.losses, kappa, p.n_i).ctx("losses")?;
    Ok(EprResult {
        predicted: predicted_report(kappa, p.n_i).ctx("model")?,
        idealized: run.report,
        achieved,
        records: run.records,
        gains: run.gains,
        warnings: run.warnings,
        state: run.state,
    })
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b) / b.abs()
    }
}

/// Predicted, idealized-map and oracle EPR variance side by side.
pub fn compare(r: &Resolved) -> CliResult<CompareResult> {
    let p = r.params;
    let opts = r.oracle;
    let kappa = p.effective_kappa();
    let delta_predicted = predicted_report(kappa, p.n_i).ctx("model")?.delta_epr;

    // The idealized map needs matched couplings; with the oracle's mismatch
    // switched on it runs at the mean strength.
    let mut ideal_params = p;
    if opts.mismatch {
        if let Ok(eps) = p.matching_error() {
            ideal_params.eps_mismatch = ideal_params.eps_mismatch.max(eps.abs());
        }
    }
    let initial = initial_state(&p)?;
    let idealized = run_epr_generation(
        &initial,
        &ideal_params,
        hybrid_epr_core::protocols::FeedbackConfig::CONDITIONAL,
        Outcomes::Given([0.0, 0.0]),
    )
    .ctx("model")?
    .report;

    let oracle_epr = |params: &ProtocolParams, opts: OracleOptions| -> CliResult<_> {
        let model = build_model(params, opts).ctx("oracle")?;
        let run = propagate_moments(&model).ctx("oracle")?;
        let epr = conditional_epr(&run.state).ctx("oracle")?;
        Ok((epr, run))
    };
    let (oracle, run) = oracle_epr(&p, opts)?;

    let reference = |opts: OracleOptions| -> CliResult<f64> {
        let quiet = OracleOptions {
            record_every: 0,
            check_convergence: false,
            ..opts
        };
        Ok(oracle_epr(&ideal_params, quiet)?.0.delta_epr)
    };
    let excess = |parameter: f64, penalty: f64, excess: f64| ExcessCheck {
        parameter,
        penalty,
        excess,
        ratio: excess / penalty,
    };
    let mismatch = if opts.mismatch {
        let eps = p.matching_error().unwrap_or(0.0);
        let base = reference(OracleOptions { mismatch: false, ..opts })?;
        Some(excess(eps, mismatch_penalty(eps, kappa, p.n_i), oracle.delta_epr - base))
    } else {
        None
    };
    let damping = if opts.damping {
        let base = reference(OracleOptions { damping: false, ..opts })?;
        let gt = p.gamma_m_tau();
        Some(excess(gt, 2.0 * damping_penalty(gt, p.n_th), oracle.delta_epr - base))
    } else {
        None
    };

    Ok(CompareResult {
        delta_predicted,
        delta_idealized: idealized.delta_epr,
        delta_oracle: oracle.delta_epr,
        rel_dev_idealized: rel(idealized.delta_epr, delta_predicted),
        rel_dev_oracle: rel(oracle.delta_epr, delta_predicted),
        oracle,
        steps: run.steps,
        conservation_drift: run.conservation_drift,
        richardson_change: run.richardson_change,
        mismatch,
        damping,
        trajectory: run.trajectory,
    })
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| CliError::Io {
            path: path.to_owned(),
            source,
        })
}

fn write_report(report: &Report, format: Format, out: Option<&Path>) -> CliResult<()> {
    let io_err = |path: &Path| {
        let path = path.to_owned();
        move |source| CliError::Io { path, source }
    };
    let mut sink: Box<dyn Write> = match out {
        Some(path) => Box::new(create(path)?),
        None => Box::new(io::stdout().lock()),
    };
    let target = out.unwrap_or(Path::new("<stdout>"));
    match format {
        Format::Json => {
            let text = report.to_json()?;
            sink.write_all(text.as_bytes()).map_err(io_err(target))?;
        }
        Format::Csv => {
            let (column, rows) = report.rows();
            if rows.is_empty() {
                return Err(CliError::validation("key `output.format`: csv needs a protocol result"));
            }
            write_rows(&mut sink, &column, &rows)?;
        }
    }
    sink.flush().map_err(io_err(target))
}
