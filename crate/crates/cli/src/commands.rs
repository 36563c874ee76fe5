//! Subcommand implementations. Each returns the manifest it wrote.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use vlearn_core::basis::FeatureMap;
use vlearn_core::data::Dataset;
use vlearn_core::evalkit::{format_action_probabilities, report_action_probabilities, summarize, Method, OnlineExperiment, OnlineMode};
use vlearn_core::ggq::{fit_ggq, GgqConfig, GreedyPolicy};
use vlearn_core::policy::Policy;
use vlearn_core::propensity::{fit_logistic_propensity, PropensityModel};
use vlearn_core::simenv::{generate_offline, rollout_value, DEFAULT_BURN_IN};
use vlearn_core::vlearn::{
    default_lambda_theta, evaluate_policy, optimize_policy, reference_vector, SearchConfig, ValueProblem,
};

use crate::config::{parse_list, Settings};
use crate::error::CliError;
use crate::experiments::{pool, run_online, run_table, wide_grid, TableOptions};
use crate::io::{
    load_dataset, read_policy, write_dataset, write_policy, write_replications, write_result_rows, Report,
    ReplicationValue, Schema, StoredPolicy,
};
use crate::manifest::{manifest_path, Manifest, Recorder};

pub const SIMULATE_KEYS: &[&str] = &["env", "n", "T", "seed", "burn_in", "out"];
pub const FIT_KEYS: &[&str] = &[
    "data",
    "method",
    "basis",
    "gamma",
    "seed",
    "propensity",
    "utility",
    "glucose_index",
    "actions",
    "state_columns",
    "lambda_beta",
    "lambda_theta",
    "nu",
    "epsilon",
    "out",
    "policy",
];
pub const EVALUATE_KEYS: &[&str] = &[
    "policy",
    "env",
    "n_eval",
    "t_eval",
    "burn_in",
    "seed",
    "data",
    "basis",
    "gamma",
    "propensity",
    "utility",
    "glucose_index",
    "actions",
    "state_columns",
    "lambda_theta",
    "nu",
    "state",
    "out",
];
pub const ONLINE_KEYS: &[&str] = &[
    "env", "method", "basis", "mode", "n", "T", "gamma", "seed", "reps", "threads", "out",
];
pub const REPRODUCE_KEYS: &[&str] = &["table", "reps", "seed", "gamma", "n_eval", "t_eval", "threads", "out"];

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| CliError::io(path, e))?))
}

fn out_path(s: &Settings, default: &str) -> PathBuf {
    s.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

pub fn simulate(mut s: Settings) -> Result<Manifest, CliError> {
    s.restrict("simulate", SIMULATE_KEYS)?;
    let seed = s.resolve_seed()?;
    let env = s.env()?;
    let n = s.positive("n", s.n, 25)?;
    let horizon = s.positive("T", s.horizon, 24)?;
    let burn_in = s.burn_in.unwrap_or(DEFAULT_BURN_IN);
    let out = out_path(&s, "data.csv");
    let mut rec = Recorder::start("simulate", &s, seed);
    let data = generate_offline(&env, &env.behavior_policy(), n, horizon, burn_in, seed)?;
    write_dataset(&data, create(&out)?)?;
    rec.output(&out);
    rec.finish(&manifest_path(&out))
}

fn schema(s: &Settings) -> Result<Schema, CliError> {
    Ok(Schema {
        state_columns: s
            .state_columns
            .as_ref()
            .map(|c| c.split(',').map(|x| x.trim().to_string()).collect()),
        utility: s.utility()?,
        action_count: s.actions,
        ..Schema::default()
    })
}

/// `logged`, `logistic` or `known:p0,p1,...`; by default logged
/// probabilities when the file has them, else a logistic fit.
fn propensity(s: &Settings, data: &Dataset) -> Result<PropensityModel, CliError> {
    let logged = data.trajectories().iter().all(|t| t.behavior_probs().is_some());
    let kind = s.propensity.as_deref().unwrap_or(if logged { "logged" } else { "logistic" });
    match kind {
        "logged" if logged => Ok(PropensityModel::logged()),
        "logged" => Err(CliError::Validation("propensity = logged needs a 'propensity' column".into())),
        "logistic" => Ok(fit_logistic_propensity(data)?.model),
        other => match other.strip_prefix("known:") {
            Some(list) => Ok(PropensityModel::known(parse_list("propensity", list)?)?),
            None => Err(CliError::Usage(format!(
                "unknown propensity '{other}' (expected logged, logistic or known:p0,p1,...)"
            ))),
        },
    }
}

fn search_config(s: &Settings, seed: u64) -> Result<SearchConfig, CliError> {
    Ok(SearchConfig {
        lambda_beta: s.lambda_beta,
        lambda_theta: s.lambda_theta,
        nu_mode: s.nu_mode()?,
        seed,
        ..SearchConfig::default()
    })
}

fn interval(report: &mut Report, value: f64, variance: f64, n: usize) {
    let se = (variance / n as f64).sqrt();
    report.scalar("value", value);
    report.scalar("variance", variance);
    report.scalar("std_error", se);
    report.scalar("ci_lower", value - 1.96 * se);
    report.scalar("ci_upper", value + 1.96 * se);
}

pub fn fit(mut s: Settings) -> Result<Manifest, CliError> {
    s.restrict("fit", FIT_KEYS)?;
    let seed = s.resolve_seed()?;
    let gamma = s.gamma()?;
    let data_path = s.required_path("data", &s.data)?.to_path_buf();
    let data = load_dataset(&data_path, &schema(&s)?)?;
    let out = out_path(&s, "fit_report.csv");
    let policy_path = s.policy.clone().unwrap_or_else(|| out.with_extension("policy.csv"));
    let mut rec = Recorder::start("fit", &s, seed);
    let mut report = Report::default();
    report.scalar("n_patients", data.n_patients() as f64);
    report.scalar("transitions", data.transition_count() as f64);
    let stored = match s.method.as_deref().unwrap_or("vl") {
        "vl" => {
            let basis = s.basis()?;
            let prop = propensity(&s, &data)?;
            let fmap = FeatureMap::fit(basis, &data)?;
            let fit = optimize_policy(&data, &prop, &fmap, gamma, &search_config(&s, seed)?)?;
            let problem = ValueProblem::new(&data, &prop, &fmap, gamma)?;
            let variance = problem.variance(&fit.policy, &fit.model.theta, &fit.model.nu)?;
            interval(&mut report, fit.value, variance, data.n_patients());
            report.scalar("objective", fit.objective);
            report.scalar("baseline_objective", fit.baseline_objective);
            report.scalar("lambda_theta", fit.lambda_theta);
            report.scalar("lambda_beta", fit.lambda_beta);
            report.scalar("evaluations", fit.evaluations as f64);
            report.vector("beta", fit.policy.beta());
            report.vector("search_beta", &fit.search_beta);
            report.vector("theta", fit.model.theta.as_slice());
            report.vector("nu", fit.model.nu.as_slice());
            StoredPolicy::Softmax(fit.policy)
        }
        "ggq" => {
            let fit = fit_ggq(&data, gamma, &GgqConfig { seed, ..GgqConfig::default() })?;
            report.scalar("objective", fit.objective);
            report.scalar("warm_objective", fit.warm_objective);
            report.scalar("evaluations", fit.evaluations as f64);
            report.scalar("improved", if fit.improved { 1.0 } else { 0.0 });
            report.vector("eta", fit.model.eta());
            StoredPolicy::Greedy(GreedyPolicy::with_epsilon(fit.model, s.epsilon.unwrap_or(0.0))?)
        }
        other => return Err(CliError::Usage(format!("unknown method '{other}' (expected vl or ggq)"))),
    };
    report.write(create(&out)?)?;
    rec.output(&out);
    write_policy(&stored, create(&policy_path)?)?;
    rec.output(&policy_path);
    rec.finish(&manifest_path(&out))
}

pub fn evaluate(mut s: Settings) -> Result<Manifest, CliError> {
    s.restrict("evaluate", EVALUATE_KEYS)?;
    let seed = s.resolve_seed()?;
    let policy_path = s.required_path("policy", &s.policy)?.to_path_buf();
    let file = File::open(&policy_path).map_err(|e| CliError::io(&policy_path, e))?;
    let stored = read_policy(file).map_err(|e| e.in_file(&policy_path))?;
    let policy: &dyn Policy = stored.as_policy();
    if s.env.is_none() && s.data.is_none() && s.state.is_none() {
        return Err(CliError::Usage("evaluate needs at least one of 'env', 'data' or 'state'".into()));
    }
    let out = out_path(&s, "evaluation.csv");
    let mut rec = Recorder::start("evaluate", &s, seed);
    let mut report = Report::default();
    let mut labels: Vec<String> = (0..policy.action_count()).map(|a| format!("action {a}")).collect();
    if s.env.is_some() {
        let env = s.env()?;
        if env.state_dim() != stored.state_dim() || env.action_count() != policy.action_count() {
            return Err(CliError::Validation(format!(
                "policy has {} actions on {} state components; env {} has {} on {}",
                policy.action_count(),
                stored.state_dim(),
                env.name(),
                env.action_count(),
                env.state_dim()
            )));
        }
        labels = env.action_labels();
        let n_eval = s.positive("n_eval", s.n_eval, 100)?;
        let t_eval = s.positive("t_eval", s.t_eval, 100)?;
        let burn_in = s.burn_in.unwrap_or(DEFAULT_BURN_IN);
        report.scalar("rollout_value", rollout_value(&env, policy, n_eval, t_eval, burn_in, seed)?);
    }
    if let Some(path) = s.data.clone() {
        let data = load_dataset(&path, &schema(&s)?)?;
        let gamma = s.gamma()?;
        let prop = propensity(&s, &data)?;
        let fmap = FeatureMap::fit(s.basis()?, &data)?;
        let problem = ValueProblem::new(&data, &prop, &fmap, gamma)?;
        let nu = reference_vector(&data, &fmap, s.nu_mode()?)?;
        let lambda = s.lambda_theta.unwrap_or_else(|| default_lambda_theta(data.n_patients()));
        let model = evaluate_policy(&problem, policy, &nu, &fmap, lambda)?;
        let variance = problem.variance(policy, &model.theta, &model.nu)?;
        interval(&mut report, model.policy_value(), variance, data.n_patients());
        report.vector("theta", model.theta.as_slice());
    }
    if let Some(text) = s.state.clone() {
        let state = parse_list("state", &text)?;
        if state.len() != stored.state_dim() {
            return Err(CliError::Validation(format!(
                "state has {} components, policy expects {}",
                state.len(),
                stored.state_dim()
            )));
        }
        let rows = report_action_probabilities(policy, &state, &labels)?;
        print!("{}", format_action_probabilities(&rows));
        report.vector("probability", &rows.iter().map(|r| r.1).collect::<Vec<_>>());
    }
    report.write(create(&out)?)?;
    rec.output(&out);
    rec.finish(&manifest_path(&out))
}

pub fn online(mut s: Settings) -> Result<Manifest, CliError> {
    s.restrict("online", ONLINE_KEYS)?;
    let seed = s.resolve_seed()?;
    let env = s.env()?;
    let gamma = s.gamma()?;
    let n = s.positive("n", s.n, 25)?;
    let horizon = s.positive("T", s.horizon, 24)?;
    let reps = s.positive("reps", s.reps, 1)?;
    let method = match s.method.as_deref().unwrap_or("vl") {
        "vl" => Method::VLearn(s.basis()?),
        "ggq" => Method::Ggq,
        other => return Err(CliError::Usage(format!("unknown method '{other}' (expected vl or ggq)"))),
    };
    let mode = match s.mode.as_deref().unwrap_or("universal") {
        "universal" => OnlineMode::Universal,
        "individualized" => OnlineMode::Individualized,
        other => {
            return Err(CliError::Usage(format!(
                "unknown mode '{other}' (expected universal or individualized)"
            )))
        }
    };
    let experiment = OnlineExperiment {
        env,
        method,
        mode,
        n,
        horizon,
        gamma,
        seed,
        search: SearchConfig::default(),
        ggq: GgqConfig::default(),
    };
    experiment.estimator()?;
    let workers = pool(s.threads)?;
    let out = out_path(&s, "online.csv");
    let mut rec = Recorder::start("online", &s, seed);
    let values = run_online(&experiment, reps, &workers);
    let ok: Vec<f64> = values.iter().flatten().copied().collect();
    if ok.is_empty() {
        return Err(CliError::Runtime("every online replication failed".into()));
    }
    let id = match mode {
        OnlineMode::Universal => method.id(),
        OnlineMode::Individualized => format!("{}_individualized", method.id()),
    };
    let row = summarize(&id, n, horizon, gamma, &ok);
    write_result_rows(&[row], create(&out)?)?;
    rec.output(&out);
    let per_rep: Vec<ReplicationValue> = values
        .into_iter()
        .enumerate()
        .map(|(r, v)| ReplicationValue {
            method: id.clone(),
            n,
            horizon,
            replication: r,
            value: v,
        })
        .collect();
    let rep_path = out.with_extension("replications.csv");
    write_replications(&per_rep, create(&rep_path)?)?;
    rec.output(&rep_path);
    rec.finish(&manifest_path(&out))
}

pub fn reproduce(mut s: Settings) -> Result<Manifest, CliError> {
    s.restrict("reproduce", REPRODUCE_KEYS)?;
    let seed = s.resolve_seed()?;
    let table = s.table.ok_or_else(|| CliError::Usage("missing key 'table'".into()))?;
    let options = TableOptions {
        replications: s.reps.unwrap_or(100),
        seed,
        gamma: s.gamma()?,
        n_eval: s.positive("n_eval", s.n_eval, 100)?,
        t_eval: s.positive("t_eval", s.t_eval, 100)?,
    };
    if options.replications == 0 {
        return Err(CliError::Validation("replication count must be at least 1".into()));
    }
    crate::experiments::table_spec(table)?;
    let workers = pool(s.threads)?;
    let dir = out_path(&s, &format!("table{table}"));
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let mut rec = Recorder::start("reproduce", &s, seed);
    let result = run_table(table, &options, &workers)?;
    let long = dir.join(format!("table{table}.csv"));
    write_result_rows(&result.rows, create(&long)?)?;
    rec.output(&long);
    let grid = dir.join(format!("table{table}_grid.csv"));
    {
        let mut w = csv::Writer::from_writer(create(&grid)?);
        for line in wide_grid(&result) {
            w.write_record(&line)?;
        }
        w.flush()?;
    }
    rec.output(&grid);
    let reps = dir.join(format!("table{table}_replications.csv"));
    write_replications(&result.values, create(&reps)?)?;
    rec.output(&reps);
    rec.finish(&dir.join(format!("table{table}.manifest.toml")))
}
