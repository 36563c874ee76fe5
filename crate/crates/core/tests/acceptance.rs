//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. `ACCEPTANCE_ONLY=1,3,8` runs a subset.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;

use vlearn_core::basis::{BasisKind, FeatureMap};
use vlearn_core::data::{glycemic_weight, Dataset, Trajectory};
use vlearn_core::evalkit::{aggregate, run_replication, ExperimentConfig, Method, OnlineExperiment, OnlineMode};
use vlearn_core::ggq::{fit_ggq, GgqConfig, GreedyPolicy, QModel};
use vlearn_core::online::{run_online, run_online_individualized, OnlineConfig, OnlineResult, VLearnEstimator};
use vlearn_core::policy::{epsilon_greedy, sample_index, FixedPolicy, Policy, SoftmaxPolicy};
use vlearn_core::propensity::PropensityModel;
use vlearn_core::rng::{derive_seed, stream_rng};
use vlearn_core::simenv::{generate_offline, patient_rng, rollout_value, SimEnv, DEFAULT_BURN_IN};
use vlearn_core::vlearn::{
    default_lambda_theta, evaluate_policy, optimize_policy, reference_vector, solve_theta, NuMode, SearchConfig,
    ValueProblem,
};

struct Outcome {
    pass: bool,
    details: String,
}

fn outcome(pass: bool, details: String) -> Outcome {
    Outcome { pass, details }
}

// ---------------------------------------------------------------------------
// two-state, two-action chain

const GAMMA_CHAIN: f64 = 0.9;

/// P(s' = 1 | s, a)
fn p_up(s: usize, a: usize) -> f64 {
    [[0.2, 0.7], [0.4, 0.9]][s][a]
}

fn chain_utility(s: usize, a: usize, next: usize) -> f64 {
    2.0 * next as f64 - s as f64 - 0.5 * a as f64
}

fn chain_policies() -> Vec<(&'static str, Arc<dyn Policy>)> {
    vec![
        ("always 0", Arc::new(FixedPolicy::new(vec![1.0, 0.0]).unwrap())),
        ("fixed 0.2/0.8", Arc::new(FixedPolicy::new(vec![0.2, 0.8]).unwrap())),
        ("softmax 2s-1", Arc::new(SoftmaxPolicy::new(2, 1, vec![2.0, -1.0]).unwrap())),
    ]
}

/// Solves `(I − γPπ)V = rπ` by Cramer's rule.
fn chain_dp(policy: &dyn Policy, gamma: f64) -> [f64; 2] {
    let mut m = [[0.0; 2]; 2];
    let mut r = [0.0; 2];
    for s in 0..2 {
        let pi = policy.probabilities(&[s as f64]);
        for a in 0..2 {
            for next in 0..2 {
                let p = if next == 1 { p_up(s, a) } else { 1.0 - p_up(s, a) };
                m[s][next] += pi[a] * p;
                r[s] += pi[a] * p * chain_utility(s, a, next);
            }
        }
    }
    let i_minus = [
        [1.0 - gamma * m[0][0], -gamma * m[0][1]],
        [-gamma * m[1][0], 1.0 - gamma * m[1][1]],
    ];
    let det = i_minus[0][0] * i_minus[1][1] - i_minus[0][1] * i_minus[1][0];
    [
        (r[0] * i_minus[1][1] - i_minus[0][1] * r[1]) / det,
        (i_minus[0][0] * r[1] - i_minus[1][0] * r[0]) / det,
    ]
}

fn chain_basis() -> FeatureMap {
    FeatureMap::tabular(vec![vec![0.0], vec![1.0]]).unwrap()
}

fn chain_values(theta: &DVector<f64>, fmap: &FeatureMap) -> [f64; 2] {
    let v = |s: f64| {
        let phi = fmap.features(&[s]).unwrap();
        phi.iter().zip(theta.iter()).map(|(a, b)| a * b).sum::<f64>()
    };
    [v(0.0), v(1.0)]
}

fn criterion_1() -> Outcome {
    let clock = Instant::now();
    let fmap = chain_basis();
    let uniform = PropensityModel::known(vec![0.5, 0.5]).unwrap();
    let start = [0.5, 0.5];
    let mut trajectories = Vec::new();
    let mut mass = Vec::new();
    for s in 0..2 {
        for a in 0..2 {
            for next in 0..2 {
                let p = if next == 1 { p_up(s, a) } else { 1.0 - p_up(s, a) };
                let id = format!("{s}{a}{next}");
                let states = vec![s as f64, next as f64];
                trajectories.push(
                    Trajectory::new(id, 1, states, vec![a], vec![chain_utility(s, a, next)], vec![]).unwrap(),
                );
                mass.push(start[s] * 0.5 * p);
            }
        }
    }
    let n = trajectories.len() as f64;
    let data = Dataset::new(trajectories, 2).unwrap();
    let problem = ValueProblem::new(&data, &uniform, &fmap, GAMMA_CHAIN).unwrap();
    let mut worst: f64 = 0.0;
    for (_, policy) in chain_policies() {
        let ratio = problem.weights(policy.as_ref()).unwrap();
        let weights: Vec<f64> = ratio.iter().zip(&mass).map(|(w, m)| w * m * n).collect();
        let system = problem.assemble_weighted(&weights);
        let theta = solve_theta(&system, 0.0).unwrap();
        let got = chain_values(&theta, &fmap);
        let want = chain_dp(policy.as_ref(), GAMMA_CHAIN);
        for s in 0..2 {
            worst = worst.max((got[s] - want[s]).abs());
        }
    }
    let secs = clock.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-8 && secs < 1.0,
        format!("max |θ̂ − V_DP| = {worst:.2e} (tol 1e-8) over 3 policies, {secs:.3} s (limit 1 s)"),
    )
}

fn simulate_chain(n: usize, horizon: usize, seed: u64) -> Dataset {
    let trajectories = (0..n)
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            let mut s = usize::from(rng.random::<f64>() < 0.5);
            let mut states = vec![s as f64];
            let mut actions = Vec::with_capacity(horizon);
            let mut utilities = Vec::with_capacity(horizon);
            for _ in 0..horizon {
                let a = usize::from(rng.random::<f64>() < 0.5);
                let next = usize::from(rng.random::<f64>() < p_up(s, a));
                actions.push(a);
                utilities.push(chain_utility(s, a, next));
                states.push(next as f64);
                s = next;
            }
            Trajectory::new(format!("{}", i + 1), 1, states, actions, utilities, vec![]).unwrap()
        })
        .collect();
    Dataset::new(trajectories, 2).unwrap()
}

fn criterion_2() -> Outcome {
    let clock = Instant::now();
    let (n, horizon) = (100, 500);
    let data = simulate_chain(n, horizon, 2024);
    let fmap = chain_basis();
    let uniform = PropensityModel::known(vec![0.5, 0.5]).unwrap();
    let problem = ValueProblem::new(&data, &uniform, &fmap, GAMMA_CHAIN).unwrap();
    let lambda = default_lambda_theta(n);
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for (name, policy) in chain_policies() {
        let system = problem.assemble(policy.as_ref()).unwrap();
        let theta = solve_theta(&system, lambda).unwrap();
        let got = chain_values(&theta, &fmap);
        let want = chain_dp(policy.as_ref(), GAMMA_CHAIN);
        let err = (got[0] - want[0]).abs().max((got[1] - want[1]).abs());
        worst = worst.max(err);
        parts.push(format!("{name}: {err:.4}"));
    }
    let secs = clock.elapsed().as_secs_f64();
    outcome(
        worst <= 0.05 && secs < 30.0,
        format!(
            "{} transitions, max error {worst:.4} (tol 0.05) [{}], {secs:.2} s (limit 30 s)",
            n * horizon,
            parts.join("; ")
        ),
    )
}

// ---------------------------------------------------------------------------

/// Gaussian elimination with partial pivoting on a small dense system.
fn gauss_solve(mut m: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Vec<f64> {
    let q = rhs.len();
    for col in 0..q {
        let pivot = (col..q)
            .max_by(|&i, &j| m[i][col].abs().partial_cmp(&m[j][col].abs()).unwrap())
            .unwrap();
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        for row in col + 1..q {
            let f = m[row][col] / m[col][col];
            for k in col..q {
                m[row][k] -= f * m[col][k];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; q];
    for row in (0..q).rev() {
        let tail: f64 = (row + 1..q).map(|k| m[row][k] * x[k]).sum();
        x[row] = (rhs[row] - tail) / m[row][row];
    }
    x
}

fn criterion_3() -> Outcome {
    let toy = SimEnv::from_name("toy").unwrap();
    let t1d = SimEnv::from_name("t1d").unwrap();
    let toy_data = generate_offline(&toy, &toy.behavior_policy(), 25, 24, DEFAULT_BURN_IN, 31).unwrap();
    let t1d_data = generate_offline(&t1d, &t1d.behavior_policy(), 25, 24, DEFAULT_BURN_IN, 32).unwrap();
    let linear_toy = FeatureMap::fit(BasisKind::Linear, &toy_data).unwrap();
    let linear_t1d = FeatureMap::fit(BasisKind::Linear, &t1d_data).unwrap();

    let all_one = |w: &[f64]| w.iter().all(|&x| x == 1.0);
    let known = PropensityModel::known(toy.behavior_policy().probs().to_vec()).unwrap();
    let w_known = ValueProblem::new(&toy_data, &known, &linear_toy, 0.9)
        .unwrap()
        .weights(&toy.behavior_policy())
        .unwrap();
    let w_logged = ValueProblem::new(&t1d_data, &PropensityModel::logged(), &linear_t1d, 0.9)
        .unwrap()
        .weights(&t1d.behavior_policy())
        .unwrap();
    let weights_ok = all_one(&w_known) && all_one(&w_logged);

    // γ = 0 reduces the estimating equation to a regression of U on Φ(s)
    let problem = ValueProblem::new(&toy_data, &known, &linear_toy, 0.0).unwrap();
    let system = problem.assemble(&toy.behavior_policy()).unwrap();
    let q = linear_toy.dim();
    let n = toy_data.n_patients() as f64;
    let mut gram = vec![vec![0.0; q]; q];
    let mut cross = vec![0.0; q];
    for traj in toy_data.trajectories() {
        for (t, &u) in traj.utilities().iter().enumerate() {
            let x = linear_toy.features(traj.state(t)).unwrap();
            for i in 0..q {
                for j in 0..q {
                    gram[i][j] += x[i] * x[j] / n;
                }
                cross[i] += x[i] * u / n;
            }
        }
    }
    let ols = gauss_solve(gram.clone(), cross.clone());
    let mut worst: f64 = 0.0;
    let theta0 = solve_theta(&system, 0.0).unwrap();
    for i in 0..q {
        worst = worst.max((theta0[i] - ols[i]).abs());
    }
    for lambda in [0.05, default_lambda_theta(25), 1.0] {
        // argmin ‖Gθ − c‖² + λ‖θ‖²  ⇔  (GᵀG + λI)θ = Gᵀc
        let mut normal = vec![vec![0.0; q]; q];
        let mut rhs = vec![0.0; q];
        for i in 0..q {
            for j in 0..q {
                normal[i][j] = (0..q).map(|k| gram[k][i] * gram[k][j]).sum::<f64>();
            }
            normal[i][i] += lambda;
            rhs[i] = (0..q).map(|k| gram[k][i] * cross[k]).sum();
        }
        let want = gauss_solve(normal, rhs);
        let theta = solve_theta(&system, lambda).unwrap();
        for i in 0..q {
            worst = worst.max((theta[i] - want[i]).abs());
        }
    }
    outcome(
        weights_ok && worst <= 1e-10,
        format!(
            "on-policy weights all exactly 1: known {} ({} transitions), logged {} ({} transitions); \
             γ = 0 ridge max |Δθ| = {worst:.2e} (tol 1e-10)",
            all_one(&w_known),
            w_known.len(),
            all_one(&w_logged),
            w_logged.len()
        ),
    )
}

// ---------------------------------------------------------------------------

struct CellSummary {
    means: Vec<(Method, f64, f64, usize)>,
}

impl CellSummary {
    fn get(&self, m: Method) -> (f64, f64) {
        self.means
            .iter()
            .find(|r| r.0 == m)
            .map(|r| (r.1, r.2))
            .unwrap_or((f64::NAN, f64::NAN))
    }
}

fn offline_cell(env: &str, n: usize, horizon: usize, reps: usize, seed: u64) -> CellSummary {
    let config = ExperimentConfig {
        methods: vec![Method::VLearn(BasisKind::GaussianRbf), Method::Ggq, Method::Observed],
        ..ExperimentConfig::new(SimEnv::from_name(env).unwrap(), n, horizon, reps, seed)
    };
    let outcomes: Vec<_> = (0..reps)
        .into_par_iter()
        .map(|r| run_replication(&config, r).unwrap())
        .collect();
    let rows = aggregate(&config, &outcomes);
    CellSummary {
        means: config
            .methods
            .iter()
            .zip(rows)
            .map(|(m, r)| (*m, r.mean_value, r.mc_sd, r.replications))
            .collect(),
    }
}

/// Ordering margins plus the ±2 sd band around reference values.
fn table_check(
    env: &str,
    cells: &[((usize, usize), [f64; 3])],
    reps: usize,
    seed: u64,
    obs_margin: f64,
    ggq_margin: f64,
) -> Outcome {
    let clock = Instant::now();
    let methods = [Method::VLearn(BasisKind::GaussianRbf), Method::Ggq, Method::Observed];
    let mut pass = true;
    let mut parts = Vec::new();
    for (cell, &((n, horizon), reference)) in cells.iter().enumerate() {
        let summary = offline_cell(env, n, horizon, reps, derive_seed(seed, cell as u64));
        let (vl, _) = summary.get(methods[0]);
        let (ggq, _) = summary.get(methods[1]);
        let (obs, _) = summary.get(methods[2]);
        let ordering = vl >= obs + obs_margin && vl >= ggq + ggq_margin;
        let mut band = true;
        let mut band_text = Vec::new();
        for (m, r) in methods.iter().zip(reference) {
            let (mean, sd) = summary.get(*m);
            let inside = (mean - r).abs() <= 2.0 * sd;
            band &= inside;
            band_text.push(format!("{} {mean:.3} ({sd:.3}) vs {r:.3}{}", m.label(), if inside { "" } else { " out" }));
        }
        pass &= ordering && band;
        parts.push(format!(
            "(n={n},T={horizon}) ordering {} band {} [{}]",
            if ordering { "ok" } else { "FAIL" },
            if band { "ok" } else { "FAIL" },
            band_text.join(", ")
        ));
    }
    parts.push(format!("{:.0} s", clock.elapsed().as_secs_f64()));
    outcome(pass, parts.join("; "))
}

fn criterion_4() -> Outcome {
    table_check(
        "toy",
        &[((25, 24), [0.110, 0.014, -0.005]), ((100, 48), [0.114, 0.031, -0.001])],
        50,
        4,
        0.05,
        // strictly above GGQ
        f64::MIN_POSITIVE,
    )
}

fn criterion_5() -> Outcome {
    table_check("t1d", &[((100, 48), [-1.494, -2.820, -2.351])], 50, 5, 0.4, 0.5)
}

fn criterion_6() -> Outcome {
    let clock = Instant::now();
    let env = SimEnv::from_name("toy_hetero").unwrap();
    let reps = 20;
    let mut pass = true;
    let mut parts = Vec::new();
    for (cell, (n, horizon)) in [(25usize, 24usize), (100, 24)].into_iter().enumerate() {
        let seed = derive_seed(6, cell as u64);
        let experiment = |mode| OnlineExperiment {
            env,
            method: Method::VLearn(BasisKind::Linear),
            mode,
            n,
            horizon,
            gamma: 0.9,
            seed,
            search: SearchConfig::default(),
            ggq: GgqConfig::default(),
        };
        let universal = experiment(OnlineMode::Universal);
        let individual = experiment(OnlineMode::Individualized);
        let pairs: Vec<(f64, f64)> = (0..reps)
            .into_par_iter()
            .map(|r| (universal.run(r).unwrap(), individual.run(r).unwrap()))
            .collect();
        let wins = pairs.iter().filter(|(u, i)| i > u).count();
        let mean_u = pairs.iter().map(|p| p.0).sum::<f64>() / reps as f64;
        let mean_i = pairs.iter().map(|p| p.1).sum::<f64>() / reps as f64;
        let share = wins as f64 / reps as f64;
        let ok = mean_i > mean_u && share >= 0.95;
        pass &= ok;
        parts.push(format!(
            "(n={n},T={horizon}) individualized {mean_i:.4} vs universal {mean_u:.4}, wins {wins}/{reps} ({:.0}%, need 95%)",
            100.0 * share
        ));
    }
    parts.push(format!("{:.0} s", clock.elapsed().as_secs_f64()));
    outcome(pass, parts.join("; "))
}

// ---------------------------------------------------------------------------

fn coverage_policy() -> SoftmaxPolicy {
    SoftmaxPolicy::new(2, 2, vec![0.8, -0.6, 0.2]).unwrap()
}

/// Discounted value of `policy` from behavior-stationary starts, by
/// Monte Carlo over `starts × steps` simulated transitions.
fn coverage_truth(env: &SimEnv, policy: &dyn Policy, gamma: f64, starts: usize, steps: usize, seed: u64) -> (f64, f64) {
    let behavior = env.behavior_policy();
    let returns: Vec<f64> = (0..starts)
        .into_par_iter()
        .map(|i| {
            let mut rng = patient_rng(seed, i);
            let mut patient = env.new_patient(&mut rng);
            env.burn_in(&mut patient, &behavior, DEFAULT_BURN_IN, &mut rng);
            let mut discount = 1.0;
            let mut total = 0.0;
            let mut probs = [0.0; 2];
            for _ in 0..steps {
                policy.probabilities_into(&patient.state(), &mut probs);
                let a = sample_index(&probs, &mut rng);
                total += discount * env.step(&mut patient, a, &mut rng);
                discount *= gamma;
            }
            total
        })
        .collect();
    let mean = returns.iter().sum::<f64>() / starts as f64;
    let var = returns.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (starts - 1) as f64;
    (mean, (var / starts as f64).sqrt())
}

struct Coverage {
    covered: usize,
    reps: usize,
    truth: f64,
    truth_se: f64,
    mean_value: f64,
    mean_half_width: f64,
}

impl Coverage {
    fn rate(&self) -> f64 {
        self.covered as f64 / self.reps as f64
    }
}

fn coverage(policy: &dyn Policy, seed: u64) -> Coverage {
    let env = SimEnv::from_name("toy").unwrap();
    let gamma = 0.9;
    let (n, horizon, reps) = (100usize, 48usize, 500usize);
    let (truth, truth_se) = coverage_truth(&env, policy, gamma, 50_000, 200, derive_seed(seed, u64::MAX));
    let known = PropensityModel::known(vec![0.5, 0.5]).unwrap();
    let intervals: Vec<(f64, f64)> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let data_seed = derive_seed(seed, r as u64);
            let data = generate_offline(&env, &env.behavior_policy(), n, horizon, DEFAULT_BURN_IN, data_seed).unwrap();
            let fmap = FeatureMap::fit(BasisKind::GaussianRbf, &data).unwrap();
            let problem = ValueProblem::new(&data, &known, &fmap, gamma).unwrap();
            let nu = reference_vector(&data, &fmap, NuMode::AllStates).unwrap();
            let model = evaluate_policy(&problem, policy, &nu, &fmap, default_lambda_theta(n)).unwrap();
            let variance = problem.variance(policy, &model.theta, &nu).unwrap();
            (model.policy_value(), 1.96 * (variance / n as f64).sqrt())
        })
        .collect();
    Coverage {
        covered: intervals.iter().filter(|(v, h)| (v - truth).abs() <= *h).count(),
        reps,
        truth,
        truth_se,
        mean_value: intervals.iter().map(|i| i.0).sum::<f64>() / reps as f64,
        mean_half_width: intervals.iter().map(|i| i.1).sum::<f64>() / reps as f64,
    }
}

fn criterion_7() -> Outcome {
    let clock = Instant::now();
    let main = coverage(&coverage_policy(), 7);
    // on-policy reference run, reported but not gating
    let on_policy = coverage(&FixedPolicy::uniform(2), 70);
    outcome(
        (0.90..=0.98).contains(&main.rate()),
        format!(
            "coverage {}/{} = {:.1}% (need 90-98%); truth {:.4} (MC se {:.4}, 10^7 steps), mean V̂ {:.4}, \
             mean half-width {:.4}; uniform policy for reference: {:.1}%, truth {:.4}, mean V̂ {:.4}; {:.0} s",
            main.covered,
            main.reps,
            100.0 * main.rate(),
            main.truth,
            main.truth_se,
            main.mean_value,
            main.mean_half_width,
            100.0 * on_policy.rate(),
            on_policy.truth,
            on_policy.mean_value,
            clock.elapsed().as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------------------

fn replay_errors(result: &OnlineResult) -> (f64, usize) {
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for (i, traj) in result.dataset.trajectories().iter().enumerate() {
        let logged = traj.behavior_probs().unwrap();
        for (t, &a) in traj.actions().iter().enumerate() {
            let policy = &result.snapshots[result.active[i][t]];
            let p = policy.probabilities(traj.state(t))[a];
            worst = worst.max((p - logged[t]).abs());
            checked += 1;
        }
    }
    (worst, checked)
}

fn criterion_8() -> Outcome {
    let mut failures = Vec::new();
    let mut check = |name: &str, ok: bool| {
        if !ok {
            failures.push(name.to_string());
        }
    };
    let mut rng = stream_rng(8, 0);

    // softmax at β = 0 and normalization
    for k in 2..=8 {
        for p in 1..=4 {
            let uniform = SoftmaxPolicy::uniform(k, p).unwrap();
            let state: Vec<f64> = (0..p).map(|_| rng.random_range(-50.0..50.0)).collect();
            let probs = uniform.probabilities(&state);
            check("softmax uniform at β = 0", probs.iter().all(|&x| (x - 1.0 / k as f64).abs() <= 1e-15));
            let beta: Vec<f64> = (0..(k - 1) * (p + 1)).map(|_| rng.random_range(-20.0..20.0)).collect();
            let probs = SoftmaxPolicy::new(k, p, beta).unwrap().probabilities(&state);
            let sum: f64 = probs.iter().sum();
            check("softmax normalization", (sum - 1.0).abs() <= 1e-12 && probs.iter().all(|&x| x >= 0.0));
        }
    }

    // ε-greedy
    for k in 2..=8 {
        for _ in 0..20 {
            let eps: f64 = rng.random();
            let greedy = rng.random_range(0..k);
            let probs = epsilon_greedy(greedy, k, eps).unwrap();
            let sum: f64 = probs.iter().sum();
            check("ε-greedy sums to 1", (sum - 1.0).abs() <= 1e-12);
            check("ε-greedy greedy mass", (probs[greedy] - (1.0 - eps)).abs() <= 1e-12);
            check(
                "ε-greedy spreads ε evenly",
                probs
                    .iter()
                    .enumerate()
                    .all(|(j, &x)| j == greedy || (x - eps / (k - 1) as f64).abs() <= 1e-12),
            );
        }
        check("ε-greedy at ε = 0 is greedy", epsilon_greedy(1, k, 0.0).unwrap()[1] == 1.0);
    }
    let model = QModel::new(2, 2, vec![0.1, 0.2, -0.3, 0.5, -0.1, 0.4]).unwrap();
    let greedy = GreedyPolicy::with_epsilon(model, 0.3).unwrap();
    let probs = greedy.probabilities(&[1.0, -2.0]);
    check("greedy policy is ε-greedy", (probs.iter().sum::<f64>() - 1.0).abs() <= 1e-12 && probs.contains(&0.7));

    // glycemic weights and the utility range
    let table = [(70.0, -3), (80.0, -1), (120.0, 0), (150.0, -1), (150.5, -2)];
    for (g, w) in table {
        check("glycemic weight table", glycemic_weight(g) == w);
    }
    check("glycemic weight just above 70", glycemic_weight(70.01) == -1);
    let mut lo = i32::MAX;
    let mut hi = i32::MIN;
    for g in 0..=4000 {
        for h in (0..=4000).step_by(37) {
            let u = glycemic_weight(g as f64 / 10.0) + glycemic_weight(h as f64 / 10.0);
            lo = lo.min(u);
            hi = hi.max(u);
        }
    }
    check("utility range [-6, 0]", lo == -6 && hi == 0);
    for name in ["t1d", "t1d_multi"] {
        let env = SimEnv::from_name(name).unwrap();
        let data = generate_offline(&env, &env.behavior_policy(), 10, 48, DEFAULT_BURN_IN, 3).unwrap();
        check(
            "simulated glucose utilities in [-6, 0]",
            data.trajectories()
                .iter()
                .flat_map(|t| t.utilities())
                .all(|&u| (-6.0..=0.0).contains(&u)),
        );
    }

    // seeded determinism
    for name in ["toy", "toy_hetero", "t1d", "t1d_multi"] {
        let env = SimEnv::from_name(name).unwrap();
        let gen = |seed| generate_offline(&env, &env.behavior_policy(), 4, 10, DEFAULT_BURN_IN, seed).unwrap();
        check("generate_offline determinism", gen(11) == gen(11) && gen(11) != gen(12));
        let behavior = env.behavior_policy();
        let roll = |seed| rollout_value(&env, &behavior, 5, 10, DEFAULT_BURN_IN, seed).unwrap();
        check("rollout determinism", roll(5) == roll(5) && roll(5) != roll(6));
    }
    let draws = |seed, stream| -> Vec<u64> {
        let mut r = stream_rng(seed, stream);
        (0..8).map(|_| r.random()).collect()
    };
    check("stream determinism", draws(1, 2) == draws(1, 2) && draws(1, 2) != draws(1, 3));
    let toy = SimEnv::from_name("toy").unwrap();
    let data = generate_offline(&toy, &toy.behavior_policy(), 10, 12, DEFAULT_BURN_IN, 13).unwrap();
    let known = PropensityModel::known(vec![0.5, 0.5]).unwrap();
    let fmap = FeatureMap::fit(BasisKind::Linear, &data).unwrap();
    let search = |lambda_beta| SearchConfig {
        seed: 4,
        lambda_beta,
        ..SearchConfig::default()
    };
    let fit_a = optimize_policy(&data, &known, &fmap, 0.9, &search(None)).unwrap();
    let fit_b = optimize_policy(&data, &known, &fmap, 0.9, &search(None)).unwrap();
    check("policy search determinism", fit_a.search_beta == fit_b.search_beta);
    let ggq = |seed| fit_ggq(&data, 0.9, &GgqConfig { seed, ..GgqConfig::default() }).unwrap().model;
    check("GGQ determinism", ggq(3).eta() == ggq(3).eta());
    let estimator = VLearnEstimator {
        basis: BasisKind::Linear,
        gamma: 0.9,
        search: SearchConfig::default(),
    };
    let online = |seed| run_online(&toy, &estimator, &OnlineConfig::new(4, 20, seed)).unwrap();
    let (first, again) = (online(21), online(21));
    check("online determinism", first.value == again.value && first.dataset == again.dataset);

    // Λₙ linearity in the weights
    let problem = ValueProblem::new(&data, &known, &fmap, 0.9).unwrap();
    let weights = problem.weights(&coverage_policy()).unwrap();
    let doubled: Vec<f64> = weights.iter().map(|w| 2.0 * w).collect();
    let one = problem.assemble_weighted(&weights);
    let two = problem.assemble_weighted(&doubled);
    check(
        "doubling weights doubles A and b",
        (&two.a - &one.a * 2.0).abs().max() <= 1e-12 * one.a.abs().max()
            && (&two.b - &one.b * 2.0).abs().max() <= 1e-12 * one.b.abs().max().max(1.0),
    );
    let theta = DVector::from_vec(vec![0.3, -0.2, 0.5]);
    check(
        "Λₙ doubles with the weights",
        (two.residual(&theta) - one.residual(&theta) * 2.0).abs().max() <= 1e-12,
    );

    // penalty limits
    let system = problem.assemble(&coverage_policy()).unwrap();
    let huge = solve_theta(&system, 1e14).unwrap();
    check("λₙ → ∞ gives θ̂ → 0", huge.norm() <= 1e-8);
    let flat = optimize_policy(&data, &known, &fmap, 0.9, &search(Some(1e12))).unwrap();
    let beta_norm = flat.search_beta.iter().map(|b| b * b).sum::<f64>().sqrt();
    check("λ_β → ∞ gives β̂ → 0", beta_norm <= 1e-6);

    // online propensity replay
    let universal = first;
    let individual = run_online_individualized(&toy, &estimator, &OnlineConfig::new(4, 30, 22)).unwrap();
    let (err_u, count_u) = replay_errors(&universal);
    let (err_i, count_i) = replay_errors(&individual);
    check("online replay (universal)", count_u == 4 * 20 && err_u <= 1e-15);
    check("online replay (individualized)", count_i == 4 * 30 && err_i <= 1e-15);
    let switches_at_updates = universal.active.iter().all(|row| {
        row.iter()
            .enumerate()
            .all(|(t, &s)| s == universal.update_times.iter().filter(|&&u| u <= t).count())
    });
    check("online snapshots switch only at update times", switches_at_updates);

    let pass = failures.is_empty();
    failures.dedup();
    outcome(
        pass,
        if pass {
            "softmax, ε-greedy, glycemic table, utility range, determinism, Λₙ linearity, penalty limits, online replay".into()
        } else {
            format!("failed: {}", failures.join(", "))
        },
    )
}

fn main() {
    let criteria: [(usize, &str, fn() -> Outcome); 8] = [
        (1, "tabular oracle equivalence", criterion_1),
        (2, "sample-level consistency", criterion_2),
        (3, "on-policy weights and ridge cross-check", criterion_3),
        (4, "toy offline ordering and band", criterion_4),
        (5, "glucose offline ordering and band", criterion_5),
        (6, "individualized beats universal", criterion_6),
        (7, "variance estimator coverage", criterion_7),
        (8, "property suites", criterion_8),
    ];
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut failed = 0;
    for (id, name, run) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let result = run();
        if !result.pass {
            failed += 1;
        }
        println!(
            "criterion {id} ({name}): {} {}",
            if result.pass { "PASS" } else { "FAIL" },
            result.details
        );
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
