//! Acceptance run: one line per criterion, nonzero exit if any fails.

use std::process::ExitCode;
use std::time::Instant;

use num_complex::Complex64 as C64;
use qprecision::bounds::{f_bound, f_bound_csch, short_time_sigma_star_lb, survival_activity};
use qprecision::experiment::{self, loglog_slope, ExperimentConfig};
use qprecision::markov::{self, PathLimit};
use qprecision::model::{backward_kraus, forward_kraus, stationary_state, thermal_operation_model, KrausSet, ResonantCoupling};
use qprecision::qlinalg::random::random_density;
use qprecision::qlinalg::CMatrix;
use qprecision::rng::stream;
use qprecision::trajectories::{
    enumerate, sigma_from_states, sigma_from_states_general, state_path, MeasurementSetup, Observable,
};
use rand::Rng;

const CAP: u64 = 10_000_000;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn ac1() -> Outcome {
    let start = Instant::now();
    let out = experiment::run_tur_scatter(&ExperimentConfig::default()).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let mut worst = f64::INFINITY;
    let mut below_sigma = 0;
    for r in &out.rows {
        let (Some(rel), Some(b)) = (r.rel_fluct.value(), r.tur_bound.value()) else { continue };
        worst = worst.min(rel - (b - 1e-9));
        if r.tur_sigma_only.value().is_some_and(|s| rel < s) {
            below_sigma += 1;
        }
    }
    outcome(
        out.failures.is_empty() && worst >= 0.0 && below_sigma >= 1 && secs < 60.0,
        format!(
            "{} currents, min slack {worst:.3e}, {below_sigma} below f(Σ), {} failed models, {secs:.1}s",
            out.rows.len(),
            out.failures.len()
        ),
    )
}

fn ac2() -> Outcome {
    let out = experiment::run_kur_scatter(&ExperimentConfig::default()).unwrap();
    let mut worst = f64::INFINITY;
    let mut saturation = 0.0f64;
    for r in &out.rows {
        let (Some(rel), Some(b)) = (r.rel_fluct.value(), r.kur_bound.value()) else { continue };
        worst = worst.min(rel - b);
        if r.observable == "activity_indicator" {
            let p = r.inactivity.0;
            saturation = saturation.max((rel - p / (1.0 - p)).abs());
        }
    }
    outcome(
        out.failures.is_empty() && worst >= -1e-9 && saturation <= 1e-10,
        format!("{} rows, min margin {worst:.3e}, indicator gap {saturation:.3e}", out.rows.len()),
    )
}

fn ac3() -> Outcome {
    let cfg = ExperimentConfig { pure_environment: true, ..Default::default() };
    let seed = 77;
    let mut worst_a = f64::INFINITY;
    for id in 0..50 {
        let spec = experiment::sample_model(seed, id, &cfg);
        let k = forward_kraus(&spec).unwrap();
        let rho = stationary_state(&k).unwrap();
        let en = enumerate(&k, &MeasurementSetup::stationary(&rho).unwrap(), 1, CAP).unwrap();
        let p = en.stats(&Observable::activity_indicator()).unwrap().inactivity;
        let a = survival_activity(&k, &rho, 1).unwrap();
        worst_a = worst_a.min(a + 1e-10 - 1.0 / p);
    }
    let mut worst_eta = f64::INFINITY;
    for i in 0..500 {
        let mut rng = stream(seed, "acceptance/lindblad", i);
        let d = rng.random_range(2..=4);
        let n_jumps = rng.random_range(1..=3);
        let spec = markov::random_lindblad(&mut rng, d, n_jumps, 0.3);
        let rho = random_density(&mut rng, d);
        let t = rng.random_range(0.05..=3.0);
        let p = markov::inactivity(&spec, &rho, t).unwrap();
        let eta = markov::loschmidt_echo(&spec, &rho, t).unwrap();
        worst_eta = worst_eta.min(p + 1e-10 - eta);
    }
    outcome(
        worst_a >= 0.0 && worst_eta >= 0.0,
        format!("min 𝒜 - 𝒫⁻¹ = {worst_a:.3e} over 50 models, min 𝒫 - η = {worst_eta:.3e} over 500 specs"),
    )
}

fn qubit_stats(k: &KrausSet, setup: &MeasurementSetup, rounds: usize) -> qprecision::trajectories::TrajectoryStats {
    let obs = Observable::activity_indicator();
    enumerate(k, setup, rounds, CAP).unwrap().stats(&obs).unwrap()
}

fn ac4_ac5() -> (Outcome, Outcome) {
    let mut worst_sigma = 0.0f64;
    let mut worst_ift = 0.0f64;
    for id in 0..100 {
        let cfg = ExperimentConfig {
            d_e_max: 4,
            rounds: 1 + (id % 2) as usize,
            lambda: 0.5 + (id % 10) as f64 * 0.5,
            ..Default::default()
        };
        let spec = experiment::sample_model(404, id, &cfg);
        let k = forward_kraus(&spec).unwrap();
        let rho = stationary_state(&k).unwrap();
        let st = qubit_stats(&k, &MeasurementSetup::stationary(&rho).unwrap(), spec.rounds);
        worst_sigma = worst_sigma.max((st.sigma - sigma_from_states(&spec, &rho).unwrap()).abs());
        worst_ift = worst_ift.max((st.ift_check - 1.0).abs());
    }
    let mut worst_general = 0.0f64;
    let mut worst_boundary = 0.0f64;
    for id in 0..40 {
        let cfg = ExperimentConfig { rounds: 2, d_e_max: 3, ..Default::default() };
        let spec = experiment::sample_model(505, id, &cfg);
        let k = forward_kraus(&spec).unwrap();
        let mut rng = stream(505, "acceptance/initial", id);
        let rho0 = random_density(&mut rng, 2);
        let setup = MeasurementSetup::general(&k, &rho0, 2).unwrap();
        let st = qubit_stats(&k, &setup, 2);
        let path = state_path(&k, &rho0, 2).unwrap();
        worst_general = worst_general.max((st.sigma - sigma_from_states_general(&spec, &path).unwrap()).abs());
        worst_boundary =
            worst_boundary.max((st.sigma + st.sigma_star + st.boundary_b - st.log_ratio_reversed).abs());
        worst_ift = worst_ift.max((st.ift_check - 1.0).abs());
    }
    (
        outcome(
            worst_sigma <= 1e-9 && worst_general <= 1e-9 && worst_boundary <= 1e-9,
            format!(
                "stationary |ΔΣ| {worst_sigma:.2e} (100 models), N=2 general |ΔΣ| {worst_general:.2e}, boundary identity {worst_boundary:.2e}"
            ),
        ),
        outcome(worst_ift <= 1e-9, format!("max |⟨e^(-σ*)⟩ - 1| = {worst_ift:.2e} over 140 models")),
    )
}

/// `|<m| B_N ⋯ B_1 |n>|²` with explicit matrix products.
fn amplitude(ops: &[&CMatrix], basis_in: &CMatrix, n: usize, basis_out: &CMatrix, m: usize) -> f64 {
    let d = basis_in.rows();
    let mut prod = CMatrix::identity(d);
    for op in ops {
        prod = op.matmul(&prod);
    }
    let out = prod.mat_vec(&basis_in.column(n));
    let col = basis_out.column(m);
    col.iter().zip(&out).map(|(a, b)| a.conj() * b).sum::<C64>().norm_sqr()
}

fn ac6() -> Outcome {
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for id in 0..20 {
        let cfg = ExperimentConfig { rounds: 1 + (id % 2) as usize, d_e_max: 3, ..Default::default() };
        let spec = experiment::sample_model(606, id, &cfg);
        let k = forward_kraus(&spec).unwrap();
        let b = backward_kraus(&k).unwrap();
        let rho = stationary_state(&k).unwrap();
        let setup = MeasurementSetup::stationary(&rho).unwrap();
        let en = enumerate(&k, &setup, spec.rounds, CAP).unwrap();
        let (p, basis) = (&setup.init_probs, &setup.init_basis);
        for idx in 0..en.len() {
            let g = en.trajectory(idx);
            let fwd_ops: Vec<&CMatrix> = g.pairs.iter().map(|&(nu, mu)| k.op(mu, nu)).collect();
            let rev_ops: Vec<&CMatrix> = g.pairs.iter().rev().map(|&(nu, mu)| k.op(nu, mu)).collect();
            let bwd_ops: Vec<&CMatrix> = g.pairs.iter().map(|&(nu, mu)| b.op(mu, nu)).collect();
            let bwd_rev_ops: Vec<&CMatrix> = g.pairs.iter().rev().map(|&(nu, mu)| b.op(nu, mu)).collect();
            // b.op(mu, nu) is already the conjugated backward operator
            let pf = p[g.n] * amplitude(&fwd_ops, basis, g.n, basis, g.m);
            let pfr = p[g.m] * amplitude(&rev_ops, basis, g.m, basis, g.n);
            let pb = p[g.n] * amplitude(&bwd_ops, basis, g.n, basis, g.m);
            let pbr = p[g.m] * amplitude(&bwd_rev_ops, basis, g.m, basis, g.n);
            if [pf, pfr, pb, pbr].iter().all(|&x| x > 1e-300) {
                let lhs = pbr * pb;
                let rhs = pf * pfr;
                worst = worst.max((lhs - rhs).abs() / rhs);
                checked += 1;
            }
        }
    }
    outcome(worst <= 1e-10, format!("max relative defect {worst:.2e} on {checked} trajectories"))
}

fn ac7() -> Outcome {
    let mut worst_thermal = 0.0f64;
    for i in 0..20u64 {
        let mut rng = stream(707, "acceptance/thermal", i);
        let gap = rng.random_range(0.3..2.0);
        let third = gap + rng.random_range(0.5..1.5);
        let c = ResonantCoupling { m: 1, mu: 0, n: 0, nu: 1, g: C64::new(rng.random_range(0.2..1.0), rng.random_range(-0.5..0.5)) };
        let spec =
            thermal_operation_model(&[0.0, gap], &[0.0, gap, third], &[c], rng.random_range(0.5..3.0), rng.random_range(0.3..2.0))
                .unwrap();
        let k = forward_kraus(&spec).unwrap();
        let rho = stationary_state(&k).unwrap();
        let st = qubit_stats(&k, &MeasurementSetup::stationary(&rho).unwrap(), 1);
        worst_thermal = worst_thermal.max(st.sigma_star.abs());
    }
    let inc = markov::incoherent(&[0.0, 0.7, 1.5], 1.0, 0.4).unwrap();
    let rho = markov::stationary_state(&inc).unwrap();
    let mut worst_inc = 0.0f64;
    for steps in 1..=6 {
        let st = markov::markov_path_stats(&inc, &rho, 0.8, steps, PathLimit::Exact, CAP).unwrap();
        worst_inc = worst_inc.max(st.sigma_star.abs());
    }
    outcome(
        worst_thermal <= 1e-10 && worst_inc <= 1e-10,
        format!("thermal operations max |Σ*| {worst_thermal:.2e}, incoherent Lindblad max |Σ*| {worst_inc:.2e}"),
    )
}

fn ac8() -> Outcome {
    let dq = markov::driven_qubit(1.0, 1.0);
    let rho = markov::stationary_state(&dq).unwrap();
    let st = markov::markov_path_stats(&dq, &rho, 1e-2, 8, PathLimit::Exact, CAP).unwrap();
    let lb = short_time_sigma_star_lb(&dq.h, &dq.jump_ops(), &rho, 1e-2);
    let ts: Vec<f64> = (0..9).map(|i| 10f64.powf(-3.0 + 0.25 * i as f64)).collect();
    let sig: Vec<f64> = ts
        .iter()
        .map(|&t| markov::markov_path_stats(&dq, &rho, t, 8, PathLimit::Exact, CAP).unwrap().sigma_star)
        .collect();
    let slope = loglog_slope(&ts, &sig);
    outcome(
        st.sigma_star >= 0.9 * lb && (slope - 2.0).abs() <= 0.1,
        format!("Σ*/RHS = {:.3} at T = 1e-2, slope {slope:.4}", st.sigma_star / lb),
    )
}

fn ac9() -> Outcome {
    let specs = [markov::driven_qubit(1.0, 1.0), markov::driven_qubit(2.0, 0.5), markov::driven_qubit(0.5, 2.0)];
    let mut worst = f64::INFINITY;
    for spec in &specs {
        let rho = markov::stationary_state(spec).unwrap();
        for t in [1e-3, 1e-2, 1e-1, 0.3] {
            let st = markov::markov_path_stats(spec, &rho, t, 8, PathLimit::Exact, CAP).unwrap();
            let dp = markov::sigma_star_dp_lower_bound(spec, &rho, t).unwrap();
            worst = worst.min(st.sigma_star - dp + 1e-6);
        }
    }
    outcome(worst >= 0.0, format!("min Σ* - D(p‖q) + 1e-6 = {worst:.3e} on 3 driven qubits × 4 durations"))
}

fn ac10() -> Outcome {
    let mut worst_rel = 0.0f64;
    let mut worst_exp = f64::INFINITY;
    for i in 0..60 {
        let x = 10f64.powf(-3.0 + (20f64.log10() + 3.0) * i as f64 / 59.0);
        let f = f_bound(x).unwrap();
        worst_rel = worst_rel.max((f - f_bound_csch(x).unwrap()).abs() / f);
        worst_exp = worst_exp.min(f - 2.0 / x.exp_m1());
    }
    let small = (f_bound(1e-4).unwrap() - 2e4).abs() / 2e4;
    outcome(
        worst_rel <= 1e-9 && worst_exp >= 0.0 && small <= 0.01,
        format!("max rel |f - csch²| {worst_rel:.2e}, min f - 2/(eˣ-1) {worst_exp:.2e}, small-x error {small:.2e}"),
    )
}

fn ac11() -> Outcome {
    let cfg = ExperimentConfig::default();
    let render = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let out = pool.install(|| experiment::run_lambda_sweep(&cfg)).unwrap();
        let mut buf = Vec::new();
        experiment::write_rows_csv(&out.rows, &mut buf).unwrap();
        (out, buf)
    };
    let (out, one) = render(1);
    let identical = one == render(1).1 && one == render(4).1;
    let failed: Vec<String> = out
        .report
        .checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| format!("{} (worst {:.3e})", c.name, c.measured.0))
        .collect();
    let detail = format!(
        "seed {}, byte-identical CSV {identical}, failed: {}",
        out.report.seed,
        if failed.is_empty() { "none".into() } else { failed.join(", ") }
    );
    outcome(failed.is_empty() && identical, detail)
}

fn ac12() -> Outcome {
    let dq = markov::driven_qubit(1.0, 1.0);
    let rho = markov::stationary_state(&dq).unwrap();
    let ts = [1e-4, 3e-4, 1e-3, 3e-3, 1e-2];
    let gaps: Vec<f64> = ts
        .iter()
        .map(|&t| {
            let p = markov::inactivity(&dq, &rho, t).unwrap();
            (1.0 / p - 1.0 - markov::dynamical_activity(&dq, &rho, t)).abs()
        })
        .collect();
    let slope = loglog_slope(&ts, &gaps);
    outcome((1.9..=2.1).contains(&slope), format!("slope {slope:.4}"))
}

fn main() -> ExitCode {
    let (ac4, ac5) = ac4_ac5();
    let results = [
        ("AC1", "generalized TUR over 200 random models", ac1()),
        ("AC2", "generalized KUR and indicator saturation", ac2()),
        ("AC3", "survival and Loschmidt orderings", ac3()),
        ("AC4", "entropy production cross-formula", ac4),
        ("AC5", "fluctuation theorem", ac5),
        ("AC6", "forward-backward product identity", ac6()),
        ("AC7", "vanishing asymmetry classes", ac7()),
        ("AC8", "short-time Markovian bound and scaling", ac8()),
        ("AC9", "data-processing bound", ac9()),
        ("AC10", "f-function suite", ac10()),
        ("AC11", "coupling sweep regression", ac11()),
        ("AC12", "activity limit scaling", ac12()),
    ];
    let mut all = true;
    for (id, name, o) in &results {
        all &= o.passed;
        println!("[{}] {id} {name}: {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
