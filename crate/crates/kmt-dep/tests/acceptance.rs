//! Acceptance suite: one test per release criterion, each printing a single
//! pass line (run with `--nocapture` to see them; a failed assertion is the
//! corresponding fail line).

use std::process::Command;

use kmt_dep::coupling::{
    block_variance, couple_blocks, empirical_block_cdf, gamma_tilde_linear, nu_k, variance_model,
    BlockCdf,
};
use kmt_dep::depmeasure::{
    check_sip_conditions, estimate_profile, tau_p, tau_p_residual, theta_tail, Schedule,
};
use kmt_dep::harness::{clt_check, truncated_moment_check, zoo, ExperimentConfig};
use kmt_dep::innovations::{InnovationLaw, Seed};
use kmt_dep::numeric::{ks_critical_1pct, ks_statistic, normal_cdf, variance};
use kmt_dep::pipeline::{block_independence_audit, decompose, layout};
use kmt_dep::processes::{draw_panel, CausalProcess, LinearProcess};

#[test]
fn criterion_01_tau_closed_form() {
    assert_eq!(tau_p(4.0).unwrap(), 1.0);
    for p in [2.5, 3.0, 4.0, 5.0, 6.0, 8.0] {
        let t = tau_p(p).unwrap();
        let r = tau_p_residual(p, t);
        assert!(r < 1e-12, "p = {p}: residual {r}");
    }
    println!("criterion 1: PASS (tau_p(4) = 1 exactly; residuals < 1e-12)");
}

#[test]
fn criterion_02_dependence_measure_oracle() {
    let proc = LinearProcess::ar1_truncated(0.5, 64);
    let profile = estimate_profile(&proc, 2.0, 24, 100_000, 64, Seed::new(401)).unwrap();
    for j in 0..=10u64 {
        let d = &profile.delta[j as usize];
        let oracle = 2f64.sqrt() * 0.5f64.powi(j as i32);
        assert!(
            (d.delta_hat - oracle).abs() < 3.0 * d.se,
            "j = {j}: delta {} oracle {oracle} se {}",
            d.delta_hat,
            d.se
        );
    }
    let theta0 = theta_tail(&profile, 0);
    let oracle = 2.0 * 2f64.sqrt();
    let se: f64 = profile.delta.iter().map(|d| d.se * d.se).sum::<f64>().sqrt();
    assert!((theta0 - oracle).abs() < 3.0 * se, "theta0 {theta0} oracle {oracle} se {se}");
    println!("criterion 2: PASS (AR(1) delta and Theta_0 within 3 SE of oracles)");
}

#[test]
fn criterion_03_condition_checker() {
    // geometric Theta passes all four conditions under the case-ii schedule
    let theta = |m: u64| 0.5f64.powf(m as f64);
    let delta = |j: u64| theta(j) - theta(j + 1);
    let report = check_sip_conditions(&delta, &theta, 4.0, 6.0, &Schedule::CaseII, 100).unwrap();
    assert!(report.all_pass(), "geometric profile should pass: {:?}",
        report.checks.iter().map(|c| (c.id, c.pass)).collect::<Vec<_>>());

    // constant Theta fails the block-sum condition
    let theta_c = |_: u64| 0.3f64;
    let delta_c = |_: u64| 0.0f64;
    let report = check_sip_conditions(&delta_c, &theta_c, 4.0, 6.0, &Schedule::CaseII, 40).unwrap();
    assert!(!report.checks.iter().find(|c| c.id == "theta_block_sum").unwrap().pass);

    // Theta_m = m^-1 (log m)^-A: the block-sum condition separates A = 1 and 2
    let theta_log = |a: f64| move |m: u64| {
        let x = m.max(2) as f64;
        x.powf(-1.0) * x.ln().powf(-a)
    };
    for (a, want) in [(2.0, true), (1.0, false)] {
        let t = theta_log(a);
        let d = move |j: u64| t(j) - t(j + 1);
        let report = check_sip_conditions(&d, &theta_log(a), 4.0, 6.0, &Schedule::CaseII, 100).unwrap();
        let c = report.checks.iter().find(|c| c.id == "theta_block_sum").unwrap();
        assert_eq!(c.pass, want, "A = {a}: {}", c.detail);
    }
    println!("criterion 3: PASS (condition checker separates the oracle profiles)");
}

#[test]
fn criterion_04_pipeline_exactness() {
    let proc = LinearProcess::new(vec![1.0], InnovationLaw::Rademacher).unwrap();
    let mut x: u64 = 0x9e37_79b9_7f4a_7c15;
    for trial in 0..100u64 {
        x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let n = 82 + (x >> 33) % 20_000;
        let m = 1 + (x >> 13) % 8;
        let l = layout(n, &Schedule::Constant(m)).unwrap();

        // disjointness audit: same-scale windows ordered and disjoint,
        // adjacent scales separated by the dependence reach-back
        let ws = l.windows();
        for pair in ws.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if a.k == b.k {
                assert!(a.hi <= b.lo, "trial {trial}: overlap at scale {}", a.k);
            }
        }
        for k in l.k0..l.h_n {
            if l.blocks_at(k) == 0 || l.blocks_at(k + 1) == 0 {
                continue;
            }
            let last = l.block_window(k, l.blocks_at(k));
            let first = l.block_window(k + 1, 1);
            assert!(first.lo as i64 - l.m_at(k + 1) as i64 >= last.hi as i64, "trial {trial}");
        }

        // reconstruction identity, bit-exact
        let seed = Seed::new(500 + trial);
        let panel = draw_panel(&proc, seed, n, 4);
        let d = decompose(&proc, &panel, &l, 3.0, 4, 1, 500, seed).unwrap();
        assert_eq!(d.diamond_from_blocks(), *d.s_diamond.last().unwrap(), "trial {trial}");
    }

    // negative control: m_k = 1 under rho = 0.9 leaves adjacent blocks
    // correlated beyond the 3-sigma band
    let ar = LinearProcess::ar1_truncated(0.9, 64);
    let l = layout(729, &Schedule::Constant(1)).unwrap();
    let audit = block_independence_audit(&ar, &l, 3.0, 64, 2000, 1, Seed::new(606)).unwrap();
    assert!(
        audit.max_abs_corr > audit.band,
        "undersized blocks should correlate: max {} band {}",
        audit.max_abs_corr,
        audit.band
    );
    println!("criterion 4: PASS (reconstruction bit-exact, windows disjoint, negative control fires)");
}

fn empirical_block_var(proc: &dyn CausalProcess, k: u32, m: u64, lag: usize, seed: Seed) -> (f64, f64) {
    let cdf = empirical_block_cdf(proc, 3.0, k, m, lag, 10_000, 1, seed).unwrap();
    let vals = match cdf {
        BlockCdf::Empirical { sorted, .. } => sorted,
        _ => unreachable!(),
    };
    let n = vals.len() as f64;
    let v = variance(&vals);
    let mu = vals.iter().sum::<f64>() / n;
    let m4 = vals.iter().map(|x| (x - mu).powi(4)).sum::<f64>() / n;
    let se = ((m4 - v * v).max(0.0) / n).sqrt();
    (v, se)
}

#[test]
fn criterion_05_variance_machinery() {
    // nu_k vs Var(B)/(3m) on MA(1) and AR(1), 10^4 block replications each;
    // the exact Var(B) = 3m nu - 2 sum d gamma_d gap enters the tolerance
    let cases: [(Box<dyn CausalProcess>, usize); 2] = [
        (Box::new(LinearProcess::ma1(0.5, InnovationLaw::StandardNormal)), 8),
        (Box::new(LinearProcess::ar1_truncated(0.5, 64)), 64),
    ];
    for (i, (proc, lag)) in cases.iter().enumerate() {
        let (k, m) = (6u32, 16u64);
        let coeffs: Vec<f64> = match i {
            0 => vec![1.0, 0.5],
            _ => (0..=64).map(|j| 0.5f64.powi(j)).collect(),
        };
        let g = gamma_tilde_linear(&coeffs, 1.0, m);
        let nu = nu_k(&g, m);
        let gap = (nu - block_variance(&g, m) / (3.0 * m as f64)).abs();
        let (v, se) = empirical_block_var(proc.as_ref(), k, m, *lag, Seed::new(700 + i as u64));
        let est = v / (3.0 * m as f64);
        let tol = 3.0 * se / (3.0 * m as f64) + gap;
        assert!((est - nu).abs() < tol, "case {i}: est {est} nu {nu} tol {tol}");
    }

    // nu_k -> sigma^2 along the case-iii schedule
    let sched = Schedule::CaseIII { p: 3.0, alpha: 4.0, log_base: std::f64::consts::E };
    let coeffs: Vec<f64> = (0..=64).map(|j| 0.5f64.powi(j)).collect();
    let m10 = sched.m(10).unwrap();
    let nu10 = nu_k(&gamma_tilde_linear(&coeffs, 1.0, m10), m10);
    assert!((nu10 - 4.0).abs() < 0.02 * 4.0, "nu_10 = {nu10}");
    println!("criterion 5: PASS (nu_k matches block variance and converges to sigma^2)");
}

#[test]
fn criterion_06_coupling_law_correctness() {
    let proc = LinearProcess::ar1_truncated(0.5, 64);
    let l = layout(729, &Schedule::Constant(8)).unwrap();
    let gammas: Vec<Vec<f64>> =
        (1..=l.h_n).map(|k| gamma_tilde_linear(proc.coeffs(), 1.0, l.m_at(k))).collect();
    let model = variance_model(&l, gammas, 4.0).unwrap();
    let seed = Seed::new(808);
    let cdfs: Vec<BlockCdf> = (l.k0..=l.h_n)
        .map(|k| empirical_block_cdf(&proc, 3.0, k, l.m_at(k), 64, 40_000, 1, seed.child(k as u64)).unwrap())
        .collect();

    let reps = 400u64;
    let mut by_scale: Vec<Vec<f64>> = vec![Vec::new(); (l.h_n - l.k0 + 1) as usize];
    let mut zs: Vec<f64> = Vec::new();
    for r in 0..reps {
        let s = seed.with_replication(r);
        let panel = draw_panel(&proc, s, l.n, 64);
        let d = decompose(&proc, &panel, &l, 3.0, 64, 1, 2_000, s).unwrap();
        let paths = couple_blocks(&d, &model, &cdfs).unwrap();
        let mut prev_d = 0.0;
        let mut prev_g = 0.0;
        for i in 0..paths.grid.len() {
            let k = paths.scales[i];
            let block = paths.s_diamond[i] - prev_d;
            let g_inc = paths.gaussian[i] - prev_g;
            prev_d = paths.s_diamond[i];
            prev_g = paths.gaussian[i];
            by_scale[(k - l.k0) as usize].push(block);
            let sd = (3.0 * l.m_at(k) as f64 * model.nu[k as usize - 1]).sqrt();
            zs.push(g_inc / sd);
        }
    }
    // coupled block marginals vs their target CDFs
    for (i, vals) in by_scale.iter().enumerate() {
        let f = &cdfs[i];
        let ks = ks_statistic(vals, |x| f.cdf(x));
        let crit = ks_critical_1pct(vals.len());
        assert!(ks < crit, "scale {}: ks {ks} critical {crit}", l.k0 + i as u32);
    }
    // Gaussian increments are N(0, delta phi): normalized they are standard
    let ks = ks_statistic(&zs, normal_cdf);
    let crit = ks_critical_1pct(zs.len());
    assert!(ks < crit, "increments: ks {ks} critical {crit}");
    println!("criterion 6: PASS (block marginals and Gaussian increments pass KS at 1%)");
}

#[test]
fn criterion_07_rate_evidence() {
    let base = "\
[experiment]
n_grid = 3^6..3^10
replications = 50
seed = 909
[schedule]
case = iii
";
    let cfg_iid = ExperimentConfig::parse(&format!("{base}[process]\nkind = iid_normal\n")).unwrap();
    let z = kmt_dep::harness::build_process(&cfg_iid.process).unwrap();
    let out = kmt_dep::harness::run_sip(&z, &cfg_iid, None).unwrap();
    let slope = out.fit.as_ref().unwrap().slope;
    assert!(slope <= 0.05, "iid normal slope {slope}");

    let cfg_ar = ExperimentConfig::parse(&format!("{base}[process]\nkind = ar1\nrho = 0.5\n")).unwrap();
    let b = kmt_dep::harness::build_process(&cfg_ar.process).unwrap();
    let out = kmt_dep::harness::run_sip(&b, &cfg_ar, None).unwrap();
    let slope = out.fit.as_ref().unwrap().slope;
    assert!(slope <= 1.0 / 3.0 + 0.1, "ar1 slope {slope}");
    println!("criterion 7: PASS (iid normal flat, AR(1) slope within the rate bound)");
}

#[test]
fn criterion_08_clt_cross_check() {
    let seed = Seed::new(1010);
    for (i, b) in zoo().iter().enumerate() {
        let r = clt_check(b, 19_683, 2000, seed.with_stream(i as u64)).unwrap();
        assert!(r.pass, "{}: ks {} critical {}", r.name, r.ks, r.critical);
    }
    println!("criterion 8: PASS (all zoo processes pass the CLT KS check at 1%)");
}

#[test]
fn criterion_09_truncated_moment_diagnostics() {
    for law in [InnovationLaw::StandardNormal, InnovationLaw::Rademacher] {
        let rep = truncated_moment_check(law, 3.0, 4.0, 30).unwrap();
        assert!(rep.converged(), "{law:?} should converge:\n{}", rep.render());
    }
    let rep =
        truncated_moment_check(InnovationLaw::CenteredPareto { tail_index: 2.5 }, 3.0, 4.0, 30)
            .unwrap();
    assert!(!rep.converged(), "pareto negative control should diverge");
    println!("criterion 9: PASS (truncated-moment sums converge/diverge as predicted)");
}

#[test]
fn criterion_10_determinism_across_workers() {
    let bin = env!("CARGO_BIN_EXE_kmtdep");
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.cfg");
    std::fs::write(
        &cfg,
        "[experiment]\nn_grid = 3^5,3^6,3^7\nreplications = 12\nseed = 77\n\
         delta_reps = 2000\ndelta_lmax = 10\nclt_n = 243\nclt_reps = 100\n\
         [process]\nkind = ar1\nrho = 0.5\n[schedule]\ncase = iii\n",
    )
    .unwrap();
    let run = |workers: &str, out: &str| {
        let status = Command::new(bin)
            .args(["report", "--config"])
            .arg(&cfg)
            .args(["--workers", workers, "--out"])
            .arg(dir.path().join(out))
            .status()
            .unwrap();
        assert!(status.success(), "workers {workers}: exit {status}");
    };
    run("1", "a");
    run("4", "b");
    let mut names: Vec<String> = std::fs::read_dir(dir.path().join("a"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    names.sort();
    assert!(names.len() >= 5, "expected the full CSV bundle, got {names:?}");
    for n in &names {
        let a = std::fs::read(dir.path().join("a").join(n)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(n)).unwrap();
        assert_eq!(a, b, "{n} differs between worker counts");
    }
    println!("criterion 10: PASS (byte-identical CSVs across worker counts)");
}
