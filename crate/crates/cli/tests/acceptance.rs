//! Acceptance checks. Prints one PASS/FAIL line per criterion; a failing
//! criterion does not fail the run.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::Instant;

use ivboot::basis_model::GeneralDesign;
use ivboot::benchmark_tests::ProfileSearch;
use ivboot::bootstrap::{boot_wilks_gap, draw_weights};
use ivboot::diagnostics::{
    breakpoints, empirical_opnorm_tail, gar_scaling_check, gauss_compare_distance, loglog_slope, z_function,
    DeviationParams, RademacherRankOne, RademacherSeries, SummandLaw,
};
use ivboot::harness::{compare_to_paper, power_curve, reference_table, size_check, PowerTable, TESTS};
use ivboot::identify::{min_norm_solution, nonparam_bias_tail, single_iv_solution, MomentSystem};
use ivboot::quasi_likelihood::{t_lr, wilks_gap, PenaltyWeighting};
use ivboot::rng::RngStream;
use ivboot::stats;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

const SEED: u64 = 42;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn table_run(id: u8) -> (PowerTable, ivboot::harness::ComparisonReport) {
    let cfg = reference_table(id).unwrap().config(1000, 1000, SEED);
    let table = power_curve(&cfg).unwrap();
    let report = compare_to_paper(&table, id).unwrap();
    (table, report)
}

fn summary(id: u8, r: &ivboot::harness::ComparisonReport) -> String {
    format!(
        "table {id}: {:.1}% within 0.08, {:.1}% within 0.15, max diff {:.3}",
        100.0 * r.within_008,
        100.0 * r.within_015,
        r.max_diff
    )
}

fn table_one() -> Verdict {
    let (_, r) = table_run(1);
    verdict(r.pass, summary(1, &r))
}

fn misspecified_tables() -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    let anchors: [(u8, &[(&str, f64)]); 2] =
        [(2, &[("LR", 0.075), ("BLR", 0.05), ("CLR", 0.041667)]), (3, &[("LR", 0.033333), ("BLR", 0.05)])];
    for id in 2..=4u8 {
        let (table, r) = table_run(id);
        pass &= r.pass;
        parts.push(summary(id, &r));
        for (aid, cells) in &anchors {
            if *aid != id {
                continue;
            }
            let row = table.rows.iter().position(|row| (row.offset - 1.0).abs() < 1e-9).unwrap();
            for (test, expected) in cells.iter() {
                let ours = table.freq(row, test).unwrap();
                let ok = (ours - expected).abs() <= 0.08;
                pass &= ok;
                parts.push(format!("anchor t{id} {test}@1 {ours:.3} vs {expected}"));
            }
        }
    }
    verdict(pass, parts.join("; "))
}

fn size_control() -> Verdict {
    let cfg = reference_table(1).unwrap().config(1000, 1000, SEED);
    let size = size_check(&cfg).unwrap();
    let pass = size.iter().all(|f| (0.02..=0.10).contains(f));
    let window = size_check(&ivboot::simgen::SimConfig { blr_search: ProfileSearch::Window, ..cfg }).unwrap();
    let cells: Vec<String> = TESTS.iter().zip(size).map(|(t, f)| format!("{t} {f:.3}")).collect();
    verdict(pass, format!("{} (BLR with window search: {:.3})", cells.join(", "), window[1]))
}

/// `K = 1`, `J = 5`, uniform features with identity second moment and the
/// first two coefficients tested at zero.
fn linear_design(n: usize, laplace: bool, rng: &mut RngStream) -> GeneralDesign {
    let root3 = 3f64.sqrt();
    let eta = DMatrix::from_fn(n, 5, |_, _| root3 * rng.random_range(-1.0..1.0));
    let theta = DVector::from_vec(vec![0.0, 0.0, 0.5, -0.3, 0.2]);
    let noise = DVector::from_fn(n, |_, _| {
        if laplace {
            let u: f64 = rng.random_range(-0.5..0.5);
            -u.signum() * (1.0 - 2.0 * u.abs()).ln() / 2f64.sqrt()
        } else {
            rng.sample(StandardNormal)
        }
    });
    let z = &eta * theta + noise;
    GeneralDesign::new(vec![eta], vec![z], 1.0).unwrap()
}

fn tested_block() -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, 0.0, 0.0, 0.0]))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 0 {
        0.5 * (v[m - 1] + v[m])
    } else {
        v[m]
    }
}

fn wilks_shrinkage() -> Verdict {
    let p = tested_block();
    let theta_star = DVector::from_vec(vec![0.0, 0.0, 0.5, -0.3, 0.2]);
    let mut quad_max: f64 = 0.0;
    let mut medians = Vec::new();
    for n in [200usize, 2000] {
        let root = RngStream::new(SEED, n as u64);
        let mut real = Vec::new();
        let mut boot = Vec::new();
        for r in 0..200u64 {
            let mut rng = root.child(r);
            let d = linear_design(n, false, &mut rng);
            let w = draw_weights(n, &mut rng);
            let eta = &d.eta()[0];
            let sample_fisher = eta.transpose() * eta + DMatrix::identity(5, 5) * d.penalty();
            let expected_fisher = DMatrix::identity(5, 5) * (n as f64 + d.penalty());
            real.push(wilks_gap(&d, &p, &theta_star, Some(&expected_fisher)).unwrap());
            boot.push(boot_wilks_gap(&d, &w, &p, Some(&sample_fisher), PenaltyWeighting::Weighted).unwrap());
            quad_max = quad_max
                .max(wilks_gap(&d, &p, &theta_star, None).unwrap())
                .max(boot_wilks_gap(&d, &w, &p, None, PenaltyWeighting::Weighted).unwrap());
        }
        medians.push((median(real), median(boot)));
    }
    let (real_ratio, boot_ratio) = (medians[0].0 / medians[1].0, medians[0].1 / medians[1].1);
    verdict(
        real_ratio >= 2.0 && boot_ratio >= 2.0 && quad_max <= 1e-8,
        format!(
            "median gap real {:.4} -> {:.4} (x{real_ratio:.2}), bootstrap {:.4} -> {:.4} (x{boot_ratio:.2}), quadratic max {quad_max:.1e}",
            medians[0].0, medians[1].0, medians[0].1, medians[1].1
        ),
    )
}

fn chi2_limit() -> Verdict {
    let p = tested_block();
    let root = RngStream::new(SEED, 5);
    let stats_: Vec<f64> = (0..2000u64)
        .map(|r| 2.0 * t_lr(&linear_design(2000, true, &mut root.child(r)), &p).unwrap())
        .collect();
    let d = stats::ks_statistic(&stats_, |x| stats::chi2_cdf(2, x));
    let pv = stats::ks_pvalue(d, stats_.len());
    verdict(pv >= 0.01, format!("KS D = {d:.4}, p = {pv:.3} against chi2(2), Laplace errors"))
}

fn identification() -> Verdict {
    let start = Instant::now();
    let mut rng = RngStream::new(SEED, 6);
    let mut worst_excess: f64 = 0.0;
    let mut worst_agree: f64 = 0.0;
    for _ in 0..500 {
        let a = DMatrix::from_fn(2, 5, |_, _| rng.random_range(-2.0..2.0));
        let x0 = DVector::from_fn(5, |_, _| rng.random_range(-3.0..3.0));
        let b = &a * x0;
        let sol = min_norm_solution(&MomentSystem::new(a.clone(), b).unwrap()).unwrap();
        let v = DVector::from_fn(5, |_, _| rng.random_range(-1.0..1.0));
        let pinv = a.clone().pseudo_inverse(1e-12).unwrap();
        let dv = &v - &pinv * (&a * &v);
        worst_excess = worst_excess.max(sol.x.norm_squared() - (&sol.x + dv).norm_squared());

        let eta = DVector::from_fn(rng.random_range(1..8), |_, _| rng.random_range(-2.0..2.0));
        let ewy: f64 = rng.random_range(-5.0..5.0);
        let closed = single_iv_solution(&eta, ewy).unwrap();
        let row = DMatrix::from_row_slice(1, eta.len(), eta.as_slice());
        let general = min_norm_solution(&MomentSystem::new(row, DVector::from_vec(vec![ewy])).unwrap()).unwrap();
        worst_agree = worst_agree.max((closed - general.x).amax());
    }
    let coeffs: Vec<f64> = (1..=20_000).map(|k| (k as f64).powi(-2)).collect();
    let mut worst_tail: f64 = 0.0;
    for j in [5usize, 10, 20, 40, 80] {
        let tail = nonparam_bias_tail(&coeffs, j).unwrap();
        let brute: f64 = coeffs[j..].iter().map(|c| c * c).sum::<f64>().sqrt();
        let rate = (j as f64 + 0.5).powf(-1.5) / 3f64.sqrt();
        worst_tail = worst_tail.max((tail - brute).abs() / brute).max((tail - rate).abs() / rate);
    }
    verdict(
        worst_excess <= 1e-9 && worst_agree <= 1e-10 && worst_tail <= 0.10,
        format!(
            "null-space gain {worst_excess:.1e}, single/min-norm {worst_agree:.1e}, tail rel err {worst_tail:.3}, {:.2}s",
            start.elapsed().as_secs_f64()
        ),
    )
}

fn concentration() -> Verdict {
    let mut parts = Vec::new();
    let mut pass = true;

    let rng = RngStream::new(SEED, 7);
    let grid: Vec<f64> = (1..=8).map(|k| 5.0 * k as f64).collect();
    let mut tails = empirical_opnorm_tail(&RademacherRankOne { dim: 3, n: 100 }, &grid, 100_000, &rng.child(0));
    let coeffs: Vec<DMatrix<f64>> = (0..30)
        .map(|i| {
            let v = DVector::from_fn(4, |r, _| ((i * 7 + r * 3) as f64 * 0.37).sin());
            &v * v.transpose() / v.norm_squared()
        })
        .collect();
    let series_grid: Vec<f64> = (1..=6).map(|k| 2.0 * k as f64).collect();
    tails.extend(empirical_opnorm_tail(&RademacherSeries::new(coeffs).unwrap(), &series_grid, 100_000, &rng.child(1)));
    let dominated = tails.iter().all(|t| t.dominated(3.0));
    pass &= dominated;
    parts.push(format!("opnorm tails dominated at {}/{} points", tails.iter().filter(|t| t.dominated(3.0)).count(), tails.len()));

    let mut z_rng = rng.child(2);
    let (mut monotone, mut worst_cont, mut worst_junction) = (true, 0.0f64, 0.0f64);
    for _ in 0..50 {
        let a = DMatrix::from_fn(3, 3, |_, _| z_rng.random_range(-1.0..1.0));
        let p = DeviationParams::with_default_g(0.0, &a * a.transpose()).unwrap();
        let b = breakpoints(&p);
        let z = |x: f64| z_function(&p.with_x(x).unwrap());
        let seg = |lo: f64, hi: f64| (0..=200).map(|k| z((lo + (hi - lo) * k as f64 / 200.0).min(hi))).collect::<Vec<_>>();
        let mut segments = vec![seg(b.x_c.max(b.x1) * (1.0 + 1e-12), 3.0 * b.x_c.max(b.x1) + 1.0)];
        if b.x1 < b.x_c {
            segments.push(seg(0.0, b.x1));
            segments.push(seg(b.x1 * (1.0 + 1e-12), b.x_c));
            let at = z(b.x1);
            worst_cont = worst_cont.max((z(b.x1 * (1.0 + 1e-13)) - at).abs() / at);
        } else {
            segments.push(seg(0.0, b.x_c));
        }
        monotone &= segments.iter().all(|s| s.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-12)));
        worst_junction = worst_junction.max(b.junction_gap.abs());
    }
    pass &= monotone && worst_cont <= 1e-9;
    parts.push(format!(
        "z monotone {monotone}, first-break continuity {worst_cont:.1e}, second-break gap (reported) {worst_junction:.3}"
    ));

    let eye = DMatrix::<f64>::identity(5, 5);
    let gc: Vec<f64> = [1.05, 1.1, 1.2]
        .iter()
        .map(|&s| gauss_compare_distance(&eye, &(&eye * s), 100_000, &rng.child(3)).unwrap().empirical_kolmogorov)
        .collect();
    let gc_ok = gc[0] < gc[1] && gc[1] < gc[2];
    pass &= gc_ok;
    parts.push(format!("GC distances {:.4} < {:.4} < {:.4}: {gc_ok}", gc[0], gc[1], gc[2]));

    let gar = gar_scaling_check(SummandLaw::RademacherProduct, 3, &[50, 100, 200, 400], 100_000, &rng.child(4)).unwrap();
    let slope = loglog_slope(&gar);
    let slope_ok = (-1.2..=-0.2).contains(&slope);
    pass &= slope_ok;
    parts.push(format!("GAR log-log slope {slope:.3}"));
    verdict(pass, parts.join("; "))
}

fn cli_determinism() -> Verdict {
    let runs: [&[&str]; 5] = [
        &["simulate", "--seed", "3", "--n", "300"],
        &["power", "--grid", "0:0.5:2", "--reps", "20", "--boot-reps", "200", "--seed", "3"],
        &["test", "--seed", "3", "--beta0", "0.7", "--boot-reps", "500"],
        &["reproduce-table", "--table", "2", "--reps", "10", "--boot-reps", "200", "--seed", "3", "--format", "json"],
        &["diagnose", "--reps", "2000", "--seed", "3"],
    ];
    let mut diffs = Vec::new();
    for args in runs {
        let out = |threads: &str| {
            Command::new(env!("CARGO_BIN_EXE_ivboot")).args(args).env("IVBOOT_THREADS", threads).output().unwrap()
        };
        let (a, b) = (out("1"), out("3"));
        if a.stdout != b.stdout || a.status.code() != b.status.code() || a.stdout.is_empty() {
            diffs.push(args[0]);
        }
    }
    verdict(diffs.is_empty(), format!("{} subcommands compared at 1 vs 3 threads; differing: {diffs:?}", runs.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 8] = [
        ("1 table 1 reproduction", table_one),
        ("2 misspecification tables", misspecified_tables),
        ("3 size control", size_control),
        ("4 Wilks shrinkage", wilks_shrinkage),
        ("5 chi-square limit", chi2_limit),
        ("6 identification suite", identification),
        ("7 concentration suite", concentration),
        ("8 CLI determinism", cli_determinism),
    ];
    let only: Option<String> = std::env::var("ACCEPTANCE_ONLY").ok();
    for (name, check) in criteria {
        if only.as_deref().is_some_and(|o| !o.split(',').any(|k| name.starts_with(k.trim()))) {
            continue;
        }
        let start = Instant::now();
        let line = match catch_unwind(AssertUnwindSafe(check)) {
            Ok(v) => format!("{} criterion {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail),
            Err(_) => format!("FAIL criterion {name}: check panicked"),
        };
        println!("{line} [{:.1}s]", start.elapsed().as_secs_f64());
    }
}
