//! Monte Carlo power studies for the LR, BLR, CLR, AR and LM tests and
//! comparison against the reference tables shipped in `fixtures/`.
//!
//! Each replication of grid point `g` draws a sample at the true `beta_star`
//! and tests `H0: beta = beta_grid[g]`. Work units own the stream
//! `(master_seed, [SAMPLE, g, r])`, and counts are merged in index order,
//! so a table depends only on its configuration.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::benchmark_tests::{
    self as bt, AmsModel, AmsProblem, Centering, ClrCalibrator, ProfileSearch,
};
use crate::bootstrap::{blr_test, draw_weights, standardized_quantile, BootstrapRun};
use crate::error::{IvError, Result};
use crate::outcome::TestOutcome;
use crate::rng::{purpose, RngStream};
use crate::simgen::{self, ErrorKind, ErrorSpec, SimConfig};
use crate::stats;

/// Test names in table column order.
pub const TESTS: [&str; 5] = ["LR", "BLR", "CLR", "AR", "LM"];

/// Rejection counts at one grid point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerRow {
    pub offset: f64,
    pub freq: [f64; 5],
    pub rejections: [usize; 5],
    /// Replications in which the test was computable.
    pub trials: [usize; 5],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerTable {
    pub grid: Vec<f64>,
    pub rows: Vec<PowerRow>,
    pub config: SimConfig,
    pub reps_used: usize,
    /// Unconditional LR critical value per grid point.
    pub lr_critical: Vec<f64>,
}

impl PowerTable {
    pub fn freq(&self, row: usize, test: &str) -> Option<f64> {
        let k = TESTS.iter().position(|t| *t == test)?;
        self.rows.get(row).map(|r| r.freq[k])
    }

    /// `offset,LR,BLR,CLR,AR,LM` followed by one line per grid point.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("offset,LR,BLR,CLR,AR,LM\n");
        for r in &self.rows {
            out.push_str(&fmt_num(r.offset));
            for f in r.freq {
                out.push(',');
                out.push_str(&fmt_num(f));
            }
            out.push('\n');
        }
        out
    }
}

/// Shortest round-trip decimal, with `-0` printed as `0`.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        "0".into()
    } else {
        format!("{x}")
    }
}

/// Critical values shared by all replications of a configuration.
#[derive(Clone, Debug)]
pub struct Calibration {
    pub clr: ClrCalibrator,
    pub lr_critical: Vec<f64>,
}

/// Unconditional LR critical value at `beta0`: the upper `alpha` quantile
/// of `t_clr` over `null_sims` samples generated with `beta = beta0`.
pub fn lr_null_critical(config: &SimConfig, model: &AmsModel, g: usize, beta0: f64) -> Result<f64> {
    let (z, pi) = simgen::design(config)?;
    let stats: Result<Vec<f64>> = (0..config.null_sims as u64)
        .into_par_iter()
        .map(|s| {
            let mut rng = RngStream::derive(config.master_seed, &[purpose::NULL_CRITICAL, g as u64, s]);
            let (y1, y2) = simgen::gen_outcomes(config, &z, &pi, beta0, &mut rng)?;
            Ok(bt::t_clr(&model.st(&y1, &y2, beta0)))
        })
        .collect();
    Ok(stats::upper_quantile(&stats?, config.alpha))
}

pub fn calibrate(config: &SimConfig, model: &AmsModel) -> Result<Calibration> {
    let mut rng = RngStream::derive(config.master_seed, &[purpose::CLR_CRITICAL]);
    let clr = ClrCalibrator::new(config.q, config.clr_draws, &mut rng)?;
    let lr_critical = config
        .beta_grid
        .iter()
        .enumerate()
        .map(|(g, &b)| lr_null_critical(config, model, g, b))
        .collect::<Result<_>>()?;
    Ok(Calibration { clr, lr_critical })
}

/// `B` bootstrap draws of the profile statistic. Draw `k` uses
/// `rng.child(k)`; indefinite draws are redrawn within a 1% budget.
pub fn ams_boot_quantile(
    problem: &AmsProblem<'_>,
    beta0: f64,
    b: usize,
    alpha: f64,
    centering: Centering,
    search: ProfileSearch,
    rng: &RngStream,
) -> Result<BootstrapRun> {
    if b < 100 || !(alpha > 0.0 && alpha < 1.0) {
        return Err(IvError::InvalidInput("need B >= 100 and 0 < alpha < 1".into()));
    }
    let beta_tilde = problem.beta_tilde()?;
    let center = match centering {
        Centering::Mle => beta_tilde,
        Centering::Hypothesis => beta0,
    };
    let n = problem.model().n_obs();
    let budget = b / 100;
    let mut retries = 0;
    let mut samples = Vec::with_capacity(b);
    for k in 0..b as u64 {
        let mut stream = rng.child(k);
        loop {
            let w: DVector<f64> = draw_weights(n, &mut stream);
            match problem.blr_statistic(&w, center, beta_tilde, search) {
                Ok(t) => {
                    samples.push(t);
                    break;
                }
                Err(IvError::Retry) => {
                    retries += 1;
                    if retries > budget {
                        return Err(IvError::RetryOverflow { retries, requested: b });
                    }
                }
                Err(e) => return Err(e),
            }
        }
    }
    let dim = problem.model().n_instruments();
    let z_star_alpha = standardized_quantile(&samples, dim, alpha);
    Ok(BootstrapRun { n_boot: b, t_blr_samples: samples, z_star_alpha, alpha, dim, retries })
}

/// All five tests of `H0: beta = beta0` in column order.
pub fn evaluate_tests(
    problem: &AmsProblem<'_>,
    beta0: f64,
    lr_critical: f64,
    clr: &ClrCalibrator,
    config: &SimConfig,
    boot_rng: &RngStream,
) -> [Result<TestOutcome>; 5] {
    let pair = problem.st(beta0);
    let t_lr = bt::t_clr(&pair);
    let blr = ams_boot_quantile(problem, beta0, config.boot_reps, config.alpha, config.centering, config.blr_search, boot_rng)
        .map(|run| blr_test(t_lr, &run));
    [
        Ok(bt::lr_test(&pair, lr_critical)),
        blr,
        Ok(bt::clr_test(&pair, clr, config.alpha)),
        Ok(bt::ar_test(&pair, config.alpha)),
        bt::lm_test(&pair, config.alpha),
    ]
}

/// Rejection frequencies of the five tests over the configured grid.
pub fn power_curve(config: &SimConfig) -> Result<PowerTable> {
    config.validate()?;
    let (z, pi) = simgen::design(config)?;
    let model = AmsModel::new(&z, &config.error.omega())?;
    let cal = calibrate(config, &model)?;
    let reps = config.reps as u64;
    let units: Vec<(usize, u64)> =
        (0..config.beta_grid.len()).flat_map(|g| (0..reps).map(move |r| (g, r))).collect();
    let outcomes: Vec<[Option<bool>; 5]> = units
        .par_iter()
        .map(|&(g, r)| {
            let beta0 = config.beta_grid[g];
            let mut rng = RngStream::derive(config.master_seed, &[purpose::SAMPLE, g as u64, r]);
            let (y1, y2) = simgen::gen_outcomes(config, &z, &pi, config.beta_star, &mut rng)?;
            let problem = model.problem(&y1, &y2)?;
            let boot = rng.child(purpose::BOOTSTRAP);
            let res = evaluate_tests(&problem, beta0, cal.lr_critical[g], &cal.clr, config, &boot);
            Ok(res.map(|o| o.ok().map(|o| o.reject)))
        })
        .collect::<Result<_>>()?;
    let rows = config
        .beta_grid
        .iter()
        .enumerate()
        .map(|(g, &offset)| {
            let mut rejections = [0; 5];
            let mut trials = [0; 5];
            for o in &outcomes[g * config.reps..(g + 1) * config.reps] {
                for k in 0..5 {
                    if let Some(rej) = o[k] {
                        trials[k] += 1;
                        rejections[k] += rej as usize;
                    }
                }
            }
            let freq = std::array::from_fn(|k| {
                if trials[k] == 0 { f64::NAN } else { rejections[k] as f64 / trials[k] as f64 }
            });
            PowerRow { offset, freq, rejections, trials }
        })
        .collect();
    Ok(PowerTable {
        grid: config.beta_grid.clone(),
        rows,
        config: config.clone(),
        reps_used: config.reps,
        lr_critical: cal.lr_critical,
    })
}

/// Rejection frequencies at `beta0 = beta_star`.
pub fn size_check(config: &SimConfig) -> Result<[f64; 5]> {
    let cfg = SimConfig { beta_grid: vec![config.beta_star], ..config.clone() };
    Ok(power_curve(&cfg)?.rows[0].freq)
}

/// Test outcomes for a single sample, with critical values calibrated
/// under `config`.
pub fn test_sample(
    config: &SimConfig,
    y1: &DVector<f64>,
    y2: &DVector<f64>,
    beta0: f64,
) -> Result<Vec<TestOutcome>> {
    let cfg = SimConfig { beta_grid: vec![beta0], ..config.clone() };
    cfg.validate()?;
    let (z, _) = simgen::design(&cfg)?;
    let model = AmsModel::new(&z, &cfg.error.omega())?;
    let cal = calibrate(&cfg, &model)?;
    let problem = model.problem(y1, y2)?;
    let boot = RngStream::derive(cfg.master_seed, &[purpose::BOOTSTRAP]);
    evaluate_tests(&problem, beta0, cal.lr_critical[0], &cal.clr, &cfg, &boot)
        .into_iter()
        .collect()
}

/// A reference table: its data line and the tabulated frequencies.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceTable {
    pub id: u8,
    pub title: &'static str,
    pub n: usize,
    pub q: usize,
    pub concentration: f64,
    pub error: ErrorKind,
    pub rows: Vec<[f64; 6]>,
    pub csv: &'static str,
}

impl ReferenceTable {
    pub fn grid(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r[0]).collect()
    }

    /// Configuration reproducing this table.
    pub fn config(&self, reps: usize, boot_reps: usize, master_seed: u64) -> SimConfig {
        SimConfig {
            n: self.n,
            q: self.q,
            concentration: self.concentration,
            error: ErrorSpec::new(self.error),
            beta_grid: self.grid(),
            reps,
            boot_reps,
            master_seed,
            ..SimConfig::default()
        }
    }

    /// The table itself as a [`PowerTable`] (frequencies only).
    pub fn as_power_table(&self) -> PowerTable {
        let rows = self
            .rows
            .iter()
            .map(|r| PowerRow {
                offset: r[0],
                freq: [r[1], r[2], r[3], r[4], r[5]],
                rejections: [0; 5],
                trials: [0; 5],
            })
            .collect();
        PowerTable {
            grid: self.grid(),
            rows,
            config: self.config(120, 1000, 0),
            reps_used: 0,
            lr_critical: vec![],
        }
    }
}

const FIXTURES: [(&str, &str, f64, ErrorKind); 4] = [
    ("Power, weak instruments", include_str!("../fixtures/table1.csv"), 4.0, ErrorKind::Gauss),
    ("Power, weak instruments, Laplace noise", include_str!("../fixtures/table2.csv"), 2.56, ErrorKind::Laplace),
    ("Power, weak instruments, heteroskedastic noise", include_str!("../fixtures/table3.csv"), 2.56, ErrorKind::HeteroLinear),
    ("Power, weak instruments, periodic heteroskedastic noise", include_str!("../fixtures/table4.csv"), 2.56, ErrorKind::HeteroPeriodic),
];

/// Reference table `id` in `1..=4`.
pub fn reference_table(id: u8) -> Result<ReferenceTable> {
    let (title, csv, concentration, error) = *FIXTURES
        .get((id as usize).wrapping_sub(1))
        .ok_or_else(|| IvError::InvalidInput(format!("no reference table {id}")))?;
    let mut lines = csv.lines();
    if lines.next() != Some("offset,LR,BLR,CLR,AR,LM") {
        return Err(IvError::InvalidInput(format!("fixture {id} has an unexpected header")));
    }
    let rows = lines
        .map(|l| {
            let v: Vec<f64> = l.split(',').map(|x| x.parse().unwrap_or(f64::NAN)).collect();
            if v.len() != 6 || v.iter().any(|x| x.is_nan()) {
                return Err(IvError::InvalidInput(format!("fixture {id}: bad line {l:?}")));
            }
            Ok([v[0], v[1], v[2], v[3], v[4], v[5]])
        })
        .collect::<Result<_>>()?;
    Ok(ReferenceTable { id, title, n: 200, q: 5, concentration, error, rows, csv })
}

/// Absolute difference of one cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellDiff {
    pub offset: f64,
    pub test: String,
    pub ours: f64,
    pub reference: f64,
    pub diff: f64,
}

/// Cell-by-cell comparison of the LR, BLR and CLR columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub reference_id: u8,
    pub cells: Vec<CellDiff>,
    pub within_008: f64,
    pub within_015: f64,
    pub max_diff: f64,
    pub pass: bool,
}

/// Compare the LR/BLR/CLR columns against reference `id`. Passing needs at
/// least 90% of cells within 0.08 and all within 0.15.
pub fn compare_to_paper(table: &PowerTable, id: u8) -> Result<ComparisonReport> {
    let reference = reference_table(id)?;
    let c = &table.config;
    let grid_ok = table.grid.len() == reference.rows.len()
        && table.grid.iter().zip(reference.grid()).all(|(a, b)| (a - b).abs() < 1e-9);
    let data_ok = c.n == reference.n
        && c.q == reference.q
        && (c.concentration - reference.concentration).abs() < 1e-12
        && c.error.kind == reference.error
        && c.error.omega == [[1.0, 0.0], [0.0, 1.0]];
    if !grid_ok || !data_ok {
        return Err(IvError::ConfigMismatch(format!(
            "table does not match the data line or grid of reference {id}"
        )));
    }
    let mut cells = Vec::new();
    for (row, reference_row) in table.rows.iter().zip(&reference.rows) {
        for k in 0..3 {
            let (ours, theirs) = (row.freq[k], reference_row[k + 1]);
            cells.push(CellDiff {
                offset: row.offset,
                test: TESTS[k].to_string(),
                ours,
                reference: theirs,
                diff: (ours - theirs).abs(),
            });
        }
    }
    let total = cells.len() as f64;
    // NaN differences count as misses
    let within = |tol: f64| cells.iter().filter(|c| c.diff <= tol).count() as f64 / total;
    let (within_008, within_015) = (within(0.08 + 1e-12), within(0.15 + 1e-12));
    let max_diff = cells.iter().map(|c| c.diff).fold(0.0, |a: f64, d| if d.is_nan() { f64::INFINITY } else { a.max(d) });
    Ok(ComparisonReport {
        reference_id: id,
        cells,
        within_008,
        within_015,
        max_diff,
        pass: within_008 >= 0.9 && within_015 >= 1.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_parse() {
        let sizes = [17, 17, 20, 17];
        for id in 1..=4u8 {
            let t = reference_table(id).unwrap();
            assert_eq!(t.rows.len(), sizes[id as usize - 1]);
            assert_eq!(t.as_power_table().to_csv(), t.csv);
        }
        assert!(reference_table(0).is_err());
        assert!(reference_table(5).is_err());
    }

    #[test]
    fn self_comparison_is_exact() {
        for id in 1..=4u8 {
            let t = reference_table(id).unwrap().as_power_table();
            let rep = compare_to_paper(&t, id).unwrap();
            assert!(rep.cells.iter().all(|c| c.diff == 0.0));
            assert!(rep.pass);
        }
    }

    #[test]
    fn corrupted_cell_fails() {
        let mut t = reference_table(1).unwrap().as_power_table();
        t.rows[7].freq[1] += 0.5;
        let rep = compare_to_paper(&t, 1).unwrap();
        assert!(!rep.pass);
        assert!((rep.max_diff - 0.5).abs() < 1e-12);
    }

    #[test]
    fn mismatched_config_rejected() {
        let mut t = reference_table(2).unwrap().as_power_table();
        assert!(matches!(compare_to_paper(&t, 1), Err(IvError::ConfigMismatch(_))));
        t.config.n = 100;
        assert!(compare_to_paper(&t, 2).is_err());
    }
}
