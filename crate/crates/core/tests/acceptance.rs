//! Acceptance suite. One PASS/FAIL line per criterion; exits non-zero if
//! any criterion fails.

use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use proptest::test_runner::{Config, TestRunner};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal};

use relwn::bootstrap::{self, BlockKernel, BlockSumTable};
use relwn::cli::{self, IngestSpec, Transform};
use relwn::estimator::{self, ResidualScheme};
use relwn::statistic;
use relwn::{
    acf_surface, generate_tvar, rejection_curve, KernelSpec, Mode, PhiFunction, SimDesign, TimeSeries, TuningConfig,
};

const SEED: u64 = 42;
const REPS: usize = 500;
const BOOT: usize = 1000;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn design(phi: PhiFunction, n: usize, deltas: Vec<f64>) -> SimDesign {
    SimDesign {
        replications: REPS,
        delta_grid: deltas,
        lags: vec![3],
        alpha: 0.1,
        seed: SEED,
        ..SimDesign::new(phi, n)
    }
}

fn sim_config() -> TuningConfig {
    TuningConfig {
        boot: BOOT,
        mode: Mode::Correlation,
        ..TuningConfig::default()
    }
}

/// Criteria 1-4 share the simulation runs.
struct Curves {
    stationary: relwn::simulate::RejectionCurve,
    local: relwn::simulate::RejectionCurve,
}

const GRID: [f64; 6] = [0.0, 0.05, 0.1, 0.15, 0.2, 0.25];

fn curves() -> Curves {
    let cfg = sim_config();
    Curves {
        stationary: rejection_curve(&design(PhiFunction::Const02, 600, GRID.to_vec()), &cfg).expect("const02 curve"),
        local: rejection_curve(&design(PhiFunction::Sin02, 600, GRID.to_vec()), &cfg).expect("sin02 curve"),
    }
}

fn level_at_boundary(c: &Curves) -> Outcome {
    let p = c.stationary.rate(0.2, 3).unwrap();
    outcome(
        p.reject_rate <= 0.13,
        format!("CONST02 rate at delta=0.2 is {:.3} (se {:.3}); need <= 0.13", p.reject_rate, p.se),
    )
}

fn conservativeness_ordering(c: &Curves) -> Outcome {
    let s = c.local.rate(0.15, 3).unwrap();
    let k = c.stationary.rate(0.15, 3).unwrap();
    outcome(
        s.reject_rate <= k.reject_rate + k.se,
        format!(
            "SIN02 {:.3} vs CONST02 {:.3} + se {:.3} at delta=0.15",
            s.reject_rate, k.reject_rate, k.se
        ),
    )
}

fn power(c: &Curves) -> Outcome {
    let p = c.stationary.rate(0.0, 3).unwrap();
    outcome(p.reject_rate >= 0.90, format!("CONST02 rate at delta=0 is {:.3}; need >= 0.90", p.reject_rate))
}

fn monotonicity(c: &Curves) -> Outcome {
    let violations: usize = [&c.stationary, &c.local]
        .iter()
        .flat_map(|curve| curve.decisions.iter().flatten())
        .map(|row| row.windows(2).filter(|w| !w[0] && w[1]).count())
        .sum();
    outcome(violations == 0, format!("{violations} violations over {} replications", 2 * REPS))
}

/// Surface, extremal set and block-sum table for a fixed dataset.
fn table_for(series: &TimeSeries, rho: f64) -> BlockSumTable {
    let spec = KernelSpec::triweight(0.3).unwrap();
    let surface = acf_surface(series, 3, &spec, Mode::Correlation).unwrap();
    let eset = statistic::extremal_set(&surface, rho);
    let resid = estimator::residuals(series, &surface, ResidualScheme::FirstOrder).unwrap();
    bootstrap::block_sums(&resid, &eset, 5, &spec, BlockKernel::InBlock).unwrap()
}

fn dataset(k: u64, n: usize) -> TimeSeries {
    let d = SimDesign::new(PhiFunction::Const02, n);
    generate_tvar(&d, &mut ChaCha8Rng::seed_from_u64(1000 + k)).unwrap()
}

/// Order statistic at rank ⌈B(1-α)⌉.
fn order_quantile(mut v: Vec<f64>, alpha: f64) -> f64 {
    v.sort_by(f64::total_cmp);
    let rank = (v.len() as f64 * (1.0 - alpha)).ceil() as usize;
    v[rank - 1]
}

fn gaussian_oracle() -> Outcome {
    const B: usize = 100_000;
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut worst_single = 0.0f64;
    let mut singles = 0;
    for k in 0..20 {
        let series = dataset(k, 300);
        let table = table_for(&series, 0.0);
        if table.entries.len() != 1 {
            return outcome(false, format!("dataset {k}: extremal set has {} elements", table.entries.len()));
        }
        singles += 1;
        let a = &table.entries[0].values;
        let sigma = a.iter().map(|v| v * v).sum::<f64>().sqrt() / ((table.n as f64) * table.bandwidth).sqrt();
        let draws = bootstrap::bootstrap_draws(&table, B, 7 + k).unwrap();
        for alpha in [0.05, 0.1] {
            let q = bootstrap::bootstrap_quantile(&draws, alpha).unwrap();
            let z = normal.inverse_cdf(1.0 - alpha) * sigma;
            worst_single = worst_single.max((q - z).abs() / z);
        }
    }

    let mut worst_multi = 0.0f64;
    let mut sizes = Vec::new();
    for k in 0..5 {
        let series = dataset(100 + k, 300);
        let table = table_for(&series, 0.02);
        let m = table.entries.len();
        sizes.push(m);
        let len = table.multiplier_len();
        let scale = 1.0 / ((table.n as f64) * table.bandwidth).sqrt();
        // Rows: sign·scale·A_e padded to the shared multiplier length.
        let mut a = DMatrix::<f64>::zeros(m, len);
        for (i, e) in table.entries.iter().enumerate() {
            for (j, v) in e.values.iter().enumerate() {
                a[(i, e.offset + j)] = f64::from(e.point.sign) * scale * v;
            }
        }
        let cov = &a * a.transpose();
        let eig = SymmetricEigen::new(cov);
        let root = &eig.eigenvectors * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
        let mut rng = ChaCha8Rng::seed_from_u64(99 + k);
        let oracle: Vec<f64> = (0..B)
            .map(|_| {
                let z = DVector::<f64>::from_fn(m, |_, _| StandardNormal.sample(&mut rng));
                (&root * z).max()
            })
            .collect();
        let draws = bootstrap::bootstrap_draws(&table, B, 500 + k).unwrap();
        for alpha in [0.05, 0.1] {
            let q = bootstrap::bootstrap_quantile(&draws, alpha).unwrap();
            let o = order_quantile(oracle.clone(), alpha);
            worst_multi = worst_multi.max((q - o).abs() / o.abs());
        }
    }
    let multi_ok = sizes.iter().all(|&s| s > 1);
    outcome(
        singles == 20 && worst_single <= 0.02 && worst_multi <= 0.02 && multi_ok,
        format!(
            "singleton max rel err {:.4} over 20 datasets; multi-element (sizes {:?}) max rel err {:.4}; need <= 0.02",
            worst_single, sizes, worst_multi
        ),
    )
}

/// `X_1 = 1`, `X_{j+1} = (a + b j/n) / X_j`, so `X_{j+1} X_j = a + b j/n`.
fn affine_series(n: usize, a: f64, b: f64) -> TimeSeries {
    let mut x = vec![1.0];
    for j in 1..n {
        let prev = x[j - 1];
        x.push((a + b * j as f64 / n as f64) / prev);
    }
    TimeSeries::new(x).unwrap()
}

fn estimator_exactness() -> Outcome {
    let start = Instant::now();
    let mut runner = TestRunner::new(Config {
        cases: 64,
        failure_persistence: None,
        ..Config::default()
    });
    let worst = std::cell::Cell::new(0.0f64);
    let result = runner.run(&(0.5f64..2.0, -0.4f64..0.4, 100usize..800, 0.1f64..0.45), |(a, b, n, bw)| {
        let series = affine_series(n, a, b);
        let spec = KernelSpec::triweight(bw).unwrap();
        let surface = acf_surface(&series, 1, &spec, Mode::Covariance).unwrap();
        for (_, j, v) in surface.points() {
            let truth = a + b * j as f64 / n as f64;
            let rel = (v - truth).abs() / truth.abs();
            worst.set(worst.get().max(rel));
            proptest::prop_assert!(rel <= 1e-9, "n={} bw={} j={} rel={}", n, bw, j, rel);
        }
        Ok(())
    });
    let secs = start.elapsed().as_secs_f64();
    match result {
        Ok(()) => outcome(secs < 1.0, format!("64 cases, max rel err {:.2e}, {secs:.2} s; need <= 1e-9 within 1 s", worst.get())),
        Err(e) => outcome(false, format!("{e}")),
    }
}

fn null_calibration() -> Outcome {
    let d = design(PhiFunction::Constant(0.0), 1000, vec![0.0]);
    let c = rejection_curve(&d, &sim_config()).unwrap();
    let p = c.rate(0.0, 3).unwrap();
    outcome(
        (0.02..=0.13).contains(&p.reject_rate),
        format!("iid rate at delta=0 is {:.3} (se {:.3}); need within [0.02, 0.13]", p.reject_rate, p.se),
    )
}

fn case_study() -> Outcome {
    let start = Instant::now();
    let spec = IngestSpec {
        transform: Transform::LogReturn,
        ..IngestSpec::new(root().join("data/sp500_close_1980_1999.csv"))
    };
    let series = match cli::ingest(&spec) {
        Ok(s) => s,
        Err(e) => return outcome(false, format!("ingest failed: {e}")),
    };
    let cfg = TuningConfig {
        alpha: 0.05,
        lags: 3,
        mode: Mode::Correlation,
        seed: 1,
        ..TuningConfig::default()
    };
    let report = relwn::run_test(&series, &cfg).unwrap();
    let (q, p) = cli::ljung_box(&series, 100).unwrap();
    let secs = start.elapsed().as_secs_f64();
    outcome(
        (0.015..=0.045).contains(&report.adaptive_delta) && p < 0.01 && secs < 120.0,
        format!(
            "n={} adaptive delta {:.4} (d_hat {:.4}, q* {:.3}, h {:.4}, l {}); need within [0.015, 0.045]; Ljung-Box m=100 Q={:.1} p={:.2e}; {:.1} s",
            report.n, report.adaptive_delta, report.d_hat_inf, report.q_star, report.tuning.bandwidth,
            report.tuning.block_length, q, p, secs
        ),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let data = root().join("data/sp500_close_1980_1999.csv");
    let bin = env!("CARGO_BIN_EXE_relwn");
    let run = |threads: &str, args: &[&str], out: &Path| {
        let status = Command::new(bin)
            .env("RELWN_THREADS", threads)
            .args(args)
            .arg(out)
            .output()
            .expect("spawn relwn");
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        std::fs::read(out).unwrap()
    };
    let d = data.to_str().unwrap();
    let test_args = ["test", d, "--transform", "log-return", "--seed", "3", "--boot", "500", "--json"];
    let sim_args = [
        "simulate", "--design", "sin02", "--n", "300", "--reps", "100", "--boot", "200", "--seed", "3", "--out",
    ];
    let mut same = Vec::new();
    for (name, args) in [("test", &test_args[..]), ("simulate", &sim_args[..])] {
        let outs: Vec<Vec<u8>> = ["1", "2", "4"]
            .iter()
            .map(|t| run(t, args, &dir.path().join(format!("{name}-{t}.out"))))
            .collect();
        same.push(outs.windows(2).all(|w| w[0] == w[1]));
    }
    let lib_same = {
        let series = dataset(0, 400);
        let cfg = TuningConfig {
            boot: 300,
            seed: 11,
            ..TuningConfig::default()
        };
        let a = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| relwn::run_test(&series, &cfg).unwrap());
        let b = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap().install(|| relwn::run_test(&series, &cfg).unwrap());
        serde_json::to_vec(&a).unwrap() == serde_json::to_vec(&b).unwrap()
    };
    outcome(
        same.iter().all(|&s| s) && lib_same,
        format!("test JSON identical: {}; simulate CSV identical: {}; library report identical: {lib_same}", same[0], same[1]),
    )
}

fn main() -> ExitCode {
    let start = Instant::now();
    let c = curves();
    let sim_secs = start.elapsed().as_secs_f64();
    println!("simulation curves: {REPS} replications x 2 designs, B = {BOOT}, {sim_secs:.1} s");

    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("level at the boundary", Box::new(|| level_at_boundary(&c))),
        ("conservativeness ordering", Box::new(|| conservativeness_ordering(&c))),
        ("power", Box::new(|| power(&c))),
        ("monotonicity in delta", Box::new(|| monotonicity(&c))),
        ("gaussian oracle", Box::new(gaussian_oracle)),
        ("estimator exactness", Box::new(estimator_exactness)),
        ("null calibration", Box::new(null_calibration)),
        ("case study", Box::new(case_study)),
        ("determinism", Box::new(determinism)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!("{} [{}] {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
