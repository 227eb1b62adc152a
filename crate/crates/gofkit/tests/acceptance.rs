//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run all with `cargo test -p gofkit --test acceptance`; pass criterion
//! numbers after `--` to run a subset, e.g. `-- 3 6`.

use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use gofkit::bench::{run_plan_with_basis, CalibrationSettings, ExperimentPlan, M3dSettings, PowerTable, SpectrumSettings};
use gofkit::calibrate::chisq_mix_for_basis;
use gofkit::calibration::CalibrationChoice;
use gofkit::dists::{AlternativeSpec, LeastFavorable};
use gofkit::embedding::{adaptive_grid, eta_sq, eta_sq_gram, m3d_parts, rho_schedule, theory_threshold};
use gofkit::kernel::StandardKernel;
use gofkit::probe::{boundary_probe, ProbeConfig};
use gofkit::quadrature::Quadrature;
use gofkit::rng::stream_rng;
use gofkit::sample::{Domain, Sample};
use gofkit::special::{ln_sphere_area, normal_cdf};
use gofkit::spectrum::{effective_variance, moderated_eval, nystrom_spectrum, ModeratedSpectrum, SpectralBasis};
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

type Check = fn() -> Outcome;

fn main() {
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let checks: [(usize, &str, Option<Duration>, Check); 10] = [
        (1, "Nystrom spectrum of the cosine kernel", Some(Duration::from_secs(5)), spectral_fidelity),
        (2, "eta_sq feature form equals Gram form", Some(Duration::from_secs(10)), exact_identity),
        (3, "moderated cosine kernel closed forms", None, closed_form),
        (4, "studentized M3d is asymptotically normal", Some(Duration::from_secs(120)), null_asymptotics),
        (5, "level of MMD, M3d and adaptive at n = 500", None, level),
        (6, "adaptive grid and theory threshold", None, adaptive_formulas),
        (7, "adaptive error <= MMD error at n >= 600 (desk fig1)", None, power_ordering),
        (8, "detection-boundary probe", Some(Duration::from_secs(900)), rate_probe),
        (9, "sphere densities", None, distributions),
        (10, "fig1 desk reproduction is byte-identical", None, determinism),
    ];
    let mut failed = Vec::new();
    let mut ran = 0;
    for (id, name, budget, check) in checks {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let mut out = check();
        let elapsed = start.elapsed();
        if let Some(b) = budget {
            if elapsed > b {
                out.pass = false;
                out.detail.push_str(&format!("; runtime over budget of {} s", b.as_secs()));
            }
        }
        println!(
            "criterion {id:>2} {}: {name} [{:.1} s] {}",
            if out.pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            out.detail
        );
        ran += 1;
        if !out.pass {
            failed.push(id.to_string());
        }
    }
    println!(
        "acceptance: {} of {ran} criteria pass{}",
        ran - failed.len(),
        if failed.is_empty() { String::new() } else { format!("; failing: {}", failed.join(", ")) }
    );
    // The suite reports; set ACCEPTANCE_STRICT=1 to turn a red line into a failing exit status.
    if !failed.is_empty() && std::env::var_os("ACCEPTANCE_STRICT").is_some_and(|v| v == "1") {
        std::process::exit(1);
    }
}

fn spectral_fidelity() -> Outcome {
    let quad = Quadrature::gauss_legendre_unit(512).unwrap();
    let kernel = StandardKernel::parse("cosine").unwrap();
    let eig = nystrom_spectrum(&kernel, &quad).unwrap();
    let worst = (1..=5)
        .map(|k| {
            let exact = 1.0 / (k as f64 * std::f64::consts::PI).powi(2);
            (eig[k - 1] - exact).abs() / exact
        })
        .fold(0.0f64, f64::max);
    outcome(worst < 0.01, format!("max relative error of top 5 = {worst:.2e} (tol 1e-2)"))
}

fn exact_identity() -> Outcome {
    let basis = SpectralBasis::cosine_reference(300).unwrap();
    let mut rng = stream_rng(2024, 0);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let n = rng.random_range(2..300);
        let rho = 10f64.powf(rng.random_range(-3.0..0.5));
        let data: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let sample = Sample::new(Domain::Cube(1), data).unwrap();
        let ms = ModeratedSpectrum::new(&basis, rho).unwrap();
        let a = eta_sq(&ms, &sample).unwrap();
        let b = eta_sq_gram(&ms, &sample).unwrap();
        worst = worst.max((a - b).abs() / b.abs().max(f64::MIN_POSITIVE));
    }
    outcome(worst <= 1e-10, format!("max relative difference over 50 configs = {worst:.2e} (tol 1e-10)"))
}

fn closed_form() -> Outcome {
    let basis = SpectralBasis::cosine_reference(1_000_000).unwrap();
    let ms = ModeratedSpectrum::new(&basis, 0.1).unwrap();
    let k = moderated_eval(&ms, &[0.5], &[0.5]);
    let exact = 5.0 / 5f64.tanh() - 1.0;
    let v = effective_variance(&ms);
    let ok = (k - exact).abs() <= 1e-3 && (v - 2.0).abs() <= 5e-4;
    outcome(
        ok,
        format!("K(1/2,1/2) = {k:.6} vs {exact:.6} (tol 1e-3); v = {v:.6} vs 2 (tol 5e-4)"),
    )
}

fn null_asymptotics() -> Outcome {
    let n = 2000;
    let basis = SpectralBasis::cosine_reference(2000).unwrap();
    let rho = rho_schedule(n, 1.0, 0.0, 1.0).unwrap();
    let ms = ModeratedSpectrum::new(&basis, rho).unwrap();
    let null = AlternativeSpec::UniformCube { d: 1 };
    let mut stats: Vec<f64> = (0..500u64)
        .map(|r| {
            let sample = null.sample(n, 40_000 + r).unwrap();
            let proj = basis.project(&sample).unwrap();
            m3d_parts(&ms, &proj).unwrap().studentized()
        })
        .collect();
    stats.sort_by(f64::total_cmp);
    let m = stats.len() as f64;
    let ks = stats
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let f = normal_cdf(t);
            (f - i as f64 / m).abs().max((f - (i + 1) as f64 / m).abs())
        })
        .fold(0.0f64, f64::max);
    outcome(ks <= 0.10, format!("Kolmogorov distance = {ks:.4} (tol 0.10), rho = {rho:.4}"))
}

fn level() -> Outcome {
    let plan = ExperimentPlan {
        null: "uniform-cube:d=1".into(),
        alternatives: vec!["uniform-cube:d=1".into()],
        tests: vec!["mmd".into(), "m3d".into(), "adaptive".into()],
        n: vec![500],
        reps: 500,
        alpha: 0.05,
        seed: 5,
        spectrum: SpectrumSettings {
            kernel: "cosine".into(),
            truncation: Some(2000),
            nodes: None,
        },
        calibration: CalibrationSettings::default(),
        m3d: M3dSettings::default(),
        output: None,
    };
    let basis = plan.spectrum_request().build().unwrap();
    let table = run_plan_with_basis(&plan, &basis).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for test in ["mmd", "m3d", "adaptive"] {
        let cell = table.cell("uniform-cube:d=1", test, 500).unwrap();
        ok &= (cell.rejection_rate - 0.05).abs() <= 0.03;
        parts.push(format!("{test} {:.3}", cell.rejection_rate));
    }
    outcome(ok, format!("rejection rates over 500 runs: {} (target 0.05 +- 0.03)", parts.join(", ")))
}

fn adaptive_formulas() -> Outcome {
    let g = adaptive_grid(1000, 1.0).unwrap();
    let t = theory_threshold(1000).unwrap();
    let ok = ((g.rho_star - 1.9327e-6) / 1.9327e-6).abs() < 5e-5 && g.m_star == 16 && (t - 2.4079).abs() < 1e-4;
    outcome(
        ok,
        format!("rho_* = {:.4e}, m_* = {}, threshold = {t:.5}", g.rho_star, g.m_star),
    )
}

fn reproduce_fig1(dir: &Path, cache: &Path) -> Result<Vec<u8>, String> {
    let status = Command::new(env!("CARGO_BIN_EXE_gofkit"))
        .args(["reproduce", "fig1", "--scale", "desk", "--seed", "1", "--quiet", "--out"])
        .arg(dir)
        .arg("--cache-dir")
        .arg(cache)
        .output()
        .map_err(|e| e.to_string())?;
    if !status.status.success() {
        return Err(String::from_utf8_lossy(&status.stderr).into_owned());
    }
    std::fs::read(dir.join("power.csv")).map_err(|e| e.to_string())
}

fn fig1_csv() -> &'static Result<(Vec<u8>, Vec<u8>), String> {
    static RUNS: std::sync::OnceLock<Result<(Vec<u8>, Vec<u8>), String>> = std::sync::OnceLock::new();
    RUNS.get_or_init(|| {
        let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
        let first = reproduce_fig1(&tmp.path().join("a"), &tmp.path().join("cache"))?;
        let second = reproduce_fig1(&tmp.path().join("b"), &tmp.path().join("cache"))?;
        Ok((first, second))
    })
}

fn power_ordering() -> Outcome {
    let csv = match fig1_csv() {
        Ok((csv, _)) => csv,
        Err(e) => return outcome(false, format!("run failed: {e}")),
    };
    let table = PowerTable::from_csv(std::str::from_utf8(csv).unwrap(), Path::new("power.csv")).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    let alternatives: Vec<String> = {
        let mut a: Vec<String> = table.rows.iter().map(|r| r.alternative.clone()).collect();
        a.dedup();
        a
    };
    for alt in alternatives.iter().filter(|a| a.starts_with("marron-wand")) {
        for n in [600, 800, 1000] {
            let a = table.cell(alt, "adaptive", n).unwrap();
            let m = table.cell(alt, "mmd", n).unwrap();
            let se = (a.standard_error.powi(2) + m.standard_error.powi(2)).sqrt();
            let pass = a.acceptance_rate <= m.acceptance_rate + 2.0 * se;
            ok &= pass;
            let short = alt.split(',').next().unwrap_or(alt);
            parts.push(format!(
                "{short} n={n}: {:.2} vs {:.2} (allowance {:.3}){}",
                a.acceptance_rate,
                m.acceptance_rate,
                2.0 * se,
                if pass { "" } else { " violated" }
            ));
        }
    }
    outcome(
        ok,
        format!("adaptive vs MMD error, allowance = 2 SE of the difference: {}", parts.join("; ")),
    )
}

fn rate_probe() -> Outcome {
    let basis = Arc::new(SpectralBasis::cosine_reference(256).unwrap());
    let deltas: Vec<f64> = (0..14).map(|i| 10f64.powf(-3.0 + i as f64 * 2.5 / 13.0)).collect();
    let cfg = ProbeConfig::m3d(1.0, 0.0, vec![250, 500, 1000, 2000], deltas, 200, 8);
    let m3d = boundary_probe(basis.clone(), &cfg).unwrap();
    let slope = m3d.slope;
    let slope_ok = slope.is_some_and(|s| (-1.0..=-0.6).contains(&s));
    let bounds: Vec<String> = m3d
        .boundaries
        .iter()
        .map(|(n, b)| format!("{n}:{}", b.map_or("none".into(), |b| format!("{b:.4}"))))
        .collect();

    // c0 as in the non-consistency argument: the limiting shift of n*gamma
    // equals half the 95% null quantile, i.e. c0 / pi^2 = q / 2 for k_n = floor(n^(1/4)).
    let q = chisq_mix_for_basis(&basis, 0.05, 100_000, 10).unwrap().quantile;
    let c0 = std::f64::consts::PI.powi(2) * q / 2.0;
    let mmd_cfg = ProbeConfig {
        kind: gofkit::embedding::TestKind::Mmd,
        deltas: vec![c0],
        delta_exponent: -0.5,
        construction: LeastFavorable::SingleFrequency { c: 1.0 },
        calibration: CalibrationChoice::Chisq { reps: 100_000 },
        ..ProbeConfig::m3d(1.0, 0.0, vec![250, 500, 1000, 2000], vec![], 200, 9)
    };
    let mmd = boundary_probe(basis, &mmd_cfg).unwrap();
    let max_power = mmd.rows.iter().map(|r| r.power).fold(0.0f64, f64::max);
    let powers: Vec<String> = mmd.rows.iter().map(|r| format!("{}:{:.2}", r.n, r.power)).collect();
    outcome(
        slope_ok && max_power <= 0.9,
        format!(
            "M3d slope = {} (target [-1.0, -0.6]), boundaries {}; MMD power at c0 n^-1/2 (c0 = {c0:.3}): {} (max <= 0.9)",
            slope.map_or("none".into(), |s| format!("{s:.3}")),
            bounds.join(" "),
            powers.join(" ")
        ),
    )
}

fn distributions() -> Outcome {
    let mut rng = stream_rng(99, 0);
    let area = ln_sphere_area(3).exp();
    let specs = ["vmf:d=3,kappa=1", "watson:d=3,kappa=0", "watson:d=3,kappa=2"]
        .map(|s| AlternativeSpec::parse(s).unwrap());
    let mut sums = [0.0; 3];
    let m = 1_000_000;
    let mut x = [0.0; 3];
    for _ in 0..m {
        loop {
            for v in x.iter_mut() {
                *v = rng.random_range(-1.0..1.0);
            }
            let r: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if r > 1e-3 && r <= 1.0 {
                x.iter_mut().for_each(|v| *v /= r);
                break;
            }
        }
        for (s, spec) in sums.iter_mut().zip(&specs) {
            *s += spec.density(&x).unwrap();
        }
    }
    let integrals = sums.map(|s| s / m as f64 * area);
    let mode = specs[0].density(&[0.0, 0.0, 1.0]).unwrap();
    let ok = integrals.iter().all(|v| (v - 1.0).abs() <= 0.01) && (mode - 0.18406).abs() <= 1e-4;
    outcome(
        ok,
        format!(
            "integrals vmf(1) {:.4}, watson(0) {:.4}, watson(2) {:.4} (tol 1e-2); vmf mode density {mode:.5} (tol 1e-4)",
            integrals[0], integrals[1], integrals[2]
        ),
    )
}

fn determinism() -> Outcome {
    match fig1_csv() {
        Ok((a, b)) => outcome(a == b && !a.is_empty(), format!("two runs, {} bytes each, identical = {}", a.len(), a == b)),
        Err(e) => outcome(false, format!("run failed: {e}")),
    }
}
