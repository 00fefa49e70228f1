//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::fs;
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nonlocal::assembly::Discretization;
use nonlocal::cli::{self, EigenSummary};
use nonlocal::kernels::Kernel;
use nonlocal::mesh::{Domain, Mesh};
use nonlocal::quadrature::QuadConfig;
use nonlocal::solve::{solve_eigen, EigenMethod, EigenOptions};
use nonlocal::verify::{
    check_boundedness_constant, check_constant_nullspace, check_iteration_lemma, check_poincare_limit,
    check_regularity, check_weak_max_principle, CheckStatus, Multiplier, VerificationReport, DYADIC_STEPS,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn interval_disc(kernel: &Kernel, n: usize) -> Result<Discretization, String> {
    Discretization::new(&Domain::interval(-1.0, 1.0), kernel, n, &QuadConfig::default()).map_err(err)
}

fn form_identities() -> Outcome {
    let quad = QuadConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst_energy = 0.0f64;
    let mut worst_asym = 0.0f64;
    let mut worst_split = 0.0f64;
    let cases = [
        (Domain::interval(-1.0, 1.0), Kernel::log_laplacian(1).map_err(err)?, 64),
        (Domain::interval(-1.0, 1.0), Kernel::fractional(1, 0.3).map_err(err)?, 64),
        (Domain::ball(vec![0.0, 0.0], 1.0), Kernel::log_laplacian(2).map_err(err)?, 12),
    ];
    for (domain, kernel, n) in &cases {
        let disc = Discretization::new(domain, kernel, *n, &quad).map_err(err)?;
        let form = &disc.form;
        let interior = form.without_killing();
        for _ in 0..100 {
            let u = DVector::from_fn(form.n(), |_, _| rng.gen_range(-1.0..1.0));
            let lhs = interior.energy(&u);
            let rhs = form.pairwise_energy(&u);
            worst_energy = worst_energy.max((lhs - rhs).abs() / rhs.abs().max(f64::MIN_POSITIVE));
        }
        let a = form.stiffness();
        worst_asym = worst_asym.max((&a - a.transpose()).amax() / a.amax());
        let split = kernel.delta_split(0.2, &quad).map_err(err)?;
        let near = Discretization::new(domain, &split.near, *n, &quad).map_err(err)?;
        let far = Discretization::new(domain, &split.far, *n, &quad).map_err(err)?;
        let sum = near.form.add(&far.form).stiffness();
        worst_split = worst_split.max((&sum - &a).amax() / a.amax());
    }
    ensure(
        worst_energy <= 1e-12 && worst_asym <= f64::EPSILON * 4.0 && worst_split <= 1e-6,
        format!("energy_rel={worst_energy:.2e} asymmetry={worst_asym:.2e} split_rel={worst_split:.2e}"),
    )
}

fn symbols() -> Outcome {
    let quad = QuadConfig::default();
    let mut worst_log = 0.0f64;
    for dim in [1, 2] {
        let k = Kernel::log_schrodinger(dim).map_err(err)?;
        for i in 0..20 {
            let r = 0.05 * 1.35f64.powi(i);
            let mut xi = vec![0.0; dim];
            xi[0] = r;
            let got = k.symbol(&xi, &quad).map_err(err)?;
            let want = (1.0 + r * r).ln();
            worst_log = worst_log.max((got - want).abs() / want);
        }
    }
    let mut worst_frac = 0.0f64;
    for s in [0.1, 0.25, 0.4] {
        let k = Kernel::fractional(1, s).map_err(err)?;
        let ratios: Vec<f64> = (0..20)
            .map(|i| {
                let r = 0.1 * 1.3f64.powi(i);
                k.symbol(&[r], &quad).map(|v| v / r.powf(2.0 * s))
            })
            .collect::<Result<_, _>>()
            .map_err(err)?;
        for q in &ratios {
            worst_frac = worst_frac.max((q - ratios[0]).abs() / ratios[0]);
            worst_frac = worst_frac.max((q - 1.0).abs());
        }
    }
    ensure(
        worst_log <= 1e-4 && worst_frac <= 1e-4,
        format!("log_schrodinger_rel={worst_log:.2e} fractional_ratio_spread={worst_frac:.2e}"),
    )
}

fn eigen_suite() -> Outcome {
    let k = Kernel::log_laplacian(1).map_err(err)?;
    let d256 = interval_disc(&k, 256)?;
    let lanczos = EigenOptions { tol: 1e-10, method: EigenMethod::Lanczos };
    let dense = EigenOptions { tol: 1e-10, method: EigenMethod::Dense };
    let s = solve_eigen(&d256.form, 2, &lanczos).map_err(err)?;
    let oracle = solve_eigen(&d256.form, 2, &dense).map_err(err)?;
    let d512 = interval_disc(&k, 512)?;
    let fine = solve_eigen(&d512.form, 1, &EigenOptions::default()).map_err(err)?;
    let l1 = s.eigenvalues[0];
    let gap = s.gap().unwrap_or(0.0);
    let min_u1 = s.vector(0).min();
    let oracle_diff = (l1 - oracle.eigenvalues[0]).abs();
    let drift = (l1 - fine.eigenvalues[0]).abs() / fine.eigenvalues[0];
    ensure(
        l1 > 0.0 && gap > 1e-6 && min_u1 > 0.0 && oracle_diff <= 1e-8 && drift < 0.02,
        format!("lambda1={l1:.6} gap={gap:.4} min_u1={min_u1:.3e} oracle_diff={oracle_diff:.1e} drift={drift:.2e}"),
    )
}

fn weak_max_principle() -> Outcome {
    let k = Kernel::log_laplacian(1).map_err(err)?;
    let disc = interval_disc(&k, 128)?;
    let rec = check_weak_max_principle(&disc, 100, Multiplier::RandomNonpositive { scale: 2.0 }, 1.0, 11)
        .map_err(err)?;
    let gated = check_weak_max_principle(&disc, 10, Multiplier::Constant { value: 1e6 }, 1.0, 12).map_err(err)?;
    let violations = rec.get("violations").unwrap_or(f64::NAN);
    ensure(
        rec.status == CheckStatus::Pass && violations == 0.0 && gated.status == CheckStatus::Skipped,
        format!("violations={violations} gate={:?}", gated.status),
    )
}

fn boundedness() -> Outcome {
    let k = Kernel::log_laplacian(1).map_err(err)?;
    let (rec, _) =
        check_boundedness_constant(&Domain::interval(-1.0, 1.0), &k, &[128, 256], 50, &QuadConfig::default(), 5)
            .map_err(err)?;
    let g = rec.get("growth_ratio").unwrap_or(f64::NAN);
    let e = rec.get("eigen_ratio_drift").unwrap_or(f64::NAN);
    let c = rec.get("c_est_n256").unwrap_or(f64::NAN);
    ensure(
        rec.status == CheckStatus::Pass && c.is_finite() && g < 2.0 && e < 2.0,
        format!("c_est={c:.4} growth={g:.4} eigen_drift={e:.4}"),
    )
}

fn regularity() -> Outcome {
    let k = Kernel::fractional(1, 0.2).map_err(err)?;
    let disc = interval_disc(&k, 256)?;
    let f = disc.sample(|x| (std::f64::consts::PI * x[0]).cos() + 2.0);
    let (rec, _) = check_regularity(&disc, &f, 0.25, &DYADIC_STEPS, true).map_err(err)?;
    let alpha = rec.get("alpha").unwrap_or(f64::NAN);
    let s1 = rec.get("first_difference_slope").unwrap_or(f64::NAN);
    let s2 = rec.get("second_difference_slope").unwrap_or(f64::NAN);
    let sc = rec.get("control_slope").unwrap_or(f64::NAN);
    ensure(
        rec.status == CheckStatus::Pass && s1 >= 0.5 && s2 >= 1.0 && (sc - 2.0).abs() <= 0.05,
        format!("alpha={alpha:.2} first={s1:.3} second={s2:.3} control={sc:.3}"),
    )
}

fn iteration_lemma() -> Outcome {
    let q = Kernel::indicator(1, 0.2).map_err(err)?;
    let mesh = Mesh::build(&Domain::interval(-1.0, 1.0), 128).map_err(err)?;
    let rec = check_iteration_lemma(&q, &mesh, &[0.0], 1000, 21, &QuadConfig::default()).map_err(err)?;
    let v = rec.get("violations").unwrap_or(f64::NAN);
    let r = rec.get("max_ratio").unwrap_or(f64::NAN);
    ensure(rec.status == CheckStatus::Pass && v == 0.0, format!("violations={v} max_ratio={r:.3}"))
}

fn nullspace() -> Outcome {
    let k = Kernel::log_laplacian(1).map_err(err)?;
    let disc = interval_disc(&k, 128)?;
    let rec = check_constant_nullspace(&disc.form).map_err(err)?;
    let l0 = rec.get("lambda_min").unwrap_or(f64::NAN);
    let l1 = rec.get("lambda_second").unwrap_or(f64::NAN);
    let cos = rec.get("cosine_with_constant").unwrap_or(f64::NAN);
    ensure(
        l0.abs() < 1e-10 && cos > 1.0 - 1e-8 && l1 > 0.0,
        format!("lambda_min={l0:.2e} lambda_second={l1:.4} cosine={cos:.12}"),
    )
}

fn poincare() -> Outcome {
    let k = Kernel::log_laplacian(1).map_err(err)?;
    let radii = [1.0, 0.5, 0.25, 0.125];
    let (rec, _) = check_poincare_limit(&k, &radii, 256.0, &[0.25], &QuadConfig::default()).map_err(err)?;
    let lambdas: Vec<f64> = radii.iter().filter_map(|r| rec.get(&format!("lambda1_rho{r}"))).collect();
    let reference = 2.0 * 4.0f64.ln();
    let monotone = lambdas.len() == 4 && lambdas.windows(2).all(|w| w[1] > w[0]);
    let last = lambdas.last().copied().unwrap_or(f64::NAN);
    ensure(
        rec.status == CheckStatus::Pass && monotone && last > reference,
        format!("lambda1={lambdas:.3?} reference={reference:.3}"),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(err)?;
    let config = dir.path().join("problem.json");
    fs::write(
        &config,
        r#"{"domain": {"shape": "ball", "center": [0, 0], "radius": 1},
            "kernel": {"family": "log_laplacian", "dim": 2, "params": {}},
            "mesh": {"n": 16},
            "equation": {"rhs": "1 + x*y"},
            "verification": {"checks": ["weak_max_principle", "constant_nullspace", "hardy"]},
            "seed": 3}"#,
    )
    .map_err(err)?;
    let mut identical = true;
    let mut compared = 0;
    for cmd in ["eigen", "poisson", "verify"] {
        let a = dir.path().join(format!("{cmd}_a"));
        let b = dir.path().join(format!("{cmd}_b"));
        for out in [&a, &b] {
            let code = cli::run([
                "nonlocal",
                cmd,
                "--config",
                config.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
            ]);
            if code != 0 {
                return Err(format!("{cmd} exited with {code}"));
            }
        }
        for entry in fs::read_dir(&a).map_err(err)? {
            let name = entry.map_err(err)?.file_name();
            let x = fs::read(a.join(&name)).map_err(err)?;
            let y = fs::read(b.join(&name)).map_err(err)?;
            identical &= x == y;
            compared += 1;
        }
    }
    let text = fs::read_to_string(dir.path().join("eigen_a/summary.json")).map_err(err)?;
    let summary: EigenSummary = serde_json::from_str(&text).map_err(err)?;
    let again = serde_json::to_string_pretty(&summary).map_err(err)?;
    let bits_equal = summary
        .eigenvalues
        .iter()
        .zip(&serde_json::from_str::<EigenSummary>(&again).map_err(err)?.eigenvalues)
        .all(|(x, y)| x.0.to_bits() == y.0.to_bits());
    let report_text = fs::read_to_string(dir.path().join("verify_a/report.json")).map_err(err)?;
    let report = VerificationReport::from_json(&report_text).map_err(err)?;
    let report_again = report.to_json().map_err(err)?;
    ensure(
        identical && compared >= 6 && again == text && bits_equal && report_again == report_text,
        format!("files_compared={compared} identical={identical} summary_roundtrip={} report_roundtrip={}", again == text, report_again == report_text),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("1 form identities", form_identities),
        ("2 symbol checks", symbols),
        ("3 eigen suite", eigen_suite),
        ("4 weak maximum principle", weak_max_principle),
        ("5 boundedness constant", boundedness),
        ("6 regularity rate", regularity),
        ("7 iteration lemma", iteration_lemma),
        ("8 constants and nullspace", nullspace),
        ("9 Poincare trend", poincare),
        ("10 determinism and I/O", determinism),
    ];
    let mut failures = 0;
    for (name, run) in criteria {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name:<28} {detail} ({secs:.2}s)"),
            Err(detail) => {
                failures += 1;
                println!("FAIL  {name:<28} {detail} ({secs:.2}s)");
            }
        }
    }
    println!("acceptance: {} of 10 criteria passed", 10 - failures);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
