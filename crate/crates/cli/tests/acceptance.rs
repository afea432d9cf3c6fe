//! Acceptance suite. Prints one line per criterion and exits non-zero if
//! any of them fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use sis_core::amalgam::{
    osc_w1_norm, w_norm_vector, EsssupSpec, GeneratorComponent, GeneratorVector,
};
use sis_core::harness::{self, sub_seed, Outcome};
use sis_core::localization::{fitted_rate, localize, multi_p_stability};
use sis_core::measure::{MeasureComponent, VecMeasure};
use sis_core::perturbation::{epsilon0_generator, epsilon0_measure, BudgetInputs};
use sis_core::reconstruction::{
    gram_distance_bound, inverse_distance_bound, measure_pair, nu, pseudoinverse_bound,
    reconstruct, ErrorBudget, FrameSystem, Method,
};
use sis_core::sampling_op::{
    mesh_constant, operator_distance, sample_signal, shared_window, stability_check, Jitter,
    SamplingModel, StabilityVerdict,
};
use sis_core::scenario::parse_scenario;
use sis_core::shift_space::{
    dual_generator, gram_extremes, gram_matrix, riesz_bounds, CoeffWindow,
};
use sis_core::PNorm;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = std::result::Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn hat() -> GeneratorVector {
    GeneratorVector::single(GeneratorComponent::bspline(1))
}

fn delta() -> VecMeasure {
    VecMeasure::single(MeasureComponent::dirac(&[0.0]))
}

fn baseline(offset: f64) -> SamplingModel {
    SamplingModel::lattice(hat(), delta(), offset).unwrap()
}

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(secs: f64, limit: f64, detail: String) -> Check {
    ensure(secs < limit, format!("{detail}, {secs:.2}s of {limit}s"))
}

fn exact_baseline() -> Check {
    let t = Instant::now();
    let model = baseline(0.0);
    let window = model.window(64, 4.0).map_err(|e| e.to_string())?;
    let op = model.operator(&window).map_err(|e| e.to_string())?;
    let eta = op.lower_bound(PNorm::Two).map_err(|e| e.to_string())?;
    let beta = op.op_norm(PNorm::Two).value;
    // every row holds a single 1, every interior column a single 1
    let dense = op.interior_dense();
    let permutation = dense.row_iter().all(|r| {
        let ones = r
            .iter()
            .filter(|v| (v.re - 1.0).abs() < 1e-15 && v.im == 0.0)
            .count();
        let zeros = r.iter().filter(|v| v.norm() == 0.0).count();
        ones + zeros == r.len() && ones <= 1
    });
    let detail = format!("eta={eta:.12} beta={beta:.12} permutation={permutation}");
    if (eta - 1.0).abs() > 1e-10 || (beta - 1.0).abs() > 1e-10 || !permutation {
        return Err(detail);
    }
    within(t.elapsed().as_secs_f64(), 1.0, detail)
}

fn riesz_convergence() -> Check {
    let t = Instant::now();
    let phi = hat();
    let mut lowers = Vec::new();
    let mut uppers = Vec::new();
    for k in [16, 32, 64] {
        let w = CoeffWindow::new(1, k).map_err(|e| e.to_string())?;
        let r = riesz_bounds(&phi, w, PNorm::Two).map_err(|e| e.to_string())?;
        lowers.push(r.lower);
        uppers.push(r.upper);
    }
    let target_lower = 1.0 / 3f64.sqrt();
    let gaps: Vec<f64> = lowers.iter().map(|l| l - target_lower).collect();
    let upper_gaps: Vec<f64> = uppers.iter().map(|u| 1.0 - u).collect();
    let converging = gaps.windows(2).all(|g| g[1] <= g[0] && g[1] >= -1e-12)
        && upper_gaps
            .windows(2)
            .all(|g| g[1] <= g[0] && g[1] >= -1e-12);
    let w64 = CoeffWindow::new(1, 64).map_err(|e| e.to_string())?;
    let (lmin, lmax) = gram_extremes(&phi, w64).map_err(|e| e.to_string())?;
    // hat inner products: 2/3 on the diagonal, 1/6 one step off, symbol (2 + cos θ)/3
    let g = gram_matrix(&phi, w64, 8).map_err(|e| e.to_string())?;
    let mut entry_err = 0.0f64;
    for a in 0..g.matrix.nrows() {
        for b in 0..g.matrix.ncols() {
            let want = match a.abs_diff(b) {
                0 => 2.0 / 3.0,
                1 => 1.0 / 6.0,
                _ => 0.0,
            };
            entry_err = entry_err.max((g.matrix[(a, b)] - want).abs());
        }
    }
    let detail = format!(
        "m2={:?} M2={:?} eig=[{lmin:.6},{lmax:.6}] gram_entry_err={entry_err:.1e}",
        lowers.iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>(),
        uppers.iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>()
    );
    let ok = converging
        && (lmin - 1.0 / 3.0).abs() < 1e-3
        && (lmax - 1.0).abs() < 1e-3
        && (lowers[2] - target_lower).abs() < 1e-3
        && (uppers[2] - 1.0).abs() < 1e-3
        && entry_err < 1e-12;
    if !ok {
        return Err(detail);
    }
    within(t.elapsed().as_secs_f64(), 5.0, detail)
}

fn instability_detection() -> Check {
    let t = Instant::now();
    let model = baseline(0.5);
    let report = stability_check(&model, PNorm::Two, 16, 3, 4.0).map_err(|e| e.to_string())?;
    let ratios: Vec<f64> = report
        .trace
        .windows(2)
        .map(|w| w[1].eta / w[0].eta)
        .collect();
    // samples are (c_k + c_{k+1}) / 2; the section with one more row than
    // columns has smallest singular value sin(π / (2(n + 1)))
    let mut oracle_err = 0.0f64;
    for p in &report.trace {
        let w = model.window(p.half_width, 4.0).map_err(|e| e.to_string())?;
        let op = model.operator(&w).map_err(|e| e.to_string())?;
        let n = op.interior_columns().len();
        let rows = op.nrows();
        if rows == n + 1 {
            let want = (std::f64::consts::PI / (2.0 * (n as f64 + 1.0))).sin();
            oracle_err = oracle_err.max((p.eta - want).abs() / want);
        } else {
            oracle_err = f64::INFINITY;
        }
    }
    let detail = format!(
        "eta trace {:?} ratios {:?} verdict {:?} oracle_rel_err={oracle_err:.1e}",
        report
            .trace
            .iter()
            .map(|p| format!("{:.4e}", p.eta))
            .collect::<Vec<_>>(),
        ratios.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>(),
        report.verdict
    );
    let ok = report.trace.len() == 4
        && ratios.iter().all(|r| *r <= 0.7)
        && report.verdict == StabilityVerdict::Unstable
        && oracle_err < 1e-6;
    if !ok {
        return Err(detail);
    }
    within(t.elapsed().as_secs_f64(), 10.0, detail)
}

fn jitter_bound_check() -> Check {
    let t = Instant::now();
    let model = baseline(0.0);
    let spec = EsssupSpec::default();
    let n_mesh = mesh_constant(1.0, PNorm::Two, 1);
    if (n_mesh - 2f64.sqrt()).abs() > 1e-15 {
        return Err(format!("mesh constant {n_mesh}"));
    }
    let mut violations = 0;
    let mut parts = Vec::new();
    for gamma in [0.01, 0.05, 0.1] {
        let osc = osc_w1_norm(&GeneratorComponent::bspline(1), gamma, &spec)
            .map_err(|e| e.to_string())?
            .value;
        if (osc / (4.0 * gamma) - 1.0).abs() > 0.1 {
            return Err(format!("osc norm {osc} at gamma {gamma}"));
        }
        let bound = n_mesh * osc;
        let mut worst = 0.0f64;
        for trial in 0..50 {
            let jittered = model.clone().with_jitter(Jitter::Uniform {
                gamma,
                seed: sub_seed(4, "jitter", trial),
            });
            let w = shared_window(&[&model, &jittered], 64, 4.0).map_err(|e| e.to_string())?;
            let u = model.operator(&w).map_err(|e| e.to_string())?;
            let v = jittered.operator(&w).map_err(|e| e.to_string())?;
            let d = operator_distance(&u, &v, PNorm::Two).map_err(|e| e.to_string())?;
            worst = worst.max(d);
            if d > bound {
                violations += 1;
            }
        }
        parts.push(format!("gamma={gamma}: max {worst:.4} <= {bound:.4}"));
    }
    let detail = format!("{}; violations={violations}", parts.join(", "));
    if violations > 0 {
        return Err(detail);
    }
    within(t.elapsed().as_secs_f64(), 30.0, detail)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn budget_algebra() -> Check {
    let model = baseline(0.0);
    let window = model.window(64, 4.0).map_err(|e| e.to_string())?;
    let op = model.operator(&window).map_err(|e| e.to_string())?;
    let eta = op.lower_bound(PNorm::Two).map_err(|e| e.to_string())?;
    let beta = op.op_norm(PNorm::Two).value;
    let riesz = riesz_bounds(&model.phi, window.coeffs, PNorm::Two).map_err(|e| e.to_string())?;
    let phi_w1 = w_norm_vector(&model.phi, PNorm::One, &EsssupSpec::default())
        .map_err(|e| e.to_string())?
        .value;
    let inputs = BudgetInputs::from_estimates(PNorm::Two, 1, eta, beta, &riesz, 1.0, 1.0, phi_w1);
    let gen = epsilon0_generator(&inputs).map_err(|e| e.to_string())?;

    // quadratic ε² + (‖Φ‖ + A m / k) ε − A m² / k with k = 2^d N ‖μ‖
    let k = 2.0 * 2f64.sqrt() * 1.0;
    let a = eta / riesz.upper;
    let m = riesz.lower;
    let c = phi_w1 + a * m / k;
    let q = a * m * m / k;
    let e = gen.epsilon0;
    let residual = (e * e + c * e - q).abs();
    let naive_root = (-c + (c * c + 4.0 * q).sqrt()) / 2.0;

    let meas = epsilon0_measure(&inputs).map_err(|e| e.to_string())?;
    let meas_oracle = a * m / (2.0 * 2f64.sqrt() * phi_w1);

    let nu_v = nu(0.1, 1.0, 1.0);
    let gram_b = gram_distance_bound(0.1, 1.0);
    let inv_b = inverse_distance_bound(nu_v, 1.0).map_err(|e| e.to_string())?;
    let pinv_b = pseudoinverse_bound(0.1, 1.0, 1.0).map_err(|e| e.to_string())?;
    let checks = [
        ("quadratic residual", residual, 1e-12),
        ("root vs textbook formula", rel(e, naive_root), 1e-12),
        ("measure budget", rel(meas, meas_oracle), 1e-15),
        ("nu", (nu_v - 0.21).abs(), 1e-12),
        ("gram bound", (gram_b - 0.21).abs(), 1e-12),
        ("inverse bound", (inv_b - 0.21 / 0.79).abs(), 1e-12),
        (
            "pseudoinverse bound",
            (pinv_b - (0.1 + 0.21 * 1.1 / 0.79)).abs(),
            1e-12,
        ),
        ("pseudoinverse 0.39241", (pinv_b - 0.39241).abs(), 1e-5),
    ];
    let failed: Vec<String> = checks
        .iter()
        .filter(|(_, err, tol)| err.is_nan() || err > tol)
        .map(|(n, err, tol)| format!("{n} err {err:e} > {tol:e}"))
        .collect();
    let detail = format!("eps0_gen={e:.6e} eps0_measure={meas:.6e} pinv(0.1)={pinv_b:.10}");
    if failed.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; {}", failed.join("; ")))
    }
}

fn pseudoinverse_dominance() -> Check {
    let t = Instant::now();
    let model = baseline(0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut violations = 0;
    let mut tested = 0;
    let mut cols = 0;
    let mut worst_ratio = 0.0f64;
    for trial in 0..25 {
        let gamma = rng.random_range(0.01..0.1);
        let jittered = model.clone().with_jitter(Jitter::Uniform {
            gamma,
            seed: sub_seed(6, "pair", trial),
        });
        let w = shared_window(&[&model, &jittered], 64, 4.0).map_err(|e| e.to_string())?;
        let u = model.operator(&w).map_err(|e| e.to_string())?;
        let v = jittered.operator(&w).map_err(|e| e.to_string())?;
        cols = u.interior_columns().len();
        let pair = measure_pair(&u, &v, PNorm::Two).map_err(|e| e.to_string())?;
        let budget = ErrorBudget::new(pair.epsilon, pair.eta, pair.beta);
        let (Some(bound), Some(measured)) =
            (budget.pseudoinverse_bound, pair.pseudoinverse_distance)
        else {
            return Err(format!(
                "pair {trial} left the admissible range: eps={}",
                pair.epsilon
            ));
        };
        tested += 1;
        worst_ratio = worst_ratio.max(measured / bound);
        if measured > bound {
            violations += 1;
        }
    }
    let detail = format!("{tested} pairs on {cols} interior columns, max measured/bound {worst_ratio:.3}, violations={violations}");
    if violations > 0 || tested != 25 {
        return Err(detail);
    }
    within(t.elapsed().as_secs_f64(), 120.0, detail)
}

fn perfect_reconstruction() -> Check {
    // averaging measure and an offset lattice so that η < β
    let mu = VecMeasure::single(
        MeasureComponent::atomic(1, &[(vec![0.0], 0.6), (vec![0.4], 0.4)])
            .map_err(|e| e.to_string())?,
    );
    let model = SamplingModel::lattice(hat(), mu, 0.1).map_err(|e| e.to_string())?;
    let window = model.window(64, 4.0).map_err(|e| e.to_string())?;
    let op = model.operator(&window).map_err(|e| e.to_string())?;
    let sys = FrameSystem::new(&op).map_err(|e| e.to_string())?;
    let factor = sys.contraction();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut agree, mut recover, mut contraction) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..20 {
        let v = sis_core::linalg::CVector::from_fn(sys.interior_columns().len(), |_, _| {
            sis_core::amalgam::Complex64::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            )
        });
        let c = sys.extend(&v).map_err(|e| e.to_string())?;
        let b =
            sample_signal(&c, &model.phi, &model.mu, op.positions()).map_err(|e| e.to_string())?;
        let rich =
            reconstruct(&sys, &b, Method::Richardson, 1e-13, 10_000).map_err(|e| e.to_string())?;
        let normal =
            reconstruct(&sys, &b, Method::Normal, 1e-13, 10_000).map_err(|e| e.to_string())?;
        let diff = |x: &sis_core::shift_space::CoeffVector,
                    y: &sis_core::shift_space::CoeffVector| {
            x.sub(y)
                .unwrap()
                .flat()
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max)
        };
        agree = agree.max(diff(&rich.coefficients, &normal.coefficients));
        recover = recover
            .max(diff(&rich.coefficients, &c))
            .max(diff(&normal.coefficients, &c));
        for h in rich.history.windows(2) {
            contraction = contraction.max(h[1] / h[0]);
        }
    }
    let oracle =
        (sys.beta().powi(2) - sys.eta().powi(2)) / (sys.beta().powi(2) + sys.eta().powi(2));
    let detail = format!(
        "eta={:.4} beta={:.4} agree={agree:.1e} recover={recover:.1e} contraction={contraction:.4} <= {:.4}",
        sys.eta(),
        sys.beta(),
        oracle + 0.01
    );
    ensure(
        agree <= 1e-8
            && recover <= 1e-7
            && contraction <= oracle + 0.01
            && (factor - oracle).abs() < 1e-12,
        detail,
    )
}

fn scenarios_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn end_to_end_continuity() -> Check {
    let scenario =
        parse_scenario(&scenarios_dir().join("reconstruct.json")).map_err(|e| e.to_string())?;
    let spec = scenario
        .perturbation
        .as_ref()
        .ok_or("scenario has no perturbation")?;
    let mags = spec.magnitudes();
    if mags.len() != 4 || mags.iter().any(|m| !(0.0..1.0).contains(m)) {
        return Err(format!(
            "expected four budget fractions below one, got {mags:?}"
        ));
    }
    let records = harness::run(&scenario);
    let points: Vec<_> = records
        .iter()
        .filter(|r| r.label.starts_with("end_to_end="))
        .collect();
    let get = |r: &harness::ReportRecord, key: &str| {
        r.values.iter().find(|q| q.key == key).map(|q| q.value)
    };
    let mut rows = Vec::new();
    let mut ok = points.len() == 4;
    let mut by_mag: Vec<(f64, f64, f64)> = Vec::new();
    for (r, &m) in points.iter().zip(&mags) {
        let (Some(err), Some(chain)) = (get(r, "error_l2"), get(r, "bound_chain")) else {
            return Err(format!("{} failed: {:?}", r.label, r.error));
        };
        let ingredients = [
            get(r, "generator_distance"),
            get(r, "measure_distance"),
            get(r, "gamma"),
        ];
        if m > 0.0
            && ingredients
                .iter()
                .any(|v| v.is_none_or(|x| x <= 0.0 || x.is_nan()))
        {
            ok = false;
        }
        ok &= err <= chain + scenario.tolerances.quadrature;
        ok &= r.outcome() == Outcome::Pass;
        by_mag.push((m, err, chain));
        rows.push(format!("t={m}: {err:.3e} <= {chain:.3e}"));
    }
    by_mag.sort_by(|a, b| a.0.total_cmp(&b.0));
    ok &= by_mag.windows(2).all(|w| w[1].2 >= w[0].2);
    ok &= by_mag.first().is_some_and(|z| z.0 == 0.0 && z.1 < 1e-8);
    ensure(
        ok,
        format!("{}; chain monotone toward zero", rows.join(", ")),
    )
}

fn localization() -> Check {
    let phi = hat();
    let w = CoeffWindow::new(1, 64).map_err(|e| e.to_string())?;
    let dual = dual_generator(&phi, w).map_err(|e| e.to_string())?;
    let center = dual.center_coefficient(0);
    let profile: Vec<(f64, f64)> = dual
        .decay_profile(0)
        .into_iter()
        .filter(|&(n, v)| n >= 1.0 && v > 1e-13)
        .collect();
    let rate = fitted_rate(&profile).ok_or("no decay rate")?;
    // root of z²/6 + 2z/3 + 1/6 inside the unit disk
    let root = (-(2.0 / 3.0) + ((4.0 / 9.0) - 4.0 / 36.0f64).sqrt()) / (2.0 / 6.0);
    let rate_oracle = root.abs();

    let atoms =
        MeasureComponent::atomic(1, &[(vec![0.0], 0.5), (vec![0.5], 0.3), (vec![-1.0], 0.2)])
            .map_err(|e| e.to_string())?;
    let poly = SamplingModel::lattice(
        GeneratorVector::single(
            GeneratorComponent::poly_decay(2.0, 1.0).map_err(|e| e.to_string())?,
        ),
        VecMeasure::single(atoms),
        0.0,
    )
    .map_err(|e| e.to_string())?;
    let loc = localize(&poly, 2.0, 32, 8.0).map_err(|e| e.to_string())?;
    let multi = multi_p_stability(&baseline(0.0), 32, 2, 4.0).map_err(|e| e.to_string())?;
    let all_stable = multi
        .reports
        .iter()
        .all(|r| r.verdict == StabilityVerdict::Stable);
    let detail = format!(
        "rate={rate:.4} (root {rate_oracle:.4}) center={center:.9} transfer={} multi_p_stable={all_stable} alert={}",
        loc.pass, multi.alert
    );
    ensure(
        (rate - 0.268).abs() <= 0.02
            && (rate_oracle - (2.0 - 3f64.sqrt())).abs() < 1e-12
            && (center - 3f64.sqrt()).abs() <= 1e-6
            && loc.pass
            && all_stable
            && multi.reports.len() == 3
            && !multi.alert,
        detail,
    )
}

fn run_cli(
    pipeline: &str,
    scenario: &Path,
    out: &Path,
) -> std::result::Result<(i32, Vec<u8>), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_sis"))
        .args([pipeline, "--scenario"])
        .arg(scenario)
        .arg("--out")
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    let code = status.status.code().unwrap_or(-1);
    let jsonl = std::fs::read(out.join("report.jsonl"))
        .map_err(|e| format!("{}: {e}", scenario.display()))?;
    Ok((code, jsonl))
}

fn cli_determinism() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut files: Vec<PathBuf> = std::fs::read_dir(scenarios_dir())
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err("no shipped scenarios".into());
    }
    let mut problems = Vec::new();
    for f in &files {
        let scenario = parse_scenario(f).map_err(|e| e.to_string())?;
        let name = f.file_stem().unwrap().to_string_lossy().to_string();
        let (c1, a) = run_cli(
            scenario.pipeline.name(),
            f,
            &tmp.path().join(format!("{name}-a")),
        )?;
        let (c2, b) = run_cli(
            scenario.pipeline.name(),
            f,
            &tmp.path().join(format!("{name}-b")),
        )?;
        if c1 != 0 || c2 != 0 {
            problems.push(format!("{name} exit {c1}/{c2}"));
        }
        if a != b || a.is_empty() {
            problems.push(format!("{name} output differs"));
        }
    }
    let detail = format!("{} scenarios run twice", files.len());
    if problems.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; {}", problems.join(", ")))
    }
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("exact-model baseline", exact_baseline),
        ("Riesz bounds convergence", riesz_convergence),
        ("instability detection", instability_detection),
        ("jitter bound", jitter_bound_check),
        ("budget algebra", budget_algebra),
        ("pseudoinverse dominance", pseudoinverse_dominance),
        ("perfect reconstruction", perfect_reconstruction),
        ("end-to-end continuity", end_to_end_continuity),
        ("localization", localization),
        ("CLI determinism", cli_determinism),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("criterion {:>2} {name}: PASS ({detail})", i + 1),
            Err(detail) => {
                failures += 1;
                println!("criterion {:>2} {name}: FAIL ({detail})", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failures} failed",
        criteria.len() - failures
    );
    if failures > 0 {
        std::process::exit(1);
    }
}
