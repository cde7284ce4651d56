//! Acceptance checks, one test per criterion. Each prints a single
//! `criterion N ...: PASS|FAIL` line to stderr (uncaptured) before asserting.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use nodal_core::ansatz::{admissible_interval, build_synchronized, chord, PeakConfiguration};
use nodal_core::coupled::{classify, synchronized_residual, CoupledParams};
use nodal_core::energy::{
    cross_species_interaction, energy, moments, multipeak_interaction_constant, pair_interaction, seg_coefficients,
    seg_cross_term, seg_interaction_constant, single_peak_energy_sync, sync_coefficients, PotentialModel,
};
use nodal_core::experiment::{self, grid_for, interaction_radius, retained_exponentials, ExperimentConfig, Summary};
use nodal_core::grid::GridField;
use nodal_core::ground_state::{solve_ground_state, RadialProfile};
use nodal_core::numerics::linear_fit;
use nodal_core::reduction::{
    measured_landscape, minimize_model, minimize_segregated, predicted_radius, scaled_radius, ReducedMode,
    ReducedModel, SyncPipeline,
};
use nodal_core::solver::{profile_gap_sync, residual_dual_norm, Problem};
use nodal_core::spectral::LaplaceKind;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(n: usize, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "criterion {n:>2} {name}: {verdict} | {detail}");
}

fn unit() -> &'static RadialProfile {
    static W: OnceLock<RadialProfile> = OnceLock::new();
    W.get_or_init(|| solve_ground_state(1.0, 25.0, 8000).unwrap())
}

/// Desk regime: μ₁ = μ₂ = 1, β = 0.5, P = 1 + |x|², Q ≡ 1.
fn desk() -> (CoupledParams, PotentialModel, PotentialModel) {
    (classify(1.0, 1.0, 0.5).unwrap(), PotentialModel::power(1.0, 2.0).unwrap(), PotentialModel::constant())
}

/// Random triples inside the synchronized windows.
fn admissible_triples(n: usize, seed: u64) -> Vec<(f64, f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let (m1, m2): (f64, f64) = (rng.gen_range(0.2..5.0), rng.gen_range(0.2..5.0));
            let t: f64 = rng.gen_range(0.02..0.98);
            let b = match rng.gen_range(0..3) {
                0 => -(m1 * m2).sqrt() * t,
                1 => m1.min(m2) * t,
                _ => m1.max(m2) * (1.0 + 3.0 * t) + 0.01,
            };
            (m1, m2, b)
        })
        .collect()
}

#[test]
fn criterion_01_ground_state_fidelity() {
    let t = Instant::now();
    let w = solve_ground_state(1.0, 25.0, 8000).unwrap();
    let residual = w.max_ode_residual();
    let mut scaling = 0.0f64;
    for mu in [0.5, 2.5, 4.0] {
        let wm = solve_ground_state(mu, 25.0, 8000).unwrap();
        for i in 0..=500 {
            let r = 0.05 * i as f64;
            let b = w.value(r);
            scaling = scaling.max((wm.value(r) * mu.sqrt() - b).abs() / b.max(1e-3));
        }
    }
    let (u, du) = w.value_and_derivative(20.0);
    let log_slope = du / u;
    let elapsed = t.elapsed();
    let parts = [residual < 1e-8, scaling < 1e-7, (log_slope + 1.0).abs() < 1e-2, elapsed < Duration::from_secs(5)];
    let pass = parts.iter().all(|&p| p);
    report(
        1,
        "ground-state fidelity",
        pass,
        &format!(
            "ode residual {residual:.2e} (<1e-8: {}), scaling {scaling:.2e} (<1e-7: {}), w'/w(20) = {log_slope:.4} (within 1e-2 of -1: {}), {:.1}s (<5s: {})",
            parts[0], parts[1], parts[2], elapsed.as_secs_f64(), parts[3]
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_02_amplitude_identities() {
    let t = Instant::now();
    let mut worst = 0.0f64;
    for (m1, m2, b) in admissible_triples(1000, 2) {
        let p = classify(m1, m2, b).unwrap();
        let (a, g) = p.amplitudes().unwrap();
        worst = worst.max((m1 * a * a + b * g * g - 1.0).abs()).max((m2 * g * g + b * a * a - 1.0).abs());
    }
    let w = unit();
    let radii: Vec<f64> = (1..100).map(|i| 0.15 * i as f64).collect();
    let mut profile_res = 0.0f64;
    for (m1, m2, b) in
        [(1.0, 1.0, 0.0), (1.0, 1.0, 0.5), (2.0, 3.0, 1.0), (1.0, 1.0, 0.9), (1.0, 2.0, -0.8), (1.0, 2.0, 3.0)]
    {
        profile_res = profile_res.max(synchronized_residual(&classify(m1, m2, b).unwrap(), w, &radii).unwrap());
    }
    let elapsed = t.elapsed();
    let pass = worst < 1e-12 && profile_res < 1e-6 && elapsed < Duration::from_secs(5);
    report(
        2,
        "amplitude identities",
        pass,
        &format!(
            "identity error {worst:.2e} over 1000 triples, profile residual {profile_res:.2e}, {:.1}s",
            elapsed.as_secs_f64()
        ),
    );
    assert!(pass);
}

/// Grid energy of one synchronized peak at `(r, 0, 0)` on a box centred on it.
fn single_peak_grid_energy(eps: f64, r: f64) -> f64 {
    let (params, p, q) = desk();
    let (alpha, gamma) = params.amplitudes().unwrap();
    let spec = grid_for(eps, 4.0, 0.0, 8.0, 97).unwrap().centered_at([r, 0.0, 0.0]);
    let field = GridField::from_fn(spec, eps, |x| {
        let s = unit().value(((x[0] - r).powi(2) + x[1] * x[1] + x[2] * x[2]).sqrt() / eps);
        (alpha * s, gamma * s)
    });
    energy(&field, eps, &p, &q, 1.0, 1.0, 0.5, LaplaceKind::Spectral).unwrap().total
}

#[test]
fn criterion_03_single_peak_expansion() {
    let t = Instant::now();
    let eps = 0.05;
    let (params, p, q) = desk();
    let coef = sync_coefficients(&params, &moments(unit())).unwrap();
    let gap_at = |r: f64| {
        let e = single_peak_grid_energy(eps, r);
        let lead = p.a * coef.b * r.powf(p.m);
        (e / eps.powi(3) - coef.a_const - lead).abs() / lead
    };
    // the ring radius of the two-pair configuration; the one-pair radius is reported alongside
    let r2 = predicted_radius(eps, 2, 2.0).unwrap();
    let r1 = predicted_radius(eps, 1, 2.0).unwrap();
    let (gap2, gap1) = (gap_at(r2), gap_at(r1));
    let continuum = single_peak_energy_sync(unit(), &params, r2, eps, &p, &q).unwrap().total;
    let continuum_gap = (continuum / eps.powi(3) - coef.a_const - coef.b * r2 * r2).abs() / (coef.b * r2 * r2);
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for i in 0..9 {
        let r = r2 * 10f64.powf(i as f64 / 8.0);
        xs.push(r.ln());
        ys.push((single_peak_grid_energy(eps, r) / eps.powi(3) - coef.a_const).ln());
    }
    let slope = linear_fit(&xs, &ys).0;
    let elapsed = t.elapsed();
    let pass = gap2 < 0.10 && (slope / p.m - 1.0).abs() < 0.03 && elapsed < Duration::from_secs(600);
    report(
        3,
        "single-peak expansion",
        pass,
        &format!(
            "gap {:.2}% at r = {r2:.4} (continuum {:.2}%; {:.2}% at the one-pair radius {r1:.4}), slope {slope:.4} over [{r2:.3}, {:.3}] vs m = 2, {:.0}s",
            100.0 * gap2,
            100.0 * continuum_gap,
            100.0 * gap1,
            10.0 * r2,
            elapsed.as_secs_f64()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_04_interaction_decay() {
    let t = Instant::now();
    let eps = 0.05;
    let w = unit();
    let mut ratios = Vec::new();
    for s in [10.0, 11.0, 12.0, 13.0, 14.0] {
        let a = pair_interaction(w, s * eps, eps).unwrap().value;
        let b = pair_interaction(w, (s + 1.0) * eps, eps).unwrap().value;
        ratios.push(b / a / (-1.0f64).exp());
    }
    let pair_ok = ratios.iter().all(|r| (r - 1.0).abs() < 0.05);
    let u2 = solve_ground_state(2.0, 25.0, 8000).unwrap();
    let mut cross_ok = true;
    let mut cross = Vec::new();
    for other in [w, &u2] {
        let n: Vec<f64> = [8.0, 10.0, 12.0, 14.0]
            .iter()
            .map(|s| cross_species_interaction(w, other, s * eps, eps).unwrap().normalized_ratio)
            .collect();
        cross_ok &= n.windows(2).all(|p| p[1] < p[0]);
        cross.push(n);
    }
    let elapsed = t.elapsed();
    let pass = pair_ok && cross_ok && elapsed < Duration::from_secs(120);
    report(
        4,
        "interaction decay",
        pass,
        &format!(
            "pair ratio / e^-1 at d/eps 10..14 = {:?} (within 5%: {pair_ok}), cross normalized ratios {:?} (decreasing: {cross_ok}), {:.0}s",
            ratios.iter().map(|r| format!("{r:.4}")).collect::<Vec<_>>(),
            cross.iter().map(|n| n.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>()).collect::<Vec<_>>(),
            elapsed.as_secs_f64()
        ),
    );
    assert!(pass);
}

fn sync_model(eps: f64, k: usize) -> ReducedModel {
    let (params, p, _) = desk();
    let coef = sync_coefficients(&params, &moments(unit())).unwrap();
    let rbar = predicted_radius(eps, k, 2.0).unwrap();
    let c_hat = multipeak_interaction_constant(unit(), k, interaction_radius(k, rbar, eps), eps).unwrap();
    ReducedModel {
        a_b: p.a * coef.b,
        b_c0: 0.0,
        c_int: c_hat * params.interaction_factor().unwrap(),
        m: 2.0,
        n: 3.0,
        k,
        eps,
        mode: ReducedMode::Synchronized,
    }
}

#[test]
fn criterion_05_reduced_minimizer() {
    let t = Instant::now();
    let mut model_ok = true;
    let mut rows = Vec::new();
    for k in 1..=3 {
        let mut errs = Vec::new();
        for eps in [1e-2, 1e-3, 1e-4] {
            // wide bracket: for k = 3 the minimizer sits outside the δ = 0.4 window
            let bracket = admissible_interval(eps, k, 2.0, 2.0, 1.9).unwrap();
            let min = minimize_model(&sync_model(eps, k), bracket).unwrap();
            errs.push((scaled_radius(min.r_star, eps, k) / 2.0 - 1.0).abs());
        }
        model_ok &= errs.iter().all(|e| *e < 0.10) && errs.windows(2).all(|w| w[1] < w[0]);
        rows.push(format!(
            "k={k}: {}",
            errs.iter().map(|e| format!("{:.1}%", 100.0 * e)).collect::<Vec<_>>().join("/")
        ));
    }
    let eps = 0.05;
    let (params, p, q) = desk();
    let rbar = predicted_radius(eps, 1, 2.0).unwrap();
    let samples: Vec<f64> = (0..33).map(|i| rbar * (0.6 + 0.8 * i as f64 / 32.0)).collect();
    let spec = grid_for(eps, 5.0, 1.4 * rbar, 8.0, 128).unwrap();
    let pipeline = SyncPipeline {
        w: unit(),
        params,
        p,
        q,
        eps,
        k: 1,
        spec,
        laplace: LaplaceKind::Spectral,
        min_margin: Some(0.0),
    };
    let landscape = measured_landscape(eps, 1, 2.0, &samples, |r| pipeline.energy_at(r)).unwrap();
    let measured_ok = landscape.relative_error() < 0.15 && landscape.is_valley();
    let elapsed = t.elapsed();
    let pass = model_ok && measured_ok && elapsed < Duration::from_secs(900);
    report(
        5,
        "reduced-landscape minimizer",
        pass,
        &format!(
            "model scaled-radius error vs m at eps 1e-2/1e-3/1e-4: {} (within 10% and decreasing: {model_ok}); measured minimizer {:.4} vs {rbar:.4} ({:.1}% off, valley {}), {:.0}s",
            rows.join(", "),
            landscape.minimizer(),
            100.0 * landscape.relative_error(),
            landscape.is_valley(),
            elapsed.as_secs_f64()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_06_segregated_landscape() {
    let t = Instant::now();
    let (mu1, mu2, beta, k) = (1.0, 1.0, -0.3, 1);
    let u1 = unit();
    let u2 = unit();
    let coef = seg_coefficients(mu1, mu2, &moments(u1), &moments(u2));
    // weak traps push the minimizer out far enough that the u-v peak distance stays above 4 eps
    let (a, b) = (0.25, 0.25);
    let mut match_ok = true;
    let mut ratios = Vec::new();
    for eps in [0.05, 0.02, 0.01] {
        let rbar = predicted_radius(eps, k, 2.0).unwrap();
        let rc = interaction_radius(k, rbar, eps);
        let model_r = ReducedModel {
            a_b: a * coef.b1,
            b_c0: 0.0,
            c_int: seg_interaction_constant(u1, mu1, k, rc, eps).unwrap(),
            m: 2.0,
            n: 2.0,
            k,
            eps,
            mode: ReducedMode::SegregatedR,
        };
        let model_rho = ReducedModel {
            a_b: 0.0,
            b_c0: b * coef.c2,
            c_int: seg_interaction_constant(u2, mu2, k, rc, eps).unwrap(),
            mode: ReducedMode::SegregatedRho,
            ..model_r
        };
        let window = admissible_interval(eps, k, 2.0, 2.0, 0.4).unwrap();
        let joint = minimize_segregated(&model_r, &model_rho, window).unwrap();
        let (mr, mrho) = (minimize_model(&model_r, window).unwrap(), minimize_model(&model_rho, window).unwrap());
        let tol = 1e-9 * (window.1 - window.0);
        match_ok &= joint.interior && (joint.r1 - mr.r_star).abs() <= tol && (joint.rho1 - mrho.r_star).abs() <= tol;
        let cross = seg_cross_term(u1, u2, beta, k, joint.r1, joint.rho1, eps).unwrap();
        let retained = 2.0 * k as f64 * eps.powi(3) * retained_exponentials(&model_r, &model_rho, joint.r1, joint.rho1);
        ratios.push(cross.abs() / retained);
    }
    let decreasing = ratios.windows(2).all(|w| w[1] < w[0]);
    let elapsed = t.elapsed();
    let pass = match_ok && decreasing && elapsed < Duration::from_secs(600);
    report(
        6,
        "segregated landscape",
        pass,
        &format!(
            "componentwise minimizers match: {match_ok}; cross/retained at eps 0.05/0.02/0.01 = {} (decreasing: {decreasing}), {:.0}s",
            ratios.iter().map(|r| format!("{r:.3e}")).collect::<Vec<_>>().join("/"),
            elapsed.as_secs_f64()
        ),
    );
    assert!(pass);
}

const SYNC_RUN: &str = r#"
mode = "sync"
mu1 = 1.0
mu2 = 1.0
beta = 0.5
k = 1
eps_list = [0.15, 0.1]

[p]
a = 1.0
m = 2.0

[q]
b = 0.0
n = 3.0

[grid]
landscape_samples = 3
"#;

struct Runs {
    summaries: BTreeMap<String, Summary>,
    seconds: f64,
}

/// Full pipeline runs shared by the Newton and profile-gap criteria.
fn runs() -> &'static Runs {
    static RUNS: OnceLock<Runs> = OnceLock::new();
    RUNS.get_or_init(|| {
        let t = Instant::now();
        let tmp = tempfile::tempdir().unwrap();
        let mut summaries = BTreeMap::new();
        for (name, text) in [
            ("sync k=1", SYNC_RUN.to_string()),
            ("sync k=2", SYNC_RUN.replace("k = 1", "k = 2")),
            (
                "seg k=1",
                SYNC_RUN
                    .replace("\"sync\"", "\"seg\"")
                    .replace("beta = 0.5", "beta = -0.3")
                    .replace("[0.15, 0.1]", "[0.2, 0.15]")
                    .replace("b = 0.0\nn = 3.0", "b = 1.0\nn = 2.0"),
            ),
        ] {
            let cfg = ExperimentConfig::from_toml(&text).unwrap();
            let out = tmp.path().join(name.replace([' ', '='], "_"));
            summaries.insert(name.to_string(), experiment::run(&cfg, &out, 1, false).unwrap());
        }
        Runs { summaries, seconds: t.elapsed().as_secs_f64() }
    })
}

#[test]
fn criterion_07_newton_solve() {
    let runs = runs();
    let mut pass = true;
    let mut detail = Vec::new();
    for k in [1usize, 2] {
        let s = &runs.summaries[&format!("sync k={k}")];
        for p in &s.points {
            let ok = p.newton_converged == Some(true)
                && p.final_residual.is_some_and(|r| r < 1e-6)
                && p.peak_census_u == Some((k, k))
                && p.peak_census_v == Some((k, k))
                && p.symmetry_defect_final.unwrap() <= p.symmetry_defect_initial.unwrap() + 1e-12
                && p.correction_ratio.is_some_and(|r| r < 0.2)
                && p.quadratic_constant.is_some_and(f64::is_finite);
            pass &= ok;
            detail.push(format!(
                "k={k} eps={}: {} steps, res {:.1e}, census {:?}/{:?}, corr/ansatz {:.3}",
                p.eps,
                p.newton_iterations.unwrap_or(0),
                p.final_residual.unwrap_or(f64::NAN),
                p.peak_census_u,
                p.peak_census_v,
                p.correction_ratio.unwrap_or(f64::NAN)
            ));
        }
        let exponent = s.trends.correction_exponents[0];
        let target = s.trends.correction_exponent_target - 0.5;
        pass &= exponent.is_some_and(|e| e >= target);
        detail.push(format!("k={k} correction exponent {:.3} (>= {target})", exponent.unwrap_or(f64::NAN)));
    }
    let per_solve = runs.seconds / 6.0;
    pass &= per_solve < 1800.0;
    report(7, "newton solve", pass, &format!("{}; {:.0}s per point", detail.join("; "), per_solve));
    assert!(pass);
}

#[test]
fn criterion_08_profile_gaps() {
    let mut algebraic = 0.0f64;
    for (m1, m2, b) in admissible_triples(1000, 8) {
        let (a, g) = classify(m1, m2, b).unwrap().amplitudes().unwrap();
        let comb = (m1 - b).abs().sqrt() * a - (m2 - b).abs().sqrt() * g;
        algebraic = algebraic.max(comb.abs() / ((m1 - b).abs().sqrt() * a));
    }
    let (params, _, _) = desk();
    let spec = grid_for(0.1, 4.0, 0.3, 6.0, 97).unwrap();
    let exact =
        build_synchronized(&PeakConfiguration::synchronized(2, 0.3, 0.1).unwrap(), &params, unit(), &spec, Some(0.0))
            .unwrap();
    let on_grid = profile_gap_sync(&exact, &params, LaplaceKind::Spectral).total();
    let runs = runs();
    let gap = |name: &str| -> Vec<f64> {
        runs.summaries[name]
            .points
            .iter()
            .map(|p| p.profile_gap_h1.unwrap_or(f64::NAN) + p.profile_gap_sup.unwrap_or(f64::NAN))
            .collect()
    };
    let (s1, s2, seg) = (gap("sync k=1"), gap("sync k=2"), gap("seg k=1"));
    let sync_ok = s1[1] < s1[0] && s2[1] < s2[0];
    let seg_ok = seg[1] < seg[0];
    let pass = algebraic < 1e-12 && on_grid < 1e-12 && sync_ok && seg_ok;
    report(
        8,
        "asymptotic-profile gaps",
        pass,
        &format!(
            "algebraic combination {algebraic:.1e}, exact-ansatz grid gap {on_grid:.1e}; sync gap k=1 {:.4} -> {:.4}, k=2 {:.4} -> {:.4} (eps 0.15 -> 0.1); seg gap {:.4} -> {:.4} (eps 0.2 -> 0.15)",
            s1[0], s1[1], s2[0], s2[1], seg[0], seg[1]
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_09_residual_dual_norm() {
    let t = Instant::now();
    let eps = 0.1;
    let (params, p, q) = desk();
    let problem = Problem::new(eps, p, q, &params);
    let mut pass = true;
    let mut detail = Vec::new();
    for k in [1usize, 2] {
        let (lo, hi) = admissible_interval(eps, k, 2.0, 3.0, 0.4).unwrap();
        let spec = grid_for(eps, 4.0, hi, 6.0, 97).unwrap();
        let scaled: Vec<f64> = (0..5)
            .map(|i| {
                let r = lo + (hi - lo) * i as f64 / 4.0;
                let field = build_synchronized(
                    &PeakConfiguration::synchronized(k, r, eps).unwrap(),
                    &params,
                    unit(),
                    &spec,
                    Some(0.0),
                )
                .unwrap();
                let dual = residual_dual_norm(&field, &problem, LaplaceKind::Spectral).unwrap().value;
                dual / eps.powf(1.5) / (r * r + (-chord(k, r) / eps).exp())
            })
            .collect();
        let spread = scaled.iter().cloned().fold(0.0, f64::max) / scaled.iter().cloned().fold(f64::INFINITY, f64::min);
        pass &= spread <= 5.0;
        detail.push(format!(
            "k={k}: scaled ratio {} (max/min {spread:.2})",
            scaled.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join("/")
        ));
    }
    let elapsed = t.elapsed();
    pass &= elapsed < Duration::from_secs(600);
    report(9, "residual dual-norm scaling", pass, &format!("{}; {:.0}s", detail.join("; "), elapsed.as_secs_f64()));
    assert!(pass);
}

fn collect_files(dir: &Path, base: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            collect_files(&path, base, out);
        } else {
            out.insert(path.strip_prefix(base).unwrap().display().to_string(), std::fs::read(&path).unwrap());
        }
    }
}

#[test]
fn criterion_10_determinism() {
    let text = SYNC_RUN.replace("[0.15, 0.1]", "[0.2]").replace("landscape_samples = 3", "landscape_samples = 5");
    let cfg = ExperimentConfig::from_toml(&text).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let mut trees = Vec::new();
    for (i, workers) in [1usize, 2].into_iter().enumerate() {
        let out = tmp.path().join(format!("run{i}"));
        experiment::run(&cfg, &out, workers, false).unwrap();
        experiment::plot_data(&out).unwrap();
        let mut files = BTreeMap::new();
        collect_files(&out, &out, &mut files);
        trees.push(files);
    }
    let compared: Vec<&String> = trees[0].keys().filter(|k| k.ends_with(".csv") || k.ends_with(".json")).collect();
    let differing: Vec<&&String> =
        compared.iter().filter(|k| trees[1].get(k.as_str()) != trees[0].get(k.as_str())).collect();
    let pass = !compared.is_empty() && differing.is_empty() && trees[0].len() == trees[1].len();
    report(
        10,
        "determinism",
        pass,
        &format!(
            "{} CSV/JSON files compared across two runs (1 and 2 workers), {} differ {:?}",
            compared.len(),
            differing.len(),
            differing
        ),
    );
    assert!(pass);
}

#[test]
fn rotation_by_pi_over_k_is_a_symmetry_of_the_peak_ring() {
    // sanity check for the geometry the criteria rely on
    for k in 1..5 {
        let d = chord(k, 1.0);
        assert!((d - 2.0 * (PI / (2 * k) as f64).sin()).abs() < 1e-15);
    }
}
