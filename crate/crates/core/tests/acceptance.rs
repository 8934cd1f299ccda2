//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`). Positional arguments select
//! criteria by number, e.g. `cargo test --test acceptance -- 4 5`.

use std::process::ExitCode;
use std::time::Instant;

use mhd_core::adapt::{
    ab2_predict, compute_r, controller_factor, estimator_prefactor, ControllerConfig, StepHistory,
};
use mhd_core::forms::{assemble_convection, PhysicalParams, Wind};
use mhd_core::linsolve::OseenOperators;
use mhd_core::mesh::{build_rect_mesh, Rect};
use mhd_core::problems::{
    hartmann, lindberg_hartmann, max_strong_residual, travelling_wave, HartmannParams, ProblemSpec,
};
use mhd_core::runner::{
    convergence_study, operators, run_adaptive, run_constant, sample, ConvergenceTable, RunOptions,
    Scheme,
};
use mhd_core::space::{build_spaces, FieldVec};
use mhd_core::sparse::SparseMat;
use mhd_core::stepper::{pim_step, theoretical_tau_bound, ElsasserState, PicardSettings};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Verdict = Result<(bool, String), String>;

const WAVE_LEVELS: [usize; 3] = [16, 32, 64];
/// Reference errors of the wave with `B0 = (1, 1)` at `h = dt = 1/16, 1/32, 1/64`.
const WAVE_REF_ZP: [f64; 3] = [1.0656e-2, 2.0089e-3, 5.1407e-4];
const WAVE_REF_ZM: [f64; 3] = [1.5860e-2, 3.3290e-3, 7.9070e-4];

fn wave_params() -> PhysicalParams {
    PhysicalParams::new(2.5e-4, 2.5e-4).unwrap()
}

fn study(
    problem: &ProblemSpec,
    scheme: Scheme,
    levels: &[usize],
) -> Result<ConvergenceTable, String> {
    convergence_study(
        problem,
        scheme,
        levels,
        0.0,
        1.0,
        &PicardSettings::default(),
        false,
    )
    .map_err(|e| e.to_string())
}

fn describe(t: &ConvergenceTable) -> String {
    let errs: Vec<String> = t
        .levels
        .iter()
        .map(|l| format!("{:.3e}/{:.3e}", l.err_zp, l.err_zm))
        .collect();
    let rates: Vec<String> = t
        .rate_zp
        .iter()
        .zip(&t.rate_zm)
        .map(|(a, b)| format!("{:.3}/{:.3}", a.unwrap_or(f64::NAN), b.unwrap_or(f64::NAN)))
        .collect();
    format!(
        "{} errors z+/z- [{}] rates [{}]",
        t.scheme,
        errs.join(", "),
        rates.join(", ")
    )
}

fn all_rates(t: &ConvergenceTable) -> Vec<f64> {
    t.rate_zp
        .iter()
        .chain(&t.rate_zm)
        .map(|r| r.unwrap_or(f64::NAN))
        .collect()
}

fn criterion_1() -> Verdict {
    let t = study(
        &travelling_wave(wave_params(), [1.0, 1.0]),
        Scheme::Pim,
        &WAVE_LEVELS,
    )?;
    let rates_ok = all_rates(&t).iter().all(|r| *r >= 1.8);
    let within = |e: f64, r: f64| e <= 3.0 * r && e >= r / 3.0;
    let errors_ok = t
        .levels
        .iter()
        .enumerate()
        .all(|(i, l)| within(l.err_zp, WAVE_REF_ZP[i]) && within(l.err_zm, WAVE_REF_ZM[i]));
    Ok((
        rates_ok && errors_ok,
        format!(
            "{}; rates >= 1.8: {rates_ok}, within x3 of reference: {errors_ok}",
            describe(&t)
        ),
    ))
}

fn criterion_2() -> Verdict {
    let p = travelling_wave(wave_params(), [0.0, 0.0]);
    let pim = study(&p, Scheme::Pim, &WAVE_LEVELS)?;
    let bdf = study(&p, Scheme::Bdf2Ab2, &WAVE_LEVELS)?;
    let final_min = |t: &ConvergenceTable| {
        let (a, b) = t.final_rates();
        a.unwrap_or(f64::NAN).min(b.unwrap_or(f64::NAN))
    };
    let final_max = |t: &ConvergenceTable| {
        let (a, b) = t.final_rates();
        a.unwrap_or(f64::NAN).max(b.unwrap_or(f64::NAN))
    };
    let pim_ok = final_min(&pim) >= 1.9;
    // Order loss means no field keeps a final rate above 1.5.
    let bdf_ok = final_max(&bdf) <= 1.5;
    Ok((
        pim_ok && bdf_ok,
        format!(
            "{}; {}; PIM final rate >= 1.9: {pim_ok}, BDF2-AB2 final rate <= 1.5: {bdf_ok}",
            describe(&pim),
            describe(&bdf)
        ),
    ))
}

fn criterion_3() -> Verdict {
    let p = hartmann(
        HartmannParams::channel(10.0),
        PhysicalParams::new(0.1, 0.1).unwrap(),
    )
    .map_err(|e| e.to_string())?;
    let t = study(&p, Scheme::Pim, &WAVE_LEVELS)?;
    let rates_ok = all_rates(&t).iter().all(|r| *r >= 2.5);
    let monotone = t
        .levels
        .windows(2)
        .all(|w| w[1].err_zp < w[0].err_zp && w[1].err_zm < w[0].err_zm);
    Ok((
        rates_ok && monotone,
        format!(
            "{}; rates >= 2.5: {rates_ok}, monotone: {monotone}",
            describe(&t)
        ),
    ))
}

/// Relative energy-balance defect of an unforced PIM run.
fn balance_defect(params: PhysicalParams, b0: [f64; 2]) -> Result<f64, String> {
    let p = ProblemSpec::free_decay(params, b0, Rect::unit());
    let ops = operators(&p, 12, 12).map_err(|e| e.to_string())?;
    let opts = RunOptions {
        picard: PicardSettings {
            tol: 1e-12,
            ..Default::default()
        },
        diagnostics: true,
    };
    let run =
        run_constant(&ops, &p, Scheme::Pim, 0.0, 0.02, 25, &opts).map_err(|e| e.to_string())?;
    Ok(run.energy_balance_defect())
}

fn criterion_4() -> Verdict {
    let cases = [
        (PhysicalParams::new(0.01, 0.01).unwrap(), [0.0, 0.0]),
        (PhysicalParams::new(0.01, 0.01).unwrap(), [0.5, -0.3]),
        (PhysicalParams::new(0.02, 0.005).unwrap(), [0.3, 0.2]),
    ];
    let mut worst: f64 = 0.0;
    for (params, b0) in cases {
        worst = worst.max(balance_defect(params, b0)?);
    }
    Ok((
        worst <= 1e-8,
        format!("worst |E(N) + D(N) - E(0)| / E(0) over 3 unforced runs: {worst:.3e} (limit 1e-8)"),
    ))
}

fn criterion_5() -> Verdict {
    let p = ProblemSpec::free_decay(PhysicalParams::ideal(), [0.0, 0.0], Rect::unit());
    let ops = operators(&p, 10, 10).map_err(|e| e.to_string())?;
    let opts = RunOptions {
        picard: PicardSettings {
            tol: 1e-12,
            ..Default::default()
        },
        diagnostics: true,
    };
    let run =
        run_constant(&ops, &p, Scheme::Pim, 0.0, 0.01, 100, &opts).map_err(|e| e.to_string())?;
    let d = &run.diagnostics;
    let (e0, h0) = (d[0].discrete.energy.elsasser, d[0].discrete.cross_helicity);
    let de = d
        .iter()
        .map(|r| (r.discrete.energy.elsasser - e0).abs() / e0)
        .fold(0.0, f64::max);
    let dh = d
        .iter()
        .map(|r| (r.discrete.cross_helicity - h0).abs() / h0.abs())
        .fold(0.0, f64::max);
    Ok((
        de <= 1e-8 && dh <= 1e-8 && run.steps.len() == 100,
        format!("100 steps: energy drift {de:.3e}, cross-helicity drift {dh:.3e} (H_C(0) = {h0:.4e}, limit 1e-8)"),
    ))
}

fn criterion_6() -> Verdict {
    let p = travelling_wave(wave_params(), [1.0, 1.0]);
    let ops = operators(&p, 16, 16).map_err(|e| e.to_string())?;
    let s0 = ElsasserState::initial(&ops.space, &p, 0.0).map_err(|e| e.to_string())?;
    let gamma = ops
        .scalar
        .h1_seminorm(&s0.zp.coeffs)
        .max(ops.scalar.h1_seminorm(&s0.zm.coeffs));
    let bound = theoretical_tau_bound(&p.params, gamma, 2).map_err(|e| e.to_string())?;
    let tau = 0.5 * bound;
    let settings = PicardSettings {
        tol: 1e-10,
        ..Default::default()
    };
    let mut s = s0;
    let mut logs = Vec::new();
    let mut within = true;
    let steps = 20;
    for _ in 0..steps {
        // Each step starts the sweeps from z(n) so the iteration has room to
        // contract before reaching the solver's noise floor.
        s.zp_prev = None;
        s.zm_prev = None;
        let (next, rep) = pim_step(&ops, &p, &s, tau, &settings).map_err(|e| e.to_string())?;
        within &= rep.iteration.tau_within_bound;
        logs.extend(
            rep.iteration
                .contraction_ratios
                .iter()
                .filter(|r| **r > 0.0)
                .map(|r| r.ln()),
        );
        s = next;
    }
    let gmean = (logs.iter().sum::<f64>() / logs.len() as f64).exp();
    Ok((
        within && !logs.is_empty() && gmean <= 0.6,
        format!(
            "tau = {tau:.3e} (bound {bound:.3e}), {steps} steps, {} ratios, geometric mean {gmean:.3e} (limit 0.6), every step within bound: {within}",
            logs.len()
        ),
    ))
}

fn criterion_7() -> Verdict {
    let r11 = compute_r(1.0, 1.0);
    let r_ok = (r11 - 25.0 / 24.0).abs() <= 1e-15;
    let pre = estimator_prefactor(r11).map_err(|e| e.to_string())?;
    let pre_ok = (pre - 1.0 / 24.0).abs() <= 1e-15;

    // Predictor on coefficient histories quadratic in time.
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut pred_err: f64 = 0.0;
    for _ in 0..1000 {
        let taus: Vec<f64> = (0..3).map(|_| rng.gen_range(0.01..2.0)).collect();
        let t2 = rng.gen_range(-3.0..3.0);
        let t1 = t2 + taus[0];
        let t0 = t1 + taus[1];
        let t_next = t0 + taus[2];
        let n = 5;
        let coef: Vec<[f64; 3]> = (0..n)
            .map(|_| {
                [
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                ]
            })
            .collect();
        let at = |t: f64| {
            FieldVec::velocity(
                coef.iter()
                    .map(|c| c[0] + c[1] * t + c[2] * t * t)
                    .collect(),
            )
        };
        let hist = StepHistory::new(
            [at(t0), at(t1), at(t2)],
            [at(t0), at(t1), at(t2)],
            [t0, t1, t2],
        )
        .map_err(|e| e.to_string())?;
        let (pp, _) = ab2_predict(&hist, t_next).map_err(|e| e.to_string())?;
        let exact = at(t_next);
        // Rounding in the history values is amplified by the extrapolation
        // weights, so errors are measured against the largest value involved.
        let scale = [t0, t1, t2, t_next]
            .iter()
            .flat_map(|&t| at(t).coeffs)
            .fold(1.0f64, |m, v| m.max(v.abs()));
        for (a, b) in pp.coeffs.iter().zip(&exact.coeffs) {
            pred_err = pred_err.max((a - b).abs() / scale);
        }
    }
    let pred_ok = pred_err <= 1e-12;

    let cfg = ControllerConfig {
        tol: 1e-4,
        kappa: 0.95,
        tau_min: 1e-6,
        tau_max: 1e-4,
        max_rejects: 20,
    };
    let mut ratio_ok = controller_factor(0.0, &cfg) == 1.5;
    for _ in 0..10_000 {
        let lte = 10f64.powf(rng.gen_range(-16.0..4.0));
        let f = controller_factor(lte, &cfg);
        ratio_ok &= (0.2..=1.5).contains(&f);
    }
    Ok((
        r_ok && pre_ok && pred_ok && ratio_ok,
        format!(
            "R(1,1) - 25/24 = {:.1e}, prefactor - 1/24 = {:.1e}, worst predictor error {pred_err:.1e}, controller ratios in [0.2, 1.5]: {ratio_ok}",
            r11 - 25.0 / 24.0,
            pre - 1.0 / 24.0
        ),
    ))
}

fn criterion_8() -> Verdict {
    let p = lindberg_hartmann(
        HartmannParams::channel(100.0),
        PhysicalParams::new(0.1, 0.1).unwrap(),
        3.1,
    )
    .map_err(|e| e.to_string())?;
    let (t0, t1) = (1.59, 1.604);
    let ops = operators(&p, 40, 40).map_err(|e| e.to_string())?;
    let cfg = ControllerConfig {
        tol: 1e-4,
        kappa: 0.95,
        tau_min: 1e-6,
        tau_max: 1e-4,
        max_rejects: 20,
    };
    let picard = PicardSettings::default();
    let out =
        run_adaptive(&ops, &p, t0, t1, &cfg, &picard, |_, _| {}).map_err(|e| e.to_string())?;
    let run = &out.run;
    let n = run.n_accepted();
    let lte_max = run
        .accepted()
        .filter_map(|r| r.lte.as_ref().map(|l| l.value))
        .fold(0.0, f64::max);
    let lte_ok = lte_max < 1e-4;
    let late = run.accepted().filter(|r| r.t + r.tau >= 1.602).count();
    let late_ok = 2 * late >= n;
    let opts = RunOptions {
        picard,
        diagnostics: false,
    };
    let control = run_constant(&ops, &p, Scheme::Pim, t0, (t1 - t0) / n as f64, n, &opts)
        .map_err(|e| e.to_string())?;
    let control_end = sample(
        &ops,
        &p,
        &control.final_zp,
        &control.final_zm,
        control.final_t,
        0.0,
    );
    let e_adapt = out.final_energy_error().ok_or("no adaptive energy error")?;
    let e_const = control_end
        .energy_error()
        .ok_or("no constant-step energy error")?;
    let better = e_adapt < e_const;
    let it_max = run
        .accepted()
        .map(|r| r.step.iteration.iterations)
        .max()
        .unwrap_or(0);
    Ok((
        lte_ok && late_ok && better,
        format!(
            "{n} accepted, {} rejected, max accepted estimate {lte_max:.3e}, {late} steps end at t >= 1.602, \
             max sweeps {it_max}, final KE error adaptive {e_adapt:.4e} vs constant {e_const:.4e}",
            run.n_rejected()
        ),
    ))
}

fn criterion_9() -> Verdict {
    let mesh = build_rect_mesh(Rect::new(0.0, 1.3, -0.4, 0.6), 4, 3).map_err(|e| e.to_string())?;
    let space = build_spaces(&mesh).map_err(|e| e.to_string())?;
    let ops = OseenOperators::new(&space);
    let n = space.n_nodes * 2;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut skew: f64 = 0.0;
    for _ in 0..1000 {
        let w = FieldVec::velocity((0..n).map(|_| rng.gen_range(-2.0..2.0)).collect());
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c = assemble_convection(
            &space,
            Wind::shifted(&w, [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]),
        )
        .map_err(|e| e.to_string())?;
        let xx: f64 = x.iter().map(|a| a * a).sum();
        skew = skew.max(c.bilinear(&x, &x).abs() / xx);
    }
    // Relative to the largest entry, so small mass entries are not judged leniently.
    let sym = |m: &SparseMat| {
        m.symmetry_defect(1.0) / m.values.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    };
    let ms = sym(&ops.scalar.mass);
    let ks = sym(&ops.scalar.stiffness);

    let wave = |b0| travelling_wave(wave_params(), b0);
    let channel = |m| {
        hartmann(
            HartmannParams::channel(m),
            PhysicalParams::new(0.1, 0.1).unwrap(),
        )
    };
    let lindberg = lindberg_hartmann(
        HartmannParams::channel(100.0),
        PhysicalParams::new(0.1, 0.1).unwrap(),
        3.1,
    );
    let mut specs: Vec<(ProblemSpec, (f64, f64), f64)> = vec![
        (wave([0.0, 0.0]), (0.0, 1.0), 1e-3),
        (wave([1.0, 1.0]), (0.0, 1.0), 1e-3),
        (wave([10.0, 10.0]), (0.0, 1.0), 1e-3),
        (
            travelling_wave(PhysicalParams::new(0.3, 0.05).unwrap(), [1.0, -2.0]),
            (0.0, 1.0),
            1e-3,
        ),
    ];
    for m in [1.0, 10.0, 100.0, 1000.0] {
        specs.push((channel(m).map_err(|e| e.to_string())?, (0.0, 1.0), 1e-3));
    }
    specs.push((lindberg.map_err(|e| e.to_string())?, (1.59, 1.604), 2e-5));
    let mut oracle: f64 = 0.0;
    for (p, (ta, tb), ht) in &specs {
        let d = p.domain;
        let samples: Vec<([f64; 2], f64)> = (0..100)
            .map(|_| {
                let x = [
                    rng.gen_range(d.x0 + 0.01..d.x1 - 0.01),
                    rng.gen_range(d.y0 + 0.01..d.y1 - 0.01),
                ];
                (x, rng.gen_range(*ta..*tb))
            })
            .collect();
        oracle = oracle.max(max_strong_residual(p, &samples, *ht).map_err(|e| e.to_string())?);
    }
    Ok((
        skew <= 1e-12 && ms <= 1e-14 && ks <= 1e-14 && oracle <= 1e-6,
        format!(
            "max |x'C(w)x|/|x|^2 {skew:.2e} over 1000 pairs, mass asymmetry {ms:.1e}, stiffness asymmetry {ks:.1e}, \
             worst residual oracle {oracle:.2e} over {} problems",
            specs.len()
        ),
    ))
}

type Criterion = (usize, &'static str, fn() -> Verdict);

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        (1, "wave PIM B0=(1,1) rates and errors", criterion_1),
        (
            2,
            "wave B0=(0,0) PIM order vs BDF2-AB2 order loss",
            criterion_2,
        ),
        (3, "steady Hartmann B0=(0,10) rates", criterion_3),
        (4, "unforced energy balance", criterion_4),
        (5, "ideal-case invariants", criterion_5),
        (6, "Picard contraction under the step bound", criterion_6),
        (7, "adaptivity unit properties", criterion_7),
        (8, "Lindberg-Hartmann adaptive run", criterion_8),
        (9, "form algebra and residual oracle", criterion_9),
    ];
    let selected: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    for (id, name, f) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let (pass, detail) = match f() {
            Ok(v) => v,
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {id} ({name}): {} - {detail} [{:.1} s]",
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
