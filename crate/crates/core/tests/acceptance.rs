//! Acceptance criteria, one PASS/FAIL line each, with sub-check detail.
//!
//! Runs as a plain binary (`harness = false`). A failing sub-check that is
//! listed as a known shortfall is still reported as FAIL but does not fail
//! the process; any other failure does.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nyqgp::bound::{
    energy_fraction, energy_fraction_quadrature, length_scale_bound, matern_energy_fraction_closed_form,
    se_energy_fraction, sampling_info, GapRule,
};
use nyqgp::fit::{
    diagnose, fit, fit_with_options, make_fixed_noise_scenarios, make_scenarios, FitOptions, LowerBound, NoiseMode,
    EXPRESSION_NOISE_THRESHOLD, TIE_TOLERANCE,
};
use nyqgp::gp::{GpModel, NoiseModel, TimeSeries};
use nyqgp::harness::{
    emit_report, generate_sinc_series, ingest_csv, read_fit_records, run_batch, run_synthetic_experiment,
    write_fit_records, BatchOptions, BatchReport, CsvFormat, ExperimentOutput, SyntheticConfig,
    DEFAULT_N_GRID,
};
use nyqgp::kernels::{KernelFamily, KernelSpec};
use nyqgp::special::{bessel_k, erf, erfinv, gamma_ratio, hyp2f1, integrate_adaptive, integrate_to_infinity};

/// Sub-checks expected to fail, with the reason.
const KNOWN_SHORTFALLS: [(&str, &str); 2] = [
    (
        "5a",
        "multi-start ML fits put scenario 4 first at n=5 but at 43-53% across seeds, below the 53.5% floor",
    ),
    (
        "7a",
        "erf(x) rounds to within one ulp of 1 for |x| > 4, so no erfinv recovers x to 1e-9 there",
    ),
];

struct Check {
    id: &'static str,
    name: String,
    ok: bool,
    detail: String,
}

#[derive(Default)]
struct Criterion {
    checks: Vec<Check>,
}

impl Criterion {
    fn check(&mut self, id: &'static str, name: impl Into<String>, ok: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            id,
            name: name.into(),
            ok,
            detail: detail.into(),
        });
    }

    fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.ok)
    }
}

fn log_space(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

fn families() -> [KernelFamily; 5] {
    [
        KernelFamily::SquaredExponential,
        KernelFamily::MATERN_12,
        KernelFamily::MATERN_32,
        KernelFamily::MATERN_52,
        KernelFamily::Matern { nu: 4.0 },
    ]
}

/// Least-squares slope of `ys` against `xs`.
fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let num: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    num / den
}

fn fmt_row(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" ")
}

// ---------------------------------------------------------------------------

fn criterion_1() -> Criterion {
    let mut c = Criterion::default();
    let se = KernelFamily::SquaredExponential;
    let a1 = length_scale_bound(se, 0.99, 1.0).unwrap();
    c.check("1a", "SE bound at Δt=1 is 0.8199 ± 1e-4", (a1 - 0.8199).abs() <= 1e-4, format!("{a1:.10}"));
    let a2 = length_scale_bound(se, 0.99, 11.0 / 6.0).unwrap();
    c.check("1b", "SE bound at Δt=11/6 is 1.5032 ± 1e-3", (a2 - 1.5032).abs() <= 1e-3, format!("{a2:.10}"));
    c
}

/// Energy fraction with the constant as printed (Γ read for the lowercase γ, ν for v).
fn printed_closed_form(nu: f64, ratio: f64) -> f64 {
    let x = -(ratio * PI).powi(2) / (2.0 * nu);
    4.0 * ratio * (2.0 * PI).sqrt() * gamma_ratio(nu + 0.5, nu).unwrap() / nu.sqrt() * hyp2f1(0.5, nu + 0.5, 1.5, x).unwrap()
}

fn criterion_2() -> Criterion {
    let mut c = Criterion::default();
    let ratios = log_space(1e-2, 1e2, 50);

    let mut worst = 0.0f64;
    for &r in &ratios {
        let q = energy_fraction_quadrature(KernelFamily::SquaredExponential, r, 1.0).unwrap();
        worst = worst.max((q - se_energy_fraction(r, 1.0)).abs());
    }
    c.check("2a", "SE: quadrature vs erf form, 50 ℓ", worst <= 1e-7, format!("max diff {worst:.2e}"));

    let mut worst = 0.0f64;
    let mut worst_factor = 0.0f64;
    let mut worst_shape = 0.0f64;
    for nu in [0.5, 1.5, 2.5, 4.0] {
        let reference = 1.0;
        let q_ref = energy_fraction_quadrature(KernelFamily::Matern { nu }, reference, 1.0).unwrap();
        let p_ref = printed_closed_form(nu, reference);
        for &r in &ratios {
            let q = energy_fraction_quadrature(KernelFamily::Matern { nu }, r, 1.0).unwrap();
            let closed = matern_energy_fraction_closed_form(nu, r, 1.0).unwrap();
            worst = worst.max((q - closed).abs());
            let printed = printed_closed_form(nu, r);
            worst_factor = worst_factor.max((printed / q - 4.0).abs());
            worst_shape = worst_shape.max((printed / p_ref - q / q_ref).abs());
        }
    }
    c.check("2b", "Matérn ν∈{1/2,3/2,5/2,4}: quadrature vs ₂F₁ form, 50 ℓ", worst <= 1e-7, format!("max diff {worst:.2e}"));
    c.check(
        "2c",
        "printed ₂F₁ constant is 4× the quadrature value",
        worst_factor <= 1e-6,
        format!("max |ratio - 4| {worst_factor:.2e}"),
    );
    c.check(
        "2d",
        "printed form, normalized at ℓ=Δt, tracks the quadrature ratio within 1e-6",
        worst_shape <= 1e-6,
        format!("max diff {worst_shape:.2e}"),
    );

    let mut worst = 0.0f64;
    for family in families() {
        for alpha in [0.5, 0.9, 0.99, 0.999] {
            let b = length_scale_bound(family, alpha, 1.0).unwrap();
            worst = worst.max((energy_fraction(family, b, 1.0).unwrap() - alpha).abs());
        }
    }
    c.check("2e", "round trip fraction(bound(α)) = α", worst <= 1e-7, format!("max diff {worst:.2e}"));
    c
}

fn random_instance(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let n = rng.random_range(5..=15);
    let mut t = rng.random_range(-3.0..0.0);
    let mut times = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n);
    for _ in 0..n {
        times.push(t);
        values.push(rng.random_range(-2.0..2.0));
        t += rng.random_range(0.2..1.5);
    }
    (times, values)
}

fn criterion_3() -> Criterion {
    let mut c = Criterion::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let nus = [0.5, 1.5, 2.5, 4.0];
    let (mut worst, mut failures) = (0.0f64, 0usize);
    for i in 0..200 {
        let (times, values) = random_instance(&mut rng);
        let family = if i % 2 == 0 {
            KernelFamily::SquaredExponential
        } else {
            KernelFamily::Matern { nu: nus[(i / 2) % nus.len()] }
        };
        let s2: f64 = rng.random_range(0.3..3.0);
        let l: f64 = rng.random_range(0.4..3.0);
        let sn: f64 = rng.random_range(0.01..0.5);
        let lml = |a: f64, b: f64, d: f64| {
            GpModel::new(&times, &values, KernelSpec::new(family, a.exp(), b.exp()).unwrap(), NoiseModel::Estimated(d.exp()))
                .unwrap()
                .log_marginal_likelihood()
        };
        let g = GpModel::new(&times, &values, KernelSpec::new(family, s2, l).unwrap(), NoiseModel::Estimated(sn))
            .unwrap()
            .log_marginal_likelihood_gradient();
        let h = 1e-5;
        let (a, b, d) = (s2.ln(), l.ln(), sn.ln());
        let fd = [
            (lml(a + h, b, d) - lml(a - h, b, d)) / (2.0 * h),
            (lml(a, b + h, d) - lml(a, b - h, d)) / (2.0 * h),
            (lml(a, b, d + h) - lml(a, b, d - h)) / (2.0 * h),
        ];
        let an = [g.d_log_signal_variance, g.d_log_length_scale, g.d_log_noise_variance.unwrap()];
        for (x, y) in an.iter().zip(&fd) {
            let rel = (x - y).abs() / y.abs().max(1.0);
            worst = worst.max(rel);
            failures += (rel > 1e-5) as usize;
        }
    }
    c.check(
        "3a",
        "analytic vs central-difference gradient, 200 instances, n∈[5,15], SE and Matérn",
        failures == 0,
        format!("worst relative error {worst:.2e}, {failures} components over 1e-5"),
    );
    c
}

fn synthetic_run() -> ExperimentOutput {
    let config = SyntheticConfig {
        replicates: 200,
        ..SyntheticConfig::default()
    };
    run_synthetic_experiment(&config, &DEFAULT_N_GRID, KernelFamily::SquaredExponential).unwrap()
}

fn column(report: &BatchReport, scenario: usize, get: impl Fn(&nyqgp::harness::CellStats) -> Option<f64>) -> Vec<f64> {
    report.groups.iter().map(|g| get(report.cell(scenario, g).unwrap()).unwrap()).collect()
}

fn criterion_4(out: &ExperimentOutput) -> Criterion {
    let mut c = Criterion::default();
    let r = &out.report;
    let ns: Vec<f64> = DEFAULT_N_GRID.iter().map(|&n| n as f64).collect();
    let s1 = column(r, 0, |x| x.overfit_fraction_length_scale());
    c.check("4a", "scenario 1 ℓ over-fit fraction ≥ 0.5 at n=5", s1[0] >= 0.5, fmt_row(&s1));
    let trend = slope(&ns, &s1);
    c.check(
        "4b",
        "scenario 1 ℓ over-fit fraction non-increasing in trend over n",
        trend <= 0.0 && s1[0] >= s1[s1.len() - 1],
        format!("slope {trend:.4}"),
    );
    for (id, s) in [("4c", 1), ("4d", 3)] {
        let v = column(r, s, |x| x.overfit_fraction_length_scale());
        c.check(id, format!("scenario {} ℓ over-fit fraction exactly 0", s + 1), v.iter().all(|&x| x == 0.0), fmt_row(&v));
    }
    for (id, s) in [("4e", 2), ("4f", 3)] {
        let v = column(r, s, |x| x.overfit_fraction_noise());
        c.check(id, format!("scenario {} σ over-fit fraction exactly 0", s + 1), v.iter().all(|&x| x == 0.0), fmt_row(&v));
    }
    c
}

fn criterion_5(out: &ExperimentOutput) -> Criterion {
    let mut c = Criterion::default();
    let r = &out.report;
    for (ids, name, target, get) in [
        (["5a", "5b", "5c"], "log-likelihood", 0.685, (|x: &nyqgp::harness::CellStats| x.win_fraction_loglik()) as fn(&_) -> _),
        (["5d", "5e", "5f"], "MSE", 0.592, |x: &nyqgp::harness::CellStats| x.win_fraction_mse()),
    ] {
        let cols: Vec<Vec<f64>> = (0..4).map(|s| column(r, s, get)).collect();
        let s4 = cols[3][0];
        c.check(
            ids[0],
            format!("{name} wins: scenario 4 at n=5 within ±0.15 of {target}"),
            (s4 - target).abs() <= 0.15,
            format!("{s4:.3}"),
        );
        let others = [cols[0][0], cols[1][0], cols[2][0]];
        c.check(
            ids[1],
            format!("{name} wins: scenario 4 beats every other scenario at n=5"),
            others.iter().all(|&o| s4 > o),
            format!("s1..s4 = {}", fmt_row(&[others[0], others[1], others[2], s4])),
        );
        let joint: Vec<f64> = (0..DEFAULT_N_GRID.len()).map(|g| cols[2][g] + cols[3][g]).collect();
        c.check(
            ids[2],
            format!("{name} wins: scenarios 3+4 exceed 0.5 at every n"),
            joint.iter().all(|&x| x > 0.5),
            fmt_row(&joint),
        );
    }
    c
}

fn criterion_6(out: &ExperimentOutput) -> Criterion {
    let mut c = Criterion::default();
    let r = &out.report;
    let ns: Vec<f64> = DEFAULT_N_GRID.iter().map(|&n| n as f64).collect();
    let s1 = column(r, 0, |x| x.low_loglik_fraction());
    let s4 = column(r, 3, |x| x.low_loglik_fraction());
    c.check(
        "6a",
        "low predictive log-likelihood at n=5: scenario 1 > scenario 4",
        s1[0] > s4[0],
        format!("{:.3} vs {:.3}", s1[0], s4[0]),
    );
    for (id, s, v) in [("6b", 1, &s1), ("6c", 4, &s4)] {
        let k = slope(&ns, v);
        c.check(
            id,
            format!("scenario {s} low-loglik fraction decreases in trend over n"),
            k < 0.0 && v[0] > v[v.len() - 1],
            format!("{} (slope {k:.4})", fmt_row(v)),
        );
    }
    c
}

// ---------------------------------------------------------------------------

fn special_checks(c: &mut Criterion) {
    let mut worst = 0.0f64;
    let mut worst_at = 0.0;
    let mut x = -5.0;
    while x <= 5.0 + 1e-12 {
        let back = erfinv(erf(x)).map_or(f64::INFINITY, |v| (v - x).abs());
        if back > worst {
            worst = back;
            worst_at = x;
        }
        x += 0.01;
    }
    c.check("7a", "erfinv(erf(x)) = x on [-5, 5] within 1e-9", worst <= 1e-9, format!("worst {worst:.2e} at x={worst_at:.2}"));

    let grid: Vec<f64> = (0..=600).map(|i| -6.0 + 0.02 * i as f64).collect();
    let odd = grid.iter().all(|&x| erf(-x) == -erf(x));
    let monotone = grid.windows(2).all(|w| erf(w[1]) >= erf(w[0]));
    let mut p = -0.999;
    let mut inverse_ok = true;
    while p < 1.0 {
        inverse_ok &= erfinv(p).is_ok_and(|x| (erf(x) - p).abs() <= 1e-10);
        p += 0.001;
    }
    c.check("7b", "erf odd and monotone; erf(erfinv(p)) = p within 1e-10", odd && monotone && inverse_ok, "");

    let mut bessel_ok = true;
    for nu in [0.3, 0.5, 1.5, 2.5, 4.0] {
        let xs = log_space(1e-3, 50.0, 40);
        let vals: Vec<f64> = xs.iter().map(|&x| bessel_k(nu, x).unwrap()).collect();
        bessel_ok &= vals.iter().all(|&v| v > 0.0) && vals.windows(2).all(|w| w[1] < w[0]);
        bessel_ok &= xs.iter().all(|&x| bessel_k(-nu, x).unwrap() == bessel_k(nu, x).unwrap());
    }
    c.check("7c", "K_ν positive, decreasing, even in ν", bessel_ok, "");

    let hyp_ok = [(0.5, 1.0, 1.5), (0.5, 4.5, 1.5), (1.0, 2.0, 3.0), (-0.5, 0.25, 2.0)]
        .iter()
        .all(|&(a, b, cc)| hyp2f1(a, b, cc, 0.0).unwrap() == 1.0);
    c.check("7d", "₂F₁(a,b;c;0) = 1 exactly", hyp_ok, "");

    let mut worst = 0.0f64;
    for degree in 0..=5 {
        let f = |x: f64| (0..=degree).map(|k| (k as f64 + 1.0) * x.powi(k)).sum::<f64>();
        let exact: f64 = (0..=degree)
            .map(|k| (k as f64 + 1.0) * (2.0f64.powi(k + 1) - (-1.5f64).powi(k + 1)) / (k as f64 + 1.0))
            .sum();
        let got = integrate_adaptive(f, -1.5, 2.0, 1e-14, 1e-14).unwrap().value;
        worst = worst.max((got - exact).abs());
    }
    c.check("7e", "quadrature exact on polynomials of degree ≤ 5", worst <= 1e-12, format!("max error {worst:.2e}"));
}

fn kernel_checks(c: &mut Criterion) {
    let mut scaling = 0.0f64;
    let mut continuity = true;
    for family in families() {
        let k = KernelSpec::new(family, 1.4, 0.9).unwrap();
        for &r in &[0.0, 0.3, 1.0, 2.7] {
            for &scale in &[0.1, 2.0, 7.5] {
                let ks = KernelSpec::new(family, 1.4, 0.9 / scale).unwrap();
                scaling = scaling.max((k.covariance(r) - ks.covariance(r / scale)).abs());
            }
            let eps = 1e-9;
            continuity &= (k.covariance(r + eps) - k.covariance(r)).abs() < 1e-6;
            let kl = KernelSpec::new(family, 1.4, 0.9 + eps).unwrap();
            let kf = KernelSpec::new(family, 1.4 + eps, 0.9).unwrap();
            continuity &= (kl.covariance(r) - k.covariance(r)).abs() < 1e-6;
            continuity &= (kf.covariance(r) - k.covariance(r)).abs() < 1e-6;
        }
    }
    c.check(
        "7f",
        "covariance continuous and k(r; ℓ) = k(r/c; ℓ/c)",
        continuity && scaling <= 1e-12,
        format!("max scaling diff {scaling:.2e}"),
    );

    let (s2, l) = (1.3, 0.8);
    let m = KernelSpec::matern(50.0, s2, l).unwrap();
    let se = KernelSpec::se(s2, l).unwrap();
    let gap = (0..=500).map(|i| 5.0 * l * i as f64 / 500.0).map(|r| (m.covariance(r) - se.covariance(r)).abs()).fold(0.0, f64::max);
    c.check("7g", "Matérn ν=50 within 0.01·σf² of SE on [0, 5ℓ]", gap < 0.01 * s2, format!("max gap {gap:.2e}"));

    let mut worst = 0.0f64;
    for family in [KernelFamily::SquaredExponential, KernelFamily::MATERN_12, KernelFamily::MATERN_32, KernelFamily::MATERN_52] {
        let k = KernelSpec::new(family, 1.0, 0.7).unwrap();
        let total = 2.0 * integrate_to_infinity(|s| k.spectral_density(s), 0.0, 1e-14, 1e-12).unwrap().value;
        worst = worst.max((total - 1.0).abs());
    }
    c.check("7h", "spectral densities carry unit energy", worst <= 1e-8, format!("max error {worst:.2e}"));

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut failures = 0;
    for i in 0..100 {
        let family = families()[i % 5];
        let s2: f64 = rng.random_range(0.2..3.0);
        let l: f64 = rng.random_range(0.2..3.0);
        let r: f64 = rng.random_range(0.05..4.0);
        let k = KernelSpec::new(family, s2, l).unwrap();
        let g = k.covariance_gradient(r);
        let (hs, hl) = (1e-5 * s2, 1e-5 * l);
        let fd_s = (KernelSpec::new(family, s2 + hs, l).unwrap().covariance(r)
            - KernelSpec::new(family, s2 - hs, l).unwrap().covariance(r))
            / (2.0 * hs);
        let fd_l = (KernelSpec::new(family, s2, l + hl).unwrap().covariance(r)
            - KernelSpec::new(family, s2, l - hl).unwrap().covariance(r))
            / (2.0 * hl);
        for (a, b) in [(g.d_signal_variance, fd_s), (g.d_length_scale, fd_l)] {
            failures += ((a - b).abs() > 1e-5 * b.abs().max(1.0)) as usize;
        }
    }
    c.check("7i", "covariance gradient vs finite differences, 100 draws", failures == 0, format!("{failures} failures"));
}

fn bound_checks(c: &mut Criterion) {
    let mut monotone = true;
    for family in families() {
        let v: Vec<f64> = log_space(1e-2, 1e2, 50).iter().map(|&r| energy_fraction(family, r, 1.0).unwrap()).collect();
        monotone &= v.iter().all(|&x| x > 0.0 && x <= 1.0) && v.windows(2).all(|w| w[1] > w[0] || w[1] == 1.0);
    }
    c.check("7j", "energy fraction increasing with values in (0, 1]", monotone, "");

    let mut worst = 0.0f64;
    for family in families() {
        let base = length_scale_bound(family, 0.99, 1.0).unwrap();
        for cc in [0.1, 3.0, 17.0] {
            worst = worst.max((length_scale_bound(family, 0.99, cc).unwrap() - cc * base).abs() / (cc * base));
        }
    }
    c.check("7k", "bound linear in Δt", worst <= 1e-9, format!("max relative diff {worst:.2e}"));

    let bounds: Vec<f64> = [0.5, 1.5, 2.5, 10.0]
        .iter()
        .map(|&nu| length_scale_bound(KernelFamily::Matern { nu }, 0.99, 1.0).unwrap())
        .collect();
    c.check("7l", "Matérn bound grows as ν falls", bounds.windows(2).all(|w| w[0] > w[1]), fmt_row(&bounds));

    let m = length_scale_bound(KernelFamily::Matern { nu: 100.0 }, 0.99, 1.0).unwrap();
    let s = length_scale_bound(KernelFamily::SquaredExponential, 0.99, 1.0).unwrap();
    c.check("7m", "Matérn ν=100 bound within 2% of SE", (m / s - 1.0).abs() < 0.02, format!("{m:.5} vs {s:.5}"));
}

fn gp_checks(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut noise_gap, mut linear_gap, mut perm_gap) = (0.0f64, 0.0f64, 0.0f64);
    let (mut interp_gap, mut prior_gap) = (0.0f64, 0.0f64);
    for i in 0..50 {
        let (times, y1) = random_instance(&mut rng);
        let y2: Vec<f64> = times.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
        let family = families()[i % 5];
        let k = KernelSpec::new(family, 1.2, rng.random_range(0.5..2.0)).unwrap();
        let sn = rng.random_range(0.01..0.3);
        let q: Vec<f64> = (0..7).map(|_| rng.random_range(-5.0..20.0)).collect();
        let post = |y: &[f64]| GpModel::new(&times, y, k, NoiseModel::Estimated(sn)).unwrap().posterior_at(&q);

        let p1 = post(&y1);
        for j in 0..q.len() {
            noise_gap = noise_gap.max((p1.variance_observed[j] - p1.variance_latent[j] - sn).abs());
        }
        let (a, b) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let combo: Vec<f64> = y1.iter().zip(&y2).map(|(u, v)| a * u + b * v).collect();
        let (p2, pc) = (post(&y2), post(&combo));
        for j in 0..q.len() {
            linear_gap = linear_gap.max((pc.mean[j] - a * p1.mean[j] - b * p2.mean[j]).abs());
        }

        let mut order: Vec<usize> = (0..times.len()).collect();
        order.reverse();
        order.rotate_left(i % times.len());
        let tp: Vec<f64> = order.iter().map(|&j| times[j]).collect();
        let yp: Vec<f64> = order.iter().map(|&j| y1[j]).collect();
        let base = GpModel::new(&times, &y1, k, NoiseModel::Estimated(sn)).unwrap().log_marginal_likelihood();
        let permuted = GpModel::new(&tp, &yp, k, NoiseModel::Estimated(sn)).unwrap().log_marginal_likelihood();
        perm_gap = perm_gap.max((base - permuted).abs() / (1.0 + base.abs()));

        let exact = GpModel::new(&times, &y1, k, NoiseModel::Fixed(vec![0.0; times.len()])).unwrap();
        let p = exact.posterior_at(&times);
        for ((mean, var), obs) in p.mean.iter().zip(&p.variance_latent).zip(&y1) {
            interp_gap = interp_gap.max((mean - obs).abs()).max(*var);
        }
        let far = exact.posterior_at(&[times[times.len() - 1] + 200.0 * k.length_scale]);
        prior_gap = prior_gap.max(far.mean[0].abs()).max((far.variance_latent[0] - k.signal_variance).abs());
    }
    c.check("7n", "observed − latent variance = σn²", noise_gap <= 1e-10, format!("max {noise_gap:.2e}"));
    c.check("7o", "posterior mean linear in the data", linear_gap <= 1e-9, format!("max {linear_gap:.2e}"));
    c.check("7p", "log marginal likelihood invariant under relabeling", perm_gap <= 1e-10, format!("max {perm_gap:.2e}"));
    c.check("7q", "zero-noise posterior interpolates the data", interp_gap <= 1e-6, format!("max {interp_gap:.2e}"));
    c.check("7r", "posterior reverts to the prior far from the data", prior_gap <= 1e-10, format!("max {prior_gap:.2e}"));

    // repeated times are not allowed, so near-repeats with conflicting values stand in
    let times = [0.0, 1e-3, 1.0, 1.0 + 1e-3];
    let values = [1.0, -1.0, 0.5, -0.5];
    let k = KernelSpec::se(1.0, 1.0).unwrap();
    let lml: Vec<f64> = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5]
        .iter()
        .map(|&sn| GpModel::new(&times, &values, k, NoiseModel::Estimated(sn)).unwrap().log_marginal_likelihood())
        .collect();
    c.check("7s", "likelihood falls as σn² → 0 on conflicting near-repeats", lml.windows(2).all(|w| w[1] < w[0]), fmt_row(&lml));
}

fn fit_checks(c: &mut Criterion) {
    let family = KernelFamily::SquaredExponential;
    let (mut identical, mut nested, mut boxed, mut more_restarts) = (true, true, true, true);
    let mut worst_nesting = f64::NEG_INFINITY;
    for n in [5, 7, 9, 11] {
        let config = SyntheticConfig { n_points: n, seed: 17, ..SyntheticConfig::default() };
        for replicate in 0..12 {
            let series = generate_sinc_series(&config, replicate);
            let scenarios = make_scenarios(&series, family, 0.99).unwrap();
            let fits: Vec<_> = scenarios.iter().map(|s| fit(&series, family, s, 3).unwrap()).collect();
            for (s, f) in scenarios.iter().zip(&fits) {
                identical &= fit(&series, family, s, 3).unwrap() == *f;
                if let LowerBound::Value(a) = s.length_scale_bounds.lower {
                    boxed &= f.kernel.length_scale >= a;
                }
                if let NoiseMode::Bounded { lo, hi } = s.noise_mode {
                    let v = f.noise_variance.value().unwrap();
                    boxed &= v >= lo && v <= hi;
                }
            }
            let options = FitOptions {
                warm_starts: fits[1..].iter().map(|f| f.hyperparameters()).collect(),
                ..FitOptions::default()
            };
            let free = fit_with_options(&series, family, &scenarios[0], 3, &options).unwrap().log_marginal_likelihood;
            for f in &fits[1..] {
                let gap = f.log_marginal_likelihood - free;
                worst_nesting = worst_nesting.max(gap);
                nested &= gap <= 1e-9 * (1.0 + free.abs());
            }
            let few = fit_with_options(&series, family, &scenarios[0], 3, &FitOptions { restarts: 2, ..FitOptions::default() })
                .unwrap()
                .log_marginal_likelihood;
            let many = fit_with_options(&series, family, &scenarios[0], 3, &FitOptions { restarts: 8, ..FitOptions::default() })
                .unwrap()
                .log_marginal_likelihood;
            // optima within the tie tolerance are ordered by ℓ, not likelihood
            more_restarts &= many >= few - TIE_TOLERANCE;
        }
    }
    c.check("7t", "same series, scenario and seed give identical fits", identical, "");
    c.check(
        "7u",
        "constrained optimum never beats the unconstrained one",
        nested,
        format!("largest constrained − unconstrained {worst_nesting:.2e}"),
    );
    c.check("7v", "fitted parameters inside their boxes", boxed, "");
    c.check("7w", "more restarts never lower the likelihood", more_restarts, "");
}

fn harness_checks(c: &mut Criterion) {
    let config = SyntheticConfig { replicates: 6, restarts: 2, parallelism: 1, ..SyntheticConfig::default() };
    let grid = [5, 9];
    let serial = run_synthetic_experiment(&config, &grid, KernelFamily::SquaredExponential).unwrap();
    let parallel = run_synthetic_experiment(&SyntheticConfig { parallelism: 4, ..config.clone() }, &grid, KernelFamily::SquaredExponential).unwrap();
    c.check("7x", "synthetic run independent of thread count", serial == parallel, "");

    let mut shared = true;
    for chunk in serial.records.chunks(4) {
        shared &= chunk.iter().all(|r| r.series_id == chunk[0].series_id);
    }
    shared &= generate_sinc_series(&config, 3) == generate_sinc_series(&config, 3);
    c.check("7y", "all four scenarios of a replicate see the same series", shared, "");

    let dir = tempfile::tempdir().unwrap();
    let emit = |out: &ExperimentOutput, name: &str| {
        let d = dir.path().join(name);
        emit_report(&out.report, &d).unwrap();
        write_fit_records(&out.records, d.join("fits.csv")).unwrap();
        let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(&d)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
            })
            .collect();
        files.sort();
        (d, files)
    };
    let (d1, f1) = emit(&serial, "a");
    let (_, f2) = emit(&run_synthetic_experiment(&config, &grid, KernelFamily::SquaredExponential).unwrap(), "b");
    let (_, f3) = emit(&parallel, "c");
    c.check("7z", "output directories byte-identical across runs and thread counts", f1 == f2 && f1 == f3, "");

    let back = read_fit_records(d1.join("fits.csv")).unwrap();
    let rebuilt = BatchReport::from_records(
        &back,
        serial.report.scenario_labels.clone(),
        serial.report.groups.clone(),
        serial.report.thresholds,
    );
    c.check("7ω", "report recomputed from fits.csv equals the original", rebuilt == serial.report, "");
}

fn criterion_7() -> Criterion {
    let mut c = Criterion::default();
    special_checks(&mut c);
    kernel_checks(&mut c);
    bound_checks(&mut c);
    gp_checks(&mut c);
    fit_checks(&mut c);
    harness_checks(&mut c);
    c
}

fn criterion_8() -> Criterion {
    let mut c = Criterion::default();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("expression.csv");
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut text = String::from("id,time,value,variance\n");
    let grid = [0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 12.0];
    for g in 0..40 {
        let freq: f64 = rng.random_range(0.1..3.0);
        for &t in &grid {
            // some genes get tiny variances so an unconstrained fit would want tiny noise
            let var = if g % 3 == 0 { 1e-6 } else { rng.random_range(0.005..0.2) };
            let v = (freq * t).sin() + rng.random_range(-0.3..0.3);
            text += &format!("gene{g},{t},{v},{var}\n");
        }
    }
    std::fs::write(&path, text).unwrap();
    let series: Vec<TimeSeries> = ingest_csv(&path, CsvFormat::Long).unwrap();
    let family = KernelFamily::SquaredExponential;
    let scenarios = make_fixed_noise_scenarios(&series[0], family, 0.99).unwrap();
    let options = BatchOptions::default();
    let out = run_batch(&series, &scenarios, family, &options).unwrap();
    let s4: Vec<_> = out.output.records.iter().filter(|r| r.scenario == 4).collect();
    let ok_fits = s4.iter().filter(|r| r.outcome.is_ok()).count();
    let flagged = s4
        .iter()
        .filter_map(|r| r.outcome.as_ref().ok())
        .filter(|f| f.overfit_length_scale || f.tiny_noise)
        .count();
    c.check(
        "8a",
        "fixed noise + bounded ℓ: no over-fit flag on any ingested series",
        ok_fits == series.len() && flagged == 0,
        format!("{ok_fits}/{} fits, {flagged} flagged", series.len()),
    );

    let mut direct_ok = true;
    for s in &series {
        let sc = &make_fixed_noise_scenarios(s, family, 0.99).unwrap()[3];
        let r = fit(s, family, sc, 0).unwrap();
        let info = sampling_info(&s.times, GapRule::Minimum).unwrap();
        let d = diagnose(&r, &info, 0.99, EXPRESSION_NOISE_THRESHOLD).unwrap();
        direct_ok &= !d.length_scale_below_bound && !d.tiny_noise;
    }
    c.check("8b", "per-series diagnosis agrees", direct_ok, "");

    let unbounded: usize = out
        .output
        .records
        .iter()
        .filter(|r| r.scenario == 1)
        .filter_map(|r| r.outcome.as_ref().ok())
        .filter(|f| f.overfit_length_scale || f.tiny_noise)
        .count();
    c.check(
        "8c",
        "the same data does trip the flags without constraints",
        unbounded > 0,
        format!("{unbounded} flagged fits in scenario 1"),
    );
    c
}

fn main() -> ExitCode {
    let start = Instant::now();
    let synthetic = synthetic_run();
    eprintln!("synthetic run: {:.1}s", start.elapsed().as_secs_f64());

    let criteria: Vec<(&str, Criterion)> = vec![
        ("bound constant", criterion_1()),
        ("spectral-energy consistency", criterion_2()),
        ("gradient suite", criterion_3()),
        ("over-fit fractions", criterion_4(&synthetic)),
        ("win-rate tables", criterion_5(&synthetic)),
        ("predictive log-likelihood fractions", criterion_6(&synthetic)),
        ("property suite", criterion_7()),
        ("fixed-noise structural property", criterion_8()),
    ];

    let mut unexpected = Vec::new();
    for (i, (name, c)) in criteria.iter().enumerate() {
        println!("criterion {}: {} ({name})", i + 1, if c.passed() { "PASS" } else { "FAIL" });
        for check in &c.checks {
            let known = KNOWN_SHORTFALLS.iter().find(|(id, _)| *id == check.id);
            let mark = if check.ok { "ok  " } else { "FAIL" };
            print!("    [{mark}] {} {}", check.id, check.name);
            if !check.detail.is_empty() {
                print!(": {}", check.detail);
            }
            println!();
            match (check.ok, known) {
                (false, Some((_, why))) => println!("           known shortfall: {why}"),
                (false, None) => unexpected.push(check.id),
                _ => {}
            }
        }
    }
    println!("elapsed {:.1}s", start.elapsed().as_secs_f64());
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("unexpected failures: {}", unexpected.join(", "));
        ExitCode::FAILURE
    }
}
