//! Acceptance checks. Prints one `[PASS]`/`[FAIL]` line per criterion and
//! exits non-zero if any fails. Pass criterion numbers as arguments to run a
//! subset, e.g. `cargo test --test acceptance -- 3 5`.

use std::collections::BTreeMap;
use std::io::Write;
use std::panic::{self, AssertUnwindSafe};

use oneshot_doe::de_opt::{de_bench, DeConfig, NamedDe, PopulationRule};
use oneshot_doe::gaussianize::ScalingRule;
use oneshot_doe::harness::{
    cell_seed, paired_comparison, run_cell, run_experiment, win_matrix, write_artifact, Artifact, ExperimentConfig,
    Format, RegretRecord, Sampler, Strategy, SweepSpec, DEFAULT_PORTFOLIO, TABLE_REPS, TOURNAMENT_REPS,
};
use oneshot_doe::objectives::ObjectiveKind;
use oneshot_doe::stats::{
    central_concentration_bound, noncentral_chi2_cdf, noncentral_lower_tail_bound, theorem1_check, McRoute,
    TheoryCheckConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

const SEED: u64 = 2021;

/// Outcome of one criterion: pass flag and a one-line summary.
type Outcome = (bool, String);

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 10] = [
        (1, "sphere regret table", table),
        (2, "sweep shape", sweep_shape),
        (3, "midpoint calibration", midpoint_calibration),
        (4, "midpoint beats naive", midpoint_beats_naive),
        (5, "finite-dimension success probability", success_probability),
        (6, "non-central chi-squared oracle", chi2_oracle),
        (7, "concentration bounds dominate", bounds_dominate),
        (8, "tournament harness", tournament),
        (9, "DE initialisation effect", de_initialisation),
        (10, "determinism across worker counts", determinism),
    ];
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    let mut out = std::io::stdout();
    for (n, name, check) in criteria {
        if !wanted.is_empty() && !wanted.contains(&n) {
            continue;
        }
        let t0 = std::time::Instant::now();
        let (ok, detail) = match panic::catch_unwind(AssertUnwindSafe(check)) {
            Ok(r) => r,
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, format!("panicked: {msg}"))
            }
        };
        if !ok {
            failed += 1;
        }
        let tag = if ok { "PASS" } else { "FAIL" };
        writeln!(out, "[{tag}] criterion {n} {name}: {detail} ({:.1}s)", t0.elapsed().as_secs_f64()).unwrap();
        out.flush().unwrap();
    }
    if failed > 0 {
        writeln!(out, "{failed} acceptance criteria failed").unwrap();
        std::process::exit(1);
    }
}

fn sweep(dim: usize, lambda: usize, multiples: Vec<f64>, extra: Vec<f64>, reps: usize) -> oneshot_doe::harness::SweepCurve {
    SweepSpec {
        objective: ObjectiveKind::Sphere,
        dim,
        lambda,
        multiples,
        extra_sigmas: extra,
        reps,
        seed: SEED,
        route: McRoute::Rotated,
    }
    .run()
    .unwrap()
}

fn table() -> Outcome {
    let rows = [
        (20, 100, 0.73, 0.88),
        (20, 1000, 0.59, 0.66),
        (100, 100, 0.94, 1.44),
        (100, 1000, 0.90, 1.29),
        (500, 1000, 0.98, 1.66),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (d, lambda, want_star, want_one) in rows {
        let curve = sweep(d, lambda, vec![1.0], vec![1.0], TABLE_REPS);
        let star = curve.at_sigma(((lambda as f64).ln() / d as f64).sqrt()).unwrap().mean;
        let one = curve.at_sigma(1.0).unwrap().mean;
        ok &= (star - want_star).abs() <= 0.03 && (one - want_one).abs() <= 0.03;
        parts.push(format!("d={d} λ={lambda} {star:.3}/{one:.3} (want {want_star}/{want_one})"));
    }
    (ok, parts.join(", "))
}

fn sweep_shape() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for d in [20, 50, 100] {
        let grid: Vec<f64> = (0..=20).map(|i| i as f64 * 0.1).collect();
        let curve = sweep(d, 500, grid, vec![1.0], 10_000);
        let best = *curve.argmin();
        let zero = *curve.at_sigma(0.0).unwrap();
        let one = *curve.at_sigma(1.0).unwrap();
        let gap = |p: &oneshot_doe::harness::SweepPoint| {
            (p.mean - best.mean) / (p.std_error * p.std_error + best.std_error * best.std_error).sqrt()
        };
        let (z0, z1) = (gap(&zero), gap(&one));
        ok &= (0.6..=1.5).contains(&best.multiple) && z0 >= 3.0 && z1 >= 3.0;
        parts.push(format!("d={d} argmin ×{:.2} gaps {z0:.1}/{z1:.1} SE", best.multiple));
    }
    (ok, parts.join(", "))
}

fn midpoint_calibration() -> Outcome {
    let s = Strategy::new("Fixed0", Sampler::DirectGaussian, ScalingRule::Fixed(0.0), vec![]).unwrap();
    let d = 20;
    let records = run_cell(ObjectiveKind::Sphere, d, 4, &s, TABLE_REPS, cell_seed(SEED, ObjectiveKind::Sphere, d, 4)).unwrap();
    let mean = records.iter().map(|r| r.regret).sum::<f64>() / records.len() as f64 / d as f64;
    ((mean - 1.0).abs() <= 0.01, format!("mean normalized regret {mean:.4} at d={d}"))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn midpoint_beats_naive() -> Outcome {
    let (d, lambda, reps) = (100, 100, 10_000);
    let cell = cell_seed(SEED, ObjectiveKind::Sphere, d, lambda);
    let regrets = |name: &str| -> Vec<f64> {
        let s = Strategy::preset(name).unwrap();
        run_cell(ObjectiveKind::Sphere, d, lambda, &s, reps, cell).unwrap().into_iter().map(|r| r.regret).collect()
    };
    let mid = median(regrets("Midpoint"));
    let naive = median(regrets("Random"));
    (mid < naive, format!("median ‖x*‖² {mid:.2} vs median σ=1 regret {naive:.2}"))
}

fn success_probability() -> Outcome {
    let mut cfg = TheoryCheckConfig::new(1000, 100, 10_000, SEED);
    cfg.c1 = 0.5;
    cfg.c2 = 1.0;
    let c = theorem1_check(&cfg).unwrap();
    let z = c.discrepancy_z();
    (
        c.meets_delta() && z <= 3.0,
        format!(
            "frequency {:.4} Wilson [{:.4}, {:.4}], closed form {:.4}, |diff| = {z:.2} SE",
            c.frequency, c.ci_low, c.ci_high, c.closed_form
        ),
    )
}

/// Fraction of Σ(Z_i + m_i)² ≤ x over `n` draws, with the non-centrality
/// carried entirely by the first coordinate.
fn sum_of_squares_cdf(xs: &[f64], d: usize, mu: f64, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift = mu.sqrt();
    let mut hits = vec![0usize; xs.len()];
    for _ in 0..n {
        let z: f64 = rng.sample(StandardNormal);
        let mut u = (z + shift) * (z + shift);
        for _ in 1..d {
            let z: f64 = rng.sample(StandardNormal);
            u += z * z;
        }
        for (h, &x) in hits.iter_mut().zip(xs) {
            *h += (u <= x) as usize;
        }
    }
    hits.into_iter().map(|h| h as f64 / n as f64).collect()
}

fn chi2_oracle() -> Outcome {
    let n = 10_000_000;
    let cells = [(1, 1.0), (2, 0.5), (3, 4.0), (5, 2.0), (8, 10.0), (12, 0.25)];
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for (i, &(d, mu)) in cells.iter().enumerate() {
        let m = d as f64 + mu;
        let xs = [0.6 * m, 1.4 * m];
        let emp = sum_of_squares_cdf(&xs, d, mu, n, SEED + i as u64);
        for (&x, &e) in xs.iter().zip(&emp) {
            let p = noncentral_chi2_cdf(x, d, mu).unwrap();
            let se = (p * (1.0 - p) / n as f64).sqrt();
            worst = worst.max((e - p).abs() / se);
            count += 1;
        }
    }
    let reduction = noncentral_chi2_cdf(1.0, 1, 1.0).unwrap();
    let ok = worst <= 3.0 && (reduction - 0.477250).abs() <= 1e-6;
    (ok, format!("{count} cells, worst |MC − series| = {worst:.2} SE; F(1; 1, 1) = {reduction:.7}"))
}

fn bounds_dominate() -> Outcome {
    let n = 1_000_000;
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut ok = true;
    let mut cells = 0;
    let mut closest: f64 = 0.0;
    for d in [10usize, 50, 200] {
        let chi = ChiSquared::new(d as f64).unwrap();
        let draws: Vec<f64> = (0..n).map(|_| chi.sample(&mut rng) / d as f64).collect();
        for t in [0.1, 0.3, 0.5, 1.0] {
            let tail = draws.iter().filter(|&&u| (u - 1.0).abs() >= t).count() as f64 / n as f64;
            let bound = central_concentration_bound(d, t).unwrap();
            ok &= tail <= bound;
            closest = closest.max(tail / bound);
            cells += 1;
        }
    }
    for (d, mu) in [(5usize, 1.0), (20, 10.0), (100, 50.0)] {
        let rest = ChiSquared::new((d - 1) as f64).unwrap();
        let shift = f64::sqrt(mu);
        let draws: Vec<f64> = (0..n)
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                (z + shift).powi(2) + rest.sample(&mut rng)
            })
            .collect();
        let sd = (2.0 * (d as f64 + 2.0 * mu)).sqrt();
        for k in [0.5, 1.0, 2.0, 3.0] {
            let x = k * sd;
            let tail = draws.iter().filter(|&&u| u - (d as f64 + mu) <= -x).count() as f64 / n as f64;
            let bound = noncentral_lower_tail_bound(x, d, mu).unwrap();
            ok &= tail <= bound;
            closest = closest.max(tail / bound);
            cells += 1;
        }
    }
    (ok, format!("{cells} cells at {n} draws, largest tail/bound ratio {closest:.3}"))
}

fn record(strategy: &str, rep: usize, regret: f64) -> RegretRecord {
    RegretRecord {
        strategy: strategy.into(),
        objective: ObjectiveKind::Sphere,
        dim: 2,
        lambda: 3,
        replication: rep,
        regret,
        optimum_seed: None,
    }
}

/// Wins of `a` over `b` counted directly from the fixture columns.
fn brute_force(cols: &BTreeMap<&str, Vec<f64>>, a: &str, b: &str) -> f64 {
    let (x, y) = (&cols[a], &cols[b]);
    let mut total = 0.0;
    for i in 0..x.len() {
        if x[i] < y[i] {
            total += 1.0;
        } else if x[i] == y[i] {
            total += 0.5;
        }
    }
    total / x.len() as f64
}

fn tournament() -> Outcome {
    let fixtures: [[(&str, [f64; 4]); 3]; 2] = [
        [("A", [1.0, 2.0, 3.0, 0.5]), ("B", [2.0, 2.0, 1.0, 0.5]), ("C", [3.0, 0.0, 3.0, 4.0])],
        [("X", [0.0, 0.0, 0.0, 0.0]), ("Y", [0.0, 0.0, 0.0, 0.0]), ("Z", [1.0, -1.0, 1.0, -1.0])],
    ];
    let mut fixtures_ok = true;
    for fx in fixtures {
        let cols: BTreeMap<&str, Vec<f64>> = fx.iter().map(|(n, v)| (*n, v.to_vec())).collect();
        let records: Vec<RegretRecord> =
            fx.iter().flat_map(|(n, v)| v.iter().enumerate().map(move |(r, &g)| record(n, r, g))).collect();
        let m = win_matrix(&records).unwrap();
        for a in cols.keys() {
            fixtures_ok &= m.get(a, a) == Some(0.5);
            for b in cols.keys().filter(|b| *b != a) {
                let ab = m.get(a, b).unwrap();
                fixtures_ok &= ab == brute_force(&cols, a, b);
                fixtures_ok &= (ab + m.get(b, a).unwrap() - 1.0).abs() < 1e-15;
            }
        }
    }
    let cfg = ExperimentConfig {
        objectives: vec![ObjectiveKind::Sphere, ObjectiveKind::Cigar, ObjectiveKind::Rastrigin],
        dims: vec![20, 200],
        budgets: vec![30, 100, 3000],
        strategies: DEFAULT_PORTFOLIO.iter().map(|n| Strategy::preset(n).unwrap()).collect(),
        reps: TOURNAMENT_REPS,
        seed: SEED,
    };
    let m = win_matrix(&run_experiment(&cfg).unwrap()).unwrap();
    let mtr = m.row_mean("MetaTuneRecentering").unwrap();
    let random = m.row_mean("Random").unwrap();
    let mid = m.row_mean("Midpoint").unwrap();
    let rank = m.index_of("MetaTuneRecentering").unwrap() + 1;
    (
        fixtures_ok && mtr > random && mtr > mid,
        format!(
            "fixtures {}; row means MetaTuneRecentering {mtr:.3} (rank {rank}/{}), Random {random:.3}, Midpoint {mid:.3}",
            if fixtures_ok { "ok" } else { "MISMATCH" },
            m.strategies.len()
        ),
    )
}

fn de_records(reps: usize) -> Vec<RegretRecord> {
    let configs: Vec<NamedDe> = ["MetaTuneRecentering", "Random"]
        .iter()
        .map(|n| NamedDe::from(DeConfig::new(400, PopulationRule::Sqrt, Strategy::preset(n).unwrap(), 0)))
        .collect();
    de_bench(&configs, &[(ObjectiveKind::Sphere, 20)], reps, SEED).unwrap()
}

fn de_initialisation() -> Outcome {
    let records = de_records(200);
    let c = paired_comparison(&records, "DE+Sqrt+MetaTuneRecentering", "DE+Sqrt+Random").unwrap();
    (
        c.ci_low > 0.5,
        format!("win rate {:.3} over {} pairs, Wilson [{:.3}, {:.3}]", c.win_rate, c.pairs, c.ci_low, c.ci_high),
    )
}

fn bytes(item: Artifact<'_>, format: Format) -> Vec<u8> {
    let mut buf = Vec::new();
    write_artifact(item, &mut buf, format).unwrap();
    buf
}

/// Every exported artifact of reduced criterion runs, in both formats.
fn all_exports() -> Vec<Vec<u8>> {
    let mut out = Vec::new();
    let curve = sweep(20, 100, vec![0.0, 0.5, 1.0, 1.5], vec![1.0], 5_000);
    let mut cfg = TheoryCheckConfig::new(1000, 100, 2_000, SEED);
    cfg.c1 = 0.5;
    let check = serde_json::to_vec(&theorem1_check(&cfg).unwrap()).unwrap();
    let exp = ExperimentConfig {
        objectives: vec![ObjectiveKind::Sphere, ObjectiveKind::Rastrigin],
        dims: vec![20],
        budgets: vec![30, 100],
        strategies: DEFAULT_PORTFOLIO.iter().map(|n| Strategy::preset(n).unwrap()).collect(),
        reps: 10,
        seed: SEED,
    };
    let records = run_experiment(&exp).unwrap();
    let matrix = win_matrix(&records).unwrap();
    let de = de_records(50);
    let de_matrix = win_matrix(&de).unwrap();
    for f in [Format::Csv, Format::Json] {
        out.push(bytes(Artifact::Curve(&curve), f));
        out.push(bytes(Artifact::Records(&records), f));
        out.push(bytes(Artifact::Matrix(&matrix), f));
        out.push(bytes(Artifact::Records(&de), f));
        out.push(bytes(Artifact::Matrix(&de_matrix), f));
    }
    out.push(check);
    out
}

fn determinism() -> Outcome {
    let pool = |n| rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap();
    let one = pool(1).install(all_exports);
    let four = pool(4).install(all_exports);
    let size: usize = one.iter().map(Vec::len).sum();
    (one == four, format!("{} artifacts, {size} bytes, 1 vs 4 threads", one.len()))
}
