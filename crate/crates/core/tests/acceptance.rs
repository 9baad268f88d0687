//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use irw_core::datasets::{gaussian_matrix, planted_fs_instance, synthetic_example_inputs};
use irw_core::engine::{check_kkt, run_irw};
use irw_core::linalg::{auto_delta, smoothed_term_value, smoothed_weight};
use irw_core::majorize::{scalar_gap, smoothed_gap, trace_power_gap, trace_rearrangement_gap};
use irw_core::problems::{
    fs_fit, solve_example, solve_proximal_inner, ExampleProblemData, ProximalProblemData,
};
use irw_core::selection::fit_ranking;
use irw_core::{
    CvOptions, DenseMatrix, IrwConfig, IrwProblem, Method, NormKind, SmoothedNormSpec,
    SyntheticSpec, Termination,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const P_VALUES: [f64; 7] = [0.1, 0.5, 0.8, 1.0, 1.2, 1.5, 2.0];

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn gaussian(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    gaussian_matrix(&SyntheticSpec::gaussian(rows, cols, seed)).unwrap()
}

fn example_data(p: f64, seed: u64) -> ExampleProblemData {
    let (a, y, b, z) = synthetic_example_inputs(20, 30, 30, 3, seed).unwrap();
    let delta = auto_delta(&[&a, &y, &b, &z]);
    let spec = SmoothedNormSpec::new(p, delta, NormKind::Entrywise).unwrap();
    ExampleProblemData::new(a, y, b, z, 1.0, 1.0, spec).unwrap()
}

fn proximal_data(p: f64, gammas: [f64; 3], seed: u64) -> ProximalProblemData {
    let v = gaussian(20, 5, seed);
    let spec = SmoothedNormSpec::new(p, auto_delta(&[&v]), NormKind::Entrywise).unwrap();
    ProximalProblemData::new(v, gammas[0], gammas[1], gammas[2], spec).unwrap()
}

fn descent_ok(trace: &irw_core::SolveTrace) -> bool {
    trace.termination != Termination::DescentViolation && trace.is_monotone(1e-10)
}

fn monotone_descent() -> Outcome {
    let start = Instant::now();
    let config = IrwConfig::default().with_max_iters(200);
    let mut failures = Vec::new();
    let mut runs = 0;
    for &p in &P_VALUES {
        let (_, t) = solve_example(&example_data(p, 0), &config).map_err(|e| e.to_string())?;
        runs += 1;
        if !descent_ok(&t) {
            failures.push(format!("example p={p}"));
        }

        let (_, t) = solve_proximal_inner(&proximal_data(p, [1.0; 3], 0), &config)
            .map_err(|e| e.to_string())?;
        runs += 1;
        if !descent_ok(&t) {
            failures.push(format!("proximal p={p}"));
        }

        let inst = planted_fs_instance(50, 60, 2, 5, 0).unwrap();
        let ds = &inst.dataset;
        let y = irw_core::datasets::encode_labels(&ds.labels, 2).unwrap();
        let spec = SmoothedNormSpec::new(p, auto_delta(&[&ds.x]), NormKind::Rowwise).unwrap();
        let (_, t) = fs_fit(&ds.x, &y, 1.0, spec, &config).map_err(|e| e.to_string())?;
        runs += 1;
        if !descent_ok(&t) {
            failures.push(format!("featsel p={p}"));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    if !failures.is_empty() {
        return Err(format!("non-monotone: {}", failures.join(", ")));
    }
    if secs >= 60.0 {
        return Err(format!("{runs} runs monotone but took {secs:.1}s (limit 60s)"));
    }
    Ok(format!("{runs} runs monotone in {secs:.1}s"))
}

fn one_more_change<P: IrwProblem>(problem: &P, x: P::Iterate) -> f64 {
    let config = IrwConfig::default().with_max_iters(1);
    let (_, t) = run_irw(problem, x, &config).unwrap();
    let (a, b) = (t.objectives[0], t.final_objective());
    (a - b).abs() / a.abs().max(f64::MIN_POSITIVE)
}

fn p2_one_shot() -> Outcome {
    let config = IrwConfig::default();
    let ex = example_data(2.0, 0);
    let (x, t) = solve_example(&ex, &config).map_err(|e| e.to_string())?;
    let ex_change = one_more_change(&ex, x);
    let px = proximal_data(2.0, [1.0; 3], 0);
    let (xp, tp) = solve_proximal_inner(&px, &config).map_err(|e| e.to_string())?;
    let px_change = one_more_change(&px, xp);
    let detail = format!(
        "example: {} update(s), further change {ex_change:.1e}; proximal: {} update(s), further change {px_change:.1e}",
        t.iters(),
        tp.iters()
    );
    if t.iters() == 1 && tp.iters() == 1 && ex_change < 1e-8 && px_change < 1e-8 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn iteration_bands() -> Outcome {
    let mut ok = true;
    let mut ex_counts = Vec::new();
    let mut px_counts = Vec::new();
    for &p in &P_VALUES {
        let cfg = IrwConfig::default().with_rel_tol(1e-6).with_max_iters(50);
        let (_, t) = solve_example(&example_data(p, 0), &cfg).map_err(|e| e.to_string())?;
        ok &= t.termination == Termination::ToleranceMet;
        ex_counts.push(format!("{p}:{}", t.iters()));

        let cfg = IrwConfig::default().with_rel_tol(1e-6).with_max_iters(40);
        let (_, t) = solve_proximal_inner(&proximal_data(p, [1.0; 3], 0), &cfg)
            .map_err(|e| e.to_string())?;
        ok &= t.termination == Termination::ToleranceMet;
        px_counts.push(format!("{p}:{}", t.iters()));
    }
    let detail = format!(
        "example iters [{}] (cap 50); proximal iters [{}] (cap 40)",
        ex_counts.join(" "),
        px_counts.join(" ")
    );
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn soft_threshold_oracle() -> Outcome {
    let config = IrwConfig { check_majorization: false, ..IrwConfig::default() }
        .with_max_iters(20_000)
        .with_rel_tol(0.0);
    let vs: Vec<f64> = (0..10).map(|i| -2.85 + 0.6 * i as f64 + 0.013 * i as f64).collect();
    let mut worst: f64 = 0.0;
    for j in 0..10 {
        let gamma = 0.2 + 0.45 * j as f64;
        let v = DenseMatrix::from_column_slice(10, 1, &vs);
        let spec = SmoothedNormSpec::new(1.0, 1e-12, NormKind::Entrywise).unwrap();
        let data = ProximalProblemData::new(v, gamma, 0.0, 0.0, spec).unwrap();
        let (x, _) = solve_proximal_inner(&data, &config).map_err(|e| e.to_string())?;
        for (i, &vi) in vs.iter().enumerate() {
            let expected = vi.signum() * (vi.abs() - gamma / 2.0).max(0.0);
            worst = worst.max((x[(i, 0)] - expected).abs());
        }
    }
    let detail = format!("100 points, max |error| {worst:.2e} (tol 1e-3)");
    if worst <= 1e-3 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Smoothed example objective for `d = 2`, `c = 1`, written out in scalars.
struct ScalarExample {
    a: Vec<[f64; 2]>,
    y: Vec<f64>,
    b: Vec<[f64; 2]>,
    z: Vec<f64>,
    mu1: f64,
    mu2: f64,
    p: f64,
    delta: f64,
}

impl ScalarExample {
    fn pow_half_p(&self, t: f64) -> f64 {
        if self.p == 1.0 {
            t.sqrt()
        } else if self.p == 0.5 {
            t.sqrt().sqrt()
        } else {
            t.powf(self.p / 2.0)
        }
    }

    fn value(&self, x1: f64, x2: f64) -> f64 {
        let mut total = 0.0;
        for (row, yi) in self.a.iter().zip(&self.y) {
            let r = row[0] * x1 + row[1] * x2 - yi;
            total += self.pow_half_p(r * r + self.delta);
        }
        for (row, zi) in self.b.iter().zip(&self.z) {
            let r = row[0] * x1 + row[1] * x2 - zi;
            total += self.mu1 * self.pow_half_p(r * r + self.delta);
        }
        // XXᵀ + δI has eigenvalues ||x||² + δ and δ.
        let spectral =
            self.pow_half_p(x1 * x1 + x2 * x2 + self.delta) + self.pow_half_p(self.delta);
        total + self.mu2 * spectral
    }

    fn grid_min(&self) -> (f64, f64, f64) {
        let steps = 6001usize;
        let coord = |i: usize| (i as f64 - 3000.0) * 1e-3;
        let threads = std::thread::available_parallelism().map_or(4, |n| n.get());
        let chunk = steps.div_ceil(threads);
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..threads)
                .map(|t| {
                    s.spawn(move || {
                        let mut best = (f64::INFINITY, 0.0, 0.0);
                        for i in (t * chunk)..((t + 1) * chunk).min(steps) {
                            let x1 = coord(i);
                            for j in 0..steps {
                                let x2 = coord(j);
                                let v = self.value(x1, x2);
                                if v < best.0 {
                                    best = (v, x1, x2);
                                }
                            }
                        }
                        best
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap())
                .fold((f64::INFINITY, 0.0, 0.0), |a, b| if b.0 < a.0 { b } else { a })
        })
    }
}

fn grid_search_oracle() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for (p, seed) in [(0.5, 11u64), (1.0, 12u64)] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
        let a = gaussian(4, 2, seed);
        let b = gaussian(3, 2, seed + 100);
        let noise = gaussian(7, 1, seed + 200) * 0.1;
        let x_true = DenseMatrix::from_column_slice(2, 1, &truth);
        let y = &a * &x_true + noise.rows(0, 4);
        let z = &b * &x_true + noise.rows(4, 3);
        let (mu1, mu2, delta) = (0.5, 0.5, 1e-6);

        let scalar = ScalarExample {
            a: a.row_iter().map(|r| [r[0], r[1]]).collect(),
            y: y.iter().copied().collect(),
            b: b.row_iter().map(|r| [r[0], r[1]]).collect(),
            z: z.iter().copied().collect(),
            mu1,
            mu2,
            p,
            delta,
        };
        let spec = SmoothedNormSpec::new(p, delta, NormKind::Entrywise).unwrap();
        let data = ExampleProblemData::new(a, y, b, z, mu1, mu2, spec).unwrap();
        let config = IrwConfig::default().with_max_iters(2000).with_rel_tol(1e-12);
        let (x, t) = solve_example(&data, &config).map_err(|e| e.to_string())?;
        let irw = t.final_objective();
        let consistent = (scalar.value(x[(0, 0)], x[(1, 0)]) - irw).abs() <= 1e-9 * (1.0 + irw);
        let (grid, g1, g2) = scalar.grid_min();
        ok &= consistent && irw <= grid + 1e-3;
        lines.push(format!(
            "p={p}: irw {irw:.6} at ({:.3},{:.3}), grid {grid:.6} at ({g1:.3},{g2:.3})",
            x[(0, 0)],
            x[(1, 0)]
        ));
    }
    if ok {
        Ok(lines.join("; "))
    } else {
        Err(lines.join("; "))
    }
}

fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> DenseMatrix {
    let g = DenseMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let scale = 10f64.powf(rng.random_range(-1.0..1.0));
    (&g * g.transpose() + DenseMatrix::identity(n, n) * 1e-2) * scale
}

fn majorization_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst_scalar = f64::INFINITY;
    for _ in 0..10_000 {
        let sigma = 10f64.powf(rng.random_range(-4.0..4.0));
        let p = rng.random_range(1e-3..=2.0);
        worst_scalar = worst_scalar.min(scalar_gap(sigma, p) / (1.0 + sigma));
    }
    let mut worst_matrix = f64::INFINITY;
    for _ in 0..1000 {
        let n = rng.random_range(1..=8);
        let mt = random_spd(&mut rng, n);
        let m = random_spd(&mut rng, n);
        let scale = 1.0 + mt.trace() + m.trace();
        let g = trace_rearrangement_gap(&mt, &m).map_err(|e| e.to_string())?;
        worst_matrix = worst_matrix.min(g / scale);
        for p in [0.3, 1.0, 1.7] {
            let g = trace_power_gap(&mt, &m, p).map_err(|e| e.to_string())?;
            worst_matrix = worst_matrix.min(g / scale);
            let at = DenseMatrix::from_fn(n + 1, n, |_, _| rng.random_range(-1.0..1.0));
            let a = DenseMatrix::from_fn(n + 1, n, |_, _| rng.random_range(-1.0..1.0));
            let g = smoothed_gap(&at, &a, 1e-3, p).map_err(|e| e.to_string())?;
            worst_matrix = worst_matrix.min(g / (1.0 + at.norm_squared() + a.norm_squared()));
        }
    }
    let detail = format!(
        "1e4 scalar samples, min scaled gap {worst_scalar:.2e}; 1e3 matrix pairs, min scaled gap {worst_matrix:.2e}"
    );
    if worst_scalar >= -1e-9 && worst_matrix >= -1e-9 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn gradient_consistency() -> Outcome {
    let mut worst: f64 = 0.0;
    let h = 1e-6;
    for (k, kind) in [NormKind::Entrywise, NormKind::Rowwise, NormKind::Spectral].into_iter().enumerate() {
        for (s, &p) in [0.3, 1.0, 1.5, 2.0].iter().enumerate() {
            let g = gaussian(5, 3, 300 + 10 * k as u64 + s as u64);
            let spec = SmoothedNormSpec::new(p, 1e-2, kind).unwrap();
            let analytic = smoothed_weight(&g, &spec).gradient(&g);
            let fd = DenseMatrix::from_fn(5, 3, |i, j| {
                let mut plus = g.clone();
                let mut minus = g.clone();
                plus[(i, j)] += h;
                minus[(i, j)] -= h;
                (smoothed_term_value(&plus, &spec) - smoothed_term_value(&minus, &spec)) / (2.0 * h)
            });
            worst = worst.max((&fd - &analytic).norm() / analytic.norm());
        }
    }
    let detail = format!("3 kinds x 4 p, max relative error {worst:.2e} (tol 1e-5)");
    if worst <= 1e-5 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn kkt_at_convergence() -> Outcome {
    let config = IrwConfig { check_majorization: false, ..IrwConfig::default() }
        .with_max_iters(20_000)
        .with_rel_tol(1e-12);
    let mut ok = true;
    let mut parts = Vec::new();
    for &p in &P_VALUES {
        let data = example_data(p, 0);
        let x0 = data.initial_point().map_err(|e| e.to_string())?;
        let g0 = data.gradient(&x0).norm();
        let (x, t) = run_irw(&data, x0, &config).map_err(|e| e.to_string())?;
        let r = check_kkt(&data, &x).unwrap();
        let bound = 1e-5 * (1.0 + g0);
        ok &= r <= bound;
        parts.push(format!("{p}:{:.1e}/{:.1e}@{}", r, bound, t.iters()));
    }
    let detail = format!("residual/bound@iters [{}]", parts.join(" "));
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn planted_recovery() -> Outcome {
    let inst = planted_fs_instance(50, 60, 2, 5, 0).map_err(|e| e.to_string())?;
    let train: Vec<usize> = (0..inst.dataset.n_samples()).collect();
    let ranking = fit_ranking(
        &inst.dataset,
        &train,
        Method::IrwFs { p: 0.5, gamma: 1.0 },
        &CvOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    let top = ranking.top(10);
    let hits = inst.signal.iter().filter(|s| top.contains(s)).count();
    let detail = format!("{hits}/5 signal features {:?} in top 10 {top:?}", inst.signal);
    if hits >= 4 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn run_cli(args: &[&str], out: &Path) -> Result<(), String> {
    let cargo = std::env::var("CARGO").unwrap_or_else(|_| "cargo".into());
    let status = Command::new(cargo)
        .current_dir(workspace_root())
        .args(["run", "-q", "-p", "irw-cli", "--bin", "irw", "--"])
        .args(args)
        .arg("--out")
        .arg(out)
        .status()
        .map_err(|e| format!("cannot launch cargo: {e}"))?;
    if status.success() {
        Ok(())
    } else {
        Err(format!("`irw {}` exited with {status}", args.join(" ")))
    }
}

fn dir_contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .map(|e| (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap()))
        .collect();
    files.sort();
    files
}

fn cli_determinism() -> Outcome {
    let commands: [&[&str]; 3] = [
        &["example", "--synthetic", "20,30,30,3", "--seed", "0"],
        &["proximal", "--seed", "0"],
        &["featsel", "--planted", "50,60,2,5", "--seed", "0", "--folds", "3"],
    ];
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut total = 0;
    for (i, args) in commands.iter().enumerate() {
        let first = tmp.path().join(format!("{i}-a"));
        let second = tmp.path().join(format!("{i}-b"));
        run_cli(args, &first)?;
        run_cli(args, &second)?;
        let (a, b) = (dir_contents(&first), dir_contents(&second));
        if a.is_empty() || a != b {
            return Err(format!("`irw {}` outputs differ between runs", args.join(" ")));
        }
        total += a.len();
    }
    Ok(format!("3 subcommands run twice, {total} files byte-identical"))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("monotone descent, 3 problems x 7 p", monotone_descent),
        ("p=2 terminates after one update", p2_one_shot),
        ("iteration-count bands", iteration_bands),
        ("soft-threshold oracle", soft_threshold_oracle),
        ("grid-search oracle", grid_search_oracle),
        ("majorization inequalities", majorization_suite),
        ("finite-difference gradients", gradient_consistency),
        ("KKT residual at convergence", kkt_at_convergence),
        ("planted feature recovery", planted_recovery),
        ("CLI determinism", cli_determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name} ({secs:.1}s): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name} ({secs:.1}s): {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
