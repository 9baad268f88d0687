use std::collections::BTreeMap;
use std::str::FromStr;

use anyhow::anyhow;
use rayon::prelude::*;
use serde::Serialize;

use irw_core::datasets::{
    encode_labels, gaussian_matrix, load_csv, planted_fs_instance, synthetic_example_inputs,
};
use irw_core::linalg::auto_delta;
use irw_core::problems::{
    solve_example, solve_proximal_inner, solve_proximal_outer, ExampleProblemData,
    LeastSquaresLoss, ProxOuterConfig, ProximalProblemData,
};
use irw_core::selection::{cross_validate, fit_ranking, write_reports_csv};
use irw_core::{
    Classifier, CvOptions, CvReport, DenseMatrix, Error, IrwConfig, LabelColumn, LabeledDataset,
    Method, NormKind, SmoothedNormSpec, SolveTrace, SyntheticSpec,
};

use crate::output::{file_digest, trace_file_name, trajectory_csv, OutDir, RunManifest};
use crate::{ClassifierArg, CommonArgs, DataArgs, Delta, ExampleArgs, FeatselArgs, ProximalArgs};

pub enum Failure {
    Usage(anyhow::Error),
    Solver(anyhow::Error),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Solver(_) => 1,
            Failure::Usage(_) => 2,
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Usage(e) | Failure::Solver(e) => e,
        }
    }
}

type Outcome = Result<(), Failure>;

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

fn io(e: impl Into<anyhow::Error>) -> Failure {
    // Output problems are environmental, not solver faults; report them as
    // usage errors so scripts can tell them apart from divergence.
    Failure::Usage(e.into())
}

fn gaussian(rows: usize, cols: usize, seed: u64) -> Result<DenseMatrix, Failure> {
    gaussian_matrix(&SyntheticSpec::gaussian(rows, cols, seed)).map_err(usage)
}

fn load(data: &DataArgs, standardize: bool) -> Result<Option<LabeledDataset>, Failure> {
    let Some(path) = &data.data else { return Ok(None) };
    let label = LabelColumn::from_str(&data.label_column).expect("infallible");
    load_csv(path, &label, !data.no_header, standardize)
        .map(Some)
        .map_err(|e| usage(anyhow!(e).context(format!("loading {}", path.display()))))
}

fn resolve_delta(delta: Delta, data: &[&DenseMatrix]) -> f64 {
    match delta {
        Delta::Auto => auto_delta(data),
        Delta::Fixed(v) => v,
    }
}

fn write_manifest<F: Serialize>(
    out: &OutDir,
    subcommand: &str,
    flags: &F,
    common: &CommonArgs,
    data: &DataArgs,
) -> Outcome {
    let mut inputs = BTreeMap::new();
    if let Some(path) = &data.data {
        inputs.insert(path.display().to_string(), file_digest(path).map_err(usage)?);
    }
    let manifest = RunManifest {
        subcommand,
        flags,
        seed: common.seed,
        version: env!("CARGO_PKG_VERSION"),
        inputs,
    };
    out.write_json("manifest.json", &manifest).map_err(io)?;
    Ok(())
}

/// Writes every finished trace plus the combined trajectories. A failed run
/// leaves its partial trace behind and turns the whole command into a solver
/// failure.
fn write_traces(
    out: &OutDir,
    runs: Vec<(f64, irw_core::Result<SolveTrace>)>,
    timings: bool,
) -> Outcome {
    let mut done = Vec::new();
    let mut failures = Vec::new();
    for (p, result) in runs {
        match result {
            Ok(trace) => {
                out.write(&trace_file_name(p), trace.to_json(timings).as_bytes()).map_err(io)?;
                println!(
                    "p={p}: {} iterations, objective {:.6e}, {}",
                    trace.iters(),
                    trace.final_objective(),
                    trace.termination.as_str()
                );
                done.push((p, trace));
            }
            Err(Error::Divergence { iteration, trace }) => {
                out.write(&format!("trace_p{p}.failed.json"), trace.to_json(timings).as_bytes())
                    .map_err(io)?;
                failures.push(format!("p={p}: objective non-finite at iteration {iteration}"));
            }
            Err(e) => failures.push(format!("p={p}: {e}")),
        }
    }
    let refs: Vec<(f64, &SolveTrace)> = done.iter().map(|(p, t)| (*p, t)).collect();
    out.write("objectives.csv", trajectory_csv(&refs, false).as_bytes()).map_err(io)?;
    out.write("log10_objectives.csv", trajectory_csv(&refs, true).as_bytes()).map_err(io)?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Solver(anyhow!(failures.join("; "))))
    }
}

pub fn example(args: &ExampleArgs) -> Outcome {
    let seed = args.common.seed;
    let (a, y, b, z) = match load(&args.data, !args.data.no_standardize)? {
        Some(ds) => {
            let a = ds.x.transpose();
            let y = encode_labels(&ds.labels, ds.class_count).map_err(usage)?;
            let (n, d, c) = (a.nrows(), a.ncols(), y.ncols());
            (a, y, gaussian(n, d, seed)?, gaussian(n, c, seed.wrapping_add(1))?)
        }
        None => {
            let dims = &args.synthetic.as_ref().expect("clap requires --synthetic or --data").0;
            synthetic_example_inputs(dims[0], dims[1], dims[2], dims[3], seed).map_err(usage)?
        }
    };
    let delta = resolve_delta(args.common.delta, &[&a, &y, &b, &z]);
    let config = IrwConfig {
        record_kkt: args.kkt,
        ..IrwConfig::default().with_max_iters(args.max_iters).with_rel_tol(args.rel_tol)
    };
    config.validate().map_err(usage)?;
    if !(args.mu1 >= 0.0 && args.mu2 >= 0.0) {
        return Err(usage(anyhow!("--mu1 and --mu2 must be non-negative")));
    }

    let out = OutDir::create(&args.common.out).map_err(io)?;
    write_manifest(&out, "example", args, &args.common, &args.data)?;
    let runs = args
        .p_list
        .0
        .par_iter()
        .map(|&p| {
            let run = SmoothedNormSpec::new(p, delta, NormKind::Entrywise)
                .and_then(|spec| {
                    ExampleProblemData::new(a.clone(), y.clone(), b.clone(), z.clone(), args.mu1, args.mu2, spec)
                })
                .and_then(|data| solve_example(&data, &config))
                .map(|(_, trace)| trace);
            (p, run)
        })
        .collect();
    write_traces(&out, runs, args.common.timings)
}

pub fn proximal(args: &ProximalArgs) -> Outcome {
    let seed = args.common.seed;
    let dataset = load(&args.data, !args.data.no_standardize)?;
    let config = IrwConfig::default().with_max_iters(args.max_iters).with_rel_tol(args.rel_tol);
    config.validate().map_err(usage)?;
    let [g1, g2, g3] = args.gammas.0;

    let out = OutDir::create(&args.common.out).map_err(io)?;
    let runs: Vec<(f64, irw_core::Result<SolveTrace>)> = if args.outer {
        if args.outer_iters == 0 {
            return Err(usage(anyhow!("--outer-iters must be at least 1")));
        }
        let (a, y) = match &dataset {
            Some(ds) => (
                ds.x.transpose(),
                encode_labels(&ds.labels, ds.class_count).map_err(usage)?,
            ),
            None => {
                let dims = args.synthetic.as_ref().map_or(vec![20, 5], |d| d.0.clone());
                (gaussian(2 * dims[0], dims[0], seed)?, gaussian(2 * dims[0], dims[1], seed.wrapping_add(1))?)
            }
        };
        let delta = resolve_delta(args.common.delta, &[&a, &y]);
        let loss = LeastSquaresLoss { a: a.clone(), y: y.clone() };
        let cfg = ProxOuterConfig {
            outer_iters: args.outer_iters,
            rel_tol: args.rel_tol,
            inner: config.clone(),
            ..ProxOuterConfig::default()
        };
        write_manifest(&out, "proximal", args, &args.common, &args.data)?;
        args.p_list
            .0
            .par_iter()
            .map(|&p| {
                let x0 = DenseMatrix::zeros(a.ncols(), y.ncols());
                let run = SmoothedNormSpec::new(p, delta, NormKind::Entrywise)
                    .and_then(|spec| solve_proximal_outer(&loss, x0, [g1, g2, g3], spec, &cfg))
                    .map(|(_, trace)| trace);
                (p, run)
            })
            .collect()
    } else {
        let v = match &dataset {
            Some(ds) => ds.x.transpose(),
            None => {
                let dims = args.synthetic.as_ref().map_or(vec![20, 5], |d| d.0.clone());
                gaussian(dims[0], dims[1], seed)?
            }
        };
        let delta = resolve_delta(args.common.delta, &[&v]);
        write_manifest(&out, "proximal", args, &args.common, &args.data)?;
        args.p_list
            .0
            .par_iter()
            .map(|&p| {
                let run = SmoothedNormSpec::new(p, delta, NormKind::Entrywise)
                    .and_then(|spec| ProximalProblemData::new(v.clone(), g1, g2, g3, spec))
                    .and_then(|data| solve_proximal_inner(&data, &config))
                    .map(|(_, trace)| trace);
                (p, run)
            })
            .collect()
    };
    write_traces(&out, runs, args.common.timings)
}

#[derive(Serialize)]
struct Selection {
    method: String,
    /// All features, most relevant first, ranked on the full dataset.
    indices: Vec<usize>,
    scores: Vec<f64>,
}

fn report_file_name(method: &Method) -> String {
    match method {
        Method::IrwFs { p, .. } => format!("cv_irw-fs_p{p}.json"),
        Method::Fisher => "cv_fisher.json".to_string(),
    }
}

pub fn featsel(args: &FeatselArgs) -> Outcome {
    let ds = match load(&args.data, false)? {
        Some(ds) => ds,
        None => {
            let dims = &args.planted.as_ref().expect("clap requires --planted or --data").0;
            planted_fs_instance(dims[0], dims[1], dims[2], dims[3], args.common.seed)
                .map_err(usage)?
                .dataset
        }
    };
    let d = ds.n_features();
    let counts = match &args.counts {
        Some(c) => c.clone(),
        None => {
            let c: Vec<usize> = (1..=10).map(|k| 10 * k).filter(|&k| k <= d).collect();
            if c.is_empty() {
                vec![d]
            } else {
                c
            }
        }
    };
    if let Some(bad) = counts.iter().find(|&&k| k == 0 || k > d) {
        return Err(usage(anyhow!("feature count {bad} outside 1..={d}")));
    }
    if args.folds as usize > ds.n_samples() {
        return Err(usage(anyhow!("{} folds for {} samples", args.folds, ds.n_samples())));
    }
    if !(args.gamma > 0.0) || args.iters == 0 {
        return Err(usage(anyhow!("--gamma must be positive and --iters at least 1")));
    }
    let options = CvOptions {
        folds: args.folds as usize,
        seed: args.common.seed,
        repeats: args.repeats as usize,
        standardize: !args.data.no_standardize,
        iters: args.iters,
        classifier: match args.classifier {
            ClassifierArg::NearestCentroid => Classifier::NearestCentroid,
            ClassifierArg::ModelLinear => Classifier::ModelLinear,
        },
    };

    let out = OutDir::create(&args.common.out).map_err(io)?;
    write_manifest(&out, "featsel", args, &args.common, &args.data)?;

    let mut methods: Vec<Method> =
        args.p_list.0.iter().map(|&p| Method::IrwFs { p, gamma: args.gamma }).collect();
    methods.push(Method::Fisher);
    let all: Vec<usize> = (0..ds.n_samples()).collect();
    let results: Vec<irw_core::Result<(CvReport, Selection)>> = methods
        .par_iter()
        .map(|&method| {
            let report = cross_validate(&ds, method, &counts, &options)?;
            let ranking = fit_ranking(&ds, &all, method, &options)?;
            let selection =
                Selection { method: method.name(), indices: ranking.indices, scores: ranking.scores };
            Ok((report, selection))
        })
        .collect();

    let mut reports = Vec::new();
    let mut selections = Vec::new();
    for (method, result) in methods.iter().zip(results) {
        let (report, selection) =
            result.map_err(|e| Failure::Solver(anyhow!(e).context(method.name())))?;
        out.write(&report_file_name(method), format!("{}\n", report.to_json()).as_bytes())
            .map_err(io)?;
        let summary: Vec<String> = report
            .feature_counts
            .iter()
            .zip(&report.mean_accuracy)
            .map(|(k, a)| format!("{k}:{a:.3}"))
            .collect();
        println!("{}: {}", report.method, summary.join(" "));
        reports.push(report);
        selections.push(selection);
    }
    let mut csv = Vec::new();
    write_reports_csv(&reports, &mut csv).map_err(io)?;
    out.write("accuracy.csv", &csv).map_err(io)?;
    out.write_json("selected_features.json", &selections).map_err(io)?;
    Ok(())
}
