use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use antidote_core::antidote::{
    algorithm1, algorithm2, compare_vanilla, vanilla_cost, AntidoteConfig, AntidoteResult,
    ClusteringSpec, Combination, Comparison, RUN_CSV_HEADER,
};
use antidote_core::clustering::nearest;
use antidote_core::datasets::{
    load_csv, standardize, subsample, two_group_line, BlobConfig, Dataset,
};
use antidote_core::fairness::FairnessSpec;
use antidote_core::metrics::QualityReport;
use antidote_core::Matrix;
use serde::Serialize;

use crate::args::{
    Alpha, Command, DataArgs, FixtureArgs, FixtureKind, MetricsArgs, RunArgs, SearchArgs, SweepArgs,
};
use crate::error::{CliError, CliResult};

pub fn dispatch(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Run(a) => run(&a),
        Command::SweepLambda(a) => sweep_lambda(&a),
        Command::Metrics(a) => metrics(&a),
        Command::GenFixture(a) => gen_fixture(&a),
    }
}

fn load(data: &DataArgs, seed: u64) -> CliResult<Dataset> {
    let loaded = load_csv(&data.data, &data.group_column, data.features.as_deref())?;
    if loaded.dropped_rows > 0 {
        eprintln!(
            "note: dropped {} row(s) with missing values from {}",
            loaded.dropped_rows,
            data.data.display()
        );
    }
    let mut ds = loaded.dataset;
    if data.standardize {
        ds = standardize(&ds)?;
    }
    if let Some(m) = data.subsample {
        ds = subsample(&ds, m, seed)?;
    }
    Ok(ds)
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    std::fs::write(path, bytes).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match out {
        Some(p) => write_file(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Appends `rows` to a CSV file, writing `header` first if the file is new
/// or empty.
fn append_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
    let write_err = |source| CliError::Write {
        path: path.to_path_buf(),
        source,
    };
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(write_err)?;
    let fresh = file.metadata().map_err(write_err)?.len() == 0;
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(file);
    let csv_err = |source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    };
    if fresh {
        w.write_record(header).map_err(csv_err)?;
    }
    for r in rows {
        w.write_record(r).map_err(csv_err)?;
    }
    w.flush().map_err(write_err)
}

fn resolve_alpha(
    alpha: Alpha,
    ds: &Dataset,
    clustering: &ClusteringSpec,
    combination: Combination,
    cfg: &AntidoteConfig,
) -> CliResult<f64> {
    Ok(match alpha {
        Alpha::Value(a) => a,
        Alpha::Vanilla => vanilla_cost(ds, clustering, combination.notion(), cfg)?,
    })
}

/// Runs the driver matching `combination` and the vanilla comparison.
fn antidote(
    ds: &Dataset,
    combination: Combination,
    k: usize,
    lambda: f64,
    search: &SearchArgs,
) -> CliResult<(AntidoteConfig, AntidoteResult, Comparison)> {
    let clustering = combination.clustering(k, lambda);
    let mut cfg = search.to_config(0.0, lambda);
    cfg.alpha = resolve_alpha(search.alpha, ds, &clustering, combination, &cfg)?;
    let fairness = FairnessSpec::new(combination.notion(), cfg.alpha)?;
    let result = match combination {
        Combination::SonSocial => algorithm1(ds, &cfg)?,
        _ => algorithm2(ds, &clustering, &fairness, &cfg)?,
    };
    let comparison = compare_vanilla(ds, &clustering, &fairness, &result, cfg.seed)?;
    Ok((cfg, result, comparison))
}

#[derive(Serialize)]
struct RunOutput<'a> {
    combination: String,
    dataset: &'a str,
    data: PathBuf,
    k: Option<usize>,
    lambda: Option<f64>,
    n: usize,
    config: &'a AntidoteConfig,
    result: &'a AntidoteResult,
    comparison: &'a Comparison,
}

fn dataset_name(data: &DataArgs, explicit: Option<&str>) -> String {
    explicit.map(str::to_string).unwrap_or_else(|| {
        data.data
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "data".to_string())
    })
}

fn run(a: &RunArgs) -> CliResult<()> {
    let son = a.combination == Combination::SonSocial;
    if !son && a.k < 2 {
        return Err(CliError::usage(format!(
            "k must be at least 2, got {}",
            a.k
        )));
    }
    let ds = load(&a.data, a.search.seed)?;
    let (cfg, result, comparison) = antidote(&ds, a.combination, a.k, a.lambda, &a.search)?;
    let name = dataset_name(&a.data, a.dataset_name.as_deref());
    let k = (!son).then_some(a.k);

    let out = RunOutput {
        combination: a.combination.to_string(),
        dataset: &name,
        data: a.data.data.clone(),
        k,
        lambda: son.then_some(a.lambda),
        n: ds.len(),
        config: &cfg,
        result: &result,
        comparison: &comparison,
    };
    if let Some(p) = &a.out_csv {
        let row = comparison.csv_row(&name, k, cfg.seed);
        append_csv(p, &RUN_CSV_HEADER, &[row])?;
    }
    if a.out_json.is_some() || a.out_csv.is_none() {
        write_json(&out, a.out_json.as_deref())?;
    }
    eprintln!(
        "{}: F {:.4} -> {:.4}, |V| = {}, {}",
        a.combination,
        result.fairness_before,
        result.fairness_after,
        result.v.rows(),
        result.status
    );
    Ok(())
}

fn lambda_grid(a: &SweepArgs) -> CliResult<Vec<f64>> {
    let grid = match &a.lambdas {
        Some(l) => l.clone(),
        None => {
            if a.lambda_steps == 0 {
                return Err(CliError::usage("--lambda-steps must be at least 1"));
            }
            if a.lambda_steps == 1 {
                vec![a.lambda_min]
            } else {
                let h = (a.lambda_max - a.lambda_min) / (a.lambda_steps - 1) as f64;
                (0..a.lambda_steps)
                    .map(|i| a.lambda_min + i as f64 * h)
                    .collect()
            }
        }
    };
    if grid.is_empty() || grid.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
        return Err(CliError::usage("λ values must be finite and non-negative"));
    }
    Ok(grid)
}

pub const SWEEP_CSV_HEADER: [&str; 4] = ["lambda", "F_vanilla", "F_antidote", "difference"];

fn sweep_lambda(a: &SweepArgs) -> CliResult<()> {
    let grid = lambda_grid(a)?;
    let ds = load(&a.data, a.search.seed)?;
    let mut rows = Vec::with_capacity(grid.len());
    for &lambda in &grid {
        let clustering = ClusteringSpec::Son { lambda };
        let mut cfg = a.search.to_config(0.0, lambda);
        cfg.alpha = resolve_alpha(
            a.search.alpha,
            &ds,
            &clustering,
            Combination::SonSocial,
            &cfg,
        )?;
        let r = algorithm1(&ds, &cfg)?;
        rows.push(vec![
            format!("{lambda:.6}"),
            format!("{:.6e}", r.fairness_before),
            format!("{:.6e}", r.fairness_after),
            format!("{:.6e}", r.fairness_before - r.fairness_after),
        ]);
    }
    match &a.out {
        Some(p) => {
            if p.exists() {
                std::fs::remove_file(p).map_err(|source| CliError::Write {
                    path: p.clone(),
                    source,
                })?;
            }
            append_csv(p, &SWEEP_CSV_HEADER, &rows)
        }
        None => {
            let mut w = csv::Writer::from_writer(std::io::stdout());
            let stdout = PathBuf::from("<stdout>");
            let err = |source| CliError::Csv {
                path: stdout.clone(),
                source,
            };
            w.write_record(SWEEP_CSV_HEADER).map_err(err)?;
            for r in &rows {
                w.write_record(r).map_err(err)?;
            }
            w.flush().map_err(|source| CliError::Write {
                path: stdout.clone(),
                source,
            })
        }
    }
}

fn open_csv(path: &Path) -> CliResult<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file))
}

/// One string column of a headered CSV.
fn read_column(path: &Path, column: &str) -> CliResult<Vec<String>> {
    let mut r = open_csv(path)?;
    let csv_err = |source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let headers = r.headers().map_err(csv_err)?.clone();
    let idx = headers
        .iter()
        .position(|h| h == column)
        .ok_or_else(|| CliError::usage(format!("{} has no column `{column}`", path.display())))?;
    r.records()
        .map(|rec| Ok(rec.map_err(csv_err)?.get(idx).unwrap_or("").to_string()))
        .collect()
}

fn read_matrix(path: &Path) -> CliResult<Matrix> {
    let mut r = open_csv(path)?;
    let csv_err = |source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let cols = r.headers().map_err(csv_err)?.len();
    let mut data = Vec::new();
    let mut rows = 0;
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        for cell in rec.iter() {
            let v: f64 = cell.parse().map_err(|_| {
                CliError::usage(format!("{}: `{cell}` is not a number", path.display()))
            })?;
            data.push(v);
        }
        rows += 1;
    }
    Ok(Matrix::from_vec(rows, cols, data)?)
}

/// Label strings to dense ids in order of first appearance.
fn encode_labels(raw: &[String]) -> Vec<usize> {
    let mut ids: HashMap<&str, usize> = HashMap::new();
    raw.iter()
        .map(|l| {
            let next = ids.len();
            *ids.entry(l.as_str()).or_insert(next)
        })
        .collect()
}

fn metrics(a: &MetricsArgs) -> CliResult<()> {
    let mut data = DataArgs {
        data: a.data.data.clone(),
        group_column: a.data.group_column.clone(),
        features: a.data.features.clone(),
        standardize: a.data.standardize,
        subsample: None,
    };
    if a.data.subsample.is_some() {
        return Err(CliError::usage(
            "metrics does not subsample; labels must align with every row",
        ));
    }
    if let (Some(col), None) = (&a.label_column, &data.features) {
        let mut r = open_csv(&data.data)?;
        let headers = r
            .headers()
            .map_err(|source| CliError::Csv {
                path: data.data.clone(),
                source,
            })?
            .clone();
        data.features = Some(
            headers
                .iter()
                .filter(|h| *h != col && *h != data.group_column)
                .map(str::to_string)
                .collect(),
        );
    }
    let loaded = load_csv(&data.data, &data.group_column, data.features.as_deref())?;
    if loaded.dropped_rows > 0 {
        return Err(CliError::usage(format!(
            "{} has {} row(s) with missing values; labels cannot be aligned",
            data.data.display(),
            loaded.dropped_rows
        )));
    }
    let ds = if data.standardize {
        standardize(&loaded.dataset)?
    } else {
        loaded.dataset
    };
    let x = ds.points();

    let labels = if let Some(col) = &a.label_column {
        encode_labels(&read_column(&data.data, col)?)
    } else if let Some(path) = &a.labels {
        encode_labels(&read_column(path, "label")?)
    } else if let Some(path) = &a.centers {
        let mu = read_matrix(path)?;
        if mu.cols() != x.cols() || mu.rows() == 0 {
            return Err(CliError::usage(format!(
                "{} has {} column(s) and {} row(s); expected {} column(s)",
                path.display(),
                mu.cols(),
                mu.rows(),
                x.cols()
            )));
        }
        x.row_iter().map(|p| nearest(p, &mu).0).collect()
    } else {
        return Err(CliError::usage(
            "give one of --label-column, --labels or --centers",
        ));
    };
    if labels.len() != x.rows() {
        return Err(CliError::usage(format!(
            "{} labels for {} rows",
            labels.len(),
            x.rows()
        )));
    }
    let report = QualityReport::compute(x, &labels)?;
    write_json(&report, a.out.as_deref())
}

fn gen_fixture(a: &FixtureArgs) -> CliResult<()> {
    let (ds, blob_labels) = match a.kind {
        FixtureKind::Blobs => {
            let cfg = BlobConfig {
                n: a.n,
                d: a.d,
                groups: a.groups,
                blobs: a.blobs.unwrap_or(a.groups),
                skew: a.skew,
                spread: a.spread,
                std: a.std,
                seed: a.seed,
            };
            let b = cfg.generate()?;
            (b.dataset, Some(b.blob_labels))
        }
        FixtureKind::Line => (two_group_line(a.left, a.right, a.step, a.gap)?, None),
    };
    let blob_labels = blob_labels.filter(|_| a.blob_labels);
    let x = ds.points();
    let mut header: Vec<String> = (0..x.cols()).map(|c| format!("x{c}")).collect();
    header.push("group".into());
    if blob_labels.is_some() {
        header.push("blob".into());
    }
    let names: Vec<String> = match ds.group_names() {
        Some(n) => n.to_vec(),
        None => (0..ds.n_groups()).map(|j| format!("g{j}")).collect(),
    };
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        let err = |source| CliError::Csv {
            path: a.out.clone(),
            source,
        };
        w.write_record(&header).map_err(err)?;
        for (i, row) in x.row_iter().enumerate() {
            let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            rec.push(names[ds.groups()[i]].clone());
            if let Some(b) = &blob_labels {
                rec.push(b[i].to_string());
            }
            w.write_record(&rec).map_err(err)?;
        }
        w.flush().map_err(|source| CliError::Write {
            path: a.out.clone(),
            source,
        })?;
    }
    let mut f = std::fs::File::create(&a.out).map_err(|source| CliError::Write {
        path: a.out.clone(),
        source,
    })?;
    f.write_all(&buf).map_err(|source| CliError::Write {
        path: a.out.clone(),
        source,
    })
}
