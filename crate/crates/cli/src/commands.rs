use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rann::budgeted_index::{admissible_distance_exact, admissible_nn, is_light_weighted, EXACT_MAX_DIM};
use rann::codec::{index_kind, IndexKind};
use rann::ds_lsh::hamming;
use rann::eval::{
    gen_hamming_planted, gen_planted, gen_planted_budgeted, lemma_suite, oracle_answers, BudgetedPlantedParams,
    CostProfile, GroundTruth, LemmaConfig, PlantedParams,
};
use rann::norms::{is_light, sub, LightHeavyParams};
use rann::robust_index::SubqueryStat;
use rann::{
    BackendKind, BudgetedConfig, BudgetedIndex, Dataset, DsLshConfig, DsLshIndex, LshParams, NormParams,
    RobustIndex, RobustIndexConfig, RobustMode,
};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::args::*;
use crate::dataset_file::{parse_costs, read_costs, write_costs, DatasetFile};
use crate::error::CliError;
use crate::records::{read_jsonl, write_jsonl, BenchSummary, QueryRecord, TruthRecord};

type Result<T, E = CliError> = std::result::Result<T, E>;

pub const DATA_FILE: &str = "data.rann";
pub const QUERIES_FILE: &str = "queries.rann";
pub const TRUTH_FILE: &str = "truth.jsonl";
pub const COSTS_FILE: &str = "costs.csv";

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(a) => gen(&a),
        Command::Build(a) => build(&a),
        Command::Query(a) => query(&a),
        Command::Oracle(a) => oracle(&a),
        Command::Lemmas(a) => lemmas(&a),
        Command::Bench(a) => bench(&a),
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(fs::File::create(p).map_err(|e| CliError::io(p, e))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn truth_records(truth: &[GroundTruth]) -> Vec<TruthRecord> {
    truth
        .iter()
        .enumerate()
        .map(|(j, t)| TruthRecord {
            query: j,
            neighbor: t.neighbor,
            clean_distance: t.clean_distance,
            corrupted: t.corrupted.clone(),
        })
        .collect()
}

fn gen(a: &GenArgs) -> Result<()> {
    let uses_k = a.mode == Mode::Robust || (a.mode == Mode::Budgeted && a.costs_profile == CostsProfile::Uniform);
    if uses_k && a.k >= a.d {
        return Err(CliError::usage(format!("--k ({}) must be below --d ({})", a.k, a.d)));
    }
    let noise_mag = a.noise.unwrap_or(10.0 * a.r);
    let path = |name: &str| -> PathBuf { a.out.join(name) };
    let (data, queries, truth) = match a.mode {
        Mode::Robust => {
            let inst = gen_planted(&PlantedParams {
                n: a.n,
                d: a.d,
                queries: a.queries,
                k: a.k,
                r: a.r,
                noise_mag,
                p: a.p,
                seed: a.seed,
            })?;
            (DatasetFile::Real(inst.data), DatasetFile::Real(inst.queries), truth_records(&inst.truth))
        }
        Mode::Budgeted => {
            let profile = match a.costs_profile {
                CostsProfile::Uniform => CostProfile::Uniform { k: a.k },
                CostsProfile::Random => CostProfile::Random { lo: a.cost_lo, hi: a.cost_hi },
                CostsProfile::File => {
                    let file = a
                        .costs_file
                        .as_deref()
                        .ok_or_else(|| CliError::usage("--costs-profile file needs --costs-file"))?;
                    let text = fs::read_to_string(file).map_err(|e| CliError::io(file, e))?;
                    CostProfile::Given { costs: parse_costs(&text).map_err(|e| e.context(file))? }
                }
            };
            let inst = gen_planted_budgeted(&BudgetedPlantedParams {
                n: a.n,
                d: a.d,
                queries: a.queries,
                profile,
                r: a.r,
                noise_mag,
                seed: a.seed,
            })?;
            fs::create_dir_all(&a.out).map_err(|e| CliError::io(&a.out, e))?;
            write_costs(&path(COSTS_FILE), &inst.costs)?;
            (DatasetFile::Real(inst.data), DatasetFile::Real(inst.queries), truth_records(&inst.truth))
        }
        Mode::Dslsh => {
            if !(a.r >= 1.0 && a.r.fract() == 0.0) {
                return Err(CliError::usage(format!("--r must be a positive bit count in dslsh mode, got {}", a.r)));
            }
            let inst = gen_hamming_planted(a.n, a.d, a.queries, a.r as usize, a.seed)?;
            let truth = (0..inst.planted.len())
                .map(|j| TruthRecord {
                    query: j,
                    neighbor: inst.planted[j],
                    clean_distance: f64::from(inst.planted_distance[j]),
                    corrupted: Vec::new(),
                })
                .collect();
            (DatasetFile::Bits(inst.points), DatasetFile::Bits(inst.queries), truth)
        }
    };
    fs::create_dir_all(&a.out).map_err(|e| CliError::io(&a.out, e))?;
    data.write(&path(DATA_FILE))?;
    queries.write(&path(QUERIES_FILE))?;
    write_jsonl(&mut *output(Some(&path(TRUTH_FILE)))?, &truth)?;
    log::info!("wrote {} points and {} queries to {}", data.len(), queries.len(), a.out.display());
    Ok(())
}

fn backend(a: &BuildArgs) -> BackendKind {
    match a.backend {
        Backend::Exact => BackendKind::ExactScan,
        Backend::Lsh => BackendKind::BitSampleLsh(LshParams {
            tables: a.lsh_tables,
            bits_per_hash: a.lsh_bits,
            buckets: a.lsh_buckets,
            seed: a.seed,
        }),
    }
}

fn build(a: &BuildArgs) -> Result<()> {
    let data = DatasetFile::read(&a.data)?;
    let started = Instant::now();
    let bytes = match a.mode {
        Mode::Robust => {
            let k = a.k.ok_or_else(|| CliError::usage("--k is required for the robust mode"))?;
            let mode = match a.eps {
                Some(eps) => RobustMode::EpsApprox { eps },
                None => RobustMode::ConstantFactor,
            };
            let cfg = RobustIndexConfig {
                k,
                p: a.p,
                delta: a.delta,
                c: a.c,
                mode,
                l_scale: a.l_scale,
                seed: a.seed,
                backend: backend(a),
            };
            RobustIndex::build(&data.to_real(), cfg)?.to_bytes()
        }
        Mode::Budgeted => {
            let path = a.costs.as_deref().ok_or_else(|| CliError::usage("--costs is required for the budgeted mode"))?;
            let cfg = BudgetedConfig {
                delta: a.delta,
                eps: a.eps.unwrap_or(0.5),
                l_scale: a.l_scale,
                seed: a.seed,
                backend: backend(a),
            };
            BudgetedIndex::build(&data.to_real(), read_costs(path)?, cfg)?.to_bytes()
        }
        Mode::Dslsh => {
            let points = data.require_bits("data")?;
            let r = a.r.ok_or_else(|| CliError::usage("--r is required for the dslsh mode"))?;
            let cfg = DsLshConfig {
                r,
                eps: a.eps.unwrap_or(0.5),
                alpha: a.alpha,
                c3: a.c3,
                seed: a.seed,
                dup_factor: a.dup,
                early_exit: a.early_exit,
            };
            DsLshIndex::build(points, cfg)?.to_bytes()
        }
    };
    fs::write(&a.out, &bytes).map_err(|e| CliError::io(&a.out, e))?;
    log::info!("built {} index in {:.2?}, {} bytes", a.mode.name(), started.elapsed(), bytes.len());
    Ok(())
}

pub enum LoadedIndex {
    Robust(RobustIndex),
    Budgeted(BudgetedIndex),
    DsLsh(DsLshIndex),
}

impl LoadedIndex {
    pub fn read(path: &Path) -> Result<Self> {
        let buf = fs::read(path).map_err(|e| CliError::io(path, e))?;
        let wrap = |e: rann::Error| CliError::data(e.to_string()).context(path);
        Ok(match index_kind(&buf).map_err(wrap)? {
            IndexKind::Robust => LoadedIndex::Robust(RobustIndex::from_bytes(&buf).map_err(wrap)?),
            IndexKind::Budgeted => LoadedIndex::Budgeted(BudgetedIndex::from_bytes(&buf).map_err(wrap)?),
            IndexKind::DsLsh => LoadedIndex::DsLsh(DsLshIndex::from_bytes(&buf).map_err(wrap)?),
        })
    }

    pub fn mode(&self) -> Mode {
        match self {
            LoadedIndex::Robust(_) => Mode::Robust,
            LoadedIndex::Budgeted(_) => Mode::Budgeted,
            LoadedIndex::DsLsh(_) => Mode::Dslsh,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            LoadedIndex::Robust(ix) => ix.data().len(),
            LoadedIndex::Budgeted(ix) => ix.data().len(),
            LoadedIndex::DsLsh(ix) => ix.points().len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        match self {
            LoadedIndex::Robust(ix) => ix.data().dim(),
            LoadedIndex::Budgeted(ix) => ix.data().dim(),
            LoadedIndex::DsLsh(ix) => ix.points().dim(),
        }
    }
}

fn substructure_stats(stats: &[SubqueryStat], full: bool) -> Value {
    let distinct: BTreeSet<usize> = stats.iter().map(|s| s.candidate).collect();
    let mut v = json!({
        "substructures": stats.len(),
        "distinct_candidates": distinct.len(),
        "fallbacks": stats.iter().filter(|s| s.fallback).count(),
    });
    if full {
        v["candidates"] = serde_json::to_value(stats).expect("stats serialize");
    }
    v
}

fn timed<T>(f: impl FnOnce() -> rann::Result<T>) -> Result<(T, f64)> {
    let t = Instant::now();
    let out = f()?;
    Ok((out, t.elapsed().as_secs_f64() * 1e6))
}

fn query(a: &QueryArgs) -> Result<()> {
    let idx = LoadedIndex::read(&a.index)?;
    if let Some(m) = a.mode {
        if m != idx.mode() {
            return Err(CliError::data(format!(
                "{} holds a {} index, but --mode {} was requested",
                a.index.display(),
                idx.mode().name(),
                m.name()
            )));
        }
    }
    let qs = DatasetFile::read(&a.queries)?;
    if qs.dim() != idx.dim() {
        return Err(CliError::data(format!(
            "dimension mismatch: queries have d = {}, the index expects d = {}",
            qs.dim(),
            idx.dim()
        )));
    }
    let mode = idx.mode().name().to_string();
    let mut records = Vec::with_capacity(qs.len());
    match &idx {
        LoadedIndex::Robust(ix) => {
            let q = qs.to_real();
            for j in 0..q.len() {
                let (ans, wall_us) = timed(|| ix.query(q.row(j)))?;
                records.push(QueryRecord {
                    query: j,
                    mode: mode.clone(),
                    index: Some(ans.index),
                    distance: Some(ans.distance),
                    wall_us,
                    stats: substructure_stats(&ans.stats, a.full_stats),
                });
            }
        }
        LoadedIndex::Budgeted(ix) => {
            let q = qs.to_real();
            for j in 0..q.len() {
                let (ans, wall_us) = timed(|| ix.query(q.row(j)))?;
                let mut stats = substructure_stats(&ans.stats, a.full_stats);
                stats["ignored"] = json!(ans.ignored);
                records.push(QueryRecord {
                    query: j,
                    mode: mode.clone(),
                    index: Some(ans.index),
                    distance: Some(ans.distance),
                    wall_us,
                    stats,
                });
            }
        }
        LoadedIndex::DsLsh(ix) => {
            let q = qs.require_bits("queries")?;
            for j in 0..q.len() {
                let (ans, wall_us) = timed(|| ix.query(q.row(j)))?;
                let mut stats = serde_json::to_value(&ans.stats)?;
                stats["outcome"] = serde_json::to_value(ans.outcome)?;
                records.push(QueryRecord {
                    query: j,
                    mode: mode.clone(),
                    index: ans.witness.map(|w| w.index),
                    distance: ans.witness.map(|w| f64::from(w.distance)),
                    wall_us,
                    stats,
                });
            }
        }
    }
    write_jsonl(&mut *output(a.out.as_deref())?, &records)
}

/// Exact admissible nearest neighbor by enumeration, ties to the smaller index.
fn admissible_nn_exact(points: &Dataset, q: &[f64], costs: &rann::CostVector) -> rann::Result<(usize, f64)> {
    let mut best = (0, f64::INFINITY);
    for (i, row) in points.rows().enumerate() {
        let d = admissible_distance_exact(row, q, costs)?.distance;
        if d < best.1 {
            best = (i, d);
        }
    }
    Ok(best)
}

fn oracle(a: &OracleArgs) -> Result<()> {
    let data = DatasetFile::read(&a.data)?;
    let qs = DatasetFile::read(&a.queries)?;
    if qs.dim() != data.dim() {
        return Err(CliError::data(format!(
            "dimension mismatch: queries have d = {}, data has d = {}",
            qs.dim(),
            data.dim()
        )));
    }
    let answers: Vec<(usize, f64)> = match a.mode {
        Mode::Robust => {
            let k = a.k.ok_or_else(|| CliError::usage("--k is required for the robust mode"))?;
            oracle_answers(&data.to_real(), &qs.to_real(), NormParams::new(a.p, k)?)?
        }
        Mode::Budgeted => {
            let path = a.costs.as_deref().ok_or_else(|| CliError::usage("--costs is required for the budgeted mode"))?;
            let costs = read_costs(path)?;
            let (points, q) = (data.to_real(), qs.to_real());
            if costs.dim() != points.dim() {
                return Err(CliError::data(format!(
                    "cost file has {} entries, data has d = {}",
                    costs.dim(),
                    points.dim()
                )));
            }
            (0..q.len())
                .into_par_iter()
                .map(|j| {
                    if points.dim() <= EXACT_MAX_DIM {
                        admissible_nn_exact(&points, q.row(j), &costs)
                    } else {
                        admissible_nn(&points, q.row(j), &costs, a.eps).map(|(i, adm)| (i, adm.distance))
                    }
                })
                .collect::<rann::Result<_>>()?
        }
        Mode::Dslsh => {
            let points = data.require_bits("data")?;
            let q = qs.require_bits("queries")?;
            if points.is_empty() {
                return Err(CliError::data("empty dataset"));
            }
            (0..q.len())
                .into_par_iter()
                .map(|j| {
                    (0..points.len())
                        .map(|i| (i, f64::from(hamming(points.row(i), q.row(j)))))
                        .min_by(|x, y| x.1.total_cmp(&y.1).then(x.0.cmp(&y.0)))
                        .expect("nonempty")
                })
                .collect()
        }
    };
    let records: Vec<TruthRecord> = answers
        .into_iter()
        .enumerate()
        .map(|(j, (neighbor, distance))| TruthRecord {
            query: j,
            neighbor,
            clean_distance: distance,
            corrupted: Vec::new(),
        })
        .collect();
    write_jsonl(&mut *output(a.out.as_deref())?, &records)
}

fn lemmas(a: &LemmaArgs) -> Result<()> {
    let records = lemma_suite(&LemmaConfig { seed: a.seed, scale: a.scale, bias: 1.0 })?;
    write_jsonl(&mut *output(a.out.as_deref())?, &records)?;
    let failed = records.iter().filter(|r| !r.pass).count();
    if a.strict && failed > 0 {
        return Err(CliError::internal(format!("{failed} of {} checks failed", records.len())));
    }
    Ok(())
}

/// Nearest-rank percentile of sorted values.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Whether the answer to one query passes the index's lightness test at the
/// ground-truth distance `r`.
fn answer_is_light(idx: &LoadedIndex, q: &[f64], answer: usize, r: f64) -> Result<Option<bool>> {
    Ok(match idx {
        LoadedIndex::Robust(ix) => {
            let cfg = ix.config();
            let psi = r / (cfg.k as f64).powf(1.0 / cfg.p);
            let level = (cfg.lambda() + 1.0).powf(1.0 / cfg.p) * r;
            let diff = sub(q, ix.data().row(answer));
            Some(is_light(&diff, LightHeavyParams::new(psi, level)?, cfg.p)?)
        }
        LoadedIndex::Budgeted(ix) => {
            let diff = sub(q, ix.data().row(answer));
            let level = ix.config().light_level(r);
            Some(is_light_weighted(&diff, r, ix.costs(), ix.derived().c1, level)?)
        }
        LoadedIndex::DsLsh(_) => None,
    })
}

fn bench(a: &BenchArgs) -> Result<()> {
    let results: Vec<QueryRecord> = read_jsonl(&a.results)?;
    let truth: HashMap<usize, TruthRecord> =
        read_jsonl::<TruthRecord>(&a.truth)?.into_iter().map(|t| (t.query, t)).collect();
    let light_ctx = match (&a.index, &a.queries) {
        (Some(ix), Some(qs)) => Some((LoadedIndex::read(ix)?, DatasetFile::read(qs)?.to_real())),
        _ => None,
    };

    let mut answered = 0;
    let mut hits = 0;
    let mut light = (0, 0);
    let mut ratios = Vec::new();
    for rec in &results {
        let t = truth
            .get(&rec.query)
            .ok_or_else(|| CliError::data(format!("no ground truth for query {}", rec.query)))?;
        let Some(ans) = rec.index else { continue };
        answered += 1;
        hits += usize::from(ans == t.neighbor);
        if let (Some(dist), true) = (rec.distance, t.clean_distance > 0.0) {
            ratios.push(dist / t.clean_distance);
        }
        if let Some((idx, qs)) = &light_ctx {
            if rec.query >= qs.len() || ans >= idx.len() {
                return Err(CliError::data(format!("query {} or answer {ans} out of range", rec.query)));
            }
            if let Some(ok) = answer_is_light(idx, qs.row(rec.query), ans, t.clean_distance)? {
                light.0 += usize::from(ok);
                light.1 += 1;
            }
        }
    }
    let mut walls: Vec<f64> = results.iter().map(|r| r.wall_us).collect();
    walls.sort_by(f64::total_cmp);
    let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    let summary = BenchSummary {
        mode: results.first().map_or_else(|| "unknown".to_string(), |r| r.mode.clone()),
        queries: results.len(),
        answered,
        recall: if results.is_empty() { 0.0 } else { hits as f64 / results.len() as f64 },
        light_fraction: (light.1 > 0).then(|| light.0 as f64 / light.1 as f64),
        mean_ratio: (!ratios.is_empty()).then(|| mean(&ratios)),
        wall_us_mean: mean(&walls),
        wall_us_p50: percentile(&walls, 0.5),
        wall_us_p95: percentile(&walls, 0.95),
        wall_us_max: walls.last().copied().unwrap_or(0.0),
    };
    write_jsonl(&mut *output(a.out.as_deref())?, &[summary])
}
