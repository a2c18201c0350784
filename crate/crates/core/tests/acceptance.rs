//! Acceptance checks, one PASS/FAIL line per criterion.
//!
//! Run all of them with `cargo test --test acceptance`, or a subset by id:
//! `cargo test --test acceptance -- C1 C5`.

mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{grad, invariance, oracles, table};
use mapper_gin::config::{Config, CACHE_DIR_ENV};
use mapper_gin::corruptions::CorruptionKind;
use mapper_gin::mapper::MapperParams;
use mapper_gin::model::{param_count, ModelConfig, Variant};
use mapper_gin::pointcloud::{sample_synthetic, Shape, Split};
use mapper_gin::train_eval::{
    metrics_csv, BenchmarkKind, Category, Experiment, MetricsTable, SeedSummary,
};

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

const TABLE_TOL: f64 = 0.05;
const GRAD_TOL: f64 = 1e-4;
const GRAD_SEEDS: u64 = 10;
const ROTATION_TOL: f64 = 1e-9;
const DESK_ACCURACY: f64 = 0.85;
const DESK_MINUTES: f64 = 10.0;
const ROBUSTNESS_MINUTES: f64 = 30.0;
const DESK_CORES: usize = 4;
const ROBUSTNESS_MARGIN: f64 = 0.05;
const SEEDS: [u64; 3] = [1, 2, 3];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within_budget(elapsed: Duration, seconds: f64) -> (bool, String) {
    let s = elapsed.as_secs_f64();
    (s < seconds, format!("{s:.2}s of {seconds}s"))
}

fn c1_table() -> Outcome {
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut notes = Vec::new();
    let mg = table::column("Mapper-GIN");
    for (category, want) in table::SUMMARY
        .into_iter()
        .zip([48.3, 82.8, 84.8, 78.7, 75.1])
    {
        let got = table::aggregate(mg, category);
        if (got - want).abs() > TABLE_TOL {
            failures.push(format!("Mapper-GIN {category:?} {got} vs {want}"));
        }
    }
    let pn2 = table::column("PointNet++");
    let overall = table::aggregate(pn2, Category::Overall);
    if (overall - 76.4).abs() > TABLE_TOL {
        failures.push(format!("PointNet++ Overall {overall} vs 76.4"));
    }
    for category in table::SUMMARY {
        let got = table::aggregate(pn2, category);
        let published = table::published(pn2, category);
        let conflict = table::ROUNDING_CONFLICTS
            .iter()
            .any(|(m, c, _)| *m == pn2.model && *c == category);
        match (conflict, (got - published).abs() <= TABLE_TOL) {
            (_, true) => {}
            (true, false) => notes.push(format!(
                "PointNet++ {category:?} {got} (published {published})"
            )),
            (false, false) => {
                failures.push(format!("PointNet++ {category:?} {got} vs {published}"))
            }
        }
    }
    let (fast, time) = within_budget(start.elapsed(), 1.0);
    if !fast {
        failures.push(format!("slow: {time}"));
    }
    let mut detail =
        format!("Mapper-GIN 48.3/82.8/84.8/78.7/75.1, PointNet++ Overall {overall:.1}; {time}");
    if !notes.is_empty() {
        detail += &format!(
            "; per-kind mean differs from published: {}",
            notes.join(", ")
        );
    }
    if !failures.is_empty() {
        detail = failures.join("; ");
    }
    outcome(failures.is_empty(), detail)
}

fn c2_nerve() -> Outcome {
    let start = Instant::now();
    let mut edges = 0usize;
    for seed in 0..100 {
        match oracles::nerve_case(seed) {
            Ok(g) => edges += g.edges.len(),
            Err(e) => return outcome(false, e),
        }
    }
    let (fast, time) = within_budget(start.elapsed(), 30.0);
    outcome(fast, format!("100 clouds, {edges} edges checked; {time}"))
}

fn c3_dbscan() -> Outcome {
    let start = Instant::now();
    for seed in 0..200 {
        if let Err(e) = oracles::dbscan_case(seed) {
            return outcome(false, e);
        }
    }
    let (fast, time) = within_budget(start.elapsed(), 30.0);
    outcome(fast, format!("200 instances; {time}"))
}

fn c4_gradients() -> Outcome {
    let start = Instant::now();
    let mut worst = Vec::new();
    let mut pass = true;
    for (name, check) in grad::suite() {
        let max = (0..GRAD_SEEDS).map(&check).fold(0.0f64, f64::max);
        pass &= max < GRAD_TOL;
        worst.push(format!("{name} {max:.1e}"));
    }
    let (fast, time) = within_budget(start.elapsed(), 120.0);
    outcome(
        pass && fast,
        format!(
            "max rel err over {GRAD_SEEDS} seeds: {}; {time}",
            worst.join(", ")
        ),
    )
}

fn c5_invariance() -> Outcome {
    let start = Instant::now();
    for seed in 0..5 {
        if let Err(e) = invariance::logits_case(seed) {
            return outcome(false, e);
        }
    }
    for cloud in 0..50 {
        let pc = oracles::random_cloud(cloud);
        if let Err(e) = invariance::multiset_case(&pc, cloud + 1000, &MapperParams::default()) {
            return outcome(false, e);
        }
    }
    let mut worst = 0.0f64;
    for (i, shape) in Shape::ALL.iter().enumerate() {
        let pc = sample_synthetic(*shape, 256, i as u64).expect("synthetic cloud");
        for severity in 1..=5 {
            worst = worst.max(invariance::rotation_distance_error(
                &pc,
                severity,
                i as u64 * 7 + severity as u64,
            ));
        }
    }
    outcome(
        worst <= ROTATION_TOL,
        format!(
            "logits exact on 5x4 clouds x 3 variants, multiset on 50 clouds, rotation distance err {worst:.1e}; {:.2}s",
            start.elapsed().as_secs_f64()
        ),
    )
}

fn c6_params() -> Outcome {
    let mg = param_count(&ModelConfig::default());
    let mlp = param_count(&ModelConfig {
        variant: Variant::MlpBaseline,
        ..Default::default()
    });
    let closed = 3 * 64 + 64 + 2 * 64 + 64 * 256 + 256 + 2 * 256 + 2 * 256 + 256 * 8 + 8;
    outcome(
        (450_000..=550_000).contains(&mg) && mlp == closed,
        format!("Mapper-GIN {mg}, MLP {mlp} (closed form {closed})"),
    )
}

/// One trained and evaluated desk-scale seed.
struct DeskRun {
    table: MetricsTable,
    metrics: String,
    config_hash: String,
    train_time: Duration,
    total_time: Duration,
}

fn desk_config(root: &Path, variant: Variant, seed: u64, kinds: Option<&str>) -> Config {
    let mut c = Config::default();
    let sets = [
        format!("model.variant=\"{variant}\""),
        format!("run.seeds=[{seed}]"),
        format!("paths.cache_dir=\"{}\"", root.join("cache").display()),
        format!("paths.out_dir=\"{}\"", root.join("runs").display()),
    ];
    for s in sets.iter().map(String::as_str).chain(kinds) {
        c.set(s).expect("desk override");
    }
    c
}

fn desk_run(config: Config, label: &str) -> DeskRun {
    let start = Instant::now();
    let exp = Experiment::new(config).expect("experiment");
    let seed = exp.run.seeds[0];
    let train_set = exp.samples(Split::Train).expect("train samples");
    let test_set = exp.samples(Split::Test).expect("test samples");
    exp.train_seed(seed, &train_set, &test_set, |r| {
        if r.epoch % 10 == 9 {
            eprintln!(
                "  {label}: epoch {:>2} loss {:.4} clean {:.4} ({:.0}s)",
                r.epoch + 1,
                r.loss,
                r.clean_accuracy,
                start.elapsed().as_secs_f64()
            );
        }
    })
    .expect("training");
    let train_time = start.elapsed();
    let model = exp.load_checkpoint(seed).expect("best checkpoint");
    let clean_clouds = exp.clouds(Split::Test).expect("test clouds");
    let table = exp
        .evaluate(&model, &clean_clouds, &test_set)
        .expect("evaluation");
    let summary = SeedSummary {
        runs: [(seed, table.clone())].into_iter().collect(),
    };
    let models: BTreeMap<String, SeedSummary> = [(exp.model.variant.name().to_string(), summary)]
        .into_iter()
        .collect();
    let metrics = metrics_csv(&models);
    let total_time = start.elapsed();
    eprintln!(
        "  {label}: clean {:.4}, trained in {:.0}s, evaluated in {:.0}s",
        table.clean,
        train_time.as_secs_f64(),
        (total_time - train_time).as_secs_f64()
    );
    DeskRun {
        table,
        metrics,
        config_hash: exp.config_hash_hex(),
        train_time,
        total_time,
    }
}

fn cores() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Wall-clock bounds are stated for a multi-core CPU and are only gated
/// when at least that many cores are available.
fn time_gate(elapsed: Duration, minutes: f64) -> (bool, String) {
    let m = elapsed.as_secs_f64() / 60.0;
    let cores = cores();
    match cores >= DESK_CORES {
        true => (m < minutes, format!("{m:.1} min of {minutes} min on {cores} cores")),
        false => (
            true,
            format!("{m:.1} min on {cores} core(s); the {minutes} min bound assumes {DESK_CORES} cores and is not gated here"),
        ),
    }
}

struct DeskResults {
    mapper_gin: Vec<DeskRun>,
    mlp: Vec<DeskRun>,
}

fn desk_results(root: &Path) -> DeskResults {
    let mut mapper_gin = Vec::new();
    let mut mlp = Vec::new();
    for (i, seed) in SEEDS.into_iter().enumerate() {
        // seed 1 evaluates the whole catalog; the others only what robustness needs
        let kinds = (i > 0).then_some("eval.kinds=[\"impulse\"]");
        for variant in [Variant::MapperGin, Variant::MlpBaseline] {
            let config = desk_config(root, variant, seed, kinds);
            let run = desk_run(config, &format!("{variant} seed {seed}"));
            match variant {
                Variant::MlpBaseline => mlp.push(run),
                _ => mapper_gin.push(run),
            }
        }
    }
    DeskResults { mapper_gin, mlp }
}

fn c7_learning(desk: &DeskResults) -> Outcome {
    let mg = &desk.mapper_gin[0];
    let mlp = &desk.mlp[0];
    let (fast, time) = time_gate(mg.train_time, DESK_MINUTES);
    outcome(
        mg.table.clean >= DESK_ACCURACY && mlp.table.clean >= DESK_ACCURACY && fast,
        format!(
            "seed 1 best clean accuracy: Mapper-GIN {:.4}, MLP {:.4} (need {DESK_ACCURACY}); Mapper-GIN training {time}",
            mg.table.clean, mlp.table.clean
        ),
    )
}

fn impulse_drop(run: &DeskRun) -> f64 {
    let corrupted = run.table.cells[&(BenchmarkKind::Generated(CorruptionKind::Impulse), 3)];
    run.table.clean - corrupted
}

fn c8_robustness(desk: &DeskResults) -> Outcome {
    let mean = |runs: &[DeskRun]| runs.iter().map(impulse_drop).sum::<f64>() / runs.len() as f64;
    let (mg, mlp) = (mean(&desk.mapper_gin), mean(&desk.mlp));
    let per_seed: Vec<String> = desk
        .mapper_gin
        .iter()
        .zip(&desk.mlp)
        .zip(SEEDS)
        .map(|((a, b), s)| {
            format!(
                "seed {s} {:+.1}/{:+.1}",
                -100.0 * impulse_drop(a),
                -100.0 * impulse_drop(b)
            )
        })
        .collect();
    let total: Duration = desk
        .mapper_gin
        .iter()
        .chain(&desk.mlp)
        .map(|r| r.total_time)
        .sum();
    let (fast, time) = time_gate(total, ROBUSTNESS_MINUTES);
    outcome(
        mg <= mlp + ROBUSTNESS_MARGIN && fast,
        format!(
            "impulse-3 mean drop Mapper-GIN {:.1} pp vs MLP {:.1} pp + {:.0} pp ({}); {time}",
            100.0 * mg,
            100.0 * mlp,
            100.0 * ROBUSTNESS_MARGIN,
            per_seed.join(", ")
        ),
    )
}

fn c9_determinism(desk: &DeskResults, root: &Path) -> Outcome {
    let first = &desk.mapper_gin[0];
    let again = desk_run(
        desk_config(root, Variant::MapperGin, SEEDS[0], None),
        "mapper_gin seed 1 rerun",
    );
    let same_hash = first.config_hash == again.config_hash;
    let same_bytes = first.metrics.as_bytes() == again.metrics.as_bytes();
    outcome(
        same_hash && same_bytes,
        format!(
            "config hash {}, metrics CSV {} ({} bytes, {} rows)",
            if same_hash { "identical" } else { "differs" },
            if same_bytes {
                "byte-identical"
            } else {
                "differs"
            },
            first.metrics.len(),
            first.metrics.lines().count() - 1
        ),
    )
}

fn main() -> ExitCode {
    std::env::remove_var(CACHE_DIR_ENV);
    let wanted: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .map(|a| a.to_uppercase())
        .collect();
    let selected = |id: &str| wanted.is_empty() || wanted.iter().any(|w| w == id);
    let mut failed = 0usize;
    let mut report = |id: &str, name: &str, run: &mut dyn FnMut() -> Outcome| {
        if !selected(id) {
            return;
        }
        let o = run();
        println!(
            "{} {id} {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        failed += usize::from(!o.pass);
    };
    report("C1", "table arithmetic", &mut c1_table);
    report("C2", "nerve oracle", &mut c2_nerve);
    report("C3", "DBSCAN oracle", &mut c3_dbscan);
    report("C4", "gradient suite", &mut c4_gradients);
    report("C5", "invariance suite", &mut c5_invariance);
    report("C6", "parameter budget", &mut c6_params);
    if ["C7", "C8", "C9"].iter().any(|id| selected(id)) {
        let dir = tempfile::tempdir().expect("temp dir");
        eprintln!("desk-scale runs: seeds {SEEDS:?}, Mapper-GIN and MLP");
        let desk = desk_results(&dir.path().join("a"));
        report("C7", "desk-scale learning", &mut || c7_learning(&desk));
        report("C8", "robustness smoke", &mut || c8_robustness(&desk));
        report("C9", "determinism", &mut || {
            c9_determinism(&desk, &dir.path().join("b"))
        });
    }
    match failed {
        0 => ExitCode::SUCCESS,
        _ => ExitCode::FAILURE,
    }
}
