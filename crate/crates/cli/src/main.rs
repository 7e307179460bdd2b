use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use ssr_core::autoencoder::TrainConfig;
use ssr_core::datagen::{build_datasets, read_ssup, write_ssup, ActivityCase, DatasetSizes, ScenarioConfig};
use ssr_core::harness::{
    calibrate_model, dataset_hash, error_rate_on, fit_learned, load_checkpoint, run_plan_with, save_checkpoint,
    test_measurements, time_learned, BaselineBench, BaselineSettings, ExperimentPlan, Method, Profile,
    ResultRow, Sweep, SweepAxis,
};
use ssr_core::model::{Dataset, Role};

/// Learned pilots and neural support recovery versus LASSO/AMP baselines.
#[derive(Parser)]
#[command(name = "ssr", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate train, validation and test sets into a data directory.
    Gen {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, value_enum, default_value_t = ProfileArg::Desk)]
        profile: ProfileArg,
        /// Override the profile's sizes as `train,validation,test`.
        #[arg(long, value_parser = parse_sizes)]
        sizes: Option<DatasetSizes>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the auto-encoder on a data directory and save a calibrated checkpoint.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        train: TrainArgs,
        /// Checkpoint path; defaults to `<data>/model.ssae`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recalibrate a checkpoint's threshold on the validation set.
    Calibrate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Write the `r, P_E` grid here.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Test error rate and timing of a checkpoint and optional baselines.
    Eval {
        #[command(flatten)]
        bench: BenchArgs,
        /// Write result rows here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-sample inference time of a checkpoint and optional baselines.
    Time {
        #[command(flatten)]
        bench: BenchArgs,
    },
    /// Run a full sweep from a plan file or from flags.
    Sweep {
        /// TOML plan; flags below override its fields.
        #[arg(long)]
        plan: Option<PathBuf>,
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long, value_enum)]
        profile: Option<ProfileArg>,
        #[arg(long, value_parser = parse_axis)]
        axis: Option<SweepAxis>,
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',', value_parser = parse_method)]
        methods: Option<Vec<Method>>,
        #[arg(long, value_parser = parse_sizes)]
        sizes: Option<DatasetSizes>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    Desk,
    Paper,
}

impl From<ProfileArg> for Profile {
    fn from(p: ProfileArg) -> Self {
        match p {
            ProfileArg::Desk => Profile::Desk,
            ProfileArg::Paper => Profile::Paper,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CaseArg {
    Iid,
    TwoGroup,
    GroupCorrelated,
}

#[derive(Args, Clone)]
struct ScenarioArgs {
    /// Number of devices N.
    #[arg(long)]
    n: Option<usize>,
    /// Pilot length L.
    #[arg(long)]
    l: Option<usize>,
    #[arg(long, value_enum)]
    case: Option<CaseArg>,
    /// Access probability p.
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    sigma2: Option<f64>,
    /// p1 / p2 for the two-group case.
    #[arg(long)]
    ratio: Option<f64>,
    /// Within-group access probability for the group-correlated case.
    #[arg(long)]
    p_u: Option<f64>,
    /// Number of groups for the group-correlated case.
    #[arg(long)]
    groups: Option<usize>,
    /// Seed for data, pilots and training.
    #[arg(long)]
    seed: Option<u64>,
}

impl ScenarioArgs {
    fn apply(&self, base: ScenarioConfig) -> ScenarioConfig {
        let mut s = base;
        if let Some(v) = self.n {
            s.n = v;
        }
        if let Some(v) = self.l {
            s.l = v;
        }
        if let Some(v) = self.p {
            s.p = v;
        }
        if let Some(v) = self.sigma2 {
            s.sigma2 = v;
        }
        if let Some(v) = self.seed {
            s.seed = v;
        }
        let (old_ratio, old_pu, old_groups) = match s.case {
            ActivityCase::Iid => (None, None, None),
            ActivityCase::TwoGroup { ratio_p1_p2 } => (Some(ratio_p1_p2), None, None),
            ActivityCase::GroupCorrelated { p_u, group_count } => (None, Some(p_u), Some(group_count)),
        };
        let case = self.case.unwrap_or(match s.case {
            ActivityCase::Iid => CaseArg::Iid,
            ActivityCase::TwoGroup { .. } => CaseArg::TwoGroup,
            ActivityCase::GroupCorrelated { .. } => CaseArg::GroupCorrelated,
        });
        s.case = match case {
            CaseArg::Iid => ActivityCase::Iid,
            CaseArg::TwoGroup => ActivityCase::TwoGroup {
                ratio_p1_p2: self.ratio.or(old_ratio).unwrap_or(2.0),
            },
            CaseArg::GroupCorrelated => ActivityCase::GroupCorrelated {
                p_u: self.p_u.or(old_pu).unwrap_or(1.0),
                group_count: self.groups.or(old_groups).unwrap_or(s.n / 5),
            },
        };
        s
    }
}

#[derive(Args, Clone)]
struct TrainArgs {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    /// Decoder hidden width Q (default 8L).
    #[arg(long)]
    hidden: Option<usize>,
    /// Keep the Gaussian pilot matrix fixed.
    #[arg(long)]
    freeze_matrix: bool,
}

impl TrainArgs {
    fn apply(&self, base: TrainConfig) -> TrainConfig {
        TrainConfig {
            max_epochs: self.epochs.unwrap_or(base.max_epochs),
            lr: self.lr.unwrap_or(base.lr),
            batch_size: self.batch_size.unwrap_or(base.batch_size),
            patience: self.patience.unwrap_or(base.patience),
            hidden_width: self.hidden.or(base.hidden_width),
            freeze_matrix: self.freeze_matrix || base.freeze_matrix,
            ..base
        }
    }
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint of a trained model; defaults to `<data>/model.ssae` if present.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Classical baselines to run alongside.
    #[arg(long, value_delimiter = ',', value_parser = parse_method)]
    methods: Vec<Method>,
    #[arg(long, default_value_t = 1000)]
    calibration_samples: usize,
    #[arg(long, default_value_t = 1000)]
    timing_samples: usize,
}

fn parse_method(s: &str) -> Result<Method, String> {
    Method::parse(s).ok_or_else(|| {
        let names: Vec<_> = Method::ALL.iter().map(|m| m.name()).collect();
        format!("unknown method `{s}`; expected one of {}", names.join(", "))
    })
}

fn parse_axis(s: &str) -> Result<SweepAxis, String> {
    SweepAxis::parse(s).ok_or_else(|| format!("unknown axis `{s}`; expected L_over_N, p, ratio_p1_p2 or p_u"))
}

fn parse_sizes(s: &str) -> Result<DatasetSizes, String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|v| v.trim().parse::<usize>().map_err(|e| format!("bad size `{v}`: {e}")))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [train, validation, test] => Ok(DatasetSizes {
            train,
            validation,
            test,
        }),
        _ => Err("sizes are `train,validation,test`".into()),
    }
}

const SCENARIO_FILE: &str = "scenario.toml";

fn default_scenario() -> ScenarioConfig {
    ScenarioConfig::iid(40, 12, 0.1, 0.1, 0)
}

struct DataDir {
    scenario: ScenarioConfig,
    train: Dataset,
    val: Dataset,
    test: Dataset,
}

fn read_set(dir: &Path, role: Role) -> Result<Dataset> {
    let path = dir.join(format!("{}.ssup", role.name()));
    let file = File::open(&path).with_context(|| format!("opening {}", path.display()))?;
    let (data, _) = read_ssup(BufReader::new(file), role).with_context(|| format!("reading {}", path.display()))?;
    Ok(data)
}

fn load_data(dir: &Path) -> Result<DataDir> {
    let path = dir.join(SCENARIO_FILE);
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let scenario: ScenarioConfig = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    scenario.validate()?;
    Ok(DataDir {
        scenario,
        train: read_set(dir, Role::Train)?,
        val: read_set(dir, Role::Validation)?,
        test: read_set(dir, Role::Test)?,
    })
}

fn gen(scenario: ScenarioConfig, sizes: DatasetSizes, out: &Path) -> Result<()> {
    scenario.validate()?;
    fs::create_dir_all(out)?;
    fs::write(out.join(SCENARIO_FILE), toml::to_string(&scenario)?)?;
    let sets = build_datasets(&scenario, sizes)?;
    for set in &sets {
        let path = out.join(format!("{}.ssup", set.role.name()));
        write_ssup(BufWriter::new(File::create(&path)?), set, scenario.case.id())?;
        eprintln!("wrote {} ({} samples)", path.display(), set.len());
    }
    Ok(())
}

fn train_cmd(data: &Path, args: &TrainArgs, out: Option<PathBuf>) -> Result<()> {
    let d = load_data(data)?;
    let cfg = args.apply(TrainConfig {
        seed: d.scenario.seed,
        ..TrainConfig::default()
    });
    let model = fit_learned(&d.train, &d.val, &cfg, &d.scenario)?;
    let out = out.unwrap_or_else(|| data.join("model.ssae"));
    save_checkpoint(&out, &model.params, model.calibration.r_star)?;
    eprintln!(
        "trained {} epochs in {:.1}s, best validation loss {:.6} at epoch {}",
        model.log.epochs.len(),
        model.train_seconds,
        model.log.best_val_loss,
        model.log.best_epoch
    );
    println!(
        "r_star={} validation_error={} checkpoint={}",
        model.calibration.r_star,
        model.calibration.pe_star,
        out.display()
    );
    Ok(())
}

fn calibrate_cmd(data: &Path, checkpoint: &Path, csv: Option<PathBuf>) -> Result<()> {
    let d = load_data(data)?;
    let ck = load_checkpoint(checkpoint)?;
    ck.expect_shape(d.scenario.n, d.scenario.l, ck.shape().2)?;
    let cal = calibrate_model(&ck.params, &d.val, &d.scenario)?;
    save_checkpoint(checkpoint, &ck.params, cal.r_star)?;
    if let Some(path) = csv {
        cal.write_csv(BufWriter::new(File::create(path)?))?;
    }
    println!("r_star={} validation_error={}", cal.r_star, cal.pe_star);
    Ok(())
}

fn bench_rows(args: &BenchArgs) -> Result<Vec<ResultRow>> {
    let d = load_data(&args.data)?;
    let s = &d.scenario;
    let hash = dataset_hash(&d.test);
    let ratio = s.l as f64 / s.n as f64;
    let blank = |m| ResultRow::blank(m, SweepAxis::LOverN, ratio, s, &hash);
    let mut rows = Vec::new();

    let checkpoint = args.checkpoint.clone().or_else(|| {
        let p = args.data.join("model.ssae");
        p.exists().then_some(p)
    });
    if let Some(path) = checkpoint {
        let ck = load_checkpoint(&path).with_context(|| format!("loading {}", path.display()))?;
        ck.expect_shape(s.n, s.l, ck.shape().2)?;
        let ys = test_measurements(&ck.params.a, &d.test, s)?;
        let rate = error_rate_on(&ck.params, ck.r_star, &ys, &d.test)?;
        let timed = &ys[..ys.len().min(args.timing_samples)];
        let infer = time_learned(&ck.params, ck.r_star, timed, BaselineSettings::default().warmup_samples);
        rows.push(ResultRow {
            threshold: Some(ck.r_star),
            error_rate: Some(rate),
            infer_seconds_per_sample: Some(infer),
            ..blank(Method::Proposed)
        });
    }

    if !args.methods.is_empty() {
        let bench = BaselineBench::new(s, &BaselineSettings::default(), &d.val, &d.test, args.calibration_samples)?;
        for &m in &args.methods {
            if m.is_learned() {
                bail!("{m} is evaluated from a checkpoint, not with --methods");
            }
            let report = bench.run(m, args.timing_samples)?;
            let (lambda1, lambda2) = report.fitted.solver.weights();
            rows.push(ResultRow {
                lambda1,
                lambda2,
                threshold: Some(report.fitted.tau),
                error_rate: Some(report.error_rate),
                train_seconds: report.fit_seconds,
                infer_seconds_per_sample: Some(report.infer_seconds),
                ..blank(m)
            });
        }
    }
    if rows.is_empty() {
        bail!("nothing to evaluate: no checkpoint found and no --methods given");
    }
    Ok(rows)
}

fn write_rows<W: io::Write>(w: W, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn sweep_cmd(
    plan_path: Option<PathBuf>,
    scenario: &ScenarioArgs,
    train: &TrainArgs,
    profile: Option<ProfileArg>,
    axis: Option<SweepAxis>,
    values: Option<Vec<f64>>,
    methods: Option<Vec<Method>>,
    sizes: Option<DatasetSizes>,
    out: Option<PathBuf>,
) -> Result<()> {
    let mut plan = match &plan_path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            ExperimentPlan::from_toml(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => {
            let (Some(axis), Some(values)) = (axis, values.clone()) else {
                bail!("without --plan, both --axis and --values are required");
            };
            ExperimentPlan::new(default_scenario(), Sweep { axis, values }, "results")
        }
    };
    plan.scenario = scenario.apply(plan.scenario);
    if let Some(seed) = scenario.seed {
        plan.train.seed = seed;
    }
    plan.train = train.apply(plan.train);
    if let Some(p) = profile {
        plan.profile = p.into();
    }
    if let Some(axis) = axis {
        plan.sweep.axis = axis;
    }
    if let Some(values) = values {
        plan.sweep.values = values;
    }
    if methods.is_some() {
        plan.methods = methods;
    }
    if sizes.is_some() {
        plan.sizes = sizes;
    }
    if let Some(out) = out {
        plan.output_dir = out;
    }
    plan.validate()?;

    eprintln!("writing to {}", plan.output_dir.display());
    let rows = run_plan_with(&plan, &mut |row| {
        let er = row.error_rate.map_or("-".to_string(), |e| format!("{e:.5}"));
        eprintln!(
            "{}={} {:<18} error_rate={er} train={:.1}s infer={:.2e}s {}",
            row.sweep_axis,
            row.sweep_value,
            row.method.name(),
            row.train_seconds,
            row.infer_seconds_per_sample.unwrap_or(f64::NAN),
            if row.is_ok() { "" } else { &row.status }
        );
    })?;
    let failed = rows.iter().filter(|r| !r.is_ok()).count();
    println!(
        "{} rows written to {} ({failed} failed)",
        rows.len(),
        plan.output_dir.join("results.csv").display()
    );
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Gen {
            scenario,
            profile,
            sizes,
            out,
        } => {
            let s = scenario.apply(default_scenario());
            let sizes = sizes.unwrap_or_else(|| Profile::from(profile).sizes(&s.case));
            gen(s, sizes, &out)
        }
        Command::Train { data, train, out } => train_cmd(&data, &train, out),
        Command::Calibrate { data, checkpoint, csv } => calibrate_cmd(&data, &checkpoint, csv),
        Command::Eval { bench, out } => {
            let rows = bench_rows(&bench)?;
            match out {
                Some(path) => write_rows(BufWriter::new(File::create(path)?), &rows),
                None => write_rows(io::stdout().lock(), &rows),
            }
        }
        Command::Time { bench } => {
            for row in bench_rows(&bench)? {
                println!(
                    "{:<18} {:.3e} s/sample",
                    row.method.name(),
                    row.infer_seconds_per_sample.unwrap_or(f64::NAN)
                );
            }
            Ok(())
        }
        Command::Sweep {
            plan,
            scenario,
            train,
            profile,
            axis,
            values,
            methods,
            sizes,
            out,
        } => sweep_cmd(plan, &scenario, &train, profile, axis, values, methods, sizes, out),
    }
}
