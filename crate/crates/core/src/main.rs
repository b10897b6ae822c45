use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use cim_core::causesel::{read_csv_panel, select_causes, CauseSet};
use cim_core::harness::{
    collect_demonstrations, encode_panel, evaluate_variant, fewshot_experiment, load_demonstrations, metrics_table,
    run_pipeline, save_demonstrations, select_latent_causes, train_head, train_perception, traversal_report,
    write_panel_csv, RunConfig, Variant,
};
use cim_core::perception::{write_training_csv, VaeWeights, DEFAULT_TRAVERSAL};
use cim_core::speedpred::PredictorWeights;

#[derive(Parser)]
#[command(name = "cim", version, about = "Causal imitation driving experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run config; missing fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Artifact directory.
    #[arg(long, global = true, default_value = "runs/default")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Record expert demonstrations in the training town.
    Collect {
        #[arg(long)]
        tasks: Option<usize>,
    },
    /// Fit the perception model on the collected demonstrations.
    TrainVae {
        #[arg(long, default_value = "cim")]
        variant: String,
    },
    /// Granger-test the latent series against the ego speed.
    SelectCauses {
        /// Test the columns of a CSV panel instead of the trained latents.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long, default_value = "speed")]
        target: String,
    },
    /// Fit the speed predictor on the selected causes, or on every latent.
    TrainSpeed {
        #[arg(long, default_value = "cim")]
        variant: String,
    },
    /// Run a variant on the evaluation suite.
    Evaluate {
        #[arg(long, default_value = "cim")]
        variant: String,
        #[arg(long)]
        town: Option<String>,
        /// Predictor weights; defaults to the one in --out.
        #[arg(long)]
        predictor: Option<PathBuf>,
    },
    /// Collect, train, select, fit and evaluate in one go.
    Pipeline {
        #[arg(long)]
        variant: Option<String>,
    },
    /// Few-shot adaptation of both predictors to the target town.
    Adapt {
        #[arg(long)]
        cim: PathBuf,
        #[arg(long)]
        mlp: PathBuf,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, default_value_t = 5)]
        seeds: usize,
    },
    /// Latent traversal strips and the on-road variance table.
    Traverse {
        #[arg(long, default_value_t = 24)]
        probes: usize,
    },
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut config = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn parse_variant(name: &str) -> Result<Variant> {
    Variant::parse(name).with_context(|| format!("unknown variant {name:?}"))
}

fn vae_path(out: &Path, variant: Variant) -> PathBuf {
    out.join(if variant == Variant::CimEntangled { "perception_entangled.cimw" } else { "perception.cimw" })
}

fn predictor_path(out: &Path, variant: Variant) -> PathBuf {
    out.join(format!("predictor_{}.cimw", variant.name()))
}

fn load_vae(out: &Path, variant: Variant) -> Result<VaeWeights> {
    let path = vae_path(out, variant);
    VaeWeights::load(&path).with_context(|| format!("loading {}; run train-vae first", path.display()))
}

fn load_causes(out: &Path) -> Result<CauseSet> {
    let path = out.join("causes.json");
    let text =
        fs::read_to_string(&path).with_context(|| format!("reading {}; run select-causes first", path.display()))?;
    Ok(CauseSet::from_json(&text)?)
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let config = load_config(&cli.common)?;
    let out = cli.common.out.as_path();
    fs::create_dir_all(out)?;

    match cli.command {
        Command::Collect { tasks } => {
            let town = config.town(&config.train_town)?;
            let n = tasks.unwrap_or(config.demo_tasks);
            let demos = collect_demonstrations(&town, n, config.seed, config.train_fraction)?;
            save_demonstrations(out, &demos, config.seed)?;
            info!(
                "{} demonstrations ({} train / {} test) in {}",
                n,
                demos.train.len(),
                demos.test.len(),
                out.display()
            );
        }
        Command::TrainVae { variant } => {
            let variant = parse_variant(&variant)?;
            let demos = load_demonstrations(out)?;
            let (vae, history) = train_perception(&demos, &config.vae_for(variant), config.frame_stride)?;
            vae.save(&vae_path(out, variant))?;
            let mut csv = Vec::new();
            write_training_csv(&mut csv, &history)?;
            fs::write(out.join(format!("perception_training_{}.csv", variant.name())), csv)?;
            if let Some(last) = history.last() {
                info!("epoch {}: recon {:.3} kl {:.3}", last.epoch, last.recon, last.kl);
            }
        }
        Command::SelectCauses { csv, target } => {
            let set = match csv {
                Some(path) => {
                    let (panel, names) = read_csv_panel(&path, &target, config.lag)?;
                    let set = select_causes(&panel, config.alpha)?;
                    let chosen: Vec<&str> = set.selected.iter().map(|&i| names[i].as_str()).collect();
                    println!("selected: {chosen:?}");
                    set
                }
                None => {
                    let demos = load_demonstrations(out)?;
                    let vae = load_vae(out, Variant::Cim)?;
                    let test = demos.test_logs();
                    let mut panel_csv = Vec::new();
                    write_panel_csv(&mut panel_csv, &encode_panel(&test, &vae, config.lag)?)?;
                    fs::write(out.join("latent_panel.csv"), panel_csv)?;
                    let set = select_latent_causes(&config, &test, &vae)?;
                    println!("selected latents: {:?}", set.selected);
                    set
                }
            };
            fs::write(out.join("causes.json"), set.to_json())?;
        }
        Command::TrainSpeed { variant } => {
            let variant = parse_variant(&variant)?;
            if !variant.is_learned() {
                bail!("{} has no predictor", variant.name());
            }
            let demos = load_demonstrations(out)?;
            let vae = load_vae(out, variant)?;
            let bundle = train_head(&config, variant, &demos, vae, Vec::new())?;
            bundle.predictor.save(&predictor_path(out, variant))?;
            info!("{} predictor on inputs {:?}", variant.name(), bundle.predictor.inputs);
        }
        Command::Evaluate { variant, town, predictor } => {
            let variant = parse_variant(&variant)?;
            let town = config.town(town.as_deref().unwrap_or(&config.train_town))?;
            let report = if variant.is_learned() {
                let vae = load_vae(out, variant)?;
                let path = predictor.unwrap_or_else(|| predictor_path(out, variant));
                let predictor = PredictorWeights::load(&path).with_context(|| format!("loading {}", path.display()))?;
                let bundle =
                    cim_core::harness::Bundle { variant, vae, vae_history: Vec::new(), causes: None, predictor };
                evaluate_variant(&config, variant, Some(&bundle), &town)?
            } else {
                evaluate_variant(&config, variant, None, &town)?
            };
            fs::write(out.join(format!("metrics_{}.json", variant.name())), report.to_json())?;
            print!("{}", metrics_table(&[&report]));
        }
        Command::Pipeline { variant } => {
            let mut config = config;
            if let Some(v) = variant {
                config.variant = parse_variant(&v)?;
            }
            let run = run_pipeline(&config, out)?;
            print!("{}", metrics_table(&[&run.report]));
        }
        Command::Adapt { cim, mlp, samples, seeds } => {
            let vae = load_vae(out, Variant::Cim)?;
            let cim = PredictorWeights::load(&cim)?;
            let mlp = PredictorWeights::load(&mlp)?;
            let report = fewshot_experiment(&config, &vae, &cim, &mlp, samples, seeds)?;
            fs::write(out.join("fewshot.json"), report.to_json())?;
            print!("{}", report.table());
        }
        Command::Traverse { probes } => {
            let demos = load_demonstrations(out)?;
            let vae = load_vae(out, Variant::Cim)?;
            let causes = load_causes(out)?;
            let test = demos.test_logs();
            let total: usize = test.iter().map(|l| l.len()).sum();
            let stride = (total / probes.max(1)).max(1);
            let obs: Vec<_> = test
                .iter()
                .flat_map(|l| (0..l.len()).map(move |t| l.observation(t)))
                .step_by(stride)
                .take(probes)
                .collect();
            let town = config.town(&config.train_town)?;
            let report =
                traversal_report(&vae, &causes, &obs, &DEFAULT_TRAVERSAL, &town.render, Some(&out.join("traversal")))?;
            fs::write(out.join("traversal.json"), report.to_json())?;
            print!("{}", report.table());
            if !report.selected_above_median() {
                log::warn!("a selected latent ranks at or below the median unselected latent");
            }
        }
    }
    Ok(())
}
