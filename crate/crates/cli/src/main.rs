//! `demandcast`: synthesize, preprocess, train, predict and evaluate from the
//! command line.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 internal error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use demand_core::eval::{format_table, write_report_csv};
use demand_core::ingest::{
    load_catalog, load_config, load_covariates, load_sales, write_sales, CovariateTable,
};
use demand_core::pipeline::{
    evaluate_predictions, predict_with, read_predictions, run, write_predictions, Inputs,
    ModelDocument,
};
use demand_core::preprocess::preprocess;
use demand_core::synth::{generate_panel, SynthSpec};
use demand_core::{Encoding, Error, ModelKind, RunConfig};

#[derive(Debug, Parser)]
#[command(
    name = "demandcast",
    version,
    about = "Global demand forecasting over many product series"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic panel with known seasonality and stockouts.
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Repair fake zeros and cap spikes; writes the cleaned sales and smoothed series.
    Preprocess {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: Data,
    },
    /// Fit a model on the training weeks with early stopping on the validation weeks.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: Data,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Forecast `horizon` weeks ahead of an origin week with a saved model.
    Predict {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: Data,
        /// Model file written by `train` or `pipeline`.
        #[arg(long)]
        model_file: PathBuf,
        /// Origin week; defaults to the last panel week.
        #[arg(long)]
        origin: Option<usize>,
    },
    /// Score a predictions file against the sales panel and the ES baseline.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: Data,
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        cold_start_filter: Option<usize>,
    },
    /// Every stage end to end; synthesizes data when no sales file is given.
    Pipeline {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: OptionalData,
        #[command(flatten)]
        model: ModelArgs,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct Data {
    #[arg(long)]
    sales: PathBuf,
    #[arg(long)]
    catalog: PathBuf,
    #[arg(long)]
    covariates: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct OptionalData {
    #[arg(long, requires = "catalog")]
    sales: Option<PathBuf>,
    #[arg(long, requires = "sales")]
    catalog: Option<PathBuf>,
    #[arg(long, requires = "sales")]
    covariates: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ModelArgs {
    #[arg(long, value_parser = ["gbt", "forest", "es"])]
    model: Option<String>,
    #[arg(long, value_parser = ["ordinal", "hashing"])]
    encoding: Option<String>,
    #[arg(long, overrides_with = "no_seasonality")]
    with_seasonality: bool,
    #[arg(long, overrides_with = "with_seasonality")]
    no_seasonality: bool,
    #[arg(long)]
    cold_start_filter: Option<usize>,
}

impl ModelArgs {
    fn apply(&self, config: &mut RunConfig) -> Result<(), Error> {
        if let Some(m) = &self.model {
            config.model = m.parse::<ModelKind>()?;
        }
        if let Some(e) = &self.encoding {
            config.encoding = e.parse::<Encoding>()?;
        }
        if self.with_seasonality {
            config.with_seasonality = true;
        }
        if self.no_seasonality {
            config.with_seasonality = false;
        }
        if let Some(n) = self.cold_start_filter {
            config.cold_start_filter = n;
        }
        Ok(())
    }
}

fn config_from(common: &Common) -> Result<RunConfig, Error> {
    let mut config = match &common.config {
        Some(path) => load_config(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn load_inputs(sales: &Path, catalog: &Path, covariates: Option<&Path>) -> Result<Inputs, Error> {
    let stage = |e: Error| e.in_stage("ingest");
    Ok(Inputs {
        panel: load_sales(sales).map_err(stage)?,
        catalog: load_catalog(catalog).map_err(stage)?,
        covariates: match covariates {
            Some(p) => load_covariates(p).map_err(stage)?,
            None => CovariateTable::default(),
        },
    })
}

fn create_dir(dir: &Path) -> Result<(), Error> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn write_text(path: &Path, text: &str) -> Result<(), Error> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn execute(command: Command) -> Result<(), Error> {
    match command {
        Command::Synth { common } => {
            let config = config_from(&common)?;
            let data = generate_panel(&SynthSpec::from_config(&config))
                .map_err(|e| e.in_stage("synth"))?;
            data.write_dir(&common.out_dir)
                .map_err(|e| e.in_stage("synth"))?;
            println!(
                "wrote {} products x {} weeks to {}",
                data.panel.len(),
                data.panel.weeks(),
                common.out_dir.display()
            );
        }
        Command::Preprocess { common, data } => {
            let config = config_from(&common)?;
            let inputs = load_inputs(&data.sales, &data.catalog, data.covariates.as_deref())?;
            let (repaired, smoothed) = preprocess(
                &inputs.panel,
                config.repair_alpha,
                config.window,
                config.gamma,
            )
            .map_err(|e| e.in_stage("preprocess"))?;
            create_dir(&common.out_dir)?;
            write_sales(&repaired, common.out_dir.join("sales_repaired.csv"))?;
            smoothed.write_csv(&repaired, common.out_dir.join("smoothed.csv"))?;
            let flagged: usize = smoothed
                .repaired_mask
                .iter()
                .flatten()
                .filter(|&&f| f)
                .count();
            let capped: usize = smoothed
                .capped_mask
                .iter()
                .flatten()
                .filter(|&&f| f)
                .count();
            println!("repaired {flagged} fake zeros, capped {capped} spikes");
        }
        Command::Train {
            common,
            data,
            model,
        } => {
            let mut config = config_from(&common)?;
            model.apply(&mut config)?;
            config.validate()?;
            let inputs = load_inputs(&data.sales, &data.catalog, data.covariates.as_deref())?;
            let out = run(&inputs, &config)?;
            create_dir(&common.out_dir)?;
            let doc = ModelDocument::new(
                &config,
                &out.prepared,
                out.feature_names.clone(),
                &out.predictor,
            )?;
            write_text(&common.out_dir.join("model.json"), &doc.to_json()?)?;
            write_text(
                &common.out_dir.join("manifest.json"),
                &out.manifest.to_json()?,
            )?;
            println!(
                "trained {} on {} rows; best round {}",
                config.model.name(),
                out.manifest.train_rows,
                out.manifest
                    .best_round
                    .map_or("-".into(), |r| r.to_string())
            );
        }
        Command::Predict {
            common,
            data,
            model_file,
            origin,
        } => {
            let inputs = load_inputs(&data.sales, &data.catalog, data.covariates.as_deref())?;
            let doc = ModelDocument::read(&model_file).map_err(|e| e.in_stage("predict"))?;
            let origin = origin.unwrap_or(inputs.panel.weeks().saturating_sub(1));
            let rows = predict_with(&doc, &inputs, origin)?;
            create_dir(&common.out_dir)?;
            let n = rows.len();
            write_predictions(rows, common.out_dir.join("predictions.csv"))?;
            println!("wrote {n} forecasts for origin week {origin}");
        }
        Command::Evaluate {
            common,
            data,
            predictions,
            cold_start_filter,
        } => {
            let mut config = config_from(&common)?;
            if let Some(n) = cold_start_filter {
                config.cold_start_filter = n;
            }
            let inputs = load_inputs(&data.sales, &data.catalog, data.covariates.as_deref())?;
            let forecasts = read_predictions(&predictions).map_err(|e| e.in_stage("evaluate"))?;
            let reports = evaluate_predictions(&forecasts, &inputs, &config)?;
            create_dir(&common.out_dir)?;
            write_report_csv(&reports, common.out_dir.join("report.csv"))?;
            print!("{}", format_table(&reports));
        }
        Command::Pipeline {
            common,
            data,
            model,
        } => {
            let mut config = config_from(&common)?;
            model.apply(&mut config)?;
            config.validate()?;
            let inputs = match (&data.sales, &data.catalog) {
                (Some(sales), Some(catalog)) => {
                    load_inputs(sales, catalog, data.covariates.as_deref())?
                }
                _ => {
                    let d = generate_panel(&SynthSpec::from_config(&config))
                        .map_err(|e| e.in_stage("synth"))?;
                    d.write_dir(common.out_dir.join("data"))
                        .map_err(|e| e.in_stage("synth"))?;
                    Inputs {
                        panel: d.panel,
                        catalog: d.catalog,
                        covariates: d.covariates,
                    }
                }
            };
            let out = run(&inputs, &config)?;
            out.write(&config, &common.out_dir)?;
            print!("{}", format_table(&out.reports));
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Config(_) => 1,
        _ if e.is_data_error() => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
