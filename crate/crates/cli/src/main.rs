use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lgwalk_core::basin::{analyse_walk, read_series_file, window_profile, StagnationParams};
use lgwalk_core::experiment::{
    parse_config_text, read_lg_cloud, run_experiment, summarise_run, ExperimentConfig, CLOUD_FILE,
};
use lgwalk_core::plot::{emit_scatter_plot, ColourBy, PlotOptions};
use lgwalk_core::Error;

#[derive(Parser)]
#[command(
    name = "lgwalk",
    version,
    about = "Sample neural-network loss landscapes with progressive gradient walks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a batch of walks and write a run directory.
    Run(RunArgs),
    /// Print summary tables for one or more run directories.
    Summarise {
        #[arg(required = true)]
        run_dirs: Vec<PathBuf>,
    },
    /// Draw the loss-gradient cloud of a run as SVG.
    Plot {
        run_dir: PathBuf,
        #[arg(long, default_value = "curvature")]
        colour_by: String,
        /// Keep only points with E_t below this value.
        #[arg(long)]
        max_loss: Option<f64>,
        #[arg(long)]
        log_colour: bool,
        /// Output file (default: RUN_DIR/lg_cloud.svg).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Basin estimates for a one-column series file.
    Basins {
        series_file: PathBuf,
        /// Print l_stag and n_stag for every window candidate.
        #[arg(long)]
        profile: bool,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    /// Key-value configuration file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    loss: Option<String>,
    #[arg(long)]
    granularity: Option<String>,
    #[arg(long)]
    init_range: Option<String>,
    #[arg(long)]
    walks: Option<String>,
    /// Override the number of recorded steps per walk.
    #[arg(long)]
    steps: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    hessian: Option<String>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    threads: Option<String>,
}

impl RunArgs {
    fn pairs(&self) -> Result<BTreeMap<String, String>, Error> {
        let mut pairs = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
                    path: path.clone(),
                    source: e,
                })?;
                parse_config_text(&text)?
            }
            None => BTreeMap::new(),
        };
        let flags = [
            ("problem", &self.problem),
            ("loss", &self.loss),
            ("granularity", &self.granularity),
            ("init-range", &self.init_range),
            ("walks", &self.walks),
            ("steps", &self.steps),
            ("seed", &self.seed),
            ("hessian", &self.hessian),
            ("out", &self.out),
            ("data", &self.data),
            ("threads", &self.threads),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                pairs.insert(key.to_string(), v.clone());
            }
        }
        Ok(pairs)
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run(args) => {
            let config = ExperimentConfig::from_pairs(&args.pairs()?)?;
            let report = run_experiment(&config)?;
            print!("{}", report.tables);
            for (walk, err) in &report.failed {
                eprintln!("walk {walk} failed: {err}");
            }
            eprintln!(
                "{} walks ({} failed), {} cloud records written to {}",
                report.walks,
                report.failed.len(),
                report.cloud_records,
                report.dir.display()
            );
        }
        Command::Summarise { run_dirs } => {
            print!("{}", summarise_run(&run_dirs)?);
        }
        Command::Plot {
            run_dir,
            colour_by,
            max_loss,
            log_colour,
            out,
        } => {
            let records = read_lg_cloud(&run_dir.join(CLOUD_FILE))?;
            let options = PlotOptions {
                colour_by: colour_by.parse::<ColourBy>()?,
                max_loss,
                log_colour,
            };
            let out = out.unwrap_or_else(|| run_dir.join("lg_cloud.svg"));
            emit_scatter_plot(&records, &options, &out)?;
            eprintln!("wrote {}", out.display());
        }
        Command::Basins {
            series_file,
            profile,
        } => {
            let series = read_series_file(&series_file)?;
            let params = StagnationParams::default();
            if profile {
                println!("window,n_stag,l_stag");
                for (w, regions) in window_profile(&series, &params)? {
                    let l = if regions.is_empty() {
                        0.0
                    } else {
                        regions.iter().sum::<usize>() as f64 / regions.len() as f64
                    };
                    println!("{w},{},{l:.5}", regions.len());
                }
            }
            let b = analyse_walk(&series, &params)?;
            println!("n_stag = {}", b.n);
            println!("l_stag = {:.5}", b.l);
            println!("window = {}", b.window);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
