use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qbattery::cycle::EventOrder;
use qbattery::model::ModelParams;
use qbattery::plot::emit_plots;
use qbattery::sweep::{
    ensure_dir, oracle_comparison, parse_angle, parse_config, parse_config_file, read_csv, run_sweep,
    run_verification, write_csv, write_text, SweepError, SweepSpec,
};

#[derive(Parser)]
#[command(name = "qbattery", version, about = "Quantum battery charging cycles with and without measurement")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a sweep, write results.csv and the plots.
    Sweep(SpecArgs),
    /// Run the sweep with every bound recorded, plus the oracle suites; write verify.txt.
    Verify(SpecArgs),
    /// Redraw the plots from an existing results.csv.
    Plot {
        /// CSV to read; defaults to <out>/results.csv.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Compare the pipeline with the brute-force dilation on a two-site chain.
    Oracle(SpecArgs),
}

#[derive(Args)]
struct SpecArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long = "kappa-b", value_delimiter = ',')]
    kappa_b: Vec<f64>,
    /// Measurement angle; accepts forms like `pi` or `5pi/4`.
    #[arg(long, value_delimiter = ',')]
    phi: Vec<String>,
    /// Measured charger site; `0` alone disables measured rows.
    #[arg(long, value_delimiter = ',')]
    site: Vec<usize>,
    /// Battery phases of the unmeasured rows.
    #[arg(long, value_delimiter = ',')]
    theta: Vec<String>,
    #[arg(long = "t-min")]
    t_min: Option<f64>,
    #[arg(long = "t-max")]
    t_max: Option<f64>,
    #[arg(long = "t-points")]
    t_points: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    order: Vec<String>,
}

impl SpecArgs {
    fn resolve(&self) -> Result<SweepSpec, SweepError> {
        let cfg = |m: String| SweepError::Config(m);
        let mut spec = match &self.config {
            Some(path) => parse_config_file(path)?,
            None => parse_config("")?,
        };
        if let Some(name) = &self.preset {
            let p = ModelParams::preset(name).ok_or_else(|| cfg(format!("unknown preset `{name}`")))?;
            spec.params = p;
            spec.kappa_b_values = vec![p.kappa_b];
        }
        if let Some(out) = &self.out {
            spec.out_dir = out.clone();
        }
        if let Some(j) = self.jobs {
            spec.jobs = j;
        }
        if !self.kappa_b.is_empty() {
            spec.kappa_b_values = self.kappa_b.clone();
        }
        if !self.phi.is_empty() {
            spec.phis = self.phi.iter().map(|s| parse_angle(s)).collect::<Result<_, _>>()?;
        }
        if self.site == [0] {
            spec.sites.clear();
        } else if !self.site.is_empty() {
            spec.sites = self.site.clone();
        }
        if !self.theta.is_empty() {
            spec.thetas = self.theta.iter().map(|s| parse_angle(s)).collect::<Result<_, _>>()?;
        }
        if let Some(x) = self.t_min {
            spec.grid.min = x;
            spec.temperatures.clear();
        }
        if let Some(x) = self.t_max {
            spec.grid.max = x;
            spec.temperatures.clear();
        }
        if let Some(x) = self.t_points {
            spec.grid.count = x;
            spec.temperatures.clear();
        }
        if !self.order.is_empty() {
            spec.orders = self
                .order
                .iter()
                .map(|s| s.parse::<EventOrder>().map_err(|e| cfg(e.to_string())))
                .collect::<Result<_, _>>()?;
        }
        spec.validate()?;
        Ok(spec)
    }
}

fn run(cli: Cli) -> Result<(), SweepError> {
    match cli.command {
        Command::Sweep(args) => {
            let spec = args.resolve()?;
            let rows = run_sweep(&spec)?;
            ensure_dir(&spec.out_dir)?;
            let csv = spec.out_dir.join("results.csv");
            write_csv(&rows, &csv)?;
            println!("wrote {} rows to {}", rows.len(), csv.display());
            if spec.temperature_values().len() < 2 {
                println!("single temperature; plots skipped");
            } else {
                for p in emit_plots(&rows, &spec.out_dir)? {
                    println!("wrote {}", p.display());
                }
            }
            Ok(())
        }
        Command::Verify(args) => {
            let spec = args.resolve()?;
            let report = run_verification(&spec)?;
            let text = report.render();
            ensure_dir(&spec.out_dir)?;
            write_text(&spec.out_dir.join("verify.txt"), &text)?;
            print!("{text}");
            if report.passed() {
                Ok(())
            } else {
                Err(SweepError::Verification(report.failed_checks().join(", ")))
            }
        }
        Command::Plot { csv, out } => {
            let csv = csv.unwrap_or_else(|| out.join("results.csv"));
            let rows = read_csv(&csv)?;
            ensure_dir(&out)?;
            for p in emit_plots(&rows, &out)? {
                println!("wrote {}", p.display());
            }
            Ok(())
        }
        Command::Oracle(args) => {
            let spec = args.resolve()?;
            let s = oracle_comparison(&spec)?;
            println!(
                "oracle: {} comparisons, max discrepancy {:.3e} (tolerance {:.1e})",
                s.samples, s.worst, s.tolerance
            );
            if s.passed() {
                Ok(())
            } else {
                Err(SweepError::Verification(format!("oracle discrepancy at {}", s.worst_tuple)))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
