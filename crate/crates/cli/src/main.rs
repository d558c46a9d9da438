use std::path::{Path, PathBuf};
use std::process::ExitCode;

use affine_formation::scenario::{self, ScenarioError};
use affine_formation::verify;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "affine-formation", version, about = "Design, analyse and simulate affine formation maneuvers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write trajectory.csv, metadata.json and spectral_report.json
    Run {
        scenario: PathBuf,
        /// Output root (overrides AFFINE_FORMATION_OUT and the scenario's output_dir)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write design.json (L, gain spectrum, motion basis, h_l) without simulating
    Design {
        scenario: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the property battery and print a table of checks
    Verify {
        #[arg(long, default_value_t = verify::DEFAULT_SEED)]
        seed: u64,
    },
    /// Run every *.json scenario in a directory concurrently
    Batch {
        dir: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn fail(path: &Path, e: &ScenarioError) -> u8 {
    eprintln!("error: {}: {e}", path.display());
    e.exit_code() as u8
}

fn run_one(path: &Path, out: Option<&Path>) -> Result<String, ScenarioError> {
    let loaded = scenario::load(path)?;
    let s = scenario::run(&loaded, out)?;
    let mut msg = format!(
        "{}: cases [{}], h = {}, h_l = {}, {} samples, final shape error {:.3e}",
        s.name,
        s.labels.join(", "),
        s.h,
        s.h_l.map_or("n/a".to_string(), |v| format!("{v:.6}")),
        s.samples,
        s.final_shape_error,
    );
    if let Some(rate) = s.decay_rate {
        msg.push_str(&format!(", decay rate {rate:.4}"));
    }
    if let Some(e) = s.analytic_max_error {
        msg.push_str(&format!(", analytic max error {e:.3e}"));
    }
    msg.push_str(&format!(" -> {}", s.output_dir.display()));
    for w in &s.warnings {
        msg.push_str(&format!("\n  warning: {w}"));
    }
    Ok(msg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { scenario, out } => match run_one(&scenario, out.as_deref()) {
            Ok(msg) => {
                println!("{msg}");
                ExitCode::SUCCESS
            }
            Err(e) => ExitCode::from(fail(&scenario, &e)),
        },
        Command::Design { scenario: path, out } => {
            let result = scenario::load(&path).and_then(|l| scenario::design(&l, out.as_deref()));
            match result {
                Ok((file, bundle)) => {
                    println!(
                        "{}: {} zero eigenvalues, h_l = {} -> {}",
                        bundle["name"].as_str().unwrap_or(""),
                        bundle["weights"]["zero_eigenvalues"],
                        bundle["stability_bound"]["h_l"],
                        file.display()
                    );
                    if let Some(ws) = bundle["warnings"].as_array() {
                        for w in ws {
                            println!("  warning: {}", w.as_str().unwrap_or(""));
                        }
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => ExitCode::from(fail(&path, &e)),
            }
        }
        Command::Verify { seed } => {
            let report = verify::run_battery(seed);
            print!("{}", report.table());
            if report.all_passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
        Command::Batch { dir, out } => {
            let files = match scenario::scenario_files(&dir) {
                Ok(f) => f,
                Err(e) => return ExitCode::from(fail(&dir, &e)),
            };
            let results: Vec<(PathBuf, Result<String, ScenarioError>)> = std::thread::scope(|s| {
                let handles: Vec<_> = files
                    .iter()
                    .map(|f| {
                        let out = out.as_deref();
                        s.spawn(move || run_one(f, out))
                    })
                    .collect();
                files
                    .iter()
                    .cloned()
                    .zip(handles.into_iter().map(|h| h.join().expect("scenario thread panicked")))
                    .collect()
            });
            let mut code = 0u8;
            for (path, r) in &results {
                match r {
                    Ok(msg) => println!("{msg}"),
                    Err(e) => code = code.max(fail(path, e)),
                }
            }
            println!("{} scenarios, {} failed", results.len(), results.iter().filter(|r| r.1.is_err()).count());
            ExitCode::from(code)
        }
    }
}
