use bayeskit_cli::{run, RunConfig};
use clap::Parser;

fn main() {
    let config = RunConfig::parse();
    match run(&config) {
        Ok(manifest) => {
            println!("{}", manifest.path().display());
            if !manifest.converged {
                eprintln!("error: fit stopped at the iteration cap before converging");
                std::process::exit(5);
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
