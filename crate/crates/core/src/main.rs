use clap::Parser;
use mrp::cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    let level = if cli.common.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    std::process::exit(run(&cli));
}
