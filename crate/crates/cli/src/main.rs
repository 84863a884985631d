use clap::Parser;
use sic_cli::{dispatch, init_threads, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = init_threads().and_then(|()| dispatch(cli.command)) {
        eprintln!("sic: {e}");
        std::process::exit(e.exit_code());
    }
}
