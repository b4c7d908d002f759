use clap::Parser;
use powergame_cli::commands::{execute, Cli};

fn main() {
    env_logger::Builder::new().filter_level(log::LevelFilter::Warn).init();
    let cli = Cli::parse();
    if let Err(e) = execute(&cli) {
        eprintln!("powergame: {e}");
        std::process::exit(e.exit_code());
    }
}
