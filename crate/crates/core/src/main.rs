use clap::Parser;
use kdrive::cli::{execute, init_logging, Cli};

fn main() {
    let cli = Cli::parse();
    init_logging(cli.log.as_deref());
    if let Err(err) = execute(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}
