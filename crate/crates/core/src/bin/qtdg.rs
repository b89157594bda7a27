use clap::Parser;
use qtdg::cli::{execute, write_outputs, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = execute(&cli.command).and_then(|o| write_outputs(&o)) {
        eprintln!("qtdg: {e}");
        std::process::exit(1);
    }
}
