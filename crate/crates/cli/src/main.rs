mod args;
mod commands;
mod failure;

use clap::Parser;

use args::{Cli, Command};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SABLOCK_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Gen(a) => commands::gen(&cli.global, a),
        Command::Compress(a) => commands::compress(&cli.global, a),
        Command::Compare(a) => commands::compare(&cli.global, a),
        Command::Sweep(a) => commands::sweep(&cli.global, a),
        Command::Metrics(a) => commands::metrics(&cli.global, a),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.code());
    }
}
