use clap::Parser;
use ris_pilot::cli::{main_with, Cli};

fn main() -> std::process::ExitCode {
    main_with(Cli::parse())
}
