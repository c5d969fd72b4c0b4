use std::process::ExitCode;

use clap::Parser;
use parcel_cli::{finish, run, Cli};

fn main() -> ExitCode {
    finish(run(Cli::parse()))
}
