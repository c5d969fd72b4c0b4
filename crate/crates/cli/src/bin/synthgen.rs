//! Standalone generator: `synthgen --config world.toml --out dir --seed S`.

use std::process::ExitCode;

use clap::Parser;
use parcel_cli::{cmd_generate, finish, GenerateArgs};

#[derive(Parser, Debug)]
#[command(name = "synthgen", version, about = "Simulate a courier world and write a dataset directory")]
struct Cli {
    #[command(flatten)]
    args: GenerateArgs,
}

fn main() -> ExitCode {
    finish(cmd_generate(&Cli::parse().args))
}
