use clap::Parser;
use gravlink::cli::{run, Cli};

fn main() {
    std::process::exit(run(Cli::parse()));
}
