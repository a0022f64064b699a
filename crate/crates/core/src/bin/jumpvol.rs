use clap::Parser;
use jumpvol::cli::{main_with_args, CliArgs};

fn main() {
    if let Some(n) = std::env::var("JUMPVOL_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    std::process::exit(main_with_args(CliArgs::parse()));
}
