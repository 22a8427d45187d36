use clap::Parser;

fn main() {
    let args = semiwave::cli::Args::parse();
    std::process::exit(semiwave::cli::main_with(&args));
}
