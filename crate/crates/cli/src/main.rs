use clap::Parser;

fn main() {
    let cli = emzkit_cli::Cli::parse();
    std::process::exit(emzkit_cli::run(&cli));
}
