use clap::Parser;

fn main() {
    let cli = sbic_cli::Cli::parse();
    if let Err(e) = sbic_cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
