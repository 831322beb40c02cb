use clap::Parser;

fn main() {
    let cli = ssce_cli::Cli::parse();
    if let Err(e) = ssce_cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(ssce_cli::exit_code(&e));
    }
}
