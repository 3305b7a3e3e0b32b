use clap::Parser;

fn main() {
    let cli = imela_cli::Cli::parse();
    if let Err(e) = imela_cli::execute(&cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
