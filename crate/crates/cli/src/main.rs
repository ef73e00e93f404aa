use clap::Parser;

fn main() {
    let cli = alsieve_cli::Cli::parse();
    let outcome = alsieve_cli::run(&cli);
    if outcome.exit_code == alsieve_cli::EXIT_CONFIG {
        eprintln!("{}", outcome.summary);
    } else {
        print!("{}", outcome.summary);
        for f in &outcome.files {
            println!("wrote {}", f.display());
        }
    }
    std::process::exit(outcome.exit_code);
}
