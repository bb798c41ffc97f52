use clap::Parser;
use symcap_cli::{execute, Cli};

fn main() {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(text) => print!("{text}"),
        Err(f) => {
            eprintln!("error[{}]: {}", f.name, f.message);
            std::process::exit(f.code);
        }
    }
}
