use clap::Parser;
use rewardsmith_cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        let msg = serde_json::json!({"error": e.kind(), "message": e.to_string()});
        eprintln!("{msg}");
        std::process::exit(e.exit_code());
    }
}
