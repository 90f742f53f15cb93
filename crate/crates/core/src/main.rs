use clap::Parser;

use dirac_afunc::cli::{configure_threads_from_env, resolve, run, CliArgs};

fn main() {
    let args = CliArgs::parse();
    let code = match configure_threads_from_env().and_then(|()| resolve(&args)) {
        Ok(cfg) => {
            let summary = run(&cfg);
            match serde_json::to_string_pretty(&summary) {
                Ok(text) => println!("{text}"),
                Err(e) => eprintln!("error: {e}"),
            }
            summary.exit_code
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    std::process::exit(code);
}
