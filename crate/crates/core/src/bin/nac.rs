use clap::Parser;

fn main() {
    env_logger::init();
    let cli = nac::cli::Cli::parse();
    match nac::cli::run(cli) {
        Ok(out) => print!("{out}"),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
