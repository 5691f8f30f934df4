use clap::Parser;

fn main() {
    let cli = hrg_cli::opts::Cli::parse();
    match hrg_cli::dispatch(cli) {
        Ok(()) => {}
        Err(err) => {
            eprintln!("error: {err}");
            std::process::exit(hrg_cli::exit_code(&err));
        }
    }
}
