use std::process::ExitCode;

use env_logger::Env;

fn main() -> ExitCode {
    env_logger::Builder::from_env(Env::new().filter_or("APE_LOG", "warn")).init();
    ape_cli::main_with(std::env::args_os())
}
