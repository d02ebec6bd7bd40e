use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(fincorpus_cli::run(std::env::args_os()))
}
