use std::process::ExitCode;

fn main() -> ExitCode {
    outage_lab::cli::run()
}
