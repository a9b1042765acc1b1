//! Command-line entry point.

fn main() -> std::process::ExitCode {
    llc_lab::cli::run(std::env::args_os())
}
