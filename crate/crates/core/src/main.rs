use std::process::ExitCode;

fn main() -> ExitCode {
    annsynth::cli::main()
}
