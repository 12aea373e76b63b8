use std::process::ExitCode;

fn main() -> ExitCode {
    crackdyn::cli::main()
}
