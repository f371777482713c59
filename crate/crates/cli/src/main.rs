use std::process::ExitCode;

fn main() -> ExitCode {
    imvote::main_with(std::env::args_os())
}
