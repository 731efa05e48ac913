#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]

mod cli;

fn main() -> std::process::ExitCode {
    cli::main()
}
