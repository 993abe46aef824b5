fn main() {
    std::process::exit(idk_bench::cli::main_with_args(std::env::args_os()));
}
