fn main() {
    std::process::exit(sl2_anomaly::cli::main_with_args(std::env::args_os()));
}
