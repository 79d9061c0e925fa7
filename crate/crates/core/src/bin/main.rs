fn main() {
    std::process::exit(uav_cloudlet::cli::main_with_args(std::env::args_os()));
}
