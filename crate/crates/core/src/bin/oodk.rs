fn main() {
    std::process::exit(oodk_core::cli::run(std::env::args_os()));
}
