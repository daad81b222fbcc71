fn main() {
    std::process::exit(gammaflow::main_with(std::env::args_os()));
}
