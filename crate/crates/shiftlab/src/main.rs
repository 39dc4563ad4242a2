fn main() {
    let code = shiftlab::cli::run(std::env::args_os());
    std::process::exit(code);
}
