fn main() {
    std::process::exit(lightpose::cli::main(std::env::args_os()));
}
