fn main() {
    std::process::exit(gradlab::main_with(std::env::args_os()));
}
