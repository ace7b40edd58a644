fn main() {
    std::process::exit(frepel::main_with_args(std::env::args_os()));
}
