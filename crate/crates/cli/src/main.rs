fn main() {
    let env = std::env::vars().collect();
    std::process::exit(burgers_lab_cli::run(std::env::args_os(), &env));
}
