fn main() {
    std::process::exit(disentaforge_cli::run(std::env::args_os()));
}
