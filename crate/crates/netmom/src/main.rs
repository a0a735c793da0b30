fn main() {
    std::process::exit(netmom::cli::run(std::env::args_os()));
}
