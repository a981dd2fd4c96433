fn main() {
    std::process::exit(dentseg_cli::run(std::env::args_os()));
}
