fn main() {
    std::process::exit(ocp_cli::cli_main(std::env::args_os()));
}
