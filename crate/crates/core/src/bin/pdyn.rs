fn main() {
    let code = pdyn::io::cli::run(std::env::args_os(), &mut std::io::stdout());
    std::process::exit(code);
}
