use gpnas::harness::cli::cli_main;

fn main() {
    let code = cli_main(std::env::args_os(), &mut std::io::stdout(), &mut std::io::stderr());
    std::process::exit(code);
}
