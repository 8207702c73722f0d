use std::io;

fn main() {
    let code =
        novelty_repair::cli::cli_main(std::env::args_os(), &mut io::stdout(), &mut io::stderr());
    std::process::exit(code);
}
