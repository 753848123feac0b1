fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let stdout = std::io::stdout();
    if let Err(e) = ccc_cli::run(std::env::args_os(), &mut stdout.lock()) {
        eprintln!("ccc: {e}");
        std::process::exit(e.exit_code());
    }
}
