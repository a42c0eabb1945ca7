use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = agritwin::cli::Cli::parse();
    let code = agritwin::cli::run(cli, &mut std::io::stdout());
    std::process::exit(code);
}
