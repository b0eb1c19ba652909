use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    std::process::exit(blockscene_cli::run(blockscene_cli::Cli::parse()));
}
