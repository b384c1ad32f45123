use clap::Parser;

#[tokio::main]
async fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = pcmg_cli::Cli::parse();
    if let Err(e) = pcmg_cli::run(cli).await {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
