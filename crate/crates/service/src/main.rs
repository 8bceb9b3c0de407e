use std::path::PathBuf;

use bayesdoe_service::{serve, ServiceConfig};
use clap::Parser;

/// Serve bayesdoe campaigns over HTTP.
#[derive(Debug, Parser)]
#[command(name = "bayesdoe-service", version)]
struct Args {
    /// Directory holding campaign files.
    #[arg(long, env = bayesdoe_service::DIR_VAR, default_value = ".")]
    dir: PathBuf,
    #[arg(long, env = bayesdoe_service::PORT_VAR, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Origin allowed to call the service from a browser; any when absent.
    #[arg(long, env = "BAYESDOE_CORS_ORIGIN")]
    cors_origin: Option<String>,
}

#[tokio::main]
async fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let config = ServiceConfig {
        dir: args.dir,
        host: args.host,
        port: args.port,
        cors_origin: args.cors_origin,
    };
    if let Err(e) = serve(config).await {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
