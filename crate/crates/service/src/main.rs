use std::sync::Arc;

use pb_core::VoteStore;
use pb_service::{router, AppState, ServiceConfig, ENV_ADMIN_TOKEN};

#[tokio::main]
async fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();

    let config = match ServiceConfig::from_env() {
        Ok(c) => c,
        Err(e) => {
            log::error!("{e}");
            std::process::exit(2);
        }
    };
    if config.admin_token.is_none() {
        log::warn!("{ENV_ADMIN_TOKEN} is not set; admin routes will refuse every request");
    }
    let store = match VoteStore::open(&config.data_dir) {
        Ok(s) => s,
        Err(e) => {
            log::error!("cannot open {}: {e}", config.data_dir.display());
            std::process::exit(2);
        }
    };
    log::info!(
        "loaded {} election(s) from {}",
        store.election_ids().len(),
        config.data_dir.display()
    );

    let app = router(Arc::new(AppState::new(store, config.admin_token)));
    let listener = match tokio::net::TcpListener::bind(config.listen_addr).await {
        Ok(l) => l,
        Err(e) => {
            log::error!("cannot listen on {}: {e}", config.listen_addr);
            std::process::exit(2);
        }
    };
    log::info!("listening on {}", config.listen_addr);
    let shutdown = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    if let Err(e) = axum::serve(listener, app)
        .with_graceful_shutdown(shutdown)
        .await
    {
        log::error!("server error: {e}");
        std::process::exit(1);
    }
}
