//! Command-line front end and HTTP session service.

pub mod args;
pub mod commands;
pub mod error;
pub mod service;

use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::Context as _;
use args::{Cli, Command, LayoutAction, ValidateTarget};
use commands::Context;
use error::{Classify, Failure};
use service::{NoiseConfig, ServiceConfig, ServiceState};

/// Runs one parsed invocation, writing normal output to `out` and warnings to
/// `err`.
pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), Failure> {
    let ctx = Context::new(cli.common)?;
    match cli.command {
        Command::Decode { taps, candidates, json } => commands::cmd_decode(&ctx, &taps, candidates, json, out),
        Command::Simulate => commands::cmd_simulate(&ctx, out),
        Command::Metrics { dir } => commands::cmd_metrics(&ctx, &dir, out, err),
        Command::Validate { target } => match target {
            ValidateTarget::Lexicon { path } => commands::cmd_validate_lexicon(&path, out),
            ValidateTarget::Layout { layout } => commands::cmd_validate_layout(&layout, out),
            ValidateTarget::Phrases { path } => commands::cmd_validate_phrases(&ctx, &path, out),
        },
        Command::Calibrate { profile, target_cer, tolerance } => {
            commands::cmd_calibrate(&ctx, &profile, target_cer, tolerance, out)
        }
        Command::Layout { action: LayoutAction::Export } => commands::cmd_layout_export(&ctx, out),
        Command::Serve { addr, static_dir, jitter_mm, latency_ms } => {
            let noise = NoiseConfig { jitter_mm, latency_ms };
            cmd_serve(&ctx, &addr, static_dir, noise, out)
        }
    }
}

/// Builds the service state from the resolved inputs.
pub fn service_state(ctx: &Context, noise: NoiseConfig, log_dir: Option<PathBuf>) -> Result<service::SharedState, Failure> {
    let layout = ctx.layout(commands::DEFAULT_LAYOUT)?;
    let (lexicon, _) = ctx.lexicon()?;
    let phrases = ctx.phrases(&lexicon)?;
    Ok(ServiceState::new(ServiceConfig {
        default_layout: layout,
        lexicon,
        phrases: Arc::new(phrases),
        seed: ctx.seed(),
        noise,
        log_dir,
    }))
}

pub fn cmd_serve(
    ctx: &Context,
    addr: &str,
    static_dir: Option<PathBuf>,
    noise: NoiseConfig,
    out: &mut dyn Write,
) -> Result<(), Failure> {
    let addr: SocketAddr = addr.parse().map_err(|e| Failure::usage(format!("address `{addr}`: {e}")))?;
    if !(noise.jitter_mm.is_finite() && noise.jitter_mm >= 0.0 && noise.latency_ms.is_finite() && noise.latency_ms >= 0.0) {
        return Err(Failure::usage("noise defaults must be finite and non-negative"));
    }
    let log_dir = ctx.out_dir().join("sessions");
    let state = service_state(ctx, noise, Some(log_dir.clone()))?;
    let mut app = service::router(Arc::clone(&state));
    if let Some(dir) = static_dir {
        if !dir.is_dir() {
            return Err(Failure::data(anyhow::anyhow!("static directory {} not found", dir.display())));
        }
        app = app.fallback_service(tower_http::services::ServeDir::new(dir));
    }

    let runtime = tokio::runtime::Runtime::new().runtime_err()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("binding {addr}")).runtime_err()?;
        let local = listener.local_addr().runtime_err()?;
        writeln!(out, "serving on http://{local} (logs to {})", log_dir.display()).runtime_err()?;
        out.flush().runtime_err()?;
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .runtime_err()?;
        let written = service::flush_all(&state).await.context("flushing session logs").runtime_err()?;
        log::info!("flushed {written} session logs");
        Ok(())
    })
}
