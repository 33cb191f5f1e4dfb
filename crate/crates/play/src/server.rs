//! Websocket transport: one JSON message per text frame.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use axum::routing::get;
use axum::Router;

use crate::session::SessionManager;

/// Routes: `GET /ws` upgrades to the session protocol.
pub fn router(manager: Arc<SessionManager>) -> Router {
    Router::new().route("/ws", get(upgrade)).with_state(manager)
}

async fn upgrade(ws: WebSocketUpgrade, State(manager): State<Arc<SessionManager>>) -> Response {
    ws.on_upgrade(move |socket| connection(socket, manager))
}

async fn connection(mut socket: WebSocket, manager: Arc<SessionManager>) {
    while let Some(Ok(msg)) = socket.recv().await {
        let text = match msg {
            Message::Text(t) => t,
            Message::Binary(b) => String::from_utf8_lossy(&b).into_owned(),
            Message::Close(_) => break,
            Message::Ping(_) | Message::Pong(_) => continue,
        };
        // Replies for one message are sent before the next is read, which
        // serializes each connection's requests.
        for reply in manager.handle_text(&text) {
            if socket.send(Message::Text(reply.to_line())).await.is_err() {
                return;
            }
        }
    }
}

/// Serves until the process is interrupted.
pub async fn serve(addr: SocketAddr, manager: Arc<SessionManager>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(%addr, "play service listening");
    axum::serve(listener, router(manager))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
