#![allow(dead_code)]

use std::net::SocketAddr;

use streamrc_server::{bind, ServeConfig};
use tokio::sync::oneshot;

pub struct Running {
    pub line: SocketAddr,
    pub http: Option<SocketAddr>,
    stop: Option<oneshot::Sender<()>>,
    task: tokio::task::JoinHandle<()>,
}

impl Running {
    pub async fn stop(mut self) {
        let _ = self.stop.take().unwrap().send(());
        self.task.await.unwrap();
    }
}

pub async fn start(base_seed: u64, http: bool) -> Running {
    let config = ServeConfig { port: 0, http_port: http.then_some(0), base_seed, ..ServeConfig::default() };
    let bound = bind(&config).await.unwrap();
    let (line, http) = (bound.line_addr, bound.http_addr);
    let (tx, rx) = oneshot::channel();
    let task = tokio::spawn(async move {
        bound
            .serve(async {
                let _ = rx.await;
            })
            .await
            .unwrap()
    });
    Running { line, http, stop: Some(tx), task }
}
