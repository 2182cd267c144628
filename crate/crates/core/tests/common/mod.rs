#![allow(dead_code)]

use std::collections::VecDeque;
use std::sync::{Arc, Mutex};

use axum::http::StatusCode;
use axum::Router;

/// Serves `app` on an ephemeral port from its own runtime thread and
/// returns the base URL. The server lives until the test process exits.
pub fn serve(app: Router) -> String {
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()
            .unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, app).await.unwrap();
        });
    });
    format!("http://{}", rx.recv().unwrap())
}

/// Canned replies handed out in order; the last one repeats.
#[derive(Clone)]
pub struct Script {
    replies: Arc<Mutex<VecDeque<(StatusCode, String)>>>,
    pub hits: Arc<Mutex<usize>>,
}

impl Script {
    pub fn new(replies: Vec<(StatusCode, String)>) -> Self {
        Self {
            replies: Arc::new(Mutex::new(replies.into())),
            hits: Arc::new(Mutex::new(0)),
        }
    }

    pub fn next(&self) -> (StatusCode, String) {
        *self.hits.lock().unwrap() += 1;
        let mut replies = self.replies.lock().unwrap();
        if replies.len() > 1 {
            replies.pop_front().unwrap()
        } else {
            replies.front().cloned().unwrap()
        }
    }

    pub fn hits(&self) -> usize {
        *self.hits.lock().unwrap()
    }
}
