#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;
use std::thread::JoinHandle;

use bias_attribution::protocol::handle;
use bias_attribution_core::ScoringBackend;

pub fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

pub struct Request {
    pub method: String,
    pub path: String,
    pub body: Vec<u8>,
    pub authorization: Option<String>,
}

pub struct Response {
    pub status: u16,
    pub body: String,
    pub headers: Vec<(String, String)>,
}

impl Response {
    pub fn new(status: u16, body: impl Into<String>) -> Self {
        Self {
            status,
            body: body.into(),
            headers: Vec::new(),
        }
    }

    pub fn header(mut self, name: &str, value: &str) -> Self {
        self.headers.push((name.to_string(), value.to_string()));
        self
    }
}

/// A local HTTP server answering every request with `respond`.
pub struct TestServer {
    server: Arc<tiny_http::Server>,
    worker: Option<JoinHandle<()>>,
    pub url: String,
}

impl TestServer {
    pub fn start<F>(respond: F) -> Self
    where
        F: Fn(Request) -> Response + Send + Sync + 'static,
    {
        let server = Arc::new(tiny_http::Server::http("127.0.0.1:0").expect("bind test server"));
        let url = format!("http://{}", server.server_addr().to_ip().expect("ip listener"));
        let respond = Arc::new(respond);
        let srv = server.clone();
        let worker = std::thread::spawn(move || {
            std::thread::scope(|s| {
                for mut request in srv.incoming_requests() {
                    let respond = respond.clone();
                    s.spawn(move || {
                        let mut body = Vec::new();
                        let _ = request.as_reader().read_to_end(&mut body);
                        let authorization = request
                            .headers()
                            .iter()
                            .find(|h| h.field.equiv("Authorization"))
                            .map(|h| h.value.as_str().to_string());
                        let reply = respond(Request {
                            method: request.method().as_str().to_string(),
                            path: request.url().to_string(),
                            body,
                            authorization,
                        });
                        let mut response = tiny_http::Response::from_string(reply.body)
                            .with_status_code(reply.status)
                            .with_header(
                                tiny_http::Header::from_bytes("Content-Type", "application/json").unwrap(),
                            );
                        for (k, v) in reply.headers {
                            response = response.with_header(tiny_http::Header::from_bytes(k, v).unwrap());
                        }
                        let _ = request.respond(response);
                    });
                }
            });
        });
        Self {
            server,
            worker: Some(worker),
            url,
        }
    }

    /// Serves the wire protocol from `backend`.
    pub fn serve<B: ScoringBackend + Send + Sync + 'static>(backend: B) -> Self {
        let backend = Arc::new(backend);
        Self::start(move |r| {
            let reply = handle(&*backend, &r.method, &r.path, &r.body);
            Response::new(reply.status, reply.body)
        })
    }
}

impl Drop for TestServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}
