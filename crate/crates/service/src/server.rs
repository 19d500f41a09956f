//! Socket front end: one reader and one writer thread per stream
//! connection, one thread per console (HTTP / WebSocket) connection. All of
//! them talk to the scheduler through [`Event`]s and [`Outbound`] queues.

use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::path::{Component, Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::Sender;
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use tungstenite::protocol::Role as WsRole;
use tungstenite::WebSocket;

use crate::outbound::{Outbound, Pop};
use crate::protocol::{read_message, write_message, ErrorCode, ErrorMsg, Message, ReadError};
use crate::scheduler::{ConnId, Event};

/// Path of the WebSocket endpoint on the console port.
pub const WS_PATH: &str = "/ws";
const MAX_HEAD: usize = 16 * 1024;
const POLL: Duration = Duration::from_millis(20);

const PLACEHOLDER_INDEX: &str = "<!doctype html>\n<html><head><meta charset=\"utf-8\"><title>rfnode console</title></head>\n<body><p>Console assets are not installed. Point <code>console_dir</code> at a built console.</p>\n<p>Message endpoint: <code>/ws</code></p></body></html>\n";

#[derive(Debug, Clone)]
pub struct ListenConfig {
    pub listen: SocketAddr,
    pub console: Option<SocketAddr>,
    pub console_dir: Option<PathBuf>,
    pub queue_pixel_cap: usize,
    pub max_payload: usize,
}

/// Running listeners. Dropping the handle does not stop them; call
/// [`Listeners::stop`].
pub struct Listeners {
    pub stream_addr: SocketAddr,
    pub console_addr: Option<SocketAddr>,
    stop: Arc<AtomicBool>,
    threads: Vec<JoinHandle<()>>,
}

impl Listeners {
    pub fn stop(self) {
        self.stop.store(true, Ordering::Relaxed);
        for t in self.threads {
            let _ = t.join();
        }
    }
}

struct Shared {
    events: Sender<Event>,
    next_id: AtomicU64,
    stop: Arc<AtomicBool>,
    cap: usize,
    max_payload: usize,
    console_dir: Option<PathBuf>,
}

impl Shared {
    fn open(&self) -> Option<(ConnId, Outbound)> {
        let conn = self.next_id.fetch_add(1, Ordering::Relaxed);
        let outbound = Outbound::new(self.cap);
        self.events
            .send(Event::Connected { conn, outbound: outbound.clone() })
            .ok()?;
        Some((conn, outbound))
    }
}

pub fn spawn_listeners(config: &ListenConfig, events: Sender<Event>) -> io::Result<Listeners> {
    let stop = Arc::new(AtomicBool::new(false));
    let shared = Arc::new(Shared {
        events,
        next_id: AtomicU64::new(1),
        stop: stop.clone(),
        cap: config.queue_pixel_cap,
        max_payload: config.max_payload,
        console_dir: config.console_dir.clone(),
    });
    let stream_listener = TcpListener::bind(config.listen)?;
    let stream_addr = stream_listener.local_addr()?;
    let mut threads = vec![accept_loop(stream_listener, shared.clone(), handle_stream)?];
    let mut console_addr = None;
    if let Some(addr) = config.console {
        let l = TcpListener::bind(addr)?;
        console_addr = Some(l.local_addr()?);
        threads.push(accept_loop(l, shared, handle_console)?);
    }
    Ok(Listeners {
        stream_addr,
        console_addr,
        stop,
        threads,
    })
}

fn accept_loop(
    listener: TcpListener,
    shared: Arc<Shared>,
    handler: fn(TcpStream, Arc<Shared>),
) -> io::Result<JoinHandle<()>> {
    listener.set_nonblocking(true)?;
    Ok(thread::spawn(move || {
        while !shared.stop.load(Ordering::Relaxed) {
            match listener.accept() {
                Ok((stream, _)) => {
                    let _ = stream.set_nonblocking(false);
                    let _ = stream.set_nodelay(true);
                    let s = shared.clone();
                    thread::spawn(move || handler(stream, s));
                }
                Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(POLL),
                Err(e) => {
                    log::warn!("accept failed: {e}");
                    thread::sleep(POLL);
                }
            }
        }
    }))
}

fn handle_stream(stream: TcpStream, shared: Arc<Shared>) {
    let Some((conn, outbound)) = shared.open() else { return };
    let Ok(write_half) = stream.try_clone() else {
        let _ = shared.events.send(Event::Disconnected { conn });
        return;
    };
    let writer = {
        let outbound = outbound.clone();
        thread::spawn(move || stream_writer(write_half, outbound))
    };
    let mut reader = BufReader::new(stream);
    loop {
        if shared.stop.load(Ordering::Relaxed) {
            break;
        }
        match read_message(&mut reader, shared.max_payload) {
            Ok(Some(msg)) => {
                if shared.events.send(Event::Message { conn, msg }).is_err() {
                    break;
                }
            }
            Ok(None) => break,
            Err(ReadError::Protocol(e)) => {
                outbound.push(Message::Error(ErrorMsg {
                    request_id: 0,
                    code: ErrorCode::Protocol,
                    message: e.to_string(),
                }));
                break;
            }
            Err(ReadError::Io(_)) => break,
        }
    }
    let _ = shared.events.send(Event::Disconnected { conn });
    outbound.close();
    let _ = writer.join();
}

fn stream_writer(mut stream: TcpStream, outbound: Outbound) {
    loop {
        match outbound.pop(POLL * 5) {
            Pop::Message(m) => {
                if write_message(&mut stream, &m).is_err() {
                    break;
                }
            }
            Pop::Empty => {}
            Pop::Closed => break,
        }
    }
    let _ = stream.flush();
    let _ = stream.shutdown(Shutdown::Both);
}

/// Parsed request line and the headers we care about.
#[derive(Debug, Default, PartialEq)]
pub struct HttpHead {
    pub method: String,
    pub path: String,
    pub upgrade_websocket: bool,
    pub ws_key: Option<String>,
}

pub fn parse_http_head(text: &str) -> Option<HttpHead> {
    let mut lines = text.split("\r\n");
    let mut first = lines.next()?.split(' ');
    let method = first.next()?.to_string();
    let target = first.next()?;
    let version = first.next()?;
    if !version.starts_with("HTTP/1.") || first.next().is_some() {
        return None;
    }
    let path = target.split(['?', '#']).next().unwrap_or("").to_string();
    let mut head = HttpHead {
        method,
        path,
        ..Default::default()
    };
    for line in lines {
        let Some((name, value)) = line.split_once(':') else { continue };
        let value = value.trim();
        match name.trim().to_ascii_lowercase().as_str() {
            "upgrade" => head.upgrade_websocket = value.eq_ignore_ascii_case("websocket"),
            "sec-websocket-key" => head.ws_key = Some(value.to_string()),
            _ => {}
        }
    }
    Some(head)
}

fn read_head(reader: &mut BufReader<TcpStream>) -> io::Result<String> {
    let mut head = Vec::new();
    loop {
        let mut line = Vec::new();
        let n = reader.by_ref().take(MAX_HEAD as u64).read_until(b'\n', &mut line)?;
        if n == 0 {
            return Err(io::ErrorKind::UnexpectedEof.into());
        }
        head.extend_from_slice(&line);
        if head.len() > MAX_HEAD {
            return Err(io::ErrorKind::InvalidData.into());
        }
        if line == b"\r\n" || line == b"\n" {
            break;
        }
    }
    String::from_utf8(head).map_err(|_| io::ErrorKind::InvalidData.into())
}

fn handle_console(stream: TcpStream, shared: Arc<Shared>) {
    let _ = stream.set_read_timeout(Some(Duration::from_secs(10)));
    let mut reader = BufReader::new(stream);
    let Ok(text) = read_head(&mut reader) else { return };
    let mut stream = reader.into_inner();
    let Some(head) = parse_http_head(&text) else {
        let _ = respond(&mut stream, 400, "text/plain", b"bad request\n", false);
        return;
    };
    if head.path == WS_PATH && head.upgrade_websocket {
        let Some(key) = head.ws_key else {
            let _ = respond(&mut stream, 400, "text/plain", b"missing Sec-WebSocket-Key\n", false);
            return;
        };
        let accept = tungstenite::handshake::derive_accept_key(key.as_bytes());
        let response = format!(
            "HTTP/1.1 101 Switching Protocols\r\nUpgrade: websocket\r\nConnection: Upgrade\r\nSec-WebSocket-Accept: {accept}\r\n\r\n"
        );
        if stream.write_all(response.as_bytes()).is_err() {
            return;
        }
        websocket_session(stream, shared);
        return;
    }
    let head_only = head.method == "HEAD";
    if head.method != "GET" && !head_only {
        let _ = respond(&mut stream, 405, "text/plain", b"method not allowed\n", false);
        return;
    }
    match static_asset(shared.console_dir.as_deref(), &head.path) {
        Ok((body, mime)) => {
            let _ = respond(&mut stream, 200, mime, &body, head_only);
        }
        Err(status) => {
            let _ = respond(&mut stream, status, "text/plain", b"not found\n", head_only);
        }
    }
}

fn respond(stream: &mut TcpStream, status: u16, mime: &str, body: &[u8], head_only: bool) -> io::Result<()> {
    let reason = match status {
        200 => "OK",
        400 => "Bad Request",
        403 => "Forbidden",
        404 => "Not Found",
        405 => "Method Not Allowed",
        _ => "Error",
    };
    let header = format!(
        "HTTP/1.1 {status} {reason}\r\nContent-Type: {mime}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
        body.len()
    );
    stream.write_all(header.as_bytes())?;
    if !head_only {
        stream.write_all(body)?;
    }
    stream.flush()
}

fn mime_for(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()).unwrap_or("") {
        "html" | "htm" => "text/html; charset=utf-8",
        "js" | "mjs" => "text/javascript; charset=utf-8",
        "css" => "text/css; charset=utf-8",
        "json" | "map" => "application/json",
        "svg" => "image/svg+xml",
        "png" => "image/png",
        "ico" => "image/x-icon",
        "wasm" => "application/wasm",
        "txt" => "text/plain; charset=utf-8",
        _ => "application/octet-stream",
    }
}

/// Resolves a request path inside `root`. Paths with parent or root
/// components are refused with 403.
pub fn resolve_asset(root: &Path, url_path: &str) -> Result<PathBuf, u16> {
    let rel = url_path.trim_start_matches('/');
    let rel = if rel.is_empty() || rel.ends_with('/') { format!("{rel}index.html") } else { rel.to_string() };
    if rel.contains('\\') || rel.contains('\0') {
        return Err(403);
    }
    let rel_path = Path::new(&rel);
    if !rel_path.components().all(|c| matches!(c, Component::Normal(_))) {
        return Err(403);
    }
    Ok(root.join(rel_path))
}

fn static_asset(root: Option<&Path>, url_path: &str) -> Result<(Vec<u8>, &'static str), u16> {
    let index = matches!(url_path, "/" | "/index.html");
    if let Some(root) = root {
        let path = resolve_asset(root, url_path)?;
        if let Ok(body) = std::fs::read(&path) {
            return Ok((body, mime_for(&path)));
        }
    }
    if index {
        return Ok((PLACEHOLDER_INDEX.as_bytes().to_vec(), "text/html; charset=utf-8"));
    }
    Err(404)
}

fn websocket_session(stream: TcpStream, shared: Arc<Shared>) {
    let Some((conn, outbound)) = shared.open() else { return };
    let _ = stream.set_read_timeout(Some(POLL));
    let mut ws = WebSocket::from_raw_socket(stream, WsRole::Server, None);
    'session: loop {
        if shared.stop.load(Ordering::Relaxed) {
            break;
        }
        match ws.read() {
            Ok(tungstenite::Message::Binary(data)) => match Message::decode_channel(&data) {
                Ok(msg) => {
                    if shared.events.send(Event::Message { conn, msg }).is_err() {
                        break;
                    }
                }
                Err(e) => {
                    let err = Message::Error(ErrorMsg {
                        request_id: 0,
                        code: ErrorCode::Protocol,
                        message: e.to_string(),
                    });
                    let _ = ws.send(tungstenite::Message::Binary(err.encode_channel().into()));
                    break;
                }
            },
            Ok(tungstenite::Message::Close(_)) => break,
            Ok(_) => {}
            Err(tungstenite::Error::Io(e))
                if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {}
            Err(_) => break,
        }
        loop {
            match outbound.pop(Duration::ZERO) {
                Pop::Message(m) => {
                    if ws.send(tungstenite::Message::Binary(m.encode_channel().into())).is_err() {
                        break 'session;
                    }
                }
                Pop::Empty => break,
                Pop::Closed => {
                    let _ = ws.close(None);
                    let _ = ws.flush();
                    break 'session;
                }
            }
        }
    }
    let _ = shared.events.send(Event::Disconnected { conn });
    outbound.close();
}
