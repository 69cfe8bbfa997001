//! Connection handling shared by the file and live servers: thread per
//! connection, HELLO negotiation, BYE, and protocol-error replies.

use std::io::{BufReader, BufWriter, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use super::protocol::{
    read_message, write_message, ErrorCode, FrameError, Message, WireError, PROTOCOL_VERSION,
};

/// Frame sink for replies; data replies may span several frames.
pub(crate) type Out<'a> = BufWriter<&'a TcpStream>;

pub(crate) trait Handler: Send + Sync + 'static {
    fn name(&self) -> &str;

    /// Writes the replies to one request. An `Err` ends the connection.
    fn handle(&self, msg: Message, out: &mut Out<'_>, stop: &AtomicBool) -> std::io::Result<()>;

    /// Called once when the server shuts down.
    fn shutdown(&self) {}
}

/// A running server. Dropping the handle stops accepting connections;
/// connections already open finish their current exchange.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
    on_stop: Option<Box<dyn FnOnce() + Send>>,
}

impl std::fmt::Debug for ServerHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ServerHandle")
            .field("addr", &self.addr)
            .finish_non_exhaustive()
    }
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops the accept loop and waits for it to exit.
    pub fn shutdown(mut self) {
        self.stop_now();
    }

    /// Blocks until the server is shut down from elsewhere (for `serve`
    /// commands that run until killed).
    pub fn wait(mut self) {
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }

    fn stop_now(&mut self) {
        if self.stop.swap(true, Ordering::SeqCst) {
            return;
        }
        // Wake the blocking accept.
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
        if let Some(f) = self.on_stop.take() {
            f();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop_now();
    }
}

pub(crate) fn spawn<H: Handler>(
    addr: impl ToSocketAddrs,
    handler: H,
) -> std::io::Result<ServerHandle> {
    let listener = TcpListener::bind(addr)?;
    let addr = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let handler = Arc::new(handler);
    let accept = {
        let stop = Arc::clone(&stop);
        let handler = Arc::clone(&handler);
        std::thread::spawn(move || {
            for conn in listener.incoming() {
                if stop.load(Ordering::SeqCst) {
                    break;
                }
                match conn {
                    Ok(stream) => {
                        let handler = Arc::clone(&handler);
                        let stop = Arc::clone(&stop);
                        std::thread::spawn(move || {
                            let peer = stream.peer_addr().ok();
                            if let Err(e) = serve_connection(&stream, &*handler, &stop) {
                                log::debug!("connection {peer:?} ended: {e}");
                            }
                        });
                    }
                    Err(e) => log::warn!("accept failed: {e}"),
                }
            }
        })
    };
    let on_stop: Box<dyn FnOnce() + Send> = Box::new(move || handler.shutdown());
    log::info!("listening on {addr}");
    Ok(ServerHandle {
        addr,
        stop,
        accept: Some(accept),
        on_stop: Some(on_stop),
    })
}

fn serve_connection(
    stream: &TcpStream,
    handler: &dyn Handler,
    stop: &AtomicBool,
) -> std::io::Result<()> {
    stream.set_nodelay(true)?;
    let mut input = BufReader::new(stream);
    let mut out = BufWriter::with_capacity(1 << 16, stream);

    match read_message(&mut input) {
        Ok(Message::Hello { version, .. }) if version == PROTOCOL_VERSION => {
            write_message(
                &mut out,
                &Message::Hello {
                    version: PROTOCOL_VERSION,
                    name: handler.name().to_string(),
                },
            )?;
            out.flush()?;
        }
        Ok(Message::Hello { version, .. }) => {
            let msg = format!(
                "protocol version {version} not supported, server speaks {PROTOCOL_VERSION}"
            );
            write_message(&mut out, &Message::error(ErrorCode::VersionMismatch, msg))?;
            return out.flush();
        }
        Ok(other) => {
            let msg = format!("expected HELLO, got {:?}", other.msg_type());
            write_message(&mut out, &Message::error(ErrorCode::Protocol, msg))?;
            return out.flush();
        }
        Err(e) => return reply_wire_error(&mut out, e).map(|_| ()),
    }

    loop {
        match read_message(&mut input) {
            Ok(Message::Bye) => {
                write_message(&mut out, &Message::Bye)?;
                return out.flush();
            }
            Ok(Message::Hello { .. }) => {
                write_message(
                    &mut out,
                    &Message::error(ErrorCode::Protocol, "already greeted"),
                )?;
            }
            Ok(msg) => handler.handle(msg, &mut out, stop)?,
            Err(e) => {
                if !reply_wire_error(&mut out, e)? {
                    return Ok(());
                }
            }
        }
        out.flush()?;
    }
}

/// Answers a read failure; `Ok(true)` when the stream is still usable.
fn reply_wire_error(out: &mut Out<'_>, e: WireError) -> std::io::Result<bool> {
    match e {
        WireError::Closed => Ok(false),
        WireError::Io(e) => Err(e),
        WireError::Frame(FrameError::Oversize(n)) => {
            write_message(
                out,
                &Message::error(ErrorCode::TooLarge, format!("frame of {n} bytes refused")),
            )?;
            out.flush()?;
            Ok(false)
        }
        WireError::Frame(e) => {
            write_message(out, &Message::error(ErrorCode::Protocol, e.to_string()))?;
            out.flush()?;
            Ok(true)
        }
    }
}

/// Sends a reply body as a sequence of `Data` frames of at most `chunk`
/// bytes each.
pub(crate) fn send_chunked(out: &mut Out<'_>, body: &[u8], chunk: usize) -> std::io::Result<()> {
    let chunk = chunk.max(1);
    let mut pieces = body.chunks(chunk).peekable();
    if pieces.peek().is_none() {
        return write_message(
            out,
            &Message::Data {
                more: false,
                chunk: vec![],
            },
        );
    }
    while let Some(p) = pieces.next() {
        write_message(
            out,
            &Message::Data {
                more: pieces.peek().is_some(),
                chunk: p.to_vec(),
            },
        )?;
    }
    Ok(())
}
