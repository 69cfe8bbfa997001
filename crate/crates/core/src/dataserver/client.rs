use std::io::{self, BufReader, BufWriter, Cursor, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::time::Duration;

use thiserror::Error;

use super::protocol::{
    read_message, write_message, Delta, ErrorCode, FrameError, LiveStatus, Message, RunSummary,
    WireError, PROTOCOL_VERSION,
};
use crate::dataset::DataSet;
use crate::retrievers::{trf, LoadSelection, RetrieverError, Run, RunFileDirectory};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("timed out waiting for the server")]
    Timeout,
    #[error("protocol version mismatch: {0}")]
    VersionMismatch(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("server error {code:?}: {message}")]
    Server { code: ErrorCode, message: String },
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error("undecodable data reply: {0}")]
    Data(#[from] RetrieverError),
    #[error("connection closed by the server")]
    Closed,
    #[error(transparent)]
    Io(io::Error),
}

impl From<io::Error> for ClientError {
    fn from(e: io::Error) -> Self {
        match e.kind() {
            io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut => ClientError::Timeout,
            _ => ClientError::Io(e),
        }
    }
}

impl From<WireError> for ClientError {
    fn from(e: WireError) -> Self {
        match e {
            WireError::Closed => ClientError::Closed,
            WireError::Io(e) => e.into(),
            WireError::Frame(e) => e.into(),
        }
    }
}

type Result<T, E = ClientError> = std::result::Result<T, E>;

#[derive(Debug, Clone)]
pub struct ClientOptions {
    pub name: String,
    pub version: u32,
    pub timeout: Option<Duration>,
}

impl Default for ClientOptions {
    fn default() -> ClientOptions {
        ClientOptions {
            name: "tofbench client".into(),
            version: PROTOCOL_VERSION,
            timeout: Some(Duration::from_secs(30)),
        }
    }
}

/// A data reply: the source's sequence number (0 for files), the run, and
/// the body size on the wire.
#[derive(Debug, Clone, PartialEq)]
pub struct Fetched {
    pub sequence: u64,
    pub run: Run,
    pub body_bytes: u64,
}

/// Blocking client over one connection. Calls are strictly request/reply.
#[derive(Debug)]
pub struct Client {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
    server_name: String,
}

impl Client {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Client> {
        Client::connect_with(addr, ClientOptions::default())
    }

    /// Connects and negotiates the protocol version with HELLO.
    pub fn connect_with(addr: impl ToSocketAddrs, opts: ClientOptions) -> Result<Client> {
        let addrs: Vec<_> = addr.to_socket_addrs()?.collect();
        let stream = match opts.timeout {
            Some(t) => {
                let mut last =
                    io::Error::new(io::ErrorKind::InvalidInput, "no address to connect to");
                let mut ok = None;
                for a in &addrs {
                    match TcpStream::connect_timeout(a, t) {
                        Ok(s) => {
                            ok = Some(s);
                            break;
                        }
                        Err(e) => last = e,
                    }
                }
                ok.ok_or(last)?
            }
            None => TcpStream::connect(&addrs[..])?,
        };
        stream.set_read_timeout(opts.timeout)?;
        stream.set_write_timeout(opts.timeout)?;
        stream.set_nodelay(true)?;
        let mut c = Client {
            reader: BufReader::with_capacity(1 << 16, stream.try_clone()?),
            writer: BufWriter::new(stream),
            server_name: String::new(),
        };
        c.send(&Message::Hello {
            version: opts.version,
            name: opts.name,
        })?;
        match c.recv()? {
            Message::Hello { version, name } if version == opts.version => {
                c.server_name = name;
                Ok(c)
            }
            Message::Hello { version, .. } => {
                let _ = c.send(&Message::Bye);
                Err(ClientError::VersionMismatch(format!(
                    "client speaks {}, server answered {version}",
                    opts.version
                )))
            }
            Message::Error {
                code: ErrorCode::VersionMismatch,
                message,
            } => Err(ClientError::VersionMismatch(message)),
            other => Err(unexpected(other)),
        }
    }

    pub fn server_name(&self) -> &str {
        &self.server_name
    }

    /// A handle that can close this connection from another thread, e.g.
    /// to end a subscription blocked waiting for the next delta.
    pub fn abort_handle(&self) -> Result<AbortHandle> {
        Ok(AbortHandle(self.writer.get_ref().try_clone()?))
    }

    fn send(&mut self, m: &Message) -> Result<()> {
        write_message(&mut self.writer, m)?;
        self.writer.flush()?;
        Ok(())
    }

    fn recv(&mut self) -> Result<Message> {
        Ok(read_message(&mut self.reader)?)
    }

    pub fn list_runs(&mut self) -> Result<Vec<RunSummary>> {
        self.send(&Message::ListRuns)?;
        match self.recv()? {
            Message::RunList(runs) => Ok(runs),
            other => Err(unexpected(other)),
        }
    }

    pub fn run_info(&mut self, run: &str) -> Result<RunFileDirectory> {
        self.send(&Message::RunInfo { run: run.into() })?;
        match self.recv()? {
            Message::RunDirectory { directory, .. } => Ok(directory),
            other => Err(unexpected(other)),
        }
    }

    /// The selected datasets of `run`, exactly as a local
    /// [`read_runfile`](crate::retrievers::read_runfile) would return them.
    pub fn fetch(&mut self, run: &str, sel: &LoadSelection) -> Result<Vec<DataSet>> {
        Ok(self
            .fetch_run(run, sel)?
            .run
            .datasets
            .into_iter()
            .map(|d| d.data)
            .collect())
    }

    pub fn fetch_run(&mut self, run: &str, sel: &LoadSelection) -> Result<Fetched> {
        self.send(&Message::GetData {
            run: run.into(),
            selection: sel.clone(),
        })?;
        let mut body = Vec::new();
        loop {
            match self.recv()? {
                Message::Data { more, chunk } => {
                    body.extend_from_slice(&chunk);
                    if !more {
                        break;
                    }
                }
                other => return Err(unexpected(other)),
            }
        }
        let body_bytes = body.len() as u64;
        if body.len() < 8 {
            return Err(ClientError::Protocol(format!(
                "data reply of {} bytes",
                body.len()
            )));
        }
        let sequence = u64::from_le_bytes(body[..8].try_into().expect("8 bytes"));
        let image = &body[8..];
        let dir = trf::probe_from(Cursor::new(image), image.len() as u64)?;
        let run = trf::load_run_from(Cursor::new(image), &dir, &LoadSelection::all())?;
        Ok(Fetched {
            sequence,
            run,
            body_bytes,
        })
    }

    pub fn status(&mut self) -> Result<LiveStatus> {
        self.send(&Message::StatusRequest)?;
        match self.recv()? {
            Message::Status(s) => Ok(s),
            other => Err(unexpected(other)),
        }
    }

    /// Subscribes to changes after `since`. The subscription yields one
    /// delta straight away (possibly empty) and then up to `max_deltas`
    /// further ones with strictly increasing sequences; 0 streams until the
    /// subscription is dropped, which also closes the connection.
    pub fn subscribe(&mut self, since: u64, max_deltas: u32) -> Result<Subscription<'_>> {
        self.send(&Message::Subscribe { since, max_deltas })?;
        Ok(Subscription {
            client: self,
            remaining: if max_deltas == 0 {
                None
            } else {
                Some(max_deltas as u64 + 1)
            },
            unbounded: max_deltas == 0,
        })
    }

    /// Ends the session politely.
    pub fn close(mut self) -> Result<()> {
        self.send(&Message::Bye)?;
        match self.recv() {
            Ok(Message::Bye) | Err(ClientError::Closed) => Ok(()),
            Ok(other) => Err(unexpected(other)),
            Err(e) => Err(e),
        }
    }
}

fn unexpected(m: Message) -> ClientError {
    match m {
        Message::Error {
            code: ErrorCode::NotFound,
            message,
        } => ClientError::NotFound(message),
        Message::Error {
            code: ErrorCode::VersionMismatch,
            message,
        } => ClientError::VersionMismatch(message),
        Message::Error { code, message } => ClientError::Server { code, message },
        other => ClientError::Protocol(format!("unexpected {:?} reply", other.msg_type())),
    }
}

#[derive(Debug)]
pub struct AbortHandle(TcpStream);

impl AbortHandle {
    /// Shuts the connection down; pending and later calls on the client
    /// fail with [`ClientError::Closed`] or an I/O error.
    pub fn abort(&self) {
        let _ = self.0.shutdown(std::net::Shutdown::Both);
    }
}

/// Stream of deltas from [`Client::subscribe`]. Multi-frame deltas are
/// reassembled.
#[derive(Debug)]
pub struct Subscription<'a> {
    client: &'a mut Client,
    remaining: Option<u64>,
    unbounded: bool,
}

impl Subscription<'_> {
    pub fn next_delta(&mut self) -> Result<Option<Delta>> {
        if self.remaining == Some(0) {
            return Ok(None);
        }
        let mut whole: Option<Delta> = None;
        loop {
            match self.client.recv()? {
                Message::Delta(d) => {
                    let more = d.more;
                    match &mut whole {
                        None => whole = Some(d),
                        Some(w) if w.sequence == d.sequence => w.changes.extend(d.changes),
                        Some(_) => {
                            return Err(ClientError::Protocol(
                                "delta continuation changed sequence".into(),
                            ))
                        }
                    }
                    if !more {
                        break;
                    }
                }
                other => return Err(unexpected(other)),
            }
        }
        if let Some(r) = &mut self.remaining {
            *r -= 1;
        }
        Ok(whole.map(|mut d| {
            d.more = false;
            d
        }))
    }
}

impl Iterator for Subscription<'_> {
    type Item = Result<Delta>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_delta().transpose()
    }
}

impl Drop for Subscription<'_> {
    fn drop(&mut self) {
        if self.unbounded || self.remaining.is_some_and(|r| r > 0) {
            // The server is still streaming; the connection cannot be reused.
            let _ = self
                .client
                .writer
                .get_ref()
                .shutdown(std::net::Shutdown::Both);
        }
    }
}
