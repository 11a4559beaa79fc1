//! TCP transport: one stream per pair of logical processes.
//!
//! Every LP listens on its own socket. During setup LP `i` connects to each
//! LP `j < i` and introduces itself with its id as a big-endian `u32`, then
//! accepts one connection from each `j > i`. Frames on the wire are the
//! envelopes themselves; their header carries the payload length. A reader
//! thread per peer feeds a single queue, which keeps per-link FIFO order.

use std::io::{self, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::thread;
use std::time::Duration;

use crossbeam_channel::{unbounded, Receiver, RecvTimeoutError, Sender, TryRecvError};
use parsim_core::lp::LpId;
use parsim_core::transport::{Envelope, Transport, ENVELOPE_HEADER_LEN};
use parsim_core::{Error, Result};

type Incoming = std::result::Result<(LpId, Vec<u8>), String>;

pub struct TcpTransport {
    lp: LpId,
    peers: Vec<Option<TcpStream>>,
    rx: Receiver<Incoming>,
    watchdog: Duration,
}

fn io_err(what: &str, e: io::Error) -> Error {
    Error::Transport(format!("{what}: {e}"))
}

fn read_frame(s: &mut TcpStream) -> io::Result<Option<Vec<u8>>> {
    let mut head = [0u8; ENVELOPE_HEADER_LEN];
    match s.read_exact(&mut head) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let len = Envelope::payload_len_from_header(&head);
    let mut frame = Vec::with_capacity(ENVELOPE_HEADER_LEN + len);
    frame.extend_from_slice(&head);
    frame.resize(ENVELOPE_HEADER_LEN + len, 0);
    s.read_exact(&mut frame[ENVELOPE_HEADER_LEN..])?;
    Ok(Some(frame))
}

fn spawn_reader(mut s: TcpStream, from: LpId, tx: Sender<Incoming>) {
    thread::spawn(move || loop {
        match read_frame(&mut s) {
            Ok(Some(f)) => {
                if tx.send(Ok((from, f))).is_err() {
                    return;
                }
            }
            // peer finished; it only closes after the final barrier
            Ok(None) => return,
            Err(e) => {
                let _ = tx.send(Err(format!("reading from LP {}: {e}", from.0)));
                return;
            }
        }
    });
}

impl TcpTransport {
    /// Joins the mesh. `addrs[j]` is where LP `j` listens; `listener` must
    /// be this LP's own socket, bound before any address was handed out.
    pub fn connect(lp: LpId, listener: TcpListener, addrs: &[SocketAddr], watchdog: Duration) -> Result<Self> {
        let n = addrs.len();
        if lp.index() >= n {
            return Err(Error::Transport(format!("LP {} outside a mesh of {n}", lp.0)));
        }
        let mut peers: Vec<Option<TcpStream>> = (0..n).map(|_| None).collect();
        for (j, addr) in addrs.iter().enumerate().take(lp.index()) {
            let mut s = TcpStream::connect(addr).map_err(|e| io_err(&format!("connecting to LP {j}"), e))?;
            s.write_all(&lp.0.to_be_bytes()).map_err(|e| io_err("handshake", e))?;
            peers[j] = Some(s);
        }
        for _ in lp.index() + 1..n {
            let (mut s, _) = listener.accept().map_err(|e| io_err("accepting a peer", e))?;
            s.set_read_timeout(Some(watchdog)).map_err(|e| io_err("handshake", e))?;
            let mut id = [0u8; 4];
            s.read_exact(&mut id).map_err(|e| io_err("handshake", e))?;
            s.set_read_timeout(None).map_err(|e| io_err("handshake", e))?;
            let j = u32::from_be_bytes(id) as usize;
            if j <= lp.index() || j >= n || peers[j].is_some() {
                return Err(Error::Transport(format!("unexpected handshake from LP {j}")));
            }
            peers[j] = Some(s);
        }
        let (tx, rx) = unbounded();
        for (j, s) in peers.iter().enumerate() {
            if let Some(s) = s {
                s.set_nodelay(true).map_err(|e| io_err("socket option", e))?;
                let r = s.try_clone().map_err(|e| io_err("socket clone", e))?;
                spawn_reader(r, LpId(j as u32), tx.clone());
            }
        }
        Ok(TcpTransport { lp, peers, rx, watchdog })
    }

    fn take(&self, r: Incoming) -> Result<(LpId, Vec<u8>)> {
        r.map_err(Error::Transport)
    }
}

/// A whole mesh inside one process, for tests and benchmarks.
pub fn local_mesh(n: usize, watchdog: Duration) -> Result<Vec<TcpTransport>> {
    let listeners = (0..n)
        .map(|_| TcpListener::bind("127.0.0.1:0"))
        .collect::<io::Result<Vec<_>>>()
        .map_err(|e| io_err("bind", e))?;
    let addrs = listeners
        .iter()
        .map(|l| l.local_addr())
        .collect::<io::Result<Vec<_>>>()
        .map_err(|e| io_err("bind", e))?;
    thread::scope(|s| {
        let handles: Vec<_> = listeners
            .into_iter()
            .enumerate()
            .map(|(i, l)| {
                let addrs = &addrs;
                s.spawn(move || TcpTransport::connect(LpId(i as u32), l, addrs, watchdog))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("mesh setup thread")).collect()
    })
}

impl Transport for TcpTransport {
    fn local_lp(&self) -> LpId {
        self.lp
    }

    fn lp_count(&self) -> usize {
        self.peers.len()
    }

    fn send(&mut self, to: LpId, bytes: Vec<u8>) -> Result<()> {
        let s = self
            .peers
            .get_mut(to.index())
            .and_then(Option::as_mut)
            .ok_or_else(|| Error::Transport(format!("no connection to LP {}", to.0)))?;
        s.write_all(&bytes).map_err(|e| io_err(&format!("sending to LP {}", to.0), e))
    }

    fn recv(&mut self) -> Result<(LpId, Vec<u8>)> {
        match self.rx.recv_timeout(self.watchdog) {
            Ok(r) => self.take(r),
            Err(RecvTimeoutError::Timeout) => Err(Error::Watchdog(format!(
                "LP {} received nothing for {:?}",
                self.lp.0, self.watchdog
            ))),
            Err(RecvTimeoutError::Disconnected) => Err(Error::Transport("every peer closed its connection".into())),
        }
    }

    fn try_recv(&mut self) -> Result<Option<(LpId, Vec<u8>)>> {
        match self.rx.try_recv() {
            Ok(r) => self.take(r).map(Some),
            // a lone LP has no readers; polling it is not an error
            Err(TryRecvError::Empty | TryRecvError::Disconnected) => Ok(None),
        }
    }
}

impl Drop for TcpTransport {
    fn drop(&mut self) {
        for s in self.peers.iter().flatten() {
            let _ = s.shutdown(std::net::Shutdown::Both);
        }
    }
}
