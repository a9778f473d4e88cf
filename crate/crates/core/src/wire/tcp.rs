//! Framed TCP transport, one instance per node.
//!
//! Outbound connections are opened on demand from an address book and kept.
//! Every connection, inbound or outbound, gets a reader thread that decodes
//! frames into the node's inbox. The peer behind an outbound connection is the
//! party we dialled; the peer behind an inbound connection is whoever its first
//! frame names itself as ([`Message::claimed_sender`]), or a fresh anonymous
//! `User` id. Replies to that id go back over the same connection.

use std::collections::{BTreeMap, VecDeque};
use std::io::{Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU32, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use super::transport::Transport;
use super::{Envelope, FrameHeader, PartyId, WireError, HEADER_LEN};

/// First id handed to anonymous inbound peers.
pub const ANONYMOUS_BASE: u32 = 1 << 24;

pub fn write_frame<W: Write>(w: &mut W, envelope: &Envelope) -> Result<(), WireError> {
    w.write_all(&envelope.encode())?;
    w.flush()?;
    Ok(())
}

/// Reads exactly one frame. The payload buffer is sized from the header only
/// after the 16 MiB limit has been checked.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Envelope, WireError> {
    let mut header = [0u8; HEADER_LEN];
    r.read_exact(&mut header)?;
    let header = FrameHeader::parse(&header)?;
    let mut payload = vec![0u8; header.payload_len];
    r.read_exact(&mut payload)?;
    Envelope::from_parts(&header, &payload)
}

type Inbox = (Mutex<VecDeque<(PartyId, Envelope)>>, Condvar);

#[derive(Debug)]
struct Shared {
    inbox: Inbox,
    conns: Mutex<BTreeMap<PartyId, Arc<Mutex<TcpStream>>>>,
    next_anonymous: AtomicU32,
    closed: AtomicBool,
}

impl Shared {
    fn push(&self, from: PartyId, env: Envelope) {
        self.inbox.0.lock().expect("inbox poisoned").push_back((from, env));
        self.inbox.1.notify_all();
    }

    fn register(&self, peer: &PartyId, stream: &TcpStream) -> Result<(), WireError> {
        let mut conns = self.conns.lock().expect("connections poisoned");
        if !conns.contains_key(peer) {
            conns.insert(peer.clone(), Arc::new(Mutex::new(stream.try_clone()?)));
        }
        Ok(())
    }

    fn spawn_reader(self: &Arc<Self>, stream: TcpStream, known_peer: Option<PartyId>) {
        let shared = Arc::clone(self);
        std::thread::spawn(move || {
            let mut stream = stream;
            let mut peer = known_peer;
            loop {
                let env = match read_frame(&mut stream) {
                    Ok(env) => env,
                    Err(e) => {
                        if !shared.closed.load(Ordering::SeqCst) && !matches!(e, WireError::Io(_)) {
                            log::warn!("dropping connection after bad frame: {e}");
                        }
                        break;
                    }
                };
                let from = match &peer {
                    Some(p) => p.clone(),
                    None => {
                        let p = env.message.claimed_sender().unwrap_or_else(|| {
                            PartyId::User(ANONYMOUS_BASE + shared.next_anonymous.fetch_add(1, Ordering::SeqCst))
                        });
                        if shared.register(&p, &stream).is_err() {
                            break;
                        }
                        peer = Some(p.clone());
                        p
                    }
                };
                shared.push(from, env);
            }
            if let Some(p) = peer {
                shared.conns.lock().expect("connections poisoned").remove(&p);
            }
        });
    }
}

#[derive(Debug)]
pub struct TcpTransport {
    me: PartyId,
    local_addr: SocketAddr,
    book: BTreeMap<PartyId, SocketAddr>,
    shared: Arc<Shared>,
}

impl TcpTransport {
    /// Listens on `listen` (port 0 picks a free port) and dials peers from
    /// `book` on first send.
    pub fn bind(me: PartyId, listen: SocketAddr, book: BTreeMap<PartyId, SocketAddr>) -> Result<Arc<Self>, WireError> {
        let listener = TcpListener::bind(listen)?;
        let local_addr = listener.local_addr()?;
        let shared = Arc::new(Shared {
            inbox: (Mutex::new(VecDeque::new()), Condvar::new()),
            conns: Mutex::new(BTreeMap::new()),
            next_anonymous: AtomicU32::new(0),
            closed: AtomicBool::new(false),
        });
        let accept_shared = Arc::clone(&shared);
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                if accept_shared.closed.load(Ordering::SeqCst) {
                    break;
                }
                match stream {
                    Ok(s) => {
                        let _ = s.set_nodelay(true);
                        accept_shared.spawn_reader(s, None);
                    }
                    Err(e) => log::warn!("accept failed: {e}"),
                }
            }
        });
        Ok(Arc::new(Self { me, local_addr, book, shared }))
    }

    /// A node that only dials out (a user client).
    pub fn client(me: PartyId, book: BTreeMap<PartyId, SocketAddr>) -> Result<Arc<Self>, WireError> {
        Self::bind(me, "127.0.0.1:0".parse().expect("literal address"), book)
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    pub fn me(&self) -> &PartyId {
        &self.me
    }

    pub fn set_peer(&mut self, peer: PartyId, addr: SocketAddr) {
        self.book.insert(peer, addr);
    }

    fn connection(&self, dst: &PartyId) -> Result<Arc<Mutex<TcpStream>>, WireError> {
        if let Some(c) = self.shared.conns.lock().expect("connections poisoned").get(dst) {
            return Ok(Arc::clone(c));
        }
        let addr = self.book.get(dst).ok_or_else(|| WireError::Io(format!("no address for {dst}")))?;
        let stream = TcpStream::connect(addr)?;
        let _ = stream.set_nodelay(true);
        self.shared.spawn_reader(stream.try_clone()?, Some(dst.clone()));
        let conn = Arc::new(Mutex::new(stream));
        self.shared.conns.lock().expect("connections poisoned").insert(dst.clone(), Arc::clone(&conn));
        Ok(conn)
    }

    pub fn recv_timeout(&self, timeout: Duration) -> Result<Option<(PartyId, Envelope)>, WireError> {
        let (lock, cv) = &self.shared.inbox;
        let mut inbox = lock.lock().expect("inbox poisoned");
        let deadline = std::time::Instant::now() + timeout;
        loop {
            if let Some(item) = inbox.pop_front() {
                return Ok(Some(item));
            }
            if self.shared.closed.load(Ordering::SeqCst) {
                return Err(WireError::Io("transport closed".into()));
            }
            let now = std::time::Instant::now();
            if now >= deadline {
                return Ok(None);
            }
            inbox = cv.wait_timeout(inbox, deadline - now).expect("inbox poisoned").0;
        }
    }

    pub fn close(&self) {
        self.shared.closed.store(true, Ordering::SeqCst);
        for c in self.shared.conns.lock().expect("connections poisoned").values() {
            let _ = c.lock().expect("stream poisoned").shutdown(Shutdown::Both);
        }
        // Unblock the accept loop.
        let _ = TcpStream::connect(self.local_addr);
        self.shared.inbox.1.notify_all();
    }
}

impl Transport for TcpTransport {
    fn send(&self, _src: &PartyId, dst: &PartyId, envelope: &Envelope) -> Result<(), WireError> {
        let conn = self.connection(dst)?;
        let result = write_frame(&mut *conn.lock().expect("stream poisoned"), envelope);
        if result.is_err() {
            self.shared.conns.lock().expect("connections poisoned").remove(dst);
        }
        result
    }

    fn recv(&self, _me: &PartyId) -> Result<(PartyId, Envelope), WireError> {
        loop {
            if let Some(item) = self.recv_timeout(Duration::from_secs(3600))? {
                return Ok(item);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wire::Message;

    #[test]
    fn request_reply_over_localhost() {
        let any: SocketAddr = "127.0.0.1:0".parse().unwrap();
        let fa = TcpTransport::bind(PartyId::Fa, any, BTreeMap::new()).unwrap();
        let book = BTreeMap::from([(PartyId::Fa, fa.local_addr())]);
        let bs = TcpTransport::bind(PartyId::Bs, any, book).unwrap();

        let claim = Envelope::new([1; 16], Message::ClaimBs { bsid: "bs".into(), token: vec![1, 2, 3] });
        bs.send(&PartyId::Bs, &PartyId::Fa, &claim).unwrap();
        let (from, got) = fa.recv(&PartyId::Fa).unwrap();
        assert_eq!((from.clone(), got), (PartyId::Bs, claim));

        let reply = Envelope::new([1; 16], Message::ClaimResult { status: 0, amount: 5 });
        fa.send(&PartyId::Fa, &from, &reply).unwrap();
        assert_eq!(bs.recv(&PartyId::Bs).unwrap(), (PartyId::Fa, reply));
        fa.close();
        bs.close();
    }

    #[test]
    fn read_frame_rejects_oversized_header_without_allocating() {
        let mut frame = Envelope::new([0; 16], Message::UserAbort).encode();
        frame[22..26].copy_from_slice(&u32::MAX.to_be_bytes());
        assert_eq!(read_frame(&mut frame.as_slice()), Err(WireError::PayloadTooLarge(u32::MAX as usize)));
    }
}
