use std::io::{BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::str::FromStr;
use std::thread;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::{BenchError, BenchReport, CaseResult, Measurement};
use crate::association::{generate_provision, AssocId, Association, Mode, DEFAULT_RESYNC_WINDOW};
use crate::channel::record::{Header, HEADER_LEN};
use crate::channel::{ChannelEndpoint, ChannelError, Incoming, MsgType, MAX_PAYLOAD};

const RECORDS_PER_SAMPLE: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelCase {
    AuthOnly,
    Aead,
    /// Same framing with no tag and no cipher.
    Plaintext,
}

impl ChannelCase {
    pub fn name(self) -> &'static str {
        match self {
            ChannelCase::AuthOnly => "channel-auth",
            ChannelCase::Aead => "channel-aead",
            ChannelCase::Plaintext => "channel-plaintext",
        }
    }
}

impl FromStr for ChannelCase {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "auth" | "auth-only" | "AUTH_ONLY" => Ok(ChannelCase::AuthOnly),
            "aead" | "AEAD" => Ok(ChannelCase::Aead),
            "plaintext" | "plaintext-baseline" => Ok(ChannelCase::Plaintext),
            other => Err(BenchError::Parameter(format!("unknown channel mode `{other}`"))),
        }
    }
}

/// Buffered reads, direct writes, over one TCP connection.
struct Duplex {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl Duplex {
    fn new(stream: TcpStream) -> std::io::Result<Self> {
        stream.set_nodelay(true)?;
        Ok(Self {
            reader: BufReader::with_capacity(1 << 17, stream.try_clone()?),
            writer: stream,
        })
    }
}

impl Read for Duplex {
    fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
        self.reader.read(buf)
    }
}

impl Write for Duplex {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.writer.write(buf)
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.writer.flush()
    }
}

/// Tracks receive timing in fixed-size batches, starting at the first record.
struct Sampler {
    m: Measurement,
    batch_start: Option<Instant>,
    in_batch: u64,
}

impl Sampler {
    fn new() -> Self {
        Self {
            m: Measurement::default(),
            batch_start: None,
            in_batch: 0,
        }
    }

    fn record(&mut self) {
        let now = Instant::now();
        match self.batch_start {
            None => self.batch_start = Some(now),
            Some(start) => {
                self.in_batch += 1;
                if self.in_batch == RECORDS_PER_SAMPLE {
                    self.m.push(self.in_batch, now - start);
                    self.batch_start = Some(now);
                    self.in_batch = 0;
                }
            }
        }
    }

    fn finish(self) -> Measurement {
        self.m
    }
}

/// Sustained one-way throughput over loopback TCP: one thread sends DATA
/// records of `msg_size` bytes for `duration`, the other receives and times
/// them. Setup and handshake are outside the measurement window.
pub fn bench_channel(case: ChannelCase, msg_size: usize, duration: Duration) -> Result<BenchReport, BenchError> {
    if msg_size == 0 || msg_size > MAX_PAYLOAD {
        return Err(BenchError::Parameter(format!("message size {msg_size} outside 1..={MAX_PAYLOAD}")));
    }
    if duration.is_zero() {
        return Err(BenchError::Parameter("duration must be positive".into()));
    }
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let addr = listener.local_addr()?;
    let mode = match case {
        ChannelCase::Aead => Mode::Aead,
        _ => Mode::AuthOnly,
    };
    let (init_file, resp_file) =
        generate_provision(&mut ChaCha20Rng::seed_from_u64(0xbe7c), mode, DEFAULT_RESYNC_WINDOW)
            .map_err(|e| BenchError::Parameter(e.to_string()))?;
    let load = |f| Association::load(f).map_err(|e| BenchError::Parameter(e.to_string()));
    let (client_assoc, server_assoc) = (load(&init_file)?, load(&resp_file)?);
    let payload: Vec<u8> = (0..msg_size).map(|i| i as u8).collect();

    let receiver = thread::spawn(move || -> Result<Measurement, BenchError> {
        let (stream, _) = listener.accept()?;
        let duplex = Duplex::new(stream)?;
        match case {
            ChannelCase::Plaintext => receive_plain(duplex),
            _ => receive_sealed(ChannelEndpoint::new(server_assoc, duplex)),
        }
    });

    let duplex = Duplex::new(TcpStream::connect(addr)?)?;
    let sent = match case {
        ChannelCase::Plaintext => send_plain(duplex, client_assoc.id(), &payload, duration),
        _ => send_sealed(ChannelEndpoint::new(client_assoc, duplex), &payload, duration),
    };
    let received = receiver
        .join()
        .map_err(|_| BenchError::Parameter("receiver thread panicked".into()))?;
    sent?;
    let m = received?;
    Ok(BenchReport::new(vec![CaseResult::from_measurement(case.name(), msg_size, &m)]))
}

fn send_sealed(mut ep: ChannelEndpoint<Duplex>, payload: &[u8], duration: Duration) -> Result<(), BenchError> {
    ep.handshake()?;
    let start = Instant::now();
    while start.elapsed() < duration {
        for _ in 0..RECORDS_PER_SAMPLE {
            ep.send(payload)?;
        }
    }
    ep.close()?;
    Ok(())
}

fn receive_sealed(mut ep: ChannelEndpoint<Duplex>) -> Result<Measurement, BenchError> {
    ep.handshake()?;
    let mut sampler = Sampler::new();
    loop {
        match ep.recv()? {
            Incoming::Data(_) => sampler.record(),
            Incoming::Closed => return Ok(sampler.finish()),
        }
    }
}

fn plain_header(assoc_id: AssocId, seq: u64, msg_type: MsgType, len: usize) -> [u8; HEADER_LEN] {
    Header {
        msg_type,
        mode: Mode::AuthOnly,
        assoc_id,
        seq,
        payload_len: len as u32,
    }
    .to_bytes()
}

fn send_plain(mut io: Duplex, id: AssocId, payload: &[u8], duration: Duration) -> Result<(), BenchError> {
    let start = Instant::now();
    let mut seq = 0u64;
    let mut frame = Vec::with_capacity(HEADER_LEN + payload.len());
    while start.elapsed() < duration {
        for _ in 0..RECORDS_PER_SAMPLE {
            seq += 1;
            frame.clear();
            frame.extend_from_slice(&plain_header(id, seq, MsgType::Data, payload.len()));
            frame.extend_from_slice(payload);
            io.write_all(&frame)?;
            io.flush()?;
        }
    }
    io.write_all(&plain_header(id, seq + 1, MsgType::Close, 0))?;
    io.flush()?;
    Ok(())
}

fn receive_plain(mut io: Duplex) -> Result<Measurement, BenchError> {
    let mut sampler = Sampler::new();
    let mut header = [0u8; HEADER_LEN];
    let mut body = Vec::new();
    loop {
        io.read_exact(&mut header)?;
        let h = Header::parse(&header).map_err(ChannelError::from)?;
        body.resize(h.payload_len as usize, 0);
        io.read_exact(&mut body)?;
        match h.msg_type {
            MsgType::Data => sampler.record(),
            _ => return Ok(sampler.finish()),
        }
    }
}
