//! Blocking request/response over one TCP connection with a hard deadline.

use std::io::{ErrorKind, Read};
use std::net::{TcpStream, ToSocketAddrs};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::wire::{decode_payload, write_frame, FrameBuffer, Message, QueryRequest, QueryResponse};

use super::log::{Direction, RelayLog};

#[derive(Debug, Error)]
pub enum CallError {
    #[error("unreachable: {0}")]
    Unreachable(String),
    #[error("timeout")]
    Timeout,
    #[error("protocol: {0}")]
    Protocol(String),
}

impl CallError {
    /// Reason string surfaced in error responses.
    pub fn reason(&self) -> &'static str {
        match self {
            CallError::Unreachable(_) => "unreachable",
            CallError::Timeout => "timeout",
            CallError::Protocol(_) => "protocol",
        }
    }
}

/// Longest single socket wait. Long socket timeouts land on coarse kernel
/// timer buckets and can fire hundreds of milliseconds late, so the read
/// loop waits in short slices and checks the deadline between them.
const READ_SLICE: Duration = Duration::from_millis(50);

fn remaining(deadline: Instant) -> Option<Duration> {
    deadline.checked_duration_since(Instant::now()).filter(|d| !d.is_zero())
}

/// Sends `request` to `addr` and waits for the matching response. Returns
/// the response and its raw frame bytes.
pub fn call(
    addr: &str,
    request: &QueryRequest,
    timeout: Duration,
    tap: Option<&RelayLog>,
) -> Result<(QueryResponse, Vec<u8>), CallError> {
    let deadline = Instant::now() + timeout;
    let sock = addr
        .to_socket_addrs()
        .map_err(|e| CallError::Unreachable(e.to_string()))?
        .next()
        .ok_or_else(|| CallError::Unreachable(format!("{addr} resolves to nothing")))?;
    let mut stream = TcpStream::connect_timeout(&sock, remaining(deadline).ok_or(CallError::Timeout)?).map_err(|e| {
        if matches!(e.kind(), ErrorKind::TimedOut | ErrorKind::WouldBlock) {
            CallError::Timeout
        } else {
            CallError::Unreachable(e.to_string())
        }
    })?;
    let _ = stream.set_nodelay(true);

    let sent = write_frame(&mut stream, &Message::Request(request.clone()))
        .map_err(|e| CallError::Unreachable(e.to_string()))?;
    if let Some(tap) = tap {
        tap.wire(&sent);
        tap.line(Direction::Fwd, &request.request_id, "request");
    }

    let mut frames = FrameBuffer::default();
    let mut buf = vec![0u8; 64 * 1024];
    loop {
        if let Some(frame) = frames.next_frame().map_err(|e| CallError::Protocol(e.to_string()))? {
            let response = match decode_payload(&frame[4..]) {
                Ok(Message::Response(r)) => r,
                Ok(Message::Request(_)) => return Err(CallError::Protocol("peer sent a request".into())),
                Err(e) => return Err(CallError::Protocol(e.to_string())),
            };
            if let Some(tap) = tap {
                tap.line(Direction::Ret, &response.request_id, response.status.as_str());
            }
            return Ok((response, frame));
        }
        let wait = remaining(deadline).ok_or(CallError::Timeout)?.min(READ_SLICE);
        stream.set_read_timeout(Some(wait)).map_err(|e| CallError::Unreachable(e.to_string()))?;
        match stream.read(&mut buf) {
            Ok(0) => return Err(CallError::Unreachable("connection closed before response".into())),
            Ok(n) => {
                if let Some(tap) = tap {
                    tap.wire(&buf[..n]);
                }
                frames.push(&buf[..n]);
            }
            Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {
                if remaining(deadline).is_none() {
                    return Err(CallError::Timeout);
                }
            }
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(CallError::Unreachable(e.to_string())),
        }
    }
}
