//! Relay observation log: structured lines `ts | direction | request_id | status`
//! plus the raw byte stream the relay saw on its sockets.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Frame received on an accepted connection.
    Recv,
    /// Frame written back on an accepted connection.
    Send,
    /// Request forwarded to a remote relay.
    Fwd,
    /// Response returned by a remote relay.
    Ret,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Recv => "recv",
            Direction::Send => "send",
            Direction::Fwd => "fwd",
            Direction::Ret => "ret",
        }
    }
}

#[derive(Debug, Default)]
pub struct RelayLog {
    lines: Mutex<Vec<String>>,
    wire: Mutex<Vec<u8>>,
    wire_file: Option<Mutex<File>>,
    echo: bool,
}

impl RelayLog {
    pub fn new(wire_file: Option<&Path>, echo: bool) -> std::io::Result<Self> {
        let wire_file = wire_file
            .map(|p| OpenOptions::new().create(true).append(true).open(p).map(Mutex::new))
            .transpose()?;
        Ok(Self { wire_file, echo, ..Self::default() })
    }

    pub fn line(&self, direction: Direction, request_id: &[u8], status: &str) {
        let ts = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis());
        let id = if request_id.is_empty() { "-".to_string() } else { hex::encode(request_id) };
        let line = format!("{ts} | {} | {id} | {status}", direction.as_str());
        if self.echo {
            println!("{line}");
        }
        self.lines.lock().expect("log poisoned").push(line);
    }

    pub fn wire(&self, bytes: &[u8]) {
        self.wire.lock().expect("log poisoned").extend_from_slice(bytes);
        if let Some(f) = &self.wire_file {
            let _ = f.lock().expect("log poisoned").write_all(bytes);
        }
    }

    pub fn lines(&self) -> Vec<String> {
        self.lines.lock().expect("log poisoned").clone()
    }

    pub fn wire_bytes(&self) -> Vec<u8> {
        self.wire.lock().expect("log poisoned").clone()
    }
}
