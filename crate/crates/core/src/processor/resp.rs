//! Minimal RESP2 client: just enough for `GET` and `SET ... EX`.

use std::time::Duration;

use async_trait::async_trait;
use tokio::io::{AsyncBufReadExt, AsyncReadExt, AsyncWriteExt, BufStream};
use tokio::net::TcpStream;
use tokio::sync::Mutex;

use super::cache::ExternalCache;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum RespValue {
    Simple(String),
    Error(String),
    Integer(i64),
    Bulk(Option<Vec<u8>>),
    Array(Option<Vec<RespValue>>),
}

pub fn encode_command(args: &[&[u8]]) -> Vec<u8> {
    let mut out = format!("*{}\r\n", args.len()).into_bytes();
    for a in args {
        out.extend_from_slice(format!("${}\r\n", a.len()).as_bytes());
        out.extend_from_slice(a);
        out.extend_from_slice(b"\r\n");
    }
    out
}

fn protocol(msg: impl Into<String>) -> Error {
    Error::Io(format!("resp protocol: {}", msg.into()))
}

async fn read_line<R: AsyncBufReadExt + Unpin>(r: &mut R) -> Result<String> {
    let mut line = Vec::new();
    let n = r.read_until(b'\n', &mut line).await?;
    if n == 0 {
        return Err(protocol("connection closed"));
    }
    if !line.ends_with(b"\r\n") {
        return Err(protocol("line without CRLF"));
    }
    line.truncate(line.len() - 2);
    String::from_utf8(line).map_err(|_| protocol("non-utf8 header"))
}

pub async fn read_value<R: AsyncBufReadExt + Unpin + Send>(r: &mut R) -> Result<RespValue> {
    let line = read_line(r).await?;
    let (tag, rest) = line.split_at(line.len().min(1));
    let int = |s: &str| s.parse::<i64>().map_err(|_| protocol(format!("bad integer {s:?}")));
    Ok(match tag {
        "+" => RespValue::Simple(rest.to_string()),
        "-" => RespValue::Error(rest.to_string()),
        ":" => RespValue::Integer(int(rest)?),
        "$" => {
            let len = int(rest)?;
            if len < 0 {
                RespValue::Bulk(None)
            } else {
                let mut buf = vec![0u8; len as usize + 2];
                r.read_exact(&mut buf).await?;
                buf.truncate(len as usize);
                RespValue::Bulk(Some(buf))
            }
        }
        "*" => {
            let len = int(rest)?;
            if len < 0 {
                RespValue::Array(None)
            } else {
                let mut items = Vec::with_capacity(len as usize);
                for _ in 0..len {
                    items.push(Box::pin(read_value(r)).await?);
                }
                RespValue::Array(Some(items))
            }
        }
        other => return Err(protocol(format!("unknown type byte {other:?}"))),
    })
}

/// Single lazily (re)connected connection; commands are serialized.
pub struct RespClient {
    addr: String,
    timeout: Duration,
    conn: Mutex<Option<BufStream<TcpStream>>>,
}

impl RespClient {
    pub fn new(addr: impl Into<String>, timeout: Duration) -> Self {
        let addr = addr.into();
        let addr = addr.strip_prefix("redis://").unwrap_or(&addr).trim_end_matches('/').to_string();
        Self {
            addr,
            timeout,
            conn: Mutex::new(None),
        }
    }

    pub fn addr(&self) -> &str {
        &self.addr
    }

    pub async fn command(&self, args: &[&[u8]]) -> Result<RespValue> {
        let mut guard = self.conn.lock().await;
        let fut = async {
            if guard.is_none() {
                let stream = TcpStream::connect(&self.addr).await?;
                stream.set_nodelay(true)?;
                *guard = Some(BufStream::new(stream));
            }
            let conn = guard.as_mut().expect("connected above");
            conn.write_all(&encode_command(args)).await?;
            conn.flush().await?;
            read_value(conn).await
        };
        let result = match tokio::time::timeout(self.timeout, fut).await {
            Ok(r) => r,
            Err(_) => Err(Error::Io(format!("resp command to {} timed out", self.addr))),
        };
        if result.is_err() {
            // drop a possibly half-read connection
            *guard = None;
        }
        result
    }
}

#[async_trait]
impl ExternalCache for RespClient {
    async fn get(&self, key: &str) -> Result<Option<String>> {
        match self.command(&[b"GET", key.as_bytes()]).await? {
            RespValue::Bulk(None) => Ok(None),
            RespValue::Bulk(Some(v)) => String::from_utf8(v).map(Some).map_err(|_| protocol("non-utf8 value")),
            RespValue::Error(e) => Err(protocol(e)),
            other => Err(protocol(format!("unexpected GET reply {other:?}"))),
        }
    }

    async fn set(&self, key: &str, value: &str, ttl: Duration) -> Result<()> {
        let secs = ttl.as_secs().max(1).to_string();
        match self
            .command(&[b"SET", key.as_bytes(), value.as_bytes(), b"EX", secs.as_bytes()])
            .await?
        {
            RespValue::Simple(_) => Ok(()),
            RespValue::Error(e) => Err(protocol(e)),
            other => Err(protocol(format!("unexpected SET reply {other:?}"))),
        }
    }
}
