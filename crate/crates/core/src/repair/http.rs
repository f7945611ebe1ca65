//! Minimal blocking HTTP/1.1 POST over plain TCP.

use std::io::{ErrorKind, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::time::{Duration, Instant};

use super::AdvisorError;

struct Target {
    host: String,
    port: u16,
    path: String,
}

fn parse_url(url: &str) -> Result<Target, AdvisorError> {
    let rest = url
        .strip_prefix("http://")
        .ok_or_else(|| AdvisorError::Transport(format!("only http:// endpoints are supported: {url}")))?;
    let (authority, path) = match rest.find('/') {
        Some(i) => (&rest[..i], &rest[i..]),
        None => (rest, "/"),
    };
    let (host, port) = match authority.rsplit_once(':') {
        Some((h, p)) => (h, p.parse().map_err(|_| AdvisorError::Transport(format!("bad port in {url}")))?),
        None => (authority, 80),
    };
    if host.is_empty() {
        return Err(AdvisorError::Transport(format!("missing host in {url}")));
    }
    Ok(Target {
        host: host.to_string(),
        port,
        path: path.to_string(),
    })
}

fn io_error(e: std::io::Error) -> AdvisorError {
    match e.kind() {
        ErrorKind::TimedOut | ErrorKind::WouldBlock => AdvisorError::Timeout,
        _ => AdvisorError::Transport(e.to_string()),
    }
}

fn remaining(deadline: Instant) -> Result<Duration, AdvisorError> {
    deadline
        .checked_duration_since(Instant::now())
        .filter(|d| !d.is_zero())
        .ok_or(AdvisorError::Timeout)
}

fn find(haystack: &[u8], needle: &[u8]) -> Option<usize> {
    haystack.windows(needle.len()).position(|w| w == needle)
}

fn decode_chunked(mut body: &[u8]) -> Result<Vec<u8>, AdvisorError> {
    let bad = || AdvisorError::Transport("malformed chunked body".into());
    let mut out = Vec::new();
    loop {
        let end = find(body, b"\r\n").ok_or_else(bad)?;
        let line = std::str::from_utf8(&body[..end]).map_err(|_| bad())?;
        let size = usize::from_str_radix(line.split(';').next().unwrap_or("").trim(), 16).map_err(|_| bad())?;
        body = &body[end + 2..];
        if size == 0 {
            return Ok(out);
        }
        if body.len() < size + 2 {
            return Err(bad());
        }
        out.extend_from_slice(&body[..size]);
        body = &body[size + 2..];
    }
}

/// POST `body` as JSON and return the response body of a 2xx reply. The
/// whole exchange, connect included, must finish within `timeout`.
pub fn post_json(url: &str, body: &str, timeout: Duration) -> Result<String, AdvisorError> {
    let target = parse_url(url)?;
    let deadline = Instant::now() + timeout;
    let addr = (target.host.as_str(), target.port)
        .to_socket_addrs()
        .map_err(io_error)?
        .next()
        .ok_or_else(|| AdvisorError::Transport(format!("cannot resolve {}", target.host)))?;
    let mut stream = TcpStream::connect_timeout(&addr, remaining(deadline)?).map_err(io_error)?;
    stream.set_write_timeout(Some(remaining(deadline)?)).map_err(io_error)?;
    let request = format!(
        "POST {} HTTP/1.1\r\nHost: {}:{}\r\nContent-Type: application/json\r\nAccept: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
        target.path,
        target.host,
        target.port,
        body.len(),
        body
    );
    stream.write_all(request.as_bytes()).map_err(io_error)?;

    let mut raw = Vec::new();
    let mut buf = [0u8; 8192];
    loop {
        stream.set_read_timeout(Some(remaining(deadline)?)).map_err(io_error)?;
        match stream.read(&mut buf) {
            Ok(0) => break,
            Ok(n) => raw.extend_from_slice(&buf[..n]),
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(io_error(e)),
        }
    }

    let split = find(&raw, b"\r\n\r\n").ok_or_else(|| AdvisorError::Transport("response has no header terminator".into()))?;
    let head = String::from_utf8_lossy(&raw[..split]).to_string();
    let mut lines = head.split("\r\n");
    let status_line = lines.next().unwrap_or_default();
    let code: u16 = status_line
        .split_whitespace()
        .nth(1)
        .and_then(|c| c.parse().ok())
        .ok_or_else(|| AdvisorError::Transport(format!("bad status line `{status_line}`")))?;
    let mut chunked = false;
    let mut length = None;
    for line in lines {
        if let Some((name, value)) = line.split_once(':') {
            let value = value.trim();
            match name.trim().to_ascii_lowercase().as_str() {
                "transfer-encoding" => chunked = value.eq_ignore_ascii_case("chunked"),
                "content-length" => length = value.parse::<usize>().ok(),
                _ => {}
            }
        }
    }
    let mut payload = &raw[split + 4..];
    let decoded;
    if chunked {
        decoded = decode_chunked(payload)?;
        payload = &decoded;
    } else if let Some(n) = length {
        payload = &payload[..n.min(payload.len())];
    }
    if !(200..300).contains(&code) {
        return Err(AdvisorError::Transport(format!("advisor replied with HTTP {code}")));
    }
    String::from_utf8(payload.to_vec()).map_err(|_| AdvisorError::MalformedResponse("response body is not UTF-8".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn url_parts() {
        let t = parse_url("http://127.0.0.1:8080/v1/repair-mode").unwrap();
        assert_eq!((t.host.as_str(), t.port, t.path.as_str()), ("127.0.0.1", 8080, "/v1/repair-mode"));
        let t = parse_url("http://advisor").unwrap();
        assert_eq!((t.port, t.path.as_str()), (80, "/"));
        assert!(parse_url("https://advisor").is_err());
    }

    #[test]
    fn chunked_bodies() {
        assert_eq!(decode_chunked(b"4\r\nWiki\r\n5;x=1\r\npedia\r\n0\r\n\r\n").unwrap(), b"Wikipedia");
        assert!(decode_chunked(b"zz\r\n").is_err());
    }
}
