//! Line-delimited JSON scoring protocol for classifiers running outside this process.
//!
//! Requests are `{"id":k,"x":[...]}` and responses `{"id":k,"score":s}`, one per line.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::predictor::Scorer;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

/// Requests written before reading their responses.
const BATCH: usize = 256;

#[derive(Serialize, Deserialize)]
struct Request {
    id: u64,
    x: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Response {
    id: u64,
    score: f64,
}

struct Channel {
    writer: Box<dyn Write + Send>,
    lines: Receiver<std::io::Result<String>>,
    line_no: usize,
    next_id: u64,
}

/// Closes the write half on drop so the peer sees end of input.
struct SocketWriter(TcpStream);

impl Write for SocketWriter {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0.write(buf)
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.0.flush()
    }
}

impl Drop for SocketWriter {
    fn drop(&mut self) {
        let _ = self.0.shutdown(std::net::Shutdown::Write);
    }
}

/// A scorer that forwards requests to a peer process or socket.
pub struct ExternalScorer {
    dim: usize,
    timeout: Duration,
    channel: Mutex<Channel>,
    child: Option<Mutex<Child>>,
}

impl ExternalScorer {
    pub fn from_streams(
        reader: impl Read + Send + 'static,
        writer: impl Write + Send + 'static,
        dim: usize,
        timeout: Duration,
    ) -> Self {
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(reader).lines() {
                let failed = line.is_err();
                if tx.send(line).is_err() || failed {
                    break;
                }
            }
        });
        ExternalScorer {
            dim,
            timeout,
            channel: Mutex::new(Channel {
                writer: Box::new(writer),
                lines: rx,
                line_no: 0,
                next_id: 0,
            }),
            child: None,
        }
    }

    /// Run `command` through the shell and talk to it over stdin/stdout.
    pub fn spawn(command: &str, dim: usize, timeout: Duration) -> Result<Self> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let mut scorer = Self::from_streams(stdout, stdin, dim, timeout);
        scorer.child = Some(Mutex::new(child));
        Ok(scorer)
    }

    pub fn connect(addr: &str, dim: usize, timeout: Duration) -> Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        let reader = stream.try_clone()?;
        Ok(Self::from_streams(
            reader,
            SocketWriter(stream),
            dim,
            timeout,
        ))
    }

    fn exchange(&self, channel: &mut Channel, rows: &[&[f64]]) -> Result<Vec<f64>> {
        let first = channel.next_id;
        let mut buf = String::new();
        for (k, x) in rows.iter().enumerate() {
            let req = Request {
                id: first + k as u64,
                x: x.to_vec(),
            };
            buf.push_str(&serde_json::to_string(&req)?);
            buf.push('\n');
        }
        channel.next_id += rows.len() as u64;
        channel.writer.write_all(buf.as_bytes())?;
        channel.writer.flush()?;

        let deadline = Instant::now() + self.timeout;
        let mut scores: HashMap<u64, f64> = HashMap::with_capacity(rows.len());
        while scores.len() < rows.len() {
            let remaining = deadline.saturating_duration_since(Instant::now());
            let line = match channel.lines.recv_timeout(remaining) {
                Ok(line) => line?,
                Err(RecvTimeoutError::Timeout) => return Err(Error::Timeout(self.timeout)),
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(Error::Protocol {
                        line: channel.line_no + 1,
                        message: "peer closed the connection".into(),
                    })
                }
            };
            channel.line_no += 1;
            let bad = |message: String| Error::Protocol {
                line: channel.line_no,
                message,
            };
            let resp: Response =
                serde_json::from_str(&line).map_err(|e| bad(format!("malformed response: {e}")))?;
            if resp.id < first || resp.id >= first + rows.len() as u64 {
                return Err(bad(format!("unexpected response id {}", resp.id)));
            }
            if !resp.score.is_finite() {
                return Err(bad(format!("non-finite score for id {}", resp.id)));
            }
            if scores.insert(resp.id, resp.score).is_some() {
                return Err(bad(format!("duplicate response id {}", resp.id)));
            }
        }
        Ok((0..rows.len() as u64)
            .map(|k| scores[&(first + k)])
            .collect())
    }
}

impl Scorer for ExternalScorer {
    fn dim(&self) -> usize {
        self.dim
    }

    fn score_batch(&self, inputs: &[f64]) -> Result<Vec<f64>> {
        let mut channel = self.channel.lock().expect("channel lock");
        let rows: Vec<&[f64]> = inputs.chunks(self.dim).collect();
        let mut out = Vec::with_capacity(rows.len());
        for chunk in rows.chunks(BATCH) {
            out.extend(self.exchange(&mut channel, chunk)?);
        }
        Ok(out)
    }
}

impl Drop for ExternalScorer {
    fn drop(&mut self) {
        if let Some(child) = &self.child {
            let mut child = child.lock().expect("child lock");
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

/// Answer requests from `reader` with scores from `scorer` until end of input.
pub fn serve(scorer: &dyn Scorer, reader: impl BufRead, mut writer: impl Write) -> Result<()> {
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let req: Request = serde_json::from_str(&line).map_err(|e| Error::Protocol {
            line: i + 1,
            message: format!("malformed request: {e}"),
        })?;
        if req.x.len() != scorer.dim() {
            return Err(Error::Protocol {
                line: i + 1,
                message: format!("expected {} inputs, got {}", scorer.dim(), req.x.len()),
            });
        }
        let score = scorer.score_batch(&req.x)?[0];
        serde_json::to_writer(&mut writer, &Response { id: req.id, score })?;
        writer.write_all(b"\n")?;
        writer.flush()?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictor::FnScorer;
    use std::net::TcpListener;

    fn linear() -> FnScorer<impl Fn(&[f64]) -> f64 + Send + Sync> {
        FnScorer::new(2, |x: &[f64]| 0.25 * x[0] + 0.5 * x[1])
    }

    #[test]
    fn tcp_round_trip_matches_local_scores() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap().to_string();
        let server = thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let reader = BufReader::new(stream.try_clone().unwrap());
            serve(&linear(), reader, stream).unwrap();
        });
        let remote = ExternalScorer::connect(&addr, 2, DEFAULT_TIMEOUT).unwrap();
        let inputs: Vec<f64> = (0..1200).map(|i| i as f64 * 0.01).collect();
        let got = remote.score_batch(&inputs).unwrap();
        let want = linear().score_batch(&inputs).unwrap();
        assert_eq!(got, want);
        drop(remote);
        server.join().unwrap();
    }

    #[test]
    fn malformed_response_names_the_line() {
        let (mut peer_writer, reader) = std::os::unix::net::UnixStream::pair().unwrap();
        let scorer = ExternalScorer::from_streams(reader, std::io::sink(), 2, DEFAULT_TIMEOUT);
        peer_writer
            .write_all(b"{\"id\":0,\"score\":0.5}\nnot json\n")
            .unwrap();
        match scorer.score_batch(&[0.0, 0.0, 1.0, 1.0]) {
            Err(Error::Protocol { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn silent_peer_times_out() {
        let (_peer, reader) = std::os::unix::net::UnixStream::pair().unwrap();
        let scorer =
            ExternalScorer::from_streams(reader, std::io::sink(), 2, Duration::from_millis(50));
        assert!(matches!(
            scorer.score_batch(&[0.0, 0.0]),
            Err(Error::Timeout(_))
        ));
    }

    #[test]
    fn spawned_process_serves_scores() {
        // a shell peer that answers every request with a constant score
        let cmd = r#"while IFS= read -r line; do id=$(printf '%s' "$line" | sed 's/.*"id":\([0-9]*\).*/\1/'); printf '{"id":%s,"score":0.75}\n' "$id"; done"#;
        let scorer = ExternalScorer::spawn(cmd, 1, DEFAULT_TIMEOUT).unwrap();
        assert_eq!(scorer.score_batch(&[1.0, 2.0, 3.0]).unwrap(), vec![0.75; 3]);
    }
}
