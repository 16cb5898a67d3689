//! Line-delimited JSON tool protocol.
//!
//! Each request is one line `{"id": n, "tool": "...", "args": {...}}` and is
//! answered by one line `{"id": n, "result": ...}` or
//! `{"id": n, "error": "..."}`. Responses come back in request order.

use std::io::{self, BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("tool `{tool}` failed: {message}")]
    Tool { tool: String, message: String },
    #[error("peer closed the connection")]
    Closed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub id: u64,
    pub tool: String,
    #[serde(default)]
    pub args: Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<Json>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Something that answers tool calls.
pub trait ToolHandler {
    fn tools(&self) -> Vec<&'static str>;
    fn call(&self, tool: &str, args: Json) -> Result<Json, String>;
}

/// Answers requests from `input` until end of input. Malformed lines get an
/// error response with id 0; they do not stop the loop.
pub fn serve<H, R, W>(handler: &H, input: R, mut output: W) -> io::Result<()>
where
    H: ToolHandler + ?Sized,
    R: BufRead,
    W: Write,
{
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let response = match serde_json::from_str::<Request>(&line) {
            Ok(req) if req.tool == "list_tools" => Response {
                id: req.id,
                result: Some(serde_json::json!(handler.tools())),
                error: None,
            },
            Ok(req) => match handler.call(&req.tool, req.args) {
                Ok(result) => Response {
                    id: req.id,
                    result: Some(result),
                    error: None,
                },
                Err(error) => Response {
                    id: req.id,
                    result: None,
                    error: Some(error),
                },
            },
            Err(e) => Response {
                id: 0,
                result: None,
                error: Some(format!("malformed request: {e}")),
            },
        };
        serde_json::to_writer(&mut output, &response)?;
        output.write_all(b"\n")?;
        output.flush()?;
    }
    Ok(())
}

/// Client side of the protocol over an arbitrary reader/writer pair.
pub struct Client<R, W> {
    reader: R,
    writer: W,
    next_id: u64,
}

impl<R: BufRead, W: Write> Client<R, W> {
    pub fn new(reader: R, writer: W) -> Self {
        Client {
            reader,
            writer,
            next_id: 1,
        }
    }

    pub fn call(&mut self, tool: &str, args: Json) -> Result<Json, ProtocolError> {
        let id = self.next_id;
        self.next_id += 1;
        let req = Request {
            id,
            tool: tool.to_string(),
            args,
        };
        serde_json::to_writer(&mut self.writer, &req).map_err(|e| ProtocolError::Malformed(e.to_string()))?;
        self.writer.write_all(b"\n")?;
        self.writer.flush()?;
        let mut line = String::new();
        if self.reader.read_line(&mut line)? == 0 {
            return Err(ProtocolError::Closed);
        }
        let resp: Response = serde_json::from_str(&line).map_err(|e| ProtocolError::Malformed(e.to_string()))?;
        if resp.id != id {
            return Err(ProtocolError::Malformed(format!("expected response {id}, got {}", resp.id)));
        }
        match (resp.result, resp.error) {
            (_, Some(message)) => Err(ProtocolError::Tool {
                tool: tool.to_string(),
                message,
            }),
            (Some(result), None) => Ok(result),
            (None, None) => Ok(Json::Null),
        }
    }
}

/// Anything that can carry one tool call to a handler and back.
pub trait Transport: Send {
    fn call(&mut self, tool: &str, args: Json) -> Result<Json, ProtocolError>;
}

/// Calls a handler directly, skipping serialization of the envelope.
pub struct Direct<H>(pub H);

impl<H: ToolHandler + Send> Transport for Direct<H> {
    fn call(&mut self, tool: &str, args: Json) -> Result<Json, ProtocolError> {
        self.0.call(tool, args).map_err(|message| ProtocolError::Tool {
            tool: tool.to_string(),
            message,
        })
    }
}

/// A tool server running as a child process, spoken to over its stdio.
pub struct Subprocess {
    child: Child,
    client: Client<BufReader<ChildStdout>, ChildStdin>,
}

impl Subprocess {
    pub fn spawn(program: &str, args: &[String]) -> Result<Self, ProtocolError> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = child.stdin.take().ok_or(ProtocolError::Closed)?;
        let stdout = child.stdout.take().ok_or(ProtocolError::Closed)?;
        Ok(Subprocess {
            child,
            client: Client::new(BufReader::new(stdout), stdin),
        })
    }

    pub fn call(&mut self, tool: &str, args: Json) -> Result<Json, ProtocolError> {
        self.client.call(tool, args)
    }
}

impl Transport for Subprocess {
    fn call(&mut self, tool: &str, args: Json) -> Result<Json, ProtocolError> {
        Subprocess::call(self, tool, args)
    }
}

impl Drop for Subprocess {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
