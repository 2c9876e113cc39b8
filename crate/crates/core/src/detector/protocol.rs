//! Wire messages exchanged with an external detector process, one JSON
//! document per line over its standard streams.
//!
//! ```text
//! -> {"type":"hello","version":1}
//! <- {"type":"ready","classes":["text","puzzle","image","button"]}
//! -> {"type":"detect","id":"1","image_path":"/abs/page.png","slice":{"ax":0,"ay":480,"w":640,"h":640}}
//! <- {"type":"result","id":"1","detections":[{"cls":"text","conf":0.91,"x1":3.0,"y1":4.0,"x2":80.0,"y2":40.0}],"inference_ms":2.4}
//! <- {"type":"error","id":"1","message":"cannot read image"}
//! ```

use serde::{Deserialize, Serialize};

use super::{DetectorError, DetectorResponse, LocalDetection, SliceWindow};
use crate::model::{ClassId, PixelBox};

pub const PROTOCOL_VERSION: u32 = 1;

/// Allowed overshoot of returned boxes past the window edge.
const EDGE_SLACK_PX: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum Message {
    Hello {
        version: u32,
    },
    Ready {
        classes: Vec<String>,
    },
    Detect {
        id: String,
        image_path: String,
        slice: Option<SliceWindow>,
    },
    Result {
        id: String,
        detections: Vec<WireDetection>,
        inference_ms: f64,
    },
    Error {
        id: Option<String>,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireDetection {
    pub cls: String,
    pub conf: f64,
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl From<&LocalDetection> for WireDetection {
    fn from(d: &LocalDetection) -> Self {
        WireDetection {
            cls: d.class.name().to_string(),
            conf: d.confidence,
            x1: d.bbox.x1(),
            y1: d.bbox.y1(),
            x2: d.bbox.x2(),
            y2: d.bbox.y2(),
        }
    }
}

impl Message {
    pub fn hello() -> Self {
        Message::Hello {
            version: PROTOCOL_VERSION,
        }
    }

    pub fn ready() -> Self {
        Message::Ready {
            classes: ClassId::ALL.iter().map(|c| c.name().to_string()).collect(),
        }
    }

    /// Single-line JSON with a trailing LF.
    pub fn to_line(&self) -> String {
        let mut line = serde_json::to_string(self).expect("protocol messages always serialize");
        line.push('\n');
        line
    }

    pub fn parse(line: &str) -> Result<Message, DetectorError> {
        serde_json::from_str(line.trim_end_matches(['\r', '\n']))
            .map_err(|e| DetectorError::Malformed(format!("{e}: {line:?}")))
    }
}

/// Checks a `ready` message: every advertised class must be one of the four.
pub fn validate_ready(msg: &Message) -> Result<Vec<ClassId>, DetectorError> {
    match msg {
        Message::Ready { classes } => classes
            .iter()
            .map(|name| {
                ClassId::from_name(name)
                    .ok_or_else(|| DetectorError::SchemaViolation(format!("unknown class {name:?} in ready")))
            })
            .collect(),
        Message::Error { message, .. } => Err(DetectorError::Remote(message.clone())),
        other => Err(DetectorError::SchemaViolation(format!("expected ready, got {other:?}"))),
    }
}

/// Validates a reply to the request `id` and converts it to window-local
/// detections.
pub fn validate_result(
    msg: Message,
    id: &str,
    image_id: &str,
    window: Option<SliceWindow>,
) -> Result<DetectorResponse, DetectorError> {
    let (reply_id, detections, inference_ms) = match msg {
        Message::Result {
            id,
            detections,
            inference_ms,
        } => (id, detections, inference_ms),
        Message::Error { message, .. } => return Err(DetectorError::Remote(message)),
        other => {
            return Err(DetectorError::SchemaViolation(format!("expected result, got {other:?}")));
        }
    };
    if reply_id != id {
        return Err(DetectorError::SchemaViolation(format!("reply id {reply_id:?} does not match request {id:?}")));
    }
    if !(inference_ms.is_finite() && inference_ms >= 0.0) {
        return Err(DetectorError::SchemaViolation(format!("inference_ms {inference_ms} is not a non-negative number")));
    }
    let mut out = Vec::with_capacity(detections.len());
    for d in detections {
        let class = ClassId::from_name(&d.cls)
            .ok_or_else(|| DetectorError::SchemaViolation(format!("unknown class {:?}", d.cls)))?;
        if !(0.0..=1.0).contains(&d.conf) {
            return Err(DetectorError::SchemaViolation(format!("confidence {} outside [0, 1]", d.conf)));
        }
        let bbox = PixelBox::new(d.x1, d.y1, d.x2, d.y2)
            .map_err(|e| DetectorError::SchemaViolation(format!("bad box: {e}")))?;
        if let Some(w) = window {
            if bbox.x2() > w.w as f64 + EDGE_SLACK_PX || bbox.y2() > w.h as f64 + EDGE_SLACK_PX {
                return Err(DetectorError::SchemaViolation(format!(
                    "box {bbox:?} exceeds slice {}x{}",
                    w.w, w.h
                )));
            }
        }
        out.push(LocalDetection {
            class,
            confidence: d.conf,
            bbox,
        });
    }
    Ok(DetectorResponse {
        image_id: image_id.to_string(),
        detections: out,
        inference_ms,
    })
}
