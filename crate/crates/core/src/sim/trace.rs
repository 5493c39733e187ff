use std::io::Write;

use serde::{Deserialize, Serialize};

use super::world::{ScenarioObservation, StepEvents, VehicleState};
use super::MetaAction;

/// One line of the episode trace: the state seen at a decision, the action
/// taken, and what happened while executing it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceFrame {
    pub frame: usize,
    pub time: f64,
    pub ego: VehicleState,
    pub others: Vec<VehicleState>,
    pub action: MetaAction,
    pub events: StepEvents,
}

impl TraceFrame {
    pub fn new(frame: usize, obs: &ScenarioObservation, action: MetaAction, events: StepEvents) -> Self {
        Self {
            frame,
            time: obs.time,
            ego: obs.ego.clone(),
            others: obs.others.clone(),
            action,
            events,
        }
    }
}

/// Writes frames as JSON Lines.
pub fn write_trace<W: Write>(mut out: W, frames: &[TraceFrame]) -> std::io::Result<()> {
    for frame in frames {
        serde_json::to_writer(&mut out, frame)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{observe, spawn_traffic, EnvConfig};

    #[test]
    fn trace_line_fields() {
        let state = spawn_traffic(&EnvConfig::new(2, 0.0, 1)).unwrap();
        let obs = observe(&state);
        let frame = TraceFrame::new(0, &obs, MetaAction::Idle, StepEvents::default());
        let mut buf = Vec::new();
        write_trace(&mut buf, &[frame.clone(), frame]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        let v: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        let keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        for k in ["frame", "time", "ego", "others", "action", "events"] {
            assert!(keys.contains(&k.to_string()));
        }
        assert_eq!(v["action"], "IDLE");
        assert_eq!(v["events"]["collided_with"], serde_json::Value::Null);
    }
}
