use std::collections::HashSet;

use proctor_core::{normalize_name, GridLayout, Roster, StudentRecord};
use proctor_ocr::font;
use serde::{Deserialize, Serialize};

use crate::face::label_width;
use crate::SynthError;

/// Display names used by the demo scripts. All fit a 1080p 5×5 label, and
/// none is a substring of another.
pub const DEMO_NAMES: [&str; 25] = [
    "CHAN TAI MAN",
    "LI MING",
    "WONG KA YAN",
    "ZHANG WEI",
    "LAU CHI KIN",
    "HO SIU FUNG",
    "CHEUNG MEI",
    "NG WING SZE",
    "TAM HOI YEE",
    "KWOK PUI",
    "YEUNG TSZ",
    "LEUNG KIT",
    "SO MAN WAI",
    "FUNG YAT",
    "CHOW LOK",
    "MAK SHUN",
    "LAM HIU TUNG",
    "TSANG YUK",
    "POON CHUN",
    "KO SZE WAN",
    "TSE HO YIN",
    "YIP KAR",
    "LO PAK HEI",
    "CHU WING",
    "SIN KWAN",
];

/// Seconds `[start_s, end_s)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start_s: u64,
    pub end_s: u64,
}

impl Span {
    pub fn new(start_s: u64, end_s: u64) -> Self {
        Self { start_s, end_s }
    }

    pub fn contains(&self, second: u64) -> bool {
        (self.start_s..self.end_s).contains(&second)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticipantScript {
    pub name: String,
    #[serde(default)]
    pub student_id: Option<String>,
    /// Which synthetic face to draw; defaults to the participant's index.
    #[serde(default)]
    pub identity: Option<u32>,
    #[serde(default)]
    pub join_s: u64,
    /// Exclusive; `None` stays until the end.
    #[serde(default)]
    pub leave_s: Option<u64>,
    /// Camera on, person away: the name label stays but no face is drawn.
    #[serde(default)]
    pub absences: Vec<Span>,
}

impl ParticipantScript {
    pub fn new(name: &str) -> Self {
        Self {
            name: name.into(),
            student_id: None,
            identity: None,
            join_s: 0,
            leave_s: None,
            absences: Vec::new(),
        }
    }

    pub fn in_meeting(&self, second: u64) -> bool {
        second >= self.join_s && self.leave_s.map_or(true, |l| second < l)
    }

    pub fn face_visible(&self, second: u64) -> bool {
        self.in_meeting(second) && !self.absences.iter().any(|a| a.contains(second))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionScript {
    pub duration_s: u64,
    pub fps: u32,
    pub width: u32,
    pub height: u32,
    pub rows: u32,
    pub cols: u32,
    pub seed: u64,
    /// Per-second head jitter; off gives pixel-identical seconds.
    pub motion: bool,
    pub participants: Vec<ParticipantScript>,
}

impl Default for SessionScript {
    fn default() -> Self {
        Self {
            duration_s: 180,
            fps: 30,
            width: 1920,
            height: 1080,
            rows: 5,
            cols: 5,
            seed: 0,
            motion: true,
            participants: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayoutEvent<'a> {
    Join(&'a str),
    Leave(&'a str),
}

/// Apply one join or leave to the row-major gallery order. Joiners take
/// the next free position; a leave closes the gap by moving everyone after
/// the leaver one position earlier.
pub fn reflow_layout(order: &[String], event: LayoutEvent<'_>, capacity: usize) -> Result<Vec<String>, SynthError> {
    let mut next = order.to_vec();
    match event {
        LayoutEvent::Join(name) => {
            if order.iter().any(|n| n == name) {
                return Err(SynthError::InvalidScript(format!("{name} joined twice")));
            }
            if order.len() >= capacity {
                return Err(SynthError::CapacityExceeded {
                    capacity,
                    wanted: order.len() + 1,
                });
            }
            next.push(name.to_string());
        }
        LayoutEvent::Leave(name) => {
            let i = order
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| SynthError::InvalidScript(format!("{name} left without being present")))?;
            next.remove(i);
        }
    }
    Ok(next)
}

impl SessionScript {
    /// The demo session: `n` participants from [`DEMO_NAMES`] in the meeting
    /// for the whole recording.
    pub fn demo(n: usize, duration_s: u64, seed: u64) -> Self {
        let participants = DEMO_NAMES
            .iter()
            .take(n)
            .enumerate()
            .map(|(i, name)| ParticipantScript {
                student_id: Some(format!("S{:03}", i + 1)),
                identity: Some(i as u32),
                ..ParticipantScript::new(name)
            })
            .collect();
        Self {
            duration_s,
            seed,
            participants,
            ..Self::default()
        }
    }

    pub fn capacity(&self) -> usize {
        (self.rows * self.cols) as usize
    }

    pub fn frame_count(&self) -> u64 {
        self.duration_s * self.fps as u64
    }

    pub fn identity_of(&self, index: usize) -> u32 {
        self.participants[index].identity.unwrap_or(index as u32)
    }

    pub fn find(&self, name: &str) -> Option<&ParticipantScript> {
        self.participants.iter().find(|p| p.name == name)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidScript(m));
        if self.duration_s == 0 || self.fps == 0 {
            return bad("duration_s and fps must be positive".into());
        }
        if self.width % 2 == 1 || self.height % 2 == 1 {
            return bad(format!("frame size {}x{} must be even", self.width, self.height));
        }
        let grid = GridLayout::new(self.rows, self.cols, self.width, self.height)
            .map_err(|e| SynthError::InvalidScript(e.to_string()))?;
        let cell = grid
            .cell_rect(proctor_core::CellRef::new(0, 0))
            .expect("cell (0,0) exists");
        let mut seen = HashSet::new();
        for p in &self.participants {
            if p.name != normalize_name(&p.name) || p.name.is_empty() {
                return bad(format!("name {:?} must be upper-case with single spaces", p.name));
            }
            if !seen.insert(p.name.as_str()) {
                return bad(format!("duplicate participant {}", p.name));
            }
            if !font::supports(&p.name) {
                return bad(format!("name {} has characters the label font lacks", p.name));
            }
            if label_width(&p.name, cell.h) * 5 > cell.w * 2 {
                return bad(format!("name {} does not fit the label strip", p.name));
            }
            let leave = p.leave_s.unwrap_or(self.duration_s);
            if p.join_s >= leave || leave > self.duration_s {
                return bad(format!(
                    "{}: join {} / leave {leave} outside the recording",
                    p.name, p.join_s
                ));
            }
            let mut spans = p.absences.clone();
            spans.sort_by_key(|s| s.start_s);
            for (i, s) in spans.iter().enumerate() {
                if s.start_s >= s.end_s || s.start_s < p.join_s || s.end_s > leave {
                    return bad(format!("{}: absence {s:?} outside [{}, {leave})", p.name, p.join_s));
                }
                if i > 0 && spans[i - 1].end_s > s.start_s {
                    return bad(format!("{}: overlapping absences", p.name));
                }
            }
        }
        self.timeline().map(|_| ())
    }

    /// Gallery order for every second of the recording. Within a second,
    /// leaves are applied before joins, each group in script order.
    pub fn timeline(&self) -> Result<Vec<Vec<String>>, SynthError> {
        let mut order: Vec<String> = Vec::new();
        let mut out = Vec::with_capacity(self.duration_s as usize);
        for s in 0..self.duration_s {
            for p in &self.participants {
                if p.leave_s == Some(s) {
                    order = reflow_layout(&order, LayoutEvent::Leave(&p.name), self.capacity())?;
                }
            }
            for p in &self.participants {
                if p.join_s == s {
                    order = reflow_layout(&order, LayoutEvent::Join(&p.name), self.capacity())?;
                }
            }
            out.push(order.clone());
        }
        Ok(out)
    }

    /// A roster listing every participant, with `S001`-style ids when the
    /// script gives none.
    pub fn roster(&self) -> Result<Roster, SynthError> {
        let records = self
            .participants
            .iter()
            .enumerate()
            .map(|(i, p)| StudentRecord {
                student_id: p.student_id.clone().unwrap_or_else(|| format!("S{:03}", i + 1)),
                display_name: p.name.clone(),
            })
            .collect();
        Roster::new(records).map_err(|e| SynthError::InvalidScript(e.to_string()))
    }
}
