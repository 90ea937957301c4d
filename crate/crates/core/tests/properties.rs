use std::collections::BTreeSet;

use proctor_core::{
    absence_intervals, consecutive_summary, window_presence, AnalysisConfig, CellRef, GridLayout, RecognitionEvent,
    Roster, StudentRecord,
};
use proptest::prelude::*;

fn layout() -> impl Strategy<Value = GridLayout> {
    (1u32..9, 1u32..9).prop_flat_map(|(rows, cols)| {
        (cols..2000u32, rows..1200u32).prop_map(move |(w, h)| GridLayout::new(rows, cols, w, h).unwrap())
    })
}

proptest! {
    #[test]
    fn partition_is_exact_and_disjoint(g in layout()) {
        let cells = g.partition();
        prop_assert_eq!(cells.len(), g.cell_count());
        let total: u64 = cells.iter().map(|(_, r)| r.area()).sum();
        prop_assert_eq!(total, g.frame_width() as u64 * g.frame_height() as u64);
        for (_, r) in &cells {
            prop_assert!(r.fits_within(g.frame_width(), g.frame_height()));
        }
        for r in 0..g.rows() {
            let sum: u32 = (0..g.cols()).map(|c| g.cell_rect(CellRef::new(r, c)).unwrap().w).sum();
            prop_assert_eq!(sum, g.frame_width());
        }
        for c in 0..g.cols() {
            let sum: u32 = (0..g.rows()).map(|r| g.cell_rect(CellRef::new(r, c)).unwrap().h).sum();
            prop_assert_eq!(sum, g.frame_height());
        }
        for i in 0..cells.len() {
            for j in i + 1..cells.len() {
                prop_assert!(cells[i].1.intersection(&cells[j].1).is_none());
            }
        }
    }

    #[test]
    fn linear_index_is_a_bijection(g in layout()) {
        let mut seen = BTreeSet::new();
        for c in g.cells() {
            let i = g.linear_index(c).unwrap();
            prop_assert_eq!(i, (c.row * g.cols() + c.col) as usize);
            prop_assert_eq!(g.cell_at(i).unwrap(), c);
            seen.insert(i);
        }
        prop_assert_eq!(seen.len(), g.cell_count());
        prop_assert!(g.cell_at(g.cell_count()).is_err());
    }
}

const NAMES: [&str; 4] = ["ALICE", "BOB", "CAROL", "DAVE"];

fn roster() -> Roster {
    Roster::new(
        NAMES
            .iter()
            .enumerate()
            .map(|(i, n)| StudentRecord {
                student_id: format!("s{i}"),
                display_name: n.to_string(),
            })
            .collect(),
    )
    .unwrap()
}

fn event() -> impl Strategy<Value = RecognitionEvent> {
    (0u64..200, 0u32..3, 0u32..3, 0usize..6, any::<bool>(), 0.0f32..1.0).prop_map(
        |(second, row, col, who, accepted, prob)| {
            let cell = CellRef::new(row, col);
            match who {
                4 => RecognitionEvent::no_face(second, cell),
                5 => RecognitionEvent::recognized(second, cell, "STRANGER", prob, accepted),
                i => RecognitionEvent::recognized(second, cell, NAMES[i], prob, accepted),
            }
        },
    )
}

/// Recompute every window from scratch.
fn naive_counts(events: &[RecognitionEvent], student: &str, start: u64, end: u64) -> u32 {
    let seconds: BTreeSet<u64> = events
        .iter()
        .filter(|e| e.second >= start && e.second < end && e.accepted_class() == Some(student))
        .map(|e| e.second)
        .collect();
    seconds.len() as u32
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn streaming_windows_match_naive_oracle(
        events in prop::collection::vec(event(), 0..120),
        total in 1u64..220,
        window_s in 5u32..40,
    ) {
        let cfg = AnalysisConfig { window_s, presence_min_count: window_s / 3, ..Default::default() };
        let windows = window_presence(&events, &roster(), &cfg, total);
        let horizon = events.iter().map(|e| e.second + 1).max().unwrap_or(0).max(total);
        let n = horizon.div_ceil(window_s as u64);
        prop_assert_eq!(windows.len() as u64, n * NAMES.len() as u64);
        for w in &windows {
            let expected = naive_counts(&events, &w.student, w.start_s, w.start_s + window_s as u64);
            prop_assert_eq!(w.count, expected);
            prop_assert_eq!(w.present, expected > cfg.presence_min_count);
            prop_assert!(w.count <= window_s);
        }
    }
}

proptest! {
    #[test]
    fn absence_algebra(
        events in prop::collection::vec(event(), 0..200),
        total in 1u64..220,
    ) {
        let cfg = AnalysisConfig { window_s: 10, presence_min_count: 3, ..Default::default() };
        let windows = window_presence(&events, &roster(), &cfg, total);
        let intervals = absence_intervals(&windows);
        let summaries = consecutive_summary(&windows);

        for name in NAMES {
            let mine: Vec<_> = windows.iter().filter(|w| w.student == name).collect();
            // union of intervals == union of absent windows, second by second
            let absent_secs: BTreeSet<u64> = mine
                .iter()
                .filter(|w| !w.present)
                .flat_map(|w| w.start_s..w.end_s)
                .collect();
            let ivs: Vec<_> = intervals.iter().filter(|i| i.student == name).collect();
            let interval_secs: BTreeSet<u64> = ivs.iter().flat_map(|i| i.start_s..i.end_s).collect();
            prop_assert_eq!(&absent_secs, &interval_secs);
            for pair in ivs.windows(2) {
                // sorted, disjoint and maximal (a present window separates them)
                prop_assert!(pair[0].end_s < pair[1].start_s);
            }
            for iv in &ivs {
                prop_assert!(iv.start_s < iv.end_s);
                prop_assert_eq!(iv.start_s % 10, 0);
            }
            let s = summaries.iter().find(|s| s.student == name).unwrap();
            prop_assert_eq!(s.windows_present + s.windows_absent, mine.len() as u64);
            let longest = ivs.iter().map(|i| i.len_s()).max().unwrap_or(0);
            prop_assert_eq!(s.longest_consecutive_absence_s, longest);
        }
    }

    #[test]
    fn adding_an_accepted_event_never_lowers_counts(
        events in prop::collection::vec(event(), 0..100),
        second in 0u64..200,
        who in 0usize..4,
    ) {
        let cfg = AnalysisConfig::default();
        let before = window_presence(&events, &roster(), &cfg, 200);
        let mut more = events.clone();
        more.push(RecognitionEvent::recognized(second, CellRef::new(0, 0), NAMES[who], 0.99, true));
        let after = window_presence(&more, &roster(), &cfg, 200);
        prop_assert_eq!(before.len(), after.len());
        for (b, a) in before.iter().zip(&after) {
            prop_assert!(a.count >= b.count);
            prop_assert!(!b.present || a.present);
        }
    }
}
