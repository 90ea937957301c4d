use proctor_core::GridLayout;
use proctor_synth::{reflow_layout, LayoutEvent, SynthError};
use proptest::prelude::*;

fn names(n: usize) -> Vec<String> {
    (0..n).map(|i| ((b'A' + i as u8) as char).to_string()).collect()
}

#[test]
fn leaver_closes_the_gap() {
    let order = names(10);
    let next = reflow_layout(&order, LayoutEvent::Leave("C"), 25).unwrap();
    assert_eq!(next, ["A", "B", "D", "E", "F", "G", "H", "I", "J"]);
}

#[test]
fn joiner_takes_the_next_slot() {
    let order = names(10);
    let next = reflow_layout(&order, LayoutEvent::Join("K"), 25).unwrap();
    let grid = GridLayout::new(5, 5, 1920, 1080).unwrap();
    let at = next.iter().position(|n| n == "K").unwrap();
    assert_eq!(at, 10);
    assert_eq!((grid.cell_at(at).unwrap().row, grid.cell_at(at).unwrap().col), (2, 0));
    let first = reflow_layout(&[], LayoutEvent::Join("A"), 25).unwrap();
    assert_eq!(first, ["A"]);
}

#[test]
fn reflow_errors() {
    let full = names(25);
    assert!(matches!(
        reflow_layout(&full, LayoutEvent::Join("Z2"), 25),
        Err(SynthError::CapacityExceeded {
            capacity: 25,
            wanted: 26
        })
    ));
    assert!(reflow_layout(&names(3), LayoutEvent::Leave("Q"), 25).is_err());
    assert!(reflow_layout(&names(3), LayoutEvent::Join("A"), 25).is_err());
}

proptest! {
    #[test]
    fn leave_preserves_relative_order(n in 1usize..25, k in 0usize..25) {
        let order = names(n);
        let who = order[k % n].clone();
        let next = reflow_layout(&order, LayoutEvent::Leave(&who), 25).unwrap();
        let expected: Vec<String> = order.iter().filter(|x| **x != who).cloned().collect();
        prop_assert_eq!(next, expected);
    }

    #[test]
    fn join_then_leave_is_identity(n in 0usize..24) {
        let order = names(n);
        let joined = reflow_layout(&order, LayoutEvent::Join("NEW"), 25).unwrap();
        prop_assert_eq!(joined.last().map(String::as_str), Some("NEW"));
        prop_assert_eq!(reflow_layout(&joined, LayoutEvent::Leave("NEW"), 25).unwrap(), order);
    }
}
