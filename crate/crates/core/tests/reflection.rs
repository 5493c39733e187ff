mod common;

use common::*;
use kdrive::gateway::BackendConfig;
use kdrive::memory::{ExperienceKind, MemoryStore};
use kdrive::reasoning::{Backends, Termination};
use kdrive::reflection::{apply_reflection, classify_session, sample_key_frames, ReflectionMode, SessionClass};
use kdrive::sim::MetaAction::{self, *};

fn frames(ep: &kdrive::reasoning::EpisodeRecord) -> Vec<usize> {
    sample_key_frames(ep).iter().map(|r| r.frame).collect()
}

fn actions_with(overrides: &[(usize, MetaAction)]) -> Vec<MetaAction> {
    let mut a = vec![Idle; 30];
    for &(f, act) in overrides {
        a[f] = act;
    }
    a
}

#[test]
fn all_idle_pads_with_fixed_frames() {
    let ep = episode(4, &actions_with(&[]), Termination::Completed);
    assert_eq!(frames(&ep), vec![0, 10, 20]);
}

#[test]
fn non_idle_frames_come_first() {
    let ep = episode(4, &actions_with(&[(4, Faster), (17, LaneLeft)]), Termination::Completed);
    assert_eq!(frames(&ep), vec![0, 4, 17]);
}

#[test]
fn many_non_idle_frames_keep_the_earliest_three() {
    let ep = episode(
        4,
        &actions_with(&[(3, Faster), (5, Slower), (8, LaneRight), (12, Faster), (25, Slower)]),
        Termination::Completed,
    );
    assert_eq!(frames(&ep), vec![3, 5, 8]);
}

#[test]
fn short_episode_uses_frames_it_has() {
    let ep = episode(4, &[Idle; 5], Termination::Completed);
    assert_eq!(frames(&ep), vec![0]);
}

#[test]
fn classification() {
    let safe = episode(2, &[Idle; 3], Termination::Completed);
    let unsafe_ep = episode(2, &[Idle, Faster], Termination::Collision);
    let excluded = episode(2, &[Idle], Termination::DecoderFailure);
    assert_eq!(classify_session(&safe).unwrap(), Some(SessionClass::Safe));
    assert_eq!(classify_session(&unsafe_ep).unwrap(), Some(SessionClass::Unsafe));
    assert_eq!(classify_session(&excluded).unwrap(), None);
    let mut running = safe.clone();
    running.terminated_by = None;
    assert!(classify_session(&running).is_err());
}

#[test]
fn safe_episode_adds_three_success_memories() {
    let mut store = MemoryStore::new(256);
    let ep = episode(4, &actions_with(&[(6, Faster)]), Termination::Completed);
    let out = apply_reflection(&ep, "ep", &mut store, &Backends::offline()).unwrap().unwrap();
    assert_eq!(out.mode, ReflectionMode::SuccessHarvest);
    assert_eq!(out.added.len(), 3);
    assert_eq!(store.count_kind(ExperienceKind::Success), 3);
    assert_eq!(store.items()[1].action, Faster);
}

#[test]
fn unsafe_episode_adds_one_correction() {
    let mut store = MemoryStore::new(256);
    let backends = Backends::new(BackendConfig::heuristic(), BackendConfig::scripted([correction_reply(Slower)])).unwrap();
    let ep = episode(4, &[Idle, Faster, Faster], Termination::Collision);
    let out = apply_reflection(&ep, "ep", &mut store, &backends).unwrap().unwrap();
    assert_eq!(out.mode, ReflectionMode::Correction);
    assert_eq!(out.decisive_frame, Some(2));
    assert_eq!(store.len(), 1);
    let exp = &store.items()[0];
    assert_eq!((exp.kind, exp.action), (ExperienceKind::Correction, Slower));
    assert_eq!(exp.description, ep.records[2].scenario_text.key_text);
}

#[test]
fn excluded_episode_adds_nothing() {
    let mut store = MemoryStore::new(256);
    let ep = episode(4, &[Idle, Idle], Termination::DecoderFailure);
    assert!(apply_reflection(&ep, "ep", &mut store, &Backends::offline()).unwrap().is_none());
    assert!(store.is_empty());
}

#[test]
fn mixed_sequence_counts() {
    let mut store = MemoryStore::new(256);
    let backends = Backends::offline();
    for lanes in 1..=2 {
        let ep = episode(lanes, &actions_with(&[]), Termination::Completed);
        apply_reflection(&ep, "safe", &mut store, &backends).unwrap();
    }
    let ep = episode(3, &[Faster, Faster], Termination::Collision);
    apply_reflection(&ep, "unsafe", &mut store, &backends).unwrap();
    assert_eq!(store.count_kind(ExperienceKind::Success), 6);
    assert_eq!(store.count_kind(ExperienceKind::Correction), 1);
    assert_eq!(store.len(), 7);
}

#[test]
fn heuristic_corrector_changes_the_action() {
    let mut store = MemoryStore::new(256);
    let ep = episode(4, &[Faster, Faster], Termination::Collision);
    let out = apply_reflection(&ep, "ep", &mut store, &Backends::offline()).unwrap().unwrap();
    let c = out.correction.unwrap();
    assert_ne!(c.corrected_action, Faster);
    assert!(!c.tips.is_empty());
}
