//! Frame-to-frame identity assignment and per-joint speed clipping.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::pipeline::Person3D;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    /// Largest centroid distance for continuing a track.
    pub assign_dist_m: f64,
    pub max_speed_mps: f64,
    /// Consecutive unmatched frames after which a track is retired.
    pub max_misses: u32,
    /// Re-emit the last pose of tracks missed this frame.
    pub hold_lost: bool,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            assign_dist_m: 0.5,
            max_speed_mps: 5.0,
            max_misses: 5,
            hold_lost: true,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.assign_dist_m > 0.0) {
            return Err("assign_dist_m must be positive".into());
        }
        if !(self.max_speed_mps > 0.0) {
            return Err("max_speed_mps must be positive".into());
        }
        if self.max_misses == 0 {
            return Err("max_misses must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub track_id: u64,
    pub last_person: Person3D,
    pub last_seen_frame: u64,
    /// Frames since creation.
    pub age: u64,
    pub misses: u32,
}

/// Clamps every joint's displacement from `prev_person` to `max_speed_mps * frame_dt_s`.
///
/// Joints absent in either pose pass through.
pub fn clip_speed(
    person: &Person3D,
    prev_person: &Person3D,
    cfg: &TrackerConfig,
    frame_dt_s: f64,
) -> Person3D {
    let cap = cfg.max_speed_mps * frame_dt_s;
    let mut out = person.clone();
    for (cur, prev) in out.joints.iter_mut().zip(&prev_person.joints) {
        if let (Some(c), Some(p)) = (cur.as_mut(), prev) {
            let delta = *c - p;
            let dist = delta.norm();
            if dist > cap {
                *c = p + delta * (cap / dist);
            }
        }
    }
    out
}

/// Greedy nearest-first matching of `persons` to `tracks` by centroid distance.
///
/// Returns `(person index, track index)` pairs sorted by person index.
pub fn greedy_assign(
    persons: &[Person3D],
    tracks: &[Track],
    max_dist: f64,
) -> Vec<(usize, usize)> {
    let mut candidates = Vec::new();
    let track_centroids: Vec<_> = tracks.iter().map(|t| t.last_person.centroid()).collect();
    for (pi, person) in persons.iter().enumerate() {
        let Some(pc) = person.centroid() else { continue };
        for (ti, tc) in track_centroids.iter().enumerate() {
            if let Some(tc) = tc {
                let d = (pc - tc).norm();
                if d <= max_dist {
                    candidates.push((d, pi, ti));
                }
            }
        }
    }
    candidates.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap_or(Ordering::Equal)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let mut person_used = vec![false; persons.len()];
    let mut track_used = vec![false; tracks.len()];
    let mut out = Vec::new();
    for (_, pi, ti) in candidates {
        if !person_used[pi] && !track_used[ti] {
            person_used[pi] = true;
            track_used[ti] = true;
            out.push((pi, ti));
        }
    }
    out.sort_unstable();
    out
}

/// Tracker state for one stream.
#[derive(Debug, Clone)]
pub struct Tracker {
    pub config: TrackerConfig,
    tracks: Vec<Track>,
    next_id: u64,
    frame: u64,
}

impl Tracker {
    pub fn new(config: TrackerConfig) -> Self {
        Tracker {
            config,
            tracks: Vec::new(),
            next_id: 0,
            frame: 0,
        }
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    /// Assigns track ids, clips speeds, and updates track state for one frame.
    ///
    /// The output lists matched and new persons in input order, followed by
    /// held poses of missed tracks when `hold_lost` is set.
    pub fn update(&mut self, persons: Vec<Person3D>, frame_dt_s: f64) -> Vec<Person3D> {
        assert!(frame_dt_s > 0.0, "frame interval must be positive");
        let cfg = self.config.clone();
        let assignment = greedy_assign(&persons, &self.tracks, cfg.assign_dist_m);
        let mut track_of_person = vec![None; persons.len()];
        let mut track_matched = vec![false; self.tracks.len()];
        for &(pi, ti) in &assignment {
            track_of_person[pi] = Some(ti);
            track_matched[ti] = true;
        }

        let mut out = Vec::with_capacity(persons.len());
        let mut spawned = Vec::new();
        for (pi, person) in persons.into_iter().enumerate() {
            match track_of_person[pi] {
                Some(ti) => {
                    let track = &mut self.tracks[ti];
                    let mut clipped = clip_speed(&person, &track.last_person, &cfg, frame_dt_s);
                    clipped.track_id = Some(track.track_id);
                    track.last_person = clipped.clone();
                    track.last_seen_frame = self.frame;
                    track.misses = 0;
                    out.push(clipped);
                }
                None => {
                    let mut person = person;
                    let id = self.next_id;
                    self.next_id += 1;
                    person.track_id = Some(id);
                    spawned.push(Track {
                        track_id: id,
                        last_person: person.clone(),
                        last_seen_frame: self.frame,
                        age: 0,
                        misses: 0,
                    });
                    out.push(person);
                }
            }
        }

        for (ti, track) in self.tracks.iter_mut().enumerate() {
            if !track_matched[ti] {
                track.misses += 1;
            }
        }
        let max_misses = cfg.max_misses;
        self.tracks.retain(|t| t.misses < max_misses);
        if cfg.hold_lost {
            out.extend(
                self.tracks
                    .iter()
                    .filter(|t| t.misses > 0)
                    .map(|t| t.last_person.clone()),
            );
        }
        for track in &mut self.tracks {
            track.age += 1;
        }
        self.tracks.extend(spawned);
        self.frame += 1;
        out
    }
}
