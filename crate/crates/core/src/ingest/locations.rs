//! Gazetteer matching of place names in post text.

use std::collections::{BTreeSet, HashMap, HashSet};

use super::{Gazetteer, RawPost};
use crate::geo::{GeoId, Level};

const STATES: [(&str, &str); 52] = [
    ("AL", "Alabama"),
    ("AK", "Alaska"),
    ("AZ", "Arizona"),
    ("AR", "Arkansas"),
    ("CA", "California"),
    ("CO", "Colorado"),
    ("CT", "Connecticut"),
    ("DE", "Delaware"),
    ("DC", "District of Columbia"),
    ("FL", "Florida"),
    ("GA", "Georgia"),
    ("HI", "Hawaii"),
    ("ID", "Idaho"),
    ("IL", "Illinois"),
    ("IN", "Indiana"),
    ("IA", "Iowa"),
    ("KS", "Kansas"),
    ("KY", "Kentucky"),
    ("LA", "Louisiana"),
    ("ME", "Maine"),
    ("MD", "Maryland"),
    ("MA", "Massachusetts"),
    ("MI", "Michigan"),
    ("MN", "Minnesota"),
    ("MS", "Mississippi"),
    ("MO", "Missouri"),
    ("MT", "Montana"),
    ("NE", "Nebraska"),
    ("NV", "Nevada"),
    ("NH", "New Hampshire"),
    ("NJ", "New Jersey"),
    ("NM", "New Mexico"),
    ("NY", "New York"),
    ("NC", "North Carolina"),
    ("ND", "North Dakota"),
    ("OH", "Ohio"),
    ("OK", "Oklahoma"),
    ("OR", "Oregon"),
    ("PA", "Pennsylvania"),
    ("PR", "Puerto Rico"),
    ("RI", "Rhode Island"),
    ("SC", "South Carolina"),
    ("SD", "South Dakota"),
    ("TN", "Tennessee"),
    ("TX", "Texas"),
    ("UT", "Utah"),
    ("VT", "Vermont"),
    ("VA", "Virginia"),
    ("WA", "Washington"),
    ("WV", "West Virginia"),
    ("WI", "Wisconsin"),
    ("WY", "Wyoming"),
];

/// Postal abbreviation for a state name (or the name itself when it already
/// is one).
pub fn state_abbreviation(name: &str) -> Option<&'static str> {
    let name = name.trim();
    STATES
        .iter()
        .find(|(abbr, full)| full.eq_ignore_ascii_case(name) || abbr.eq_ignore_ascii_case(name))
        .map(|(abbr, _)| *abbr)
}

/// Areas referenced by a post.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LocationMatch {
    /// Sorted, deduplicated, always a subset of the gazetteer.
    pub geo_ids: Vec<GeoId>,
    /// Set when a place name matched several areas that no state cue could
    /// separate; every candidate is then included.
    pub ambiguous: bool,
}

/// Phrase index over a gazetteer, reusable across many posts.
#[derive(Debug)]
pub struct LocationIndex<'g> {
    gazetteer: &'g Gazetteer,
    phrases: HashMap<Vec<String>, Vec<usize>>,
    longest: usize,
    abbreviations: HashMap<&'static str, usize>,
    subreddit_keys: HashMap<String, usize>,
    state_of: Vec<Option<usize>>,
}

fn tokens(text: &str) -> Vec<&str> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .collect()
}

fn lower_tokens(text: &str) -> Vec<String> {
    tokens(text).into_iter().map(str::to_lowercase).collect()
}

impl<'g> LocationIndex<'g> {
    pub fn new(gazetteer: &'g Gazetteer) -> Self {
        let records = gazetteer.records();
        let position: HashMap<&GeoId, usize> =
            records.iter().enumerate().map(|(i, r)| (&r.geo_id, i)).collect();

        let mut phrases: HashMap<Vec<String>, Vec<usize>> = HashMap::new();
        let mut abbreviations = HashMap::new();
        let mut subreddit_keys = HashMap::new();
        for (i, r) in records.iter().enumerate() {
            let name = lower_tokens(&r.name);
            if name.is_empty() || r.level == Level::Nation {
                continue;
            }
            match r.level {
                Level::County => {
                    let base = match name.split_last() {
                        Some((last, rest)) if last == "county" && !rest.is_empty() => rest.to_vec(),
                        _ => name.clone(),
                    };
                    let mut with_suffix = base.clone();
                    with_suffix.push("county".into());
                    phrases.entry(with_suffix).or_default().push(i);
                    phrases.entry(base).or_default().push(i);
                }
                Level::State => {
                    if let Some(abbr) = state_abbreviation(&r.name) {
                        abbreviations.insert(abbr, i);
                        subreddit_keys.insert(abbr.to_ascii_lowercase(), i);
                    }
                    subreddit_keys.insert(name.concat(), i);
                    phrases.entry(name).or_default().push(i);
                }
                _ => phrases.entry(name).or_default().push(i),
            }
        }
        for candidates in phrases.values_mut() {
            candidates.sort_unstable();
            candidates.dedup();
        }
        let longest = phrases.keys().map(Vec::len).max().unwrap_or(0);
        let state_of = records
            .iter()
            .map(|r| {
                gazetteer
                    .ancestor_at(r.geo_id.as_str(), Level::State)
                    .and_then(|s| position.get(&s.geo_id).copied())
            })
            .collect();
        LocationIndex {
            gazetteer,
            phrases,
            longest,
            abbreviations,
            subreddit_keys,
            state_of,
        }
    }

    fn subreddit_state(&self, subreddit: &str) -> Option<usize> {
        let mut key = subreddit.trim().to_ascii_lowercase();
        if let Some(rest) = key.strip_prefix("r/") {
            key = rest.to_string();
        }
        for prefix in ["coronavirus", "covid19", "covid"] {
            if let Some(rest) = key.strip_prefix(prefix) {
                key = rest.to_string();
                break;
            }
        }
        let key: String = key.chars().filter(|c| c.is_alphanumeric()).collect();
        self.subreddit_keys.get(&key).copied()
    }

    pub fn extract(&self, post: &RawPost) -> LocationMatch {
        let text = post.text();
        let original = tokens(&text);
        let lower: Vec<String> = original.iter().map(|t| t.to_lowercase()).collect();

        let mut mentions: Vec<&Vec<usize>> = Vec::new();
        let mut states: BTreeSet<usize> = BTreeSet::new();
        let mut i = 0;
        while i < lower.len() {
            let mut matched = 0;
            for len in (1..=self.longest.min(lower.len() - i)).rev() {
                if let Some(candidates) = self.phrases.get(&lower[i..i + len]) {
                    mentions.push(candidates);
                    matched = len;
                    break;
                }
            }
            if matched == 0 {
                // Two-letter abbreviations only count in capitals; "in", "me"
                // and "oh" are ordinary words otherwise.
                let token = original[i];
                if token.len() == 2 && token.bytes().all(|b| b.is_ascii_uppercase()) {
                    if let Some(&s) = self.abbreviations.get(token) {
                        states.insert(s);
                    }
                }
                matched = 1;
            }
            i += matched;
        }

        let records = self.gazetteer.records();
        for candidates in &mentions {
            if candidates.len() == 1 && records[candidates[0]].level == Level::State {
                states.insert(candidates[0]);
            }
        }
        let mut cues: HashSet<usize> = states.iter().copied().collect();
        cues.extend(self.subreddit_state(&post.subreddit));

        let mut found: BTreeSet<usize> = states.clone();
        let mut ambiguous = false;
        for candidates in mentions {
            if candidates.len() == 1 {
                found.insert(candidates[0]);
                continue;
            }
            let cued: Vec<usize> = candidates
                .iter()
                .copied()
                .filter(|&c| self.state_of[c].is_some_and(|s| cues.contains(&s)))
                .collect();
            let chosen = if cued.is_empty() { candidates.clone() } else { cued };
            ambiguous |= chosen.len() > 1;
            found.extend(chosen);
        }
        if found.is_empty() {
            found.extend(self.subreddit_state(&post.subreddit));
        }

        let mut geo_ids: Vec<GeoId> = found.into_iter().map(|i| records[i].geo_id.clone()).collect();
        geo_ids.sort();
        LocationMatch { geo_ids, ambiguous }
    }
}

/// One-shot form of [`LocationIndex::extract`].
pub fn extract_locations(post: &RawPost, gazetteer: &Gazetteer) -> LocationMatch {
    LocationIndex::new(gazetteer).extract(post)
}
