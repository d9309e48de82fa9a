use chrono::{DateTime, NaiveDate};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::{IngestError, Parsed};

/// One social-media post with an anonymised author.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawPost {
    #[serde(rename = "id")]
    pub post_id: String,
    pub subreddit: String,
    /// Unix seconds, UTC.
    #[serde(rename = "created_utc")]
    pub created: i64,
    pub author_hash: String,
    pub title: String,
    pub body: String,
}

impl RawPost {
    pub fn date(&self) -> NaiveDate {
        DateTime::from_timestamp(self.created, 0)
            .map(|t| t.date_naive())
            .unwrap_or_default()
    }

    /// Title and body joined for text analysis.
    pub fn text(&self) -> String {
        match (self.title.is_empty(), self.body.is_empty()) {
            (true, _) => self.body.clone(),
            (_, true) => self.title.clone(),
            _ => format!("{}\n{}", self.title, self.body),
        }
    }
}

/// Stable anonymous handle for a username.
pub fn hash_author(username: &str) -> String {
    let digest = Sha256::digest(format!("asat-author:{username}").as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

fn looks_hashed(value: &str) -> bool {
    (16..=64).contains(&value.len())
        && value
            .bytes()
            .all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
}

/// Parses `posts.jsonl`. Blank lines are skipped; unparsable lines and posts
/// without an id or timestamp are rejected. Any author value that is not
/// already a hash is replaced by [`hash_author`] of it.
pub fn parse_posts(input: &str) -> Result<Parsed<RawPost>, IngestError> {
    let mut parsed = Parsed::default();
    for (i, line) in input.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        match parse_line(line) {
            Ok(post) => parsed.accept(post),
            Err(reason) => parsed.reject(line_no, reason),
        }
    }
    Ok(parsed)
}

fn text_of(value: Option<&Value>) -> Option<String> {
    match value? {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn parse_line(line: &str) -> Result<RawPost, String> {
    let value: Value = serde_json::from_str(line).map_err(|e| format!("invalid json: {e}"))?;
    let obj = value.as_object().ok_or("expected a json object")?;
    let post_id = text_of(obj.get("id"))
        .filter(|s| !s.trim().is_empty())
        .ok_or("missing id")?;
    let created = match obj.get("created_utc") {
        Some(Value::Number(n)) => n
            .as_i64()
            .or_else(|| n.as_f64().map(|f| f.floor() as i64))
            .ok_or("invalid created_utc")?,
        Some(Value::String(s)) => s
            .trim()
            .parse::<f64>()
            .map(|f| f.floor() as i64)
            .map_err(|_| format!("invalid created_utc `{s}`"))?,
        _ => return Err("missing created_utc".into()),
    };
    if DateTime::from_timestamp(created, 0).is_none() {
        return Err(format!("created_utc {created} out of range"));
    }
    let author_hash = match text_of(obj.get("author_hash")) {
        Some(h) if looks_hashed(&h) => h,
        Some(raw) => hash_author(&raw),
        None => hash_author(&text_of(obj.get("author")).unwrap_or_default()),
    };
    Ok(RawPost {
        post_id,
        subreddit: text_of(obj.get("subreddit")).unwrap_or_default(),
        created,
        author_hash,
        title: text_of(obj.get("title")).unwrap_or_default(),
        body: text_of(obj.get("body")).unwrap_or_default(),
    })
}

pub fn write_posts<W: std::io::Write>(mut out: W, posts: &[RawPost]) -> Result<(), IngestError> {
    for post in posts {
        serde_json::to_writer(&mut out, post).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MONTGOMERY: &str = r#"{"id":"fi3k2a","subreddit":"CoronaVirusPA","created_utc":1584199800,"author_hash":"cf1d9a77b2e04c16","title":"Nobody cares here","body":"I live in Montgomery County, PA and everyone here is acting like there's nothing going on."}"#;

    #[test]
    fn montgomery_post() {
        let parsed = parse_posts(MONTGOMERY).unwrap();
        let post = &parsed.records[0];
        assert!(post.body.starts_with("I live in Montgomery County, PA"));
        assert!(post.body.contains("everyone here is acting like"));
        assert_eq!(post.author_hash, "cf1d9a77b2e04c16");
        assert_eq!(post.date(), NaiveDate::from_ymd_opt(2020, 3, 14).unwrap());
    }

    #[test]
    fn empty_file() {
        let parsed = parse_posts("").unwrap();
        assert!(parsed.records.is_empty() && parsed.rejections.is_empty());
    }

    #[test]
    fn one_bad_line_of_three() {
        let input = format!(
            "{MONTGOMERY}\n{{\"subreddit\":\"x\",\"created_utc\":1}}\n{}\n",
            r#"{"id":7,"created_utc":"1584199800.5","author":"alice"}"#
        );
        let parsed = parse_posts(&input).unwrap();
        assert_eq!(parsed.records.len(), 2);
        assert_eq!(parsed.rejections.len(), 1);
        assert_eq!(parsed.rejections[0].line, 2);
        assert!(parsed.rejections[0].reason.contains("missing id"));
        let second = &parsed.records[1];
        assert_eq!(second.post_id, "7");
        assert_eq!(second.body, "");
        assert_eq!(second.created, 1584199800);
    }

    #[test]
    fn raw_usernames_never_survive() {
        let input = r#"{"id":"a","created_utc":0,"author":"bob"}
{"id":"b","created_utc":0,"author_hash":"carol"}
{"id":"c","created_utc":0,"author_hash":"deadbeefdeadbeef"}"#;
        let parsed = parse_posts(input).unwrap();
        assert_eq!(parsed.records[0].author_hash, hash_author("bob"));
        assert_ne!(parsed.records[0].author_hash, "bob");
        assert_eq!(parsed.records[1].author_hash, hash_author("carol"));
        assert_eq!(parsed.records[2].author_hash, "deadbeefdeadbeef");
    }

    #[test]
    fn invalid_json_rejected() {
        let parsed = parse_posts("{not json}\n").unwrap();
        assert_eq!(parsed.rejections.len(), 1);
    }

    #[test]
    fn round_trip() {
        let parsed = parse_posts(MONTGOMERY).unwrap();
        let mut buf = Vec::new();
        write_posts(&mut buf, &parsed.records).unwrap();
        let again = parse_posts(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(again.records, parsed.records);
    }
}
