use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const RATINGS_FILE: &str = "u.data";
pub const USERS_FILE: &str = "u.user";

/// User attributes that stay on the device and never reach the cloud.
pub const EDGE_ONLY_FEATURES: [&str; 2] = ["occupation", "zip_code"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub user: i64,
    pub item: i64,
    pub rating: u8,
    pub timestamp: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserRecord {
    pub user: i64,
    pub age: u32,
    pub gender: String,
    /// Edge-only.
    pub occupation: String,
    /// Edge-only.
    pub zip_code: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MovieLens {
    pub ratings: Vec<RatingRecord>,
    pub users: Vec<UserRecord>,
    /// Malformed lines skipped in the ratings and user files.
    pub skipped_ratings: usize,
    pub skipped_users: usize,
}

/// Parses tab-separated `user item rating timestamp` lines.
pub fn parse_ratings<R: BufRead>(reader: R) -> Result<(Vec<RatingRecord>, usize)> {
    let mut out = Vec::new();
    let mut skipped = 0;
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_rating_line(&line) {
            Some(r) => out.push(r),
            None => skipped += 1,
        }
    }
    Ok((out, skipped))
}

fn parse_rating_line(line: &str) -> Option<RatingRecord> {
    let mut f = line.split('\t');
    let user = f.next()?.trim().parse().ok()?;
    let item = f.next()?.trim().parse().ok()?;
    let rating: u8 = f.next()?.trim().parse().ok()?;
    let timestamp = f.next()?.trim().parse().ok()?;
    if f.next().is_some() || !(1..=5).contains(&rating) || user < 1 || item < 1 {
        return None;
    }
    Some(RatingRecord {
        user,
        item,
        rating,
        timestamp,
    })
}

/// Parses pipe-separated `user|age|gender|occupation|zip` lines.
pub fn parse_users<R: BufRead>(reader: R) -> Result<(Vec<UserRecord>, usize)> {
    let mut out = Vec::new();
    let mut skipped = 0;
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.trim_end().split('|').collect();
        let parsed = (f.len() == 5)
            .then(|| Some((f[0].parse::<i64>().ok()?, f[1].parse::<u32>().ok()?)))
            .flatten();
        match parsed {
            Some((user, age)) if user >= 1 => out.push(UserRecord {
                user,
                age,
                gender: f[2].to_string(),
                occupation: f[3].to_string(),
                zip_code: f[4].to_string(),
            }),
            _ => skipped += 1,
        }
    }
    Ok((out, skipped))
}

/// Loads `u.data` and `u.user` from `dir`.
pub fn load_movielens(dir: &Path) -> Result<MovieLens> {
    let open = |name: &str| -> Result<BufReader<File>> {
        let p = dir.join(name);
        if !p.exists() {
            return Err(Error::MissingFile(p));
        }
        Ok(BufReader::new(File::open(p)?))
    };
    let (ratings, skipped_ratings) = parse_ratings(open(RATINGS_FILE)?)?;
    let (users, skipped_users) = parse_users(open(USERS_FILE)?)?;
    Ok(MovieLens {
        ratings,
        users,
        skipped_ratings,
        skipped_users,
    })
}

impl MovieLens {
    pub fn max_user(&self) -> i64 {
        self.ratings
            .iter()
            .map(|r| r.user)
            .chain(self.users.iter().map(|u| u.user))
            .max()
            .unwrap_or(0)
    }

    pub fn max_item(&self) -> i64 {
        self.ratings.iter().map(|r| r.item).max().unwrap_or(0)
    }

    /// Occupation names mapped to ids `1..`, sorted by name; 0 is reserved.
    pub fn occupation_ids(&self) -> BTreeMap<String, i64> {
        let names: BTreeSet<&str> = self.users.iter().map(|u| u.occupation.as_str()).collect();
        names
            .into_iter()
            .zip(1..)
            .map(|(n, i)| (n.to_string(), i))
            .collect()
    }

    /// Per-user `(district, segment)` edge ids: the zip region and the
    /// occupation id. Users without a profile get `(0, 0)`.
    pub fn edge_ids(&self) -> BTreeMap<i64, (i64, i64)> {
        let occ = self.occupation_ids();
        self.users
            .iter()
            .map(|u| (u.user, (zip_region(&u.zip_code), occ[&u.occupation])))
            .collect()
    }
}

/// Leading digit of a US zip code plus one (`1..=10`); other codes map to
/// 11 and empty codes to 0.
pub fn zip_region(zip: &str) -> i64 {
    match zip.chars().next() {
        None => 0,
        Some(c) => c.to_digit(10).map_or(11, |d| d as i64 + 1),
    }
}

pub const ZIP_REGIONS: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub impressions: usize,
    pub users: usize,
    pub items: usize,
    /// Counts of ratings 1..=5, for rating data.
    pub rating_counts: Option<[usize; 5]>,
    pub mean_rating: Option<f64>,
    /// Click-through rate, for click logs.
    pub ctr: Option<f64>,
}

pub fn dataset_stats(records: &[RatingRecord]) -> DatasetStats {
    let mut counts = [0usize; 5];
    let mut sum = 0u64;
    for r in records {
        counts[(r.rating - 1) as usize] += 1;
        sum += r.rating as u64;
    }
    let users: BTreeSet<i64> = records.iter().map(|r| r.user).collect();
    let items: BTreeSet<i64> = records.iter().map(|r| r.item).collect();
    DatasetStats {
        impressions: records.len(),
        users: users.len(),
        items: items.len(),
        rating_counts: Some(counts),
        mean_rating: (!records.is_empty()).then(|| sum as f64 / records.len() as f64),
        ctr: None,
    }
}

/// Impressions, users, items and CTR of a session log.
pub fn log_stats(records: &[super::SessionLogRecord]) -> DatasetStats {
    let users: BTreeSet<i64> = records.iter().map(|r| r.state.user).collect();
    let items: BTreeSet<i64> = records
        .iter()
        .flat_map(|r| r.action.iter().copied())
        .collect();
    let impressions: usize = records.iter().map(|r| r.action.len()).sum();
    let clicks: usize = records
        .iter()
        .flat_map(|r| &r.clicks)
        .map(|&c| c as usize)
        .sum();
    DatasetStats {
        impressions,
        users: users.len(),
        items: items.len(),
        rating_counts: None,
        mean_rating: None,
        ctr: (impressions > 0).then(|| clicks as f64 / impressions as f64),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_counts_skips() {
        let data = "1\t10\t5\t100\n2\t11\t0\t5\nbad line\n3\t12\t3\t7\n\n";
        let (r, skipped) = parse_ratings(data.as_bytes()).unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!(skipped, 2);
        assert_eq!(
            r[1],
            RatingRecord {
                user: 3,
                item: 12,
                rating: 3,
                timestamp: 7
            }
        );
        let users = "1|24|M|technician|85711\n2|x|F|other|1\n3|30|F|writer|T8H1N\n";
        let (u, skipped) = parse_users(users.as_bytes()).unwrap();
        assert_eq!(u.len(), 2);
        assert_eq!(skipped, 1);
        assert_eq!(u[1].zip_code, "T8H1N");
    }

    #[test]
    fn empty_input_gives_zero_stats() {
        let (r, s) = parse_ratings("".as_bytes()).unwrap();
        assert!(r.is_empty() && s == 0);
        let st = dataset_stats(&r);
        assert_eq!(st.impressions, 0);
        assert_eq!(st.users, 0);
        assert_eq!(st.rating_counts, Some([0; 5]));
        assert_eq!(st.mean_rating, None);
    }

    #[test]
    fn mean_rating_examples() {
        let rec = |rating| RatingRecord {
            user: 1,
            item: 1,
            rating,
            timestamp: 0,
        };
        assert_eq!(dataset_stats(&[rec(5)]).mean_rating, Some(5.0));
        assert_eq!(dataset_stats(&[rec(1), rec(5)]).mean_rating, Some(3.0));
    }

    #[test]
    fn missing_directory_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_movielens(dir.path()),
            Err(Error::MissingFile(_))
        ));
    }

    #[test]
    fn zip_regions() {
        assert_eq!(zip_region("85711"), 9);
        assert_eq!(zip_region("00000"), 1);
        assert_eq!(zip_region("T8H1N"), 11);
        assert_eq!(zip_region(""), 0);
    }
}
