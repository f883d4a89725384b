use std::collections::BTreeMap;

use super::log::SessionLogRecord;
use super::movielens::{MovieLens, RatingRecord};
use crate::agents::ObservedState;
use crate::encoders::{DeviceFeatures, OutraFeatures};

/// Hour, weekday (0 = Monday) and workday flag of a Unix timestamp in UTC.
/// Location is unknown to the cloud and left at 0.
pub fn outra_from_timestamp(ts: i64) -> OutraFeatures {
    let days = ts.div_euclid(86_400);
    let day = (days + 3).rem_euclid(7) as u32;
    OutraFeatures {
        hour: (ts.rem_euclid(86_400) / 3600) as u32,
        day,
        workday: day < 5,
        location: 0,
    }
}

/// Device record of a past interaction: the item as the app id, the click
/// as the stay time, and the user's zip region and occupation.
pub fn edge_record(item: i64, click: u8, district: i64, segment: i64) -> DeviceFeatures {
    DeviceFeatures {
        app_id: item,
        stay_time: click as f64,
        district_id: district,
        segment_id: segment,
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Sessionized {
    pub records: Vec<SessionLogRecord>,
    /// Ratings left over in trailing partial windows.
    pub dropped: usize,
}

/// Cuts each user's time-ordered ratings into consecutive windows of `k`.
///
/// Clicks are ratings at or above `click_threshold`. The history of a
/// session lists the item ids of the user's earlier sessions. The device
/// record `m_k` describes the user's interaction just before item `k`.
pub fn sessionize(ml: &MovieLens, k: usize, click_threshold: u8) -> Sessionized {
    let edge = ml.edge_ids();
    let mut by_user: BTreeMap<i64, Vec<RatingRecord>> = BTreeMap::new();
    for r in &ml.ratings {
        by_user.entry(r.user).or_default().push(*r);
    }
    let mut out = Sessionized::default();
    if k == 0 {
        out.dropped = ml.ratings.len();
        return out;
    }
    for (user, mut rs) in by_user {
        rs.sort_by_key(|r| (r.timestamp, r.item));
        let (district, segment) = edge.get(&user).copied().unwrap_or((0, 0));
        let n_sessions = rs.len() / k;
        out.dropped += rs.len() - n_sessions * k;
        let mut history: Vec<Vec<i64>> = Vec::new();
        let first = out.records.len();
        for s in 0..n_sessions {
            let window = &rs[s * k..(s + 1) * k];
            let action: Vec<i64> = window.iter().map(|r| r.item).collect();
            let clicks: Vec<u8> = window
                .iter()
                .map(|r| u8::from(r.rating >= click_threshold))
                .collect();
            let device = (0..k)
                .map(|j| {
                    let idx = s * k + j;
                    match idx.checked_sub(1).map(|p| rs[p]) {
                        Some(prev) => edge_record(
                            prev.item,
                            u8::from(prev.rating >= click_threshold),
                            district,
                            segment,
                        ),
                        None => edge_record(0, 0, district, segment),
                    }
                })
                .collect();
            let reward = clicks.iter().map(|&c| c as f64).sum::<f64>() / k as f64;
            out.records.push(SessionLogRecord {
                state: ObservedState {
                    user,
                    history: history.clone(),
                    outra: outra_from_timestamp(window[0].timestamp),
                },
                action: action.clone(),
                clicks,
                reward,
                device,
                next_state: None,
                next_action: None,
            });
            history.push(action);
        }
        link_next(&mut out.records[first..]);
    }
    out
}

/// Fills `next_state` / `next_action` of each record from its successor;
/// `records` must be one user's sessions in order.
pub(crate) fn link_next(records: &mut [SessionLogRecord]) {
    for i in 1..records.len() {
        let (head, tail) = records.split_at_mut(i);
        head[i - 1].next_state = Some(tail[0].state.clone());
        head[i - 1].next_action = Some(tail[0].action.clone());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::movielens::UserRecord;

    fn ml(n: usize) -> MovieLens {
        MovieLens {
            ratings: (0..n)
                .map(|i| RatingRecord {
                    user: 1,
                    item: 10 + i as i64,
                    rating: (i % 5 + 1) as u8,
                    timestamp: 1000 - i as i64,
                })
                .collect(),
            users: vec![UserRecord {
                user: 1,
                age: 30,
                gender: "F".into(),
                occupation: "writer".into(),
                zip_code: "12345".into(),
            }],
            ..MovieLens::default()
        }
    }

    #[test]
    fn windows_and_drops() {
        assert_eq!(sessionize(&ml(8), 4, 4).records.len(), 2);
        let s = sessionize(&ml(3), 4, 4);
        assert!(s.records.is_empty());
        assert_eq!(s.dropped, 3);
        let s = sessionize(&ml(11), 4, 4);
        assert_eq!(s.records.len() * 4 + s.dropped, 11);
    }

    #[test]
    fn sessions_follow_time_order_and_link() {
        let s = sessionize(&ml(8), 4, 4).records;
        // Timestamps decrease with i, so the last-listed ratings come first.
        assert_eq!(s[0].action, vec![17, 16, 15, 14]);
        assert_eq!(s[1].state.history, vec![vec![17, 16, 15, 14]]);
        assert_eq!(s[0].next_action.as_ref(), Some(&s[1].action));
        assert!(s[1].next_state.is_none());
        for r in &s {
            r.validate(4).unwrap();
            let ctr = r.clicks.iter().map(|&c| c as f64).sum::<f64>() / 4.0;
            assert_eq!(r.reward, ctr);
        }
        assert_eq!(s[0].device[0].app_id, 0);
        assert_eq!(s[0].device[1].app_id, 17);
        assert_eq!(s[1].device[0].app_id, 14);
        assert_eq!(s[0].device[1].district_id, 2);
        assert_eq!(s[0].device[1].segment_id, 1);
    }

    #[test]
    fn timestamp_features() {
        // 1970-01-01 was a Thursday.
        let f = outra_from_timestamp(0);
        assert_eq!((f.hour, f.day, f.workday), (0, 3, true));
        let f = outra_from_timestamp(2 * 86_400 + 5 * 3600);
        assert_eq!((f.hour, f.day, f.workday), (5, 5, false));
    }
}
