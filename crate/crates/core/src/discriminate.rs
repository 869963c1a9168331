//! Tie-breaking between several matching types by edit distance over packet
//! sequences.

use serde::{Deserialize, Serialize};

use crate::fingerprint::{DeviceTypeId, Fingerprint};

/// Nominal number of references per type; scores lie in `[0, REFS_PER_TYPE]`.
pub const REFS_PER_TYPE: usize = 5;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum DiscriminateError {
    #[error("cannot normalize the distance between two empty sequences")]
    BothEmpty,
    #[error("no reference fingerprints for {0}")]
    NoReferences(DeviceTypeId),
    #[error("discrimination needs at least two candidates, got {0}")]
    TooFewCandidates(usize),
}

/// Restricted Damerau-Levenshtein (optimal string alignment) distance:
/// insertions, deletions, substitutions and swaps of adjacent elements, with
/// no element edited more than once.
pub fn dl_distance<P: PartialEq>(a: &[P], b: &[P]) -> usize {
    let (n, m) = (a.len(), b.len());
    if n == 0 {
        return m;
    }
    if m == 0 {
        return n;
    }
    // Three rolling rows: i-2, i-1, i.
    let mut prev2 = vec![0usize; m + 1];
    let mut prev: Vec<usize> = (0..=m).collect();
    let mut cur = vec![0usize; m + 1];
    for i in 1..=n {
        cur[0] = i;
        for j in 1..=m {
            let cost = usize::from(a[i - 1] != b[j - 1]);
            let mut d = (prev[j] + 1).min(cur[j - 1] + 1).min(prev[j - 1] + cost);
            if i > 1 && j > 1 && a[i - 1] == b[j - 2] && a[i - 2] == b[j - 1] {
                d = d.min(prev2[j - 2] + 1);
            }
            cur[j] = d;
        }
        std::mem::swap(&mut prev2, &mut prev);
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m]
}

/// Edit distance divided by the longer length, in `[0, 1]`.
pub fn normalized_distance<P: PartialEq>(a: &[P], b: &[P]) -> Result<f64, DiscriminateError> {
    let longest = a.len().max(b.len());
    if longest == 0 {
        return Err(DiscriminateError::BothEmpty);
    }
    Ok(dl_distance(a, b) as f64 / longest as f64)
}

/// Summed normalized distance of a query to one type's references.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DissimilarityScore {
    pub device_type: DeviceTypeId,
    pub score: f64,
    pub comparisons_used: usize,
}

/// Scores `query` against up to five references of a type. With fewer than
/// five references the sum is scaled by `5 / refs` so scores stay comparable.
pub fn score_type(
    device_type: &DeviceTypeId,
    query: &Fingerprint,
    refs: &[&Fingerprint],
) -> Result<DissimilarityScore, DiscriminateError> {
    if refs.is_empty() {
        return Err(DiscriminateError::NoReferences(device_type.clone()));
    }
    let used = &refs[..refs.len().min(REFS_PER_TYPE)];
    let mut sum = 0.0;
    for r in used {
        sum += normalized_distance(&query.columns, &r.columns)?;
    }
    let score = sum * REFS_PER_TYPE as f64 / used.len() as f64;
    Ok(DissimilarityScore {
        device_type: device_type.clone(),
        score: score.clamp(0.0, REFS_PER_TYPE as f64),
        comparisons_used: used.len(),
    })
}

/// Winner of a discrimination round along with every candidate's score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discrimination {
    pub winner: DeviceTypeId,
    pub scores: Vec<DissimilarityScore>,
}

/// Picks the candidate with the lowest dissimilarity; equal scores go to the
/// lexicographically smallest type id.
pub fn discriminate(
    query: &Fingerprint,
    candidates: &[(DeviceTypeId, Vec<&Fingerprint>)],
) -> Result<Discrimination, DiscriminateError> {
    if candidates.len() < 2 {
        return Err(DiscriminateError::TooFewCandidates(candidates.len()));
    }
    let scores = candidates
        .iter()
        .map(|(id, refs)| score_type(id, query, refs))
        .collect::<Result<Vec<_>, _>>()?;
    let best = scores
        .iter()
        .min_by(|a, b| a.score.total_cmp(&b.score).then_with(|| a.device_type.cmp(&b.device_type)))
        .expect("at least two candidates");
    Ok(Discrimination { winner: best.device_type.clone(), scores })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mac::MacAddr;
    use crate::pcap::PacketFeatures;

    fn p(size: u32) -> PacketFeatures {
        PacketFeatures { ip: true, udp: true, size, ..Default::default() }
    }

    fn fp(sizes: &[u32]) -> Fingerprint {
        Fingerprint { device_mac: MacAddr::default(), columns: sizes.iter().map(|&s| p(s)).collect(), label: None }
    }

    fn tid(s: &str) -> DeviceTypeId {
        DeviceTypeId::new(s).unwrap()
    }

    #[test]
    fn distance_examples() {
        assert_eq!(dl_distance(&[1, 2, 3], &[1, 2, 3]), 0);
        assert_eq!(dl_distance(&['x', 'y', 'z'], &['x', 'z', 'y']), 1);
        assert_eq!(dl_distance::<u8>(&[], &[1, 2, 3, 4]), 4);
        assert_eq!(dl_distance(&[1, 2, 3, 4, 5], &[6, 7, 8, 9, 10]), 5);
        // OSA cannot edit a transposed pair again: "ca" -> "abc" is 3, not 2.
        assert_eq!(dl_distance(&['c', 'a'], &['a', 'b', 'c']), 3);
    }

    #[test]
    fn normalized_examples() {
        assert_eq!(normalized_distance(&[1, 2], &[1, 2]).unwrap(), 0.0);
        assert_eq!(normalized_distance(&[1, 2, 3, 4, 5], &[6, 7, 8, 9, 10]).unwrap(), 1.0);
        assert!((normalized_distance(&['x', 'y', 'z'], &['x', 'z', 'y']).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(normalized_distance::<u8>(&[], &[]), Err(DiscriminateError::BothEmpty));
    }

    #[test]
    fn score_bounds_and_rescaling() {
        let q = fp(&[1, 2, 3, 4, 5]);
        let same: Vec<Fingerprint> = (0..5).map(|_| q.clone()).collect();
        let refs: Vec<&Fingerprint> = same.iter().collect();
        assert_eq!(score_type(&tid("a"), &q, &refs).unwrap().score, 0.0);

        let far: Vec<Fingerprint> = (0..5).map(|_| fp(&[9, 9, 9, 9, 9])).collect();
        let refs: Vec<&Fingerprint> = far.iter().collect();
        assert_eq!(score_type(&tid("a"), &q, &refs).unwrap().score, 5.0);

        // Distances 0.2, 0.4, 0.0: raw sum 0.6, scaled by 5/3.
        let r = [fp(&[1, 2, 3, 4, 9]), fp(&[1, 2, 3, 9, 9]), fp(&[1, 2, 3, 4, 5])];
        let refs: Vec<&Fingerprint> = r.iter().collect();
        let s = score_type(&tid("a"), &q, &refs).unwrap();
        assert!((s.score - 1.0).abs() < 1e-12);
        assert_eq!(s.comparisons_used, 3);

        assert_eq!(score_type(&tid("a"), &q, &[]), Err(DiscriminateError::NoReferences(tid("a"))));
    }

    #[test]
    fn lowest_score_then_lexicographic() {
        let q = fp(&[1, 2, 3, 4, 5]);
        let near = [fp(&[1, 2, 3, 4, 5])];
        let far = [fp(&[7, 8, 9])];
        let pick = discriminate(
            &q,
            &[(tid("tp-link-plug"), far.iter().collect()), (tid("z-cam"), near.iter().collect())],
        )
        .unwrap();
        assert_eq!(pick.winner, tid("z-cam"));

        let tie = discriminate(
            &q,
            &[(tid("tp-link-plug"), near.iter().collect()), (tid("d-link-cam"), near.iter().collect())],
        )
        .unwrap();
        assert_eq!(tie.winner, tid("d-link-cam"));

        assert_eq!(
            discriminate(&q, &[(tid("a"), near.iter().collect())]),
            Err(DiscriminateError::TooFewCandidates(1))
        );
    }

    proptest::proptest! {
        #[test]
        fn symmetric_bounded(a in proptest::collection::vec(0u8..4, 0..12), b in proptest::collection::vec(0u8..4, 0..12)) {
            let d = dl_distance(&a, &b);
            proptest::prop_assert_eq!(d, dl_distance(&b, &a));
            proptest::prop_assert!(d <= a.len().max(b.len()));
            proptest::prop_assert!(d >= a.len().abs_diff(b.len()));
            proptest::prop_assert_eq!(dl_distance(&a, &a), 0);
        }
    }
}
