//! Published ZS-OSR splits. Ids in the data files are 1-based.

use serde::Deserialize;

use super::bundle::SplitSpec;
use crate::{Error, Result};

#[derive(Debug, Deserialize)]
struct CanonicalFile {
    dataset: String,
    n_classes: usize,
    unseen: Vec<usize>,
    unknown: Vec<usize>,
}

const FILES: [(&str, &str); 4] = [
    ("cub", include_str!("../../data/splits/cub.json")),
    ("awa2", include_str!("../../data/splits/awa2.json")),
    ("flo", include_str!("../../data/splits/flo.json")),
    ("sun", include_str!("../../data/splits/sun.json")),
];

pub fn canonical_names() -> impl Iterator<Item = &'static str> {
    FILES.iter().map(|(n, _)| *n)
}

/// The canonical split for `name` (case-insensitive), converted to 0-based
/// ids. Seen classes are every class not listed as unseen or unknown.
pub fn canonical_split(name: &str) -> Result<(usize, SplitSpec)> {
    let key = name.to_ascii_lowercase();
    let (_, text) = FILES
        .iter()
        .find(|(n, _)| *n == key)
        .ok_or_else(|| Error::Config(format!("no canonical split named `{name}`")))?;
    let file: CanonicalFile = serde_json::from_str(text)?;
    let to_zero = |ids: &[usize]| -> Vec<usize> { ids.iter().map(|&i| i - 1).collect() };
    let unseen = to_zero(&file.unseen);
    let unknown = to_zero(&file.unknown);
    let seen = (0..file.n_classes)
        .filter(|c| !unseen.contains(c) && !unknown.contains(c))
        .collect();
    log::debug!("loaded canonical split for {}", file.dataset);
    Ok((
        file.n_classes,
        SplitSpec {
            seen,
            unseen,
            unknown,
            seen_test: None,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn awa2_ids_match_the_published_table() {
        let (c, s) = canonical_split("AWA2").unwrap();
        assert_eq!(c, 50);
        let one_based = |v: &[usize]| v.iter().map(|i| i + 1).collect::<Vec<_>>();
        assert_eq!(one_based(&s.unseen), vec![7, 23, 24, 31, 47]);
        assert_eq!(one_based(&s.unknown), vec![9, 30, 34, 41, 50]);
        assert_eq!(s.seen.len(), 40);
    }

    #[test]
    fn split_sizes() {
        for (name, seen, half) in [("cub", 150, 25), ("awa2", 40, 5), ("flo", 82, 10), ("sun", 645, 36)] {
            let (_, s) = canonical_split(name).unwrap();
            assert_eq!((s.seen.len(), s.unseen.len(), s.unknown.len()), (seen, half, half), "{name}");
            s.validate(usize::MAX).unwrap();
        }
    }

    #[test]
    fn unknown_name() {
        assert!(canonical_split("imagenet").is_err());
    }
}
