use std::ops::Range;

use crate::error::{Error, Result};

/// ETTh1 borders used across the long-horizon forecasting literature:
/// 12 months train, 4 months validation, 4 months test at hourly resolution.
const ETTH1_TRAIN_END: usize = 12 * 30 * 24;
const ETTH1_VAL_END: usize = ETTH1_TRAIN_END + 4 * 30 * 24;
const ETTH1_TEST_END: usize = ETTH1_VAL_END + 4 * 30 * 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitPolicy {
    /// 70 / 20 / 10 percent of the rows.
    Ratio70_20_10,
    /// Fixed hourly ETT borders (8640 / 2880 / 2880 rows).
    Etth1Standard,
}

/// Three disjoint, ordered, half-open row ranges.
///
/// Validation and test windows may read up to `context_len` rows before their
/// range starts; forecast targets always lie inside the range.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitBorders {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

pub fn split_borders(
    n_rows: usize,
    policy: SplitPolicy,
    context_len: usize,
    horizon: usize,
) -> Result<SplitBorders> {
    let borders = match policy {
        SplitPolicy::Ratio70_20_10 => {
            // exact integer floor of 0.7·T and 0.9·T
            let a = n_rows * 7 / 10;
            let b = n_rows * 9 / 10;
            SplitBorders {
                train: 0..a,
                val: a..b,
                test: b..n_rows,
            }
        }
        SplitPolicy::Etth1Standard => {
            if n_rows < ETTH1_TEST_END {
                return Err(Error::TooShort {
                    required: ETTH1_TEST_END,
                    available: n_rows,
                });
            }
            SplitBorders {
                train: 0..ETTH1_TRAIN_END,
                val: ETTH1_TRAIN_END..ETTH1_VAL_END,
                test: ETTH1_VAL_END..ETTH1_TEST_END,
            }
        }
    };
    let train_ok = borders.train.len() >= context_len + horizon;
    let val_ok = borders.val.start >= context_len && borders.val.len() >= horizon;
    let test_ok = borders.test.start >= context_len && borders.test.len() >= horizon;
    if !(train_ok && val_ok && test_ok) {
        return Err(Error::InvalidArgument(format!(
            "{n_rows} rows cannot hold a {context_len}->{horizon} window in every split ({borders:?})"
        )));
    }
    Ok(borders)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_borders_for_synthetic_length() {
        let b = split_borders(6144, SplitPolicy::Ratio70_20_10, 96, 96).unwrap();
        assert_eq!((b.train.end, b.val.end, b.test.end), (4300, 5529, 6144));
        assert_eq!(b.train.start, 0);
        assert_eq!(b.val.start, b.train.end);
        assert_eq!(b.test.start, b.val.end);
    }

    #[test]
    fn etth1_standard_sizes() {
        let b = split_borders(17420, SplitPolicy::Etth1Standard, 96, 96).unwrap();
        assert_eq!(
            (b.train.len(), b.val.len(), b.test.len()),
            (8640, 2880, 2880)
        );
        assert_eq!(b.test, 11520..14400);
    }

    #[test]
    fn too_short_series_rejected() {
        assert!(split_borders(10, SplitPolicy::Ratio70_20_10, 96, 1).is_err());
        assert!(split_borders(10_000, SplitPolicy::Etth1Standard, 96, 1).is_err());
    }

    proptest::proptest! {
        #[test]
        fn ratio_partitions_rows(n in 200usize..100_000) {
            let b = split_borders(n, SplitPolicy::Ratio70_20_10, 8, 1).unwrap();
            proptest::prop_assert_eq!(b.train.start, 0);
            proptest::prop_assert_eq!(b.train.end, b.val.start);
            proptest::prop_assert_eq!(b.val.end, b.test.start);
            proptest::prop_assert_eq!(b.test.end, n);
        }
    }
}
