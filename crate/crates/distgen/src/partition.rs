use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One worker's share of a learning set: sample indices `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkAssignment {
    pub worker_id: u32,
    pub seed: u64,
    pub start: u32,
    pub end: u32,
}

impl WorkAssignment {
    pub fn len(&self) -> u32 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

/// Contiguous ranges covering `[0, n)`; the first `n % workers` ranges take
/// one extra index. Workers beyond `n` get empty ranges.
pub fn partition_work(n: u32, workers: u32, seed: u64) -> Result<Vec<WorkAssignment>> {
    if workers == 0 {
        return Err(Error::NoWorkers);
    }
    let base = n / workers;
    let extra = n % workers;
    let mut start = 0;
    Ok((0..workers)
        .map(|w| {
            let len = base + u32::from(w < extra);
            let a = WorkAssignment {
                worker_id: w,
                seed,
                start,
                end: start + len,
            };
            start += len;
            a
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sizes(n: u32, w: u32) -> Vec<u32> {
        partition_work(n, w, 0).unwrap().iter().map(WorkAssignment::len).collect()
    }

    #[test]
    fn even_and_uneven_splits() {
        assert_eq!(sizes(1000, 20), vec![50; 20]);
        assert_eq!(sizes(1000, 4), vec![250; 4]);
        assert_eq!(sizes(10, 3), vec![4, 3, 3]);
        assert_eq!(sizes(2, 3), vec![1, 1, 0]);
        assert!(matches!(partition_work(10, 0, 0), Err(Error::NoWorkers)));
    }

    #[test]
    fn ranges_tile_the_index_space() {
        for (n, w) in [(1, 1), (7, 7), (999, 4), (1000, 7), (3, 5)] {
            let parts = partition_work(n, w, 42).unwrap();
            assert_eq!(parts[0].start, 0);
            assert_eq!(parts.last().unwrap().end, n);
            assert!(parts.windows(2).all(|p| p[0].end == p[1].start));
            let (lo, hi) = (parts.iter().map(|p| p.len()).min().unwrap(), parts.iter().map(|p| p.len()).max().unwrap());
            assert!(hi - lo <= 1);
            assert!(parts.iter().all(|p| p.seed == 42));
        }
    }
}
