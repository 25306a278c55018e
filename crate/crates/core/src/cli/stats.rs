//! Latency statistics in the AVERAGE / AVEDEV / MIN / MAX layout.

use std::fmt::Write as _;

use serde::Serialize;

use crate::rtsim::LatencySample;

/// Column names of the statistics table, in order.
pub const STATS_COLUMNS: [&str; 4] = ["AVERAGE", "AVEDEV", "MIN", "MAX"];

/// Summary of a latency series in nanoseconds. All but `count` are `None` for an empty series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LatencyStats {
    pub count: usize,
    pub average: Option<f64>,
    /// Mean absolute deviation from the mean.
    pub avedev: Option<f64>,
    pub min: Option<i64>,
    pub max: Option<i64>,
}

pub fn compute_stats(samples: &[LatencySample]) -> LatencyStats {
    let values: Vec<i64> = samples.iter().map(|s| s.latency_ns).collect();
    compute_stats_ns(&values)
}

pub fn compute_stats_ns(values: &[i64]) -> LatencyStats {
    if values.is_empty() {
        return LatencyStats {
            count: 0,
            average: None,
            avedev: None,
            min: None,
            max: None,
        };
    }
    let n = values.len();
    let sum: i128 = values.iter().map(|&v| v as i128).sum();
    let average = sum as f64 / n as f64;
    let avedev = values.iter().map(|&v| (v as f64 - average).abs()).sum::<f64>() / n as f64;
    LatencyStats {
        count: n,
        average: Some(average),
        avedev: Some(avedev),
        min: values.iter().min().copied(),
        max: values.iter().max().copied(),
    }
}

fn micros(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |ns| format!("{:.1}", ns / 1_000.0))
}

/// One titled block: a title line, the column header, one row of values in microseconds.
pub fn format_block(title: &str, stats: &LatencyStats) -> String {
    let mut out = String::new();
    writeln!(out, "{title}, {} samples (us)", stats.count).unwrap();
    writeln!(out, "{}", STATS_COLUMNS.join("\t")).unwrap();
    writeln!(
        out,
        "{}\t{}\t{}\t{}",
        micros(stats.average),
        micros(stats.avedev),
        micros(stats.min.map(|v| v as f64)),
        micros(stats.max.map(|v| v as f64)),
    )
    .unwrap();
    out
}

pub const CSV_HEADER: &str = "task,mode,count,average_ns,avedev_ns,min_ns,max_ns";

/// One CSV row in nanoseconds at full precision; empty fields for an empty series.
pub fn csv_row(task: &str, mode: &str, stats: &LatencyStats) -> String {
    let opt = |v: Option<String>| v.unwrap_or_default();
    format!(
        "{task},{mode},{},{},{},{},{}",
        stats.count,
        opt(stats.average.map(|v| v.to_string())),
        opt(stats.avedev.map(|v| v.to_string())),
        opt(stats.min.map(|v| v.to_string())),
        opt(stats.max.map(|v| v.to_string())),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Exact rational average and mean absolute deviation as (numerator, denominator).
    fn exact(values: &[i64]) -> ((i128, i128), (i128, i128)) {
        let n = values.len() as i128;
        let s: i128 = values.iter().map(|&v| v as i128).sum();
        let dev: i128 = values.iter().map(|&v| (n * v as i128 - s).abs()).sum();
        ((s, n), (dev, n * n))
    }

    #[test]
    fn three_point_example() {
        let st = compute_stats_ns(&[-1, 0, 1]);
        assert_eq!(st.count, 3);
        assert_eq!(st.average, Some(0.0));
        assert!((st.avedev.unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!((st.min, st.max), (Some(-1), Some(1)));
    }

    #[test]
    fn single_and_empty() {
        let st = compute_stats_ns(&[42]);
        assert_eq!((st.average, st.avedev, st.min, st.max), (Some(42.0), Some(0.0), Some(42), Some(42)));
        let e = compute_stats_ns(&[]);
        assert_eq!(e.count, 0);
        assert!(e.average.is_none() && e.avedev.is_none() && e.min.is_none() && e.max.is_none());
    }

    #[test]
    fn injected_constant_latency() {
        let samples: Vec<LatencySample> = (0..3)
            .map(|k| LatencySample::new(crate::registry::ComponentId(1), k * 10_000_000, 5_000))
            .collect();
        let st = compute_stats(&samples);
        assert_eq!((st.average, st.avedev), (Some(5_000.0), Some(0.0)));
    }

    #[test]
    fn block_layout() {
        let block = format_block("calc light", &compute_stats_ns(&[1_000, 3_000]));
        let lines: Vec<&str> = block.lines().collect();
        assert_eq!(lines[1], "AVERAGE\tAVEDEV\tMIN\tMAX");
        assert_eq!(lines[2], "2.0\t1.0\t1.0\t3.0");
        assert_eq!(format_block("x", &compute_stats_ns(&[])).lines().nth(2), Some("-\t-\t-\t-"));
        assert_eq!(csv_row("calc", "light", &compute_stats_ns(&[1, 2])), "calc,light,2,1.5,0.5,1,2");
    }

    proptest! {
        #[test]
        fn matches_exact_reference(values in prop::collection::vec(-5_000_000i64..5_000_000, 1..300)) {
            let st = compute_stats_ns(&values);
            let ((s, n), (d, nn)) = exact(&values);
            let avg = s as f64 / n as f64;
            let dev = d as f64 / nn as f64;
            prop_assert!((st.average.unwrap() - avg).abs() <= 1e-9 * avg.abs().max(1.0));
            prop_assert!((st.avedev.unwrap() - dev).abs() <= 1e-9 * dev.abs().max(1.0));
            prop_assert!(st.avedev.unwrap() >= 0.0);
            prop_assert_eq!(st.avedev.unwrap() == 0.0, values.iter().all(|&v| v == values[0]));
            prop_assert!(st.min.unwrap() as f64 <= st.average.unwrap());
            prop_assert!(st.average.unwrap() <= st.max.unwrap() as f64);
        }
    }
}
