//! Wall-clock latency experiment with the calc/display pair.

use std::fmt::Write as _;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use crate::cli::demo::{calc_descriptor, demo_catalog, display_descriptor, DisplaySink};
use crate::cli::stats::{compute_stats, csv_row, format_block, LatencyStats, CSV_HEADER};
use crate::executive::{ExecError, Executive, ExecutiveConfig};
use crate::rtsim::{LatencySample, WallClockContainer};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoadMode {
    Light,
    Stress,
}

impl LoadMode {
    pub fn as_str(self) -> &'static str {
        match self {
            LoadMode::Light => "light",
            LoadMode::Stress => "stress",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub calc_hz: f64,
    pub display_hz: f64,
    pub duration: Duration,
    pub load: LoadMode,
    /// Busy-loop threads in stress mode.
    pub burners: usize,
    /// Let the display print what it reads.
    pub verbose: bool,
    pub executive: ExecutiveConfig,
}

impl ExperimentConfig {
    pub fn new(calc_hz: f64, display_hz: f64, duration_s: f64, load: LoadMode) -> Self {
        ExperimentConfig {
            calc_hz,
            display_hz,
            duration: Duration::from_secs_f64(duration_s),
            load,
            burners: thread::available_parallelism().map_or(1, |n| n.get()),
            verbose: false,
            executive: ExecutiveConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TaskRow {
    pub task: String,
    pub stats: LatencyStats,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub load: LoadMode,
    pub rows: Vec<TaskRow>,
    pub calc_samples: Vec<LatencySample>,
    /// Samples the display read from shared memory.
    pub display_reads: Vec<[i32; 2]>,
    pub elapsed: Duration,
}

impl ExperimentReport {
    pub fn table(&self) -> String {
        let mut out = String::new();
        for row in &self.rows {
            let title = format!("{} {} mode", row.task, self.load.as_str());
            out.push_str(&format_block(&title, &row.stats));
        }
        out
    }

    pub fn csv(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{CSV_HEADER}").unwrap();
        for row in &self.rows {
            writeln!(out, "{}", csv_row(&row.task, self.load.as_str(), &row.stats)).unwrap();
        }
        out
    }
}

struct Burners {
    stop: Arc<AtomicBool>,
    threads: Vec<thread::JoinHandle<()>>,
}

impl Burners {
    fn start(n: usize) -> Self {
        let stop = Arc::new(AtomicBool::new(false));
        let threads = (0..n)
            .map(|_| {
                let stop = stop.clone();
                thread::spawn(move || {
                    let mut x = 1u64;
                    while !stop.load(Ordering::Relaxed) {
                        x = std::hint::black_box(x.wrapping_mul(2862933555777941757).wrapping_add(3037000493));
                    }
                })
            })
            .collect();
        Burners { stop, threads }
    }
}

impl Drop for Burners {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

pub fn run_latency_experiment(config: &ExperimentConfig) -> Result<ExperimentReport, ExecError> {
    assert!(
        config.calc_hz > 0.0 && config.display_hz > 0.0 && !config.duration.is_zero(),
        "rates and duration must be positive"
    );
    let sink: DisplaySink = Arc::new(Mutex::new(Vec::new()));
    let mut exec = Executive::new(config.executive.clone(), Box::new(WallClockContainer::new()))
        .with_bodies(demo_catalog(Some(sink.clone())));
    let mut display = display_descriptor(config.display_hz);
    if config.verbose {
        if let Some(p) = display.properties.iter_mut().find(|p| p.name == "verbose") {
            p.value = "true".into();
        }
    }
    let calc = exec.install(calc_descriptor(config.calc_hz))?;
    let display = exec.install(display)?;

    let _burners = (config.load == LoadMode::Stress).then(|| Burners::start(config.burners));
    let started = Instant::now();
    exec.start(calc)?;
    exec.start(display)?;
    let deadline = started + config.duration;
    thread::sleep(deadline.saturating_duration_since(Instant::now()));
    exec.stop(calc)?;
    let elapsed = started.elapsed();

    let calc_samples = exec.collect_latency(calc)?;
    let display_samples = exec.collect_latency(display)?;
    let rows = vec![
        TaskRow {
            task: "calc".into(),
            stats: compute_stats(&calc_samples),
        },
        TaskRow {
            task: "display".into(),
            stats: compute_stats(&display_samples),
        },
    ];
    let display_reads = sink.lock().unwrap().clone();
    Ok(ExperimentReport {
        load: config.load,
        rows,
        calc_samples,
        display_reads,
        elapsed,
    })
}
