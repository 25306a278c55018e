//! The calculation/display pair used by scenarios and the latency experiment.

use std::sync::{Arc, Mutex};

use crate::descriptor::{parse_descriptor, ComponentDescriptor};
use crate::rtsim::{BodyCatalog, Payload, TaskBody, TaskContext};

pub const CALC_XML: &str = include_str!("../../scenarios/calc.xml");
pub const DISPLAY_XML: &str = include_str!("../../scenarios/display.xml");

pub const CALC_BINCODE: &str = "rtexec.demo.Calculation";
pub const DISPLAY_BINCODE: &str = "rtexec.demo.Display";

/// Shared-memory port carrying `[release index, latency ns]`.
pub const LATENCY_PORT: &str = "latdat";

/// Calc descriptor running at `hz`.
pub fn calc_descriptor(hz: f64) -> ComponentDescriptor {
    with_frequency(CALC_XML, hz)
}

/// Display descriptor running at `hz`.
pub fn display_descriptor(hz: f64) -> ComponentDescriptor {
    with_frequency(DISPLAY_XML, hz)
}

fn with_frequency(xml: &str, hz: f64) -> ComponentDescriptor {
    let mut d = parse_descriptor(xml).expect("bundled descriptor parses");
    d.task.as_mut().expect("bundled descriptor is periodic").frequency = hz;
    d
}

/// Burns `workload` iterations, then publishes its own latency.
#[derive(Debug, Default)]
pub struct CalculationBody {
    acc: u64,
}

impl TaskBody for CalculationBody {
    fn step(&mut self, ctx: &mut TaskContext<'_>) {
        let workload: u64 = ctx.property("workload").and_then(|v| v.parse().ok()).unwrap_or(0);
        for i in 0..workload {
            self.acc = self.acc.wrapping_mul(6364136223846793005).wrapping_add(i | 1);
        }
        std::hint::black_box(self.acc);
        let latency = ctx.latency.map_or(0, |s| s.latency_ns);
        let sample = [
            ctx.release_index.min(i32::MAX as u64) as i32,
            latency.clamp(i32::MIN as i64, i32::MAX as i64) as i32,
        ];
        // Write failures only happen after revocation, when nobody reads anyway.
        let _ = ctx.write(LATENCY_PORT, Payload::Integer(sample.to_vec()));
    }
}

/// What the display saw: `[release index, latency ns]` per read.
pub type DisplaySink = Arc<Mutex<Vec<[i32; 2]>>>;

/// Reads the latest calc sample; prints it when `verbose` is true.
#[derive(Debug, Default)]
pub struct DisplayBody {
    sink: Option<DisplaySink>,
}

impl TaskBody for DisplayBody {
    fn step(&mut self, ctx: &mut TaskContext<'_>) {
        let Ok(Some(snapshot)) = ctx.read_shm(LATENCY_PORT) else {
            return;
        };
        let Some(&[k, latency]) = snapshot.data.as_integers() else {
            return;
        };
        if ctx.property("verbose") == Some("true") {
            println!("{}: release {k} latency {latency} ns", ctx.name);
        }
        if let Some(sink) = &self.sink {
            sink.lock().unwrap().push([k, latency]);
        }
    }
}

pub fn demo_catalog(display_sink: Option<DisplaySink>) -> BodyCatalog {
    let mut catalog = BodyCatalog::new();
    catalog.register(CALC_BINCODE, |_| Box::new(CalculationBody::default()));
    catalog.register(DISPLAY_BINCODE, move |_| {
        Box::new(DisplayBody {
            sink: display_sink.clone(),
        })
    });
    catalog
}
