//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

#[path = "../../../core/tests/common/mod.rs"]
mod common;
mod learning;
mod live_async;
mod matrix;
mod protocol;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

/// `Ok` carries the measured values, `Err` what went wrong.
pub type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}
pub(crate) use ensure;

fn run(id: u32, title: &str, f: impl FnOnce() -> Check) -> bool {
    let t = Instant::now();
    let out = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Err(format!("panicked: {msg}"))
    });
    let secs = t.elapsed().as_secs_f64();
    let (tag, detail) = match &out {
        Ok(d) => ("PASS", d),
        Err(d) => ("FAIL", d),
    };
    println!("criterion {id:>2} [{tag}] {title} ({secs:.1}s): {detail}");
    out.is_ok()
}

fn main() {
    // `cargo test` passes harness flags such as --nocapture; none apply here
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let wanted = |id: u32| filter.is_empty() || filter.iter().any(|f| f == &id.to_string());

    let needs_matrix = [6, 7, 8, 9, 11].iter().any(|&i| wanted(i));
    let matrix = needs_matrix.then(|| {
        let t = Instant::now();
        let m = matrix::MatrixRuns::build();
        println!("policy matrix: two seeded runs of 13 policies x 312 tasks in {:.1}s", t.elapsed().as_secs_f64());
        m
    });

    let mut ok = true;
    let mut go = |id: u32, title: &str, f: &dyn Fn() -> Check| {
        if wanted(id) {
            ok &= run(id, title, f);
        }
    };
    go(1, "label reproduction", &protocol::labels);
    go(2, "concurrency reproduction", &protocol::concurrency);
    go(3, "oracle equivalence", &protocol::oracle);
    go(4, "losslessness", &protocol::losslessness);
    go(5, "learner numerics", &learning::numerics);
    let m = || matrix.as_ref().expect("matrix built").as_ref().map_err(Clone::clone);
    go(6, "tau controllability", &|| matrix::tau_trend(m()?));
    go(7, "pareto", &|| matrix::pareto(m()?));
    go(8, "cost breakdown", &|| matrix::breakdown(m()?));
    go(9, "bandit dominated", &|| matrix::bandit(m()?));
    go(10, "async contract", &|| {
        let live = live_async::round_latency()?;
        let swap = learning::swap_stress()?;
        Ok(format!("{live}; {swap}"))
    });
    go(11, "determinism", &|| matrix::determinism(m()?));
    if !ok {
        std::process::exit(1);
    }
}
