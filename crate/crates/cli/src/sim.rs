//! Argument handling for `neuron-sim`.

use std::path::Path;

use snnf_core::dynamics::{export_trace, scenario, simulate, CurrentProfile, ScenarioName, ScenarioOutcome, SimTrace};
use snnf_core::neurons::{NeuronKind, NeuronParams, ResetMode};
use snnf_core::{Error, Result};

/// Parses `A`, `constant:A`, `step:A:ON:OFF`, `pulse:A:ON:OFF`,
/// `ramp:A:SLOPE:ON:OFF` or `inhibitory:A:ON:OFF` (steps zero-based, window half-open).
pub fn parse_current(s: &str) -> Result<CurrentProfile> {
    let parts: Vec<&str> = s.split(':').map(str::trim).collect();
    let bad = || Error::Config(format!("cannot parse current '{s}'"));
    let num = |i: usize| parts.get(i).and_then(|p| p.parse::<f64>().ok()).ok_or_else(bad);
    let idx = |i: usize| parts.get(i).and_then(|p| p.parse::<usize>().ok()).ok_or_else(bad);
    if let [only] = parts.as_slice() {
        return only.parse().map(CurrentProfile::constant).map_err(|_| bad());
    }
    let expect = |n: usize| if parts.len() == n { Ok(()) } else { Err(bad()) };
    match parts[0] {
        "constant" => expect(2).and(Ok(CurrentProfile::constant(num(1)?))),
        "step" => expect(4).and(Ok(CurrentProfile::step(num(1)?, idx(2)?, idx(3)?))),
        "pulse" => expect(4).and(Ok(CurrentProfile::pulse(num(1)?, idx(2)?, idx(3)?))),
        "ramp" => expect(5).and(Ok(CurrentProfile::ramp(num(1)?, num(2)?, idx(3)?, idx(4)?))),
        "inhibitory" | "inhibitory_release" => {
            expect(4).and(Ok(CurrentProfile::inhibitory_release(num(1)?, idx(2)?, idx(3)?)))
        }
        _ => Err(bad()),
    }
}

pub fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("cannot parse number list '{s}'")))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimArgs {
    pub model: NeuronKind,
    pub reset: ResetMode,
    pub threshold: f64,
    pub v_reset: f64,
    /// One value, or one per step for time-wise ULIF.
    pub leak: Vec<f64>,
    pub gain: Vec<f64>,
    pub decay: Vec<f64>,
    pub tau: f64,
}

impl SimArgs {
    pub fn params(&self, steps: usize) -> Result<NeuronParams> {
        let p = match self.model {
            NeuronKind::If => NeuronParams::integrate_and_fire(self.reset),
            NeuronKind::Lif => NeuronParams::lif(self.tau, self.reset),
            NeuronKind::Plif => NeuronParams::plif(self.decay.clone(), self.reset),
            NeuronKind::Ulif => {
                // a single value pairs with a per-step list by repetition
                let n = self.leak.len().max(self.gain.len());
                let widen = |v: &[f64]| if v.len() == 1 { vec![v[0]; n] } else { v.to_vec() };
                NeuronParams::ulif(widen(&self.leak), widen(&self.gain), self.reset)
            }
        }
        .with_threshold(self.threshold)
        .with_reset_potential(self.v_reset);
        p.validate(steps)?;
        Ok(p)
    }

    pub fn simulate(&self, current: &CurrentProfile, steps: usize) -> Result<SimTrace> {
        simulate(&self.params(steps)?, current, steps)
    }
}

fn bits(trace: &SimTrace) -> String {
    trace.s.iter().map(|&s| if s > 0.0 { '1' } else { '0' }).collect()
}

pub fn describe(trace: &SimTrace) -> String {
    format!("spikes {} (count {})", bits(trace), trace.spike_count())
}

/// Runs a shipped scenario; with `out`, writes `<out>_<stimulus>.csv/.svg` per stimulus.
pub fn run_scenario(name: ScenarioName, out: Option<&Path>) -> Result<ScenarioOutcome> {
    let outcome = scenario(name).run()?;
    if let Some(base) = out {
        for (label, trace) in &outcome.traces {
            let stem = format!(
                "{}_{}",
                base.file_name().and_then(|f| f.to_str()).unwrap_or("trace"),
                label.replace(' ', "_")
            );
            export_trace(trace, &base.with_file_name(stem))?;
        }
    }
    Ok(outcome)
}
