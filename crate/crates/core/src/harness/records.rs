//! CSV telemetry and run metrics.

use std::io::{Read, Write};

use serde::Serialize;

use crate::sim::{SimError, SimRecord, SimRun, RECORD_COLUMNS};

use super::HarnessError;

/// Nine significant digits.
pub fn format_value(v: f64) -> String {
    format!("{v:.8e}")
}

pub fn write_records<W: Write>(out: W, records: &[SimRecord<f64>]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RECORD_COLUMNS)?;
    for r in records {
        w.write_record(r.to_row().iter().map(|&v| format_value(v)))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records<R: Read>(input: R) -> Result<Vec<SimRecord<f64>>, HarnessError> {
    let mut rd = csv::Reader::from_reader(input);
    let header = rd.headers()?.clone();
    if header.iter().ne(RECORD_COLUMNS.iter().copied()) {
        return Err(HarnessError::Config("unexpected CSV header".into()));
    }
    let mut out = Vec::new();
    for row in rd.records() {
        let row = row?;
        let mut vals = [0.0; RECORD_COLUMNS.len()];
        if row.len() != vals.len() {
            return Err(HarnessError::Config(format!("row has {} fields", row.len())));
        }
        for (dst, field) in vals.iter_mut().zip(row.iter()) {
            *dst = field
                .parse()
                .map_err(|_| HarnessError::Config(format!("bad number `{field}`")))?;
        }
        out.push(SimRecord::from_row(&vals));
    }
    Ok(out)
}

/// Scalar summary of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetrics {
    pub preset: String,
    pub records: usize,
    pub final_time: f64,
    /// RMS of `|e1|` over the whole run [m].
    pub rmse_e1: f64,
    /// RMS of `|e1|` over the final 25 % of the run [m].
    pub rmse_e1_late: f64,
    pub max_input: f64,
    pub v4_initial: f64,
    pub v4_final: f64,
    pub guard_tripped: bool,
    /// Smallest `|F|` the controller was evaluated at [N].
    pub min_thrust: f64,
    pub error: Option<String>,
}

impl RunMetrics {
    pub const COLUMNS: [&'static str; 11] = [
        "preset",
        "records",
        "final_time",
        "rmse_e1",
        "rmse_e1_late",
        "max_input",
        "v4_initial",
        "v4_final",
        "guard_tripped",
        "min_thrust",
        "error",
    ];

    pub fn from_run(preset: &str, run: &SimRun<f64>) -> Self {
        let recs = &run.records;
        let final_time = recs.last().map_or(0.0, |r| r.t);
        let rms = |it: &mut dyn Iterator<Item = f64>| {
            let (sum, n) = it.fold((0.0, 0usize), |(s, n), e| (s + e * e, n + 1));
            if n == 0 {
                f64::NAN
            } else {
                (sum / n as f64).sqrt()
            }
        };
        let late_start = 0.75 * final_time;
        Self {
            preset: preset.to_string(),
            records: recs.len(),
            final_time,
            rmse_e1: rms(&mut recs.iter().map(|r| r.error_norms[0])),
            rmse_e1_late: rms(&mut recs.iter().filter(|r| r.t >= late_start).map(|r| r.error_norms[0])),
            max_input: recs.iter().map(|r| r.input.norm()).fold(0.0, f64::max),
            v4_initial: recs.first().map_or(f64::NAN, |r| r.v4),
            v4_final: recs.last().map_or(f64::NAN, |r| r.v4),
            guard_tripped: matches!(run.error, Some(SimError::SingularGuardTripped { .. })),
            min_thrust: run.min_thrust_evaluated,
            error: run.error.as_ref().map(|e| e.to_string()),
        }
    }

    pub fn row(&self) -> Vec<String> {
        vec![
            self.preset.clone(),
            self.records.to_string(),
            format_value(self.final_time),
            format_value(self.rmse_e1),
            format_value(self.rmse_e1_late),
            format_value(self.max_input),
            format_value(self.v4_initial),
            format_value(self.v4_final),
            self.guard_tripped.to_string(),
            format_value(self.min_thrust),
            self.error.clone().unwrap_or_default(),
        ]
    }
}

impl std::fmt::Display for RunMetrics {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "preset          {}", self.preset)?;
        writeln!(f, "records         {}", self.records)?;
        writeln!(f, "final time      {:.3} s", self.final_time)?;
        writeln!(f, "rmse |e1|       {:.6e} m", self.rmse_e1)?;
        writeln!(f, "late rmse |e1|  {:.6e} m", self.rmse_e1_late)?;
        writeln!(f, "max |u|         {:.6e}", self.max_input)?;
        writeln!(f, "V4(0)           {:.6e}", self.v4_initial)?;
        writeln!(f, "V4(T)           {:.6e}", self.v4_final)?;
        writeln!(f, "min |F|         {:.6e} N", self.min_thrust)?;
        write!(f, "guard tripped   {}", self.guard_tripped)?;
        if let Some(e) = &self.error {
            write!(f, "\nerror           {e}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ControlInput, PlantState, Vec2};
    use crate::controller::EstimatorState;

    fn sample(i: usize) -> SimRecord<f64> {
        let x = i as f64;
        SimRecord {
            t: x * 1e-3,
            state: PlantState::from_array([x.sin(), 1.0 / 3.0, -x, 1e-12 * x, 9.81, 0.1, -0.2, 1e5]),
            input: ControlInput::new(std::f64::consts::PI, -x),
            reference: Vec2::new(0.5, 2.0 / 7.0),
            error_norms: [x, 0.0, 1.0, 2.0],
            est: EstimatorState::from_array([1.0, 0.2, -0.3, x.sqrt()]),
            v4: 668.860086413,
            v4_dot_analytic: -1.0,
            v4_dot_findiff: f64::NAN,
        }
    }

    #[test]
    fn csv_round_trip_at_printed_precision() {
        let recs: Vec<_> = (0..20).map(sample).collect();
        let mut a = Vec::new();
        write_records(&mut a, &recs).unwrap();
        let back = read_records(a.as_slice()).unwrap();
        assert_eq!(back.len(), recs.len());
        let mut b = Vec::new();
        write_records(&mut b, &back).unwrap();
        assert_eq!(a, b);
        let rel = (back[3].state.velocity.x - recs[3].state.velocity.x).abs();
        assert!(rel < 1e-8);
        let head = String::from_utf8(a).unwrap();
        assert!(head.starts_with("t,r1,r2,v1,v2,F,phi,F_dot,phi_dot,u_F_ddot,u_M,xi1_1,xi1_2,"));
    }

    #[test]
    fn nine_significant_digits() {
        assert_eq!(format_value(1.0 / 3.0), "3.33333333e-1");
        assert_eq!(format_value(-120.0), "-1.20000000e2");
    }

    #[test]
    fn metrics_windows() {
        let recs: Vec<_> = (0..=100)
            .map(|i| SimRecord { t: i as f64, error_norms: [if i >= 75 { 2.0 } else { 0.0 }, 0.0, 0.0, 0.0], ..sample(0) })
            .collect();
        let run = SimRun { records: recs, error: None, min_thrust_evaluated: 9.81, controller_calls: 0 };
        let m = RunMetrics::from_run("x", &run);
        assert_eq!(m.rmse_e1_late, 2.0);
        assert!(m.rmse_e1 > 0.0 && m.rmse_e1 < 2.0);
        assert!(!m.guard_tripped);
    }
}
