//! File formats: configuration, event histories, result tables and run
//! manifests. All CSV output uses `.` decimals, LF line endings and a fixed
//! column order.

pub mod config;
pub mod events;
pub mod output;

pub use config::{parse_transition, AppConfig, ConfigError};
pub use events::{ingest_events, write_events, Diagnostic, EventHistory, EventsError, CENSORED};
pub use output::{
    write_clt, write_consistency, write_independence, write_lasso_path_summary, write_lemma, write_oe_table,
    write_rate_fit, write_rows, write_slice, write_surface_truth, write_sweep, write_tree_leaves, write_truth, FitTag, Manifest,
    OutputError,
};

/// Event time with nine significant digits, printed without trailing noise.
pub fn fmt_time(t: f64) -> String {
    let rounded: f64 = format!("{t:.8e}").parse().expect("formatted float parses");
    format!("{rounded}")
}

/// Shortest representation that reads back to the same `f64`.
pub fn fmt_float(x: f64) -> String {
    if x.is_nan() {
        return "NA".into();
    }
    format!("{x:?}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn time_keeps_nine_digits() {
        assert_eq!(fmt_time(12.3456789012), "12.3456789");
        assert_eq!(fmt_time(40.0), "40");
        assert_eq!(fmt_time(0.000123456789123), "0.000123456789");
    }

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1.0 / 3.0, 1e-300, 123456.789, -2.5] {
            assert_eq!(fmt_float(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_float(f64::NAN), "NA");
    }
}
