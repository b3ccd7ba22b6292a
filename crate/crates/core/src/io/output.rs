//! CSV writers for tables, fits and study results, plus the run manifest.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::fmt_float;
use crate::experiments::{
    BoxTruth, CltSample, ConsistencyRow, IndependenceResult, LemmaReport, Slice, SweepRow, TruthRow,
};
use crate::oe::{GridSpec, OETable, RateFit, TimeGrid};
use crate::regularized::{FusedLassoFit, PoissonTree};

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("JSON: {0}")]
    Json(#[from] serde_json::Error),
}

const NA: &str = "NA";

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| NA.to_string(), fmt_float)
}

struct Table<W: Write>(csv::Writer<W>);

impl<W: Write> Table<W> {
    fn new(out: W, header: &[&str]) -> Result<Self, OutputError> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(header)?;
        Ok(Table(w))
    }

    fn row(&mut self, fields: &[String]) -> Result<(), OutputError> {
        self.0.write_record(fields)?;
        Ok(())
    }

    fn finish(mut self) -> Result<(), OutputError> {
        self.0.flush()?;
        Ok(())
    }
}

fn cell_columns(grid: &GridSpec, bin: usize, fields: &mut Vec<String>) {
    let (lo, hi, dur) = grid.cell_bounds(bin);
    fields.push(fmt_float(lo));
    fields.push(fmt_float(hi));
    if let Some((ulo, uhi)) = dur {
        fields.push(fmt_float(ulo));
        fields.push(fmt_float(uhi));
    }
}

fn with_cell_header<'a>(grid: &GridSpec, first: &[&'a str], rest: &[&'a str]) -> Vec<&'a str> {
    let mut h = first.to_vec();
    h.extend(["t_lo", "t_hi"]);
    if grid.duration().is_some() {
        h.extend(["u_lo", "u_hi"]);
    }
    h.extend(rest);
    h
}

pub fn write_oe_table<W: Write>(table: &OETable, out: W) -> Result<(), OutputError> {
    let grid = table.grid();
    let mut w = Table::new(out, &with_cell_header(grid, &["transition", "bin_index"], &["occurrence", "exposure"]))?;
    for idx in 0..table.layout().transitions.len() {
        let label = table.layout().transition_label(idx);
        for bin in 0..table.n_bins() {
            let mut f = vec![label.clone(), bin.to_string()];
            cell_columns(grid, bin, &mut f);
            f.push(table.occurrence(idx, bin).to_string());
            f.push(fmt_float(table.transition_exposure(idx, bin)));
            w.row(&f)?;
        }
    }
    w.finish()
}

/// Extra columns identifying how a fit was produced.
#[derive(Clone, Copy)]
pub enum FitTag<'a> {
    Plain,
    Lasso(f64),
    Tree(&'a PoissonTree),
}

pub fn write_rate_fit<W: Write>(fit: &RateFit, tag: FitTag<'_>, out: W) -> Result<(), OutputError> {
    let extra: &[&str] = match tag {
        FitTag::Plain => &[],
        FitTag::Lasso(_) => &["method", "lambda"],
        FitTag::Tree(_) => &["method", "leaf_id"],
    };
    let mut rest = vec!["rate", "variance", "ci_lo", "ci_hi"];
    rest.extend(extra);
    let mut w = Table::new(out, &with_cell_header(&fit.grid, &["transition", "bin"], &rest))?;
    for tr in &fit.transitions {
        for (bin, est) in tr.bins.iter().enumerate() {
            let mut f = vec![tr.label.clone(), bin.to_string()];
            cell_columns(&fit.grid, bin, &mut f);
            match est {
                Some(e) => f.extend([e.rate, e.variance, e.ci_lo, e.ci_hi].map(fmt_float)),
                None => f.extend([NA; 4].map(String::from)),
            }
            match tag {
                FitTag::Plain => {}
                FitTag::Lasso(lambda) => f.extend([fit.method.as_str().to_string(), fmt_float(lambda)]),
                FitTag::Tree(tree) => f.extend([
                    fit.method.as_str().to_string(),
                    tree.leaf_of(bin).map_or_else(|| NA.to_string(), |l| l.to_string()),
                ]),
            }
            w.row(&f)?;
        }
    }
    w.finish()
}

pub fn write_lasso_path_summary<W: Write>(path: &[FusedLassoFit], out: W) -> Result<(), OutputError> {
    let mut w = Table::new(out, &["lambda", "objective", "df"])?;
    for fit in path {
        w.row(&[fmt_float(fit.lambda), fmt_float(fit.objective_value), fit.degrees_of_freedom().to_string()])?;
    }
    w.finish()
}

/// One row per leaf: bin range, time span, pooled counts and rate.
pub fn write_tree_leaves<W: Write>(tree: &PoissonTree, grid: &TimeGrid, out: W) -> Result<(), OutputError> {
    let mut w = Table::new(
        out,
        &["leaf_id", "bin_lo", "bin_hi", "t_lo", "t_hi", "occurrence", "exposure", "rate", "deviance"],
    )?;
    for (id, seg) in tree.leaves().into_iter().enumerate() {
        w.row(&[
            id.to_string(),
            seg.lo.to_string(),
            seg.hi.to_string(),
            fmt_float(grid.edge(seg.lo)),
            fmt_float(grid.edge(seg.hi)),
            seg.occurrence.to_string(),
            fmt_float(seg.exposure),
            opt(seg.rate()),
            fmt_float(seg.deviance),
        ])?;
    }
    w.finish()
}

pub fn write_sweep<W: Write>(rows: &[SweepRow], out: W) -> Result<(), OutputError> {
    let mut w = Table::new(
        out,
        &["m", "delta", "n", "reps", "dropped", "truth", "mean_rate", "var_z", "var_z_alt", "scaled_abs_bias"],
    )?;
    for r in rows {
        w.row(&[
            r.m.to_string(),
            fmt_float(r.delta),
            r.n.to_string(),
            r.reps.to_string(),
            r.dropped.to_string(),
            fmt_float(r.truth),
            fmt_float(r.mean_rate),
            fmt_float(r.var_z),
            fmt_float(r.var_z_alt),
            fmt_float(r.scaled_abs_bias),
        ])?;
    }
    w.finish()
}

/// Writes the long-format z values and the per-mesh summary.
pub fn write_clt<W: Write, S: Write>(samples: &[CltSample], z_out: W, summary_out: S) -> Result<(), OutputError> {
    let mut z = Table::new(z_out, &["m", "rep", "z"])?;
    for s in samples {
        for (i, v) in s.z_values.iter().enumerate() {
            z.row(&[s.m.to_string(), i.to_string(), fmt_float(*v)])?;
        }
    }
    z.finish()?;
    let mut w = Table::new(
        summary_out,
        &["m", "delta", "reps", "dropped", "matched_sd", "ks_distance", "sample_variance", "theory_variance", "p_hat"],
    )?;
    for s in samples {
        w.row(&[
            s.m.to_string(),
            fmt_float(s.delta),
            s.z_values.len().to_string(),
            s.dropped.to_string(),
            fmt_float(s.matched_sd),
            fmt_float(s.ks_distance),
            fmt_float(s.sample_variance),
            fmt_float(s.theory_variance),
            fmt_float(s.p_hat),
        ])?;
    }
    w.finish()
}

pub fn write_consistency<W: Write>(rows: &[ConsistencyRow], out: W) -> Result<(), OutputError> {
    let mut w = Table::new(out, &["n", "m", "delta", "reps", "dropped", "truth", "bias", "sd", "rmse"])?;
    for r in rows {
        w.row(&[
            r.n.to_string(),
            r.m.to_string(),
            fmt_float(r.delta),
            r.reps.to_string(),
            r.dropped.to_string(),
            fmt_float(r.truth),
            fmt_float(r.bias),
            fmt_float(r.sd),
            fmt_float(r.rmse),
        ])?;
    }
    w.finish()
}

pub fn write_independence<W: Write>(results: &[IndependenceResult], out: W) -> Result<(), OutputError> {
    let mut w = Table::new(out, &["s", "t", "u", "m", "reps", "dropped", "correlation", "ci_lo", "ci_hi", "level"])?;
    for r in results {
        w.row(&[
            fmt_float(r.s),
            fmt_float(r.t),
            opt(r.u),
            r.m.to_string(),
            r.reps.to_string(),
            r.dropped.to_string(),
            fmt_float(r.correlation),
            fmt_float(r.ci_lo),
            fmt_float(r.ci_hi),
            fmt_float(r.level),
        ])?;
    }
    w.finish()
}

pub fn write_lemma<W: Write>(report: &LemmaReport, out: W) -> Result<(), OutputError> {
    let mut w = Table::new(
        out,
        &[
            "n", "t", "delta", "u", "delta_u", "mu", "occupation", "quantity", "estimate", "std_error", "prediction",
            "relative_error",
        ],
    )?;
    for r in &report.rows {
        w.row(&[
            report.n.to_string(),
            fmt_float(report.t),
            fmt_float(report.delta),
            opt(report.u),
            opt(report.delta_u),
            fmt_float(report.mu),
            fmt_float(report.occupation),
            r.quantity.to_string(),
            fmt_float(r.estimate),
            fmt_float(r.std_error),
            fmt_float(r.prediction),
            fmt_float(r.relative_error),
        ])?;
    }
    w.finish()
}

pub fn write_truth<W: Write>(rows: &[TruthRow], out: W) -> Result<(), OutputError> {
    let mut w = Table::new(out, &["transition", "bin", "t", "rate"])?;
    for r in rows {
        w.row(&[r.transition.clone(), r.bin.to_string(), fmt_float(r.t), fmt_float(r.rate)])?;
    }
    w.finish()
}

pub fn write_surface_truth<W: Write>(rows: &[BoxTruth], out: W) -> Result<(), OutputError> {
    let mut w = Table::new(out, &["transition", "m1", "m2", "t", "u", "truth", "fitted", "exposure"])?;
    for r in rows {
        w.row(&[
            r.transition.clone(),
            r.m1.to_string(),
            r.m2.to_string(),
            fmt_float(r.t),
            fmt_float(r.u),
            fmt_float(r.truth),
            opt(r.fitted),
            fmt_float(r.exposure),
        ])?;
    }
    w.finish()
}

pub fn write_slice<W: Write>(slice: &Slice, out: W) -> Result<(), OutputError> {
    let mut w = Table::new(out, &["transition", "d", "t", "u", "fitted", "truth", "exposure"])?;
    for p in &slice.points {
        w.row(&[
            slice.transition.clone(),
            fmt_float(slice.d),
            fmt_float(p.t),
            fmt_float(p.u),
            fmt_float(p.fitted),
            fmt_float(p.truth),
            fmt_float(p.exposure),
        ])?;
    }
    w.finish()
}

/// Serializes any row type through serde, for ad hoc tables.
pub fn write_rows<W: Write, T: Serialize>(rows: &[T], out: W) -> Result<(), OutputError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Everything needed to rerun a command and check its outputs.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_path: Option<PathBuf>,
    pub config_sha256: Option<String>,
    pub config: Option<String>,
    pub master_seed: Option<u64>,
    pub paper_scale: bool,
    pub wall_time_seconds: f64,
    pub files: Vec<PathBuf>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl Manifest {
    pub fn new(command: &str, config: Option<(&Path, &str)>, master_seed: Option<u64>, paper_scale: bool) -> Self {
        Manifest {
            tool: "msoe".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config_path: config.map(|(p, _)| p.to_path_buf()),
            config_sha256: config.map(|(_, text)| sha256_hex(text.as_bytes())),
            config: config.map(|(_, text)| text.to_string()),
            master_seed,
            paper_scale,
            wall_time_seconds: 0.0,
            files: Vec::new(),
        }
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<(), OutputError> {
        serde_json::to_writer_pretty(&mut out, self)?;
        out.write_all(b"\n")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oe::{oe_rates, IntervalScale, Layout, TimeGrid};

    fn text(f: impl FnOnce(&mut Vec<u8>)) -> String {
        let mut buf = Vec::new();
        f(&mut buf);
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn oe_table_and_fit_columns() {
        let grid = TimeGrid::new(0.0, 2.0, 2).unwrap();
        let layout = Layout { states: vec!["a".into(), "b".into()], transitions: vec![(crate::intensity::StateId(0), crate::intensity::StateId(1))] };
        let table = OETable::from_parts(GridSpec::Time(grid), layout, vec![vec![2, 0]], vec![vec![4.0, 0.0], vec![0.0, 0.0]], 3).unwrap();
        let csv = text(|b| write_oe_table(&table, b).unwrap());
        assert_eq!(csv, "transition,bin_index,t_lo,t_hi,occurrence,exposure\na->b,0,0.0,1.0,2,4.0\na->b,1,1.0,2.0,0,0.0\n");
        let fit = oe_rates(&table, 0.95, IntervalScale::Raw).unwrap();
        let csv = text(|b| write_rate_fit(&fit, FitTag::Plain, b).unwrap());
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "transition,bin,t_lo,t_hi,rate,variance,ci_lo,ci_hi");
        assert!(lines[1].starts_with("a->b,0,0.0,1.0,0.5,0.125,"));
        assert_eq!(lines[2], "a->b,1,1.0,2.0,NA,NA,NA,NA");
        let csv = text(|b| write_rate_fit(&fit, FitTag::Lasso(0.5), b).unwrap());
        assert!(csv.lines().next().unwrap().ends_with(",method,lambda"));
    }

    #[test]
    fn manifest_hashes_the_config() {
        let m = Manifest::new("estimate", Some((Path::new("c.cfg"), "abc")), Some(3), false);
        assert_eq!(m.config_sha256.as_deref(), Some("ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"));
        let json = text(|b| m.write(b).unwrap());
        assert!(json.contains("\"master_seed\": 3"));
    }
}
