//! Delimited-text ingestion and output: datasets, chain files, tables,
//! grids and run manifests.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a value
//! read back is bit-identical to the value written.
//!
//! # Chain files
//!
//! One header line of space-separated `key=value` pairs, starting with the
//! format tag, then one comma-separated record per retained draw:
//!
//! ```text
//! tvpvarx-chain version=1 n=2 k=1 t0=40 steps=260 constrained=true ...
//! chain,iteration,theta...,coef[step]...,alpha[step]...,log_vol[step]...,Q,Q~,G_2..G_n,W,s[step]...
//! ```
//!
//! Coefficient states use the layout ordering `[c, B_1..B_k row-major,
//! D]` where `D` holds `D_1..D_k` when constrained (`D_0` is implied by
//! `θ`) and `D_0..D_k` otherwise. Covariance matrices are written in full,
//! row-major. Mixture indicators are present when `indicators=true`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};

use nalgebra::{DMatrix, DVector};

use crate::analysis::{ErrorTable, ForecastSet, GrowthBands, IrfGrid};
use crate::benchmarks::BenchmarkTable;
use crate::data::{Dataset, Quarter};
use crate::error::{Error, Result};
use crate::gibbs::{ChainRecord, IndicatorPath};
use crate::model::{CoefAt, CoefState, CovState, Hyperparams, Layout};
use crate::numkit::{quantile, sorted_copy, SymMatrix};

pub const CHAIN_TAG: &str = "tvpvarx-chain";
pub const CHAIN_VERSION: u32 = 1;
pub const CHAIN_ORDER: &str = "chain,iteration,theta,coef[t],alpha[t],log_vol[t],Q,Q~,G,W,s[t]";

/// Which CSV columns hold the date, endogenous and exogenous levels.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ColumnMap {
    /// Defaults to `date`.
    pub date: Option<String>,
    /// Empty selects every column between the date and the exogenous one.
    pub endo: Vec<String>,
    /// Defaults to the last column.
    pub exo: Option<String>,
}

/// Reads a level CSV (`date,<endo...>,<exo>`) into a validated dataset.
pub fn read_dataset<R: Read>(reader: R, map: &ColumnMap) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let find = |name: &str| header.iter().position(|h| h == name).ok_or_else(|| Error::MissingColumn(name.into()));
    let date_name = map.date.clone().unwrap_or_else(|| "date".into());
    let date_col = find(&date_name)?;
    let exo_col = match &map.exo {
        Some(name) => find(name)?,
        None => match header.len() {
            len if len >= 3 => len - 1,
            _ => return Err(Error::MissingColumn("exogenous".into())),
        },
    };
    let endo_cols: Vec<usize> = if map.endo.is_empty() {
        (0..header.len()).filter(|&c| c != date_col && c != exo_col).collect()
    } else {
        map.endo.iter().map(|n| find(n)).collect::<Result<_>>()?
    };
    if endo_cols.is_empty() {
        return Err(Error::MissingColumn("endogenous".into()));
    }
    let mut dates = Vec::new();
    let mut levels = Vec::new();
    let mut exo = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::ParseError { row, message: e.to_string() })?;
        let field = |c: usize| rec.get(c).ok_or_else(|| Error::ParseError { row, message: format!("missing field {c}") });
        let number = |c: usize| -> Result<f64> {
            let s = field(c)?;
            s.parse::<f64>().map_err(|_| Error::ParseError { row, message: format!("`{s}` in column `{}` is not a number", header[c]) })
        };
        dates.push(field(date_col)?.parse::<Quarter>().map_err(|message| Error::ParseError { row, message })?);
        levels.push(DVector::from_iterator(endo_cols.len(), endo_cols.iter().map(|&c| number(c)).collect::<Result<Vec<_>>>()?));
        exo.push(number(exo_col)?);
    }
    Dataset::from_levels(
        dates,
        endo_cols.iter().map(|&c| header[c].clone()).collect(),
        header[exo_col].clone(),
        levels,
        exo,
    )
}

pub fn write_dataset<W: Write>(writer: W, data: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["date".to_string()];
    header.extend(data.endo_names.iter().cloned());
    header.push(data.exo_name.clone());
    w.write_record(&header)?;
    for (i, date) in data.dates.iter().enumerate() {
        let mut row = vec![date.to_string()];
        row.extend(data.levels[i].iter().map(|v| v.to_string()));
        row.push(data.exo_levels[i].to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Everything a reader needs to interpret the records of a chain file.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainHeader {
    pub layout: Layout,
    /// Observation index of path step 0.
    pub t0: usize,
    pub steps: usize,
    pub variables: Vec<String>,
    pub exo: String,
    /// Date of log-difference observation 0.
    pub first_date: Quarter,
    pub config_hash: String,
    pub indicators: bool,
}

impl ChainHeader {
    /// Date of observation `i`.
    pub fn date_of(&self, i: usize) -> Quarter {
        (0..i).fold(self.first_date, |q, _| q.next())
    }

    fn to_line(&self) -> String {
        format!(
            "{CHAIN_TAG} version={CHAIN_VERSION} n={} k={} t0={} steps={} constrained={} indicators={} variables={} exo={} first_date={} config_hash={} order={CHAIN_ORDER}",
            self.layout.n,
            self.layout.k,
            self.t0,
            self.steps,
            self.layout.constrained,
            self.indicators,
            self.variables.join(";"),
            self.exo,
            self.first_date,
            self.config_hash,
        )
    }

    fn parse(line: &str) -> Result<Self> {
        let bad = |m: String| Error::ChainFormat(m);
        let mut parts = line.split_whitespace();
        if parts.next() != Some(CHAIN_TAG) {
            return Err(bad(format!("header must start with `{CHAIN_TAG}`")));
        }
        let kv: BTreeMap<&str, &str> = parts.filter_map(|p| p.split_once('=')).collect();
        let get = |k: &str| kv.get(k).copied().ok_or_else(|| bad(format!("header lacks `{k}`")));
        let num = |k: &str| -> Result<usize> { get(k)?.parse().map_err(|_| bad(format!("`{k}` is not an integer"))) };
        let flag = |k: &str| -> Result<bool> { get(k)?.parse().map_err(|_| bad(format!("`{k}` is not a boolean"))) };
        if num("version")? != CHAIN_VERSION as usize {
            return Err(bad(format!("unsupported version {}", get("version")?)));
        }
        if get("order")? != CHAIN_ORDER {
            return Err(bad("unknown record order".into()));
        }
        let layout = Layout::new(num("n")?, num("k")?, flag("constrained")?);
        let variables: Vec<String> = get("variables")?.split(';').map(str::to_string).collect();
        if variables.len() != layout.n {
            return Err(bad(format!("{} variable names for n={}", variables.len(), layout.n)));
        }
        Ok(ChainHeader {
            layout,
            t0: num("t0")?,
            steps: num("steps")?,
            variables,
            exo: get("exo")?.to_string(),
            first_date: get("first_date")?.parse().map_err(bad)?,
            config_hash: get("config_hash")?.to_string(),
            indicators: flag("indicators")?,
        })
    }

    fn record_len(&self) -> usize {
        let l = &self.layout;
        let n = l.n;
        let theta = if l.constrained { n } else { 0 };
        let g: usize = (1..n).map(|i| i * i).sum();
        let ind = if self.indicators { n } else { 0 };
        2 + theta + self.steps * (l.coef_dim() + l.alpha_dim() + n + ind) + l.cb_dim().pow(2) + l.d_dim().pow(2) + g + n * n
    }
}

/// Builds the header for `records` estimated from `data` with training
/// length `t0`.
pub fn chain_header(records: &[ChainRecord], data: &Dataset, t0: usize, config_hash: &str) -> Result<ChainHeader> {
    let first = records.first().ok_or(Error::EmptyChain)?;
    Ok(ChainHeader {
        layout: first.layout(),
        t0,
        steps: first.coef.len(),
        variables: data.endo_names.clone(),
        exo: data.exo_name.clone(),
        first_date: data.obs_date(0),
        config_hash: config_hash.to_string(),
        indicators: records.iter().all(|r| r.indicators.s.len() == r.coef.len()),
    })
}

fn push_all<'a>(line: &mut String, values: impl IntoIterator<Item = &'a f64>) {
    for v in values {
        let _ = write!(line, ",{v}");
    }
}

fn push_row_major(line: &mut String, m: &DMatrix<f64>) {
    for r in 0..m.nrows() {
        push_all(line, m.row(r).iter());
    }
}

pub fn write_chain<W: Write>(mut w: W, header: &ChainHeader, records: &[ChainRecord]) -> Result<()> {
    writeln!(w, "{}", header.to_line())?;
    let layout = &header.layout;
    for rec in records {
        if rec.layout() != *layout || rec.coef.len() != header.steps {
            return Err(Error::ChainFormat("record does not match the header layout".into()));
        }
        let mut line = format!("{},{}", rec.chain, rec.iteration);
        if let Some(theta) = &rec.theta {
            push_all(&mut line, theta.iter());
        }
        for c in &rec.coef.path {
            push_all(&mut line, c.to_state(layout).iter());
        }
        for a in &rec.cov.alpha {
            push_all(&mut line, a.iter());
        }
        for h in &rec.cov.log_vol {
            push_all(&mut line, h.iter());
        }
        push_row_major(&mut line, &rec.hyper.q);
        push_row_major(&mut line, &rec.hyper.q_tilde);
        for g in &rec.hyper.g {
            push_row_major(&mut line, g);
        }
        push_row_major(&mut line, &rec.hyper.w);
        if header.indicators {
            for s in &rec.indicators.s {
                for v in s {
                    let _ = write!(line, ",{v}");
                }
            }
        }
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

struct Fields<'a> {
    it: std::str::Split<'a, char>,
    line: usize,
}

impl Fields<'_> {
    fn next_f64(&mut self) -> Result<f64> {
        let s = self.it.next().ok_or_else(|| Error::ChainFormat(format!("record {} is truncated", self.line)))?;
        s.parse().map_err(|_| Error::ChainFormat(format!("record {}: `{s}` is not a number", self.line)))
    }

    fn vector(&mut self, len: usize) -> Result<DVector<f64>> {
        let v = (0..len).map(|_| self.next_f64()).collect::<Result<Vec<_>>>()?;
        Ok(DVector::from_vec(v))
    }

    fn matrix(&mut self, dim: usize) -> Result<SymMatrix> {
        let v = (0..dim * dim).map(|_| self.next_f64()).collect::<Result<Vec<_>>>()?;
        Ok(SymMatrix::symmetrized(DMatrix::from_row_slice(dim, dim, &v)))
    }
}

pub fn read_chain<R: Read>(reader: R) -> Result<(ChainHeader, Vec<ChainRecord>)> {
    let mut lines = BufReader::new(reader).lines();
    let header = ChainHeader::parse(&lines.next().ok_or_else(|| Error::ChainFormat("empty file".into()))??)?;
    let layout = header.layout;
    let n = layout.n;
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let count = line.split(',').count();
        if count != header.record_len() {
            return Err(Error::ChainFormat(format!(
                "record {} has {count} fields, expected {}",
                i + 1,
                header.record_len()
            )));
        }
        let mut f = Fields { it: line.split(','), line: i + 1 };
        let chain = f.next_f64()? as usize;
        let iteration = f.next_f64()? as usize;
        let theta = if layout.constrained { Some(f.vector(n)?) } else { None };
        let path = (0..header.steps)
            .map(|_| f.vector(layout.coef_dim()).map(|s| CoefAt::from_state(&layout, &s, theta.as_ref())))
            .collect::<Result<Vec<_>>>()?;
        let alpha = (0..header.steps).map(|_| f.vector(layout.alpha_dim())).collect::<Result<Vec<_>>>()?;
        let log_vol = (0..header.steps).map(|_| f.vector(n)).collect::<Result<Vec<_>>>()?;
        let q = f.matrix(layout.cb_dim())?;
        let q_tilde = f.matrix(layout.d_dim())?;
        let g = (1..n).map(|d| f.matrix(d)).collect::<Result<Vec<_>>>()?;
        let w = f.matrix(n)?;
        let s = if header.indicators {
            (0..header.steps)
                .map(|_| (0..n).map(|_| f.next_f64().map(|v| v as u8)).collect::<Result<Vec<_>>>())
                .collect::<Result<Vec<_>>>()?
        } else {
            Vec::new()
        };
        records.push(ChainRecord {
            chain,
            iteration,
            coef: CoefState { layout, path },
            cov: CovState { alpha, log_vol },
            hyper: Hyperparams { q, q_tilde, g, w },
            theta,
            indicators: IndicatorPath { s },
        });
    }
    Ok((header, records))
}

fn quantile_label(q: f64) -> String {
    format!("q{q}")
}

/// `variable,step,<method>_mean,<method>_std,...`, one row per variable and
/// step.
pub fn write_benchmark_table<W: Write>(writer: W, table: &BenchmarkTable) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["variable".to_string(), "step".to_string()];
    for m in &table.methods {
        header.push(format!("{m}_mean"));
        header.push(format!("{m}_std"));
    }
    w.write_record(&header)?;
    for (i, var) in table.variables.iter().enumerate() {
        for h in 0..table.horizon {
            let mut row = vec![var.clone(), (h + 1).to_string()];
            for t in &table.tables {
                row.push(t.mean[(i, h)].to_string());
                row.push(t.std[(i, h)].to_string());
            }
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Parses a table written by [`write_benchmark_table`].
pub fn read_benchmark_table<R: Read>(reader: R) -> Result<BenchmarkTable> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.len() < 4 || header[0] != "variable" || header[1] != "step" || !header.len().is_multiple_of(2) {
        return Err(Error::ParseError { row: 0, message: "not a benchmark table header".into() });
    }
    let methods: Vec<String> = header[2..]
        .chunks(2)
        .map(|c| c[0].strip_suffix("_mean").unwrap_or(&c[0]).to_string())
        .collect();
    let mut rows: Vec<(String, usize, Vec<f64>)> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec?;
        let bad = |m: String| Error::ParseError { row, message: m };
        let step: usize = rec[1].parse().map_err(|_| bad(format!("bad step `{}`", &rec[1])))?;
        let vals = rec.iter().skip(2).map(|s| s.parse::<f64>().map_err(|_| bad(format!("`{s}` is not a number")))).collect::<Result<_>>()?;
        rows.push((rec[0].to_string(), step, vals));
    }
    let mut variables: Vec<String> = Vec::new();
    for (v, _, _) in &rows {
        if !variables.contains(v) {
            variables.push(v.clone());
        }
    }
    let horizon = rows.iter().map(|r| r.1).max().unwrap_or(0);
    if rows.len() != variables.len() * horizon {
        return Err(Error::ParseError { row: rows.len(), message: "table is not rectangular".into() });
    }
    let tables = (0..methods.len())
        .map(|m| {
            let mut mean = DMatrix::zeros(variables.len(), horizon);
            let mut std = DMatrix::zeros(variables.len(), horizon);
            for (v, step, vals) in &rows {
                let i = variables.iter().position(|x| x == v).expect("collected above");
                mean[(i, step - 1)] = vals[2 * m];
                std[(i, step - 1)] = vals[2 * m + 1];
            }
            ErrorTable { variables: variables.clone(), horizon, mean, std, counts: Vec::new() }
        })
        .collect();
    Ok(BenchmarkTable { variables, horizon, methods, tables })
}

/// Quantile bands: `origin,date,horizon,variable,q...`.
pub fn write_irf_bands<W: Write>(writer: W, grid: &IrfGrid, header: &ChainHeader) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut cols = vec!["origin".to_string(), "date".into(), "horizon".into(), "variable".into()];
    cols.extend(grid.quantiles.iter().map(|&q| quantile_label(q)));
    w.write_record(&cols)?;
    for (o, &origin) in grid.origins.iter().enumerate() {
        let date = header.date_of(origin).to_string();
        for h in 0..grid.horizon {
            for (i, var) in header.variables.iter().enumerate() {
                let mut row = vec![origin.to_string(), date.clone(), (h + 1).to_string(), var.clone()];
                row.extend(grid.bands[o][h].row(i).iter().map(|v| v.to_string()));
                w.write_record(&row)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Per-draw responses: `origin,date,draw,variable,h1..hK`.
pub fn write_irf_draws<W: Write>(writer: W, grid: &IrfGrid, header: &ChainHeader) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut cols = vec!["origin".to_string(), "date".into(), "draw".into(), "variable".into()];
    cols.extend((1..=grid.horizon).map(|h| format!("h{h}")));
    w.write_record(&cols)?;
    for (o, &origin) in grid.origins.iter().enumerate() {
        let date = header.date_of(origin).to_string();
        for (d, draw) in grid.responses[o].iter().enumerate() {
            for (i, var) in header.variables.iter().enumerate() {
                let mut row = vec![origin.to_string(), date.clone(), d.to_string(), var.clone()];
                row.extend(draw.iter().map(|r| r[i].to_string()));
                w.write_record(&row)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// `origin,date,variable,q...,used,excluded`, annualized percent.
pub fn write_growth<W: Write>(writer: W, bands: &[GrowthBands], header: &ChainHeader) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let quantiles = bands.first().map(|b| b.quantiles.clone()).unwrap_or_default();
    let mut cols = vec!["origin".to_string(), "date".into(), "variable".into()];
    cols.extend(quantiles.iter().map(|&q| quantile_label(q)));
    cols.extend(["used".into(), "excluded".into()]);
    w.write_record(&cols)?;
    for b in bands {
        for (i, var) in header.variables.iter().enumerate() {
            let mut row = vec![b.origin.to_string(), header.date_of(b.origin).to_string(), var.clone()];
            row.extend(b.values.row(i).iter().map(|v| v.to_string()));
            row.extend([b.used.to_string(), b.excluded.to_string()]);
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `origin,date,step,variable,point,lower,upper,realized`, with `lower` and
/// `upper` the `band` quantiles of the simulated levels and `realized`
/// empty where the data end.
pub fn write_forecasts<W: Write>(writer: W, sets: &[ForecastSet], data: &Dataset, band: (f64, f64)) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["origin", "date", "step", "variable", "point", "lower", "upper", "realized"])?;
    for set in sets {
        let mut date = data.obs_date(set.origin);
        for h in 0..set.point.len() {
            date = date.next();
            for (i, var) in data.endo_names.iter().enumerate() {
                let sorted = sorted_copy(set.draws.iter().map(|d| d[h][i]));
                let realized = set.realized[h].as_ref().map(|r| r[i].to_string()).unwrap_or_default();
                w.write_record([
                    set.origin.to_string(),
                    date.to_string(),
                    (h + 1).to_string(),
                    var.clone(),
                    set.point[h][i].to_string(),
                    quantile(&sorted, band.0).to_string(),
                    quantile(&sorted, band.1).to_string(),
                    realized,
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Ordered `key = value` lines.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Manifest {
    pub entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn push(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn parse(text: &str) -> Self {
        let entries = text
            .lines()
            .filter_map(|l| l.split_once(" = "))
            .map(|(k, v)| (k.trim().to_string(), v.to_string()))
            .collect();
        Manifest { entries }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gibbs::{run_chain, SamplerOptions};
    use crate::model::{McmcConfig, ModelConfig};
    use crate::numkit::RngStream;
    use crate::priors::{calibrate, PriorOverrides};
    use crate::simulate::{drifting_theta_spec, simulate_dgp};
    use proptest::prelude::*;

    fn short_chain(constrained: bool) -> (Dataset, Vec<ChainRecord>) {
        let sim = simulate_dgp(&drifting_theta_spec(70, 0.1), &mut RngStream::new(1)).unwrap();
        let cfg = ModelConfig {
            n: 2,
            k: 1,
            t0: 40,
            constraint_enabled: constrained,
            mcmc: McmcConfig { burn_in: 4, draws: 3, thin: 2 },
            seed: 1,
        };
        let prior = calibrate(&sim.dataset.y, &sim.dataset.x, &cfg, &PriorOverrides::default()).unwrap();
        let out = run_chain(&sim.dataset.y, &sim.dataset.x, &cfg, &prior, &SamplerOptions::default(), 0, &mut RngStream::new(2), None)
            .unwrap();
        (sim.dataset, out.records)
    }

    #[test]
    fn chain_round_trip_is_exact() {
        for constrained in [true, false] {
            let (data, records) = short_chain(constrained);
            let header = chain_header(&records, &data, 40, "abc").unwrap();
            let mut buf = Vec::new();
            write_chain(&mut buf, &header, &records).unwrap();
            let (h2, r2) = read_chain(buf.as_slice()).unwrap();
            assert_eq!(h2, header);
            assert_eq!(r2, records);
            let mut again = Vec::new();
            write_chain(&mut again, &h2, &r2).unwrap();
            assert_eq!(buf, again);
        }
    }

    #[test]
    fn chain_header_is_self_describing() {
        let (data, records) = short_chain(true);
        let header = chain_header(&records, &data, 40, "abc").unwrap();
        let mut buf = Vec::new();
        write_chain(&mut buf, &header, &records).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let first = text.lines().next().unwrap();
        for key in ["version=1", "n=2", "k=1", "t0=40", "steps=30", "constrained=true", "config_hash=abc", "order="] {
            assert!(first.contains(key), "{key} missing from {first}");
        }
        assert_eq!(header.date_of(40), data.obs_date(40));
    }

    #[test]
    fn truncated_chain_record_is_rejected() {
        let (data, records) = short_chain(false);
        let header = chain_header(&records, &data, 40, "x").unwrap();
        let mut buf = Vec::new();
        write_chain(&mut buf, &header, &records[..1]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let cut = &text[..text.len() - 10];
        assert!(matches!(read_chain(cut.as_bytes()), Err(Error::ChainFormat(_))));
        assert!(matches!(read_chain("garbage\n".as_bytes()), Err(Error::ChainFormat(_))));
    }

    #[test]
    fn ingest_computes_log_differences() {
        let csv = "date,er,gdp,oil\n2000-Q1,100,50,20\n2000-Q2,110,50,21\n2000-Q3,121,55,22\n";
        let d = read_dataset(csv.as_bytes(), &ColumnMap::default()).unwrap();
        assert_eq!(d.len(), 2);
        assert!((d.y[0][0] - 0.09531017980432493).abs() < 1e-15);
        assert_eq!(d.endo_names, vec!["er", "gdp"]);
        assert_eq!(d.exo_name, "oil");
    }

    #[test]
    fn ingest_157_levels_gives_156_differences() {
        let sim = simulate_dgp(&drifting_theta_spec(156, 0.1), &mut RngStream::new(3)).unwrap();
        let mut buf = Vec::new();
        write_dataset(&mut buf, &sim.dataset).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 158);
        let d = read_dataset(text.as_bytes(), &ColumnMap::default()).unwrap();
        assert_eq!(d.len(), 156);
    }

    #[test]
    fn ingest_reports_offending_rows() {
        let zero = "date,a,x\n2000-Q1,1,1\n2000-Q2,0,1\n";
        assert!(matches!(read_dataset(zero.as_bytes(), &ColumnMap::default()), Err(Error::NonPositiveLevel { row: 2, .. })));
        let gap = "date,a,x\n2000-Q1,1,1\n2000-Q3,2,1\n";
        assert!(matches!(read_dataset(gap.as_bytes(), &ColumnMap::default()), Err(Error::DateGap { row: 1, .. })));
        let text = "date,a,x\n2000-Q1,1,1\n2000-Q2,abc,1\n";
        assert!(matches!(read_dataset(text.as_bytes(), &ColumnMap::default()), Err(Error::ParseError { row: 2, .. })));
        let map = ColumnMap { exo: Some("oil".into()), ..Default::default() };
        assert!(matches!(read_dataset(zero.as_bytes(), &map), Err(Error::MissingColumn(c)) if c == "oil"));
    }

    #[test]
    fn ingest_accepts_calendar_dates_and_mapping() {
        let csv = "when,oil,gdp,er\n1995-01-01,20,50,100\n1995-04-01,21,51,101\n";
        let map = ColumnMap { date: Some("when".into()), endo: vec!["er".into(), "gdp".into()], exo: Some("oil".into()) };
        let d = read_dataset(csv.as_bytes(), &map).unwrap();
        assert_eq!(d.dates[1], Quarter::new(1995, 2));
        assert_eq!(d.levels[0].as_slice(), &[100.0, 50.0]);
    }

    #[test]
    fn benchmark_table_layout_and_round_trip() {
        let vars = vec!["er".to_string(), "gdp".to_string()];
        let tables = (0..3)
            .map(|m| ErrorTable {
                variables: vars.clone(),
                horizon: 5,
                mean: DMatrix::from_fn(2, 5, |i, h| (m * 10 + i * 5 + h) as f64 / 7.0),
                std: DMatrix::from_fn(2, 5, |i, h| (m + i + h) as f64 / 3.0),
                counts: Vec::new(),
            })
            .collect();
        let t = BenchmarkTable {
            variables: vars,
            horizon: 5,
            methods: vec!["constrained".into(), "tvp".into(), "var".into()],
            tables,
        };
        let mut buf = Vec::new();
        write_benchmark_table(&mut buf, &t).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "variable,step,constrained_mean,constrained_std,tvp_mean,tvp_std,var_mean,var_std"
        );
        assert_eq!(text.lines().count(), 11);
        assert_eq!(read_benchmark_table(buf.as_slice()).unwrap(), t);
    }

    #[test]
    fn manifest_round_trip() {
        let mut m = Manifest::default();
        m.push("seed", 7);
        m.push("config_hash", "ab12");
        assert_eq!(Manifest::parse(&m.render()), m);
        assert_eq!(m.get("seed"), Some("7"));
    }

    fn dataset_strategy() -> impl Strategy<Value = Dataset> {
        (1usize..4, 2usize..12).prop_flat_map(|(n, len)| {
            (
                prop::collection::vec(prop::collection::vec(1e-3f64..1e6, n), len),
                prop::collection::vec(1e-3f64..1e6, len),
                1950i32..2050,
                1u8..5,
            )
                .prop_map(move |(levels, exo, year, q)| {
                    let mut d = Quarter::new(year, q);
                    let dates = (0..len)
                        .map(|_| {
                            let cur = d;
                            d = d.next();
                            cur
                        })
                        .collect();
                    Dataset::from_levels(
                        dates,
                        (0..n).map(|i| format!("v{i}")).collect(),
                        "x".into(),
                        levels.into_iter().map(DVector::from_vec).collect(),
                        exo,
                    )
                    .unwrap()
                })
        })
    }

    proptest! {
        #[test]
        fn ingest_inverts_write(data in dataset_strategy()) {
            let mut buf = Vec::new();
            write_dataset(&mut buf, &data).unwrap();
            let back = read_dataset(buf.as_slice(), &ColumnMap::default()).unwrap();
            prop_assert_eq!(back, data);
        }
    }
}
