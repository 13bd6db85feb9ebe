use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use tvpvarx_core::analysis::{forecast, irf_grid, long_run_growth};
use tvpvarx_core::benchmarks::{fit_constant_varx, forecast_constant_varx, run_benchmark_suite, FORECAST_STREAM_BASE};
use tvpvarx_core::config::{resolve_index, resolve_origin, sha256_hex};
use tvpvarx_core::gibbs::{merge_chains, run_chains};
use tvpvarx_core::io::{
    chain_header, read_chain, read_dataset, write_benchmark_table, write_chain, write_dataset, write_forecasts,
    write_growth, write_irf_bands, write_irf_draws, CHAIN_VERSION,
};
use tvpvarx_core::model::long_run_multiplier;
use tvpvarx_core::numkit::{quantile, sorted_copy};
use tvpvarx_core::priors::calibrate;
use tvpvarx_core::simulate::{drifting_theta_spec, simulate_dgp};
use tvpvarx_core::{
    ChainHeader, ChainRecord, CoefAt, Dataset, Error, Manifest, Result, RngStream, RunConfig, RunMode, SuiteConfig,
};

const SUMMARY_QUANTILES: [f64; 3] = [0.025, 0.5, 0.975];

pub struct Run {
    name: &'static str,
    cfg: RunConfig,
    manifest: Manifest,
    outputs: Vec<PathBuf>,
    summary: String,
}

impl Run {
    pub fn new(name: &'static str, cfg: RunConfig) -> Result<Self> {
        std::fs::create_dir_all(&cfg.output)?;
        let mut manifest = Manifest::default();
        manifest.push("command", name);
        manifest.push("tvpvarx_version", tvpvarx_core::VERSION);
        manifest.push("cli_version", env!("CARGO_PKG_VERSION"));
        manifest.push("chain_format_version", CHAIN_VERSION);
        manifest.push("config_hash", cfg.hash());
        manifest.push("seed", cfg.seed);
        manifest.push("mode", cfg.mode);
        Ok(Run { name, cfg, manifest, outputs: Vec::new(), summary: String::new() })
    }

    fn out_path(&self, file: &str) -> PathBuf {
        self.cfg.output.join(file)
    }

    fn write_to(&mut self, path: PathBuf, body: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
        let mut w = BufWriter::new(File::create(&path)?);
        body(&mut w)?;
        w.flush()?;
        self.outputs.push(path);
        Ok(())
    }

    fn write(&mut self, file: &str, body: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
        let path = self.out_path(file);
        self.write_to(path, body)
    }

    fn load_data(&mut self) -> Result<Dataset> {
        let path = self.cfg.data.clone().ok_or_else(|| Error::Config("no data file given (use --data)".into()))?;
        let bytes = read_named(&path)?;
        self.manifest.push("data", path.display());
        self.manifest.push("data_sha256", sha256_hex(&bytes));
        read_dataset(bytes.as_slice(), &self.cfg.columns())
    }

    fn chain_path(&self) -> PathBuf {
        self.cfg.chain.clone().unwrap_or_else(|| self.out_path("chain.txt"))
    }

    fn load_chain(&mut self) -> Result<(ChainHeader, Vec<ChainRecord>)> {
        let path = self.chain_path();
        let bytes = read_named(&path)?;
        self.manifest.push("chain", path.display());
        self.manifest.push("chain_sha256", sha256_hex(&bytes));
        let (header, records) = read_chain(bytes.as_slice())?;
        if records.is_empty() {
            return Err(Error::EmptyChain);
        }
        Ok((header, records))
    }

    fn chain_origins(&self, keys: &[String], header: &ChainHeader, default: Vec<usize>) -> Result<Vec<usize>> {
        if keys.is_empty() {
            return Ok(default);
        }
        let end = header.t0 + header.steps;
        let first = header.first_date.index();
        keys.iter()
            .map(|k| {
                let i = resolve_index(k, end, |q| usize::try_from(q.index() - first).ok())?;
                if i < header.t0 {
                    return Err(Error::Config(format!("origin `{k}` precedes the estimation window")));
                }
                Ok(i)
            })
            .collect()
    }

    pub fn estimate(&mut self) -> Result<()> {
        let data = self.load_data()?;
        if self.cfg.mode == RunMode::ConstantVar {
            let m = fit_constant_varx(&data, self.cfg.lags)?;
            let text = varx_report(&m.coef, &m.resid_cov, m.n_obs);
            self.write("varx.txt", |w| Ok(w.write_all(text.as_bytes())?))?;
            self.summary = format!("constant VARX fitted on {} observations\n", m.n_obs);
            return Ok(());
        }
        let model = self.cfg.model(data.n());
        let prior = calibrate(&data.y, &data.x, &model, &self.cfg.prior_overrides())?;
        let outputs = run_chains(
            &data.y,
            &data.x,
            &model,
            &prior,
            &self.cfg.sampler_options(),
            self.cfg.chains,
            self.cfg.workers,
        )?;
        for (c, o) in outputs.iter().enumerate() {
            self.manifest.push(&format!("chain{c}_iterations"), o.diagnostics.iterations);
            self.manifest.push(&format!("chain{c}_singular_sweeps"), o.diagnostics.singular_sweeps);
            self.manifest.push(&format!("chain{c}_redraws"), o.diagnostics.redraws);
        }
        let records = merge_chains(outputs);
        let header = chain_header(&records, &data, model.t0, &self.cfg.hash())?;
        let chain_path = self.chain_path();
        self.write_to(chain_path, |w| write_chain(w, &header, &records))?;
        let audit = prior.to_key_value();
        self.write("prior.txt", |w| Ok(w.write_all(audit.as_bytes())?))?;
        let summary = posterior_summary(&records, &data.endo_names);
        self.write("summary.csv", |w| Ok(w.write_all(summary.as_bytes())?))?;
        self.summary = format!("{} retained draws written\n{summary}", records.len());
        Ok(())
    }

    pub fn forecast(&mut self) -> Result<()> {
        let data = self.load_data()?;
        let h = self.cfg.horizon;
        let origin = match &self.cfg.origin {
            Some(s) => resolve_origin(s, &data)?,
            None if !self.cfg.exo_path.is_empty() => data.len() - 1,
            None => data.len().checked_sub(h + 1).ok_or(Error::ExoPathTooShort { need: h, have: 0 })?,
        };
        let exo: Vec<f64> = if self.cfg.exo_path.is_empty() {
            data.x[(origin + 1).min(data.len())..].iter().take(h).copied().collect()
        } else {
            self.cfg.exo_path.clone()
        };
        let set = if self.cfg.mode == RunMode::ConstantVar {
            let m = fit_constant_varx(&data.truncated(origin + 1), self.cfg.lags)?;
            forecast_constant_varx(&m, &data, origin, h, &exo)?
        } else {
            let (header, records) = self.load_chain()?;
            if header.variables != data.endo_names {
                return Err(Error::Config(format!(
                    "chain variables {:?} differ from data columns {:?}",
                    header.variables, data.endo_names
                )));
            }
            let mut rng = RngStream::with_stream(self.cfg.seed, FORECAST_STREAM_BASE + origin as u64);
            forecast(&records, header.t0, &data, origin, h, &exo, self.cfg.forecast_mode, &mut rng)?
        };
        let band = (self.cfg.band[0], self.cfg.band[1]);
        self.write("forecast.csv", |w| write_forecasts(w, std::slice::from_ref(&set), &data, band))?;
        self.summary = format!("{h}-step forecasts from {}\n", data.obs_date(origin));
        Ok(())
    }

    pub fn irf(&mut self) -> Result<()> {
        let (header, records) = self.load_chain()?;
        let last = header.t0 + header.steps - 1;
        let origins = self.chain_origins(&self.cfg.irf_origins.clone(), &header, vec![last])?;
        let grid = irf_grid(&records, header.t0, &origins, self.cfg.shock, self.cfg.irf_horizon, &self.cfg.irf_quantiles)?;
        self.write("irf_bands.csv", |w| write_irf_bands(w, &grid, &header))?;
        self.write("irf_draws.csv", |w| write_irf_draws(w, &grid, &header))?;
        self.summary = format!("responses at {} origins over {} horizons\n", origins.len(), grid.horizon);
        Ok(())
    }

    pub fn growth(&mut self) -> Result<()> {
        let (header, records) = self.load_chain()?;
        let all = (header.t0..header.t0 + header.steps).collect();
        let origins = self.chain_origins(&self.cfg.growth_origins.clone(), &header, all)?;
        let bands = origins
            .iter()
            .map(|&o| long_run_growth(&records, header.t0, o, &self.cfg.growth_quantiles))
            .collect::<Result<Vec<_>>>()?;
        self.write("growth.csv", |w| write_growth(w, &bands, &header))?;
        let excluded: usize = bands.iter().map(|b| b.excluded).sum();
        self.manifest.push("growth_excluded_draws", excluded);
        self.summary = format!("growth bands at {} origins ({excluded} singular draws excluded)\n", bands.len());
        Ok(())
    }

    pub fn benchmark(&mut self) -> Result<()> {
        let data = self.load_data()?;
        let suite = SuiteConfig {
            model: self.cfg.model(data.n()),
            overrides: self.cfg.prior_overrides(),
            options: self.cfg.sampler_options(),
            chains: self.cfg.chains,
            workers: self.cfg.workers,
            mode: self.cfg.forecast_mode,
            plan: self.cfg.eval_plan(&data)?,
        };
        self.manifest.push("first_origin", suite.plan.first_origin);
        self.manifest.push("last_origin", suite.plan.last_origin);
        let table = run_benchmark_suite(&data, &suite)?;
        self.write("benchmark.csv", |w| write_benchmark_table(w, &table))?;
        self.summary = format!(
            "{} methods x {} variables x {} steps, origins {}..={}\n",
            table.methods.len(),
            table.variables.len(),
            table.horizon,
            data.obs_date(suite.plan.first_origin),
            data.obs_date(suite.plan.last_origin.min(data.len() - 2)),
        );
        Ok(())
    }

    pub fn simulate(&mut self) -> Result<()> {
        let spec = drifting_theta_spec(self.cfg.periods, self.cfg.drift);
        let sim = simulate_dgp(&spec, &mut RngStream::new(self.cfg.seed))?;
        let data_path = self.cfg.data.clone().unwrap_or_else(|| self.out_path("data.csv"));
        self.write_to(data_path, |w| write_dataset(w, &sim.dataset))?;
        let truth = truth_table(&sim.dataset, &sim.coefs, &sim.cov.alpha, &sim.cov.log_vol, spec.theta.as_ref());
        self.write("truth.csv", |w| Ok(w.write_all(truth.as_bytes())?))?;
        self.summary = format!("{} synthetic quarters written\n", sim.dataset.dates.len());
        Ok(())
    }

    /// Writes the config snapshot and manifest; returns the console summary.
    pub fn finish(mut self) -> Result<String> {
        let snapshot = self.cfg.to_toml();
        self.write(&format!("{}-config.toml", self.name), |w| Ok(w.write_all(snapshot.as_bytes())?))?;
        for (i, p) in self.outputs.iter().enumerate() {
            self.manifest.push(&format!("output{i}"), p.display());
            self.manifest.push(&format!("output{i}_sha256"), sha256_hex(&std::fs::read(p)?));
        }
        let path = self.out_path(&format!("{}-manifest.txt", self.name));
        std::fs::write(&path, self.manifest.render())?;
        Ok(format!("{}manifest: {}\n", self.summary, display(&path)))
    }
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn read_named(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn fmt_row(values: impl IntoIterator<Item = f64>) -> String {
    values.into_iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

/// Posterior quantiles of `θ` (constrained) or of the implied long-run
/// multiplier at the last step (unconstrained, singular draws skipped).
fn posterior_summary(records: &[ChainRecord], names: &[String]) -> String {
    let (label, values): (&str, Vec<Vec<f64>>) = if records[0].theta.is_some() {
        ("theta", records.iter().map(|r| r.theta.as_ref().expect("constrained").iter().copied().collect()).collect())
    } else {
        (
            "long_run_multiplier",
            records
                .iter()
                .filter_map(|r| {
                    let c = r.coef.path.last().expect("nonempty path");
                    long_run_multiplier(&c.b, &c.d).ok().map(|v| v.iter().copied().collect())
                })
                .collect(),
        )
    };
    let mut out = String::from("parameter,variable,q0.025,q0.5,q0.975,draws\n");
    for (i, name) in names.iter().enumerate() {
        let sorted = sorted_copy(values.iter().map(|v: &Vec<f64>| v[i]));
        let qs = if sorted.is_empty() {
            vec![f64::NAN; 3]
        } else {
            SUMMARY_QUANTILES.iter().map(|&q| quantile(&sorted, q)).collect()
        };
        out.push_str(&format!("{label},{name},{},{}\n", fmt_row(qs), sorted.len()));
    }
    out
}

fn varx_report(coef: &CoefAt, resid_cov: &tvpvarx_core::DMatrix<f64>, n_obs: usize) -> String {
    let mut s = format!("n_obs = {n_obs}\nc = [{}]\n", fmt_row(coef.c.iter().copied()));
    for (j, b) in coef.b.iter().enumerate() {
        let rows: Vec<String> = (0..b.nrows()).map(|r| format!("[{}]", fmt_row(b.row(r).iter().copied()))).collect();
        s.push_str(&format!("B{} = [{}]\n", j + 1, rows.join(", ")));
    }
    for (i, d) in coef.d.iter().enumerate() {
        s.push_str(&format!("D{i} = [{}]\n", fmt_row(d.iter().copied())));
    }
    let rows: Vec<String> =
        (0..resid_cov.nrows()).map(|r| format!("[{}]", fmt_row(resid_cov.row(r).iter().copied()))).collect();
    s.push_str(&format!("resid_cov = [{}]\n", rows.join(", ")));
    s
}

fn truth_table(
    data: &Dataset,
    coefs: &[CoefAt],
    alpha: &[tvpvarx_core::DVector<f64>],
    log_vol: &[tvpvarx_core::DVector<f64>],
    theta: Option<&tvpvarx_core::DVector<f64>>,
) -> String {
    let n = data.n();
    let k = coefs[0].k();
    let mut cols = vec!["date".to_string()];
    cols.extend((0..n).map(|i| format!("c[{i}]")));
    for j in 1..=k {
        cols.extend((0..n * n).map(|e| format!("B{j}[{},{}]", e / n, e % n)));
    }
    for l in 0..=k {
        cols.extend((0..n).map(|i| format!("D{l}[{i}]")));
    }
    if theta.is_some() {
        cols.extend((0..n).map(|i| format!("theta[{i}]")));
    }
    cols.extend((0..alpha[0].len()).map(|i| format!("alpha[{i}]")));
    cols.extend((0..n).map(|i| format!("log_vol[{i}]")));
    let mut out = cols.join(",") + "\n";
    for (t, c) in coefs.iter().enumerate() {
        let mut row: Vec<f64> = c.c.iter().copied().collect();
        for b in &c.b {
            for r in 0..n {
                row.extend(b.row(r).iter());
            }
        }
        for d in &c.d {
            row.extend(d.iter());
        }
        if let Some(th) = theta {
            row.extend(th.iter());
        }
        row.extend(alpha[t].iter());
        row.extend(log_vol[t].iter());
        out.push_str(&format!("{},{}\n", data.obs_date(t), fmt_row(row)));
    }
    out
}
