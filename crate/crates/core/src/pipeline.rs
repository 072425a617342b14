//! Stage orchestration: features, regression, gravity, network, pca, distfit.
//!
//! Each selected stage writes `<stage>.json` into the output directory. Errors
//! inside a single (year, class, method) cell are recorded in the stage report
//! and the run continues; errors that stop a whole stage abort the run.

use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::distfit::{bootstrap_csv, fit_distributions, DistFitResult};
use crate::error::{Error, Result};
use crate::gravity::{GravityFit, GravityMethod};
use crate::io::{load_dataset, subnetwork_dot, subnetwork_geojson, DatasetPaths};
use crate::model::{extract_features, FeatureRow, FeatureTable, RegionDataset, UndefinedRatio, VehicleClass};
use crate::network::{network_metrics, NetworkMetrics, WeightedGraph};
use crate::pca::{extract_subnetwork, pca_flows, PcaOptions, PcaResult, SubNetwork, ThresholdMode};
use crate::regression::{
    calibrate_lambda, diagnostics, fit_lasso, fit_log_glm, fit_ols, fit_ridge, lasso_lambda_max, Calibration,
    DesignMatrix, DiagnosticsBundle, Penalty, RegressionMethod, RegressionReport,
};
use crate::report::{round_sig, to_json_string, write_atomic, write_json};
use crate::stats::pearson;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Features,
    Regression,
    Gravity,
    Network,
    Pca,
    Distfit,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Features,
        Stage::Regression,
        Stage::Gravity,
        Stage::Network,
        Stage::Pca,
        Stage::Distfit,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Stage::Features => "features",
            Stage::Regression => "regression",
            Stage::Gravity => "gravity",
            Stage::Network => "network",
            Stage::Pca => "pca",
            Stage::Distfit => "distfit",
        }
    }

    pub fn report_file(self) -> String {
        format!("{}.json", self.label())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PcaConfig {
    pub component: usize,
    pub loading_threshold: f64,
    pub score_threshold: f64,
    pub mode: ThresholdMode,
    pub standardize: bool,
    pub include_diagonal: bool,
}

impl Default for PcaConfig {
    fn default() -> Self {
        PcaConfig {
            component: 1,
            loading_threshold: crate::pca::DEFAULT_LOADING_THRESHOLD,
            score_threshold: crate::pca::DEFAULT_SCORE_THRESHOLD,
            mode: ThresholdMode::Magnitude,
            standardize: true,
            include_diagonal: false,
        }
    }
}

/// Run configuration, usually read from TOML. Relative input paths are
/// resolved against the directory of the config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub cities: PathBuf,
    pub flows: PathBuf,
    pub distances: PathBuf,
    pub gdp: PathBuf,
    /// Inclusive `[first, last]`; all flow years when absent.
    pub years: Option<[i32; 2]>,
    pub classes: Vec<VehicleClass>,
    pub stages: Vec<Stage>,
    pub regression_methods: Vec<RegressionMethod>,
    pub gravity_methods: Vec<GravityMethod>,
    /// Points in each penalty grid searched by leave-one-out calibration.
    pub lambda_grid: usize,
    pub pca: PcaConfig,
    pub bootstrap: usize,
    pub out: PathBuf,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let paths = DatasetPaths::in_dir(Path::new("."));
        PipelineConfig {
            cities: paths.cities,
            flows: paths.flows,
            distances: paths.distances,
            gdp: paths.gdp,
            years: None,
            classes: VehicleClass::ALL.to_vec(),
            stages: Stage::ALL.to_vec(),
            regression_methods: vec![
                RegressionMethod::Ols,
                RegressionMethod::LogGlm,
                RegressionMethod::Ridge,
                RegressionMethod::Lasso,
            ],
            gravity_methods: GravityMethod::ALL.to_vec(),
            lambda_grid: 20,
            pca: PcaConfig::default(),
            bootstrap: 1000,
            out: PathBuf::from("out"),
            seed: 42,
        }
    }
}

impl PipelineConfig {
    /// Defaults with the four standard input files inside `dir`.
    pub fn for_data_dir(dir: &Path) -> Self {
        let paths = DatasetPaths::in_dir(dir);
        PipelineConfig {
            cities: paths.cities,
            flows: paths.flows,
            distances: paths.distances,
            gdp: paths.gdp,
            ..Self::default()
        }
    }

    pub fn from_toml_str(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for p in [&mut cfg.cities, &mut cfg.flows, &mut cfg.distances, &mut cfg.gdp, &mut cfg.out] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn paths(&self) -> DatasetPaths {
        DatasetPaths {
            cities: self.cities.clone(),
            flows: self.flows.clone(),
            distances: self.distances.clone(),
            gdp: self.gdp.clone(),
        }
    }

    pub fn check(&self) -> Result<()> {
        if let Some([a, b]) = self.years {
            if a > b {
                return Err(Error::Config(format!("empty year range {a}..={b}")));
            }
        }
        let p = &self.pca;
        if !(p.loading_threshold >= 0.0) || !(p.score_threshold >= 0.0) {
            return Err(Error::Config("PCA thresholds must be non-negative".into()));
        }
        if p.component == 0 {
            return Err(Error::Config("PCA component numbers start at 1".into()));
        }
        if self.classes.is_empty() {
            return Err(Error::Config("no vehicle classes selected".into()));
        }
        if self.lambda_grid == 0 {
            return Err(Error::Config("lambda grid needs at least one point".into()));
        }
        Ok(())
    }

    fn selected_years(&self, dataset: &RegionDataset) -> Result<Vec<i32>> {
        let years: Vec<i32> = dataset
            .flow_years()
            .into_iter()
            .filter(|y| self.years.is_none_or(|[a, b]| (a..=b).contains(y)))
            .collect();
        if years.is_empty() {
            return Err(Error::Config("no flow data in the selected year range".into()));
        }
        Ok(years)
    }
}

/// A cell-level error kept in a stage report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellFailure {
    pub cell: String,
    pub exit_code: i32,
    pub message: String,
}

impl CellFailure {
    fn new(cell: impl Into<String>, err: &Error) -> Self {
        CellFailure {
            cell: cell.into(),
            exit_code: err.exit_code(),
            message: err.to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeaturesReport {
    pub years: Vec<i32>,
    pub rows: Vec<FeatureRow>,
    pub undefined_ratios: Vec<UndefinedRatio>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressionFit {
    pub report: RegressionReport,
    pub calibration: Option<Calibration>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressionStageReport {
    pub n_obs: usize,
    pub predictors: Vec<String>,
    /// `city/year` rows left out for an undefined ratio or missing GDP.
    pub excluded_rows: Vec<String>,
    pub fits: Vec<RegressionFit>,
    /// OLS residual diagnostics.
    pub diagnostics: Option<DiagnosticsBundle>,
    pub failures: Vec<CellFailure>,
}

impl RegressionStageReport {
    pub fn fit(&self, method: RegressionMethod) -> Option<&RegressionReport> {
        self.fits.iter().map(|f| &f.report).find(|r| r.method == method)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GravityCell {
    pub year: i32,
    pub class: VehicleClass,
    pub fit: GravityFit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GravityStageReport {
    pub fits: Vec<GravityCell>,
    pub failures: Vec<CellFailure>,
}

impl GravityStageReport {
    pub fn beta(&self, year: i32, class: VehicleClass, method: GravityMethod) -> Option<f64> {
        self.fits
            .iter()
            .find(|c| c.year == year && c.class == class && c.fit.method == method)
            .map(|c| c.fit.beta)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkYear {
    pub year: i32,
    /// Road-distance graph.
    pub distance: Option<NetworkMetrics>,
    /// Flow-weighted graphs keyed by vehicle class.
    pub flows: IndexMap<String, NetworkMetrics>,
    /// Labels for the rows and columns of `correlation`, starting with `GDP`.
    pub correlation_labels: Vec<String>,
    /// Pearson r between every pair of series; null where undefined.
    pub correlation: Vec<Vec<Option<f64>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkStageReport {
    pub years: Vec<NetworkYear>,
    pub failures: Vec<CellFailure>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PcaCell {
    pub year: i32,
    pub class: VehicleClass,
    pub pca: PcaResult,
    pub subnetwork: SubNetwork,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PcaStageReport {
    pub results: Vec<PcaCell>,
    pub failures: Vec<CellFailure>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistfitStageReport {
    /// `city/year` label of every GDP value in the sample.
    pub sample_labels: Vec<String>,
    pub result: DistFitResult,
}

/// What a run produced.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PipelineOutcome {
    pub written: Vec<PathBuf>,
    pub failures: Vec<CellFailure>,
}

impl PipelineOutcome {
    /// 0 when every cell succeeded, otherwise the code of the first failure.
    pub fn exit_code(&self) -> i32 {
        self.failures.first().map_or(0, |f| f.exit_code)
    }
}

struct Run<'a> {
    config: &'a PipelineConfig,
    dataset: &'a RegionDataset,
    years: Vec<i32>,
    outcome: PipelineOutcome,
}

impl Run<'_> {
    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let path = self.config.out.join(name);
        write_json(&path, value)?;
        self.outcome.written.push(path);
        Ok(())
    }

    fn write_text(&mut self, name: &str, text: &str) -> Result<()> {
        let path = self.config.out.join(name);
        write_atomic(&path, text.as_bytes())?;
        self.outcome.written.push(path);
        Ok(())
    }

    fn note(&mut self, failures: &[CellFailure]) {
        self.outcome.failures.extend(failures.iter().cloned());
    }

    fn features(&self) -> Result<FeatureTable> {
        let mut table = FeatureTable::default();
        for &year in &self.years {
            table.extend(extract_features(self.dataset, year)?);
        }
        Ok(table)
    }

    fn flow_cells(&self) -> Vec<(i32, VehicleClass)> {
        self.years
            .iter()
            .flat_map(|&y| self.config.classes.iter().map(move |&c| (y, c)))
            .filter(|&(y, c)| self.dataset.flow(y, c).is_some())
            .collect()
    }

    fn stage_features(&mut self) -> Result<()> {
        let table = self.features()?;
        let undefined_ratios = table
            .rows
            .iter()
            .flat_map(|r| {
                [(VehicleClass::CarsBuses, &r.cars), (VehicleClass::Trucks, &r.trucks)]
                    .into_iter()
                    .filter(|(_, f)| f.ratio.is_none())
                    .map(|(class, _)| UndefinedRatio {
                        city: r.city.clone(),
                        year: r.year,
                        class,
                    })
            })
            .collect();
        let report = FeaturesReport {
            years: self.years.clone(),
            rows: table.rows,
            undefined_ratios,
        };
        self.write_json(&Stage::Features.report_file(), &report)
    }

    fn stage_regression(&mut self) -> Result<()> {
        let table = self.features()?;
        let (design, excluded) = DesignMatrix::from_features(&table, self.dataset)?;
        let mut fits = Vec::new();
        let mut failures = Vec::new();
        let mut bundle = None;
        let grid = |lo: f64, hi: f64, k: usize| -> Vec<f64> {
            if k == 1 {
                return vec![hi];
            }
            (0..k)
                .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (k - 1) as f64).exp())
                .collect()
        };
        for &method in &self.config.regression_methods {
            let result = match method {
                RegressionMethod::Ols => fit_ols(&design).map(|r| {
                    bundle = Some(diagnostics(&r, &design));
                    (r, None)
                }),
                RegressionMethod::LogGlm => fit_log_glm(&design).map(|r| (r, None)),
                RegressionMethod::Ridge => {
                    let n = design.n_obs() as f64;
                    calibrate_lambda(&design, Penalty::Ridge, &grid(1e-4 * n, 1e2 * n, self.config.lambda_grid))
                        .and_then(|c| Ok((fit_ridge(&design, c.lambda)?, Some(c))))
                }
                RegressionMethod::Lasso => lasso_lambda_max(&design).and_then(|max| {
                    let c = calibrate_lambda(&design, Penalty::Lasso, &grid(1e-4 * max, max, self.config.lambda_grid))?;
                    Ok((fit_lasso(&design, c.lambda)?, Some(c)))
                }),
            };
            match result {
                Ok((report, calibration)) => fits.push(RegressionFit { report, calibration }),
                Err(e) => failures.push(CellFailure::new(method.label(), &e)),
            }
        }
        self.note(&failures);
        let report = RegressionStageReport {
            n_obs: design.n_obs(),
            predictors: design.names().to_vec(),
            excluded_rows: excluded.iter().map(|(c, y)| format!("{c}/{y}")).collect(),
            fits,
            diagnostics: bundle,
            failures,
        };
        self.write_json(&Stage::Regression.report_file(), &report)
    }

    fn stage_gravity(&mut self) -> Result<()> {
        let mut fits = Vec::new();
        let mut failures = Vec::new();
        for (year, class) in self.flow_cells() {
            let flows = self.dataset.flow(year, class).expect("cell has flows");
            for &method in &self.config.gravity_methods {
                match method.fit(flows, &self.dataset.distances) {
                    Ok(fit) => fits.push(GravityCell { year, class, fit }),
                    Err(e) => failures.push(CellFailure::new(format!("{year}/{class}/{}", method.label()), &e)),
                }
            }
        }
        self.note(&failures);
        self.write_json(&Stage::Gravity.report_file(), &GravityStageReport { fits, failures })
    }

    fn stage_network(&mut self) -> Result<()> {
        let cities = self.dataset.city_ids();
        let mut years = Vec::new();
        let mut failures = Vec::new();
        let mut tables = Vec::new();
        for &year in &self.years {
            let mut series: Vec<(String, IndexMap<String, f64>)> = Vec::new();
            let gdp: IndexMap<String, f64> = cities
                .iter()
                .filter_map(|c| self.dataset.gdp_of(c, year).map(|g| (c.to_string(), g)))
                .collect();
            series.push(("GDP".into(), gdp));

            let distance = match network_metrics(&WeightedGraph::from_distances(&cities, &self.dataset.distances)) {
                Ok(m) => {
                    series.push(("Betw(D)".into(), m.betweenness.clone()));
                    series.push(("Closeness(D)".into(), m.closeness.clone()));
                    Some(m)
                }
                Err(e) => {
                    failures.push(CellFailure::new(format!("{year}/distance"), &e));
                    None
                }
            };
            let mut flows = IndexMap::new();
            for &class in &self.config.classes {
                let Some(fm) = self.dataset.flow(year, class) else {
                    continue;
                };
                match network_metrics(&WeightedGraph::from_flows(&cities, fm)) {
                    Ok(m) => {
                        flows.insert(class.label().to_string(), m);
                    }
                    Err(e) => failures.push(CellFailure::new(format!("{year}/{class}"), &e)),
                }
            }
            for measure in ["Closeness", "PageRank"] {
                for (class, m) in &flows {
                    let tag = if class == VehicleClass::CarsBuses.label() { 'C' } else { 'K' };
                    let values = if measure == "Closeness" { &m.closeness } else { &m.pagerank };
                    series.push((format!("{measure}({tag})"), values.clone()));
                }
            }

            let labels: Vec<String> = series.iter().map(|(l, _)| l.clone()).collect();
            let aligned: Vec<Vec<Option<f64>>> = series
                .iter()
                .map(|(_, s)| cities.iter().map(|c| s.get(c.as_str()).copied()).collect())
                .collect();
            let correlation: Vec<Vec<Option<f64>>> = aligned
                .iter()
                .map(|a| aligned.iter().map(|b| paired_pearson(a, b)).collect())
                .collect();
            tables.push((year, labels.clone(), correlation.clone()));
            years.push(NetworkYear {
                year,
                distance,
                flows,
                correlation_labels: labels,
                correlation,
            });
        }
        self.note(&failures);
        for (year, labels, corr) in tables {
            self.write_text(&format!("network_correlation_{year}.csv"), &correlation_csv(&labels, &corr))?;
        }
        self.write_json(&Stage::Network.report_file(), &NetworkStageReport { years, failures })
    }

    fn stage_pca(&mut self) -> Result<()> {
        let cfg = &self.config.pca;
        let options = PcaOptions {
            standardize: cfg.standardize,
            include_diagonal: cfg.include_diagonal,
        };
        let mut results = Vec::new();
        let mut failures = Vec::new();
        let mut side = Vec::new();
        for (year, class) in self.flow_cells() {
            let flows = self.dataset.flow(year, class).expect("cell has flows");
            let cell = pca_flows(flows, options).and_then(|pca| {
                let sub = extract_subnetwork(
                    &pca,
                    flows,
                    cfg.component,
                    cfg.loading_threshold,
                    cfg.score_threshold,
                    cfg.mode,
                )?;
                Ok((pca, sub))
            });
            match cell {
                Ok((pca, subnetwork)) => {
                    let stem = format!("pca_{year}_{}", class.label());
                    side.push((
                        format!("{stem}.dot"),
                        subnetwork_dot(&stem, &subnetwork),
                    ));
                    let geo = subnetwork_geojson(&subnetwork, self.dataset);
                    side.push((format!("{stem}.geojson"), to_json_string(&geo)?));
                    results.push(PcaCell {
                        year,
                        class,
                        pca,
                        subnetwork,
                    });
                }
                Err(e) => failures.push(CellFailure::new(format!("{year}/{class}"), &e)),
            }
        }
        self.note(&failures);
        for (name, text) in side {
            self.write_text(&name, &text)?;
        }
        self.write_json(&Stage::Pca.report_file(), &PcaStageReport { results, failures })
    }

    fn stage_distfit(&mut self) -> Result<()> {
        let mut labels = Vec::new();
        let mut sample = Vec::new();
        for g in &self.dataset.gdp {
            if self.years.contains(&g.year) {
                labels.push(format!("{}/{}", g.city, g.year));
                sample.push(g.gdp);
            }
        }
        let bootstrap = (self.config.bootstrap > 0).then_some((self.config.bootstrap, self.config.seed));
        let result = fit_distributions(&sample, bootstrap)?;
        if let Some(b) = &result.bootstrap {
            self.write_text("distfit_bootstrap.csv", &bootstrap_csv(b))?;
        }
        let report = DistfitStageReport {
            sample_labels: labels,
            result,
        };
        self.write_json(&Stage::Distfit.report_file(), &report)
    }
}

fn paired_pearson(a: &[Option<f64>], b: &[Option<f64>]) -> Option<f64> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = a
        .iter()
        .zip(b)
        .filter_map(|(x, y)| Some(((*x)?, (*y)?)))
        .unzip();
    if xs.len() < 3 {
        return None;
    }
    pearson(&xs, &ys)
}

fn correlation_csv(labels: &[String], corr: &[Vec<Option<f64>>]) -> String {
    let mut out = String::from("series");
    for l in labels {
        out.push(',');
        out.push_str(l);
    }
    out.push('\n');
    for (l, row) in labels.iter().zip(corr) {
        out.push_str(l);
        for v in row {
            out.push(',');
            if let Some(v) = v {
                out.push_str(&round_sig(*v).to_string());
            }
        }
        out.push('\n');
    }
    out
}

/// Loads the dataset named in `config` and runs the selected stages.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineOutcome> {
    config.check()?;
    let dataset = load_dataset(&config.paths())?;
    run_on_dataset(config, &dataset)
}

/// Runs the selected stages, in canonical order, on an in-memory dataset.
pub fn run_on_dataset(config: &PipelineConfig, dataset: &RegionDataset) -> Result<PipelineOutcome> {
    config.check()?;
    std::fs::create_dir_all(&config.out)?;
    let mut run = Run {
        config,
        dataset,
        years: config.selected_years(dataset)?,
        outcome: PipelineOutcome::default(),
    };
    for stage in Stage::ALL {
        if !config.stages.contains(&stage) {
            continue;
        }
        match stage {
            Stage::Features => run.stage_features()?,
            Stage::Regression => run.stage_regression()?,
            Stage::Gravity => run.stage_gravity()?,
            Stage::Network => run.stage_network()?,
            Stage::Pca => run.stage_pca()?,
            Stage::Distfit => run.stage_distfit()?,
        }
    }
    Ok(run.outcome)
}
