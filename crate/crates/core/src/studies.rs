//! Replication harness for the level/power studies: repeated pipeline runs
//! on fresh datasets, rates with binomial standard errors, and the
//! reference tables the reruns are compared against.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{scenario, DgpSpec};
use crate::design_density::{CauchyTheta, DesignConfig, KnownDensity, ThetaSource};
use crate::error::Result;
use crate::kernels::{KernelTable, TestPoint};
use crate::limit_sim::{calibrated_quantiles, pipeline_stats, quantile_kappa_with_sigma, LimitConfig, PipelineConfig, QuantileResult};
use crate::seeds::derive_seed;
use crate::testing::{decisions, ModeFamilySpec, MultiscaleRule, TestDecision};

/// Counts of a binary event over replications.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rate {
    pub hits: usize,
    pub reps: usize,
}

impl Rate {
    pub fn count<T>(items: &[T], event: impl Fn(&T) -> bool) -> Self {
        Self { hits: items.iter().filter(|x| event(x)).count(), reps: items.len() }
    }

    pub fn rate(&self) -> f64 {
        self.hits as f64 / self.reps.max(1) as f64
    }

    /// Binomial standard error at the estimated rate.
    pub fn se(&self) -> f64 {
        let p = self.rate();
        (p * (1.0 - p) / self.reps.max(1) as f64).sqrt()
    }

    /// Binomial standard error at a hypothesised rate p.
    pub fn se_at(&self, p: f64) -> f64 {
        (p * (1.0 - p) / self.reps.max(1) as f64).sqrt()
    }
}

impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.1}% ± {:.1} ({}/{})", 100.0 * self.rate(), 100.0 * self.se(), self.hits, self.reps)
    }
}

/// Critical values used in a study.
#[derive(Debug, Clone)]
pub enum Threshold {
    /// Limit-process quantile recomputed on every dataset.
    Theoretical(LimitConfig),
    /// One calibrated threshold shared by all datasets.
    Fixed(QuantileResult),
}

/// Decisions for `family` on `reps` independent datasets from `spec`.
/// Replication i uses seed derive_seed(seed, i).
pub fn replicate_decisions(
    spec: &DgpSpec,
    family: &[TestPoint],
    kt: &KernelTable,
    cfg: &PipelineConfig,
    alpha: f64,
    threshold: &Threshold,
    reps: usize,
    seed: u64,
) -> Result<Vec<Vec<TestDecision>>> {
    (0..reps)
        .into_par_iter()
        .map(|i| {
            let s = derive_seed(seed, i as u64);
            let (stats, design) = pipeline_stats(spec, family, kt, cfg, s)?;
            let q = match threshold {
                Threshold::Theoretical(lc) => {
                    let sig: Vec<f64> = stats.iter().map(|x| x.sigma_hat).collect();
                    quantile_kappa_with_sigma(family, &design, kt, &sig, alpha, lc, derive_seed(s, 2))?
                }
                Threshold::Fixed(q) => q.clone(),
            };
            decisions(&stats, &q, kt.sign())
        })
        .collect()
}

pub fn all_minus(d: &[TestDecision]) -> bool {
    d.iter().all(|x| x.reject_minus)
}

pub fn any_rejection(d: &[TestDecision]) -> bool {
    d.iter().any(|x| x.reject_minus || x.reject_plus)
}

/// Seeds of the three independent streams of a study cell.
fn stream(seed: u64, n: usize, what: u64) -> u64 {
    derive_seed(derive_seed(seed, n as u64), what)
}

/// Study sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudySize {
    pub reps: usize,
    /// Null replications behind each calibrated threshold.
    pub cal_reps: usize,
    pub n_mc: usize,
}

impl Default for StudySize {
    fn default() -> Self {
        Self { reps: 200, cal_reps: 200, n_mc: 5000 }
    }
}

/// Level and power of the calibrated mode test at b0 = 0, h = 1, t = v = ±e_i.
#[derive(Debug, Clone)]
pub struct ModeStudy {
    pub null: DgpSpec,
    pub alternative: DgpSpec,
    pub cfg: PipelineConfig,
}

impl ModeStudy {
    pub fn from_scenarios(null: &str, alternative: &str, n: usize) -> Result<Self> {
        Ok(Self { null: scenario(null, n, 0)?, alternative: scenario(alternative, n, 0)?, cfg: PipelineConfig::default() })
    }

    pub fn family(&self) -> Result<Vec<TestPoint>> {
        ModeFamilySpec::default().points(&vec![0.0; self.null.dim], &[1.0])
    }

    pub fn calibrate(&self, kt: &KernelTable, alpha: f64, cal_reps: usize, seed: u64) -> Result<QuantileResult> {
        calibrated_quantiles(&self.family()?, &self.null, kt, &self.cfg, alpha, cal_reps, seed)
    }

    /// Mode-detection rate on `spec` under `threshold`.
    pub fn detection(
        &self,
        spec: &DgpSpec,
        kt: &KernelTable,
        alpha: f64,
        threshold: &Threshold,
        reps: usize,
        seed: u64,
    ) -> Result<Rate> {
        let out = replicate_decisions(spec, &self.family()?, kt, &self.cfg, alpha, threshold, reps, seed)?;
        Ok(Rate::count(&out, |d| all_minus(d)))
    }
}

/// Per-scale and combined verdicts of the twelve-test multiscale family.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MultiscaleRates {
    pub scales: Vec<f64>,
    pub per_scale: Vec<Rate>,
    pub combined: Rate,
    pub any_rejection: Rate,
}

/// Scales 2.5, 1, 0.5 at b0 = 0 with t = h·v, v ∈ {±e1, ±e2}.
pub const MULTISCALE_SCALES: [f64; 3] = [2.5, 1.0, 0.5];

pub fn multiscale_rates(
    spec: &DgpSpec,
    kt: &KernelTable,
    cfg: &PipelineConfig,
    alpha: f64,
    limit: &LimitConfig,
    rule: &MultiscaleRule,
    reps: usize,
    seed: u64,
) -> Result<MultiscaleRates> {
    let scales = MULTISCALE_SCALES.to_vec();
    let family = ModeFamilySpec::default().points(&vec![0.0; spec.dim], &scales)?;
    let n_dir = family.len() / scales.len();
    let out = replicate_decisions(spec, &family, kt, cfg, alpha, &Threshold::Theoretical(*limit), reps, seed)?;
    let per_scale = (0..scales.len()).map(|k| Rate::count(&out, |d| all_minus(&d[k * n_dir..(k + 1) * n_dir]))).collect();
    let mut hits = 0;
    for d in &out {
        if rule.combine(&scales, n_dir, d)? {
            hits += 1;
        }
    }
    Ok(MultiscaleRates {
        scales,
        per_scale,
        combined: Rate { hits, reps: out.len() },
        any_rejection: Rate::count(&out, |d| any_rejection(d)),
    })
}

/// The combined rule of the reference study: every direction rejected at
/// h = 0.5 or h = 1.
pub fn reference_multiscale_rule() -> MultiscaleRule {
    MultiscaleRule::EveryDirectionSomeScale { subset: Some(vec![0.5, 1.0]) }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TableId {
    LevelPowerUniform,
    LevelPowerCauchy,
    Multiscale,
}

impl TableId {
    pub fn columns(&self) -> &'static [&'static str] {
        match self {
            TableId::LevelPowerUniform => &[
                "cube power",
                "cube level (cal.)",
                "cube power (cal.)",
                "normal level (cal.)",
                "normal power (cal.)",
            ],
            TableId::LevelPowerCauchy => &[
                "unknown level (cal.)",
                "unknown power (cal.)",
                "known level (cal.)",
                "known power (cal.)",
            ],
            TableId::Multiscale => &["h=2.5", "h=1", "h=0.5", "h in {0.5, 1}"],
        }
    }

    /// Published values in percent, rows by sample size.
    pub fn reference(&self) -> &'static [(usize, &'static [f64])] {
        match self {
            TableId::LevelPowerUniform => &[
                (250, &[9.0, 4.5, 91.0, 4.7, 66.1]),
                (500, &[15.7, 4.6, 99.1, 4.5, 78.8]),
                (1000, &[79.1, 5.0, 100.0, 4.5, 90.6]),
            ],
            TableId::LevelPowerCauchy => &[
                (250, &[4.8, 91.3, 5.0, 93.3]),
                (500, &[5.2, 99.0, 5.2, 99.7]),
                (1000, &[5.3, 100.0, 5.3, 100.0]),
            ],
            TableId::Multiscale => &[
                (2000, &[100.0, 0.0, 0.0, 25.0]),
                (5000, &[100.0, 0.0, 1.0, 86.3]),
                (15000, &[100.0, 0.0, 68.7, 100.0]),
            ],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Cell {
    pub column: String,
    pub reference: f64,
    pub rate: Rate,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TableRow {
    pub n: usize,
    pub cells: Vec<Cell>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TableReport {
    pub table: TableId,
    pub seed: u64,
    pub size: StudySize,
    pub rows: Vec<TableRow>,
}

impl fmt::Display for TableReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:?}: reps = {}, calibration reps = {}, seed = {}", self.table, self.size.reps, self.size.cal_reps, self.seed)?;
        writeln!(f, "{:>6}  {:<24} {:>9}  {:>22}", "n", "column", "reference", "rerun (± binomial SE)")?;
        for row in &self.rows {
            for c in &row.cells {
                writeln!(f, "{:>6}  {:<24} {:>8.1}%  {:>22}", row.n, c.column, c.reference, c.rate.to_string())?;
            }
        }
        Ok(())
    }
}

fn cells(table: TableId, n: usize, rates: Vec<Rate>) -> TableRow {
    let refs = table.reference().iter().find(|(m, _)| *m == n).map(|(_, r)| *r);
    let cells = table
        .columns()
        .iter()
        .zip(rates)
        .enumerate()
        .map(|(j, (c, rate))| Cell { column: c.to_string(), reference: refs.map_or(f64::NAN, |r| r[j]), rate })
        .collect();
    TableRow { n, cells }
}

/// Desk-scale rerun of one reference table at the given sample sizes.
pub fn reproduce_table(table: TableId, ns: &[usize], size: StudySize, alpha: f64, seed: u64) -> Result<TableReport> {
    let mut rows = Vec::new();
    match table {
        TableId::LevelPowerUniform | TableId::LevelPowerCauchy => {
            let kt = KernelTable::new(3)?;
            for &n in ns {
                let rates = if table == TableId::LevelPowerUniform {
                    let cube = ModeStudy::from_scenarios("cube-design-null", "cube-design-normal", n)?;
                    let shifted = ModeStudy::from_scenarios("shifted-design-null", "shifted-design-normal", n)?;
                    let theo = Threshold::Theoretical(LimitConfig { n_mc: size.n_mc, ..Default::default() });
                    let mut r = vec![cube.detection(&cube.alternative, &kt, alpha, &theo, size.reps, stream(seed, n, 1))?];
                    r.extend(level_power(&cube, &kt, alpha, size, stream(seed, n, 2))?);
                    r.extend(level_power(&shifted, &kt, alpha, size, stream(seed, n, 3))?);
                    r
                } else {
                    let unknown = ModeStudy::from_scenarios("cauchy-intercept-null", "cauchy-intercept-normal", n)?;
                    let known = ModeStudy {
                        cfg: PipelineConfig {
                            design: DesignConfig {
                                theta: ThetaSource::Known(KnownDensity::Cauchy(CauchyTheta::standard(3))),
                                ..Default::default()
                            },
                            ..Default::default()
                        },
                        ..unknown.clone()
                    };
                    let mut r = level_power(&unknown, &kt, alpha, size, stream(seed, n, 2))?.to_vec();
                    r.extend(level_power(&known, &kt, alpha, size, stream(seed, n, 3))?);
                    r
                };
                rows.push(cells(table, n, rates));
            }
        }
        TableId::Multiscale => {
            let kt = KernelTable::new(2)?;
            let limit = LimitConfig { n_mc: size.n_mc, ..Default::default() };
            for &n in ns {
                let spec = scenario("bimodal-multiscale", n, 0)?;
                let m = multiscale_rates(
                    &spec,
                    &kt,
                    &PipelineConfig::default(),
                    alpha,
                    &limit,
                    &reference_multiscale_rule(),
                    size.reps,
                    stream(seed, n, 1),
                )?;
                let mut r = m.per_scale.clone();
                r.push(m.combined);
                rows.push(cells(table, n, r));
            }
        }
    }
    Ok(TableReport { table, seed, size, rows })
}

/// Calibrated level and power: calibrate on one stream, then count
/// detections on fresh null and alternative streams.
pub fn level_power(study: &ModeStudy, kt: &KernelTable, alpha: f64, size: StudySize, seed: u64) -> Result<[Rate; 2]> {
    let q = study.calibrate(kt, alpha, size.cal_reps, derive_seed(seed, 0))?;
    let th = Threshold::Fixed(q);
    let level = study.detection(&study.null, kt, alpha, &th, size.reps, derive_seed(seed, 1))?;
    let power = study.detection(&study.alternative, kt, alpha, &th, size.reps, derive_seed(seed, 2))?;
    Ok([level, power])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_arithmetic() {
        let r = Rate { hits: 10, reps: 200 };
        assert!((r.rate() - 0.05).abs() < 1e-15);
        assert!((r.se() - (0.05f64 * 0.95 / 200.0).sqrt()).abs() < 1e-15);
        assert_eq!(Rate::count(&[1, 2, 3, 4], |x| x % 2 == 0), Rate { hits: 2, reps: 4 });
    }

    #[test]
    fn reference_shapes() {
        for t in [TableId::LevelPowerUniform, TableId::LevelPowerCauchy, TableId::Multiscale] {
            for (_, r) in t.reference() {
                assert_eq!(r.len(), t.columns().len());
            }
        }
    }

    #[test]
    fn replications_are_deterministic() {
        let kt = KernelTable::new(2).unwrap();
        let spec = scenario("trimodal-null", 400, 0).unwrap();
        let fam = ModeFamilySpec::default().points(&[0.0, 0.0], &[1.0]).unwrap();
        let th = Threshold::Theoretical(LimitConfig { n_mc: 500, ..Default::default() });
        let cfg = PipelineConfig::default();
        let a = replicate_decisions(&spec, &fam, &kt, &cfg, 0.05, &th, 4, 9).unwrap();
        let b = replicate_decisions(&spec, &fam, &kt, &cfg, 0.05, &th, 4, 9).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0], a[1]);
    }
}
