//! Evaluation harness: error statistics, per-estimate timing, parameter
//! sweeps and plot-ready CSV output.

mod sweep;

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::estimators::{CellId, CellSense, Deterministic, EstimatorParams, Hybrid, Localizer, ScanWindow, Technique};
use crate::geo::{Projection, ScanVector};
use crate::gp::{GpLocalizer, PrecomputedGrid};
use crate::math::{median, percentile_sorted};
use crate::radio_map::RadioMap;

pub use sweep::{
    ablate_scans, ablate_towers, choose_dropped_towers, sweep, thin_fingerprint, write_sweep, Scenario, SweepConfig,
    SweepParam, SweepRow,
};

pub const REPORT_HEADER: [&str; 7] = ["technique", "grid_m", "ns", "k", "median_err_m", "p95_err_m", "mean_ms"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    /// Timed calls per estimate; the median is kept. At least 3.
    pub timing_repetitions: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { timing_repetitions: 3 }
    }
}

/// Aggregated accuracy and speed of one technique on one test trace.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub technique: Technique,
    /// Cell length of the map, or lattice spacing for the GP grid.
    pub grid_m: Option<f64>,
    pub n_samples: usize,
    pub k: Option<usize>,
    pub median_error_m: f64,
    pub p95_error_m: f64,
    pub mean_time_ms: f64,
    /// Per-estimate errors, ascending.
    pub errors_m: Vec<f64>,
    /// Per-estimate time (median over repetitions), in window order.
    pub times_ms: Vec<f64>,
}

impl EvalReport {
    pub fn from_errors(technique: Technique, mut errors_m: Vec<f64>, times_ms: Vec<f64>) -> Result<Self> {
        if errors_m.is_empty() {
            return Err(Error::EmptyInput("errors"));
        }
        errors_m.sort_by(f64::total_cmp);
        let median_error_m = percentile_sorted(&errors_m, 0.5).expect("non-empty");
        let p95_error_m = percentile_sorted(&errors_m, 0.95).expect("non-empty");
        let mean_time_ms = if times_ms.is_empty() { 0.0 } else { times_ms.iter().sum::<f64>() / times_ms.len() as f64 };
        Ok(EvalReport {
            technique,
            grid_m: None,
            n_samples: 1,
            k: None,
            median_error_m,
            p95_error_m,
            mean_time_ms,
            errors_m,
            times_ms,
        })
    }

    /// `(error, fraction of estimates with error ≤ it)` for every estimate.
    pub fn error_cdf(&self) -> Vec<(f64, f64)> {
        let n = self.errors_m.len() as f64;
        self.errors_m.iter().enumerate().map(|(i, e)| (*e, (i + 1) as f64 / n)).collect()
    }

    pub fn median_time_ms(&self) -> f64 {
        median(&self.times_ms).unwrap_or(0.0)
    }

    pub(crate) fn csv_fields(&self) -> [String; 7] {
        let opt = |v: Option<String>| v.unwrap_or_default();
        [
            self.technique.to_string(),
            opt(self.grid_m.map(|g| g.to_string())),
            self.n_samples.to_string(),
            opt(self.k.map(|k| k.to_string())),
            self.median_error_m.to_string(),
            self.p95_error_m.to_string(),
            self.mean_time_ms.to_string(),
        ]
    }
}

/// Slides a window of `localizer.window_len()` consecutive scans over `test`
/// with stride 1 and scores each estimate against the truth of the window's
/// last scan. Only complete windows are evaluated; a trace shorter than one
/// window is evaluated as a single window.
pub fn evaluate(
    localizer: &dyn Localizer,
    projection: &Projection,
    test: &[ScanVector],
    options: &EvalOptions,
) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::EmptyInput("test scans"));
    }
    let reps = options.timing_repetitions.max(3);
    let n = localizer.window_len().clamp(1, test.len());
    let mut errors = Vec::with_capacity(test.len() + 1 - n);
    let mut times = Vec::with_capacity(test.len() + 1 - n);
    for end in n - 1..test.len() {
        let window = ScanWindow::new(&test[end + 1 - n..=end])?;
        let last = window.last();
        let truth = projection.project(last.truth().ok_or(Error::MissingTruth(last.timestamp()))?);
        let mut samples = Vec::with_capacity(reps);
        let mut estimate = None;
        for _ in 0..reps {
            let start = Instant::now();
            let est = std::hint::black_box(localizer.locate(std::hint::black_box(&window))?);
            samples.push(start.elapsed().as_secs_f64() * 1e3);
            estimate = Some(est);
        }
        let estimate = estimate.expect("at least one repetition");
        errors.push(estimate.location.distance(&truth));
        times.push(median(&samples).expect("non-empty"));
    }
    let mut report = EvalReport::from_errors(localizer.technique(), errors, times)?;
    report.n_samples = localizer.window_len();
    Ok(report)
}

/// Prepared localizer for `technique` over `map` (or `gp_grid` for [`Technique::Gp`]).
pub fn make_localizer<'a>(
    technique: Technique,
    map: &'a RadioMap,
    params: EstimatorParams,
    gp_grid: Option<&'a PrecomputedGrid>,
) -> Result<Box<dyn Localizer + 'a>> {
    Ok(match technique {
        Technique::CellSense => Box::new(CellSense::new(map, params)?),
        Technique::Hybrid => Box::new(Hybrid::new(map, params)?),
        Technique::Deterministic => Box::new(Deterministic::new(map, params)?),
        Technique::CellId => Box::new(CellId::new(map)?),
        Technique::Gp => {
            let grid = gp_grid.ok_or_else(|| Error::InvalidArgument("gp needs a precomputed grid".into()))?;
            Box::new(GpLocalizer::new(grid, params.n_samples)?)
        }
    })
}

/// Evaluates `technique` with `params` and fills in the report's configuration fields.
pub fn evaluate_technique(
    technique: Technique,
    map: &RadioMap,
    params: EstimatorParams,
    gp_grid: Option<&PrecomputedGrid>,
    test: &[ScanVector],
    options: &EvalOptions,
) -> Result<EvalReport> {
    let localizer = make_localizer(technique, map, params, gp_grid)?;
    let mut report = evaluate(localizer.as_ref(), &map.projection(), test, options)?;
    report.n_samples = localizer.window_len();
    match technique {
        Technique::CellSense | Technique::Hybrid | Technique::Deterministic => {
            report.grid_m = Some(map.grid_length());
            report.k = Some(params.k);
        }
        Technique::Gp => report.grid_m = gp_grid.and_then(PrecomputedGrid::spacing),
        Technique::CellId => {}
    }
    Ok(report)
}

pub fn write_reports(writer: impl Write, reports: &[EvalReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(REPORT_HEADER)?;
    for r in reports {
        w.write_record(r.csv_fields())?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_reports_csv(path: impl AsRef<Path>, reports: &[EvalReport]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_reports(std::io::BufWriter::new(file), reports)
}

pub fn write_cdf(writer: impl Write, report: &EvalReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["error_m", "cum_frac"])?;
    for (e, f) in report.error_cdf() {
        w.write_record([e.to_string(), f.to_string()])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_cdf_csv(path: impl AsRef<Path>, report: &EvalReport) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_cdf(std::io::BufWriter::new(file), report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::LocationEstimate;
    use crate::geo::{GeoPoint, PlanarPoint, Readings, RssiAsu, TowerId};

    /// Returns the truth of the window's last scan.
    struct Oracle(Projection);

    impl Localizer for Oracle {
        fn technique(&self) -> Technique {
            Technique::CellSense
        }
        fn window_len(&self) -> usize {
            3
        }
        fn locate(&self, w: &ScanWindow<'_>) -> Result<LocationEstimate> {
            let location = self.0.project(w.last().truth().unwrap());
            Ok(LocationEstimate { location, log_score: None, contributing_cells: Vec::new() })
        }
    }

    fn trace(n: usize) -> (Projection, Vec<ScanVector>) {
        let proj = Projection::new(GeoPoint::new(30.0, 31.0).unwrap());
        let readings: Readings = [(TowerId::new("A").unwrap(), RssiAsu::new(5).unwrap())].into_iter().collect();
        let scans = (0..n)
            .map(|i| {
                let g = proj.unproject(&PlanarPoint::new(i as f64 * 10.0, 0.0));
                ScanVector::new(i as i64, readings.clone(), Some(g)).unwrap()
            })
            .collect();
        (proj, scans)
    }

    #[test]
    fn perfect_estimator_has_zero_error() {
        let (proj, scans) = trace(20);
        let r = evaluate(&Oracle(proj), &proj, &scans, &EvalOptions::default()).unwrap();
        assert_eq!(r.errors_m.len(), 18);
        assert!(r.median_error_m < 1e-6 && r.p95_error_m < 1e-6);
        assert_eq!(r.times_ms.len(), 18);
    }

    #[test]
    fn short_trace_is_one_window() {
        let (proj, scans) = trace(2);
        let r = evaluate(&Oracle(proj), &proj, &scans, &EvalOptions::default()).unwrap();
        assert_eq!(r.errors_m.len(), 1);
    }

    #[test]
    fn order_statistics_of_one_to_hundred() {
        let errors: Vec<f64> = (1..=100).rev().map(|e| e as f64).collect();
        let r = EvalReport::from_errors(Technique::Hybrid, errors, Vec::new()).unwrap();
        assert!((r.median_error_m - 50.5).abs() < 1e-12);
        assert!((r.p95_error_m - 95.05).abs() < 1e-12);
        let cdf = r.error_cdf();
        assert_eq!(cdf.last().unwrap(), &(100.0, 1.0));
        assert!(cdf.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 < w[1].1));
    }

    #[test]
    fn empty_and_truthless_input() {
        let (proj, scans) = trace(5);
        assert!(evaluate(&Oracle(proj), &proj, &[], &EvalOptions::default()).is_err());
        let stripped: Vec<ScanVector> =
            scans.iter().map(|s| ScanVector::new(s.timestamp(), s.readings().clone(), None).unwrap()).collect();
        assert!(matches!(
            evaluate(&Oracle(proj), &proj, &stripped, &EvalOptions::default()),
            Err(Error::MissingTruth(2))
        ));
    }

    #[test]
    fn csv_output() {
        let r = EvalReport::from_errors(Technique::CellId, vec![2.0, 1.0], vec![0.5, 1.5]).unwrap();
        let mut buf = Vec::new();
        write_reports(&mut buf, std::slice::from_ref(&r)).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "technique,grid_m,ns,k,median_err_m,p95_err_m,mean_ms\ncellid,,1,,1.5,1.95,1\n"
        );
        let mut buf = Vec::new();
        write_cdf(&mut buf, &r).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "error_m,cum_frac\n1,0.5\n2,1\n");
    }
}
