//! Benchmark protocol: fixed test pairs, per-method registration runs,
//! rotation and translation errors, success curves and AUC, CSV reports.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{apply_transform, random_transform, rotation_error_deg, translation_error, RigidTransform};
use crate::icp::icp_register;
use crate::meshio::{add_gaussian_noise, PointCloud};
use crate::pcrnet::{register_iterative, register_single_shot, PcrNet, RegistrationResult};

/// Success-curve thresholds run from 0° to this value in 1° steps.
pub const MAX_ANGLE_DEG: usize = 180;
/// Largest tolerated gap between a result's transform and its recomposed
/// per-iteration chain.
pub const COMPOSITION_TOL: f64 = 1e-9;

/// Errors and cost of one registration.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub method: String,
    pub pair_id: usize,
    pub rot_err_deg: f64,
    pub trans_err: f64,
    pub elapsed_secs: f64,
    pub iterations: usize,
    pub converged: bool,
    /// The method returned an error; the record carries the worst-case values.
    pub failed: bool,
}

/// Fraction of errors strictly below each integer threshold `0..=180`.
#[derive(Debug, Clone, PartialEq)]
pub struct SuccessCurve {
    pub thresholds: Vec<f64>,
    pub ratios: Vec<f64>,
}

pub fn success_curve(errors: &[f64]) -> Result<SuccessCurve> {
    if errors.is_empty() {
        return Err(Error::InvalidArgument("success curve needs at least one error".into()));
    }
    if let Some(e) = errors.iter().find(|e| !(0.0..=180.0).contains(*e)) {
        return Err(Error::InvalidArgument(format!("rotation error {e} outside [0, 180]")));
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let thresholds: Vec<f64> = (0..=MAX_ANGLE_DEG).map(|t| t as f64).collect();
    let ratios = thresholds
        .iter()
        .map(|&t| sorted.partition_point(|&e| e < t) as f64 / n)
        .collect();
    Ok(SuccessCurve { thresholds, ratios })
}

/// Trapezoidal area under the curve, divided by 180.
pub fn auc(curve: &SuccessCurve) -> f64 {
    let area: f64 = curve
        .thresholds
        .windows(2)
        .zip(curve.ratios.windows(2))
        .map(|(t, r)| (t[1] - t[0]) * (r[0] + r[1]) / 2.0)
        .sum();
    area / MAX_ANGLE_DEG as f64
}

/// A test case: `source = noise(gt(templates[template_index]))`.
#[derive(Debug, Clone, PartialEq)]
pub struct TestPair {
    pub id: usize,
    pub template_index: usize,
    pub source: PointCloud,
    pub gt: RigidTransform,
}

impl TestPair {
    /// The transform a perfect method returns: it maps the source back onto the template.
    pub fn target(&self) -> RigidTransform {
        self.gt.inverse()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairSettings {
    pub count: usize,
    pub angle_deg: f64,
    pub translation: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for PairSettings {
    fn default() -> Self {
        PairSettings {
            count: 100,
            angle_deg: 45.0,
            translation: 1.0,
            noise_sigma: 0.0,
            seed: 0,
        }
    }
}

/// Generate the test pairs once, so every method sees identical inputs.
pub fn make_test_pairs(templates: &[PointCloud], settings: &PairSettings) -> Result<Vec<TestPair>> {
    if templates.is_empty() {
        return Err(Error::InvalidArgument("no templates to build test pairs from".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    (0..settings.count)
        .map(|id| {
            let template_index = rng.random_range(0..templates.len());
            let gt = random_transform(&mut rng, settings.angle_deg, settings.translation);
            let source = add_gaussian_noise(
                &apply_transform(&gt, &templates[template_index]),
                settings.noise_sigma,
                &mut rng,
            )?;
            Ok(TestPair {
                id,
                template_index,
                source,
                gt,
            })
        })
        .collect()
}

/// A registration method under test.
pub trait Registrar: Sync {
    fn name(&self) -> &str;

    /// Register `pair.source` onto `template`. Real methods must not look at
    /// `pair.gt`; it is there for reference baselines.
    fn register(&self, pair: &TestPair, template: &PointCloud) -> Result<RegistrationResult>;
}

pub struct SingleShotMethod<'a> {
    pub net: &'a PcrNet,
}

impl Registrar for SingleShotMethod<'_> {
    fn name(&self) -> &str {
        "pcrnet"
    }

    fn register(&self, pair: &TestPair, template: &PointCloud) -> Result<RegistrationResult> {
        register_single_shot(self.net, &pair.source, template)
    }
}

pub struct IterativeMethod<'a> {
    pub net: &'a PcrNet,
    pub max_iter: usize,
    pub eps: f64,
}

impl Registrar for IterativeMethod<'_> {
    fn name(&self) -> &str {
        "pcrnet-iter"
    }

    fn register(&self, pair: &TestPair, template: &PointCloud) -> Result<RegistrationResult> {
        register_iterative(self.net, &pair.source, template, self.max_iter, self.eps)
    }
}

pub struct IcpMethod {
    pub max_iter: usize,
    pub eps: f64,
}

impl Registrar for IcpMethod {
    fn name(&self) -> &str {
        "icp"
    }

    fn register(&self, pair: &TestPair, template: &PointCloud) -> Result<RegistrationResult> {
        icp_register(&pair.source, template, self.max_iter, self.eps)
    }
}

/// Always answers the identity.
pub struct IdentityMethod;

impl Registrar for IdentityMethod {
    fn name(&self) -> &str {
        "identity"
    }

    fn register(&self, _pair: &TestPair, _template: &PointCloud) -> Result<RegistrationResult> {
        Ok(single_step(RigidTransform::identity()))
    }
}

/// Answers the ground truth. A reference for the metrics, not a method.
pub struct OracleMethod;

impl Registrar for OracleMethod {
    fn name(&self) -> &str {
        "oracle"
    }

    fn register(&self, pair: &TestPair, _template: &PointCloud) -> Result<RegistrationResult> {
        Ok(single_step(pair.target()))
    }
}

fn single_step(t: RigidTransform) -> RegistrationResult {
    RegistrationResult {
        transform: t,
        per_iteration: vec![t],
        iterations_used: 1,
        converged: true,
        elapsed_secs: 0.0,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkSettings {
    pub threads: usize,
    /// Record wall time; when off every time is written as 0.
    pub timing: bool,
}

impl Default for BenchmarkSettings {
    fn default() -> Self {
        BenchmarkSettings {
            threads: 1,
            timing: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: String,
    pub rot_mean: f64,
    pub rot_std: f64,
    pub trans_mean: f64,
    pub trans_std: f64,
    pub time_mean_ms: f64,
    pub time_std_ms: f64,
    pub auc: f64,
    pub curve: SuccessCurve,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkReport {
    /// Grouped by method in the order given, then by pair id.
    pub records: Vec<EvalRecord>,
    pub summaries: Vec<MethodSummary>,
    /// Largest composition residual seen over all successful results.
    pub max_composition_residual: f64,
}

fn evaluate(method: &dyn Registrar, pair: &TestPair, template: &PointCloud, timing: bool) -> (EvalRecord, f64) {
    let target = pair.target();
    let base = EvalRecord {
        method: method.name().to_string(),
        pair_id: pair.id,
        rot_err_deg: 180.0,
        trans_err: target.translation().norm(),
        elapsed_secs: 0.0,
        iterations: 0,
        converged: false,
        failed: true,
    };
    match method.register(pair, template) {
        Ok(r) if r.transform.is_valid(1e-6) => (
            EvalRecord {
                rot_err_deg: rotation_error_deg(&r.transform, &target),
                trans_err: translation_error(&r.transform, &target),
                elapsed_secs: if timing { r.elapsed_secs } else { 0.0 },
                iterations: r.iterations_used,
                converged: r.converged,
                failed: false,
                ..base
            },
            r.composition_residual(),
        ),
        _ => (base, 0.0),
    }
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count().max(1) as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Run every method on every pair. Failures become 180° records instead of
/// aborting. Standard deviations are population values.
pub fn run_benchmark(
    methods: &[&dyn Registrar],
    templates: &[PointCloud],
    pairs: &[TestPair],
    settings: &BenchmarkSettings,
) -> Result<BenchmarkReport> {
    if methods.is_empty() || pairs.is_empty() {
        return Err(Error::InvalidArgument(
            "benchmark needs at least one method and one pair".into(),
        ));
    }
    if let Some(p) = pairs.iter().find(|p| p.template_index >= templates.len()) {
        return Err(Error::InvalidArgument(format!(
            "pair {} names a missing template",
            p.id
        )));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.threads.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;

    let mut records = Vec::with_capacity(methods.len() * pairs.len());
    let mut summaries = Vec::with_capacity(methods.len());
    let mut max_residual = 0.0f64;
    for &method in methods {
        let run = |p: &TestPair| evaluate(method, p, &templates[p.template_index], settings.timing);
        let results: Vec<(EvalRecord, f64)> = if settings.threads > 1 {
            pool.install(|| pairs.par_iter().map(run).collect())
        } else {
            pairs.iter().map(run).collect()
        };
        let mut rows: Vec<EvalRecord> = Vec::with_capacity(results.len());
        for (rec, residual) in results {
            max_residual = max_residual.max(residual);
            rows.push(rec);
        }
        rows.sort_by_key(|r| r.pair_id);
        let rot: Vec<f64> = rows.iter().map(|r| r.rot_err_deg).collect();
        let curve = success_curve(&rot)?;
        let (rot_mean, rot_std) = mean_std(rot.iter().copied());
        let (trans_mean, trans_std) = mean_std(rows.iter().map(|r| r.trans_err));
        let (time_mean_ms, time_std_ms) = mean_std(rows.iter().map(|r| r.elapsed_secs * 1e3));
        summaries.push(MethodSummary {
            method: method.name().to_string(),
            rot_mean,
            rot_std,
            trans_mean,
            trans_std,
            time_mean_ms,
            time_std_ms,
            auc: auc(&curve),
            curve,
            failures: rows.iter().filter(|r| r.failed).count(),
        });
        records.extend(rows);
    }
    Ok(BenchmarkReport {
        records,
        summaries,
        max_composition_residual: max_residual,
    })
}

pub const DETAIL_HEADER: &str = "method,pair_id,rot_err_deg,trans_err,time_ms,iters,converged";
pub const SUMMARY_HEADER: &str = "method,rot_mean,rot_std,trans_mean,trans_std,time_mean_ms,time_std_ms,auc";
pub const CURVE_HEADER: &str = "threshold_deg,success_ratio";

pub fn detail_csv(records: &[EvalRecord]) -> String {
    let mut out = format!("{DETAIL_HEADER}\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.method,
            r.pair_id,
            r.rot_err_deg,
            r.trans_err,
            r.elapsed_secs * 1e3,
            r.iterations,
            r.converged
        ));
    }
    out
}

pub fn summary_csv(summaries: &[MethodSummary]) -> String {
    let mut out = format!("{SUMMARY_HEADER}\n");
    for s in summaries {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            s.method, s.rot_mean, s.rot_std, s.trans_mean, s.trans_std, s.time_mean_ms, s.time_std_ms, s.auc
        ));
    }
    out
}

pub fn curve_csv(curve: &SuccessCurve) -> String {
    let mut out = format!("{CURVE_HEADER}\n");
    for (t, r) in curve.thresholds.iter().zip(&curve.ratios) {
        out.push_str(&format!("{t},{r}\n"));
    }
    out
}

/// Write `detail.csv`, `summary.csv` and one `curve_<method>.csv` per method.
pub fn write_report(dir: &Path, report: &BenchmarkReport) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("detail.csv"), detail_csv(&report.records))?;
    std::fs::write(dir.join("summary.csv"), summary_csv(&report.summaries))?;
    for s in &report.summaries {
        std::fs::write(dir.join(format!("curve_{}.csv", s.method)), curve_csv(&s.curve))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Point3;
    use proptest::prelude::*;
    use rand::Rng;

    const GRID: f64 = 1.0 / 180.0;

    fn cloud(seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PointCloud::new(
            (0..64)
                .map(|_| {
                    Point3::new(
                        rng.random_range(-0.5..0.5),
                        rng.random_range(-0.3..0.3),
                        rng.random_range(-0.2..0.2),
                    )
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn curve_examples() {
        let zero = success_curve(&[0.0, 0.0]).unwrap();
        assert_eq!(zero.ratios[0], 0.0);
        assert!(zero.ratios[1..].iter().all(|&r| r == 1.0));
        let ninety = success_curve(&[90.0]).unwrap();
        for (t, r) in ninety.thresholds.iter().zip(&ninety.ratios) {
            assert_eq!(*r, if *t > 90.0 { 1.0 } else { 0.0 });
        }
        let mixed = success_curve(&[10.0, 30.0]).unwrap();
        assert_eq!(
            (mixed.ratios[10], mixed.ratios[11], mixed.ratios[30], mixed.ratios[31]),
            (0.0, 0.5, 0.5, 1.0)
        );
        assert!(success_curve(&[]).is_err());
        assert!(success_curve(&[181.0]).is_err());
    }

    #[test]
    fn auc_examples() {
        assert!((auc(&success_curve(&[0.0]).unwrap()) - 1.0).abs() <= GRID);
        assert!(auc(&success_curve(&[180.0]).unwrap()).abs() <= GRID);
        assert!((auc(&success_curve(&[90.0]).unwrap()) - 0.5).abs() <= GRID);
    }

    proptest! {
        #[test]
        fn curve_monotone_and_auc_order_free(mut errs in prop::collection::vec(0.0f64..=180.0, 1..50), seed in any::<u64>()) {
            let c = success_curve(&errs).unwrap();
            prop_assert!(c.ratios.windows(2).all(|w| w[0] <= w[1]));
            let a = auc(&c);
            prop_assert!((0.0..=1.0).contains(&a));
            use rand::seq::SliceRandom;
            errs.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(auc(&success_curve(&errs).unwrap()), a);
            let mut better = errs.clone();
            better.push(0.0);
            prop_assert!(auc(&success_curve(&better).unwrap()) >= a - 1e-12);
            let mut worse = errs.clone();
            worse.push(180.0);
            prop_assert!(auc(&success_curve(&worse).unwrap()) <= a + 1e-12);
        }
    }

    #[test]
    fn oracle_and_identity_methods() {
        let templates = [cloud(1), cloud(2)];
        let pairs = make_test_pairs(
            &templates,
            &PairSettings {
                count: 12,
                ..Default::default()
            },
        )
        .unwrap();
        let r = run_benchmark(
            &[&OracleMethod, &IdentityMethod],
            &templates,
            &pairs,
            &BenchmarkSettings::default(),
        )
        .unwrap();
        let oracle = &r.summaries[0];
        assert!(oracle.rot_mean < 1e-6 && oracle.trans_mean < 1e-9);
        assert!((oracle.auc - 1.0).abs() <= GRID);
        assert!(r.summaries[1].rot_mean > 1.0);
        assert_eq!(r.records.len(), 24);
        assert!(r.max_composition_residual < COMPOSITION_TOL);

        let unmoved = make_test_pairs(
            &templates,
            &PairSettings {
                count: 5,
                angle_deg: 0.0,
                translation: 0.0,
                ..Default::default()
            },
        )
        .unwrap();
        let r = run_benchmark(&[&IdentityMethod], &templates, &unmoved, &BenchmarkSettings::default()).unwrap();
        assert_eq!(r.summaries[0].rot_mean, 0.0);
        assert_eq!(r.summaries[0].trans_mean, 0.0);
    }

    struct Failing;

    impl Registrar for Failing {
        fn name(&self) -> &str {
            "failing"
        }

        fn register(&self, _pair: &TestPair, _template: &PointCloud) -> Result<RegistrationResult> {
            Err(Error::Degenerate("always".into()))
        }
    }

    #[test]
    fn failures_are_recorded_not_raised() {
        let templates = [cloud(3)];
        let pairs = make_test_pairs(
            &templates,
            &PairSettings {
                count: 4,
                ..Default::default()
            },
        )
        .unwrap();
        let r = run_benchmark(&[&Failing], &templates, &pairs, &BenchmarkSettings::default()).unwrap();
        assert_eq!(r.summaries[0].failures, 4);
        assert!(r.records.iter().all(|x| x.rot_err_deg == 180.0 && x.failed));
        assert_eq!(r.records[0].trans_err, pairs[0].gt.translation().norm());
        assert!(r.summaries[0].auc.abs() <= GRID);
    }

    #[test]
    fn csv_layout() {
        let templates = [cloud(4)];
        let pairs = make_test_pairs(
            &templates,
            &PairSettings {
                count: 3,
                ..Default::default()
            },
        )
        .unwrap();
        let settings = BenchmarkSettings {
            threads: 1,
            timing: false,
        };
        let r = run_benchmark(&[&IdentityMethod, &OracleMethod], &templates, &pairs, &settings).unwrap();
        let detail = detail_csv(&r.records);
        let lines: Vec<_> = detail.lines().collect();
        assert_eq!(lines[0], DETAIL_HEADER);
        assert_eq!(lines.len(), 7);
        assert!(lines[1].starts_with("identity,0,"));
        assert!(lines[4].starts_with("oracle,0,"));
        assert!(lines[1].ends_with(",0,1,true"));
        let summary = summary_csv(&r.summaries);
        assert_eq!(summary.lines().next().unwrap(), SUMMARY_HEADER);
        assert_eq!(summary.lines().count(), 3);
        let curve = curve_csv(&r.summaries[0].curve);
        assert_eq!(curve.lines().count(), 182);
    }

    #[test]
    fn parallel_run_matches_serial() {
        let templates = [cloud(5)];
        let pairs = make_test_pairs(
            &templates,
            &PairSettings {
                count: 6,
                ..Default::default()
            },
        )
        .unwrap();
        let icp = IcpMethod {
            max_iter: 30,
            eps: 1e-7,
        };
        let serial = BenchmarkSettings {
            threads: 1,
            timing: false,
        };
        let parallel = BenchmarkSettings {
            threads: 3,
            timing: false,
        };
        let a = run_benchmark(&[&icp], &templates, &pairs, &serial).unwrap();
        let b = run_benchmark(&[&icp], &templates, &pairs, &parallel).unwrap();
        assert_eq!(detail_csv(&a.records), detail_csv(&b.records));
    }

    #[test]
    fn pairs_are_reproducible() {
        let templates = [cloud(6), cloud(7)];
        let s = PairSettings {
            count: 5,
            noise_sigma: 0.01,
            seed: 42,
            ..Default::default()
        };
        assert_eq!(
            make_test_pairs(&templates, &s).unwrap(),
            make_test_pairs(&templates, &s).unwrap()
        );
        assert!(make_test_pairs(&[], &s).is_err());
    }
}
