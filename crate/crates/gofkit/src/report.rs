use gofkit_core::embedding::TestReport;
use serde::Serialize;

/// Flat, serializable view of a [`TestReport`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRecord {
    pub test: String,
    pub n: usize,
    pub statistic: f64,
    pub threshold: f64,
    pub p_value: Option<f64>,
    pub reject: bool,
    pub alpha: f64,
    pub calibration: String,
    pub replications: usize,
    pub seed: Option<u64>,
    pub truncation: usize,
    pub rho: Option<f64>,
    pub rho_star: Option<f64>,
    pub m_star: Option<usize>,
    pub argmax_rho: Option<f64>,
    pub theory_threshold: Option<f64>,
    pub spectrum: String,
}

impl ReportRecord {
    pub fn new(report: &TestReport, spectrum: &str) -> Self {
        ReportRecord {
            test: report.kind.name().into(),
            n: report.n,
            statistic: report.statistic,
            threshold: report.threshold,
            p_value: report.p_value,
            reject: report.reject,
            alpha: report.alpha,
            calibration: report.provenance.method.name().into(),
            replications: report.provenance.replications,
            seed: report.provenance.seed,
            truncation: report.truncation,
            rho: report.rho,
            rho_star: report.grid.as_ref().map(|g| g.rho_star),
            m_star: report.grid.as_ref().map(|g| g.m_star),
            argmax_rho: report.argmax_rho,
            theory_threshold: report.theory_threshold,
            spectrum: spectrum.into(),
        }
    }

    /// Single-line JSON. Infinite thresholds (possible with very few replicates) become `null`.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report fields serialize")
    }
}

/// `key: value` lines followed by the JSON record on its own line.
pub fn render(report: &TestReport, spectrum: &str) -> String {
    let mut out = report.to_text();
    out.push_str(&format!("spectrum: {spectrum}\n"));
    out.push_str(&format!("json: {}\n", ReportRecord::new(report, spectrum).to_json()));
    out
}
