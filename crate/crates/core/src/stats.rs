//! Label distributions, inter-rater agreement, and report rendering.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::similarity::{ScoreDistribution, BUCKET_WIDTH};
use crate::taxonomy::{Category, DescriptionLabel, Subtype};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum StatsError {
    #[error("no labels to summarise")]
    EmptyInput,
    #[error("label lists differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("expected agreement is 1; Cohen's kappa is undefined")]
    DegenerateAgreement,
    #[error("label space of {declared} categories but {observed} distinct labels observed")]
    CategoryCount { declared: usize, observed: usize },
}

/// A percentage held as hundredths of a percent, so `44.00%` is `4400`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Hundredths(pub u64);

impl Hundredths {
    /// `100·count/total`, rounded half-up to two decimals, in exact integer arithmetic.
    pub fn of(count: u64, total: u64) -> Self {
        debug_assert!(total > 0);
        Hundredths((20_000 * count + total) / (2 * total))
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / 100.0
    }
}

impl std::fmt::Display for Hundredths {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}.{:02}", self.0 / 100, self.0 % 100)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubtypeRow {
    pub subtype: Subtype,
    pub count: u64,
    pub percent: Hundredths,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryRow {
    pub category: Category,
    pub count: u64,
    pub percent: Hundredths,
    pub subtypes: Vec<SubtypeRow>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistributionReport {
    pub categories: Vec<CategoryRow>,
    pub total: u64,
    /// Model refusals kept out of the table (zero when merged into Unclear).
    pub refusals: u64,
    /// Answers that never matched the output format.
    pub violations: u64,
}

impl DistributionReport {
    pub fn category(&self, category: Category) -> &CategoryRow {
        self.categories
            .iter()
            .find(|r| r.category == category)
            .expect("every category has a row")
    }

    pub fn subtype(&self, subtype: Subtype) -> &SubtypeRow {
        self.categories
            .iter()
            .flat_map(|r| &r.subtypes)
            .find(|r| r.subtype == subtype)
            .expect("every subtype has a row")
    }
}

/// Subtype counts plus the Unclear count, in table order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LabelCounts {
    pub installation_instruction: u64,
    pub usage_instruction: u64,
    pub usage_example: u64,
    pub feature_explanation: u64,
    pub code_example: u64,
    pub unclear: u64,
}

impl LabelCounts {
    pub fn subtype(&self, st: Subtype) -> u64 {
        match st {
            Subtype::InstallationInstruction => self.installation_instruction,
            Subtype::UsageInstruction => self.usage_instruction,
            Subtype::UsageExample => self.usage_example,
            Subtype::FeatureExplanation => self.feature_explanation,
            Subtype::CodeExample => self.code_example,
        }
    }

    fn add(&mut self, label: &DescriptionLabel) {
        match label.subtype {
            Some(Subtype::InstallationInstruction) => self.installation_instruction += 1,
            Some(Subtype::UsageInstruction) => self.usage_instruction += 1,
            Some(Subtype::UsageExample) => self.usage_example += 1,
            Some(Subtype::FeatureExplanation) => self.feature_explanation += 1,
            Some(Subtype::CodeExample) => self.code_example += 1,
            None => self.unclear += 1,
        }
    }

    pub fn total(&self) -> u64 {
        Subtype::ALL.iter().map(|&st| self.subtype(st)).sum::<u64>() + self.unclear
    }
}

/// Builds the table from raw counts.
pub fn distribution_from_counts(counts: &LabelCounts) -> Result<DistributionReport, StatsError> {
    let total = counts.total();
    if total == 0 {
        return Err(StatsError::EmptyInput);
    }
    let categories = Category::ALL
        .iter()
        .map(|&category| {
            let subtypes: Vec<SubtypeRow> = category
                .subtypes()
                .iter()
                .map(|&subtype| {
                    let count = counts.subtype(subtype);
                    SubtypeRow {
                        subtype,
                        count,
                        percent: Hundredths::of(count, total),
                    }
                })
                .collect();
            let count = if category == Category::Unclear {
                counts.unclear
            } else {
                subtypes.iter().map(|s| s.count).sum()
            };
            CategoryRow {
                category,
                count,
                percent: Hundredths::of(count, total),
                subtypes,
            }
        })
        .collect();
    Ok(DistributionReport {
        categories,
        total,
        refusals: 0,
        violations: 0,
    })
}

pub fn distribution(labels: &[DescriptionLabel]) -> Result<DistributionReport, StatsError> {
    let mut counts = LabelCounts::default();
    labels.iter().for_each(|l| counts.add(l));
    distribution_from_counts(&counts)
}

/// Distribution of a classification run. With `merge_refusals`, refusals are
/// counted as Unclear; otherwise they are reported beside the table.
pub fn distribution_with_refusals(
    labels: &[DescriptionLabel],
    refusals: u64,
    violations: u64,
    merge_refusals: bool,
) -> Result<DistributionReport, StatsError> {
    let mut counts = LabelCounts::default();
    labels.iter().for_each(|l| counts.add(l));
    if merge_refusals {
        counts.unclear += refusals;
    }
    let mut report = distribution_from_counts(&counts)?;
    report.refusals = if merge_refusals { 0 } else { refusals };
    report.violations = violations;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementResult {
    pub observed_agreement: f64,
    /// `None` when expected agreement is 1 (both raters used one and the same label).
    pub cohen_kappa: Option<f64>,
    pub free_marginal_kappa: f64,
    pub n_items: usize,
    pub n_categories: usize,
}

impl AgreementResult {
    pub fn kappa(&self) -> Result<f64, StatsError> {
        self.cohen_kappa.ok_or(StatsError::DegenerateAgreement)
    }
}

/// Cohen's kappa (rater marginals) and Randolph's free-marginal kappa
/// (uniform chance `1/n_categories`) for two label sequences.
pub fn cohen_kappa<T: Ord>(
    labels_a: &[T],
    labels_b: &[T],
    n_categories: usize,
) -> Result<AgreementResult, StatsError> {
    if labels_a.len() != labels_b.len() {
        return Err(StatsError::LengthMismatch(labels_a.len(), labels_b.len()));
    }
    if labels_a.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    let n = labels_a.len();
    let mut marg_a: BTreeMap<&T, usize> = BTreeMap::new();
    let mut marg_b: BTreeMap<&T, usize> = BTreeMap::new();
    let mut agree = 0usize;
    for (a, b) in labels_a.iter().zip(labels_b) {
        *marg_a.entry(a).or_default() += 1;
        *marg_b.entry(b).or_default() += 1;
        agree += usize::from(a == b);
    }
    let observed = marg_a.keys().chain(marg_b.keys()).collect::<std::collections::BTreeSet<_>>().len();
    if n_categories < 2 || observed > n_categories {
        return Err(StatsError::CategoryCount {
            declared: n_categories,
            observed,
        });
    }

    let nf = n as f64;
    let p_o = agree as f64 / nf;
    let chance_pairs: usize = marg_a
        .iter()
        .map(|(k, ca)| ca * marg_b.get(k).copied().unwrap_or(0))
        .sum();
    let cohen = if chance_pairs == n * n {
        None
    } else {
        let p_e = chance_pairs as f64 / (nf * nf);
        Some((p_o - p_e) / (1.0 - p_e))
    };
    let k = n_categories as f64;
    let free = (p_o - 1.0 / k) / (1.0 - 1.0 / k);
    Ok(AgreementResult {
        observed_agreement: p_o,
        cohen_kappa: cohen,
        free_marginal_kappa: free,
        n_items: n,
        n_categories,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum AgreementLevel {
    #[default]
    Category,
    Subtype,
}

/// Agreement between two label lists paired by position.
pub fn label_agreement(
    a: &[DescriptionLabel],
    b: &[DescriptionLabel],
    level: AgreementLevel,
) -> Result<AgreementResult, StatsError> {
    match level {
        AgreementLevel::Category => {
            let ca: Vec<Category> = a.iter().map(|l| l.category).collect();
            let cb: Vec<Category> = b.iter().map(|l| l.category).collect();
            cohen_kappa(&ca, &cb, Category::ALL.len())
        }
        AgreementLevel::Subtype => {
            let sa: Vec<Option<Subtype>> = a.iter().map(|l| l.subtype).collect();
            let sb: Vec<Option<Subtype>> = b.iter().map(|l| l.subtype).collect();
            cohen_kappa(&sa, &sb, Subtype::ALL.len() + 1)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
    Json,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Markdown => "md",
            ReportFormat::Json => "json",
        }
    }
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "md" | "markdown" | "markdown-table" => Ok(ReportFormat::Markdown),
            "json" => Ok(ReportFormat::Json),
            other => Err(format!("unknown report format {other:?}")),
        }
    }
}

fn category_heading(category: Category) -> &'static str {
    match category {
        Category::Instruction => "a. Instruction",
        Category::Example => "b. Example",
        Category::Unclear => "c. Unclear",
    }
}

fn fmt_kappa(k: Option<f64>) -> String {
    k.map_or_else(|| "undefined".to_string(), |k| format!("{k:.4}"))
}

fn similarity_markdown(s: &ScoreDistribution, out: &mut String) {
    out.push_str("| Similarity | Value |\n|---|---:|\n");
    let _ = writeln!(out, "| Pairs | {} |", s.count);
    let _ = writeln!(out, "| Mean F1 | {:.4} |", s.mean_4dp());
    let _ = writeln!(out, "| Min F1 | {:.4} |", s.min);
    let _ = writeln!(out, "| Max F1 | {:.4} |", s.max);
    out.push_str("\n| F1 bucket | Pairs |\n|---|---:|\n");
    for (i, count) in s.histogram.iter().enumerate() {
        let (lo, hi) = ScoreDistribution::bucket_bounds(i);
        let close = if i + 1 == s.histogram.len() { ']' } else { ')' };
        let _ = writeln!(out, "| [{lo:.2}, {hi:.2}{close} | {count} |");
    }
    if s.below_zero > 0 || s.any_negative_component {
        let _ = writeln!(
            out,
            "\nNegative similarity components occurred; {} pair(s) scored below 0.",
            s.below_zero
        );
    }
}

fn similarity_csv(s: &ScoreDistribution, out: &mut String) {
    let _ = writeln!(out, "similarity,Mean F1,{},{:.4}", s.count, s.mean_4dp());
    let _ = writeln!(out, "similarity,Min F1,,{:.4}", s.min);
    let _ = writeln!(out, "similarity,Max F1,,{:.4}", s.max);
    for (i, count) in s.histogram.iter().enumerate() {
        let (lo, _) = ScoreDistribution::bucket_bounds(i);
        let _ = writeln!(out, "histogram,{lo:.2}-{:.2},{count},", lo + BUCKET_WIDTH);
    }
}

fn markdown(
    report: &DistributionReport,
    agreement: Option<&AgreementResult>,
    similarity: Option<&ScoreDistribution>,
) -> String {
    let mut out = String::new();
    out.push_str("| Category | Qty | % |\n|---|---:|---:|\n");
    for row in &report.categories {
        let _ = writeln!(
            out,
            "| {} | {} | {}% |",
            category_heading(row.category),
            row.count,
            row.percent
        );
        for sub in &row.subtypes {
            let _ = writeln!(out, "| - {} | {} | {}% |", sub.subtype, sub.count, sub.percent);
        }
    }
    let _ = writeln!(out, "| Total | {} | 100.00% |", report.total);
    if report.refusals > 0 || report.violations > 0 {
        out.push('\n');
        let _ = writeln!(out, "Refusals (not in table): {}", report.refusals);
        let _ = writeln!(out, "Format violations (not in table): {}", report.violations);
    }
    if let Some(a) = agreement {
        out.push_str("\n| Agreement | Value |\n|---|---:|\n");
        let _ = writeln!(out, "| Items | {} |", a.n_items);
        let _ = writeln!(out, "| Categories | {} |", a.n_categories);
        let _ = writeln!(out, "| Observed agreement | {:.4} |", a.observed_agreement);
        let _ = writeln!(out, "| Cohen's kappa | {} |", fmt_kappa(a.cohen_kappa));
        let _ = writeln!(out, "| Free-marginal kappa | {:.4} |", a.free_marginal_kappa);
    }
    if let Some(s) = similarity {
        out.push('\n');
        similarity_markdown(s, &mut out);
    }
    out
}

fn csv_report(
    report: &DistributionReport,
    agreement: Option<&AgreementResult>,
    similarity: Option<&ScoreDistribution>,
) -> String {
    let mut out = String::from("section,name,count,percent\n");
    for row in &report.categories {
        let _ = writeln!(out, "category,{},{},{}", row.category, row.count, row.percent);
        for sub in &row.subtypes {
            let _ = writeln!(out, "subtype,{},{},{}", sub.subtype, sub.count, sub.percent);
        }
    }
    let _ = writeln!(out, "total,Total,{},100.00", report.total);
    let _ = writeln!(out, "extra,Refusals,{},", report.refusals);
    let _ = writeln!(out, "extra,Format violations,{},", report.violations);
    if let Some(a) = agreement {
        let _ = writeln!(out, "agreement,Items,{},", a.n_items);
        let _ = writeln!(out, "agreement,Observed agreement,,{:.4}", a.observed_agreement);
        let _ = writeln!(out, "agreement,Cohen's kappa,,{}", fmt_kappa(a.cohen_kappa));
        let _ = writeln!(out, "agreement,Free-marginal kappa,,{:.4}", a.free_marginal_kappa);
    }
    if let Some(s) = similarity {
        similarity_csv(s, &mut out);
    }
    out
}

#[derive(Serialize)]
struct JsonReport<'a> {
    distribution: &'a DistributionReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    agreement: Option<&'a AgreementResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    similarity: Option<&'a ScoreDistribution>,
}

/// Renders a report. Sections without data are left out.
pub fn emit_report(
    report: &DistributionReport,
    agreement: Option<&AgreementResult>,
    similarity: Option<&ScoreDistribution>,
    format: ReportFormat,
) -> String {
    match format {
        ReportFormat::Markdown => markdown(report, agreement, similarity),
        ReportFormat::Csv => csv_report(report, agreement, similarity),
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(&JsonReport {
                distribution: report,
                agreement,
                similarity,
            })
            .expect("report serialises");
            s.push('\n');
            s
        }
    }
}

/// Renders agreement on its own.
pub fn emit_agreement(agreement: &AgreementResult, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(agreement).expect("agreement serialises");
            s.push('\n');
            s
        }
        ReportFormat::Csv => format!(
            "n_items,n_categories,observed_agreement,cohen_kappa,free_marginal_kappa\n{},{},{:.4},{},{:.4}\n",
            agreement.n_items,
            agreement.n_categories,
            agreement.observed_agreement,
            fmt_kappa(agreement.cohen_kappa),
            agreement.free_marginal_kappa
        ),
        ReportFormat::Markdown => format!(
            "| Agreement | Value |\n|---|---:|\n| Items | {} |\n| Categories | {} |\n| Observed agreement | {:.4} |\n| Cohen's kappa | {} |\n| Free-marginal kappa | {:.4} |\n",
            agreement.n_items,
            agreement.n_categories,
            agreement.observed_agreement,
            fmt_kappa(agreement.cohen_kappa),
            agreement.free_marginal_kappa
        ),
    }
}

/// Renders a similarity distribution on its own, with the divergent pair count.
pub fn emit_similarity(similarity: &ScoreDistribution, divergent: usize, format: ReportFormat) -> String {
    match format {
        ReportFormat::Markdown => {
            let mut out = String::new();
            similarity_markdown(similarity, &mut out);
            let _ = writeln!(out, "\nDivergent pairs: {divergent}");
            out
        }
        ReportFormat::Csv => {
            let mut out = String::from("section,name,count,value\n");
            similarity_csv(similarity, &mut out);
            let _ = writeln!(out, "divergent,Divergent pairs,{divergent},");
            out
        }
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(&serde_json::json!({
                "similarity": similarity,
                "divergent": divergent,
            }))
            .expect("similarity serialises");
            s.push('\n');
            s
        }
    }
}
