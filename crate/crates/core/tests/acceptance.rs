//! Acceptance checks. Run with `cargo test --test acceptance`; prints one
//! PASS/FAIL line per criterion and exits non-zero if any fails.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use sha2::{Digest, Sha256};

use snipdoc::corpus::{parse_readme, ExtractWarning, SampleSpec};
use snipdoc::pipelines::{ClassificationEntry, ClassificationStatus, GenerationOutcome, DIVERGENCE_THRESHOLD};
use snipdoc::prompting::{build_classification_prompt, CLASSIFICATION_TEMPLATE};
use snipdoc::similarity::{bertscore, TokenEmbeddingSet};
use snipdoc::stats::{cohen_kappa, distribution_from_counts, LabelCounts};
use snipdoc::taxonomy::{parse_llm_classification, Category, ParseOutcome, Subtype, REFUSAL_SENTENCE};
use snipdoc::{DescriptionLabel, SnippetRecord};

type Check = Result<String, String>;
type CheckFn = fn() -> Check;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn sample_size_formula() -> Check {
    let spec = SampleSpec::new(1_024_579, 0.95, 0.05, 0);
    let started = Instant::now();
    let n = spec.sample_size().map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    ensure(n == 385, || format!("got {n}, expected 385"))?;
    ensure(elapsed < Duration::from_millis(1), || format!("took {elapsed:?}"))?;
    Ok(format!("n = {n} in {elapsed:?}"))
}

fn distribution_fidelity() -> Check {
    let tables: [([u64; 6], [&str; 8]); 2] = [
        (
            [14, 162, 38, 157, 27, 2],
            ["3.50", "40.50", "9.50", "39.25", "6.75", "0.50", "44.00", "55.50"],
        ),
        (
            [55, 26, 36, 140, 143, 0],
            ["13.75", "6.50", "9.00", "35.00", "35.75", "0.00", "20.25", "79.75"],
        ),
    ];
    for (counts, want) in tables {
        let report = distribution_from_counts(&LabelCounts {
            installation_instruction: counts[0],
            usage_instruction: counts[1],
            usage_example: counts[2],
            feature_explanation: counts[3],
            code_example: counts[4],
            unclear: counts[5],
        })
        .map_err(|e| e.to_string())?;
        let got = [
            report.subtype(Subtype::InstallationInstruction).percent.to_string(),
            report.subtype(Subtype::UsageInstruction).percent.to_string(),
            report.subtype(Subtype::UsageExample).percent.to_string(),
            report.subtype(Subtype::FeatureExplanation).percent.to_string(),
            report.subtype(Subtype::CodeExample).percent.to_string(),
            report.category(Category::Unclear).percent.to_string(),
            report.category(Category::Instruction).percent.to_string(),
            report.category(Category::Example).percent.to_string(),
        ];
        ensure(got == want, || format!("counts {counts:?}: got {got:?}, expected {want:?}"))?;
    }
    Ok("manual and model count sets match to 2 decimals".into())
}

const GOLDEN_SHA256: &str = "81ba480afd0c117a2688955ff6fa50ecd69420d35e592848755fe5e5bdded76c";

fn prompt_golden_file() -> Check {
    let golden = std::fs::read(Path::new(env!("CARGO_MANIFEST_DIR")).join("assets/classification_prompt.txt"))
        .map_err(|e| e.to_string())?;
    let record = SnippetRecord {
        package_name: "p".into(),
        snippet_id: "p:README.md:0".into(),
        language_hint: Some("js".into()),
        code: "load('a.mp3')".into(),
        description: Some("Load an audio file.".into()),
        source_path: "README.md".into(),
        block_index: 0,
    };
    let bundle = build_classification_prompt(&record).map_err(|e| e.to_string())?;
    ensure(bundle.system_text.as_bytes() == golden.as_slice(), || {
        "system text differs from the golden file".into()
    })?;
    ensure(CLASSIFICATION_TEMPLATE.as_bytes() == golden.as_slice(), || "template constant drifted".into())?;
    let digest = hex::encode(Sha256::digest(bundle.system_text.as_bytes()));
    ensure(digest == GOLDEN_SHA256, || format!("sha256 {digest}"))?;
    Ok(format!("sha256 {}...", &digest[..12]))
}

const CANONICAL_ANSWER: &str = "Type: Instruction\nOption: Installation instruction\nExample: guide to install and configure software or tools on a computer, including download steps, system requirements, installation, configuration, and verification.";

fn parser() -> Check {
    match parse_llm_classification(CANONICAL_ANSWER, "id") {
        ParseOutcome::Label { label, .. } => ensure(
            label.category == Category::Instruction && label.subtype == Some(Subtype::InstallationInstruction),
            || format!("canonical answer parsed as {label:?}"),
        )?,
        other => return Err(format!("canonical answer: {other:?}")),
    }
    ensure(parse_llm_classification(REFUSAL_SENTENCE, "id") == ParseOutcome::Refusal, || {
        "refusal sentence not recognised".into()
    })?;
    let text = std::fs::read_to_string(fixtures().join("adversarial_answers.json")).map_err(|e| e.to_string())?;
    let answers: Vec<String> = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    ensure(answers.len() == 20, || format!("{} adversarial fixtures", answers.len()))?;
    for (i, answer) in answers.iter().enumerate() {
        let outcome = std::panic::catch_unwind(|| parse_llm_classification(answer, "id"))
            .map_err(|_| format!("fixture {i} panicked"))?;
        ensure(matches!(outcome, ParseOutcome::FormatViolation { .. }), || {
            format!("fixture {i} gave {outcome:?}")
        })?;
    }
    Ok("canonical, refusal and 20 adversarial answers".into())
}

fn oracle_kappa(a: &[u8], b: &[u8], k: usize) -> Option<f64> {
    let n = a.len() as f64;
    let mut m = vec![vec![0.0f64; k]; k];
    for (&x, &y) in a.iter().zip(b) {
        m[x as usize][y as usize] += 1.0;
    }
    let po = (0..k).map(|i| m[i][i]).sum::<f64>() / n;
    let pe = (0..k)
        .map(|i| {
            let row: f64 = m[i].iter().sum();
            let col: f64 = (0..k).map(|j| m[j][i]).sum();
            row * col
        })
        .sum::<f64>()
        / (n * n);
    (pe != 1.0).then(|| (po - pe) / (1.0 - pe))
}

fn decode(mut code: usize, len: usize) -> Vec<u8> {
    (0..len)
        .map(|_| {
            let d = (code % 3) as u8;
            code /= 3;
            d
        })
        .collect()
}

fn kappa_oracle() -> Check {
    let started = Instant::now();
    let mut pairs = 0usize;
    for len in 1..=5u32 {
        let space = 3usize.pow(len);
        for ca in 0..space {
            let a = decode(ca, len as usize);
            for cb in 0..space {
                let b = decode(cb, len as usize);
                let got = cohen_kappa(&a, &b, 3).map_err(|e| e.to_string())?;
                let want = oracle_kappa(&a, &b, 3);
                let ok = match (got.cohen_kappa, want) {
                    (Some(g), Some(w)) => (g - w).abs() <= 1e-12,
                    (None, None) => true,
                    _ => false,
                };
                ensure(ok, || format!("{a:?} vs {b:?}: {:?} != {want:?}", got.cohen_kappa))?;
                let po = a.iter().zip(&b).filter(|(x, y)| x == y).count() as f64 / len as f64;
                let free = (po - 1.0 / 3.0) / (1.0 - 1.0 / 3.0);
                ensure((got.free_marginal_kappa - free).abs() <= 1e-12, || {
                    format!("free-marginal {a:?} vs {b:?}")
                })?;
                pairs += 1;
            }
        }
    }
    let elapsed = started.elapsed();
    ensure(elapsed < Duration::from_secs(30), || format!("took {elapsed:?}"))?;
    Ok(format!("{pairs} pairs in {elapsed:.2?}"))
}

fn random_set(rng: &mut ChaCha8Rng, dim: usize) -> TokenEmbeddingSet {
    let len = rng.gen_range(1..=8);
    let tokens = (0..len).map(|i| format!("t{i}")).collect();
    let vectors = (0..len)
        .map(|_| loop {
            let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            if v.iter().any(|&x| x != 0.0) {
                break v;
            }
        })
        .collect();
    TokenEmbeddingSet::new(tokens, vectors).expect("valid set")
}

fn oracle_cos(u: &[f64], v: &[f64]) -> f64 {
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    (dot / (nu * nv)).clamp(-1.0, 1.0)
}

fn oracle_bertscore(c: &TokenEmbeddingSet, r: &TokenEmbeddingSet) -> (f64, f64, f64) {
    let sims: Vec<Vec<f64>> = c
        .vectors()
        .iter()
        .map(|u| r.vectors().iter().map(|v| oracle_cos(u, v)).collect())
        .collect();
    let p = sims
        .iter()
        .map(|row| row.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
        .sum::<f64>()
        / c.len() as f64;
    let rec = (0..r.len())
        .map(|j| sims.iter().map(|row| row[j]).fold(f64::NEG_INFINITY, f64::max))
        .sum::<f64>()
        / r.len() as f64;
    let f = if p + rec == 0.0 { 0.0 } else { 2.0 * p * rec / (p + rec) };
    (p, rec, f)
}

fn similarity_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    let mut ill_conditioned = 0;
    for i in 0..1000 {
        let dim = rng.gen_range(2..=16);
        let c = random_set(&mut rng, dim);
        let r = random_set(&mut rng, dim);
        let got = bertscore(&c, &r).map_err(|e| e.to_string())?;
        let (p, rec, f) = oracle_bertscore(&c, &r);
        // 2PR/(P+R) amplifies input rounding by this factor when P and R nearly cancel
        let condition = ((p * p + rec * rec) / ((p + rec) * (p + rec))).max(1.0);
        if condition > 1.0e3 {
            ill_conditioned += 1;
        }
        ensure(
            (got.precision - p).abs() <= 1e-12
                && (got.recall - rec).abs() <= 1e-12
                && (got.f1 - f).abs() <= 1e-12 * condition,
            || format!("instance {i}: {got:?} vs ({p}, {rec}, {f})"),
        )?;
        let same = bertscore(&c, &c).map_err(|e| e.to_string())?;
        ensure((same.f1 - 1.0).abs() <= 1e-9, || format!("instance {i}: identity f1 {}", same.f1))?;
    }
    for n in 1..=8 {
        let dim = 2 * n;
        let one_hot = |k: usize| {
            let mut v = vec![0.0; dim];
            v[k] = 1.0;
            v
        };
        let names = |p: &str| (0..n).map(|i| format!("{p}{i}")).collect::<Vec<_>>();
        let c = TokenEmbeddingSet::new(names("a"), (0..n).map(one_hot).collect()).map_err(|e| e.to_string())?;
        let r = TokenEmbeddingSet::new(names("b"), (n..2 * n).map(one_hot).collect()).map_err(|e| e.to_string())?;
        let s = bertscore(&c, &r).map_err(|e| e.to_string())?;
        ensure(s.precision == 0.0 && s.recall == 0.0 && s.f1 == 0.0, || format!("orthogonal n={n}: {s:?}"))?;
    }
    Ok(format!(
        "1000 random instances ({ill_conditioned} with P+R near 0, F1 tolerance scaled), identity and orthogonal cases"
    ))
}

fn similarity_properties() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for i in 0..1000 {
        let dim = rng.gen_range(2..=16);
        let c = random_set(&mut rng, dim);
        let r = random_set(&mut rng, dim);
        let ab = bertscore(&c, &r).map_err(|e| e.to_string())?;
        let ba = bertscore(&r, &c).map_err(|e| e.to_string())?;
        ensure(
            (ab.precision - ba.recall).abs() <= 1e-12
                && (ab.recall - ba.precision).abs() <= 1e-12
                && (ab.f1 - ba.f1).abs() <= 1e-12,
            || format!("instance {i}: swap {ab:?} vs {ba:?}"),
        )?;
        let shuffle = |set: &TokenEmbeddingSet, rng: &mut ChaCha8Rng| {
            let mut order: Vec<usize> = (0..set.len()).collect();
            order.shuffle(rng);
            TokenEmbeddingSet::new(
                order.iter().map(|&k| set.tokens()[k].clone()).collect(),
                order.iter().map(|&k| set.vectors()[k].clone()).collect(),
            )
            .expect("valid set")
        };
        let pc = shuffle(&c, &mut rng);
        let pr = shuffle(&r, &mut rng);
        let perm = bertscore(&pc, &pr).map_err(|e| e.to_string())?;
        ensure(
            (ab.precision - perm.precision).abs() <= 1e-12
                && (ab.recall - perm.recall).abs() <= 1e-12
                && (ab.f1 - perm.f1).abs() <= 1e-12,
            || format!("instance {i}: permutation {ab:?} vs {perm:?}"),
        )?;
    }
    Ok("swap symmetry and permutation invariance on 1000 instances".into())
}

fn snipdoc(args: &[&str]) -> Result<(i32, String), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_snipdoc"))
        .args(args)
        .env_remove("SNIPDOC_ENDPOINT")
        .env_remove("SNIPDOC_MODEL")
        .output()
        .map_err(|e| e.to_string())?;
    let code = out.status.code().unwrap_or(-1);
    Ok((code, String::from_utf8_lossy(&out.stderr).into_owned()))
}

fn run_ok(args: &[&str]) -> Result<(), String> {
    let (code, stderr) = snipdoc(args)?;
    ensure(code == 0, || format!("`snipdoc {}` exited {code}: {stderr}", args.join(" ")))
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| format!("{}: {e}", path.display())))
        .collect()
}

/// Runs classify, generate, score and report against the mock into `dir`.
fn mock_pipeline(dir: &Path) -> Result<(), String> {
    let fx = fixtures();
    let corpus = fx.join("e2e_corpus.jsonl");
    let backend = format!("mock:{}", fx.join("mock_backend.json").display());
    let config = fx.join("fast.toml");
    let s = |p: &Path| p.display().to_string();
    let common = ["--backend", backend.as_str(), "--config", &s(&config)];
    let with = |head: &[&str]| -> Vec<String> {
        head.iter().chain(common.iter()).map(|s| s.to_string()).collect()
    };
    let call = |args: Vec<String>| run_ok(&args.iter().map(String::as_str).collect::<Vec<_>>());

    call(with(&["classify", &s(&corpus), "--out-dir", &s(&dir.join("classify"))]))?;
    call(with(&["generate", &s(&corpus), "--out-dir", &s(&dir.join("generate"))]))?;
    call(with(&[
        "score",
        &s(&corpus),
        "--generations",
        &s(&dir.join("generate/generations.jsonl")),
        "--out-dir",
        &s(&dir.join("score")),
        "--classify-both",
    ]))?;
    call(
        [
            "report",
            "--labels",
            &s(&dir.join("classify/labels.jsonl")),
            "--classifications",
            &s(&dir.join("classify/classifications.jsonl")),
            "--outcomes",
            &s(&dir.join("score/outcomes.jsonl")),
            "--out-dir",
            &s(&dir.join("report")),
            "--config",
            &s(&config),
        ]
        .iter()
        .map(|s| s.to_string())
        .collect(),
    )
}

fn end_to_end() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let started = Instant::now();
    mock_pipeline(tmp.path())?;
    let elapsed = started.elapsed();

    let corpus: Vec<SnippetRecord> = read_jsonl(&fixtures().join("e2e_corpus.jsonl"))?;
    let entries: Vec<ClassificationEntry> = read_jsonl(&tmp.path().join("classify/classifications.jsonl"))?;
    let labels: Vec<DescriptionLabel> = read_jsonl(&tmp.path().join("classify/labels.jsonl"))?;
    let mut seen: HashMap<&str, usize> = HashMap::new();
    let (mut n_labels, mut n_refused, mut n_violations) = (0, 0, 0);
    for e in &entries {
        *seen.entry(e.snippet_id.as_str()).or_default() += 1;
        match e.status {
            ClassificationStatus::Labeled { .. } => n_labels += 1,
            ClassificationStatus::Refused => n_refused += 1,
            ClassificationStatus::Violation { .. } => n_violations += 1,
        }
    }
    ensure(corpus.len() == 20, || format!("{} fixture snippets", corpus.len()))?;
    for r in &corpus {
        ensure(seen.get(r.snippet_id.as_str()) == Some(&1), || {
            format!("{} seen {:?} times", r.snippet_id, seen.get(r.snippet_id.as_str()))
        })?;
    }
    ensure(seen.len() == corpus.len(), || "unexpected ids in output".into())?;
    ensure(labels.len() == n_labels, || "labels.jsonl disagrees with classifications".into())?;
    ensure(n_refused >= 1 && n_violations >= 1, || "fixture should exercise refusal and violation".into())?;

    let outcomes: Vec<GenerationOutcome> = read_jsonl(&tmp.path().join("score/outcomes.jsonl"))?;
    ensure(outcomes.len() == corpus.len(), || format!("{} outcomes", outcomes.len()))?;
    let mut divergent = 0;
    for o in &outcomes {
        let expected = match (&o.similarity, &o.original_label, &o.generated_label) {
            (Some(s), Some(a), Some(b)) => s.f1 < DIVERGENCE_THRESHOLD && a.category != b.category,
            _ => false,
        };
        ensure(o.divergent == expected, || format!("{}: divergent flag {}", o.snippet_id, o.divergent))?;
        divergent += o.divergent as usize;
    }
    ensure(divergent > 0, || "fixture should produce at least one divergent pair".into())?;
    for f in ["report.md", "report.csv", "report.json", "run_metadata.json"] {
        ensure(tmp.path().join("report").join(f).is_file(), || format!("missing report/{f}"))?;
    }
    ensure(elapsed < Duration::from_secs(5), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{n_labels} labels, {n_refused} refused, {n_violations} violation(s), {divergent} divergent in {elapsed:.2?}"
    ))
}

#[derive(Debug, Deserialize, PartialEq)]
struct ExpectedPair {
    block_index: usize,
    language_hint: Option<String>,
    code: String,
    description: Option<String>,
}

fn extraction_corpus() -> Check {
    let dir = fixtures().join("readmes");
    let text = std::fs::read_to_string(dir.join("expected.json")).map_err(|e| e.to_string())?;
    let expected: BTreeMap<String, Vec<ExpectedPair>> = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    ensure(expected.len() == 12, || format!("{} fixtures", expected.len()))?;
    let mut pairs = 0;
    for (file, want) in &expected {
        let md = std::fs::read_to_string(dir.join(file)).map_err(|e| format!("{file}: {e}"))?;
        let got: Vec<ExpectedPair> = parse_readme(&md, file, "fixture")
            .records
            .into_iter()
            .map(|r| ExpectedPair {
                block_index: r.block_index,
                language_hint: r.language_hint,
                code: r.code,
                description: r.description,
            })
            .collect();
        ensure(&got == want, || format!("{file}: got {got:#?}"))?;
        pairs += want.len();
    }
    let md = std::fs::read_to_string(dir.join("04_unterminated.md")).map_err(|e| e.to_string())?;
    let warnings = parse_readme(&md, "04_unterminated.md", "fixture").warnings;
    ensure(
        warnings
            .iter()
            .any(|w| matches!(w, ExtractWarning::UnterminatedFence { block_index: 1, .. })),
        || format!("unterminated fence not flagged: {warnings:?}"),
    )?;
    Ok(format!("12 files, {pairs} pairings, 100% match"))
}

fn files_under(root: &Path) -> Result<BTreeMap<PathBuf, Vec<u8>>, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).map_err(|e| e.to_string())? {
            let path = entry.map_err(|e| e.to_string())?.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let bytes = std::fs::read(&path).map_err(|e| e.to_string())?;
                out.insert(path.strip_prefix(root).expect("under root").to_path_buf(), bytes);
            }
        }
    }
    Ok(out)
}

// run metadata carries wall-clock timestamps and the run log carries latencies
const VOLATILE: [&str; 2] = ["run_metadata.json", "run_log.jsonl"];

fn determinism() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let corpus = fixtures().join("e2e_corpus.jsonl");
    let mut snapshots = Vec::new();
    for run in ["a", "b"] {
        let dir = tmp.path().join(run);
        std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
        run_ok(&[
            "sample",
            &corpus.display().to_string(),
            "--out",
            &dir.join("sample.jsonl").display().to_string(),
            "--seed",
            "42",
            "--margin",
            "0.2",
        ])?;
        run_ok(&[
            "extract",
            &fixtures().join("extract_tree").display().to_string(),
            "--out",
            &dir.join("extracted.jsonl").display().to_string(),
        ])?;
        mock_pipeline(&dir)?;
        snapshots.push(files_under(&dir)?);
    }
    let (a, b) = (&snapshots[0], &snapshots[1]);
    let names: HashSet<_> = a.keys().chain(b.keys()).collect();
    let mut compared = 0;
    for name in names {
        if VOLATILE.iter().any(|v| name.ends_with(v)) {
            continue;
        }
        ensure(a.get(name) == b.get(name), || format!("{} differs between runs", name.display()))?;
        compared += 1;
    }
    Ok(format!("{compared} output files byte-identical"))
}

fn main() {
    let checks: [(&str, CheckFn); 10] = [
        ("sample size formula", sample_size_formula),
        ("distribution fidelity", distribution_fidelity),
        ("prompt golden file", prompt_golden_file),
        ("classification parser", parser),
        ("kappa oracle", kappa_oracle),
        ("similarity oracle", similarity_oracle),
        ("similarity properties", similarity_properties),
        ("end-to-end mock run", end_to_end),
        ("extraction corpus", extraction_corpus),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let result = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        match result {
            Ok(detail) => println!("[PASS] {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("[FAIL] {name}: {why}");
            }
        }
    }
    println!("\n{} of {} acceptance criteria passed", checks.len() - failed, checks.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
