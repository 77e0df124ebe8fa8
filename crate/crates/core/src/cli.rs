// SPDX-License-Identifier: MIT OR Apache-2.0

//! Command-line front end. Exit codes: 0 success, 1 validation or runtime
//! failure, 2 usage error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::causal::{self, build_rep_pool, forced_choice_eval, theorem1_check, DoFactorization, ForcedChoiceResult};
use crate::concept::{ConceptAnnotator, Rep};
use crate::counterfactual::{build_counterfactual, check_decomposition, compute_metrics, DECOMPOSITION_TOL};
use crate::distribution::{build_unigram_exact, build_unigram_mc, Side, TableMode, UnigramTable};
use crate::error::{Error, Result};
use crate::geometry::{fit_guarded_projector, subspace_angle, FitMode, LabeledRepSet, Projector};
use crate::io::{
    self, correlational_section, decomposition_section, fit_section, forced_choice_section, metrics_section, read_lm_document,
    read_projector_document, read_records, tagged, theorem1_section, write_json, write_record_file, LmDocument,
    ProjectorDocument, RepRecord, RepRecordFile, RunReport, Unit, SCHEMA_VERSION,
};
use crate::lm::{
    build_causal_toy, build_counterexample, sample_corpus, AnyLm, CausalToyConfig, CausalToyLm, LanguageModel, PriorKind,
    SamplerConfig, ToyLm, DEFAULT_ENUMERATION_BUDGET,
};

#[derive(Debug, Parser)]
#[command(name = "concept-subspace", version, about = "Counterfactual concept-subspace metrics for toy language models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a preset model, a sampled record file, and its oracle projector.
    BuildToy(BuildToyArgs),
    /// Fit a concept eraser to a record file.
    FitProjector(FitArgs),
    /// Compute information metrics and ratios for a projector.
    Metrics(MetricsArgs),
    /// Forced-choice evaluation with do-interventions.
    DoEval(DoEvalArgs),
    /// Check that the four interventional quantities vanish for a causal toy.
    VerifyTheorem1(Theorem1Args),
    /// Check the additive decomposition of the counterfactual concept information.
    VerifyDecomposition(MetricsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Preset {
    Counterexample,
    Causal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Exact,
    Mc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PriorArg {
    Uniform,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FitArg {
    Orthogonal,
    Oblique,
}

#[derive(Debug, Clone, Args)]
struct CausalArgs {
    /// Representation dimension of the causal toy.
    #[arg(long, default_value_t = 4)]
    dim: usize,
    /// Number of concept values of the causal toy.
    #[arg(long, default_value_t = 2)]
    concepts: usize,
    #[arg(long, default_value_t = 3)]
    lemmas: usize,
    /// Number of distinct context components.
    #[arg(long, default_value_t = 4)]
    contexts: usize,
    #[arg(long, default_value_t = 2)]
    max_len: usize,
    #[arg(long, value_enum, default_value_t = PriorArg::Uniform)]
    prior: PriorArg,
}

#[derive(Debug, Clone, Args)]
struct SamplingArgs {
    /// Number of sampled strings.
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Nucleus mass; 1 samples from the full distribution.
    #[arg(long, default_value_t = 1.0)]
    top_p: f64,
}

#[derive(Debug, Clone, Args)]
struct ModelSource {
    #[arg(long, value_enum, conflicts_with_all = ["lm", "records"])]
    preset: Option<Preset>,
    /// Model document written by `build-toy`.
    #[arg(long, conflicts_with = "records")]
    lm: Option<PathBuf>,
    /// Record file; without a model head only correlational metrics are available.
    #[arg(long)]
    records: Option<PathBuf>,
    #[command(flatten)]
    causal: CausalArgs,
}

#[derive(Debug, Clone, Args)]
struct BuildToyArgs {
    #[arg(long, value_enum)]
    preset: Preset,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    sampling: SamplingArgs,
    #[command(flatten)]
    causal: CausalArgs,
}

#[derive(Debug, Clone, Args)]
struct FitArgs {
    #[arg(long)]
    records: PathBuf,
    #[arg(long, value_enum, default_value_t = FitArg::Orthogonal)]
    fit_mode: FitArg,
    /// Projector document to report the subspace angle against.
    #[arg(long)]
    compare: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
struct MetricsArgs {
    #[command(flatten)]
    source: ModelSource,
    /// `oracle` or a projector document.
    #[arg(long, default_value = "oracle")]
    projector: String,
    #[arg(long, value_enum, default_value_t = Mode::Exact)]
    mode: Mode,
    #[command(flatten)]
    sampling: SamplingArgs,
    /// Threshold in bits for the ε-criteria.
    #[arg(long, default_value_t = 0.01)]
    epsilon: f64,
    /// Condition on substantive concept values.
    #[arg(long, action = ArgAction::Set, default_value_t = true)]
    drop_na: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
struct DoEvalArgs {
    #[command(flatten)]
    source: ModelSource,
    #[arg(long, default_value = "oracle")]
    projector: String,
    /// Strings sampled to fill the representation pools.
    #[command(flatten)]
    sampling: SamplingArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
struct Theorem1Args {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    causal: CausalArgs,
    /// `oracle` or a projector document.
    #[arg(long, default_value = "oracle")]
    projector: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses `args` and runs the command. Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(cmd: Command) -> Result<i32> {
    let start = Instant::now();
    match cmd {
        Command::BuildToy(a) => build_toy(&a),
        Command::FitProjector(a) => fit_projector(&a, start),
        Command::Metrics(a) => metrics(&a, start, false),
        Command::VerifyDecomposition(a) => metrics(&a, start, true),
        Command::DoEval(a) => do_eval(&a, start),
        Command::VerifyTheorem1(a) => verify_theorem1(&a, start),
    }
}

fn causal_config(a: &CausalArgs, seed: u64) -> CausalToyConfig {
    CausalToyConfig {
        dim: a.dim,
        n_concepts: a.concepts,
        n_lemmas: a.lemmas,
        n_contexts: a.contexts,
        max_len: a.max_len,
        prior: match a.prior {
            PriorArg::Uniform => PriorKind::Uniform,
            PriorArg::Random => PriorKind::Random,
        },
        seed,
    }
}

fn causal_echo(a: &CausalArgs) -> Value {
    json!({
        "dim": tagged(a.dim, Unit::Count),
        "concepts": tagged(a.concepts, Unit::Count),
        "lemmas": tagged(a.lemmas, Unit::Count),
        "contexts": tagged(a.contexts, Unit::Count),
        "max_len": tagged(a.max_len, Unit::Count),
        "prior": match a.prior { PriorArg::Uniform => "uniform", PriorArg::Random => "random" },
    })
}

fn sampling_echo(s: &SamplingArgs) -> Value {
    json!({
        "samples": tagged(s.samples, Unit::Count),
        "seed": tagged(s.seed, Unit::Seed),
        "top_p": tagged(s.top_p, Unit::Probability),
    })
}

fn check_sampling(s: &SamplingArgs) -> Result<()> {
    if s.samples == 0 {
        return Err(Error::domain("--samples must be positive"));
    }
    if !(s.top_p > 0.0 && s.top_p <= 1.0) {
        return Err(Error::domain("--top-p must lie in (0, 1]"));
    }
    Ok(())
}

fn preset_document(preset: Preset, causal: &CausalArgs, seed: u64) -> Result<LmDocument> {
    Ok(match preset {
        Preset::Counterexample => {
            let ce = build_counterexample()?;
            LmDocument {
                schema_version: SCHEMA_VERSION,
                lm: AnyLm::Plain(ce.lm),
                annotator: ce.annotator,
                ground_truth: Some(ce.ground_truth),
                items: ce.items,
            }
        }
        Preset::Causal => {
            let lm = build_causal_toy(&causal_config(causal, seed))?;
            let items = if lm.concepts().substantive().count() >= 2 {
                causal::causal_items(&lm)?
            } else {
                Vec::new()
            };
            LmDocument {
                schema_version: SCHEMA_VERSION,
                annotator: lm.annotator().clone(),
                ground_truth: Some(lm.ground_truth().clone()),
                lm: AnyLm::Causal(lm),
                items,
            }
        }
    })
}

fn load_source(src: &ModelSource, seed: u64) -> Result<Option<LmDocument>> {
    match (&src.preset, &src.lm) {
        (Some(p), _) => Ok(Some(preset_document(*p, &src.causal, seed)?)),
        (None, Some(path)) => Ok(Some(read_lm_document(path)?)),
        (None, None) if src.records.is_some() => Ok(None),
        _ => Err(Error::domain("one of --preset, --lm, or --records is required")),
    }
}

fn source_echo(src: &ModelSource) -> Value {
    json!({
        "preset": src.preset.map(|p| match p { Preset::Counterexample => "counterexample", Preset::Causal => "causal" }),
        "lm": src.lm.as_ref().map(|p| p.display().to_string()),
        "records": src.records.as_ref().map(|p| p.display().to_string()),
        "causal": if src.preset == Some(Preset::Causal) { causal_echo(&src.causal) } else { Value::Null },
    })
}

fn resolve_projector(spec: &str, doc: Option<&LmDocument>, dim: usize) -> Result<(Projector, String)> {
    let p = if spec == "oracle" {
        doc.and_then(|d| d.ground_truth.clone())
            .ok_or_else(|| Error::domain("no oracle projector available for this source"))?
    } else {
        read_projector_document(Path::new(spec))?.require_projector()?.clone()
    };
    if p.dim() != dim {
        return Err(Error::DimensionMismatch {
            what: "projector vs representations",
            expected: dim,
            got: p.dim(),
        });
    }
    Ok((p, spec.to_string()))
}

fn emit(report: &mut RunReport, out: Option<&Path>, start: Instant) -> Result<()> {
    report.set_elapsed_ms(start.elapsed().as_secs_f64() * 1e3);
    let s = report.to_json_string()?;
    match out {
        Some(path) => std::fs::write(path, s).map_err(|e| Error::io(path, e)),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(s.as_bytes()).map_err(|e| Error::io("<stdout>", e))
        }
    }
}

fn build_toy(a: &BuildToyArgs) -> Result<i32> {
    check_sampling(&a.sampling)?;
    let doc = preset_document(a.preset, &a.causal, a.sampling.seed)?;
    let lm = doc.lm.as_dyn();
    let sample = sample_corpus(
        lm,
        &doc.annotator,
        a.sampling.samples,
        SamplerConfig { top_p: a.sampling.top_p },
        a.sampling.seed,
    )?;
    let records = RepRecordFile {
        dim: lm.dim(),
        vocab: lm.vocab().clone(),
        concepts: doc.annotator.concepts().clone(),
        records: sample
            .records
            .iter()
            .map(|r| RepRecord {
                word: r.word,
                concept: r.concept,
                rep: r.rep.as_slice().iter().map(|&v| v as f32).collect(),
            })
            .collect(),
    };
    let projector = ProjectorDocument::oracle(doc.ground_truth.clone().expect("presets have a ground truth"));
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    write_json(&a.out.join("lm.json"), &doc)?;
    write_record_file(&a.out.join("records.cgrp"), &records)?;
    write_json(&a.out.join("projector.json"), &projector)?;
    println!(
        "wrote {} ({} records, d = {}), lm.json, projector.json",
        a.out.join("records.cgrp").display(),
        records.records.len(),
        records.dim
    );
    Ok(0)
}

fn records_to_reps(file: &RepRecordFile) -> Vec<Rep> {
    file.records
        .iter()
        .map(|r| Rep::new(r.rep.iter().map(|&v| f64::from(v)).collect()).expect("finite by validation"))
        .collect()
}

fn fit_projector(a: &FitArgs, start: Instant) -> Result<i32> {
    let file = read_records(&a.records)?;
    let compare = a.compare.as_deref().map(read_projector_document).transpose()?;
    let concepts = &file.concepts;
    let classes: Vec<usize> = concepts.substantive().collect();
    let mut reps = Vec::new();
    let mut labels = Vec::new();
    for (r, rep) in file.records.iter().zip(records_to_reps(&file)) {
        if let Some(k) = classes.iter().position(|&c| c == r.concept) {
            reps.push(rep);
            labels.push(k);
        }
    }
    let data = LabeledRepSet::new(&reps, labels, classes.len())?;
    let mode = match a.fit_mode {
        FitArg::Orthogonal => FitMode::OrthogonalGuarded,
        FitArg::Oblique => FitMode::LeaceOblique,
    };
    let fit = fit_guarded_projector(&data, mode)?;
    let angle = match (&compare, fit.eraser.as_projector()) {
        (Some(doc), Some(p)) => Some(subspace_angle(p, doc.require_projector()?)?),
        _ => None,
    };
    let doc = ProjectorDocument::fitted(&fit.eraser, fit.stats.clone());
    let mut report = RunReport::new(
        "fit-projector",
        "records",
        json!({
            "records": a.records.display().to_string(),
            "fit_mode": mode,
            "compare": a.compare.as_ref().map(|p| p.display().to_string()),
        }),
        json!({}),
    );
    report.section("fit", fit_section(&fit.stats, angle));
    report.notes.push("record values are float32 and were widened to float64".into());
    match &a.out {
        Some(path) => {
            write_json(path, &doc)?;
            emit(&mut report, None, start)?;
        }
        None => {
            let mut s = serde_json::to_string_pretty(&doc)?;
            s.push('\n');
            print!("{s}");
        }
    }
    Ok(0)
}

fn build_table(doc: &LmDocument, mode: Mode, s: &SamplingArgs) -> Result<UnigramTable> {
    let lm = doc.lm.as_dyn();
    match mode {
        Mode::Exact => build_unigram_exact(lm, &doc.annotator, DEFAULT_ENUMERATION_BUDGET),
        Mode::Mc => {
            let sample = sample_corpus(lm, &doc.annotator, s.samples, SamplerConfig { top_p: s.top_p }, s.seed)?;
            build_unigram_mc(&sample, &doc.annotator)
        }
    }
}

fn metrics(a: &MetricsArgs, start: Instant, decomposition_only: bool) -> Result<i32> {
    check_sampling(&a.sampling)?;
    if !(a.epsilon >= 0.0 && a.epsilon.is_finite()) {
        return Err(Error::domain("--epsilon must be finite and non-negative"));
    }
    let doc = load_source(&a.source, a.sampling.seed)?;
    let records = match (&doc, &a.source.records) {
        (None, Some(path)) => Some(read_records(path)?),
        _ => None,
    };
    let dim = match (&doc, &records) {
        (Some(d), _) => d.lm.as_dyn().dim(),
        (None, Some(r)) => r.dim,
        _ => unreachable!("load_source checked the source"),
    };
    let (projector, projector_name) = resolve_projector(&a.projector, doc.as_ref(), dim)?;
    if records.is_some() && decomposition_only {
        return Err(Error::domain("verify-decomposition needs a model head (--preset or --lm)"));
    }
    if records.is_some() && a.mode == Mode::Mc {
        return Err(Error::domain("--mode mc needs a model to sample from"));
    }

    let command = if decomposition_only { "verify-decomposition" } else { "metrics" };
    let mode_name = match (&records, a.mode) {
        (Some(_), _) => "records",
        (None, Mode::Exact) => "exact",
        (None, Mode::Mc) => "mc",
    };
    let config = json!({
        "source": source_echo(&a.source),
        "projector": projector_name,
        "mode": mode_name,
        "sampling": sampling_echo(&a.sampling),
        "epsilon": tagged(a.epsilon, Unit::Bits),
        "drop_na": a.drop_na,
    });
    let seeds = json!({ "sampling": tagged(a.sampling.seed, Unit::Seed) });
    let mut report = RunReport::new(command, mode_name, config, seeds);

    if let Some(file) = records {
        let table = UnigramTable::from_weighted(
            file.concepts.clone(),
            file.vocab.len(),
            file.records
                .iter()
                .zip(records_to_reps(&file))
                .map(|(r, rep)| (r.word, r.concept, rep, 1.0)),
            TableMode::Records {
                n_records: file.records.len(),
            },
        )?;
        let table = if a.drop_na { table.condition_non_na()? } else { table };
        let perp = table.project(&projector, Side::Perp)?;
        report.section(
            "correlational",
            correlational_section(table.mi_concept_rep(), perp.mi_concept_rep(), table.mi_word_rep_given_concept()),
        );
        report.section("tables", json!({ "mode": io::table_mode_value(table.mode()) }));
        report.notes.push("record values are float32 and were widened to float64".into());
        report
            .notes
            .push("no model head available: counterfactual metrics need --preset or --lm".into());
        emit(&mut report, a.out.as_deref(), start)?;
        return Ok(0);
    }

    let doc = doc.expect("model source");
    let lm = doc.lm.as_dyn();
    let table = build_table(&doc, a.mode, &a.sampling)?;
    let table = if a.drop_na { table.condition_non_na()? } else { table };
    let q = build_counterfactual(&table, lm, &doc.annotator, &projector)?;
    let q = if a.drop_na { q.condition_non_na()? } else { q };

    if decomposition_only {
        let d = check_decomposition(&q, DECOMPOSITION_TOL);
        report.section("decomposition", decomposition_section(&d));
        emit(&mut report, a.out.as_deref(), start)?;
        if !d.holds {
            eprintln!("decomposition gap {:.3e} bits exceeds {:.0e}", d.gap, d.tolerance);
            return Ok(1);
        }
        return Ok(0);
    }
    let m = compute_metrics(&table, &q, &projector, a.epsilon)?;
    report.section("metrics", metrics_section(&m));
    for kind in crate::counterfactual::RatioKind::ALL {
        if m.ratios.value(kind).is_none() {
            report.notes.push(format!("{} is undefined: {} is zero", kind.name(), kind.denominator()));
        }
    }
    emit(&mut report, a.out.as_deref(), start)?;
    Ok(0)
}

fn run_forced_choice(doc: &LmDocument, p: &Projector, s: &SamplingArgs) -> Result<ForcedChoiceResult> {
    let lm = doc.lm.as_dyn();
    let sample = sample_corpus(lm, &doc.annotator, s.samples, SamplerConfig { top_p: s.top_p }, s.seed)?;
    let pool = build_rep_pool(&sample, doc.annotator.concepts());
    match &doc.lm {
        AnyLm::Plain(m) => forced_choice_eval::<ToyLm>(m, &doc.annotator, p, &doc.items, &pool),
        AnyLm::Causal(m) => forced_choice_eval::<CausalToyLm>(m, &doc.annotator, p, &doc.items, &pool),
    }
}

fn render_table(r: &ForcedChoiceResult) -> String {
    let mut s = format!("{:<16} {:>6} {:>8} {:>8} {:>8}\n", "direction", "items", "orig", "erased", "do");
    for (k, d) in &r.by_direction {
        let n = d.n_items as f64;
        s.push_str(&format!(
            "{:<16} {:>6} {:>8.3} {:>8.3} {:>8.3}\n",
            k,
            d.n_items,
            d.orig_score / n,
            d.erased_score / n,
            d.do_score / n
        ));
    }
    s.push_str(&format!(
        "{:<16} {:>6} {:>8.3} {:>8.3} {:>8.3}\n",
        "all", r.n_items, r.orig_acc, r.erased_acc, r.do_acc
    ));
    s
}

fn do_eval(a: &DoEvalArgs, start: Instant) -> Result<i32> {
    check_sampling(&a.sampling)?;
    let doc = load_source(&a.source, a.sampling.seed)?
        .ok_or_else(|| Error::domain("do-eval needs a model (--preset or --lm)"))?;
    let (projector, name) = resolve_projector(&a.projector, Some(&doc), doc.lm.as_dyn().dim())?;
    if doc.items.is_empty() {
        return Err(Error::domain("the model document has no forced-choice items"));
    }
    let r = run_forced_choice(&doc, &projector, &a.sampling)?;
    print!("{}", render_table(&r));
    if let Some(out) = &a.out {
        let mut report = RunReport::new(
            "do-eval",
            "sampled_pool",
            json!({
                "source": source_echo(&a.source),
                "projector": name,
                "sampling": sampling_echo(&a.sampling),
            }),
            json!({ "sampling": tagged(a.sampling.seed, Unit::Seed) }),
        );
        report.section("forced_choice", forced_choice_section(&r));
        emit(&mut report, Some(out), start)?;
    }
    Ok(0)
}

fn verify_theorem1(a: &Theorem1Args, start: Instant) -> Result<i32> {
    let lm = build_causal_toy(&causal_config(&a.causal, a.seed))?;
    let doc = LmDocument {
        schema_version: SCHEMA_VERSION,
        annotator: lm.annotator().clone(),
        ground_truth: Some(lm.ground_truth().clone()),
        lm: AnyLm::Causal(lm.clone()),
        items: Vec::new(),
    };
    let (projector, name) = resolve_projector(&a.projector, Some(&doc), lm.dim())?;
    let fact = DoFactorization::from_causal_toy(&lm, &projector)?;
    let r = theorem1_check(&fact, &projector, &doc.annotator as &ConceptAnnotator)?;
    let mut report = RunReport::new(
        "verify-theorem1",
        "exact",
        json!({ "causal": causal_echo(&a.causal), "projector": name }),
        json!({ "model": tagged(a.seed, Unit::Seed) }),
    );
    report.section("theorem1", theorem1_section(&r));
    emit(&mut report, a.out.as_deref(), start)?;
    if !r.holds {
        eprintln!("max |quantity| = {:.3e} bits exceeds {:.0e}", r.max_abs, r.tolerance);
        return Ok(1);
    }
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(run(["concept-subspace", "metrics", "--mode", "sideways"]), 2);
        assert_eq!(run(["concept-subspace", "no-such-command"]), 2);
    }

    #[test]
    fn drop_na_accepts_explicit_values() {
        let cli = Cli::try_parse_from(["x", "metrics", "--preset", "counterexample", "--drop-na", "false"]).unwrap();
        match cli.command {
            Command::Metrics(m) => assert!(!m.drop_na),
            _ => unreachable!(),
        }
        let cli = Cli::try_parse_from(["x", "metrics", "--preset", "counterexample"]).unwrap();
        match cli.command {
            Command::Metrics(m) => assert!(m.drop_na),
            _ => unreachable!(),
        }
    }
}
