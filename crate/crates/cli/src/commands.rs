use std::path::Path;

use anyhow::{anyhow, Context, Result};
use fomkit::aggregate::{aggregate_subjects, AggregationRule};
use fomkit::epochselect::{SelectionPolicy, TieBreak};
use fomkit::foldalign::{apply_alignment_with, fit_alignment, CanonicalScale};
use fomkit::fom::FomSpec;
use fomkit::hypersearch::{
    ledger_analysis, run_search, ObjectiveSpec, Params, SearchError, SearchOptions, SearchSpace,
    Strategy, TrialLedger,
};
use fomkit::report::{assessment_report, ReportOptions};
use fomkit::scoreset::{format_real, Level};
use fomkit::svg::{Mark, Plot, Series, BLUE};
use fomkit::synthlab::{
    exp1_config_from_json, exp2_config_from_json, gen_experiment1, gen_experiment2,
    pooled_validation, Exp1Adapter, Exp1Config, Exp2Config,
};
use serde_json::{json, Value};

use crate::error;
use crate::manifest::RunManifest;
use crate::output::{self, dir_target, file_target, render_table, sibling, sig6};
use crate::{
    AggregateArgs, AlignArgs, Cli, Command, EpochsArgs, InputArgs, LevelArg, MetricsArgs,
    SearchArgs, Switch, SynthCommand, TieBreakArg,
};

const DEFAULT_EPOCH_FOMS: [&str; 5] = [
    "neg_val_ce",
    "auc",
    "sliver:90",
    "sens_at_spec:90",
    "fisher",
];

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Metrics(a) => metrics(cli, a),
        Command::Align(a) => align(cli, a),
        Command::Aggregate(a) => aggregate(cli, a),
        Command::Epochs(a) => epochs(cli, a),
        Command::Search(a) => search(cli, a),
        Command::Synth {
            which:
                SynthCommand::Exp1 {
                    config,
                    params,
                    params_file,
                },
        } => synth_exp1(cli, config.as_deref(), params, params_file.as_deref()),
        Command::Synth {
            which: SynthCommand::Exp2 { config },
        } => synth_exp2(cli, config.as_deref()),
    }
}

fn require_seed(cli: &Cli) -> Result<u64> {
    cli.seed
        .ok_or_else(|| error::input(anyhow!("--seed is required for this command")))
}

fn parse_foms(raw: &[String]) -> Result<Vec<FomSpec>> {
    raw.iter()
        .map(|s| s.parse::<FomSpec>().map_err(error::input))
        .collect()
}

fn table_manifest(cli: &Cli, command: &str, input: &InputArgs, bytes: &[u8]) -> RunManifest {
    let mut m = RunManifest::new(command, cli.seed);
    m.arg("input", input.input.display().to_string())
        .arg("format", output::format_name(input));
    m.input(&input.input, bytes);
    m
}

fn metrics(cli: &Cli, a: &MetricsArgs) -> Result<()> {
    let foms = parse_foms(&a.foms)?;
    let (table, bytes) = output::read_table(&a.input)?;
    let (labels, scores) = (table.labels(), table.scores());
    let mut rows = Vec::with_capacity(foms.len());
    for fom in &foms {
        let value = fom
            .evaluate(&labels, &scores)
            .map_err(error::metrics)
            .with_context(|| format!("evaluating {fom}"))?;
        rows.push((fom.to_string(), value));
    }
    if let Some(dir) = &cli.out {
        let mut m = table_manifest(cli, "metrics", &a.input, &bytes);
        m.arg(
            "fom",
            rows.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>(),
        );
        m.write(&dir.join("manifest.json"))?;
        let csv: String = rows
            .iter()
            .map(|(n, v)| format!("{n},{}\n", format_real(*v)))
            .collect();
        output::write(&dir.join("metrics.csv"), &format!("fom,value\n{csv}"))?;
    }
    for (name, value) in &rows {
        println!("{name},{}", sig6(*value));
    }
    Ok(())
}

fn align(cli: &Cli, a: &AlignArgs) -> Result<()> {
    let (table, bytes) = output::read_table(&a.input)?;
    let canonical =
        CanonicalScale::new(a.canonical_median, a.canonical_std).map_err(error::align)?;
    let model = fit_alignment(&table, canonical).map_err(error::align)?;
    let aligned =
        apply_alignment_with(&table, &model, a.clip == Switch::On).map_err(error::align)?;

    let target = file_target(cli.out.as_deref(), "aligned.csv");
    let mut m = table_manifest(cli, "align", &a.input, &bytes);
    m.arg("canonical_median", a.canonical_median)
        .arg("canonical_std", a.canonical_std)
        .arg("clip", if a.clip == Switch::On { "on" } else { "off" })
        .arg("out", target.display().to_string());
    m.write(&sibling(&target, "manifest.json"))?;
    output::write(&sibling(&target, "model.json"), &(model.to_json() + "\n"))?;
    output::write(&target, &render_table(&target, &aligned))?;
    for p in model.folds() {
        println!(
            "fold {}: median {} left_std {} right_std {} controls {}",
            p.fold,
            sig6(p.median),
            sig6(p.left_std),
            sig6(p.right_std),
            p.n_controls
        );
    }
    Ok(())
}

fn aggregate(cli: &Cli, a: &AggregateArgs) -> Result<()> {
    let rule: AggregationRule = a.rule.parse().map_err(error::aggregate)?;
    let (table, bytes) = output::read_table(&a.input)?;
    let subjects = aggregate_subjects(&table, rule).map_err(error::aggregate)?;

    let target = file_target(cli.out.as_deref(), "aggregated.csv");
    let mut m = table_manifest(cli, "aggregate", &a.input, &bytes);
    m.arg("rule", rule.to_string())
        .arg("out", target.display().to_string());
    m.write(&sibling(&target, "manifest.json"))?;
    output::write(&target, &render_table(&target, &subjects))?;
    println!("{} subjects from {} objects", subjects.len(), table.len());
    Ok(())
}

fn epochs(cli: &Cli, a: &EpochsArgs) -> Result<()> {
    let raw: Vec<String> = if a.foms.is_empty() {
        DEFAULT_EPOCH_FOMS.iter().map(|s| s.to_string()).collect()
    } else {
        a.foms.clone()
    };
    let foms = parse_foms(&raw)?;
    let (table, bytes) = output::read_table(&a.input)?;
    let tie_break = match a.tie_break {
        TieBreakArg::Earliest => TieBreak::Earliest,
        TieBreakArg::Latest => TieBreak::Latest,
        TieBreakArg::MostStable => TieBreak::MostStable {
            target_spec_pct: a.stability_spec,
            window: a.window,
        },
    };
    let options = ReportOptions {
        foms: foms.clone(),
        policy: SelectionPolicy {
            tie_tolerance: a.tie_tolerance,
            tie_break,
        },
        covariate: a.covariate.clone(),
        epochs: a.report_epochs.clone(),
    };
    let bundle = assessment_report(&table, &options).map_err(error::report)?;

    let dir = dir_target(cli.out.as_deref());
    let mut m = table_manifest(cli, "epochs", &a.input, &bytes);
    m.arg(
        "fom",
        foms.iter().map(|f| f.to_string()).collect::<Vec<_>>(),
    )
    .arg("tie_tolerance", a.tie_tolerance)
    .arg("tie_break", tie_break.name())
    .arg("covariate", a.covariate.clone())
    .arg("report_epochs", a.report_epochs.clone());
    if let TieBreak::MostStable {
        target_spec_pct,
        window,
    } = tie_break
    {
        m.arg("stability_spec", target_spec_pct)
            .arg("window", window);
    }
    m.write(&dir.join("manifest.json"))?;
    bundle
        .write_to(&dir)
        .with_context(|| format!("writing report under {}", dir.display()))?;
    for (fom, sel) in &bundle.selections {
        println!("{fom},{},{}", sel.epoch, sig6(sel.value));
    }
    Ok(())
}

fn search(cli: &Cli, a: &SearchArgs) -> Result<()> {
    let seed = require_seed(cli)?;
    let mut m = RunManifest::new("search", Some(seed));
    let space = match &a.space {
        Some(path) => {
            let text = output::read_text(path)?;
            m.input(path, text.as_bytes())
                .arg("space", path.display().to_string());
            SearchSpace::from_json(&text)
                .map_err(error::search)
                .with_context(|| format!("loading {}", path.display()))?
        }
        None => Exp1Config::default_space(),
    };
    let config = match &a.config {
        Some(path) => {
            let text = output::read_text(path)?;
            m.input(path, text.as_bytes())
                .arg("config", path.display().to_string());
            exp1_config_from_json(&text)
                .map_err(error::synth)
                .with_context(|| format!("loading {}", path.display()))?
        }
        None => Exp1Config::default(),
    };
    let strategy: Strategy = a.strategy.parse().map_err(error::search)?;
    let spec = ObjectiveSpec {
        level: match a.level {
            LevelArg::Object => Level::Object,
            LevelArg::Subject => Level::Subject,
        },
        fom: a.fom.parse().map_err(error::input)?,
        aggregation: a.aggregation.parse().map_err(error::aggregate)?,
        folds: a.folds,
    };
    let options = SearchOptions {
        jobs: cli.jobs.max(1),
        ..SearchOptions::new(a.budget, strategy, seed)
    };
    let adapter = Exp1Adapter { config, seed };

    let dir = dir_target(cli.out.as_deref());
    m.arg("budget", a.budget)
        .arg("strategy", strategy.to_string())
        .arg("objective", spec.to_string())
        .arg("jobs", options.jobs);
    m.write(&dir.join("manifest.json"))?;

    let ledger = match run_search(&adapter, &spec, &space, &options) {
        Ok(ledger) => ledger,
        Err(SearchError::TrialFailed {
            index,
            source,
            partial,
        }) => {
            output::write(&dir.join("ledger.jsonl"), &partial.to_jsonl())?;
            let done = partial.trials.len();
            return Err(error::search(*source).context(format!(
                "trial {index} failed; {done} completed trials kept in ledger.jsonl"
            )));
        }
        Err(e) => return Err(error::search(e)),
    };
    write_search_outputs(&dir, &ledger)
}

fn write_search_outputs(dir: &Path, ledger: &TrialLedger) -> Result<()> {
    let analysis = ledger_analysis(ledger);
    let names: Vec<&String> = ledger.space.params.keys().collect();
    output::write(&dir.join("ledger.jsonl"), &ledger.to_jsonl())?;

    let mut sorted = String::from("rank,index,loss,object_auc,subject_auc");
    for name in &names {
        sorted.push(',');
        sorted.push_str(&csv_cell(name));
    }
    sorted.push('\n');
    for row in &analysis.sorted {
        let params = &ledger.trials[row.index].params;
        let opt = |v: Option<f64>| v.map(format_real).unwrap_or_default();
        sorted.push_str(&format!(
            "{},{},{},{},{}",
            row.rank,
            row.index,
            format_real(row.loss),
            opt(row.object_auc),
            opt(row.subject_auc)
        ));
        for name in &names {
            sorted.push(',');
            sorted.push_str(&params.get(*name).map(value_cell).unwrap_or_default());
        }
        sorted.push('\n');
    }
    output::write(&dir.join("trials_sorted.csv"), &sorted)?;

    let scatter: String = analysis
        .scatter
        .iter()
        .map(|(o, s)| format!("{},{}\n", format_real(*o), format_real(*s)))
        .collect();
    output::write(
        &dir.join("scatter.csv"),
        &format!("object_auc,subject_auc\n{scatter}"),
    )?;
    let plot = Plot::new(
        "Object vs subject AUC per trial",
        "object AUC",
        "subject AUC",
    )
    .with(Series::new(
        "trials",
        BLUE,
        Mark::Points,
        analysis.scatter.clone(),
    ));
    output::write(&dir.join("scatter.svg"), &plot.to_svg())?;

    let best = ledger.best().expect("a completed search has trials");
    let summary = json!({
        "objective": ledger.objective_descr,
        "strategy": ledger.strategy.to_string(),
        "n_trials": ledger.trials.len(),
        "best": { "index": best.index, "loss": best.loss, "params": best.params, "aux_foms": best.aux_foms },
        "spearman_object_subject_auc": analysis.spearman,
    });
    output::write(
        &dir.join("analysis.json"),
        &(serde_json::to_string_pretty(&summary)? + "\n"),
    )?;

    println!("best_trial,{}", best.index);
    println!("best_loss,{}", sig6(best.loss));
    println!(
        "spearman,{}",
        analysis.spearman.map_or_else(|| "nan".to_string(), sig6)
    );
    Ok(())
}

fn value_cell(v: &Value) -> String {
    match v {
        Value::Number(n) => match n.as_i64() {
            Some(i) => i.to_string(),
            None => n.as_f64().map(format_real).unwrap_or_else(|| n.to_string()),
        },
        Value::String(s) => csv_cell(s),
        other => csv_cell(&other.to_string()),
    }
}

fn csv_cell(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn synth_exp1(
    cli: &Cli,
    config: Option<&Path>,
    raw_params: &[String],
    params_file: Option<&Path>,
) -> Result<()> {
    let seed = require_seed(cli)?;
    let mut m = RunManifest::new("synth exp1", Some(seed));
    let config = match config {
        Some(path) => {
            let text = output::read_text(path)?;
            m.input(path, text.as_bytes())
                .arg("config", path.display().to_string());
            exp1_config_from_json(&text)
                .map_err(error::synth)
                .with_context(|| format!("loading {}", path.display()))?
        }
        None => Exp1Config::default(),
    };
    let mut params: Params =
        fomkit::synthlab::params_of(&[("smoothing", 0.5), ("position_gain", 0.5)]);
    if let Some(path) = params_file {
        let text = output::read_text(path)?;
        m.input(path, text.as_bytes())
            .arg("params_file", path.display().to_string());
        let extra: Params = serde_json::from_str(&text)
            .map_err(error::input)
            .with_context(|| format!("{} must hold a JSON object of parameters", path.display()))?;
        params.extend(extra);
    }
    for raw in raw_params {
        let (name, value) = raw
            .split_once('=')
            .ok_or_else(|| error::input(anyhow!("--param {raw:?} is not name=value")))?;
        let value =
            serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()));
        params.insert(name.to_string(), value);
    }
    let splits = gen_experiment1(&config, &params, seed).map_err(error::synth)?;
    let table = pooled_validation(&splits);

    let target = file_target(cli.out.as_deref(), "exp1_scores.csv");
    m.arg("params", serde_json::to_value(&params)?)
        .arg("out", target.display().to_string());
    m.write(&sibling(&target, "manifest.json"))?;
    output::write(&target, &render_table(&target, &table))?;
    println!(
        "{} objects from {} subjects in {} folds",
        table.len(),
        table.subject_count(),
        splits.len()
    );
    Ok(())
}

fn synth_exp2(cli: &Cli, config: Option<&Path>) -> Result<()> {
    let seed = require_seed(cli)?;
    let mut m = RunManifest::new("synth exp2", Some(seed));
    let config = match config {
        Some(path) => {
            let text = output::read_text(path)?;
            m.input(path, text.as_bytes())
                .arg("config", path.display().to_string());
            exp2_config_from_json(&text)
                .map_err(error::synth)
                .with_context(|| format!("loading {}", path.display()))?
        }
        None => Exp2Config::default(),
    };
    let table = gen_experiment2(&config, seed).map_err(error::synth)?;

    let target = file_target(cli.out.as_deref(), "dump.csv");
    m.arg("out", target.display().to_string());
    m.write(&sibling(&target, "manifest.json"))?;
    output::write(&target, &render_table(&target, &table))?;
    println!(
        "{} epochs x {} subjects",
        table.epochs().len(),
        table.subject_count()
    );
    Ok(())
}
