//! Acceptance checks run through the `emodiff` binary. Prints one line per
//! criterion and exits nonzero if any fails.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use emodiff_core::corpus::tokenize;
use emodiff_core::output::strip_comments;
use emodiff_core::{Classifier, Lexicon, NaiveBayes, Scorer, VersionCutoff};
use serde_json::Value;

type Check = Result<String, String>;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn fixture(rel: &str) -> String {
    root().join("fixtures").join(rel).display().to_string()
}

struct Out {
    stdout: String,
    stderr: String,
}

fn emodiff<S: AsRef<std::ffi::OsStr>>(args: &[S]) -> Result<Out, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_emodiff"))
        .args(args)
        .env_remove("EMODIFF_API_KEY")
        .output()
        .map_err(|e| e.to_string())?;
    let o = Out {
        stdout: String::from_utf8_lossy(&out.stdout).into(),
        stderr: String::from_utf8_lossy(&out.stderr).into(),
    };
    if !out.status.success() {
        let shown: Vec<String> = args.iter().map(|a| a.as_ref().to_string_lossy().into_owned()).collect();
        return Err(format!("emodiff {} failed: {}", shown.join(" "), o.stderr.trim()));
    }
    Ok(o)
}

fn csv_rows(text: &str) -> Result<Vec<HashMap<String, String>>, String> {
    let body = strip_comments(text);
    let mut r = csv::Reader::from_reader(body.as_bytes());
    let headers = r.headers().map_err(|e| e.to_string())?.clone();
    r.records()
        .map(|rec| {
            let rec = rec.map_err(|e| e.to_string())?;
            Ok(headers.iter().zip(rec.iter()).map(|(h, v)| (h.to_string(), v.to_string())).collect())
        })
        .collect()
}

fn num(row: &HashMap<String, String>, col: &str) -> Result<f64, String> {
    row.get(col).ok_or(format!("no column {col}"))?.parse().map_err(|e| format!("{col}: {e}"))
}

fn json(path: &Path) -> Result<Value, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn within_time(t: Duration, limit: Duration) -> Result<(), String> {
    if t <= limit {
        Ok(())
    } else {
        Err(format!("took {:.2}s, limit {:.0}s", t.as_secs_f64(), limit.as_secs_f64()))
    }
}

fn synth(dir: &Path, spec: &str, seed: u64, posts: Option<usize>) -> Result<(PathBuf, PathBuf), String> {
    let corpus = dir.join(format!("{spec}-{seed}.jsonl"));
    let ledger = dir.join(format!("{spec}-{seed}.ledger.jsonl"));
    let mut args = vec![
        "synth".to_string(),
        "--spec".into(),
        fixture(&format!("synth/{spec}.json")),
        "--seed".into(),
        seed.to_string(),
        "--out".into(),
        corpus.display().to_string(),
        "--ledger".into(),
        ledger.display().to_string(),
    ];
    if let Some(n) = posts {
        args.extend(["--posts".to_string(), n.to_string()]);
    }
    emodiff(&args)?;
    Ok((corpus, ledger))
}

fn spearman_fixtures() -> Check {
    let start = Instant::now();
    let files: Vec<String> =
        ["11.0", "12.0", "13.0"].iter().map(|v| fixture(&format!("appendix/emoji-{v}.csv"))).collect();
    let mut args = vec!["correlate".to_string(), "--method".into(), "spearman".into()];
    args.extend(files);
    let out = emodiff(&args)?;
    let elapsed = start.elapsed();
    let rows = csv_rows(&out.stdout)?;
    let expected = [("11.0", 0.576, 0.580), ("12.0", 0.527, 0.530), ("13.0", 0.370, 0.370)];
    let mut shown = Vec::new();
    for (version, ours, published) in expected {
        let row = rows.iter().find(|r| r["source"] == version).ok_or(format!("no row for {version}"))?;
        let rho = num(row, "value")?;
        shown.push(format!("{version} rho={rho:.4}"));
        if (rho - ours).abs() > 0.005 || (rho - published).abs() > 0.01 {
            return Err(format!("{version}: rho {rho:.4}, want {ours}±0.005 and published {published}±0.01"));
        }
    }
    within_time(elapsed, Duration::from_secs(1))?;
    Ok(format!("{} ({:.3}s)", shown.join(", "), elapsed.as_secs_f64()))
}

/// Post features with every post-cutoff emoji removed, as the target posts
/// are shown to the old-emoji model.
fn stripped_features(text: &str, lex: &Lexicon, cutoff: VersionCutoff) -> (Vec<String>, Vec<String>) {
    let mut kept = Vec::new();
    let mut new = Vec::new();
    for t in tokenize(text, lex) {
        match t.emoji {
            Some(id) if lex.classify(id, cutoff) == emodiff_core::EmojiStatus::New => {
                new.push(lex.render(lex.base(id)))
            }
            _ => kept.push(t.feature(lex).into_owned()),
        }
    }
    (kept, new)
}

fn read_posts(path: &Path) -> Result<Vec<Value>, String> {
    let text = fs::read_to_string(path).map_err(|e| e.to_string())?;
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| e.to_string()))
        .collect()
}

fn surrogate_oracle(dir: &Path) -> Check {
    let (corpus, _) = synth(dir, "benchmark", 11, Some(1000))?;
    let model = dir.join("c2-model.json");
    let ranking = dir.join("c2-surrogates.json");
    let c = corpus.display().to_string();
    emodiff(&["train", "--seed", "11", "--out", &model.display().to_string(), "emoji", "--corpus", &c])?;
    let start = Instant::now();
    emodiff(&[
        "surrogates",
        "--model",
        &model.display().to_string(),
        "--corpus",
        &c,
        "--new",
        "🥲,🪙",
        "--out",
        &ranking.display().to_string(),
    ])?;
    let elapsed = start.elapsed();

    let lex = Lexicon::bundled();
    let cutoff: VersionCutoff = "12.1".parse().unwrap();
    let nb = NaiveBayes::load(&model).map_err(|e| e.to_string())?;
    let labels = nb.label_space().to_vec();
    let mut counts: BTreeMap<String, Vec<u64>> = BTreeMap::new();
    for post in read_posts(&corpus)? {
        let (tokens, new) = stripped_features(post["text"].as_str().unwrap(), &lex, cutoff);
        let predicted = nb.predict(&tokens).label;
        for e in new.into_iter().collect::<HashSet<_>>() {
            counts.entry(e).or_insert_with(|| vec![0; labels.len()])[predicted] += 1;
        }
    }
    let report = json(&ranking)?;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for r in report["rankings"].as_array().ok_or("no rankings")? {
        let emoji = r["new_emoji"].as_str().unwrap();
        let oracle = counts.get(emoji).ok_or(format!("oracle saw no {emoji} posts"))?;
        let total: u64 = oracle.iter().sum();
        let rows = r["rows"].as_array().unwrap();
        if rows.len() != labels.len() {
            return Err(format!("{emoji}: {} rows for {} labels", rows.len(), labels.len()));
        }
        let mut sum = 0.0;
        for row in rows {
            let label = row["emoji"].as_str().unwrap();
            let k = labels.iter().position(|l| l == label).ok_or(format!("unknown label {label}"))?;
            let want = oracle[k] as f64 / total as f64;
            let got = row["score"].as_f64().unwrap();
            worst = worst.max((got - want).abs());
            sum += got;
            checked += 1;
        }
        if (sum - 1.0).abs() > 1e-12 {
            return Err(format!("{emoji}: scores sum to {sum}"));
        }
    }
    if worst > 1e-12 {
        return Err(format!("max deviation from counting oracle {worst:e}"));
    }
    within_time(elapsed, Duration::from_secs(5))?;
    Ok(format!(
        "{checked} scores match the counting oracle (max diff {worst:e}), sums = 1 ({:.2}s)",
        elapsed.as_secs_f64()
    ))
}

struct SeedRun {
    recovered: bool,
    recovery: String,
    improved: bool,
    improvement: String,
}

fn planted_run(dir: &Path, seed: u64) -> Result<SeedRun, String> {
    let (corpus, ledger) = synth(dir, "benchmark", seed, None)?;
    let store = dir.join(format!("annotations-{seed}.jsonl"));
    let out = dir.join(format!("run-{seed}"));
    let s = |p: &Path| p.display().to_string();
    emodiff(&["annotate", "import", "--store", &s(&store), "--ledger", &s(&ledger), "--corpus", &s(&corpus)])?;
    emodiff(&[
        "pipeline",
        "substitute-eval",
        "--output-dir",
        &s(&out),
        "--corpus",
        &s(&corpus),
        "--annotations",
        &s(&store),
        "--seed",
        &seed.to_string(),
        "--new-emojis",
        "🥲,🪙",
        "--offline",
        "--threads",
        "2",
    ])?;
    let report = json(&out.join("surrogates.json"))?;
    let mut recovered = true;
    let mut recovery = Vec::new();
    for (new, donor) in [("🥲", "😔"), ("🪙", "🎉")] {
        let r = report["rankings"]
            .as_array()
            .unwrap()
            .iter()
            .find(|r| r["new_emoji"] == new)
            .ok_or(format!("no ranking for {new}"))?;
        let rows = r["rows"].as_array().unwrap();
        let (top, next) = (&rows[0], &rows[1]);
        let ratio = top["score"].as_f64().unwrap() / next["score"].as_f64().unwrap();
        recovered &= top["emoji"] == donor && ratio >= 2.0;
        recovery.push(format!("{new}->{} x{ratio:.1}", top["emoji"].as_str().unwrap()));
    }
    let eval = csv_rows(&fs::read_to_string(out.join("evaluation.csv")).map_err(|e| e.to_string())?)?;
    let mut improved = true;
    let mut improvement = Vec::new();
    for new in ["🥲", "🪙"] {
        let row = eval.iter().find(|r| r["emoji"] == new).ok_or(format!("no evaluation row for {new}"))?;
        let (ori, rep, word) = (num(row, "ori_acc")?, num(row, "replaced_acc")?, num(row, "word_acc")?);
        improved &= rep >= ori + 0.02 && rep > word;
        improvement.push(format!("{new} {ori:.3}/{rep:.3}/{word:.3}"));
    }
    Ok(SeedRun { recovered, recovery: recovery.join(" "), improved, improvement: improvement.join(" ") })
}

fn planted_benchmark(dir: &Path) -> (Check, Check) {
    let start = Instant::now();
    let mut runs = Vec::new();
    for seed in 1..=10 {
        match planted_run(dir, seed) {
            Ok(r) => runs.push(r),
            Err(e) => return (Err(format!("seed {seed}: {e}")), Err(format!("seed {seed}: {e}"))),
        }
    }
    let elapsed = start.elapsed();
    let recovered = runs.iter().filter(|r| r.recovered).count();
    let improved = runs.iter().filter(|r| r.improved).count();
    let timing = format!("{:.1}s for 10 seeds", elapsed.as_secs_f64());
    let c3 = if recovered >= 9 {
        within_time(elapsed, Duration::from_secs(120))
            .map(|_| format!("{recovered}/10 seeds; seed 1: {} ({timing})", runs[0].recovery))
    } else {
        let failed: Vec<String> = runs.iter().filter(|r| !r.recovered).map(|r| r.recovery.clone()).collect();
        Err(format!("{recovered}/10 seeds, need 9; misses: {}", failed.join("; ")))
    };
    let c4 = if improved >= 8 {
        within_time(elapsed, Duration::from_secs(180))
            .map(|_| format!("{improved}/10 seeds; seed 1 ori/replaced/word: {} ({timing})", runs[0].improvement))
    } else {
        let failed: Vec<String> = runs.iter().filter(|r| !r.improved).map(|r| r.improvement.clone()).collect();
        Err(format!("{improved}/10 seeds, need 8; misses: {}", failed.join("; ")))
    };
    (c3, c4)
}

fn salience_exact(dir: &Path) -> Result<String, String> {
    let (corpus, _) = synth(dir, "salience", 5, Some(1000))?;
    let split = dir.join("c5-split");
    let model = dir.join("c5-model.json");
    let preds = dir.join("c5-preds.jsonl");
    let table = dir.join("c5-salience.json");
    let s = |p: &Path| p.display().to_string();
    let data = split.join("train.jsonl");
    emodiff(&[
        "train",
        "--seed",
        "5",
        "--out",
        &s(&model),
        "emoji",
        "--corpus",
        &s(&corpus),
        "--label",
        "😔,🎉,😂,😍,😭,🙏,🔥,😡,🥲,🪙",
        "--allow-new",
        "--split-dir",
        &s(&split),
    ])?;
    emodiff(&["predict", "--model", &s(&model), "--data", &s(&data), "--salience", "--out", &s(&preds)])?;
    emodiff(&[
        "salience",
        "--predictions",
        &s(&preds),
        "--data",
        &s(&data),
        "--top",
        "1000000",
        "--min-occurrences",
        "1",
        "--out",
        &s(&table),
    ])?;

    let items: HashMap<String, Vec<String>> = read_posts(&data)?
        .into_iter()
        .map(|v| {
            let toks = v["tokens"].as_array().unwrap().iter().map(|t| t.as_str().unwrap().to_string()).collect();
            (v["id"].as_str().unwrap().to_string(), toks)
        })
        .collect();
    if items.len() > 1000 {
        return Err(format!("fixture has {} docs", items.len()));
    }
    let rows: Vec<Value> = read_posts(&preds)?.into_iter().skip(1).collect();
    let labels: HashSet<String> = rows.iter().map(|r| r["label"].as_str().unwrap().to_string()).collect();
    let vocab: HashSet<&String> = items.values().flatten().collect();
    let table = json(&table)?;
    let mut compared = 0;
    for label in &labels {
        let reported = table["labels"]
            .as_array()
            .unwrap()
            .iter()
            .find(|l| l["label"] == label.as_str())
            .ok_or(format!("no table entry for {label}"))?;
        let reported: HashMap<&str, (f64, u64)> = reported["top"]
            .as_array()
            .unwrap()
            .iter()
            .map(|t| (t["token"].as_str().unwrap(), (t["mean"].as_f64().unwrap(), t["occurrences"].as_u64().unwrap())))
            .collect();
        let mut expected = 0;
        for word in &vocab {
            let (mut sum, mut n) = (0.0, 0u64);
            for r in rows.iter().filter(|r| r["label"] == label.as_str()) {
                let tokens = &items[r["id"].as_str().unwrap()];
                let sal = r["salience"].as_array().unwrap();
                for (i, t) in tokens.iter().enumerate() {
                    if t == *word {
                        sum += sal[i].as_f64().unwrap();
                        n += 1;
                    }
                }
            }
            if n == 0 {
                continue;
            }
            expected += 1;
            let &(mean, occ) = reported.get(word.as_str()).ok_or(format!("{label}: {word} missing"))?;
            if occ != n || (mean - sum / n as f64).abs() > 1e-12 {
                return Err(format!("{label}/{word}: reported {mean} over {occ}, oracle {} over {n}", sum / n as f64));
            }
            compared += 1;
        }
        if expected != reported.len() {
            return Err(format!("{label}: {} tokens reported, oracle has {expected}", reported.len()));
        }
    }
    Ok(format!("{compared} (label, token) means match the double-loop oracle on {} docs", items.len()))
}

fn planted_words(spec: &Value) -> HashMap<String, HashSet<String>> {
    spec["emojis"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| {
            let words =
                e["context"].as_array().unwrap().iter().map(|w| w["word"].as_str().unwrap().to_string()).collect();
            (e["emoji"].as_str().unwrap().to_string(), words)
        })
        .collect()
}

fn salience_planted(dir: &Path) -> Result<String, String> {
    let spec = json(Path::new(&fixture("synth/salience.json")))?;
    let planted = planted_words(&spec);
    let mut passed = 0;
    let mut worst = usize::MAX;
    for seed in 1..=10u64 {
        let (corpus, _) = synth(dir, "salience", seed, None)?;
        let out = dir.join(format!("c5-run-{seed}"));
        emodiff(&[
            "pipeline",
            "interpret",
            "--corpus",
            &corpus.display().to_string(),
            "--output-dir",
            &out.display().to_string(),
            "--seed",
            &seed.to_string(),
            "--new-emojis",
            "🥲,🪙",
        ])?;
        let table = json(&out.join("salience.json"))?;
        let mut ok = true;
        for l in table["labels"].as_array().unwrap() {
            let Some(words) = planted.get(l["label"].as_str().unwrap()) else { continue };
            let hits =
                l["top"].as_array().unwrap().iter().filter(|t| words.contains(t["token"].as_str().unwrap())).count();
            worst = worst.min(hits);
            ok &= hits >= words.len().min(5);
        }
        passed += ok as usize;
    }
    if passed >= 9 {
        Ok(format!("{passed}/10 seeds; fewest planted words in an emoji label's top-10: {worst}"))
    } else {
        Err(format!("{passed}/10 seeds, need 9 (fewest planted words in a top-10: {worst})"))
    }
}

fn pmi_exact(dir: &Path) -> Result<String, String> {
    let (corpus, _) = synth(dir, "benchmark", 6, Some(1000))?;
    let out = emodiff(&[
        "pmi",
        "--corpus",
        &corpus.display().to_string(),
        "--emoji",
        "😔",
        "--whole",
        "--min-support",
        "1",
        "--top",
        "1000000",
    ])?;
    let lex = Lexicon::bundled();
    let target = lex.lookup("😔").unwrap();
    let (mut n, mut n_e) = (0u64, 0u64);
    let mut words: HashMap<String, (u64, u64)> = HashMap::new();
    for post in read_posts(&corpus)? {
        let tokens = tokenize(post["text"].as_str().unwrap(), &lex);
        let has = tokens.iter().any(|t| t.emoji.is_some_and(|id| lex.base(id) == target));
        n += 1;
        n_e += has as u64;
        let set: HashSet<String> =
            tokens.iter().filter(|t| t.emoji.is_none()).map(|t| t.feature(&lex).into_owned()).collect();
        for w in set {
            let e = words.entry(w).or_default();
            e.0 += 1;
            e.1 += has as u64;
        }
    }
    let rows = csv_rows(&out.stdout)?;
    let expected = words.values().filter(|c| c.1 > 0).count();
    if rows.len() != expected {
        return Err(format!("{} rows, oracle has {expected} co-occurring words", rows.len()));
    }
    let p = |c: u64| c as f64 / n as f64;
    for r in &rows {
        let &(n_w, n_ew) = words.get(&r["word"]).ok_or(format!("unexpected word {}", r["word"]))?;
        let want = (p(n_ew) / (p(n_e) * p(n_w))).ln();
        if num(r, "pmi")? != want || num(r, "joint_count")? as u64 != n_ew || num(r, "word_count")? as u64 != n_w {
            return Err(format!("{}: pmi {} vs oracle {want}", r["word"], r["pmi"]));
        }
    }
    Ok(format!("{} PMI values identical to per-post counting", rows.len()))
}

fn new_year_event(dir: &Path) -> Result<String, String> {
    let (corpus, _) = synth(dir, "new_year", 3, None)?;
    let out = emodiff(&[
        "pmi",
        "--corpus",
        &corpus.display().to_string(),
        "--emoji",
        "🥳",
        "--granularity",
        "week",
        "--top",
        "10",
        "--threads",
        "4",
    ])?;
    let spec = json(Path::new(&fixture("synth/new_year.json")))?;
    let event: Vec<String> =
        spec["events"][0]["words"].as_array().unwrap().iter().map(|w| w.as_str().unwrap().to_string()).collect();
    let mut tops: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for r in csv_rows(&out.stdout)? {
        tops.entry(r["slice"].clone()).or_default().push(r["word"].clone());
    }
    let week = tops.get("2021-W01").ok_or("no rows for 2021-W01")?;
    let controls: HashSet<&String> = tops.iter().filter(|(k, _)| *k != "2021-W01").flat_map(|(_, v)| v).collect();
    if tops.len() < 2 {
        return Err("no control weeks".into());
    }
    let hits: Vec<&String> = event.iter().filter(|w| week.contains(w) && !controls.contains(w)).collect();
    if hits.len() >= 3 {
        Ok(format!(
            "{}/5 event words in the 2021-W01 top-10 and in none of {} control weeks",
            hits.len(),
            tops.len() - 1
        ))
    } else {
        Err(format!("only {:?} of {event:?} qualify; W01 top-10 {week:?}", hits))
    }
}

fn kendall(ys: &[f64]) -> f64 {
    let (mut c, mut d) = (0i64, 0i64);
    for i in 0..ys.len() {
        for j in i + 1..ys.len() {
            match ys[j].partial_cmp(&ys[i]) {
                Some(std::cmp::Ordering::Greater) => c += 1,
                Some(std::cmp::Ordering::Less) => d += 1,
                _ => {}
            }
        }
    }
    (c - d) as f64 / (ys.len() * (ys.len() - 1) / 2) as f64
}

fn drift(dir: &Path) -> Check {
    let (corpus, _) = synth(dir, "pleading_drift", 5, None)?;
    let c = corpus.display().to_string();
    let trend = emodiff(&["sentiment", "trend", "--corpus", &c, "--emoji", "🥺", "--granularity", "two-month"])?;
    let means: Vec<f64> = csv_rows(&trend.stdout)?.iter().map(|r| num(r, "mean_score")).collect::<Result<_, _>>()?;
    if means.len() != 8 {
        return Err(format!("{} buckets, want 8", means.len()));
    }
    let tau = kendall(&means);
    let hist = emodiff(&["sentiment", "hist", "--corpus", &c, "--emoji", "🥺", "--granularity", "two-month"])?;
    let rows = csv_rows(&hist.stdout)?;
    let mean_of =
        |slice: &str| rows.iter().find(|r| r["slice"] == slice).map(|r| num(r, "mean")).ok_or("missing slice");
    let diff = mean_of("late")?? - mean_of("early")??;

    let scores = emodiff(&["sentiment", "score", "good", "not good", "", "good great love happy best wonderful"])?;
    let s: Vec<f64> = csv_rows(&scores.stdout)?.iter().map(|r| num(r, "compound")).collect::<Result<_, _>>()?;
    let scorer = Scorer::default();
    let lex = Lexicon::bundled();
    let extreme = [
        "awful terrible horrible worst hate hate hate sad bad",
        "not not not bad",
        "very extremely good good good good good good good good",
    ];
    let in_range = extreme.iter().map(|t| scorer.score_text(t, &lex)).all(|x| (-1.0..=1.0).contains(&x));
    let unit = (s[0] - 0.4404).abs() <= 1e-4 && (s[1] + 0.3413).abs() <= 1e-4 && s[2] == 0.0 && s[3] <= 1.0 && in_range;
    let summary =
        format!("tau {tau:.3}, late-early {diff:+.4}, good {:.4}, not good {:.4}, empty {}", s[0], s[1], s[2]);
    if tau > 0.8 && diff > 0.0 && unit {
        Ok(summary)
    } else {
        Err(summary)
    }
}

fn determinism(dir: &Path) -> Check {
    let listener = TcpListener::bind("127.0.0.1:0").map_err(|e| e.to_string())?;
    listener.set_nonblocking(true).map_err(|e| e.to_string())?;
    let endpoint = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let config = fixture("pipeline/demo-full.json");
    let mut manifests = Vec::new();
    for run in ["a", "b"] {
        let out = dir.join(format!("full-{run}"));
        let o = emodiff(&[
            "pipeline",
            "full",
            "--config",
            &config,
            "--output-dir",
            &out.display().to_string(),
            "--offline",
            "--endpoint",
            &endpoint,
        ])?;
        if !o.stderr.contains("0 annotation requests") {
            return Err(format!("annotation requests were made: {}", o.stderr.trim()));
        }
        let text = fs::read(out.join("MANIFEST.json")).map_err(|e| e.to_string())?;
        let manifest: Value = serde_json::from_slice(&text).map_err(|e| e.to_string())?;
        if manifest["complete"] != true {
            return Err("manifest marks the run incomplete".into());
        }
        for rec in manifest["stages"].as_array().unwrap().iter().flat_map(|s| s["outputs"].as_array().unwrap()) {
            let bytes = fs::read(out.join(rec["path"].as_str().unwrap())).map_err(|e| e.to_string())?;
            if emodiff_core::output::sha256_hex(&bytes) != rec["sha256"].as_str().unwrap() {
                return Err(format!("{} does not match its manifest digest", rec["path"]));
            }
        }
        manifests.push((text, manifest));
    }
    if manifests[0].0 != manifests[1].0 {
        return Err("manifests differ between runs".into());
    }
    let stages = manifests[0].1["stages"].as_array().unwrap().len();
    let files: usize =
        manifests[0].1["stages"].as_array().unwrap().iter().map(|s| s["outputs"].as_array().unwrap().len()).sum();
    match listener.accept() {
        Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {}
        Ok(_) => return Err("offline run connected to the endpoint".into()),
        Err(e) => return Err(e.to_string()),
    }
    Ok(format!("{stages} stages, {files} outputs byte-identical across two runs; no connection to the endpoint"))
}

fn pearson_log() -> Check {
    let out =
        emodiff(&["correlate", "--method", "pearson-log", "--reference", "0.11", &fixture("appendix/emoji-13.0.csv")])?;
    let rows = csv_rows(&out.stdout)?;
    let r = num(&rows[0], "value")?;
    for line in out.stderr.lines() {
        println!("    {line}");
    }
    if !out.stderr.contains("rounding") {
        return Err("no discrepancy analysis printed".into());
    }
    if (r - 0.11).abs() <= 0.05 {
        Ok(format!("r = {r:.4} vs published 0.11 (difference {:+.4}, tolerance 0.05)", r - 0.11))
    } else {
        Err(format!("r = {r:.4}, published 0.11 outside ±0.05"))
    }
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let dir = tmp.path();
    let mut results: Vec<(u8, &str, Check)> = Vec::new();
    results.push((1, "spearman fixture reproduction", spearman_fixtures()));
    results.push((2, "surrogate score exactness", surrogate_oracle(dir)));
    let (c3, c4) = planted_benchmark(dir);
    results.push((3, "planted surrogate recovery", c3));
    results.push((4, "substitution improvement", c4));
    let c5 = salience_exact(dir).and_then(|a| salience_planted(dir).map(|b| format!("{a}; {b}")));
    results.push((5, "salience aggregation", c5));
    let c6 = pmi_exact(dir).and_then(|a| new_year_event(dir).map(|b| format!("{a}; {b}")));
    results.push((6, "pmi exactness and event detection", c6));
    results.push((7, "sentiment drift detection", drift(dir)));
    results.push((8, "determinism and offline mode", determinism(dir)));
    results.push((9, "pearson log-correlation", pearson_log()));

    let mut failed = 0;
    for (n, name, r) in &results {
        match r {
            Ok(msg) => println!("criterion {n} PASS {name}: {msg}"),
            Err(msg) => {
                failed += 1;
                println!("criterion {n} FAIL {name}: {msg}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", results.len());
        std::process::exit(1);
    }
    println!("all {} criteria passed", results.len());
}
