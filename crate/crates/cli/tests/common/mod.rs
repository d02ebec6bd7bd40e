#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const NEWS_SAMPLE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/data/news_sample.txt");

pub fn fincorpus(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fincorpus"))
        .current_dir(dir)
        .env_remove("FINCORPUS_BACKEND_URL")
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn ok(dir: &Path, args: &[&str]) -> String {
    let out = fincorpus(dir, args);
    assert!(
        out.status.success(),
        "fincorpus {args:?} failed with {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

const SUBJECTS: &[&str] = &[
    "Operating profit",
    "Net sales",
    "The company's order intake",
    "Earnings per share",
    "Pre-tax loss",
    "Cash flow from operations",
    "Market share in Finland",
];
const POSITIVE: &[&str] = &["rose", "increased", "improved", "grew"];
const NEGATIVE: &[&str] = &["fell", "decreased", "dropped", "declined"];
const NEUTRAL: &[&str] = &["was", "stood at", "totalled", "amounted to"];

/// Phrasebank-format lines with a roughly 12/60/28 label mix, Latin-1 encoded.
pub fn write_phrasebank(dir: &Path, name: &str, n: usize) -> PathBuf {
    let mut bytes = Vec::new();
    for i in 0..n {
        let (label, verbs) = match i % 25 {
            0..=2 => ("negative", NEGATIVE),
            3..=17 => ("neutral", NEUTRAL),
            _ => ("positive", POSITIVE),
        };
        let sentence = format!(
            "{} {} to EUR {}.{} mn in the {} quarter of 2009",
            SUBJECTS[i % SUBJECTS.len()],
            verbs[(i / 3) % verbs.len()],
            (i * 7) % 97 + 1,
            i % 10,
            ["first", "second", "third", "fourth"][i % 4],
        );
        bytes.extend(sentence.bytes());
        if i % 40 == 0 {
            // Latin-1 a-umlaut, as in the public files
            bytes.extend_from_slice(b" at J\xe4mer\xe4");
        }
        bytes.extend(format!(" .@{label}\n").bytes());
    }
    let path = dir.join(name);
    std::fs::write(&path, bytes).unwrap();
    path
}

pub fn write_synthetic(dir: &Path) -> PathBuf {
    let lines = [
        r#"{"text": "Quarterly revenue climbed  12 percent on strong demand.", "label": "positive"}"#,
        r#"{"text": "The board left the dividend unchanged.", "label": "neutral"}"#,
        r#"{"text": "Quarterly revenue climbed 12 percent on strong demand.", "label": "positive"}"#,
        r#"{"text": "Net loss widened as orders collapsed.", "label": "negative"}"#,
    ];
    let path = dir.join("generated.jsonl");
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();
    path
}

pub fn read_lines(path: &Path) -> Vec<serde_json::Value> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}
