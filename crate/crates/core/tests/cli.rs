use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sessionseq"))
        .arg("--root")
        .arg(root)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(root: &Path, args: &[&str]) -> String {
    let out = run(root, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn data_row(stdout: &str) -> Vec<String> {
    stdout.lines().nth(1).unwrap().split(',').map(str::to_owned).collect()
}

fn tree_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_owned()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

const GEN: [&str; 9] = ["gen", "--events", "500", "--zipf", "1.2", "--sessions", "3000", "--seed", "7"];

#[test]
fn gen_is_seed_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    ok(a.path(), &GEN);
    ok(b.path(), &GEN);
    let logs_a = tree_bytes(&a.path().join("logs"));
    assert_eq!(logs_a.len(), 24);
    assert_eq!(logs_a, tree_bytes(&b.path().join("logs")));

    let c = tempfile::tempdir().unwrap();
    let mut other = GEN;
    other[8] = "8";
    ok(c.path(), &other);
    assert_ne!(logs_a, tree_bytes(&c.path().join("logs")));
}

#[test]
fn pipeline_counts_every_generated_event() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let generated: u64 = data_row(&ok(root, &GEN))[0].parse().unwrap();
    assert_eq!(data_row(&ok(root, &["validate"]))[1].parse::<u64>().unwrap(), generated);
    ok(root, &["build-dict"]);
    ok(root, &["sessionize"]);
    let count = data_row(&ok(root, &["count", "--pattern", "*"]));
    assert_eq!(count[1].parse::<u64>().unwrap(), generated);

    let funnel = ok(root, &["funnel", "--stage", "web:*", "--stage", "*:click"]);
    let lines: Vec<&str> = funnel.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("(0, ") && lines[1].starts_with("(1, "));

    let rollup = ok(root, &["rollup"]);
    let mut per_level = [0u64; 6];
    for line in rollup.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        per_level[f[0].parse::<usize>().unwrap()] += f[9].parse::<u64>().unwrap();
    }
    assert!(per_level.iter().all(|&n| n == generated));

    ok(root, &["stats"]);
    ok(root, &["lm-train", "--order", "2"]);
    let eval = data_row(&ok(root, &["lm-eval"]));
    assert!(eval[3].parse::<f64>().unwrap() > 1.0);
    ok(root, &["collocations", "--measure", "g2"]);

    fs::write(root.join("desc.tsv"), "web:gone:::x:click\tremoved\n").unwrap();
    let cat = data_row(&ok(root, &["catalog", "--descriptions", "desc.tsv"]));
    assert_eq!(cat, ["500", "0", "1"]);
    let first = tree_bytes(&root.join("catalog"));
    ok(root, &["catalog", "--descriptions", "desc.tsv"]);
    assert_eq!(first, tree_bytes(&root.join("catalog")));
    assert_eq!(first.len(), 501);
}

#[test]
fn stages_are_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    ok(root, &GEN);
    ok(root, &["build-dict"]);
    ok(root, &["sessionize"]);
    let dict = fs::read(root.join("dictionaries/2012-01-01.json")).unwrap();
    let seqs = tree_bytes(&root.join("sequences"));
    ok(root, &["build-dict"]);
    ok(root, &["sessionize"]);
    assert_eq!(dict, fs::read(root.join("dictionaries/2012-01-01.json")).unwrap());
    assert_eq!(seqs, tree_bytes(&root.join("sequences")));
}

#[test]
fn funnel_without_stages_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["funnel"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--stage"));
}

#[test]
fn dictionary_mismatch_fails() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    ok(root, &GEN);
    ok(root, &["build-dict"]);
    ok(root, &["sessionize"]);
    ok(root, &["lm-train"]);
    // a different day's dictionary under the same path
    ok(root, &["gen", "--seed", "99", "--log-root", "other"]);
    ok(root, &["--log-root", "other", "build-dict"]);
    for args in [
        &["count", "--pattern", "*"][..],
        &["funnel", "--stage", "*"],
        &["stats"],
        &["collocations"],
        &["lm-train"],
    ] {
        let out = run(root, args);
        assert!(!out.status.success(), "{args:?} should fail");
        assert!(String::from_utf8_lossy(&out.stderr).contains("dictionary"), "{args:?}");
    }
    // the model keeps the id it was trained with, so it no longer matches either
    ok(root, &["--log-root", "other", "sessionize"]);
    assert!(!run(root, &["lm-eval"]).status.success());
}

#[test]
fn lenient_mode_accepts_what_strict_rejects() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let hour = root.join("logs/client_events/2012/01/01/00");
    fs::create_dir_all(&hour).unwrap();
    fs::write(
        hour.join("part-00000.log"),
        concat!(
            r#"{"event_initiator":"client_user","event_name":"Web:Home:::Tweet:Click","user_id":1,"session_id":"a","ip":"10.0.0.1","timestamp":1325376000000,"event_details":{}}"#,
            "\n",
            "not json\n"
        ),
    )
    .unwrap();
    let strict = run(root, &["validate"]);
    assert!(!strict.status.success());
    assert_eq!(data_row(&String::from_utf8(strict.stdout).unwrap())[2], "2");
    let lenient = run(root, &["--mode", "lenient", "validate"]);
    assert_eq!(data_row(&String::from_utf8(lenient.stdout).unwrap())[1..3], ["1", "1"]);
}
