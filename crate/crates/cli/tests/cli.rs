use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::json;

fn cwemap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cwemap"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = cwemap(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    cwemap(args).status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write(path: &Path, body: &str) {
    std::fs::create_dir_all(path.parent().unwrap()).unwrap();
    std::fs::write(path, body).unwrap();
}

const SQLI: &str = "SQL injection in the login form of Acme Portal 2.3.1 allows remote attackers to execute arbitrary SQL commands via the username parameter.";
const XSS: &str = "Cross-site scripting (XSS) in the comment widget allows remote attackers to inject arbitrary web script or HTML via the body field.";
const UAF: &str = "Use after free in the image decoder allows attackers to execute code via a crafted file, because memory is referenced after it has been freed.";

fn v4(id: &str, state: &str, description: &str) -> String {
    json!({
        "data_type": "CVE",
        "data_format": "MITRE",
        "data_version": "4.0",
        "CVE_data_meta": {"ID": id, "ASSIGNER": "cve@mitre.org", "STATE": state},
        "description": {"description_data": [{"lang": "eng", "value": description}]}
    })
    .to_string()
}

fn nvd_page(cwes: &[&str]) -> String {
    let mut html = String::from("<html><body><table data-testid=\"vuln-CWEs-table\"><tbody>");
    for c in cwes {
        html.push_str(&format!(
            "<tr><td><a href=\"https://cwe.mitre.org/\">{c}</a></td></tr>"
        ));
    }
    html.push_str("</tbody></table></body></html>");
    html
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let feed = root.join("feed");
        write(
            &feed.join("2021/0xxx/CVE-2021-0001.json"),
            &v4("CVE-2021-0001", "PUBLIC", SQLI),
        );
        write(
            &feed.join("2021/0xxx/CVE-2021-0002.json"),
            &v4("CVE-2021-0002", "PUBLIC", XSS),
        );
        write(
            &feed.join("2020/1xxx/CVE-2020-1003.json"),
            &v4("CVE-2020-1003", "PUBLIC", UAF),
        );
        write(
            &feed.join("2021/0xxx/CVE-2021-0009.json"),
            &v4("CVE-2021-0009", "REJECT", "** REJECT ** duplicate."),
        );
        write(
            &feed.join("2019/0xxx/CVE-2019-0004.json"),
            &v4("CVE-2019-0004", "PUBLIC", SQLI),
        );
        write(
            &root.join("pages/CVE-2021-0001.html"),
            &nvd_page(&["CWE-89"]),
        );
        write(
            &root.join("pages/CVE-2021-0002.html"),
            &nvd_page(&["CWE-79", "NVD-CWE-Other"]),
        );
        write(
            &root.join("pages/CVE-2020-1003.html"),
            &nvd_page(&["CWE-416"]),
        );
        write(
            &root.join("dataset.csv"),
            "cve_id,labels\nCVE-2021-0001,3\nCVE-2021-0002,2\nCVE-2020-1003,7\n",
        );
        Self { _dir: dir, root }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }
}

#[test]
fn pipeline_end_to_end_and_replayable() {
    let f = Fixture::new();
    let (records, candidates, store, labelled) = (
        f.path("records.jsonl"),
        f.path("candidates.csv"),
        f.path("store"),
        f.path("labelled.jsonl"),
    );
    ok(&["ingest", "--feed", s(&f.path("feed")), "--out", s(&records)]);
    let text = std::fs::read_to_string(&records).unwrap();
    assert_eq!(
        text.lines().count(),
        3,
        "rejected and out-of-window records dropped"
    );

    ok(&[
        "narrow",
        "--records",
        s(&records),
        "--top-n",
        "3",
        "--out",
        s(&candidates),
    ]);
    let cand = std::fs::read_to_string(&candidates).unwrap();
    assert!(cand.starts_with("cve_id,best_rank,score\n"));
    assert_eq!(cand.lines().count(), 4);

    let pages = f.path("pages");
    let scrape = [
        "scrape",
        "--ids",
        s(&candidates),
        "--store",
        s(&store),
        "--fixtures",
        s(&pages),
        "--records",
        s(&records),
        "--out",
        s(&labelled),
    ];
    ok(&scrape);
    let labelled_text = std::fs::read_to_string(&labelled).unwrap();
    assert!(
        labelled_text.contains("\"nvd_labels\":[\"CWE-79\",\"NVD-CWE-Other\"]"),
        "{labelled_text}"
    );
    ok(&scrape);
    assert!(
        !store.join("CVE-2021-0001.1.html").exists(),
        "existing snapshots are not fetched again"
    );

    let table = ok(&["rank", "--records", s(&labelled), "--cve", "CVE-2021-0001"]);
    let first = table.lines().nth(1).unwrap();
    assert!(first.contains("CWE-89"), "{table}");

    let reports: Vec<String> = (0..2)
        .map(|i| {
            let out = f.path(&format!("report{i}.json"));
            let rankings = f.path(&format!("rankings{i}.jsonl"));
            ok(&["rank", "--records", s(&labelled), "--out", s(&rankings)]);
            ok(&[
                "eval",
                "--records",
                s(&labelled),
                "--dataset",
                s(&f.path("dataset.csv")),
                "--out",
                s(&out),
            ]);
            assert_eq!(
                std::fs::read(&rankings).unwrap(),
                std::fs::read(f.path("rankings0.jsonl")).unwrap()
            );
            std::fs::read_to_string(out).unwrap()
        })
        .collect();
    assert_eq!(reports[0], reports[1]);
    let report: serde_json::Value = serde_json::from_str(&reports[0]).unwrap();
    assert_eq!(report["model"], "BM25 +preproc");
    assert_eq!(report["n_queries"], 3);
    assert_eq!(report["mrr"], 1.0);

    let from_file = ok(&[
        "eval",
        "--rankings",
        s(&f.path("rankings0.jsonl")),
        "--dataset",
        s(&f.path("dataset.csv")),
        "--plots",
        s(&f.path("plots")),
        "--compare",
        s(&f.path("report0.json")),
    ]);
    assert_eq!(
        from_file.lines().count(),
        3,
        "header and two rows:\n{from_file}"
    );
    assert!(f.path("plots/mrr.svg").exists());
    assert!(f.path("plots/ndcg_at_5.svg").exists());

    for i in 0..2 {
        ok(&[
            "split",
            "--dataset",
            s(&f.path("dataset.csv")),
            "--out-dir",
            s(&f.path(&format!("split{i}"))),
        ]);
        ok(&[
            "export-train",
            "--dataset",
            s(&f.path("dataset.csv")),
            "--records",
            s(&labelled),
            "--negatives",
            "2",
            "--out",
            s(&f.path(&format!("pairs{i}.jsonl"))),
        ]);
    }
    assert_eq!(
        std::fs::read(f.path("split0/train.csv")).unwrap(),
        std::fs::read(f.path("split1/train.csv")).unwrap()
    );
    let pairs = std::fs::read(f.path("pairs0.jsonl")).unwrap();
    assert_eq!(pairs, std::fs::read(f.path("pairs1.jsonl")).unwrap());
    assert_eq!(pairs.iter().filter(|&&b| b == b'\n').count(), 9);
}

#[test]
fn stats_prints_totals() {
    let f = Fixture::new();
    write(
        &f.path("d.csv"),
        "cve_id,labels\nCVE-2021-0001,1\nCVE-2021-0002,2\nCVE-2021-0003,20-14\nCVE-2021-0004,2\n",
    );
    let out = ok(&["stats", s(&f.path("d.csv"))]);
    assert!(out.starts_with("total\t4\nsingle\t3\ncausal\t1\n"), "{out}");
    assert!(out.contains("2\tCWE-79\t2\t"));
    let json: serde_json::Value =
        serde_json::from_str(&ok(&["stats", s(&f.path("d.csv")), "--json"])).unwrap();
    assert_eq!(json["per_label_counts"][1], 2);
}

#[test]
fn no_overlap_record_ranks_in_fallback_order() {
    let f = Fixture::new();
    let rec = json!({"cve_id": "CVE-2021-0042", "title": "", "description": "zzqx wvvy", "state": "accepted"});
    write(&f.path("r.jsonl"), &format!("{rec}\n"));
    let out = f.path("r_out.jsonl");
    ok(&[
        "rank",
        "--ranker",
        "bm25",
        "--records",
        s(&f.path("r.jsonl")),
        "--cve",
        "CVE-2021-0042",
        "--out",
        s(&out),
    ]);
    let ranking: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    let entries = ranking["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 25);
    for (i, e) in entries.iter().enumerate() {
        assert_eq!(e["rank"], i + 1);
        assert_eq!(e["score"], 0.0);
    }
    assert_eq!(ranking["fallback"], true);
}

#[test]
fn config_values_apply_and_flags_win() {
    let f = Fixture::new();
    write(&f.path("d.csv"), "cve_id,labels\nCVE-2021-0001,1\n");
    write(
        &f.path("e.csv"),
        "cve_id,labels\nCVE-2021-0001,1\nCVE-2021-0002,1\n",
    );
    let config = f.path("run.toml");
    write(
        &config,
        &format!("[paths]\ndataset = {:?}\n", s(&f.path("d.csv"))),
    );
    assert!(ok(&["--config", s(&config), "stats"]).starts_with("total\t1\n"));
    assert!(ok(&["--config", s(&config), "stats", s(&f.path("e.csv"))]).starts_with("total\t2\n"));
}

#[test]
fn exit_codes() {
    let f = Fixture::new();
    assert_eq!(code(&["stats", "/no/such/dataset.csv"]), 1, "missing input");
    assert_eq!(code(&["rank", "--bogus"]), 1, "unknown flag");
    assert_eq!(code(&["stats"]), 1, "required path absent");
    write(&f.path("bad.toml"), "[rank]\nkone = 2\n");
    assert_eq!(
        code(&[
            "--config",
            s(&f.path("bad.toml")),
            "stats",
            s(&f.path("dataset.csv"))
        ]),
        1
    );
    assert_eq!(code(&["--help"]), 0);

    write(&f.path("bad.csv"), "cve_id,labels\nCVE-2021-0001,26\n");
    assert_eq!(
        code(&["stats", s(&f.path("bad.csv"))]),
        2,
        "out-of-range label"
    );

    let rec = json!({"cve_id": "CVE-2021-0001", "description": SQLI, "state": "accepted"});
    write(&f.path("r.jsonl"), &format!("{rec}\n"));
    let out = cwemap(&[
        "rank",
        "--ranker",
        "external",
        "--scorer-url",
        "http://127.0.0.1:9",
        "--timeout-secs",
        "1",
        "--records",
        s(&f.path("r.jsonl")),
        "--jobs",
        "1",
    ]);
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    write(&f.path("ids.txt"), "CVE-2021-0404\n");
    let (ids, st, pages) = (f.path("ids.txt"), f.path("st"), f.path("pages"));
    let scrape = [
        "scrape",
        "--ids",
        s(&ids),
        "--store",
        s(&st),
        "--fixtures",
        s(&pages),
    ];
    assert_eq!(code(&scrape), 3, "fetch failure is an upstream error");
}

#[test]
fn preprocess_and_score_generated() {
    let f = Fixture::new();
    let report: serde_json::Value = serde_json::from_str(&ok(&[
        "preprocess",
        "--text",
        "Fixed in 2.3.1, see https://example.com/a and CVE-2021-1234.",
    ]))
    .unwrap();
    let output = report["output"].as_str().unwrap();
    assert!(
        !output.contains("https") && !output.contains("2.3.1") && !output.contains("CVE-"),
        "{output}"
    );

    let preds = f.path("preds.jsonl");
    write(
        &preds,
        &[
            json!({"cve_id": "CVE-2021-0001", "label": "Improper Neutralization of Special Elements used in an SQL Command ('SQL Injection')"}),
            json!({"cve_id": "CVE-2021-0002", "label": "double-free"}),
            json!({"cve_id": "CVE-2020-1003", "label": "use after free"}),
        ]
        .iter()
        .map(|v| format!("{v}\n"))
        .collect::<String>(),
    );
    let out = ok(&[
        "score-generated",
        "--predictions",
        s(&preds),
        "--dataset",
        s(&f.path("dataset.csv")),
    ]);
    assert!(out.contains("macro F1 0.5000 over 4 classes"), "{out}");
    assert!(out.contains("double-free *"));
}
