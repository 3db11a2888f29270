use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use attrfuse::io::synth;
use attrfuse::io::vecs::{save_vectors, VecFormat};
use attrfuse::metric::{l2, Points};
use tempfile::TempDir;

const COLORS: [&str; 4] = ["red", "green", "blue", "teal"];

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_attrfuse"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    run(dir, args).status.code().unwrap()
}

struct Fixture {
    dir: TempDir,
    contents: Points,
    colors: Vec<usize>,
    sizes: Vec<f64>,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let contents = synth::uniform_points(300, 4, 11);
        let colors: Vec<usize> = (0..300).map(|i| (i * 7 + i / 5) % 4).collect();
        let sizes: Vec<f64> = (0..300).map(|i| ((i * 37) % 101) as f64 / 100.0).collect();
        save_vectors(&dir.path().join("base.csv"), &contents, VecFormat::Csv).unwrap();

        let mut one = String::from("#schema cat:3\nid,color\n");
        let mut two = String::from("#schema cat:3,1\nid,color,size\n");
        let mut num = String::from("#schema 1\nid,size\n");
        for i in 0..300 {
            writeln!(one, "{i},{}", COLORS[colors[i]]).unwrap();
            writeln!(two, "{i},{},{}", COLORS[colors[i]], sizes[i] * 4.0).unwrap();
            writeln!(num, "{i},{}", sizes[i]).unwrap();
        }
        std::fs::write(dir.path().join("color.csv"), one).unwrap();
        std::fs::write(dir.path().join("two.csv"), two).unwrap();
        std::fs::write(dir.path().join("size.csv"), num).unwrap();

        let queries = synth::uniform_points(8, 4, 12);
        save_vectors(&dir.path().join("q.csv"), &queries, VecFormat::Csv).unwrap();
        let mut qa = String::from("#schema cat:3\nid,color\n");
        for i in 0..8 {
            writeln!(qa, "{i},{}", COLORS[i % 4]).unwrap();
        }
        std::fs::write(dir.path().join("qa.csv"), qa).unwrap();
        std::fs::write(dir.path().join("lo.csv"), "0.2\n".repeat(8)).unwrap();
        std::fs::write(dir.path().join("hi.csv"), "0.5\n".repeat(8)).unwrap();
        Self {
            dir,
            contents,
            colors,
            sizes,
        }
    }

    fn path(&self) -> &Path {
        self.dir.path()
    }

    fn file(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn queries(&self) -> Points {
        synth::uniform_points(8, 4, 12)
    }

    fn brute(&self, q: &[f64], k: usize, keep: impl Fn(usize) -> bool) -> Vec<usize> {
        let mut ids: Vec<usize> = (0..300).filter(|&i| keep(i)).collect();
        ids.sort_by(|&a, &b| {
            l2(self.contents.row(a), q)
                .total_cmp(&l2(self.contents.row(b), q))
                .then(a.cmp(&b))
        });
        ids.truncate(k);
        ids
    }
}

/// Result ids grouped by query from the tab-separated output.
fn ids_by_query(stdout: &str, queries: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); queries];
    for line in stdout.lines().skip(1) {
        let cells: Vec<&str> = line.split('\t').collect();
        out[cells[0].parse::<usize>().unwrap()].push(cells[2].parse().unwrap());
    }
    out
}

#[test]
fn hybrid_build_and_query() {
    let fx = Fixture::new();
    let dir = fx.path();
    ok(
        dir,
        &[
            "build",
            "--vectors",
            "base.csv",
            "--attributes",
            "color.csv",
            "-o",
            "h.idx",
        ],
    );
    let out = ok(
        dir,
        &[
            "query",
            "--index",
            "h.idx",
            "--queries",
            "q.csv",
            "--query-attributes",
            "qa.csv",
            "-k",
            "5",
            "--epsilon",
            "1e-12",
        ],
    );
    let got = ids_by_query(&out, 8);
    for (i, q) in fx.queries().rows().enumerate() {
        assert_eq!(
            got[i],
            fx.brute(q, 5, |r| fx.colors[r] == i % 4),
            "query {i}"
        );
    }

    let json = ok(
        dir,
        &[
            "query",
            "--index",
            "h.idx",
            "--queries",
            "q.csv",
            "--query-attributes",
            "qa.csv",
            "-k",
            "3",
            "--json",
        ],
    );
    let lines: Vec<serde_json::Value> = json
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 24);
    assert!(lines
        .iter()
        .all(|l| l["id"].is_u64() && l["score"].is_f64()));

    let stats = ok(dir, &["stats", "--index", "h.idx"]);
    assert!(stats.contains("hybrid"));
    assert!(stats
        .lines()
        .any(|l| l.starts_with("records") && l.ends_with("300")));
    assert!(stats
        .lines()
        .any(|l| l.starts_with("classes") && l.ends_with('4')));
    assert!(stats.contains("4 tokens over 1 categorical attributes"));
}

#[test]
fn builds_are_reproducible() {
    let fx = Fixture::new();
    let dir = fx.path();
    for name in ["a.idx", "b.idx"] {
        ok(
            dir,
            &[
                "--backend",
                "graph",
                "build",
                "--vectors",
                "base.csv",
                "--attributes",
                "color.csv",
                "-o",
                name,
            ],
        );
    }
    assert_eq!(
        std::fs::read(fx.file("a.idx")).unwrap(),
        std::fs::read(fx.file("b.idx")).unwrap()
    );
}

#[test]
fn overrides_without_values_use_fixed_defaults() {
    let fx = Fixture::new();
    let dir = fx.path();
    ok(
        dir,
        &[
            "build",
            "--vectors",
            "base.csv",
            "--attributes",
            "color.csv",
            "-o",
            "h.idx",
            "--alpha-override",
            "--beta-override",
        ],
    );
    let stats = ok(dir, &["stats", "--index", "h.idx"]);
    assert!(
        stats
            .lines()
            .any(|l| l.starts_with("alpha") && l.ends_with(" 10")),
        "{stats}"
    );
    assert!(
        stats
            .lines()
            .any(|l| l.starts_with("beta") && l.ends_with(" 2")),
        "{stats}"
    );
    ok(
        dir,
        &[
            "build",
            "--vectors",
            "base.csv",
            "--attributes",
            "color.csv",
            "-o",
            "h.idx",
            "--alpha-override",
            "25",
        ],
    );
    assert!(ok(dir, &["stats", "--index", "h.idx"])
        .lines()
        .any(|l| l.starts_with("alpha") && l.ends_with(" 25")));
}

#[test]
fn multi_priority_update_matches_fresh_build() {
    let fx = Fixture::new();
    let dir = fx.path();
    ok(
        dir,
        &[
            "build",
            "--vectors",
            "base.csv",
            "--attributes",
            "two.csv",
            "-o",
            "m.idx",
            "--priority",
            "1,0",
        ],
    );
    assert!(ok(dir, &["stats", "--index", "m.idx"])
        .lines()
        .any(|l| l.starts_with("priority") && l.ends_with("1,0")));
    ok(
        dir,
        &[
            "update-priority",
            "--index",
            "m.idx",
            "-o",
            "u.idx",
            "--priority",
            "0,1",
        ],
    );
    ok(
        dir,
        &[
            "build",
            "--vectors",
            "base.csv",
            "--attributes",
            "two.csv",
            "-o",
            "f.idx",
            "--priority",
            "0,1",
        ],
    );
    assert_eq!(
        std::fs::read(fx.file("u.idx")).unwrap(),
        std::fs::read(fx.file("f.idx")).unwrap()
    );

    let mut qa = String::from("#schema cat:3,1\nid,color,size\n");
    for i in 0..8 {
        writeln!(
            qa,
            "{i},{},{}",
            COLORS[fx.colors[i * 3]],
            fx.sizes[i * 3] * 4.0
        )
        .unwrap();
    }
    std::fs::write(fx.file("qa2.csv"), qa).unwrap();
    let out = ok(
        dir,
        &[
            "query",
            "--index",
            "u.idx",
            "--queries",
            "q.csv",
            "--query-attributes",
            "qa2.csv",
            "-k",
            "2",
            "--epsilon",
            "1e-12",
        ],
    );
    let got = ids_by_query(&out, 8);
    for (i, q) in fx.queries().rows().enumerate() {
        let want = fx.brute(q, 2, |r| {
            fx.colors[r] == fx.colors[i * 3] && fx.sizes[r] == fx.sizes[i * 3]
        });
        assert_eq!(got[i], want, "query {i}");
    }
}

#[test]
fn range_queries_respect_bounds() {
    let fx = Fixture::new();
    let dir = fx.path();
    ok(
        dir,
        &[
            "build",
            "--kind",
            "range",
            "--vectors",
            "base.csv",
            "--attributes",
            "size.csv",
            "-o",
            "r.idx",
        ],
    );
    let out = ok(
        dir,
        &[
            "range",
            "--index",
            "r.idx",
            "--queries",
            "q.csv",
            "--lower",
            "lo.csv",
            "--upper",
            "hi.csv",
            "-k",
            "5",
        ],
    );
    let got = ids_by_query(&out, 8);
    let mut hits = 0;
    for (i, q) in fx.queries().rows().enumerate() {
        assert!(got[i].iter().all(|&r| (0.2..=0.5).contains(&fx.sizes[r])));
        let truth = fx.brute(q, 5, |r| (0.2..=0.5).contains(&fx.sizes[r]));
        hits += got[i].iter().filter(|r| truth.contains(r)).count();
    }
    assert!(hits >= 36, "{hits}/40");
    assert!(ok(dir, &["stats", "--index", "r.idx"]).contains("slack"));
}

#[test]
fn bench_reports_recall() {
    let fx = Fixture::new();
    let dir = fx.path();
    ok(
        dir,
        &[
            "build",
            "--vectors",
            "base.csv",
            "--attributes",
            "color.csv",
            "-o",
            "h.idx",
        ],
    );
    let table = ok(
        dir,
        &[
            "bench",
            "--index",
            "h.idx",
            "--queries",
            "q.csv",
            "--query-attributes",
            "qa.csv",
            "--epsilon",
            "1e-300",
        ],
    );
    let recall = table.lines().find(|l| l.starts_with("recall@k")).unwrap();
    assert!(recall.ends_with("1.0000"), "{recall}");

    let json = ok(
        dir,
        &[
            "bench",
            "--index",
            "h.idx",
            "--queries",
            "q.csv",
            "--query-attributes",
            "qa.csv",
            "--json",
            "--threads",
            "2",
        ],
    );
    let lines: Vec<serde_json::Value> = json
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 9);
    let summary = lines.last().unwrap();
    assert_eq!(summary["type"], "summary");
    assert!((0.0..=1.0).contains(&summary["recall"].as_f64().unwrap()));

    ok(
        dir,
        &[
            "build",
            "--kind",
            "range",
            "--vectors",
            "base.csv",
            "--attributes",
            "size.csv",
            "-o",
            "r.idx",
        ],
    );
    let table = ok(
        dir,
        &[
            "bench",
            "--index",
            "r.idx",
            "--queries",
            "q.csv",
            "--lower",
            "lo.csv",
            "--upper",
            "hi.csv",
        ],
    );
    assert!(table.contains("range"));
}

#[test]
fn input_errors_exit_with_two() {
    let fx = Fixture::new();
    let dir = fx.path();
    std::fs::write(fx.file("bad.csv"), "1,2,3,4\n1,2\n").unwrap();
    std::fs::write(fx.file("short.fvecs"), [4u8, 0, 0, 0, 0, 0]).unwrap();
    assert_eq!(
        code(
            dir,
            &[
                "build",
                "--vectors",
                "bad.csv",
                "--attributes",
                "color.csv",
                "-o",
                "x.idx"
            ]
        ),
        2
    );
    assert_eq!(
        code(
            dir,
            &[
                "build",
                "--vectors",
                "short.fvecs",
                "--attributes",
                "color.csv",
                "-o",
                "x.idx"
            ]
        ),
        2
    );
    assert_eq!(
        code(
            dir,
            &[
                "build",
                "--vectors",
                "missing.csv",
                "--attributes",
                "color.csv",
                "-o",
                "x.idx"
            ]
        ),
        2
    );
    assert_eq!(
        code(
            dir,
            &[
                "build",
                "--vectors",
                "base.csv",
                "--attributes",
                "base.csv",
                "-o",
                "x.idx"
            ]
        ),
        2
    );
    assert_eq!(
        code(
            dir,
            &[
                "build",
                "--vectors",
                "base.csv",
                "--attributes",
                "color.csv",
                "--kind",
                "range",
                "-o",
                "x.idx"
            ]
        ),
        2
    );
    assert_eq!(
        code(
            dir,
            &[
                "build",
                "--vectors",
                "base.csv",
                "--attributes",
                "two.csv",
                "-o",
                "x.idx",
                "--alpha-override"
            ]
        ),
        2
    );
    assert_eq!(code(dir, &["build", "--no-such-flag"]), 2);
    assert_eq!(
        code(dir, &["--priority", "0,0", "stats", "--index", "x.idx"]),
        2
    );

    ok(
        dir,
        &[
            "build",
            "--vectors",
            "base.csv",
            "--attributes",
            "color.csv",
            "-o",
            "h.idx",
        ],
    );
    let mut bytes = std::fs::read(fx.file("h.idx")).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 1;
    std::fs::write(fx.file("corrupt.idx"), &bytes).unwrap();
    assert_eq!(code(dir, &["stats", "--index", "corrupt.idx"]), 2);
    assert_eq!(
        code(
            dir,
            &["update-priority", "--index", "h.idx", "--priority", "0"]
        ),
        2
    );
}

#[test]
fn query_errors_exit_with_three() {
    let fx = Fixture::new();
    let dir = fx.path();
    ok(
        dir,
        &[
            "build",
            "--vectors",
            "base.csv",
            "--attributes",
            "color.csv",
            "-o",
            "h.idx",
        ],
    );
    std::fs::write(fx.file("unseen.csv"), "#schema cat:3\nid,color\n0,mauve\n").unwrap();
    std::fs::write(fx.file("one.csv"), "0.1,0.2,0.3,0.4\n").unwrap();
    assert_eq!(
        code(
            dir,
            &[
                "query",
                "--index",
                "h.idx",
                "--queries",
                "one.csv",
                "--query-attributes",
                "unseen.csv"
            ]
        ),
        3
    );
    assert_eq!(
        code(
            dir,
            &[
                "range",
                "--index",
                "h.idx",
                "--queries",
                "q.csv",
                "--lower",
                "lo.csv",
                "--upper",
                "hi.csv"
            ]
        ),
        3
    );
    assert_eq!(
        code(
            dir,
            &[
                "query",
                "--index",
                "h.idx",
                "--queries",
                "q.csv",
                "--query-attributes",
                "qa.csv",
                "-k",
                "0"
            ]
        ),
        3
    );

    ok(
        dir,
        &[
            "build",
            "--kind",
            "range",
            "--vectors",
            "base.csv",
            "--attributes",
            "size.csv",
            "-o",
            "r.idx",
        ],
    );
    std::fs::write(fx.file("flip.csv"), "0.9\n".repeat(8)).unwrap();
    assert_eq!(
        code(
            dir,
            &[
                "range",
                "--index",
                "r.idx",
                "--queries",
                "q.csv",
                "--lower",
                "flip.csv",
                "--upper",
                "hi.csv"
            ]
        ),
        3
    );
}
