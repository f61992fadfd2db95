use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn nsg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nsg"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = nsg(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        Fixture { _dir: dir, root }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// base (n points), knn graph and NSG index.
    fn pipeline(&self, n: usize) {
        let n = n.to_string();
        ok(&["gen-data", "--n", &n, "--d", "8", "--seed", "1", "--out", s(&self.path("base.fvecs"))]);
        ok(&["gen-data", "--n", "20", "--d", "8", "--seed", "2", "--out", s(&self.path("q.fvecs"))]);
        ok(&["build-knn", "--base", s(&self.path("base.fvecs")), "--k", "20", "--out", s(&self.path("knn.graph"))]);
        ok(&[
            "build-nsg", "--base", s(&self.path("base.fvecs")), "--knn", s(&self.path("knn.graph")),
            "--l-build", "40", "--m", "16", "--out", s(&self.path("index.nsg")),
        ]);
    }
}

#[test]
fn gen_data_size_and_determinism() {
    let f = Fixture::new();
    for name in ["a.fvecs", "b.fvecs"] {
        ok(&["gen-data", "--kind", "uniform", "--n", "1000", "--d", "8", "--seed", "5", "--out", s(&f.path(name))]);
    }
    let a = std::fs::read(f.path("a.fvecs")).unwrap();
    assert_eq!(a.len(), 1000 * (4 + 32));
    assert_eq!(a, std::fs::read(f.path("b.fvecs")).unwrap());
    ok(&["gen-data", "--kind", "gaussian", "--n", "20000", "--d", "4", "--seed", "5", "--out", s(&f.path("g.fvecs"))]);
    let g = nsg_core::io::read_fvecs(f.path("g.fvecs")).unwrap();
    let vals = g.as_slice();
    let mean = vals.iter().map(|&x| x as f64).sum::<f64>() / vals.len() as f64;
    let var = vals.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / vals.len() as f64;
    assert!(mean.abs() < 0.05, "{mean}");
    assert!((var.sqrt() - 3.0).abs() < 0.05, "{var}");
}

#[test]
fn build_search_bench_analyze() {
    let f = Fixture::new();
    f.pipeline(1500);
    let report = String::from_utf8(
        nsg(&["build-nsg", "--base", s(&f.path("base.fvecs")), "--knn", s(&f.path("knn.graph")),
              "--l-build", "40", "--m", "16", "--out", s(&f.path("again.nsg"))]).stderr,
    )
    .unwrap();
    assert!(report.contains("t2"), "{report}");
    assert!(report.contains("reachable_from_nav=1500"), "{report}");
    assert_eq!(std::fs::read(f.path("index.nsg")).unwrap(), std::fs::read(f.path("again.nsg")).unwrap());
    nsg_core::io::load_index(f.path("index.nsg")).unwrap();

    // searching for the base points themselves finds each point first
    let out = ok(&[
        "search", "--index", s(&f.path("index.nsg")), "--base", s(&f.path("base.fvecs")),
        "--query", s(&f.path("base.fvecs")), "--l", "50", "--K", "5", "--out", s(&f.path("self.ivecs")),
    ]);
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("mean_hops=") && stderr.contains("mean_distance_computations="));
    let rows = nsg_core::io::read_ivecs(f.path("self.ivecs")).unwrap();
    assert_eq!(rows.len(), 1500);
    assert!(rows.iter().enumerate().all(|(i, r)| r[0] == i as i32 && r.len() == 5));

    ok(&["ground-truth", "--base", s(&f.path("base.fvecs")), "--query", s(&f.path("q.fvecs")), "--K", "10", "--out", s(&f.path("gt.ivecs"))]);
    let out = ok(&[
        "bench", "--index", s(&f.path("index.nsg")), "--base", s(&f.path("base.fvecs")),
        "--query", s(&f.path("q.fvecs")), "--gt", s(&f.path("gt.ivecs")), "--l", "10,20,40,80", "--K", "10",
    ]);
    let csv = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 5);
    assert!(lines[0].starts_with("l,precision"));
    let last: f64 = lines[4].split(',').nth(1).unwrap().parse().unwrap();
    assert!(last >= 0.95, "{csv}");

    let out = ok(&["analyze", "--index", s(&f.path("index.nsg")), "--base", s(&f.path("base.fvecs"))]);
    let text = String::from_utf8(out.stdout).unwrap();
    for field in ["AOD", "MOD", "NN%", "SCC", "reachable_from_nav 1500"] {
        assert!(text.contains(field), "{text}");
    }
    let out = ok(&["analyze", "--index", s(&f.path("knn.graph")), "--base", s(&f.path("base.fvecs")), "--format", "csv"]);
    let csv = String::from_utf8(out.stdout).unwrap();
    assert!(csv.starts_with("n,aod,mod,nn_percent,scc_count"));
    assert!(csv.lines().nth(1).unwrap().contains(",1.000000,"), "{csv}");
}

#[test]
fn mrng_passes_msnet_check() {
    let f = Fixture::new();
    ok(&["gen-data", "--n", "300", "--d", "4", "--seed", "3", "--out", s(&f.path("b.fvecs"))]);
    ok(&["build-mrng", "--base", s(&f.path("b.fvecs")), "--out", s(&f.path("m.graph"))]);
    let out = ok(&["check-msnet", "--index", s(&f.path("m.graph")), "--base", s(&f.path("b.fvecs"))]);
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), "HOLDS");
}

#[test]
fn nndescent_method_is_available() {
    let f = Fixture::new();
    ok(&["gen-data", "--n", "2000", "--d", "8", "--seed", "4", "--out", s(&f.path("b.fvecs"))]);
    ok(&["build-knn", "--base", s(&f.path("b.fvecs")), "--k", "10", "--method", "nndescent", "--out", s(&f.path("a.graph"))]);
    ok(&["build-knn", "--base", s(&f.path("b.fvecs")), "--k", "10", "--method", "exact", "--out", s(&f.path("e.graph"))]);
    let ds = nsg_core::io::read_fvecs(f.path("b.fvecs")).unwrap();
    let approx = nsg_core::knn::KnnGraph::from_graph(&nsg_core::io::load_graph(f.path("a.graph")).unwrap().graph, &ds).unwrap();
    let exact = nsg_core::knn::KnnGraph::from_graph(&nsg_core::io::load_graph(f.path("e.graph")).unwrap().graph, &ds).unwrap();
    assert!(nsg_core::knn::knn_graph_recall(&approx, &exact).unwrap() >= 0.90);
}

#[test]
fn exit_codes() {
    let f = Fixture::new();
    f.pipeline(300);
    let base = f.path("base.fvecs");

    let missing = f.path("nope.fvecs");
    let out = nsg(&["build-knn", "--base", s(&missing), "--k", "5", "--out", s(&f.path("x"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr).unwrap().contains("nope.fvecs"));

    let out = nsg(&["build-nsg", "--base", s(&base), "--knn", s(&f.path("knn.graph")), "--l-build", "40", "--m", "0", "--out", s(&f.path("x"))]);
    assert_eq!(out.status.code(), Some(2));

    let out = nsg(&["search", "--index", s(&f.path("index.nsg")), "--base", s(&base), "--query", s(&f.path("q.fvecs")), "--l", "5", "--K", "10", "--out", s(&f.path("x"))]);
    assert_eq!(out.status.code(), Some(2));

    assert_eq!(nsg(&["frobnicate"]).status.code(), Some(2));

    std::fs::write(f.path("junk.nsg"), b"NSG1garbage").unwrap();
    let out = nsg(&["analyze", "--index", s(&f.path("junk.nsg")), "--base", s(&base)]);
    assert_eq!(out.status.code(), Some(3));
    std::fs::write(f.path("junk.fvecs"), [1u8, 2, 3]).unwrap();
    let out = nsg(&["analyze", "--index", s(&f.path("index.nsg")), "--base", s(&f.path("junk.fvecs"))]);
    assert_eq!(out.status.code(), Some(3));

    ok(&["ground-truth", "--base", s(&base), "--query", s(&f.path("q.fvecs")), "--K", "10", "--out", s(&f.path("gt.ivecs"))]);
    let out = nsg(&[
        "grid-search", "--base", s(&base), "--query", s(&f.path("q.fvecs")), "--gt", s(&f.path("gt.ivecs")),
        "--k", "10", "--l-build", "20", "--m", "1", "--l", "10", "--target", "1.01",
    ]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn split_and_grid_search() {
    let f = Fixture::new();
    ok(&["gen-data", "--n", "1010", "--d", "6", "--seed", "9", "--out", s(&f.path("all.fvecs"))]);
    ok(&["split", "--base", s(&f.path("all.fvecs")), "--fraction", "0.01", "--seed", "9",
         "--out", s(&f.path("b.fvecs")), "--query", s(&f.path("q.fvecs"))]);
    assert_eq!(nsg_core::io::read_fvecs(f.path("q.fvecs")).unwrap().len(), 10);
    assert_eq!(nsg_core::io::read_fvecs(f.path("b.fvecs")).unwrap().len(), 1000);
    ok(&["ground-truth", "--base", s(&f.path("b.fvecs")), "--query", s(&f.path("q.fvecs")), "--K", "10", "--out", s(&f.path("gt.ivecs"))]);
    let out = ok(&[
        "grid-search", "--base", s(&f.path("b.fvecs")), "--query", s(&f.path("q.fvecs")), "--gt", s(&f.path("gt.ivecs")),
        "--k", "20", "--l-build", "40", "--m", "1,16", "--l", "10,20,40,80", "--target", "0.9", "--by-distance-computations",
    ]);
    let csv = String::from_utf8(out.stdout).unwrap();
    assert!(csv.lines().nth(1).unwrap().starts_with("20,40,16,"), "{csv}");
}
