use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};

use tofbench::dataserver::Client;
use tofbench::dataset::{AttrValue, XUnits};
use tofbench::operators::{
    convert_units, extract_group, merge, normalize, relabel, time_focus, FocusParams, Normalization,
};
use tofbench::peaks::{
    analyze, apply_goniometer, format_peaks, index_peaks, read_assignments, refine_ub,
    DetectorVolume, FindParams, Peak,
};
use tofbench::retrievers::{load_run, probe, read_runfile, write_runfile, LoadSelection};
use tofbench::synth::{powder_run, PowderConfig};
use tofbench::views::{image_raster, Viewport};

fn tofbench(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tofbench"))
        .args(args)
        .current_dir(dir)
        .env_remove("TOFBENCH_PORT")
        .env_remove("TOFBENCH_ROOT")
        .output()
        .unwrap()
}

fn ok(args: &[&str], dir: &Path) -> String {
    let out = tofbench(args, dir);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str], dir: &Path) -> (i32, String) {
    let out = tofbench(args, dir);
    (
        out.status.code().unwrap(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn small_powder(dir: &Path, runs: u32) {
    ok(
        &[
            "gen",
            "powder",
            "--runs",
            &runs.to_string(),
            "--spectra",
            "20",
            "--bins",
            "400",
            "--seed",
            "3",
            "--out",
            ".",
        ],
        dir,
    );
}

#[test]
fn info_lists_every_dataset_with_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = PowderConfig {
        n_spectra: 12,
        n_bins: 100,
        ..Default::default()
    };
    let run = powder_run(&cfg, 0, 1);
    let mut datasets: Vec<_> = run.datasets.iter().map(|d| d.data.clone()).collect();
    datasets.push(datasets[1].clone().with_title("copy"));
    write_runfile(&dir.path().join("three.trf"), "GPPD", 5, 77, &datasets).unwrap();
    let text = ok(&["info", "three.trf"], dir.path());
    let d = probe(&dir.path().join("three.trf")).unwrap();
    assert!(text.contains("datasets:    3"), "{text}");
    for e in &d.entries {
        let line = text
            .lines()
            .find(|l| l.contains(&format!(" {} ", e.length)))
            .expect("entry line");
        assert!(
            line.contains(&e.n_spectra.to_string()) && line.contains(&e.n_bins.to_string()),
            "{line}"
        );
    }
    assert!(text.contains("run_number:  5") && text.contains("start_time:  77"));
}

#[test]
fn reduce_matches_hand_composed_operators() {
    let dir = tempfile::tempdir().unwrap();
    small_powder(dir.path(), 4);
    ok(&["reduce", "--script", "reduce.tbs"], dir.path());
    let merged = read_runfile(&dir.path().join("merged.trf"), &LoadSelection::all())
        .unwrap()
        .remove(0);
    assert_eq!(merged.len(), 4);

    let mut paths: Vec<_> = std::fs::read_dir(dir.path().join("runs"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    paths.sort();
    let mut all: Option<tofbench::dataset::DataSet> = None;
    for p in paths {
        let run = load_run(&p, &LoadSelection::all()).unwrap();
        let hist = run.histograms().next().unwrap();
        let b = extract_group(hist, "bank_angle_deg", &AttrValue::F64(90.0)).unwrap();
        let b = normalize(&b, Normalization::Monitor(run.monitor().unwrap())).unwrap();
        let b = relabel(&b, "{run_number} {start_time}").unwrap();
        all = Some(match all {
            None => b,
            Some(a) => merge(&a, &b).unwrap(),
        });
    }
    let expect = all.unwrap();
    for (a, b) in merged.spectra().iter().zip(expect.spectra()) {
        assert_eq!((a.label(), a.counts()), (b.label(), b.counts()));
    }
}

#[test]
fn usage_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["info", "--bogus", "x"][..],
        &["frobnicate"],
        &["raster", "x.trf"],
        &["convert", "x.trf", "--to", "kelvin", "-o", "y"],
    ] {
        let (c, err) = code(args, dir.path());
        assert_eq!(c, 1, "{args:?}");
        assert!(err.starts_with("error:"), "{err}");
    }
    assert_eq!(code(&["--help"], dir.path()).0, 0);
    assert_eq!(code(&["--version"], dir.path()).0, 0);
}

#[test]
fn data_io_and_network_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("junk.trf"), b"garbage").unwrap();
    assert_eq!(code(&["info", "missing.trf"], dir.path()).0, 3);
    assert_eq!(code(&["info", "junk.trf"], dir.path()).0, 2);
    std::fs::write(dir.path().join("bad.tbs"), "x = Frobnicate(1)\n").unwrap();
    let (c, err) = code(&["reduce", "--script", "bad.tbs"], dir.path());
    assert_eq!(c, 2);
    assert!(err.contains("line 1:5"), "{err}");
    std::fs::write(dir.path().join("miss.tbs"), "r = Load(\"nope.trf\")\n").unwrap();
    assert_eq!(code(&["reduce", "--script", "miss.tbs"], dir.path()).0, 3);

    let taken = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = taken.local_addr().unwrap().port().to_string();
    let root = dir.path().to_str().unwrap();
    assert_eq!(
        code(&["serve", "--root", root, "--port", &port], dir.path()).0,
        4
    );
    assert_eq!(code(&["live", "--port", &port], dir.path()).0, 4);
}

#[test]
fn raster_is_deterministic_and_equals_the_library() {
    let dir = tempfile::tempdir().unwrap();
    small_powder(dir.path(), 1);
    let run = dir
        .path()
        .join("runs")
        .read_dir()
        .unwrap()
        .next()
        .unwrap()
        .unwrap()
        .path();
    let run = run.to_str().unwrap();
    let args = [
        "raster", run, "--ds", "1", "--width", "64", "--height", "50", "-o",
    ];
    ok(&[&args[..], &["a.pgm"]].concat(), dir.path());
    ok(&[&args[..], &["b.pgm"]].concat(), dir.path());
    let (a, b) = (
        std::fs::read(dir.path().join("a.pgm")).unwrap(),
        std::fs::read(dir.path().join("b.pgm")).unwrap(),
    );
    assert_eq!(a, b);
    let ds = read_runfile(Path::new(run), &LoadSelection::datasets([1]))
        .unwrap()
        .remove(0);
    assert_eq!(
        a,
        image_raster(&ds, &Viewport::new(64, 50)).unwrap().to_pgm()
    );
    let (c, _) = code(
        &[
            "raster", run, "--width", "0", "--height", "5", "-o", "z.pgm",
        ],
        dir.path(),
    );
    assert_eq!(c, 1);
}

#[test]
fn convert_equals_focus_then_convert() {
    let dir = tempfile::tempdir().unwrap();
    small_powder(dir.path(), 1);
    let run = dir
        .path()
        .join("runs")
        .read_dir()
        .unwrap()
        .next()
        .unwrap()
        .unwrap()
        .path();
    ok(
        &[
            "convert",
            run.to_str().unwrap(),
            "--to",
            "d",
            "--focus",
            "45,20,1.5",
            "-o",
            "d.trf",
        ],
        dir.path(),
    );
    let got = read_runfile(&dir.path().join("d.trf"), &LoadSelection::all()).unwrap();
    let src = read_runfile(&run, &LoadSelection::all()).unwrap();
    let fp = FocusParams::new(45f64.to_radians(), 20.0, 1.5).unwrap();
    let expect = convert_units(&time_focus(&src[1], &fp).unwrap(), XUnits::DspacingA).unwrap();
    assert_eq!(got[1], expect);
    assert_eq!(got[0], src[0], "monitor untouched");
}

#[test]
fn peaks_equal_the_library_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["gen", "scd", "--seed", "5", "-o", "s.trf"], dir.path());
    let summary = ok(
        &[
            "peaks",
            "s.trf",
            "--find",
            "--index",
            "--ub-from",
            "s.assign.txt",
            "-o",
            "p.txt",
        ],
        dir.path(),
    );
    assert!(summary.contains("peaks indexed"), "{summary}");

    let ds = read_runfile(&dir.path().join("s.trf"), &LoadSelection::all())
        .unwrap()
        .remove(0);
    let vol = DetectorVolume::from_dataset(&ds).unwrap();
    let g = vol.goniometer();
    let found: Vec<Peak> = analyze(&vol, &FindParams::default())
        .unwrap()
        .into_iter()
        .map(|p| Peak {
            q: apply_goniometer(p.q, &g),
            ..p
        })
        .collect();
    let assigned =
        read_assignments(&std::fs::read_to_string(dir.path().join("s.assign.txt")).unwrap())
            .unwrap();
    let (ub, _) = refine_ub(&assigned).unwrap();
    let expect = format_peaks(&index_peaks(&ub, &found, 0.1).unwrap());
    assert_eq!(
        std::fs::read_to_string(dir.path().join("p.txt")).unwrap(),
        expect
    );

    // Re-reading the list and indexing again gives the same file.
    ok(
        &[
            "peaks",
            "s.trf",
            "--peaks",
            "p.txt",
            "--index",
            "--ub-from",
            "s.assign.txt",
            "-o",
            "q.txt",
        ],
        dir.path(),
    );
    assert_eq!(
        std::fs::read_to_string(dir.path().join("q.txt")).unwrap(),
        expect
    );

    std::fs::write(dir.path().join("bad.txt"), "1 2 3 0.5\n").unwrap();
    assert_eq!(
        code(
            &["peaks", "s.trf", "--find", "--ub-from", "bad.txt"],
            dir.path()
        )
        .0,
        2
    );
    assert_eq!(code(&["peaks", "s.trf", "--index"], dir.path()).0, 1);
}

#[test]
fn generators_are_seeded() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a", "b"] {
        ok(
            &[
                "gen",
                "scd",
                "--seed",
                "9",
                "--reflections",
                "20",
                "-o",
                &format!("{name}.trf"),
            ],
            dir.path(),
        );
        ok(
            &[
                "gen",
                "live",
                "--rows",
                "16",
                "--cols",
                "16",
                "--bins",
                "20",
                "--peaks",
                "1",
                "--seed",
                "9",
                "-o",
                &format!("{name}_live.trf"),
            ],
            dir.path(),
        );
    }
    for (a, b) in [
        ("a.trf", "b.trf"),
        ("a.assign.txt", "b.assign.txt"),
        ("a_live.trf", "b_live.trf"),
    ] {
        assert_eq!(
            std::fs::read(dir.path().join(a)).unwrap(),
            std::fs::read(dir.path().join(b)).unwrap(),
            "{a}"
        );
    }
}

/// A server process killed on drop, with the addresses it announced.
struct Server(Child, Vec<String>);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn spawn_server(args: &[&str], dir: &Path, envs: &[(&str, &str)], n_addrs: usize) -> Server {
    let mut child = Command::new(env!("CARGO_BIN_EXE_tofbench"))
        .args(args)
        .current_dir(dir)
        .envs(envs.iter().copied())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut out = BufReader::new(child.stdout.take().unwrap());
    let addrs = (0..n_addrs)
        .map(|_| {
            let mut line = String::new();
            out.read_line(&mut line).unwrap();
            line.trim().rsplit(' ').next().unwrap().to_string()
        })
        .collect();
    Server(child, addrs)
}

#[test]
fn serve_and_live_answer_clients() {
    let dir = tempfile::tempdir().unwrap();
    small_powder(dir.path(), 2);
    let root = dir.path().join("runs");
    let server = spawn_server(
        &["serve", "--port", "0", "--ui", "--http-port", "0"],
        dir.path(),
        &[("TOFBENCH_ROOT", root.to_str().unwrap())],
        2,
    );
    let mut c = Client::connect(server.1[0].as_str()).unwrap();
    let runs = c.list_runs().unwrap();
    assert_eq!(runs.len(), 2);
    let fetched = c
        .fetch(&runs[0].name, &LoadSelection::datasets([1]))
        .unwrap();
    assert_eq!(
        fetched,
        read_runfile(&root.join(&runs[0].name), &LoadSelection::datasets([1])).unwrap()
    );

    let mut http = std::net::TcpStream::connect(server.1[1].as_str()).unwrap();
    http.write_all(b"GET /api/runs HTTP/1.0\r\n\r\n").unwrap();
    let mut reply = String::new();
    http.read_to_string(&mut reply).unwrap();
    assert!(reply.starts_with("HTTP/1.0 200"), "{reply}");
    assert!(reply.contains(&runs[1].name), "{reply}");

    let live = spawn_server(
        &["live", "--port", "0", "--seed", "4", "--tick-ms", "10"],
        dir.path(),
        &[],
        1,
    );
    let mut c = Client::connect(live.1[0].as_str()).unwrap();
    let first = c.status().unwrap();
    std::thread::sleep(std::time::Duration::from_millis(100));
    let later = c.status().unwrap();
    assert!(later.sequence > first.sequence && later.total_counts >= first.total_counts);
    assert_eq!(later.n_spectra, 32 * 32);
}
