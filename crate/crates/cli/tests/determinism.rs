//! Criterion 11: identical (config, seed, subcommand, flags) produce
//! byte-identical CSV/JSON outputs regardless of worker count or repeat
//! runs. The manifest records wall time and is the one file excluded from
//! the comparison.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;

fn run(out: &Path, threads: usize, args: &[&str]) {
    let status = Command::new(env!("CARGO_BIN_EXE_nsqsim"))
        .arg("--seed")
        .arg("12345")
        .arg("--out")
        .arg(out)
        .arg("--threads")
        .arg(threads.to_string())
        .args(args)
        .status()
        .expect("binary runs");
    assert!(status.success(), "nsqsim {args:?} failed");
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    for entry in std::fs::read_dir(dir).expect("output dir exists") {
        let entry = entry.unwrap();
        let name = entry.file_name().to_string_lossy().to_string();
        if name == "manifest.json" {
            continue; // carries wall time
        }
        files.insert(name, std::fs::read(entry.path()).unwrap());
    }
    assert!(!files.is_empty(), "no outputs in {}", dir.display());
    files
}

fn assert_identical(a: &Path, b: &Path) {
    let fa = snapshot(a);
    let fb = snapshot(b);
    assert_eq!(
        fa.keys().collect::<Vec<_>>(),
        fb.keys().collect::<Vec<_>>(),
        "file sets differ"
    );
    for (name, bytes) in &fa {
        assert_eq!(
            bytes,
            &fb[name],
            "{name} differs between runs"
        );
    }
}

#[test]
fn criterion_11_serial_vs_parallel_byte_identical() {
    let base = std::env::temp_dir().join(format!("nsqsim-det-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&base);

    let cases: &[(&str, &[&str])] = &[
        ("readout", &["readout", "--shots", "20000"]),
        ("pump", &["pump", "--reps", "200"]),
        ("rabi", &["rabi", "--traj", "1000"]),
        ("ramsey-mc", &["ramsey", "--points", "10", "--traj", "2000"]),
        ("dd", &["dd", "--pulses", "1,4,16", "--points", "24"]),
        ("calibrate", &["calibrate", "--fast"]),
    ];
    for (name, args) in cases {
        let serial = base.join(format!("{name}-serial"));
        let parallel = base.join(format!("{name}-par8"));
        let repeat = base.join(format!("{name}-repeat"));
        run(&serial, 1, args);
        run(&parallel, 8, args);
        run(&repeat, 8, args);
        assert_identical(&serial, &parallel);
        assert_identical(&parallel, &repeat);
        println!("criterion 11 ({name}): PASS — serial, 8-thread and repeat runs byte-identical");
    }
    let _ = std::fs::remove_dir_all(&base);
}

#[test]
fn config_round_trip_through_binary() {
    let base = std::env::temp_dir().join(format!("nsqsim-cfg-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&base);
    std::fs::create_dir_all(&base).unwrap();

    // Unknown keys must be rejected with the line number and exit code 2.
    let bad = base.join("bad.conf");
    std::fs::write(&bad, "seed = 3\n[cavity]\nmystery = 1\n").unwrap();
    let output = Command::new(env!("CARGO_BIN_EXE_nsqsim"))
        .arg("--config")
        .arg(&bad)
        .arg("--out")
        .arg(base.join("x"))
        .arg("purcell")
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("line 3"), "stderr: {stderr}");
    assert!(stderr.contains("mystery"), "stderr: {stderr}");

    // NSQSIM_CONFIG supplies the config path when --config is absent.
    let via_env = Command::new(env!("CARGO_BIN_EXE_nsqsim"))
        .env("NSQSIM_CONFIG", &bad)
        .arg("--out")
        .arg(base.join("y"))
        .arg("purcell")
        .output()
        .unwrap();
    assert_eq!(via_env.status.code(), Some(2), "env config not picked up");

    let good = base.join("good.conf");
    std::fs::write(&good, "seed = 9\n[cavity]\npeak_purcell = 50\n").unwrap();
    let out_env = base.join("env-run");
    let run_env = Command::new(env!("CARGO_BIN_EXE_nsqsim"))
        .env("NSQSIM_CONFIG", &good)
        .arg("--out")
        .arg(&out_env)
        .arg("purcell")
        .output()
        .unwrap();
    assert!(run_env.status.success());
    let csv = std::fs::read_to_string(out_env.join("purcell.csv")).unwrap();
    let zero_row = csv.lines().find(|l| l.starts_with("0,")).unwrap();
    assert!(zero_row.starts_with("0,50,"), "peak row: {zero_row}");
    let _ = std::fs::remove_dir_all(&base);
}
