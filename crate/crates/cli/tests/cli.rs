use noisespec_cli::config::RunConfig;
use serde_json::Value;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_noisespec"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(body).unwrap()).unwrap();
    p
}

fn files_under(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    if !dir.exists() {
        return out;
    }
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(files_under(&p));
        } else {
            out.push(p);
        }
    }
    out.sort();
    out
}

fn provenance_of(path: &Path) -> Value {
    let text = std::fs::read_to_string(path).unwrap();
    let v: Value = if path.extension().unwrap() == "csv" {
        let first = text.lines().next().unwrap();
        serde_json::from_str(first.strip_prefix("# ").expect("csv has a JSON header")).unwrap()
    } else {
        serde_json::from_str(&text).unwrap()
    };
    v["provenance"].clone()
}

fn csv_column(path: &Path, name: &str) -> Vec<f64> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let idx = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().parse().unwrap()).collect()
}

#[test]
fn demo_pipeline_produces_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = configs().join("demo.json");
    let o = run(&["pipeline", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));

    let p = out.join("pipeline");
    for rel in [
        "curves_a/curve_000.csv",
        "curves_b/curve_015.csv",
        "omega_scan.csv",
        "tones/report_0.json",
        "estimate_a/refined_psd.csv",
        "estimate_a/iterations.csv",
        "estimate_b/rectangular.csv",
        "discriminate/laser_psd.csv",
        "discriminate/magnetic_psd.csv",
        "beatnote/spectrum.csv",
        "summary.json",
    ] {
        assert!(p.join(rel).is_file(), "missing {rel}");
    }

    let files = files_under(&out);
    let first = provenance_of(&files[0]);
    assert_eq!(first["tool"], "noisespec");
    assert_eq!(first["seed"], 20240611u64);
    assert_eq!(first["config_hash"].as_str().unwrap().len(), 64);
    for f in &files {
        assert_eq!(provenance_of(f), first, "{}", f.display());
    }

    let s: Value = serde_json::from_str(&std::fs::read_to_string(p.join("summary.json")).unwrap()).unwrap();
    for key in ["spectrum_a", "spectrum_b"] {
        let e = s[key]["refined_band_error"].as_f64().unwrap();
        assert!(e < 0.2, "{key} band error {e}");
    }
    assert!(s["laser_band_error"].as_f64().unwrap() < 0.2);
    let tone = &s["tones"][0];
    let df = (tone["freq_hz"].as_f64().unwrap() - tone["planted_freq_hz"].as_f64().unwrap()).abs();
    let dr = (tone["rabi_hz"].as_f64().unwrap() - tone["planted_rabi_hz"].as_f64().unwrap()).abs();
    assert!(df < 100.0 && dr < 100.0, "tone off by {df} Hz / {dr} Hz");
    let side = &s["beatnote"]["recovered"]["sidebands"][0];
    assert!(side["upper_db"].as_f64().unwrap() > -60.0);
}

#[test]
fn zero_psd_curves_follow_the_stark_oscillation() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = serde_json::json!({
        "seed": 3,
        "psd": {},
        "simulate": {
            "decay": {
                "omegas_hz": [5000, 20000],
                "times": { "start": 0.0, "stop": 0.001, "n": 21 },
                "n_traj": 4,
                "stark_shift_hz": 1500
            }
        }
    });
    let path = write_config(tmp.path(), "zero.json", &cfg);
    let out = tmp.path().join("out");
    let o = run(&["simulate", "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    let da = 2.0 * PI * 1500.0;
    for name in ["curve_000.csv", "curve_001.csv"] {
        let f = out.join("simulate").join(name);
        let t = csv_column(&f, "t_s");
        let p = csv_column(&f, "p_s");
        for (t, p) in t.iter().zip(&p) {
            assert!((p - (0.5 + 0.5 * (da * t).cos())).abs() < 1e-9, "t = {t}: {p}");
        }
    }
}

#[test]
fn estimate_is_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = serde_json::json!({
        "seed": 11,
        "psd": { "shape": { "max_hz": 30000, "step_hz": 500, "white": 900,
                            "lorentzians": [{ "center_hz": 12000, "hwhm_hz": 800, "height": 3000 }] } },
        "simulate": {
            "decay": {
                "omegas_hz": [4000, 8000, 11000, 12000, 13000, 16000, 22000],
                "times": { "start": 0.0, "stop": 0.002, "n": 20 },
                "n_traj": 40,
                "shots": 100
            }
        },
        "estimate": { "curves": "shared/simulate" }
    });
    let path = write_config(tmp.path(), "est.json", &cfg);
    let shared = tmp.path().join("shared");
    let o = run(&["simulate", "--config", path.to_str().unwrap(), "--out", shared.to_str().unwrap()]);
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));

    let mut outputs = Vec::new();
    for (k, threads) in ["1", "2"].iter().enumerate() {
        let out = tmp.path().join(format!("run{k}"));
        let o = run(&[
            "estimate",
            "--config",
            path.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--threads",
            threads,
        ]);
        assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
        let files = files_under(&out);
        assert_eq!(files.len(), 5);
        outputs.push(files.iter().map(|f| std::fs::read(f).unwrap()).collect::<Vec<_>>());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn seed_override_changes_provenance_and_data() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = serde_json::json!({
        "psd": { "shape": { "max_hz": 10000, "step_hz": 500, "white": 2000 } },
        "synth": { "dt": 1e-5, "n": 1024, "n_traj": 8, "segment_len": 256 }
    });
    let path = write_config(tmp.path(), "synth.json", &cfg);
    let mut seen = Vec::new();
    for seed in ["1", "2"] {
        let out = tmp.path().join(format!("s{seed}"));
        let o = run(&["synth", "--config", path.to_str().unwrap(), "--seed", seed, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
        let f = out.join("synth/summary.json");
        assert_eq!(provenance_of(&f)["seed"].as_u64().unwrap(), seed.parse::<u64>().unwrap());
        seen.push(std::fs::read_to_string(out.join("synth/welch_psd.csv")).unwrap());
    }
    assert_ne!(seen[0], seen[1]);
}

#[test]
fn failure_reports_json_and_removes_partial_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    // The pipeline writes the planted spectra and curves before it reaches
    // the bad tone index.
    let mut cfg: Value = serde_json::from_str(&std::fs::read_to_string(configs().join("demo.json")).unwrap()).unwrap();
    cfg["pipeline"]["decay"]["omegas_hz"] = serde_json::json!([10000, 20000]);
    cfg["pipeline"]["decay"]["n_traj"] = serde_json::json!(4);
    cfg["pipeline"]["omega_scan"] = Value::Null;
    cfg["pipeline"]["tone_scans"][0]["tone"] = serde_json::json!(5);
    let path = write_config(tmp.path(), "bad.json", &cfg);
    let out = tmp.path().join("out");
    let o = run(&["pipeline", "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(!o.status.success());
    let stderr = String::from_utf8_lossy(&o.stderr);
    let line = stderr.lines().rev().find(|l| l.starts_with('{')).expect("JSON error line");
    let err: Value = serde_json::from_str(line).unwrap();
    assert_eq!(err["error"]["kind"], "config");
    assert!(err["error"]["message"].as_str().unwrap().contains("tone 5"));
    assert!(files_under(&out).is_empty(), "left behind: {:?}", files_under(&out));
    assert!(!out.exists());
}

#[test]
fn missing_input_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = serde_json::json!({ "estimate": { "curves": "nowhere" } });
    let path = write_config(tmp.path(), "missing.json", &cfg);
    let out = tmp.path().join("out");
    let o = run(&["estimate", "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(!o.status.success());
    let err: Value = serde_json::from_str(String::from_utf8_lossy(&o.stderr).trim()).unwrap();
    assert_eq!(err["error"]["kind"], "missing_input");
}

#[test]
fn unknown_config_fields_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let path = write_config(tmp.path(), "typo.json", &serde_json::json!({ "sead": 4 }));
    let o = run(&["synth", "--config", path.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert!(!o.status.success());
    let err: Value = serde_json::from_str(String::from_utf8_lossy(&o.stderr).trim()).unwrap();
    assert_eq!(err["error"]["kind"], "json");
}

#[test]
fn bundled_configs_parse() {
    for name in ["demo.json", "two_tone.json"] {
        let text = std::fs::read_to_string(configs().join(name)).unwrap();
        let cfg: RunConfig = serde_json::from_str(&text).unwrap();
        assert!(cfg.pipeline.is_some(), "{name}");
    }
}

#[test]
fn standalone_stages_chain_through_files() {
    let tmp = tempfile::tempdir().unwrap();
    let k2 = 0.4f64.powi(2) * 8.794_100_7e10f64.powi(2);
    let k13 = 4.0 * 8.794_100_7e10f64.powi(2);
    // S_a = S_L + k₁₂²κ²S_B and S_b = S_L + k₁₃²κ²S_B with S_L = 500, S_B = 1e-19.
    let mut a = String::from("omega_rad_s,S_rad2_per_hz\n");
    let mut b = a.clone();
    for w in [0.0, 1e4, 2e4] {
        a.push_str(&format!("{w},{}\n", 500.0 + k2 * 1e-19));
        b.push_str(&format!("{w},{}\n", 500.0 + k13 * 1e-19));
    }
    std::fs::write(tmp.path().join("a.csv"), a).unwrap();
    std::fs::write(tmp.path().join("b.csv"), b).unwrap();

    let cfg = serde_json::json!({
        "seed": 5,
        "psd": { "shape": { "max_hz": 60000, "step_hz": 1000, "white": 300 },
                 "tones": [{ "freq_hz": 50000, "rabi_hz": 1500 }] },
        "simulate": {
            "decay": {
                "omegas_hz": [46000, 48000, 49000, 51000, 52000, 54000],
                "times": { "start": 0.0, "stop": 0.001, "n": 41 },
                "n_traj": 60,
                "shots": 200,
                "frame": "lln_interaction"
            }
        },
        "lln_fit": {},
        "discriminate": { "spectrum_a": "a.csv", "spectrum_b": "b.csv" },
        "beatnote": {
            "s1": { "shape": { "max_hz": 10000, "step_hz": 1000, "white": 2000 } },
            "window": { "carrier_hz": 1e6, "span_hz": 2000, "n_points": 201, "tau_max": 0.03 }
        }
    });
    let path = write_config(tmp.path(), "chain.json", &cfg);
    let out = tmp.path().join("out");
    for stage in ["simulate", "lln-fit", "discriminate", "beatnote"] {
        let o = run(&[stage, "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{stage}: {}", String::from_utf8_lossy(&o.stderr));
    }

    let report: Value = serde_json::from_str(&std::fs::read_to_string(out.join("lln/report.json")).unwrap()).unwrap();
    let f = report["freq_hz"].as_f64().unwrap();
    let r = report["rabi_hz"].as_f64().unwrap();
    assert!((f - 50000.0).abs() < 150.0 && (r - 1500.0).abs() < 150.0, "fitted {f} Hz / {r} Hz");

    let laser = csv_column(&out.join("discriminate/laser_psd.csv"), "S_rad2_per_hz");
    let magnetic = csv_column(&out.join("discriminate/magnetic_psd.csv"), "S_T2_per_hz");
    assert!(laser.iter().all(|v| (v / 500.0 - 1.0).abs() < 1e-9));
    assert!(magnetic.iter().all(|v| (v / 1e-19 - 1.0).abs() < 1e-6));

    let s = csv_column(&out.join("beatnote/spectrum.csv"), "S_I");
    let w = csv_column(&out.join("beatnote/spectrum.csv"), "omega_rad_s");
    let (imax, _) = s.iter().enumerate().fold((0, f64::MIN), |b, (i, v)| if *v > b.1 { (i, *v) } else { b });
    assert!((w[imax] - 2.0 * PI * 1e6).abs() < 1e-6 * w[imax]);
    // Lorentzian peak 4A/S_w with S_w = 2000.
    assert!((s[imax] / (4.0 / 2000.0) - 1.0).abs() < 0.01);
}
