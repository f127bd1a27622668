use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn sphere_pint(args: &[&str], config: Option<&Path>, out: &Path) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sphere-pint"));
    cmd.args(args).arg("--out").arg(out);
    if let Some(c) = config {
        cmd.arg("--config").arg(c);
    }
    cmd.output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn read(p: impl AsRef<Path>) -> String {
    std::fs::read_to_string(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

fn rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn tiny_pint_run_converges_and_writes_everything() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let res = sphere_pint(&["run-pint", "--preset", "tiny"], None, &out);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    for f in ["errors.csv", "spectrum.csv", "speedup.csv", "snapshot_final.csv", "manifest.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let errors = read(out.join("errors.csv"));
    assert!(errors.starts_with("k,rnorm,target,value\n"));
    let fine_l2: Vec<f64> = rows(&errors)
        .iter()
        .filter(|r| r[1] == "l2" && r[2] == "fine")
        .map(|r| r[3].parse().unwrap())
        .collect();
    // Eight slices, so the eighth iterate is the fine solution.
    assert_eq!(fine_l2.len(), 9);
    assert!(fine_l2[0] > 1e-3 && fine_l2[8] < 1e-10, "{fine_l2:?}");
    assert!(rows(&errors).iter().any(|r| r[2] == "reference"));

    let manifest: serde_json::Value = serde_json::from_str(&read(out.join("manifest.json"))).unwrap();
    assert_eq!(manifest["status"]["status"], "completed");
    assert_eq!(manifest["config"]["fine"]["truncation"], 16);
    assert_eq!(manifest["config"]["pint"]["coarse"]["truncation"], 8);
    assert_eq!(manifest["iterations"], 8);
    assert_eq!(manifest["exactness_bound"], 8);

    let spectrum = read(out.join("spectrum.csv"));
    let sources: std::collections::BTreeSet<String> = rows(&spectrum).iter().map(|r| format!("{}{}", r[0], r[1])).collect();
    assert_eq!(
        sources.into_iter().collect::<Vec<_>>(),
        ["fine", "pint0", "pint8", "reference"]
    );
    // (M+1)(M+2)/2 coefficients for each of three fields.
    assert_eq!(rows(&read(out.join("snapshot_final.csv"))).len(), 3 * 17 * 18 / 2);
}

#[test]
fn two_level_mgrit_files_match_parareal_without_spatial_coarsening() {
    let tmp = tempfile::tempdir().unwrap();
    let coarse = "coarse = { truncation = 16, scheme = \"imex\" }\n";
    let m = write(tmp.path(), "m.toml", &format!("[pint]\n{coarse}"));
    let p = write(tmp.path(), "p.toml", &format!("[pint]\nalgorithm = \"parareal\"\n{coarse}"));
    let (om, op) = (tmp.path().join("m"), tmp.path().join("p"));
    assert!(sphere_pint(&["run-pint", "--preset", "tiny"], Some(&m), &om).status.success());
    let res = sphere_pint(&["run-pint", "--preset", "tiny"], Some(&p), &op);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    assert_eq!(read(om.join("errors.csv")), read(op.join("errors.csv")));
}

#[test]
fn config_errors_exit_with_code_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        ("cfactor.toml", "[pint]\ncfactor = 1\n"),
        ("unknown_key.toml", "[pint]\nrelaxations = 2\n"),
        ("scenario.toml", "scenario = \"tsunami\"\n"),
        ("steps.toml", "t_final = 1000.0\n"),
    ];
    for (name, text) in cases {
        let cfg = write(tmp.path(), name, text);
        let res = sphere_pint(&["run-pint", "--preset", "tiny"], Some(&cfg), &tmp.path().join("o"));
        assert_eq!(res.status.code(), Some(2), "{name}: {}", String::from_utf8_lossy(&res.stderr));
        assert!(!res.stderr.is_empty());
    }
    // No scenario at all, and no configuration source.
    let bare = write(
        tmp.path(),
        "bare.toml",
        "[fine]\ntruncation = 16\nstepper = { scheme = \"imex\", dt = 900.0 }\n",
    );
    let res = sphere_pint(&["run-serial"], Some(&bare), &tmp.path().join("o"));
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("scenario"));
    let res = sphere_pint(&["run-serial"], None, &tmp.path().join("o"));
    assert_eq!(res.status.code(), Some(2));
    let res = sphere_pint(&["run-serial", "--preset", "huge"], None, &tmp.path().join("o"));
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn blow_up_exits_with_code_three_and_keeps_partial_output() {
    let tmp = tempfile::tempdir().unwrap();
    // An explicit Coriolis term at a 32x coarse step amplifies every step.
    let cfg = write(
        tmp.path(),
        "blow.toml",
        "t_final = 460800.0\n[pint]\ncfactor = 32\nmax_iters = 4\n\
         coarse = { truncation = 16, scheme = \"imex\", coriolis = \"explicit\" }\n",
    );
    let out = tmp.path().join("o");
    let res = sphere_pint(&["run-pint", "--preset", "tiny"], Some(&cfg), &out);
    assert_eq!(res.status.code(), Some(3), "{}", String::from_utf8_lossy(&res.stderr));
    let manifest: serde_json::Value = serde_json::from_str(&read(out.join("manifest.json"))).unwrap();
    assert_eq!(manifest["status"]["status"], "blow_up");
    assert!(read(out.join("errors.csv")).starts_with("k,rnorm,target,value"));
}

#[test]
fn serial_dt_sweep_converges() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let res = sphere_pint(&["run-serial", "--preset", "tiny"], None, &out);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let table = rows(&read(out.join("dt_errors.csv")));
    for rnorm in ["4", "8", "16", "l2"] {
        let errs: Vec<f64> = table.iter().filter(|r| r[1] == rnorm).map(|r| r[2].parse().unwrap()).collect();
        assert_eq!(errs.len(), 3);
        // Halving dt cuts the error by roughly the second-order factor of 4.
        for w in errs.windows(2) {
            assert!(w[1] < 0.4 * w[0], "rnorm {rnorm}: {errs:?}");
        }
    }
    let spectrum = rows(&read(out.join("spectrum.csv")));
    assert_eq!(spectrum.len(), 2 * 16);
    assert_eq!(spectrum[0][0].parse::<f64>().unwrap(), 7200.0);
}

#[test]
fn outputs_are_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    for cmd in ["run-serial", "stability", "viscosity-table"] {
        let (a, b) = (tmp.path().join(format!("{cmd}-a")), tmp.path().join(format!("{cmd}-b")));
        assert!(sphere_pint(&[cmd, "--preset", "tiny"], None, &a).status.success());
        assert!(sphere_pint(&[cmd, "--preset", "tiny", "--workers", "3"], None, &b).status.success());
        let mut names: Vec<_> = std::fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
        names.sort();
        for n in names {
            let name = n.to_string_lossy();
            if name.ends_with(".json") {
                continue;
            }
            assert_eq!(std::fs::read(a.join(&n)).unwrap(), std::fs::read(b.join(&n)).unwrap(), "{cmd}/{name}");
        }
    }
}

#[test]
fn stability_sweeps_are_consistent() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "s.toml", "[stability]\nparareal_iterations = [0, 2]\nmgrit_iteration = 2\n");
    let out = tmp.path().join("o");
    let res = sphere_pint(&["stability", "--preset", "tiny"], Some(&cfg), &out);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    // Without relaxation the MGRIT factor is the Parareal one.
    for scheme in ["imex", "settls"] {
        for xl in 0..4 {
            assert_eq!(
                read(out.join(format!("region_mgrit_{scheme}_nr0_xl{xl}.csv"))),
                read(out.join(format!("region_parareal_{scheme}_k2_xl{xl}.csv")))
            );
        }
    }
    let region = rows(&read(out.join("region_serial_imex_xl0.csv")));
    assert_eq!(region.len(), 41 * 41);
    assert!(region.iter().all(|r| r[2] == "0" || r[2] == "1"));
    // IMEX regions do not move along the imaginary xi_L axis.
    for xl in 1..4 {
        assert_eq!(
            read(out.join("region_serial_imex_xl0.csv")),
            read(out.join(format!("region_serial_imex_xl{xl}.csv")))
        );
    }
    let meta: serde_json::Value = serde_json::from_str(&read(out.join("regions.json"))).unwrap();
    assert_eq!(meta["regions"].as_array().unwrap().len(), 4 * (2 + 2 * (2 + 2)));
    assert!((meta["xi_tilde_l_im"].as_f64().unwrap() - 4.963e-5).abs() < 1e-8);
}

#[test]
fn viscosity_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    assert!(sphere_pint(&["viscosity-table", "--preset", "tiny"], None, &out).status.success());
    let coeffs = rows(&read(out.join("viscosity_coefficients.csv")));
    assert_eq!(coeffs.len(), 2 * 4 * 9);
    let nu = |m: &str, q: &str, tau: f64| -> f64 {
        coeffs
            .iter()
            .find(|r| r[0] == m && r[1] == q && r[2].parse::<f64>().unwrap() == tau)
            .map(|r| r[3].parse().unwrap())
            .unwrap()
    };
    let ratio = nu("51", "2", 3600.0) / nu("128", "2", 3600.0);
    assert!((ratio - 128.0 * 129.0 / (51.0 * 52.0)).abs() < 1e-12 * ratio);
    // ν scales as 1/τ.
    assert!((nu("128", "4", 7200.0) * 2.0 / nu("128", "4", 3600.0) - 1.0).abs() < 1e-14);

    let damping = rows(&read(out.join("damping_factors.csv")));
    assert_eq!(damping.len(), 3 * 33);
    assert!(damping.iter().filter(|r| r[3] == "0").all(|r| r[4].parse::<f64>().unwrap() == 1.0));
    for spec in damping.chunks(33) {
        let f: Vec<f64> = spec.iter().map(|r| r[4].parse().unwrap()).collect();
        assert!(f.windows(2).all(|w| w[1] < w[0]));
    }
}
