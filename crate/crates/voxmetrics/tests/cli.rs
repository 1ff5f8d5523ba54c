//! CLI behavior: subcommand contracts, exit codes, and output determinism.

use std::path::Path;
use std::process::Command;
use voxmetrics::metrics::{ClassMetrics, MetricsRecord};
use voxmetrics::nifti::{parse_header, read_volume, HEADER_SIZE};
use voxmetrics::preprocess::ProtocolManifest;
use voxmetrics::TissueClass;

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_voxmetrics"))
}

fn run(args: &[&str]) -> (i32, String, String) {
    let out = binary().args(args).output().expect("spawn voxmetrics");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).to_string(),
        String::from_utf8_lossy(&out.stderr).to_string(),
    )
}

fn make_phantom(dir: &Path, seed: &str) {
    let (code, _, stderr) = run(&[
        "phantom",
        "--out-dir",
        dir.to_str().unwrap(),
        "--dims",
        "32,32,32",
        "--spacing",
        "1,1,1",
        "--seed",
        seed,
    ]);
    assert_eq!(code, 0, "{stderr}");
}

#[test]
fn protocol_manifest_carries_the_schedule() {
    let dir = tempfile::TempDir::new().unwrap();
    let out = dir.path().join("protocol.json");
    let (code, _, _) = run(&["protocol", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0);
    let manifest: ProtocolManifest =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(manifest.stages[0].epochs, 1000);
    assert_eq!(manifest.stages[0].initial_learning_rate, 0.01);
    assert_eq!(manifest.stages[1].epochs, 200);
    assert_eq!(manifest.stages[1].initial_learning_rate, 0.0001);
    assert_eq!(manifest.augmentations.len(), 8);
}

#[test]
fn resample_halves_dims_from_half_mm_phantom() {
    let dir = tempfile::TempDir::new().unwrap();
    let (code, _, stderr) = run(&[
        "phantom",
        "--out-dir",
        dir.path().to_str().unwrap(),
        "--dims",
        "64,64,64",
        "--spacing",
        "0.5,0.5,0.5",
        "--seed",
        "3",
    ]);
    assert_eq!(code, 0, "{stderr}");
    let out = dir.path().join("resampled.nii.gz");
    let (code, _, stderr) = run(&[
        "resample",
        "--in",
        dir.path().join("images/phantom.nii.gz").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--spacing",
        "1.0,1.0,1.0",
    ]);
    assert_eq!(code, 0, "{stderr}");
    let vol = read_volume(&out).unwrap();
    assert_eq!(vol.dims(), [32, 32, 32]);
    assert_eq!(vol.spacing(), [1.0, 1.0, 1.0]);
}

#[test]
fn phantom_then_self_evaluate_reports_perfect_scores() {
    let dir = tempfile::TempDir::new().unwrap();
    make_phantom(dir.path(), "11");
    let records = dir.path().join("records.csv");
    let labels = dir.path().join("labels");
    let (code, _, stderr) = run(&[
        "evaluate",
        "--pred-dir",
        labels.to_str().unwrap(),
        "--gt-dir",
        labels.to_str().unwrap(),
        "--method",
        "self",
        "--out",
        records.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{stderr}");

    let (code, stdout, _) = run(&[
        "report",
        "--records",
        records.to_str().unwrap(),
        "--format",
        "csv",
    ]);
    assert_eq!(code, 0);
    let mut lines = stdout.lines();
    assert_eq!(
        lines.next().unwrap(),
        "method,n_cases,dsc_overall,dsc_subcortical,iou_overall,iou_subcortical,hd95_overall,hd95_subcortical"
    );
    let row = lines.next().unwrap();
    assert!(row.starts_with("self,1,1,"), "row: {row}");
}

#[test]
fn preprocess_normalizes_to_unit_range() {
    let dir = tempfile::TempDir::new().unwrap();
    make_phantom(dir.path(), "4");
    let out = dir.path().join("prep.nii.gz");
    let (code, _, stderr) = run(&[
        "preprocess",
        "--in",
        dir.path().join("images/phantom.nii.gz").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--clip-percentile",
        "99.9",
    ]);
    assert_eq!(code, 0, "{stderr}");
    let vol = read_volume(&out).unwrap();
    let (lo, hi) = vol.min_max();
    assert_eq!(lo, 0.0);
    assert_eq!(hi, 1.0);
}

#[test]
fn evaluate_lists_the_case_set_difference() {
    let dir = tempfile::TempDir::new().unwrap();
    let pred = dir.path().join("pred");
    let gt = dir.path().join("gt");
    std::fs::create_dir_all(&pred).unwrap();
    std::fs::create_dir_all(&gt).unwrap();
    let labels = voxmetrics::LabelVolume::new([16, 16, 16], [1.0; 3], vec![0; 4096]).unwrap();
    voxmetrics::nifti::write_labels(&labels, pred.join("case_a.nii.gz")).unwrap();
    voxmetrics::nifti::write_labels(&labels, pred.join("case_b.nii.gz")).unwrap();
    voxmetrics::nifti::write_labels(&labels, gt.join("case_b.nii.gz")).unwrap();
    voxmetrics::nifti::write_labels(&labels, gt.join("case_c.nii.gz")).unwrap();
    let (code, _, stderr) = run(&[
        "evaluate",
        "--pred-dir",
        pred.to_str().unwrap(),
        "--gt-dir",
        gt.to_str().unwrap(),
        "--method",
        "m",
        "--out",
        dir.path().join("r.json").to_str().unwrap(),
    ]);
    assert_eq!(code, 2);
    assert!(stderr.contains("case_a") && stderr.contains("case_c"), "{stderr}");
}

#[test]
fn jobs_env_variable_is_honored() {
    let dir = tempfile::TempDir::new().unwrap();
    make_phantom(dir.path(), "8");
    let labels = dir.path().join("labels");
    let out = dir.path().join("r.json");
    let output = binary()
        .env("VOXMETRICS_JOBS", "3")
        .args([
            "evaluate",
            "--pred-dir",
            labels.to_str().unwrap(),
            "--gt-dir",
            labels.to_str().unwrap(),
            "--method",
            "env",
            "--out",
            out.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(output.status.success());

    let output = binary()
        .env("VOXMETRICS_JOBS", "0")
        .args([
            "evaluate",
            "--pred-dir",
            labels.to_str().unwrap(),
            "--gt-dir",
            labels.to_str().unwrap(),
            "--method",
            "env",
            "--out",
            out.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1), "jobs 0 is a usage error");
}

#[test]
fn reruns_produce_byte_identical_outputs() {
    let dir = tempfile::TempDir::new().unwrap();
    make_phantom(dir.path(), "21");
    let labels = dir.path().join("labels");
    let r1 = dir.path().join("r1.json");
    let r2 = dir.path().join("r2.json");
    for out in [&r1, &r2] {
        let (code, _, stderr) = run(&[
            "evaluate",
            "--pred-dir",
            labels.to_str().unwrap(),
            "--gt-dir",
            labels.to_str().unwrap(),
            "--method",
            "self",
            "--out",
            out.to_str().unwrap(),
            "--jobs",
            "4",
        ]);
        assert_eq!(code, 0, "{stderr}");
    }
    assert_eq!(
        std::fs::read(&r1).unwrap(),
        std::fs::read(&r2).unwrap(),
        "evaluate output must be byte-identical across reruns"
    );

    // Phantom output files are byte-identical for the same seed too.
    let p1 = dir.path().join("p1");
    let p2 = dir.path().join("p2");
    make_phantom(&p1, "33");
    make_phantom(&p2, "33");
    assert_eq!(
        std::fs::read(p1.join("images/phantom.nii.gz")).unwrap(),
        std::fs::read(p2.join("images/phantom.nii.gz")).unwrap()
    );
}

#[test]
fn compare_runs_on_four_methods_by_six_cases() {
    let dir = tempfile::TempDir::new().unwrap();
    // Synthesize records: four methods, six cases each, method "ants" worse.
    let mut records = Vec::new();
    for (m, base) in [
        ("ours", 0.88),
        ("resenc", 0.87),
        ("basic", 0.86),
        ("ants", 0.60),
    ] {
        for case in 0..6 {
            let v = base + case as f64 * 0.003;
            records.push(MetricsRecord {
                case_id: format!("c{case}"),
                method: m.to_string(),
                per_class: TissueClass::FOREGROUND
                    .iter()
                    .map(|&class| ClassMetrics {
                        class,
                        dsc: Some(v),
                        iou: Some(v / (2.0 - v)),
                        hd95: Some(1.0 - v),
                    })
                    .collect(),
            });
        }
    }
    let path = dir.path().join("records.json");
    let json = serde_json::to_string_pretty(&records).unwrap();
    std::fs::write(&path, json).unwrap();

    let (code, stdout, stderr) = run(&[
        "compare",
        "--records",
        path.to_str().unwrap(),
        "--metric",
        "dsc",
        "--adjust",
        "bonferroni",
    ]);
    assert_eq!(code, 0, "{stderr}");
    assert!(stdout.contains("df = 3"), "{stdout}");
    assert!(stdout.contains("adjustment: bonferroni"), "{stdout}");
    assert!(stdout.contains("ants vs basic"), "{stdout}");

    // Unknown adjustment is a data error.
    let (code, _, stderr) = run(&[
        "compare",
        "--records",
        path.to_str().unwrap(),
        "--metric",
        "dsc",
        "--adjust",
        "holm",
    ]);
    assert_eq!(code, 2);
    assert!(stderr.contains("holm"), "{stderr}");
}

#[test]
fn report_merges_multiple_record_files() {
    let dir = tempfile::TempDir::new().unwrap();
    let write_method = |name: &str, value: f64| -> std::path::PathBuf {
        let records: Vec<MetricsRecord> = (0..2)
            .map(|case| MetricsRecord {
                case_id: format!("c{case}"),
                method: name.to_string(),
                per_class: TissueClass::FOREGROUND
                    .iter()
                    .map(|&class| ClassMetrics {
                        class,
                        dsc: Some(value),
                        iou: Some(value / (2.0 - value)),
                        hd95: Some(1.0 - value),
                    })
                    .collect(),
            })
            .collect();
        let path = dir.path().join(format!("{name}.json"));
        std::fs::write(&path, serde_json::to_string(&records).unwrap()).unwrap();
        path
    };
    let a = write_method("alpha", 0.9);
    let b = write_method("beta", 0.8);
    let (code, stdout, stderr) = run(&[
        "report",
        "--records",
        a.to_str().unwrap(),
        b.to_str().unwrap(),
        "--format",
        "text",
    ]);
    assert_eq!(code, 0, "{stderr}");
    let alpha_pos = stdout.find("alpha").unwrap();
    let beta_pos = stdout.find("beta").unwrap();
    assert!(alpha_pos < beta_pos, "sorted by descending DSC:\n{stdout}");
}

#[test]
fn written_nifti_headers_follow_the_encoding_rules() {
    let dir = tempfile::TempDir::new().unwrap();
    make_phantom(dir.path(), "55");
    let image_bytes = {
        let gz = std::fs::read(dir.path().join("images/phantom.nii.gz")).unwrap();
        use std::io::Read;
        let mut out = Vec::new();
        flate2::read::MultiGzDecoder::new(&gz[..])
            .read_to_end(&mut out)
            .unwrap();
        out
    };
    let hdr = parse_header(&image_bytes[..HEADER_SIZE]).unwrap();
    assert_eq!(hdr.datatype.code(), 16, "intensity volumes are float32");
    assert_eq!(hdr.scl_slope, 1.0);
    assert_eq!(hdr.scl_inter, 0.0);
    assert_eq!(hdr.vox_offset, 352.0);
}
