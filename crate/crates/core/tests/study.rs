use interrater::matching::{Source, Technique};
use interrater::study::{
    analyze, assemble, load_study, render_report, AnalysisConfig, Diagnostic, ReportFormat, Study, ALL_DATA, MERGED,
};
use interrater::synth::{generate, write_study, SynthConfig, TimeModel};
use interrater::volume::{read_mask, Grid, Mask3D};

fn small(seed: u64) -> SynthConfig {
    SynthConfig {
        seed,
        shape: [32, 40, 40],
        cases_per_group: 4,
        lesions_per_case: [2, 4],
        lesion_radius_mm: [1.5, 3.5],
        ..SynthConfig::default()
    }
}

fn kinds(diags: &[Diagnostic]) -> Vec<String> {
    diags
        .iter()
        .map(|d| serde_json::to_value(d).unwrap()["kind"].as_str().unwrap().to_string())
        .collect()
}

#[test]
fn disk_round_trip_reproduces_the_report() {
    let (study, truth) = generate(&small(1)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_study(&study, &truth, dir.path()).unwrap();
    let loaded = load_study(dir.path().join("manifest.json")).unwrap();
    let cfg = AnalysisConfig::default();
    assert_eq!(analyze(&study, &cfg).unwrap(), analyze(&loaded, &cfg).unwrap());
}

#[test]
fn all_diagnostics_are_collected() {
    let (study, truth) = generate(&small(2)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_study(&study, &truth, dir.path()).unwrap();
    let mut m = study.manifest.clone();
    let removed = m.cells.remove(0);
    let dup = m.cells[0].clone();
    m.cells.push(dup);
    m.cells[3].time_s = 0.0;
    m.cells[4].rater = "R9".into();
    let moved = m.groups[0].cases[0].clone();
    m.groups[1].cases.push(moved);
    m.cells[5].mask = "masks/odd.mask".into();
    let odd = Mask3D::zeros(Grid::new([4, 4, 4], [1.0; 3]).unwrap());
    let err = assemble(m, |p| {
        if p == "masks/odd.mask" {
            Ok(odd.clone())
        } else {
            read_mask(dir.path().join(p))
        }
    })
    .unwrap_err();
    let k = kinds(&err);
    for want in ["missing_cell", "duplicate_cell", "non_positive_time", "unknown_rater", "case_in_two_groups", "grid_mismatch"] {
        assert!(k.iter().any(|x| x == want), "{want} not in {k:?}");
    }
    assert!(err.iter().any(|d| matches!(d, Diagnostic::MissingCell { case, .. } if *case == removed.case)));
}

#[test]
fn unreadable_manifest_is_a_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("manifest.json");
    std::fs::write(&p, "{ not json").unwrap();
    let err = load_study(&p).unwrap_err();
    assert_eq!(kinds(&err), ["manifest"]);
    assert_eq!(kinds(&load_study(dir.path().join("absent.json")).unwrap_err()), ["manifest"]);
}

fn with_ac_copied_from_mc(mut study: Study) -> Study {
    for case in &mut study.cases {
        let raters: Vec<String> = study.manifest.rater_ids();
        for r in raters {
            let mc = case.masks[&Source::new(r.as_str(), Technique::Mc)].clone();
            case.masks.insert(Source::new(r.as_str(), Technique::Ac), mc);
        }
    }
    study
}

#[test]
fn identical_techniques_show_no_effect() {
    let (study, _) = generate(&small(3)).unwrap();
    let report = analyze(&with_ac_copied_from_mc(study), &AnalysisConfig::default()).unwrap();
    for row in &report.detection.group_rows {
        assert_eq!(row.p_hat_mc, row.p_hat_ac);
        assert_eq!(row.test.p_value(), Some(0.5), "{}", row.scope);
    }
    for row in &report.contouring.rows {
        assert_eq!(row.sdsc_test.p_value(), Some(1.0));
        assert_eq!(row.cci_test.p_value(), Some(1.0));
    }
}

#[test]
fn assisted_contours_closer_to_consensus_are_detected() {
    for seed in 10..13 {
        let cfg = SynthConfig {
            cases_per_group: 10,
            ..small(seed)
        };
        let (study, _) = generate(&cfg).unwrap();
        let report = analyze(&study, &AnalysisConfig::default()).unwrap();
        let all = report.contouring.rows.iter().find(|r| r.scope == ALL_DATA).unwrap();
        assert!(all.sdsc_test.p_value().unwrap() < 0.05, "seed {seed}: {:?}", all.sdsc_test);
        assert!(all.cci_test.p_value().unwrap() < 0.05, "seed {seed}: {:?}", all.cci_test);
    }
}

#[test]
fn halved_times_give_closed_form_p() {
    let cfg = SynthConfig {
        cases_per_group: 10,
        time: TimeModel {
            mc_log_mean: 6.0,
            mc_log_sd: 0.4,
            speedup_log_mean: 2f64.ln(),
            speedup_log_sd: 0.0,
        },
        ..small(4)
    };
    let (study, _) = generate(&cfg).unwrap();
    let report = analyze(&study, &AnalysisConfig::default()).unwrap();
    for row in &report.time.rows {
        assert!((row.median_ratio - 2.0).abs() < 1e-12);
        assert!((row.ratio_of_medians - 2.0).abs() < 1e-12);
        if row.scope != ALL_DATA {
            assert_eq!(row.n, 10);
            assert_eq!(row.test.p_value(), Some(1.0 / 1024.0));
        }
    }
}

#[test]
fn rendered_files() {
    let (study, _) = generate(&small(5)).unwrap();
    let report = analyze(&study, &AnalysisConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let written = render_report(&report, dir.path(), &ReportFormat::ALL).unwrap();
    assert_eq!(written.len(), 7);
    let det: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("detection.json")).unwrap()).unwrap();
    assert!(det["group_rows"].as_array().unwrap().iter().any(|r| r["scope"] == MERGED));
    let csv = std::fs::read_to_string(dir.path().join("detection.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    for col in ["rater", "technique", "TP", "FP", "FN", "N_err", "p_hat", "recall", "avg_fp"] {
        assert!(header.split(',').any(|h| h == col), "{col} missing from {header}");
    }
    let md = std::fs::read_to_string(dir.path().join("report.md")).unwrap();
    assert!(md.contains("| Merged |"));
}
