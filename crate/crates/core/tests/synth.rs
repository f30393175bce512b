use interrater::matching::{cluster_lesions, equivalent_diameter, extract_instances, Technique};
use interrater::metrics::ToleranceConfig;
use interrater::study::{analyze, detection_analysis, AnalysisConfig, MERGED};
use interrater::synth::{generate, rasterize_ellipsoid, SynthConfig, TechniqueModel};
use interrater::volume::{Connectivity, Grid, Mask3D};
use proptest::prelude::*;

fn base(seed: u64) -> SynthConfig {
    SynthConfig {
        seed,
        shape: [32, 40, 40],
        cases_per_group: 3,
        lesions_per_case: [2, 4],
        lesion_radius_mm: [1.5, 3.5],
        ..SynthConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// Planted lesions and false positives are separated by more than their
    /// extents plus noise, so each becomes exactly one cluster.
    #[test]
    fn planted_objects_never_merge(
        seed in 0u64..10_000,
        noise in 0.0f64..2.0,
        miss in 0.0f64..0.4,
        fp in 0.0f64..1.5,
        connectivity in prop::sample::select(vec![Connectivity::Six, Connectivity::TwentySix]),
    ) {
        let model = TechniqueModel { noise_mm: noise, miss_prob: miss, fp_rate: fp };
        let cfg = SynthConfig { mc: model, ac: model, cnn: Some(model), ..base(seed) };
        let (study, truth) = generate(&cfg).unwrap();
        for (case, planted) in study.cases.iter().zip(&truth.cases) {
            let instances: Vec<_> = case
                .masks
                .iter()
                .flat_map(|(s, m)| extract_instances(&case.case, s, m, connectivity))
                .collect();
            let clusters = cluster_lesions(instances).unwrap();
            let seen = planted.lesions.iter().enumerate()
                .filter(|(i, _)| planted.sources.iter().any(|s| s.detected[*i]))
                .count();
            let fps: usize = planted.sources.iter().map(|s| s.false_positives.len()).sum();
            prop_assert_eq!(clusters.len(), seen + fps, "case {}", planted.case);
        }
        let report = detection_analysis(&study, &AnalysisConfig { connectivity, ..AnalysisConfig::default() }).unwrap();
        for (m, p) in report.per_case.iter().zip(&truth.cases) {
            for st in &p.sources {
                let got = m.sources.iter().find(|s| s.rater == st.rater && s.technique == st.technique).unwrap();
                prop_assert_eq!(got.counts, st.expected);
            }
        }
    }
}

fn mean_error_rate(miss: f64) -> f64 {
    (0..8u64)
        .map(|seed| {
            let model = TechniqueModel { noise_mm: 0.5, miss_prob: miss, fp_rate: 0.3 };
            let cfg = SynthConfig { mc: model, cnn: None, ..base(500 + seed) };
            let (study, _) = generate(&cfg).unwrap();
            let det = detection_analysis(&study, &AnalysisConfig::default()).unwrap();
            det.group_rows.iter().find(|r| r.scope == MERGED).unwrap().p_hat_mc.unwrap()
        })
        .sum::<f64>()
        / 8.0
}

#[test]
fn error_rate_grows_with_miss_probability() {
    let rates: Vec<f64> = [0.05, 0.15, 0.3].into_iter().map(mean_error_rate).collect();
    assert!(rates[0] < rates[1] && rates[1] < rates[2], "{rates:?}");
}

fn median_sdsc(noise: f64) -> f64 {
    let model = TechniqueModel { noise_mm: noise, miss_prob: 0.0, fp_rate: 0.0 };
    let cfg = SynthConfig {
        mc: model,
        ac: model,
        cnn: None,
        cases_per_group: 5,
        lesion_radius_mm: [2.5, 3.5],
        ..base(77)
    };
    let (study, _) = generate(&cfg).unwrap();
    let cfg = AnalysisConfig { tolerance: ToleranceConfig::new(0.5).unwrap(), ..AnalysisConfig::default() };
    let report = analyze(&study, &cfg).unwrap();
    report.contouring.rows.iter().find(|r| r.scope == "All data").unwrap().sdsc_mc.unwrap()
}

#[test]
fn more_boundary_noise_lowers_surface_agreement() {
    let (one, two) = (median_sdsc(1.0), median_sdsc(2.0));
    assert!(one < 1.0, "{one}");
    assert!(two < one, "{two} vs {one}");
}

#[test]
fn equivalent_diameter_tracks_the_planted_ellipsoid() {
    let grid = Grid::new([48, 48, 48], [1.0, 0.9375, 0.9375]).unwrap();
    let mut worst = 0.0f64;
    for (i, axes) in [[3.0, 3.0, 3.0], [3.2, 4.1, 3.6], [5.0, 3.0, 4.0], [6.5, 6.0, 7.0]].into_iter().enumerate() {
        let mut m = Mask3D::zeros(grid);
        rasterize_ellipsoid(&grid, [24, 24, 24], axes, &mut m);
        let inst = extract_instances("c", &interrater::matching::Source::new("R1", Technique::Mc), &m, Connectivity::Six);
        assert_eq!(inst.len(), 1, "shape {i} fell apart");
        let analytic = 4.0 / 3.0 * std::f64::consts::PI * axes[0] * axes[1] * axes[2];
        let d_mask = equivalent_diameter(inst[0].volume_mm3).unwrap();
        let d_true = equivalent_diameter(analytic).unwrap();
        worst = worst.max((inst[0].volume_mm3 / analytic - 1.0).abs());
        assert!((d_mask / d_true - 1.0).abs() < 0.05 / 3.0 + 1e-9);
    }
    assert!(worst < 0.05, "{worst}");
}
