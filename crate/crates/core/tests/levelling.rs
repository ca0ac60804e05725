use magnav_core::geomag::{GeoPosition, SphericalHarmonicModel, TemporalModel};
use magnav_core::maps::{
    level_layers, load_manifest, write_grid_file, AnomalyGrid, MapStack, StackConfig,
    StackManifestEntry,
};
use proptest::prelude::*;

fn center() -> GeoPosition {
    GeoPosition::from_degrees(-31.0, 135.0, 0.0).unwrap()
}

/// Smooth anomaly shared by every survey (nT).
fn field(n: f64, e: f64) -> f64 {
    60.0 * (n / 3_100.0).sin() * (e / 4_300.0).cos() + 25.0 * ((n + e) / 2_700.0).sin()
}

fn survey(
    name: &str,
    priority: i32,
    center: &GeoPosition,
    cell: f64,
    size: usize,
    offset: f64,
) -> AnomalyGrid {
    let mut g =
        AnomalyGrid::from_metric(name, center, cell, size, size, 0.0, vec![0.0; size * size])
            .unwrap();
    g.priority = priority;
    let origin = self::center();
    for i in 0..size {
        for j in 0..size {
            let (n, e) = g.node_position(i, j).ne_from(&origin);
            g.values[i * size + j] = field(n, e) + offset;
        }
    }
    g
}

fn stack(layers: Vec<AnomalyGrid>) -> MapStack {
    MapStack::new(
        layers,
        SphericalHarmonicModel::builtin_synthetic(),
        TemporalModel::default(),
        StackConfig::default(),
    )
    .unwrap()
}

/// Offset of a levelled layer relative to the shared field.
fn residual_offset(g: &AnomalyGrid) -> f64 {
    let origin = center();
    let mut sum = 0.0;
    for i in 0..g.n_rows {
        for j in 0..g.n_cols {
            let (n, e) = g.node_position(i, j).ne_from(&origin);
            sum += g.value(i, j) - field(n, e);
        }
    }
    sum / (g.n_rows * g.n_cols) as f64
}

fn layer<'a>(s: &'a MapStack, name: &str) -> &'a AnomalyGrid {
    s.layers().iter().find(|g| g.name == name).unwrap()
}

fn three_surveys() -> Vec<AnomalyGrid> {
    let c = center();
    vec![
        survey(
            "continental",
            1,
            &c.offset_ne(4_000.0, -3_000.0),
            1_000.0,
            31,
            -25.0,
        ),
        survey("fine", 3, &c, 100.0, 41, 0.0),
        survey(
            "regional",
            2,
            &c.offset_ne(-2_000.0, 1_500.0),
            250.0,
            61,
            40.0,
        ),
    ]
}

#[test]
fn constructed_offsets_are_removed() {
    let before = stack(three_surveys());
    assert!((residual_offset(layer(&before, "regional")) - 40.0).abs() < 1e-9);
    let levelled = level_layers(&before).unwrap();
    for name in ["fine", "regional", "continental"] {
        let off = residual_offset(layer(&levelled, name));
        assert!(off.abs() < 0.5, "{name}: residual offset {off:.3} nT");
    }
}

#[test]
fn highest_priority_layer_is_untouched() {
    let before = stack(three_surveys());
    let levelled = level_layers(&before).unwrap();
    assert_eq!(layer(&levelled, "fine"), layer(&before, "fine"));
}

#[test]
fn levelling_is_idempotent() {
    let once = level_layers(&stack(three_surveys())).unwrap();
    let twice = level_layers(&once).unwrap();
    for (a, b) in once.layers().iter().zip(twice.layers()) {
        assert!((a.mean() - b.mean()).abs() < 1e-9, "{}", a.name);
    }
}

#[test]
fn disjoint_layer_keeps_its_offset() {
    let c = center();
    let far = survey("far", 1, &c.offset_ne(200_000.0, 0.0), 500.0, 21, 17.0);
    let s = level_layers(&stack(vec![survey("fine", 3, &c, 100.0, 41, 0.0), far])).unwrap();
    assert!((residual_offset(layer(&s, "far")) - 17.0).abs() < 1e-9);
}

#[test]
fn manifest_on_disk_levels_the_same() {
    let dir = tempfile::tempdir().unwrap();
    let mut entries = Vec::new();
    for g in three_surveys() {
        let file = format!("{}.asc", g.name);
        write_grid_file(&g, &dir.path().join(&file)).unwrap();
        entries.push(StackManifestEntry {
            path: file,
            priority: g.priority,
        });
    }
    let manifest = dir.path().join("stack.json");
    std::fs::write(&manifest, serde_json::to_string(&entries).unwrap()).unwrap();
    let levelled = level_layers(&stack(load_manifest(&manifest).unwrap())).unwrap();
    for name in ["regional", "continental"] {
        let off = residual_offset(layer(&levelled, name));
        assert!(off.abs() < 0.5, "{name}: {off:.3} nT");
    }
}

/// Planar in latitude/longitude, so bilinear interpolation reproduces it exactly.
fn planar_survey(name: &str, priority: i32, cell: f64, size: usize, offset: f64) -> AnomalyGrid {
    let mut g = AnomalyGrid::from_metric(
        name,
        &center(),
        cell,
        size,
        size,
        0.0,
        vec![0.0; size * size],
    )
    .unwrap();
    g.priority = priority;
    for i in 0..size {
        for j in 0..size {
            let p = g.node_position(i, j);
            g.values[i * size + j] =
                900.0 * p.latitude.to_degrees() - 400.0 * p.longitude.to_degrees() + offset;
        }
    }
    g
}

/// Mean of `hi − lo` over the nodes of `lo` inside `hi`.
fn overlap_difference(hi: &AnomalyGrid, lo: &AnomalyGrid) -> f64 {
    let mut sum = 0.0;
    let mut count = 0;
    for i in 0..lo.n_rows {
        for j in 0..lo.n_cols {
            if let Ok(v) = hi.interpolate(&lo.node_position(i, j)) {
                sum += v - lo.value(i, j);
                count += 1;
            }
        }
    }
    assert!(count > 0, "{} and {} do not overlap", hi.name, lo.name);
    sum / count as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn nested_random_offsets_level_exactly(a in -200.0f64..200.0, b in -200.0f64..200.0, c in -200.0f64..200.0) {
        let s = stack(vec![
            planar_survey("fine", 3, 100.0, 21, a),
            planar_survey("regional", 2, 300.0, 31, b),
            planar_survey("continental", 1, 1_000.0, 41, c),
        ]);
        let levelled = level_layers(&s).unwrap();
        let l = |n| layer(&levelled, n);
        for (hi, lo) in [("fine", "regional"), ("fine", "continental"), ("regional", "continental")] {
            let d = overlap_difference(l(hi), l(lo));
            prop_assert!(d.abs() < 1e-6, "{hi}/{lo}: {d}");
        }
    }
}
