use magnav_core::geomag::{
    load_harmonic_coefficients, write_harmonic_coefficients, GeoPosition, SphericalHarmonicModel,
};
use proptest::prelude::*;

const G10: f64 = -30_000.0;

/// Degree-13 synthetic model evaluated by an independent arbitrary-precision
/// synthesis (tests/oracles/sh_reference.py): lat, lon, alt, epoch, [N, E, D].
const FROZEN: [(f64, f64, f64, f64, [f64; 3]); 4] = [
    (
        35.0,
        -110.0,
        5000.0,
        2024.5,
        [25018.476912, 5767.845376, 46804.837192],
    ),
    (
        -34.3,
        146.0,
        1100.0,
        2025.1,
        [4404.887097, 4886.903821, -35798.317249],
    ),
    (
        80.0,
        10.0,
        0.0,
        2020.0,
        [5123.840096, -5357.142462, 62678.012318],
    ),
    (
        -1.5,
        -60.0,
        19000.0,
        2029.9,
        [37820.230010, -1744.175142, 11800.575391],
    ),
];

fn deg13() -> SphericalHarmonicModel {
    let text = include_str!("../data/synthetic_deg13.shm");
    load_harmonic_coefficients(text).expect("bundled model parses")
}

#[test]
fn axial_dipole_equator_points_north() {
    let m = SphericalHarmonicModel::axial_dipole(2020.0, G10);
    for lon in [-180.0, -45.0, 0.0, 90.0, 179.0] {
        let b = m
            .synthesize(&GeoPosition::from_degrees(0.0, lon, 0.0).unwrap(), 2020.0)
            .unwrap();
        assert!((b.north - 30_000.0).abs() < 1e-6, "{}", b.north);
        assert!(b.east.abs() < 1e-6);
        assert!(b.down.abs() < 1e-6);
    }
}

#[test]
fn axial_dipole_pole_points_down() {
    let m = SphericalHarmonicModel::axial_dipole(2020.0, G10);
    let b = m
        .synthesize(&GeoPosition::from_degrees(90.0, 0.0, 0.0).unwrap(), 2020.0)
        .unwrap();
    assert!((b.down - 60_000.0).abs() < 1e-6, "{}", b.down);
    assert!(b.north.abs() < 1e-6 && b.east.abs() < 1e-6);
    let s = m
        .synthesize(&GeoPosition::from_degrees(-90.0, 0.0, 0.0).unwrap(), 2020.0)
        .unwrap();
    assert!((s.down + 60_000.0).abs() < 1e-6, "{}", s.down);
}

#[test]
fn degree_13_matches_frozen_values() {
    let m = deg13();
    for (lat, lon, alt, epoch, expect) in FROZEN {
        let b = m
            .synthesize(&GeoPosition::from_degrees(lat, lon, alt).unwrap(), epoch)
            .unwrap();
        for (got, want) in [b.north, b.east, b.down].into_iter().zip(expect) {
            assert!(
                (got - want).abs() < 1e-4,
                "({lat}, {lon}, {alt}, {epoch}): {got} vs {want}"
            );
        }
    }
}

#[test]
fn coefficient_file_round_trips() {
    let m = deg13();
    let again = load_harmonic_coefficients(&write_harmonic_coefficients(&m)).unwrap();
    assert_eq!(m, again);
}

#[test]
fn epoch_outside_validity_is_rejected() {
    let m = deg13();
    let p = GeoPosition::from_degrees(10.0, 10.0, 0.0).unwrap();
    assert!(m.synthesize(&p, 2019.0).is_err());
    assert!(m.synthesize(&p, 2031.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dipole_magnitude_follows_closed_form(lat in -89.0f64..89.0, lon in -180.0f64..180.0, alt in 0.0f64..20_000.0) {
        let m = SphericalHarmonicModel::axial_dipole(2020.0, G10);
        let b = m.synthesize(&GeoPosition::from_degrees(lat, lon, alt).unwrap(), 2020.0).unwrap();
        let ratio = (6_371_200.0 / (6_371_200.0 + alt)).powi(3);
        let s = lat.to_radians().sin();
        let expect = 30_000.0 * ratio * (1.0 + 3.0 * s * s).sqrt();
        prop_assert!((b.magnitude() - expect).abs() < 1e-6 * expect);
    }
}
