use geolab::scenario::{list_scenarios, parse_scenario, shipped_dir, Scenario};
use geolab::Error;

const SHIPPED: [&str; 9] = [
    "flat",
    "galphabeta-compact",
    "galphabeta-unbounded",
    "lorentz-cylinder-null-conformal",
    "minkowski-timelike",
    "sphere-conjugate",
    "sphere-offset-nondegenerate",
    "split-product",
    "stationary-counterexample",
];

#[test]
fn shipped_suite_is_complete_and_valid() {
    let found: Vec<String> = list_scenarios(&shipped_dir())
        .unwrap()
        .into_iter()
        .map(|(n, _)| n)
        .collect();
    assert_eq!(found, SHIPPED);
    for (name, path) in list_scenarios(&shipped_dir()).unwrap() {
        let s = parse_scenario(&path).unwrap();
        assert_eq!(s.name, name, "file name matches scenario name");
        s.validate().unwrap();
    }
}

#[test]
fn sphere_conjugate_fixture() {
    let s = parse_scenario(&shipped_dir().join("sphere-conjugate.toml")).unwrap();
    assert_eq!(s.name, "sphere-conjugate");
    assert_eq!(s.grid.m, 64);
    assert_eq!(s.sweep.eps.len(), 6);
}

#[test]
fn toml_round_trip() {
    for (_, path) in list_scenarios(&shipped_dir()).unwrap() {
        let s = parse_scenario(&path).unwrap();
        assert_eq!(Scenario::from_toml(&s.to_toml()).unwrap(), s);
    }
}

#[test]
fn empty_file_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("empty.toml");
    std::fs::write(&p, "").unwrap();
    assert!(matches!(parse_scenario(&p), Err(Error::Parse { .. })));
}

#[test]
fn unknown_keys_are_rejected_with_a_position() {
    let text = std::fs::read_to_string(shipped_dir().join("flat.toml")).unwrap();
    let bad = text.replace("m = 32", "m = 32\nbogus = 1");
    match Scenario::from_toml(&bad) {
        Err(Error::Parse { line, .. }) => assert!(line > 1),
        other => panic!("{other:?}"),
    }
}

#[test]
fn coincident_endpoints_need_allow_equal() {
    let text = std::fs::read_to_string(shipped_dir().join("flat.toml")).unwrap();
    let same = text.replace("q = [1.0, 0.5]", "q = [0.0, 0.0]");
    match Scenario::from_toml(&same) {
        Err(Error::Validation { field, .. }) => assert_eq!(field, "endpoints"),
        other => panic!("{other:?}"),
    }
    let allowed = same.replace(
        "v_guess = [1.0, 0.0]",
        "v_guess = [1.0, 0.0]\nallow_equal = true",
    );
    assert!(Scenario::from_toml(&allowed).is_ok());
}

#[test]
fn missing_file_is_an_io_error() {
    assert!(matches!(
        parse_scenario(std::path::Path::new("/nonexistent/x.toml")),
        Err(Error::Io(_))
    ));
}
