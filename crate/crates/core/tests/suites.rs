use heatlab_core::suites::{largest_grid, run_suite, Size, SuiteOptions, SUITES};
use heatlab_core::Error;

#[test]
fn reports_are_deterministic() {
    for name in ["rosenthal", "chain"] {
        let a = run_suite(name, SuiteOptions::new(Size::Small, 3)).unwrap();
        let b = run_suite(name, SuiteOptions::new(Size::Small, 3)).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert!(a.pass, "{a:?}");
    }
}

#[test]
fn gaussian_sanity_detects_corruption() {
    let clean = run_suite("gaussian-sanity", SuiteOptions::new(Size::Small, 0)).unwrap();
    assert!(clean.pass);
    let corrupt = run_suite("gaussian-sanity", SuiteOptions { corrupt: true, ..SuiteOptions::new(Size::Small, 0) }).unwrap();
    assert!(!corrupt.pass);
}

#[test]
fn unknown_names_are_config_errors() {
    assert!(matches!(run_suite("nope", SuiteOptions::new(Size::Small, 0)), Err(Error::Config(_))));
    assert!("medium".parse::<Size>().is_err());
    assert_eq!("d2-small".parse::<Size>().unwrap(), Size::Small);
    for name in SUITES {
        assert!(largest_grid(name, Size::Full).unwrap() >= largest_grid(name, Size::Small).unwrap());
    }
}
