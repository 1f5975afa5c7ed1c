//! Ablation behaviour on the xor task: the full model must not trail the
//! vanilla encoder under an equal budget, echoing the variant comparison at
//! toy scale without asserting any benchmark magnitudes.

use stab_cli::commands::cmd_ablate;
use stab_cli::config::resolve_config;

#[test]
fn full_variant_keeps_pace_with_vanilla_on_xor() {
    let cfg = resolve_config(
        r#"
        [model]
        d = 16
        depth = 2
        heads = 8
        j = 16
        [train]
        max_epochs = 200
        batch_size = 128
        seed = 11
        plateau_patience = 30
        early_stop_patience = 120
        [data]
        synthetic = "xor_numeric"
        rows = 2000
        "#,
        &[],
    )
    .unwrap();
    let rows = cmd_ablate(&cfg).unwrap();
    assert_eq!(rows.len(), 4);
    let acc = |name: &str| -> f64 {
        let row = rows.iter().find(|r| r.variant == name).unwrap();
        assert!(row.error.is_none(), "{name} failed: {:?}", row.error);
        row.value.unwrap()
    };
    let vanilla = acc("vanilla");
    let full = acc("full");
    assert!(
        full >= vanilla - 0.02,
        "full variant fell behind: {full} vs vanilla {vanilla}"
    );
    // counts: strict parameter superset shows up as a strict ordering
    let params = |name: &str| rows.iter().find(|r| r.variant == name).unwrap().parameters;
    assert!(params("vanilla") < params("stochastic"));
    assert!(params("stochastic") < params("full"));
    assert!(params("hybrid") < params("full"));
}
