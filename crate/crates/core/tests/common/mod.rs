#![allow(dead_code)]

use std::path::PathBuf;

use nfcount_core::field::FieldSpec;

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

pub fn load(name: &str) -> FieldSpec {
    FieldSpec::from_path(&data_dir().join(name)).expect("fixture field loads")
}

pub fn qi() -> FieldSpec {
    load("qi.json")
}

pub fn qsqrt2() -> FieldSpec {
    load("qsqrt2.json")
}

pub fn cubic() -> FieldSpec {
    load("cubic23.json")
}

pub fn all_fields() -> Vec<FieldSpec> {
    vec![qi(), qsqrt2(), cubic()]
}
