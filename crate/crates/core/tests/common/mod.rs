#![allow(dead_code)] // shared across test binaries; not all use every helper

use std::path::PathBuf;

use bilevel::harness::{load_problem, LoadedProblem};

pub fn problems_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../problems")
}

pub fn load_bundled(name: &str) -> LoadedProblem {
    load_problem(problems_dir().join(name))
        .unwrap_or_else(|e| panic!("bundled problem `{name}` must load: {e}"))
}
