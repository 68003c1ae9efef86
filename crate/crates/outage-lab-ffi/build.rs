//! Generates the C header from the exported surface at build time.
//!
//! The fresh header lands in `OUT_DIR/outage_lab.h`; its path is exported to
//! the crate as the `OL_GENERATED_HEADER` environment variable so tests can
//! verify the committed copy under `include/` never drifts.

use std::env;
use std::path::PathBuf;

fn main() {
    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");
    println!("cargo:rerun-if-changed=include/outage_lab.h");

    let crate_dir = PathBuf::from(env::var("CARGO_MANIFEST_DIR").unwrap());
    let out_path = PathBuf::from(env::var("OUT_DIR").unwrap()).join("outage_lab.h");

    let config = cbindgen::Config::from_file(crate_dir.join("cbindgen.toml"))
        .expect("cbindgen.toml must parse");
    cbindgen::Builder::new()
        .with_crate(&crate_dir)
        .with_config(config)
        .generate()
        .expect("header generation must succeed")
        .write_to_file(&out_path);

    println!("cargo:rustc-env=OL_GENERATED_HEADER={}", out_path.display());
}
