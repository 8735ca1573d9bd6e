//! Generates the C header for the exported ABI into `include/ssanc.h`.

use std::env;
use std::path::PathBuf;

fn main() {
    let crate_dir = PathBuf::from(env::var("CARGO_MANIFEST_DIR").unwrap());
    let header = crate_dir.join("include").join("ssanc.h");
    std::fs::create_dir_all(header.parent().unwrap()).unwrap();

    cbindgen::generate(&crate_dir)
        .expect("header generation failed")
        .write_to_file(&header);

    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");
}
